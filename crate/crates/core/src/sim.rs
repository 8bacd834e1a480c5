//! Rigid-body quadrotor simulation under an SE(3) geometric tracking
//! controller.
//!
//! The vehicle is the standard thrust-plus-moment rigid body
//!
//! ```text
//! m v' = tau R e3 - m g e3
//! R'   = R hat(Omega)
//! J Omega' = M - Omega x J Omega
//! ```
//!
//! closed with the geometric tracking law: the thrust is the
//! feedback-corrected force projected onto the current body z axis, the
//! commanded attitude points body z along that same force, and the
//! moment combines the rotation and rate errors
//!
//! ```text
//! e_R = 1/2 vee(R_C^T R - R^T R_C)
//! e_O = Omega - R^T R_C Omega_C
//! ```
//!
//! with the gyroscopic term and the commanded-rate feedforward. The
//! commanded rotation inside the loop is rebuilt from the corrected
//! force each step, while the commanded rates and their derivative come
//! from the flat reference.
//!
//! Integration is one classical fourth-order Runge-Kutta step per
//! control period with the inputs held fixed. The rotation is
//! integrated directly as a matrix and projected back onto the
//! orthonormal manifold by Newton-Schulz polar iteration whenever its
//! defect exceeds [`ROTATION_DRIFT_TOL`] (integrate-then-project, far
//! inside the 1e-6 budget the state contract allows).
//!
//! There is no motor, drag, or contact model: a run ends at the
//! trajectory's final time and touchdown success is judged from the
//! terminal state against the plan's contact conditions.

use alloc::vec::Vec;

use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use thiserror::Error;

use crate::flatness::{self, FlatnessError, FlatnessOutputs};
use crate::perch::PerchPlan;
use crate::trajectory::{FlatSample, TrajectoryError};
use crate::GRAVITY;

#[cfg_attr(feature = "std", allow(unused_imports))]
use num_traits::Float;

/// Orthonormality drift above which the integrator projects the
/// rotation back onto the manifold.
pub const ROTATION_DRIFT_TOL: f64 = 1e-12;

/// Default integration and control step, seconds. The controller runs
/// every integration step.
pub const DEFAULT_STEP: f64 = 1e-3;

/// Gate on the terminal acceleration for simulated touchdown, m/s^2:
/// the achieved `(tau/m) R e3 - g e3` must land within this distance of
/// the planned contact acceleration. A closed-loop gate of this crate,
/// looser than the planner's open-loop tolerances.
pub const TOUCHDOWN_ACCEL_TOL: f64 = 0.5;

/// Slack added to both edges of the impact-speed window when judging
/// the simulated terminal state, m/s.
pub const TOUCHDOWN_SPEED_TOL: f64 = 0.05;

/// Simulation failures.
#[derive(Debug, Error)]
pub enum SimError {
    /// A parameter, gain, noise, or step invariant failed.
    #[error("invalid simulation input: {0}")]
    InvalidInput(&'static str),
    /// The controller or the reference hit a flatness singularity.
    /// Carries the control rows completed before the failure.
    #[error("flatness singularity at t = {time} s: {source}")]
    Singularity {
        time: f64,
        trace: Vec<TraceRow>,
        source: FlatnessError,
    },
    /// The reference trajectory could not be evaluated.
    #[error("reference evaluation failed at t = {time} s: {source}")]
    Reference {
        time: f64,
        trace: Vec<TraceRow>,
        source: TrajectoryError,
    },
}

/// Instantaneous rigid-body state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidBodyState {
    /// World position, m.
    pub position: Vector3<f64>,
    /// World velocity, m/s.
    pub velocity: Vector3<f64>,
    /// World-from-body rotation; orthonormal within 1e-6 throughout
    /// integration (projected well before that).
    pub rotation: Matrix3<f64>,
    /// Body-frame angular rate, rad/s.
    pub body_rate: Vector3<f64>,
}

impl RigidBodyState {
    /// At rest at `position` with identity attitude.
    pub fn at_rest(position: Vector3<f64>) -> Self {
        RigidBodyState {
            position,
            velocity: Vector3::zeros(),
            rotation: Matrix3::identity(),
            body_rate: Vector3::zeros(),
        }
    }

    /// Orthonormality defect `max |R^T R - I|`.
    pub fn rotation_defect(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Matrix3::identity()).amax()
    }
}

/// Mass properties of the simulated vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleParams {
    /// Vehicle mass, kg.
    pub mass: f64,
    /// Body-frame inertia, kg m^2; symmetric positive definite.
    pub inertia: Matrix3<f64>,
    /// Gravitational acceleration, m/s^2.
    pub gravity: f64,
}

impl Default for VehicleParams {
    /// A palm-size 250 g quadrotor with inertia on the order of a few
    /// 1e-4 kg m^2. Plausible bench values chosen by this crate, not
    /// measurements of any particular airframe.
    fn default() -> Self {
        VehicleParams {
            mass: 0.25,
            inertia: Matrix3::from_diagonal(&Vector3::new(2.5e-4, 2.5e-4, 4.0e-4)),
            gravity: GRAVITY,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.mass > 0.0) || !self.mass.is_finite() {
            return Err(SimError::InvalidInput("mass must be positive and finite"));
        }
        if !(self.gravity > 0.0) || !self.gravity.is_finite() {
            return Err(SimError::InvalidInput(
                "gravity must be positive and finite",
            ));
        }
        if self.inertia.iter().any(|v| !v.is_finite()) {
            return Err(SimError::InvalidInput("inertia must be finite"));
        }
        let asymmetry = (self.inertia - self.inertia.transpose()).amax();
        if asymmetry > 1e-9 * self.inertia.amax() {
            return Err(SimError::InvalidInput("inertia must be symmetric"));
        }
        if nalgebra::Cholesky::new(self.inertia).is_none() {
            return Err(SimError::InvalidInput(
                "inertia must be positive definite",
            ));
        }
        Ok(())
    }
}

/// Diagonal gain matrices of the tracking law, stored as diagonals.
///
/// Defaults give the default vehicle a critically damped ~4 rad/s
/// position loop and a ~60 rad/s attitude loop; they hold a 0.5 m
/// position step to under 5% overshoot (verified in tests). A tuning
/// choice of this crate, recorded here rather than taken from any
/// reference hardware.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerGains {
    pub k_x: Vector3<f64>,
    pub k_v: Vector3<f64>,
    pub k_r: Vector3<f64>,
    pub k_omega: Vector3<f64>,
}

impl Default for ControllerGains {
    fn default() -> Self {
        ControllerGains {
            k_x: Vector3::repeat(4.0),
            k_v: Vector3::repeat(2.0),
            k_r: Vector3::repeat(0.9),
            k_omega: Vector3::repeat(0.03),
        }
    }
}

impl ControllerGains {
    /// Every gain multiplied by `factor`; handy for stiffness sweeps.
    pub fn scaled(&self, factor: f64) -> Self {
        ControllerGains {
            k_x: self.k_x * factor,
            k_v: self.k_v * factor,
            k_r: self.k_r * factor,
            k_omega: self.k_omega * factor,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let all = [self.k_x, self.k_v, self.k_r, self.k_omega];
        if all
            .iter()
            .flat_map(|v| v.iter())
            .any(|g| !(*g > 0.0) || !g.is_finite())
        {
            return Err(SimError::InvalidInput(
                "gain diagonals must be positive and finite",
            ));
        }
        Ok(())
    }
}

/// Additive Gaussian measurement noise, injected into the controller
/// input only; the integrated truth is never perturbed. Attitude noise
/// right-multiplies the rotation by the exponential of a zero-mean
/// axis-angle vector. Draws come from a counter-based generator, so a
/// run is bit-reproducible given the seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorNoise {
    /// Per-axis position standard deviation, m.
    pub position_std: f64,
    /// Per-axis velocity standard deviation, m/s.
    pub velocity_std: f64,
    /// Per-axis attitude standard deviation, rad.
    pub attitude_std: f64,
    pub seed: u64,
}

impl Default for SensorNoise {
    fn default() -> Self {
        SensorNoise {
            position_std: 0.0,
            velocity_std: 0.0,
            attitude_std: 0.0,
            seed: 0,
        }
    }
}

impl SensorNoise {
    pub fn validate(&self) -> Result<(), SimError> {
        let stds = [self.position_std, self.velocity_std, self.attitude_std];
        if stds.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(SimError::InvalidInput(
                "noise standard deviations must be nonnegative and finite",
            ));
        }
        Ok(())
    }
}

struct NoiseSampler {
    rng: ChaCha8Rng,
    cfg: SensorNoise,
}

impl NoiseSampler {
    fn new(cfg: SensorNoise) -> Self {
        NoiseSampler {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
        }
    }

    /// Zero-sigma axes draw nothing, so an all-zero config consumes no
    /// randomness and reproduces the noiseless run bitwise.
    fn gauss3(&mut self, std: f64) -> Vector3<f64> {
        if std == 0.0 {
            return Vector3::zeros();
        }
        let normal = Normal::new(0.0, std).expect("validated standard deviation");
        Vector3::new(
            self.rng.sample(normal),
            self.rng.sample(normal),
            self.rng.sample(normal),
        )
    }

    fn perturb(&mut self, state: &RigidBodyState) -> RigidBodyState {
        let mut measured = *state;
        measured.position += self.gauss3(self.cfg.position_std);
        measured.velocity += self.gauss3(self.cfg.velocity_std);
        let eta = self.gauss3(self.cfg.attitude_std);
        if eta != Vector3::zeros() {
            measured.rotation = state.rotation * Rotation3::new(eta).into_inner();
        }
        measured
    }
}

/// One controller-rate sample of the closed loop, in the trace column
/// order `t, x, y, z, ref_x, ref_y, ref_z, ex, ey, ez, tau, Mx, My, Mz,
/// wx, wy, wz`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub position: Vector3<f64>,
    pub reference: Vector3<f64>,
    /// Position minus reference (truth, not the noisy measurement).
    pub error: Vector3<f64>,
    pub thrust: f64,
    pub moment: Vector3<f64>,
    pub body_rate: Vector3<f64>,
}

/// Closed-loop run summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingMetrics {
    /// Per-axis RMS position tracking error over the whole run, m.
    pub rmse: Vector3<f64>,
    /// Largest achieved body-rate norm, rad/s.
    pub peak_body_rate: f64,
    /// Largest commanded body-rate norm along the reference, rad/s.
    pub peak_commanded_rate: f64,
    /// Worst rotation orthonormality defect observed.
    pub max_rotation_defect: f64,
    /// Distance from the terminal position to the target, m.
    pub terminal_position_error: f64,
    /// Angle between the terminal body z axis and the contact axis, rad.
    pub terminal_attitude_error: f64,
    /// Terminal velocity minus the reference terminal velocity, m/s.
    pub terminal_velocity_error: f64,
    /// Distance from the achieved terminal acceleration to the planned
    /// contact acceleration, m/s^2.
    pub terminal_accel_error: f64,
    /// Terminal approach speed along the contact axis, m/s.
    pub impact_speed: f64,
    /// `terminal_accel_error` within [`TOUCHDOWN_ACCEL_TOL`].
    pub touchdown_accel_ok: bool,
    /// `impact_speed` inside the planned window widened by
    /// [`TOUCHDOWN_SPEED_TOL`] on both edges.
    pub impact_window_ok: bool,
}

/// Trace plus metrics of one closed-loop run.
#[derive(Debug, Clone)]
pub struct TrackingResult {
    pub trace: Vec<TraceRow>,
    pub metrics: TrackingMetrics,
}

/// One evaluation of the tracking law. `reference` and `feedforward`
/// must be taken at the same instant; only the commanded rates and
/// their derivative are read from `feedforward`, the commanded rotation
/// is rebuilt from the feedback-corrected force.
///
/// Errs only when that force is too small to orient against or aligns
/// with the heading axis.
pub fn control_step(
    state: &RigidBodyState,
    reference: &FlatSample,
    feedforward: &FlatnessOutputs,
    gains: &ControllerGains,
    params: &VehicleParams,
) -> Result<(f64, Vector3<f64>), FlatnessError> {
    let e_x = state.position - reference.position();
    let e_v = state.velocity - reference.velocity();
    let force = -gains.k_x.component_mul(&e_x) - gains.k_v.component_mul(&e_v)
        + params.mass * params.gravity * Vector3::z()
        + params.mass * reference.acceleration();
    let body_z: Vector3<f64> = state.rotation.column(2).into();
    let thrust = force.dot(&body_z);

    let r_c = flatness::rotation_from_force(force, reference.yaw())?;
    let rt_rc = state.rotation.transpose() * r_c;
    let e_r = 0.5 * flatness::vee(&(rt_rc.transpose() - rt_rc));
    let rate_c = rt_rc * feedforward.omega_c;
    let e_omega = state.body_rate - rate_c;
    let moment = -gains.k_r.component_mul(&e_r) - gains.k_omega.component_mul(&e_omega)
        + state
            .body_rate
            .cross(&(params.inertia * state.body_rate))
        - params.inertia
            * (flatness::hat(state.body_rate) * rate_c - rt_rc * feedforward.omega_dot_c);
    Ok((thrust, moment))
}

/// Time derivative of the state under fixed inputs.
struct Derivative {
    velocity: Vector3<f64>,
    accel: Vector3<f64>,
    rotation_dot: Matrix3<f64>,
    rate_dot: Vector3<f64>,
}

fn dynamics(
    state: &RigidBodyState,
    thrust: f64,
    moment: &Vector3<f64>,
    params: &VehicleParams,
    inertia_inv: &Matrix3<f64>,
) -> Derivative {
    let body_z: Vector3<f64> = state.rotation.column(2).into();
    Derivative {
        velocity: state.velocity,
        accel: (thrust / params.mass) * body_z - params.gravity * Vector3::z(),
        rotation_dot: state.rotation * flatness::hat(state.body_rate),
        rate_dot: inertia_inv
            * (moment - state.body_rate.cross(&(params.inertia * state.body_rate))),
    }
}

fn offset(state: &RigidBodyState, d: &Derivative, h: f64) -> RigidBodyState {
    RigidBodyState {
        position: state.position + h * d.velocity,
        velocity: state.velocity + h * d.accel,
        rotation: state.rotation + h * d.rotation_dot,
        body_rate: state.body_rate + h * d.rate_dot,
    }
}

/// One classical Runge-Kutta step of the rigid-body dynamics with the
/// thrust and moment held fixed over the step.
///
/// The rotation is integrated directly and, when its orthonormality
/// defect exceeds [`ROTATION_DRIFT_TOL`], snapped back by Newton-Schulz
/// polar iteration `R <- R (3 I - R^T R) / 2`, which converges
/// quadratically from the tiny defects one step can produce. At an
/// exact equilibrium every stage derivative vanishes and the state is
/// returned bitwise unchanged.
///
/// `params` must be valid (positive mass, invertible inertia) and
/// `h > 0`.
pub fn integrate(
    state: &RigidBodyState,
    thrust: f64,
    moment: Vector3<f64>,
    params: &VehicleParams,
    h: f64,
) -> RigidBodyState {
    let inertia_inv = params
        .inertia
        .try_inverse()
        .expect("vehicle inertia must be invertible");
    let k1 = dynamics(state, thrust, &moment, params, &inertia_inv);
    let k2 = dynamics(
        &offset(state, &k1, 0.5 * h),
        thrust,
        &moment,
        params,
        &inertia_inv,
    );
    let k3 = dynamics(
        &offset(state, &k2, 0.5 * h),
        thrust,
        &moment,
        params,
        &inertia_inv,
    );
    let k4 = dynamics(&offset(state, &k3, h), thrust, &moment, params, &inertia_inv);
    let sixth = h / 6.0;
    let mut next = RigidBodyState {
        position: state.position
            + sixth * (k1.velocity + 2.0 * k2.velocity + 2.0 * k3.velocity + k4.velocity),
        velocity: state.velocity
            + sixth * (k1.accel + 2.0 * k2.accel + 2.0 * k3.accel + k4.accel),
        rotation: state.rotation
            + sixth
                * (k1.rotation_dot
                    + 2.0 * k2.rotation_dot
                    + 2.0 * k3.rotation_dot
                    + k4.rotation_dot),
        body_rate: state.body_rate
            + sixth * (k1.rate_dot + 2.0 * k2.rate_dot + 2.0 * k3.rate_dot + k4.rate_dot),
    };
    for _ in 0..8 {
        if next.rotation_defect() <= ROTATION_DRIFT_TOL {
            break;
        }
        let gram = next.rotation.transpose() * next.rotation;
        next.rotation = next.rotation * (1.5 * Matrix3::identity() - 0.5 * gram);
    }
    next
}

/// Closed-loop tracking of a planned perch from its start time to its
/// final time.
///
/// The vehicle starts exactly on the reference (flat start state and
/// commanded attitude). Each control period evaluates the reference and
/// feedforward at the current time, runs [`control_step`] on the (noisy
/// when configured) measured state, records a trace row, and advances
/// the truth one [`integrate`] step; the final partial step lands
/// exactly on the trajectory's end time and a terminal row is recorded
/// there. Metrics summarize tracking quality and whether the simulated
/// terminal state meets the plan's contact conditions within the
/// declared gates.
///
/// The plan is simulated as given; callers gate on its certificates.
pub fn run_tracking(
    plan: &PerchPlan,
    gains: &ControllerGains,
    params: &VehicleParams,
    h: f64,
    noise: Option<SensorNoise>,
) -> Result<TrackingResult, SimError> {
    params.validate()?;
    gains.validate()?;
    if let Some(cfg) = &noise {
        cfg.validate()?;
    }
    if !(h > 0.0) || !h.is_finite() {
        return Err(SimError::InvalidInput(
            "integration step must be positive and finite",
        ));
    }

    let traj = &plan.trajectory;
    let t0 = traj.start_time();
    let t_f = traj.end_time();
    let mut sampler = noise.map(NoiseSampler::new);

    let start = match traj.evaluate(t0) {
        Ok(s) => s,
        Err(source) => {
            return Err(SimError::Reference {
                time: t0,
                trace: Vec::new(),
                source,
            })
        }
    };
    let start_ff = match flatness::flat_outputs(traj, t0, params.mass) {
        Ok(f) => f,
        Err(source) => {
            return Err(SimError::Singularity {
                time: t0,
                trace: Vec::new(),
                source,
            })
        }
    };
    let mut state = RigidBodyState {
        position: start.position(),
        velocity: start.velocity(),
        rotation: start_ff.r_c,
        body_rate: start_ff.omega_c,
    };

    let mut trace: Vec<TraceRow> = Vec::with_capacity(((t_f - t0) / h) as usize + 2);
    let mut sum_sq = Vector3::zeros();
    let mut peak_body_rate = 0.0f64;
    let mut peak_commanded_rate = 0.0f64;
    let mut max_rotation_defect = 0.0f64;
    let mut t = t0;
    let (terminal_sample, terminal_thrust) = loop {
        let sample = match traj.evaluate(t) {
            Ok(s) => s,
            Err(source) => return Err(SimError::Reference { time: t, trace, source }),
        };
        let ff = match flatness::flat_outputs(traj, t, params.mass) {
            Ok(f) => f,
            Err(source) => return Err(SimError::Singularity { time: t, trace, source }),
        };
        let measured = match sampler.as_mut() {
            Some(s) => s.perturb(&state),
            None => state,
        };
        let (thrust, moment) = match control_step(&measured, &sample, &ff, gains, params) {
            Ok(out) => out,
            Err(source) => return Err(SimError::Singularity { time: t, trace, source }),
        };

        let error = state.position - sample.position();
        trace.push(TraceRow {
            t,
            position: state.position,
            reference: sample.position(),
            error,
            thrust,
            moment,
            body_rate: state.body_rate,
        });
        sum_sq += error.component_mul(&error);
        peak_body_rate = peak_body_rate.max(state.body_rate.norm());
        peak_commanded_rate = peak_commanded_rate.max(ff.omega_c.norm());
        max_rotation_defect = max_rotation_defect.max(state.rotation_defect());

        if t >= t_f {
            break (sample, thrust);
        }
        // The last step is `t_f - t` exactly, so `t` lands on `t_f`
        // bitwise and the loop terminates.
        let dt = (t_f - t).min(h);
        state = integrate(&state, thrust, moment, params, dt);
        t += dt;
    };

    let n = trace.len() as f64;
    let target = &plan.target;
    let cfg = &plan.config;
    let s3 = target.s3();
    let body_z: Vector3<f64> = state.rotation.column(2).into();
    let achieved_accel =
        (terminal_thrust / params.mass) * body_z - params.gravity * Vector3::z();
    let planned_accel = cfg.alpha * s3 - GRAVITY * Vector3::z();
    let terminal_accel_error = (achieved_accel - planned_accel).norm();
    let impact_speed = state.velocity.dot(&s3);
    let metrics = TrackingMetrics {
        rmse: (sum_sq / n).map(|v| v.sqrt()),
        peak_body_rate,
        peak_commanded_rate,
        max_rotation_defect,
        terminal_position_error: (state.position - target.position).norm(),
        terminal_attitude_error: body_z.cross(&s3).norm().atan2(body_z.dot(&s3)),
        terminal_velocity_error: (state.velocity - terminal_sample.velocity()).norm(),
        terminal_accel_error,
        impact_speed,
        touchdown_accel_ok: terminal_accel_error <= TOUCHDOWN_ACCEL_TOL,
        impact_window_ok: impact_speed >= cfg.v_min - TOUCHDOWN_SPEED_TOL
            && impact_speed <= cfg.v_max + TOUCHDOWN_SPEED_TOL,
    };
    Ok(TrackingResult { trace, metrics })
}
