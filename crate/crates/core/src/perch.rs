//! Perch planning: touchdown constraint assembly, thrust certification,
//! and the time-scaling retry loop.
//!
//! A perch plan is a minimum-snap trajectory from a hover-style start to
//! a surface pose whose contact axis `s3` the terminal body z axis must
//! meet. Touchdown is shaped by three constraint families: an equality on
//! the terminal acceleration (which fixes the contact thrust direction
//! and magnitude), a speed window on the `s3`-projected terminal
//! velocity, and an acceleration corridor that holds the commanded
//! thrust vector near its contact value through the final approach
//! window. Solved trajectories are certified against squared-thrust
//! bounds with the algebraic global bound check; a failed certificate
//! stretches the horizon by a fixed factor and retries.
//!
//! Constraint rows couple flat dimensions only where the surface demands
//! it: an axis-aligned contact normal leaves the per-dimension programs
//! independent, while a tilted normal fuses exactly the translation axes
//! its impact-speed row touches into one stacked program. Yaw always
//! solves separately.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
#[cfg_attr(feature = "std", allow(unused_imports))]
use num_traits::Float;
use thiserror::Error;

use crate::polyalg::{gbc, Polynomial};
use crate::qp::{solve_flat_problem, QpError};
use crate::trajectory::{
    LinearRow, PiecewiseTrajectory, TrajectoryProblem, DIM_X, DIM_Y, DIM_Z, DIM_YAW,
};
use crate::GRAVITY;

/// Largest accepted deviation of `R^T R` from the identity and of
/// `det R` from +1, max-abs entrywise.
pub const POSE_ORTHONORMALITY_TOL: f64 = 1e-9;

/// Below this norm the sign-aligned quaternion sum counts as degenerate.
/// For unit inputs aligned against the first quaternion the sum always
/// has norm at least one, so the guard only fires on denormalized abuse.
pub const ORIENTATION_MEAN_TOL: f64 = 1e-6;

/// Samples per segment used to report peak squared thrust in iteration
/// records. Diagnostic only: certification is the algebraic bound check,
/// never the samples.
pub const PEAK_THRUST_SAMPLES: usize = 256;

/// Planner failures.
#[derive(Debug, Error)]
pub enum PlanError {
    /// `R^T R` strayed from the identity by more than the tolerance.
    #[error("target rotation is not orthonormal: defect {0:.3e}")]
    PoseNotOrthonormal(f64),
    /// Orthonormal but mirrored: determinant near -1.
    #[error("target rotation is left-handed: determinant {0}")]
    PoseNotRightHanded(f64),
    /// A configuration or argument invariant failed.
    #[error("invalid planner input: {0}")]
    InvalidConfig(&'static str),
    /// Sign-aligned quaternion sum too small to normalize.
    #[error("degenerate orientation average: aligned quaternion sum has norm {0:.3e}")]
    DegenerateOrientationMean(f64),
    /// The quadratic program failed at some horizon; the log covers the
    /// iterations that completed before the failure.
    #[error("quadratic program failed at a {horizon} s horizon: {source}")]
    Qp {
        horizon: f64,
        iterations: Vec<IterationRecord>,
        source: QpError,
    },
    /// Every permitted horizon left some segment uncertified. Carries
    /// the lowest-peak-thrust attempt with the full iteration log.
    #[error("horizon scaling exhausted after {} attempts without a thrust certificate", .best.iterations.len())]
    ScalingExhausted { best: Box<PerchPlan> },
}

/// Perch surface pose: `s1` and `s2` (the first two rotation columns)
/// span the surface plane, `s3` is the contact axis the terminal body z
/// axis aligns with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetPose {
    pub position: Vector3<f64>,
    pub rotation: Matrix3<f64>,
}

impl TargetPose {
    pub fn new(position: Vector3<f64>, rotation: Matrix3<f64>) -> Result<Self, PlanError> {
        let pose = TargetPose { position, rotation };
        pose.validate()?;
        Ok(pose)
    }

    /// Checks finiteness, orthonormality, and right-handedness.
    pub fn validate(&self) -> Result<(), PlanError> {
        if self.position.iter().any(|v| !v.is_finite())
            || self.rotation.iter().any(|v| !v.is_finite())
        {
            return Err(PlanError::InvalidConfig("target pose must be finite"));
        }
        let defect = (self.rotation.transpose() * self.rotation - Matrix3::identity()).amax();
        if defect > POSE_ORTHONORMALITY_TOL {
            return Err(PlanError::PoseNotOrthonormal(defect));
        }
        let det = self.rotation.determinant();
        if (det - 1.0).abs() > POSE_ORTHONORMALITY_TOL {
            return Err(PlanError::PoseNotRightHanded(det));
        }
        Ok(())
    }

    pub fn s1(&self) -> Vector3<f64> {
        self.rotation.column(0).into()
    }

    pub fn s2(&self) -> Vector3<f64> {
        self.rotation.column(1).into()
    }

    pub fn s3(&self) -> Vector3<f64> {
        self.rotation.column(2).into()
    }
}

/// Surface orientation for a plane tilted `inclination` radians from
/// horizontal about the world y axis: `s2` stays lateral (world y), `s3`
/// tilts from straight up (flat dock at 0) to horizontal pointing back
/// along the approach (vertical wall at pi/2), and `s1` completes the
/// right-handed frame. Placing the surface along `s3` from the vehicle
/// makes the impact-speed window positive on the approach.
pub fn inclined_surface_rotation(inclination: f64) -> Matrix3<f64> {
    let (sin_t, cos_t) = inclination.sin_cos();
    Matrix3::from_columns(&[
        Vector3::new(cos_t, 0.0, sin_t),
        Vector3::new(0.0, 1.0, 0.0),
        Vector3::new(-sin_t, 0.0, cos_t),
    ])
}

/// Heading whose commanded intermediate axis `(-sin psi, cos psi, 0)`
/// is parallel to (and points along) the horizontal projection of the
/// surface's lateral axis `s2`; falls back to 0 when `s2` is vertical
/// and the projection vanishes.
pub fn default_heading(target: &TargetPose) -> f64 {
    let s2 = target.s2();
    let horizontal = (s2.x * s2.x + s2.y * s2.y).sqrt();
    if horizontal < 1e-6 {
        0.0
    } else {
        (-s2.x).atan2(s2.y)
    }
}

/// Planner knobs. Defaults carry the experiment constants: contact
/// acceleration 3.3 m/s^2, corridor tolerance 0.1 sampled at 10 ms over
/// a 0.15 s window, impact speed in [0.4, 0.6] m/s, 4.5 N thrust
/// ceiling, degree-14 polynomials under a snap (4th derivative) cost,
/// and a 1.1x horizon stretch capped at 50 attempts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannerConfig {
    /// Terminal thrust acceleration magnitude along `s3`, m/s^2.
    pub alpha: f64,
    /// Relative half-width of the pre-impact acceleration corridor.
    pub q: f64,
    /// Corridor sampling step, seconds.
    pub dt: f64,
    /// Pre-impact window length, seconds.
    pub t_k: f64,
    /// Impact-speed window along `s3`, m/s.
    pub v_min: f64,
    pub v_max: f64,
    /// Thrust bounds certified over the whole horizon, Newtons. A zero
    /// lower bound needs no certificate (squared thrust is nonnegative)
    /// and an infinite upper bound is trivially satisfied.
    pub tau_min: f64,
    pub tau_max: f64,
    /// Polynomial degree per segment.
    pub poly_order: usize,
    /// Derivative order whose squared integral is minimized.
    pub cost_order: usize,
    /// Horizon multiplier applied after a failed certificate.
    pub time_scale_factor: f64,
    /// Total solve attempts permitted, counting the initial horizon.
    pub max_scale_iters: usize,
    /// Terminal heading, radians.
    pub psi_des: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            alpha: 3.3,
            q: 0.1,
            dt: 0.01,
            t_k: 0.15,
            v_min: 0.4,
            v_max: 0.6,
            tau_min: 0.0,
            tau_max: 4.5,
            poly_order: 14,
            cost_order: 4,
            time_scale_factor: 1.1,
            max_scale_iters: 50,
            psi_des: 0.0,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), PlanError> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(PlanError::InvalidConfig(
                "contact acceleration must be positive and finite",
            ));
        }
        if !(0.0..1.0).contains(&self.q) {
            return Err(PlanError::InvalidConfig(
                "corridor tolerance must lie in [0, 1)",
            ));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(PlanError::InvalidConfig(
                "corridor sampling step must be positive and finite",
            ));
        }
        if !(self.t_k > 0.0) || !self.t_k.is_finite() {
            return Err(PlanError::InvalidConfig(
                "pre-impact window must be positive and finite",
            ));
        }
        if !(self.v_min > 0.0) || !(self.v_min < self.v_max) || !self.v_max.is_finite() {
            return Err(PlanError::InvalidConfig(
                "impact-speed window must satisfy 0 < v_min < v_max < infinity",
            ));
        }
        if !(self.tau_min >= 0.0) || !self.tau_min.is_finite() || !(self.tau_min < self.tau_max) {
            return Err(PlanError::InvalidConfig(
                "thrust bounds must satisfy 0 <= tau_min < tau_max",
            ));
        }
        if !(self.time_scale_factor > 1.0) || !self.time_scale_factor.is_finite() {
            return Err(PlanError::InvalidConfig(
                "time scale factor must exceed one",
            ));
        }
        if self.max_scale_iters == 0 {
            return Err(PlanError::InvalidConfig(
                "at least one solve attempt must be permitted",
            ));
        }
        if !self.psi_des.is_finite() {
            return Err(PlanError::InvalidConfig("terminal heading must be finite"));
        }
        Ok(())
    }
}

/// Flat state the plan launches from; all four derivative orders below
/// the snap cost are pinned at the start knot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StartState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
    pub jerk: Vector3<f64>,
    pub yaw: f64,
    pub yaw_rate: f64,
    pub yaw_accel: f64,
    pub yaw_jerk: f64,
}

impl StartState {
    /// At rest at `position` with heading `yaw`.
    pub fn hover(position: Vector3<f64>, yaw: f64) -> Self {
        StartState {
            position,
            velocity: Vector3::zeros(),
            acceleration: Vector3::zeros(),
            jerk: Vector3::zeros(),
            yaw,
            yaw_rate: 0.0,
            yaw_accel: 0.0,
            yaw_jerk: 0.0,
        }
    }

    fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.velocity.iter().all(|v| v.is_finite())
            && self.acceleration.iter().all(|v| v.is_finite())
            && self.jerk.iter().all(|v| v.is_finite())
            && self.yaw.is_finite()
            && self.yaw_rate.is_finite()
            && self.yaw_accel.is_finite()
            && self.yaw_jerk.is_finite()
    }
}

/// One time-scaling attempt: the horizon it solved, the largest sampled
/// squared thrust (N^2, [`PEAK_THRUST_SAMPLES`] per segment plus
/// endpoints), and whether every segment certified.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub horizon: f64,
    pub peak_squared_thrust: f64,
    pub certified: bool,
}

/// Certificate verdict for one segment: `upper` decides squared thrust
/// against `tau_max^2`, `lower` against `tau_min^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThrustCertificate {
    pub upper: bool,
    pub lower: bool,
}

impl ThrustCertificate {
    pub fn holds(&self) -> bool {
        self.upper && self.lower
    }
}

/// A certified perch trajectory with its time-scaling history and the
/// inputs it was planned against, so downstream consumers (simulation,
/// reports) can re-check the touchdown contract without re-deriving
/// them.
#[derive(Debug, Clone)]
pub struct PerchPlan {
    pub trajectory: PiecewiseTrajectory,
    /// One record per solve attempt, horizons increasing by exactly the
    /// configured factor.
    pub iterations: Vec<IterationRecord>,
    /// Per-segment certificate outcomes for the returned trajectory;
    /// all hold when the plan is returned as success.
    pub certificates: Vec<ThrustCertificate>,
    /// Flat state the trajectory launches from.
    pub start: StartState,
    /// Surface pose the trajectory terminates on.
    pub target: TargetPose,
    /// Planner knobs in force when the trajectory was solved.
    pub config: PlannerConfig,
    /// Vehicle mass the thrust certificates were computed for, kg.
    pub mass: f64,
}

/// Equality rows fixing the terminal acceleration at
/// `alpha * s3 - g * e3`, one row per translation axis. Through the
/// thrust map this pins the contact thrust to `mass * alpha` along `s3`.
pub fn terminal_acceleration_constraint(
    target: &TargetPose,
    cfg: &PlannerConfig,
    t_f: f64,
) -> [LinearRow; 3] {
    let accel = cfg.alpha * target.s3() - GRAVITY * Vector3::z();
    [DIM_X, DIM_Y, DIM_Z].map(|dim| {
        let mut weights = [0.0; 4];
        weights[dim] = 1.0;
        LinearRow {
            time: t_f,
            order: 2,
            weights,
            lower: accel[dim],
            upper: accel[dim],
        }
    })
}

/// Boxed row keeping the `s3`-projected terminal velocity inside
/// `[v_min, v_max]`. The row couples every translation axis with a
/// nonzero `s3` component, which is what fuses those axes into one
/// stacked program downstream.
pub fn impact_velocity_constraint(
    target: &TargetPose,
    cfg: &PlannerConfig,
    t_f: f64,
) -> LinearRow {
    let s3 = target.s3();
    LinearRow {
        time: t_f,
        order: 1,
        weights: [s3.x, s3.y, s3.z, 0.0],
        lower: cfg.v_min,
        upper: cfg.v_max,
    }
}

/// Boxed acceleration rows over the pre-impact window: at every sample
/// time `t_f - t_k + j dt` strictly before `t_f`, each translation
/// component of the acceleration must stay within a factor `1 +- q` of
/// its terminal value. Bounds are ordered per component, so negative
/// components swap the factors; a zero component collapses to equality.
pub fn pre_impact_corridor(target: &TargetPose, cfg: &PlannerConfig, t_f: f64) -> Vec<LinearRow> {
    let accel = cfg.alpha * target.s3() - GRAVITY * Vector3::z();
    // Grid points of spacing dt covering [t_f - t_k, t_f); the shrink
    // factor keeps an exact-multiple window from rounding up to a
    // sample at t_f itself.
    let count = ((cfg.t_k / cfg.dt) * (1.0 - 1e-12)).floor() as usize + 1;
    let mut rows = Vec::with_capacity(3 * count);
    for j in 0..count {
        let time = t_f - cfg.t_k + j as f64 * cfg.dt;
        for dim in [DIM_X, DIM_Y, DIM_Z] {
            let center = accel[dim];
            let (lower, upper) = if center < 0.0 {
                ((1.0 + cfg.q) * center, (1.0 - cfg.q) * center)
            } else {
                ((1.0 - cfg.q) * center, (1.0 + cfg.q) * center)
            };
            let mut weights = [0.0; 4];
            weights[dim] = 1.0;
            rows.push(LinearRow {
                time,
                order: 2,
                weights,
                lower,
                upper,
            });
        }
    }
    rows
}

/// Squared thrust magnitude of one segment as a polynomial in
/// normalized segment time: `mass^2 ((x'')^2 + (y'')^2 + (z'' + g)^2)`
/// with the second derivatives taken in real time, degree twice the
/// acceleration degree. Panics when `seg` is out of range.
pub fn squared_thrust_polynomial(
    traj: &PiecewiseTrajectory,
    seg: usize,
    mass: f64,
) -> Polynomial {
    let duration = traj.duration(seg);
    let inv_t2 = 1.0 / (duration * duration);
    let mut total = Polynomial::zero();
    for dim in [DIM_X, DIM_Y, DIM_Z] {
        let mut accel = traj.segment_poly(dim, seg).differentiate(2).scale(inv_t2);
        if dim == DIM_Z {
            accel = &accel + &Polynomial::constant(GRAVITY);
        }
        total = &total + &(&accel * &accel);
    }
    total.scale(mass * mass)
}

/// Certifies one segment's squared-thrust polynomial over normalized
/// time [0, 1]. A zero lower bound and an infinite upper bound pass
/// without running the algebraic check; a check that errors (degenerate
/// chain with the polynomial identically at the bound) counts as not
/// certified, which biases toward more time scaling rather than a
/// false pass.
pub fn certify_thrust(h: &Polynomial, tau_min: f64, tau_max: f64) -> ThrustCertificate {
    let upper = if tau_max == f64::INFINITY {
        true
    } else {
        gbc(h, tau_max * tau_max, 0.0, 1.0).unwrap_or(false)
    };
    let lower = if tau_min <= 0.0 {
        true
    } else {
        gbc(&-h, -(tau_min * tau_min), 0.0, 1.0).unwrap_or(false)
    };
    ThrustCertificate { upper, lower }
}

/// Assembles the single-segment touchdown problem on `[0, horizon]`:
/// start pins through the jerk on every flat dimension, terminal
/// position and heading pins, and the three touchdown constraint
/// families. Validates the target, the configuration, and the horizon.
pub fn build_problem(
    start: &StartState,
    target: &TargetPose,
    cfg: &PlannerConfig,
    horizon: f64,
) -> Result<TrajectoryProblem, PlanError> {
    cfg.validate()?;
    target.validate()?;
    if !start.is_finite() {
        return Err(PlanError::InvalidConfig("start state must be finite"));
    }
    if !horizon.is_finite() || !(horizon > cfg.t_k) {
        return Err(PlanError::InvalidConfig(
            "pre-impact window must fit strictly inside the horizon",
        ));
    }
    let mut tp = TrajectoryProblem::new(
        vec![0.0, horizon],
        cfg.poly_order,
        cfg.cost_order,
        cfg.cost_order,
    );
    for dim in [DIM_X, DIM_Y, DIM_Z] {
        tp.pin(0, dim, 0, start.position[dim]);
        tp.pin(0, dim, 1, start.velocity[dim]);
        tp.pin(0, dim, 2, start.acceleration[dim]);
        tp.pin(0, dim, 3, start.jerk[dim]);
        tp.pin(1, dim, 0, target.position[dim]);
    }
    tp.pin(0, DIM_YAW, 0, start.yaw);
    tp.pin(0, DIM_YAW, 1, start.yaw_rate);
    tp.pin(0, DIM_YAW, 2, start.yaw_accel);
    tp.pin(0, DIM_YAW, 3, start.yaw_jerk);
    tp.pin(1, DIM_YAW, 0, cfg.psi_des);
    for row in terminal_acceleration_constraint(target, cfg, horizon) {
        tp.push_row(row);
    }
    tp.push_row(impact_velocity_constraint(target, cfg, horizon));
    for row in pre_impact_corridor(target, cfg, horizon) {
        tp.push_row(row);
    }
    Ok(tp)
}

/// Largest sample of `h` on the unit interval, endpoints included.
fn sampled_peak(h: &Polynomial) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    for k in 0..=PEAK_THRUST_SAMPLES {
        let s = k as f64 / PEAK_THRUST_SAMPLES as f64;
        peak = peak.max(h.eval(s));
    }
    peak
}

/// Plans a perch: solves the touchdown problem at the initial horizon,
/// certifies every segment's squared thrust, and on a failed
/// certificate multiplies the horizon by the configured factor and
/// resolves, up to the attempt cap. Success returns the first certified
/// trajectory with the full iteration log; exhaustion returns the
/// lowest-peak-thrust attempt inside the error.
pub fn plan(
    start: &StartState,
    target: &TargetPose,
    cfg: &PlannerConfig,
    mass: f64,
    initial_horizon: f64,
) -> Result<PerchPlan, PlanError> {
    if !(mass > 0.0) || !mass.is_finite() {
        return Err(PlanError::InvalidConfig(
            "vehicle mass must be positive and finite",
        ));
    }
    let mut horizon = initial_horizon;
    let mut iterations: Vec<IterationRecord> = Vec::new();
    let mut best: Option<(PiecewiseTrajectory, Vec<ThrustCertificate>)> = None;
    let mut best_peak = f64::INFINITY;
    for _ in 0..cfg.max_scale_iters.max(1) {
        let problem = build_problem(start, target, cfg, horizon)?;
        let trajectory = match solve_flat_problem(&problem) {
            Ok(t) => t,
            Err(source) => {
                return Err(PlanError::Qp {
                    horizon,
                    iterations,
                    source,
                })
            }
        };
        let mut certificates = Vec::with_capacity(trajectory.n_segments());
        let mut peak = f64::NEG_INFINITY;
        for seg in 0..trajectory.n_segments() {
            let h = squared_thrust_polynomial(&trajectory, seg, mass);
            certificates.push(certify_thrust(&h, cfg.tau_min, cfg.tau_max));
            peak = peak.max(sampled_peak(&h));
        }
        let certified = certificates.iter().all(ThrustCertificate::holds);
        iterations.push(IterationRecord {
            horizon,
            peak_squared_thrust: peak,
            certified,
        });
        if certified {
            return Ok(PerchPlan {
                trajectory,
                iterations,
                certificates,
                start: *start,
                target: *target,
                config: *cfg,
                mass,
            });
        }
        if peak < best_peak {
            best_peak = peak;
            best = Some((trajectory, certificates));
        }
        horizon *= cfg.time_scale_factor;
    }
    let (trajectory, certificates) = best.expect("at least one attempt ran");
    Err(PlanError::ScalingExhausted {
        best: Box::new(PerchPlan {
            trajectory,
            iterations,
            certificates,
            start: *start,
            target: *target,
            config: *cfg,
            mass,
        }),
    })
}

/// Pose average over four detected corners: positions average
/// arithmetically; orientations average by flipping each quaternion to
/// a nonnegative dot product with the first, summing, and normalizing.
/// The result is invariant to corner permutation and to any individual
/// sign flip, and four identical poses return that pose.
pub fn average_target_pose(
    positions: &[Vector3<f64>; 4],
    orientations: &[UnitQuaternion<f64>; 4],
) -> Result<TargetPose, PlanError> {
    if positions.iter().any(|p| p.iter().any(|v| !v.is_finite())) {
        return Err(PlanError::InvalidConfig(
            "corner positions must be finite",
        ));
    }
    let position = positions.iter().fold(Vector3::zeros(), |a, p| a + p) / 4.0;
    let reference = orientations[0].coords;
    let mut sum = nalgebra::Vector4::zeros();
    for o in orientations {
        let sign = if o.coords.dot(&reference) < 0.0 { -1.0 } else { 1.0 };
        sum += o.coords * sign;
    }
    let norm = sum.norm();
    if !(norm > ORIENTATION_MEAN_TOL) {
        return Err(PlanError::DegenerateOrientationMean(norm));
    }
    let mean = UnitQuaternion::from_quaternion(Quaternion::new(sum.w, sum.x, sum.y, sum.z));
    TargetPose::new(position, mean.to_rotation_matrix().into_inner())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flatness::body_z;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn incline_pose(inclination: f64, distance: f64) -> (StartState, TargetPose) {
        let start = StartState::hover(Vector3::new(0.0, 0.0, 1.0), 0.0);
        let rotation = inclined_surface_rotation(inclination);
        let position = start.position + distance * rotation.column(2);
        (start, TargetPose::new(position, rotation).unwrap())
    }

    #[test]
    fn pose_validation_rejects_bad_rotations() {
        let scaled = Matrix3::identity() * 1.001;
        assert!(matches!(
            TargetPose::new(Vector3::zeros(), scaled),
            Err(PlanError::PoseNotOrthonormal(_))
        ));
        let mut mirrored = Matrix3::identity();
        mirrored[(2, 2)] = -1.0;
        assert!(matches!(
            TargetPose::new(Vector3::zeros(), mirrored),
            Err(PlanError::PoseNotRightHanded(_))
        ));
        assert!(TargetPose::new(Vector3::zeros(), Matrix3::identity()).is_ok());
    }

    #[test]
    fn inclination_anchors_match_the_flat_and_vertical_cases() {
        let flat = inclined_surface_rotation(0.0);
        assert_relative_eq!(flat, Matrix3::identity(), epsilon = 1e-15);
        let wall = inclined_surface_rotation(core::f64::consts::FRAC_PI_2);
        assert_relative_eq!(
            Vector3::from(wall.column(2)),
            -Vector3::x(),
            epsilon = 1e-15
        );
        assert_relative_eq!(Vector3::from(wall.column(0)), Vector3::z(), epsilon = 1e-15);
        for theta in [0.0, 0.3, 1.0, core::f64::consts::FRAC_PI_2] {
            let r = inclined_surface_rotation(theta);
            TargetPose::new(Vector3::zeros(), r).unwrap();
        }
    }

    #[test]
    fn terminal_acceleration_rows_match_contact_arithmetic() {
        let cfg = PlannerConfig::default();
        let (_, dock) = incline_pose(0.0, 1.7);
        let rows = terminal_acceleration_constraint(&dock, &cfg, 1.4);
        let values: Vec<f64> = rows.iter().map(|r| r.lower).collect();
        assert_relative_eq!(values[0], 0.0, epsilon = 1e-12);
        assert_relative_eq!(values[1], 0.0, epsilon = 1e-12);
        assert_relative_eq!(values[2], 3.3 - GRAVITY, epsilon = 1e-12);
        for row in &rows {
            assert_eq!(row.order, 2);
            assert_eq!(row.time, 1.4);
            assert_eq!(row.lower, row.upper);
        }

        let (_, wall) = incline_pose(core::f64::consts::FRAC_PI_2, 1.7);
        let rows = terminal_acceleration_constraint(&wall, &cfg, 1.4);
        let accel = Vector3::new(rows[0].lower, rows[1].lower, rows[2].lower);
        assert_relative_eq!(accel.x, -3.3, epsilon = 1e-12);
        assert_relative_eq!(accel.y, 0.0, epsilon = 1e-12);
        assert_relative_eq!(accel.z, -GRAVITY, epsilon = 1e-12);
        let expected_mag = (3.3f64 * 3.3 + GRAVITY * GRAVITY).sqrt();
        assert_relative_eq!(accel.norm(), expected_mag, epsilon = 1e-12);

        let hover_touch = PlannerConfig {
            alpha: GRAVITY,
            ..cfg
        };
        let rows = terminal_acceleration_constraint(&dock, &hover_touch, 1.4);
        for row in rows {
            assert_relative_eq!(row.lower, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn impact_velocity_row_projects_onto_the_contact_axis() {
        let cfg = PlannerConfig::default();
        let (_, dock) = incline_pose(0.0, 1.7);
        let row = impact_velocity_constraint(&dock, &cfg, 1.4);
        assert_eq!(row.order, 1);
        assert_eq!(row.time, 1.4);
        assert_eq!((row.lower, row.upper), (0.4, 0.6));
        assert_relative_eq!(row.weights[DIM_X], 0.0, epsilon = 1e-15);
        assert_relative_eq!(row.weights[DIM_Y], 0.0, epsilon = 1e-15);
        assert_relative_eq!(row.weights[DIM_Z], 1.0, epsilon = 1e-15);
        assert_eq!(row.weights[DIM_YAW], 0.0);

        let (_, wall) = incline_pose(core::f64::consts::FRAC_PI_2, 1.7);
        let row = impact_velocity_constraint(&wall, &cfg, 1.4);
        assert_relative_eq!(row.weights[DIM_X], -1.0, epsilon = 1e-15);
        assert_relative_eq!(row.weights[DIM_Z], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn corridor_samples_the_window_with_ordered_boxes() {
        let cfg = PlannerConfig::default();
        let (_, wall) = incline_pose(core::f64::consts::FRAC_PI_2, 1.7);
        let rows = pre_impact_corridor(&wall, &cfg, 1.4);
        assert_eq!(rows.len(), 45);
        let times: Vec<f64> = rows.iter().map(|r| r.time).step_by(3).collect();
        assert_eq!(times.len(), 15);
        assert_relative_eq!(times[0], 1.25, epsilon = 1e-12);
        assert_relative_eq!(times[14], 1.39, epsilon = 1e-12);
        assert!(times.iter().all(|t| *t < 1.4));
        for row in &rows {
            assert_eq!(row.order, 2);
            assert!(row.lower <= row.upper);
        }
        // x center is -3.3, so the factors swap to keep the box ordered;
        // y center is zero and collapses to equality.
        assert_relative_eq!(rows[0].lower, -3.63, epsilon = 1e-12);
        assert_relative_eq!(rows[0].upper, -2.97, epsilon = 1e-12);
        assert_eq!((rows[1].lower, rows[1].upper), (0.0, 0.0));
        assert_relative_eq!(rows[2].lower, -1.1 * GRAVITY, epsilon = 1e-12);
        assert_relative_eq!(rows[2].upper, -0.9 * GRAVITY, epsilon = 1e-12);
    }

    #[test]
    fn zero_tolerance_corridor_collapses_to_equalities() {
        let cfg = PlannerConfig {
            q: 0.0,
            ..PlannerConfig::default()
        };
        let (_, incline) = incline_pose(1.0, 1.7);
        let accel = cfg.alpha * incline.s3() - GRAVITY * Vector3::z();
        for (k, row) in pre_impact_corridor(&incline, &cfg, 1.4).iter().enumerate() {
            assert_eq!(row.lower, row.upper);
            assert_relative_eq!(row.lower, accel[k % 3], epsilon = 1e-12);
        }
    }

    fn constant_accel_trajectory(a: f64, duration: f64) -> PiecewiseTrajectory {
        // z(t) = a t^2 / 2 in real time; in normalized time the segment
        // polynomial is a T^2 s^2 / 2.
        let z = Polynomial::new(vec![0.0, 0.0, 0.5 * a * duration * duration]);
        PiecewiseTrajectory::new(
            vec![0.0, duration],
            [
                vec![Polynomial::zero()],
                vec![Polynomial::zero()],
                vec![z],
                vec![Polynomial::zero()],
            ],
        )
        .unwrap()
    }

    #[test]
    fn squared_thrust_of_rest_and_constant_acceleration_is_constant() {
        let mass = 0.25;
        let rest = constant_accel_trajectory(0.0, 2.0);
        let h = squared_thrust_polynomial(&rest, 0, mass);
        assert_eq!(h.degree(), Some(0));
        assert_relative_eq!(h.eval(0.5), (mass * GRAVITY).powi(2), max_relative = 1e-12);

        let climb = constant_accel_trajectory(1.7, 1.3);
        let h = squared_thrust_polynomial(&climb, 0, mass);
        assert_relative_eq!(
            h.eval(0.25),
            (mass * (1.7 + GRAVITY)).powi(2),
            max_relative = 1e-12
        );
    }

    #[test]
    fn squared_thrust_matches_pointwise_evaluation_on_random_segments() {
        let mut rng = StdRng::seed_from_u64(0x5eed_9e2c);
        for _ in 0..20 {
            let duration = rng.random_range(0.4..2.5);
            let polys: [Vec<Polynomial>; 4] = core::array::from_fn(|dim| {
                let coeffs: Vec<f64> = (0..7)
                    .map(|_| if dim == DIM_YAW { 0.0 } else { rng.random_range(-2.0..2.0) })
                    .collect();
                vec![Polynomial::new(coeffs)]
            });
            let traj = PiecewiseTrajectory::new(vec![0.0, duration], polys).unwrap();
            let mass = rng.random_range(0.1..2.0);
            let h = squared_thrust_polynomial(&traj, 0, mass);
            for k in 0..=100 {
                let s = k as f64 / 100.0;
                let sample = traj.evaluate(s * duration).unwrap();
                let lift = sample.acceleration() + GRAVITY * Vector3::z();
                assert_relative_eq!(
                    h.eval(s),
                    mass * mass * lift.norm_squared(),
                    max_relative = 1e-9
                );
            }
        }
    }

    #[test]
    fn unbounded_thrust_certifies_in_one_attempt() {
        let (start, target) = incline_pose(0.0, 1.0);
        let cfg = PlannerConfig {
            tau_max: f64::INFINITY,
            ..PlannerConfig::default()
        };
        let plan = plan(&start, &target, &cfg, 0.25, 1.4).unwrap();
        assert_eq!(plan.iterations.len(), 1);
        assert_eq!(plan.iterations[0].horizon, 1.4);
        assert!(plan.iterations[0].certified);
        assert!(plan.certificates.iter().all(ThrustCertificate::holds));
    }

    #[test]
    fn wall_plan_satisfies_the_touchdown_contract() {
        let (start, target) = incline_pose(core::f64::consts::FRAC_PI_2, 1.7);
        let cfg = PlannerConfig::default();
        let result = plan(&start, &target, &cfg, 0.25, 1.4).unwrap();
        let traj = &result.trajectory;
        let t_f = traj.end_time();
        let end = traj.evaluate(t_f).unwrap();

        let expected = cfg.alpha * target.s3() - GRAVITY * Vector3::z();
        assert_relative_eq!(end.acceleration(), expected, epsilon = 1e-6);
        assert_relative_eq!(end.position(), target.position, epsilon = 1e-6);

        let normal_speed = end.velocity().dot(&target.s3());
        assert!(normal_speed >= cfg.v_min - 1e-7 && normal_speed <= cfg.v_max + 1e-7);

        for row in pre_impact_corridor(&target, &cfg, t_f) {
            let sample = traj.evaluate(row.time).unwrap();
            let value: f64 = (0..3).map(|d| row.weights[d] * sample.d2[d]).sum();
            assert!(
                value >= row.lower - 1e-7 && value <= row.upper + 1e-7,
                "corridor violated at t = {}: {} outside [{}, {}]",
                row.time,
                value,
                row.lower,
                row.upper
            );
        }

        let b3 = body_z(end.acceleration()).unwrap();
        let angle = b3.cross(&target.s3()).norm().asin();
        assert!(angle.abs() < 1e-6, "terminal body z off s3 by {angle} rad");

        let begin = traj.evaluate(0.0).unwrap();
        assert_relative_eq!(begin.position(), start.position, epsilon = 1e-7);
        assert_relative_eq!(begin.velocity().norm(), 0.0, epsilon = 1e-7);
        assert_relative_eq!(begin.acceleration().norm(), 0.0, epsilon = 1e-6);
        assert_relative_eq!(begin.yaw(), 0.0, epsilon = 1e-9);

        assert!(result.certificates.iter().all(ThrustCertificate::holds));
    }

    #[test]
    fn time_scaling_stretches_until_the_certificate_holds() {
        let (start, target) = incline_pose(core::f64::consts::FRAC_PI_2, 1.7);
        // Calibrate the mass so the one-second plan violates the 4.5 N
        // ceiling by five percent at its sampled peak.
        let free = PlannerConfig {
            tau_max: f64::INFINITY,
            ..PlannerConfig::default()
        };
        let probe = plan(&start, &target, &free, 1.0, 1.0).unwrap();
        let specific_peak = probe.iterations[0].peak_squared_thrust.sqrt();
        let mass = 4.5 / specific_peak * 1.05;

        let cfg = PlannerConfig::default();
        let result = plan(&start, &target, &cfg, mass, 1.0).unwrap();
        assert!(result.iterations.len() > 1, "expected at least one stretch");
        for pair in result.iterations.windows(2) {
            assert_eq!(pair[1].horizon, pair[0].horizon * cfg.time_scale_factor);
            assert!(
                pair[1].peak_squared_thrust <= pair[0].peak_squared_thrust,
                "peak thrust increased between attempts"
            );
        }
        let last = result.iterations.last().unwrap();
        assert!(last.certified);
        assert!(last.peak_squared_thrust.sqrt() <= cfg.tau_max);
        assert!(!result.iterations[0].certified);
    }

    #[test]
    fn exhausted_scaling_returns_the_best_attempt() {
        let (start, target) = incline_pose(core::f64::consts::FRAC_PI_2, 1.7);
        let cfg = PlannerConfig {
            tau_max: 0.1,
            max_scale_iters: 3,
            ..PlannerConfig::default()
        };
        match plan(&start, &target, &cfg, 0.25, 1.0) {
            Err(PlanError::ScalingExhausted { best }) => {
                assert_eq!(best.iterations.len(), 3);
                assert!(best.iterations.iter().all(|it| !it.certified));
                assert!(best.certificates.iter().any(|c| !c.holds()));
                let min_peak = best
                    .iterations
                    .iter()
                    .map(|it| it.peak_squared_thrust)
                    .fold(f64::INFINITY, f64::min);
                let best_peak = (0..best.trajectory.n_segments())
                    .map(|seg| {
                        sampled_peak(&squared_thrust_polynomial(&best.trajectory, seg, 0.25))
                    })
                    .fold(f64::NEG_INFINITY, f64::max);
                assert_relative_eq!(best_peak, min_peak, max_relative = 1e-12);
            }
            other => panic!("expected exhaustion, got {other:?}"),
        }
    }

    #[test]
    fn invalid_inputs_are_rejected_before_solving() {
        let (start, target) = incline_pose(0.0, 1.0);
        let cfg = PlannerConfig::default();
        assert!(matches!(
            plan(&start, &target, &cfg, f64::NAN, 1.4),
            Err(PlanError::InvalidConfig(_))
        ));
        assert!(matches!(
            plan(&start, &target, &cfg, 0.25, 0.1),
            Err(PlanError::InvalidConfig(_))
        ));
        let bad = PlannerConfig {
            v_min: 0.6,
            v_max: 0.4,
            ..cfg
        };
        assert!(matches!(
            plan(&start, &target, &bad, 0.25, 1.4),
            Err(PlanError::InvalidConfig(_))
        ));
        let bad = PlannerConfig { q: 1.0, ..cfg };
        assert!(bad.validate().is_err());
        let bad = PlannerConfig {
            time_scale_factor: 1.0,
            ..cfg
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn touchdown_problem_has_the_expected_shape() {
        let (start, target) = incline_pose(1.0, 1.7);
        let cfg = PlannerConfig::default();
        let tp = build_problem(&start, &target, &cfg, 1.4).unwrap();
        assert_eq!(tp.knots, vec![0.0, 1.4]);
        assert_eq!(tp.poly_order, 14);
        assert_eq!(tp.pins.len(), 20);
        assert_eq!(tp.rows.len(), 3 + 1 + 45);
    }

    fn yawed(angle: f64) -> UnitQuaternion<f64> {
        UnitQuaternion::from_axis_angle(&Vector3::z_axis(), angle)
    }

    #[test]
    fn identical_corner_poses_average_to_themselves() {
        let p = Vector3::new(0.3, -1.2, 2.0);
        let q = yawed(0.7);
        let pose = average_target_pose(&[p; 4], &[q; 4]).unwrap();
        assert_relative_eq!(pose.position, p, epsilon = 1e-15);
        assert_relative_eq!(
            pose.rotation,
            q.to_rotation_matrix().into_inner(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn square_corners_average_to_the_center() {
        let center = Vector3::new(1.0, 2.0, 0.5);
        let corners = [
            center + Vector3::new(0.2, 0.2, 0.0),
            center + Vector3::new(-0.2, 0.2, 0.0),
            center + Vector3::new(-0.2, -0.2, 0.0),
            center + Vector3::new(0.2, -0.2, 0.0),
        ];
        let pose = average_target_pose(&corners, &[yawed(0.3); 4]).unwrap();
        assert_relative_eq!(pose.position, center, epsilon = 1e-15);
    }

    #[test]
    fn quaternion_sign_flips_do_not_change_the_average() {
        let q = yawed(1.1);
        let flipped = UnitQuaternion::new_unchecked(-q.into_inner());
        let plain = average_target_pose(&[Vector3::zeros(); 4], &[q; 4]).unwrap();
        let mixed =
            average_target_pose(&[Vector3::zeros(); 4], &[q, flipped, q, q]).unwrap();
        assert_relative_eq!(plain.rotation, mixed.rotation, epsilon = 1e-12);
        // Flipping the reference quaternion itself flips every sign and
        // negates the sum, which maps to the same rotation.
        let reference_flipped =
            average_target_pose(&[Vector3::zeros(); 4], &[flipped, q, q, q]).unwrap();
        assert_relative_eq!(plain.rotation, reference_flipped.rotation, epsilon = 1e-12);
    }

    #[test]
    fn corner_permutations_do_not_change_the_average() {
        let mut rng = StdRng::seed_from_u64(0x0a7e);
        let positions: [Vector3<f64>; 4] =
            core::array::from_fn(|_| Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)));
        let quats: [UnitQuaternion<f64>; 4] = core::array::from_fn(|_| {
            UnitQuaternion::from_euler_angles(
                rng.random_range(-0.2..0.2),
                rng.random_range(-0.2..0.2),
                rng.random_range(-0.2..0.2),
            )
        });
        let base = average_target_pose(&positions, &quats).unwrap();
        for perm in [[1usize, 0, 2, 3], [3, 2, 1, 0], [2, 3, 0, 1], [1, 2, 3, 0]] {
            let p = perm.map(|i| positions[i]);
            let q = perm.map(|i| quats[i]);
            let permuted = average_target_pose(&p, &q).unwrap();
            assert_relative_eq!(base.position, permuted.position, epsilon = 1e-12);
            assert_relative_eq!(base.rotation, permuted.rotation, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_quaternions_are_reported_as_degenerate() {
        // The unit type normally rules this out; the guard covers
        // unchecked construction.
        let zero = UnitQuaternion::new_unchecked(Quaternion::new(0.0, 0.0, 0.0, 0.0));
        assert!(matches!(
            average_target_pose(&[Vector3::zeros(); 4], &[zero; 4]),
            Err(PlanError::DegenerateOrientationMean(_))
        ));
    }

    #[test]
    fn default_heading_tracks_the_lateral_axis() {
        let (_, wall) = incline_pose(core::f64::consts::FRAC_PI_2, 1.7);
        assert_eq!(default_heading(&wall), 0.0);

        // Yawed dock: s2 rotates with the surface, and the heading
        // follows it.
        let yaw = 0.5;
        let rotation = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw)
            .to_rotation_matrix()
            .into_inner();
        let pose = TargetPose::new(Vector3::zeros(), rotation).unwrap();
        assert_relative_eq!(default_heading(&pose), yaw, epsilon = 1e-12);

        // Vertical s2 leaves the heading at the fallback.
        let vertical = Matrix3::from_columns(&[Vector3::x(), Vector3::z(), -Vector3::y()]);
        let pose = TargetPose::new(Vector3::zeros(), vertical).unwrap();
        assert_eq!(default_heading(&pose), 0.0);
    }
}
