//! Flat map from trajectory samples to thrust, attitude, and body rates.
//!
//! A multirotor's state and inputs are algebraic in the flat outputs
//! {x, y, z, yaw} and their derivatives: total specific force fixes the
//! thrust magnitude and the body z-axis, the yaw angle picks the heading
//! component orthogonal to it, and differentiating the resulting
//! commanded rotation yields the body rates. Everything here is a pure
//! function of a trajectory sample (or an explicit force vector), used
//! for planning-time feedforward; the simulator rebuilds the rotation
//! from its feedback-corrected force with the same frame construction.

use nalgebra::{Matrix3, Vector3};
#[cfg_attr(feature = "std", allow(unused_imports))]
use num_traits::Float;

use crate::trajectory::{PiecewiseTrajectory, TrajectoryError};
use crate::GRAVITY;

/// Specific-force norms below this are treated as free fall, where the
/// body z-axis is undefined.
pub const FREE_FALL_TOL: f64 = 1e-6;

/// Cross-product norms below this mean the desired heading is parallel
/// to the body z-axis and the commanded frame is undefined.
pub const HEADING_TOL: f64 = 1e-6;

/// Finite-difference step for differentiating the commanded rotation.
pub const FD_STEP: f64 = 1e-5;

/// The symmetric residual of `R^T dR/dt` must stay below this fraction
/// of the full matrix norm (plus a small absolute floor for the
/// rate-free case) for the rate extraction to count as consistent.
pub const RATE_ASYMMETRY_TOL: f64 = 1e-4;

/// Errors from the flat map.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FlatnessError {
    /// Total specific force vanished: free fall has no defined body z.
    #[error("free-fall singularity: specific force norm {norm} below {FREE_FALL_TOL}")]
    FreeFall { norm: f64 },
    /// The desired heading direction is parallel to the body z-axis.
    #[error("heading degenerate: |b2_des x b3| = {norm} below {HEADING_TOL}")]
    HeadingAligned { norm: f64 },
    /// `R^T dR/dt` came out too far from skew-symmetric.
    #[error("rate extraction inconsistent: asymmetry {asymmetry} vs scale {scale}")]
    RateAsymmetry { asymmetry: f64, scale: f64 },
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

/// Planning-time feedforward at one trajectory sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatnessOutputs {
    /// Thrust magnitude in Newtons.
    pub thrust: f64,
    /// Unit body z-axis.
    pub b3: Vector3<f64>,
    /// Commanded rotation, columns `[b1 | b2 | b3]`.
    pub r_c: Matrix3<f64>,
    /// Commanded body rates in rad/s.
    pub omega_c: Vector3<f64>,
    /// Commanded body angular acceleration in rad/s^2, numerically
    /// differentiated from the rates.
    pub omega_dot_c: Vector3<f64>,
}

/// Skew-symmetric matrix of the cross product: `hat(v) w = v x w`.
pub fn hat(v: Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(
        0.0, -v.z, v.y, //
        v.z, 0.0, -v.x, //
        -v.y, v.x, 0.0,
    )
}

/// Inverse of [`hat`] on skew-symmetric matrices.
pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Thrust magnitude for a commanded acceleration: mass times the norm of
/// the total specific force (commanded acceleration plus gravity
/// compensation). Always nonnegative; requires `mass > 0`.
pub fn nominal_thrust(accel: Vector3<f64>, mass: f64) -> f64 {
    mass * (accel + GRAVITY * Vector3::z()).norm()
}

/// Unit body z-axis along the total specific force.
pub fn body_z(accel: Vector3<f64>) -> Result<Vector3<f64>, FlatnessError> {
    let f = accel + GRAVITY * Vector3::z();
    let norm = f.norm();
    if norm <= FREE_FALL_TOL {
        return Err(FlatnessError::FreeFall { norm });
    }
    Ok(f / norm)
}

/// Right-handed frame with third column `b3` and first column the
/// normalized cross of the yaw heading `[-sin psi, cos psi, 0]` with
/// `b3`.
fn frame_from_b3(b3: Vector3<f64>, psi: f64) -> Result<Matrix3<f64>, FlatnessError> {
    let b2_des = Vector3::new(-psi.sin(), psi.cos(), 0.0);
    let cross = b2_des.cross(&b3);
    let norm = cross.norm();
    if norm <= HEADING_TOL {
        return Err(FlatnessError::HeadingAligned { norm });
    }
    let b1 = cross / norm;
    let b2 = b3.cross(&b1);
    Ok(Matrix3::from_columns(&[b1, b2, b3]))
}

/// Commanded rotation for a commanded acceleration and desired yaw:
/// third column along the total specific force, first column the
/// normalized heading cross product, second column completing the
/// right-handed frame.
pub fn commanded_rotation(
    accel: Vector3<f64>,
    psi_des: f64,
) -> Result<Matrix3<f64>, FlatnessError> {
    frame_from_b3(body_z(accel)?, psi_des)
}

/// Commanded rotation from an explicit force vector (the simulator's
/// feedback-corrected force) and desired yaw.
pub fn rotation_from_force(
    force: Vector3<f64>,
    psi_des: f64,
) -> Result<Matrix3<f64>, FlatnessError> {
    let norm = force.norm();
    if norm <= FREE_FALL_TOL {
        return Err(FlatnessError::FreeFall { norm });
    }
    frame_from_b3(force / norm, psi_des)
}

/// Commanded rotation at trajectory time `t` (acceleration and yaw taken
/// from the sample).
pub fn commanded_rotation_at(
    traj: &PiecewiseTrajectory,
    t: f64,
) -> Result<Matrix3<f64>, FlatnessError> {
    let s = traj.evaluate(t)?;
    commanded_rotation(s.acceleration(), s.yaw())
}

/// Central-difference stencil around `t`, one-sided at the trajectory
/// ends: returns the two evaluation times and the step between them.
fn stencil(traj: &PiecewiseTrajectory, t: f64) -> (f64, f64) {
    let lo = traj.start_time();
    let hi = traj.end_time();
    let minus = (t - FD_STEP).max(lo);
    let plus = (t + FD_STEP).min(hi);
    (minus, plus)
}

/// Commanded body rates at trajectory time `t`: the commanded rotation
/// is differentiated by finite differences (step 1e-5 s, one-sided at
/// the ends) and the rates read off the skew part of `R^T dR/dt`. The
/// symmetric residual must stay small relative to the matrix norm or the
/// extraction is rejected.
pub fn commanded_rates(
    traj: &PiecewiseTrajectory,
    t: f64,
) -> Result<Vector3<f64>, FlatnessError> {
    let (t_minus, t_plus) = stencil(traj, t);
    let r_minus = commanded_rotation_at(traj, t_minus)?;
    let r_plus = commanded_rotation_at(traj, t_plus)?;
    let r_mid = commanded_rotation_at(traj, t)?;
    let r_dot = (r_plus - r_minus) / (t_plus - t_minus);
    let s = r_mid.transpose() * r_dot;
    let skew = (s - s.transpose()) / 2.0;
    let sym = (s + s.transpose()) / 2.0;
    let scale = s.norm();
    let asymmetry = sym.norm();
    if asymmetry > RATE_ASYMMETRY_TOL * scale + 1e-9 {
        return Err(FlatnessError::RateAsymmetry { asymmetry, scale });
    }
    Ok(vee(&skew))
}

/// Full feedforward bundle at trajectory time `t`: thrust, body z-axis,
/// commanded rotation, and the rates plus their numerical derivative.
pub fn flat_outputs(
    traj: &PiecewiseTrajectory,
    t: f64,
    mass: f64,
) -> Result<FlatnessOutputs, FlatnessError> {
    let sample = traj.evaluate(t)?;
    let accel = sample.acceleration();
    let thrust = nominal_thrust(accel, mass);
    let b3 = body_z(accel)?;
    let r_c = commanded_rotation(accel, sample.yaw())?;
    let omega_c = commanded_rates(traj, t)?;
    let (t_minus, t_plus) = stencil(traj, t);
    let omega_minus = commanded_rates(traj, t_minus)?;
    let omega_plus = commanded_rates(traj, t_plus)?;
    let omega_dot_c = (omega_plus - omega_minus) / (t_plus - t_minus);
    Ok(FlatnessOutputs {
        thrust,
        b3,
        r_c,
        omega_c,
        omega_dot_c,
    })
}
