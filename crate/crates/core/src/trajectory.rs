//! Piecewise-polynomial flat trajectories and the declarative problem
//! description the QP assembler consumes.
//!
//! A trajectory carries four flat dimensions (x, y, z, yaw), each a chain
//! of segment polynomials in local time normalized by segment duration:
//! segment `i` spans `[knots[i], knots[i+1]]` and is evaluated at
//! `s = (t - knots[i]) / T_i` in `[0, 1]`. Normalization keeps
//! high-order coefficients well scaled; evaluation divides the k-th
//! derivative by `T_i^k` to recover real-time values.

use alloc::vec::Vec;
use nalgebra::Vector3;
#[cfg_attr(feature = "std", allow(unused_imports))]
use num_traits::Float;

use crate::polyalg::Polynomial;

/// Flat-dimension indices.
pub const DIM_X: usize = 0;
pub const DIM_Y: usize = 1;
pub const DIM_Z: usize = 2;
pub const DIM_YAW: usize = 3;
/// Number of flat dimensions.
pub const FLAT_DIMS: usize = 4;

/// Highest derivative carried by a [`FlatSample`].
pub const SAMPLE_DERIVS: usize = 4;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrajectoryError {
    #[error("knots must be strictly increasing with at least two entries")]
    InvalidKnots,
    #[error("dimension {dim} has {got} segment polynomials, expected {expected}")]
    SegmentCount { dim: usize, got: usize, expected: usize },
    #[error("time {t} outside trajectory span [{t0}, {tf}]")]
    OutOfRange { t: f64, t0: f64, tf: f64 },
    #[error("sample step must be positive and finite")]
    InvalidSampleStep,
    #[error("time scale factor must be positive and finite")]
    InvalidScale,
}

/// Flat outputs and derivatives at one instant. Arrays are indexed by
/// flat dimension (x, y, z, yaw).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatSample {
    pub t: f64,
    pub value: [f64; FLAT_DIMS],
    pub d1: [f64; FLAT_DIMS],
    pub d2: [f64; FLAT_DIMS],
    pub d3: [f64; FLAT_DIMS],
    pub d4: [f64; FLAT_DIMS],
}

impl FlatSample {
    fn translation(part: &[f64; FLAT_DIMS]) -> Vector3<f64> {
        Vector3::new(part[DIM_X], part[DIM_Y], part[DIM_Z])
    }

    pub fn position(&self) -> Vector3<f64> {
        Self::translation(&self.value)
    }
    pub fn velocity(&self) -> Vector3<f64> {
        Self::translation(&self.d1)
    }
    pub fn acceleration(&self) -> Vector3<f64> {
        Self::translation(&self.d2)
    }
    pub fn jerk(&self) -> Vector3<f64> {
        Self::translation(&self.d3)
    }
    pub fn snap(&self) -> Vector3<f64> {
        Self::translation(&self.d4)
    }
    pub fn yaw(&self) -> f64 {
        self.value[DIM_YAW]
    }
    pub fn yaw_rate(&self) -> f64 {
        self.d1[DIM_YAW]
    }
    /// Derivative of the given order (0 = value) for one dimension.
    pub fn deriv(&self, dim: usize, order: usize) -> f64 {
        match order {
            0 => self.value[dim],
            1 => self.d1[dim],
            2 => self.d2[dim],
            3 => self.d3[dim],
            4 => self.d4[dim],
            _ => 0.0,
        }
    }
}

/// Four-dimensional piecewise-polynomial trajectory in normalized
/// segment time. Derivative polynomials are precomputed per segment so
/// repeated evaluation stays allocation-free.
#[derive(Debug, Clone)]
pub struct PiecewiseTrajectory {
    knots: Vec<f64>,
    /// dims[d][seg][order] = order-th derivative polynomial in s.
    derivs: [Vec<[Polynomial; SAMPLE_DERIVS + 1]>; FLAT_DIMS],
}

impl PiecewiseTrajectory {
    /// Builds a trajectory from knots and per-dimension segment
    /// polynomials in normalized local time.
    pub fn new(
        knots: Vec<f64>,
        dims: [Vec<Polynomial>; FLAT_DIMS],
    ) -> Result<Self, TrajectoryError> {
        if knots.len() < 2
            || knots.iter().any(|k| !k.is_finite())
            || knots.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(TrajectoryError::InvalidKnots);
        }
        let expected = knots.len() - 1;
        let mut derivs: [Vec<[Polynomial; SAMPLE_DERIVS + 1]>; FLAT_DIMS] =
            [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
        for (dim, polys) in dims.into_iter().enumerate() {
            if polys.len() != expected {
                return Err(TrajectoryError::SegmentCount {
                    dim,
                    got: polys.len(),
                    expected,
                });
            }
            derivs[dim] = polys
                .into_iter()
                .map(|p| {
                    let d1 = p.derivative();
                    let d2 = d1.derivative();
                    let d3 = d2.derivative();
                    let d4 = d3.derivative();
                    [p, d1, d2, d3, d4]
                })
                .collect();
        }
        Ok(PiecewiseTrajectory { knots, derivs })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn n_segments(&self) -> usize {
        self.knots.len() - 1
    }

    pub fn start_time(&self) -> f64 {
        self.knots[0]
    }

    pub fn end_time(&self) -> f64 {
        *self.knots.last().unwrap()
    }

    pub fn duration(&self, seg: usize) -> f64 {
        self.knots[seg + 1] - self.knots[seg]
    }

    /// Segment polynomial in normalized local time.
    pub fn segment_poly(&self, dim: usize, seg: usize) -> &Polynomial {
        &self.derivs[dim][seg][0]
    }

    /// Segment index owning time `t`: interior knots belong to the
    /// segment ending there.
    pub fn segment_index(&self, t: f64) -> usize {
        let below = self.knots.partition_point(|k| *k < t);
        below.saturating_sub(1).min(self.n_segments() - 1)
    }

    /// Flat outputs and derivatives through order four at `t`. Times
    /// within a relative 1e-9 slack of the span clamp to the boundary;
    /// anything farther out is an error.
    pub fn evaluate(&self, t: f64) -> Result<FlatSample, TrajectoryError> {
        let (t0, tf) = (self.start_time(), self.end_time());
        let slack = 1e-9 * (tf - t0).abs().max(1.0);
        if !t.is_finite() || t < t0 - slack || t > tf + slack {
            return Err(TrajectoryError::OutOfRange { t, t0, tf });
        }
        let tc = t.clamp(t0, tf);
        let seg = self.segment_index(tc);
        let duration = self.duration(seg);
        let s = ((tc - self.knots[seg]) / duration).clamp(0.0, 1.0);

        let mut sample = FlatSample {
            t,
            value: [0.0; FLAT_DIMS],
            d1: [0.0; FLAT_DIMS],
            d2: [0.0; FLAT_DIMS],
            d3: [0.0; FLAT_DIMS],
            d4: [0.0; FLAT_DIMS],
        };
        for dim in 0..FLAT_DIMS {
            let polys = &self.derivs[dim][seg];
            let mut scale = 1.0;
            sample.value[dim] = polys[0].eval(s);
            scale /= duration;
            sample.d1[dim] = polys[1].eval(s) * scale;
            scale /= duration;
            sample.d2[dim] = polys[2].eval(s) * scale;
            scale /= duration;
            sample.d3[dim] = polys[3].eval(s) * scale;
            scale /= duration;
            sample.d4[dim] = polys[4].eval(s) * scale;
        }
        Ok(sample)
    }

    /// Samples on the uniform grid `t0 + k dt`, always including a final
    /// sample exactly at the end time.
    pub fn sample_uniform(&self, dt: f64) -> Result<Vec<FlatSample>, TrajectoryError> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(TrajectoryError::InvalidSampleStep);
        }
        let (t0, tf) = (self.start_time(), self.end_time());
        let span = tf - t0;
        let steps = ((span / dt) * (1.0 + 1e-12) + 1e-9).floor() as usize;
        let tiny = 1e-9 * span.max(1.0);
        let mut samples = Vec::with_capacity(steps + 2);
        for k in 0..=steps {
            let mut t = t0 + k as f64 * dt;
            if (tf - t).abs() <= tiny {
                t = tf;
            }
            if t > tf {
                break;
            }
            samples.push(self.evaluate(t)?);
            if t == tf {
                break;
            }
        }
        if samples.last().map_or(true, |s| s.t != tf) {
            samples.push(self.evaluate(tf)?);
        }
        Ok(samples)
    }
}

/// Exact derivative pin at a knot: `dim`'s `order`-th derivative equals
/// `value` at `knots[knot]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pin {
    pub knot: usize,
    pub dim: usize,
    pub order: usize,
    pub value: f64,
}

/// Boxed linear constraint on a derivative order at an arbitrary time:
/// `lower <= sum_d weights[d] * y_d^(order)(time) <= upper`. Equal
/// bounds make it an equality. Weights may not mix yaw with translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearRow {
    pub time: f64,
    pub order: usize,
    pub weights: [f64; FLAT_DIMS],
    pub lower: f64,
    pub upper: f64,
}

/// Declarative definition of a flat trajectory optimization: smoothness
/// cost order, derivative continuity order, knot pins, and general
/// boxed rows.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryProblem {
    pub knots: Vec<f64>,
    pub poly_order: usize,
    pub cost_order: usize,
    pub continuity_order: usize,
    pub pins: Vec<Pin>,
    pub rows: Vec<LinearRow>,
}

impl TrajectoryProblem {
    pub fn new(
        knots: Vec<f64>,
        poly_order: usize,
        cost_order: usize,
        continuity_order: usize,
    ) -> Self {
        TrajectoryProblem {
            knots,
            poly_order,
            cost_order,
            continuity_order,
            pins: Vec::new(),
            rows: Vec::new(),
        }
    }

    pub fn pin(&mut self, knot: usize, dim: usize, order: usize, value: f64) -> &mut Self {
        self.pins.push(Pin { knot, dim, order, value });
        self
    }

    pub fn push_row(&mut self, row: LinearRow) -> &mut Self {
        self.rows.push(row);
        self
    }

    pub fn total_duration(&self) -> f64 {
        match (self.knots.first(), self.knots.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    /// Same problem on a time axis stretched about the start knot:
    /// knot and row times map through `t0 + (t - t0) * factor`; pin
    /// values and row bounds are reused verbatim.
    pub fn scale_time(&self, factor: f64) -> Result<TrajectoryProblem, TrajectoryError> {
        if !(factor > 0.0) || !factor.is_finite() {
            return Err(TrajectoryError::InvalidScale);
        }
        let t0 = self.knots.first().copied().unwrap_or(0.0);
        let mut scaled = self.clone();
        for k in scaled.knots.iter_mut() {
            *k = t0 + (*k - t0) * factor;
        }
        for row in scaled.rows.iter_mut() {
            row.time = t0 + (row.time - t0) * factor;
        }
        Ok(scaled)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn quadratic_trajectory() -> PiecewiseTrajectory {
        // x(t) = t^2 on [0, 2] split at t = 1; normalized segments:
        // seg 0: s^2 on [0,1]; seg 1: (1+s)^2 = 1 + 2s + s^2
        let seg0 = Polynomial::new(vec![0.0, 0.0, 1.0]);
        let seg1 = Polynomial::new(vec![1.0, 2.0, 1.0]);
        let zero = vec![Polynomial::zero(), Polynomial::zero()];
        PiecewiseTrajectory::new(
            vec![0.0, 1.0, 2.0],
            [vec![seg0, seg1], zero.clone(), zero.clone(), zero],
        )
        .unwrap()
    }

    #[test]
    fn evaluates_values_and_derivatives() {
        let traj = quadratic_trajectory();
        for t in [0.0, 0.3, 1.0, 1.7, 2.0] {
            let s = traj.evaluate(t).unwrap();
            assert_relative_eq!(s.value[DIM_X], t * t, epsilon = 1e-12);
            assert_relative_eq!(s.d1[DIM_X], 2.0 * t, epsilon = 1e-12);
            assert_relative_eq!(s.d2[DIM_X], 2.0, epsilon = 1e-12);
            assert_relative_eq!(s.d3[DIM_X], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn interior_knot_belongs_to_earlier_segment() {
        let traj = quadratic_trajectory();
        assert_eq!(traj.segment_index(1.0), 0);
        assert_eq!(traj.segment_index(1.0 + 1e-12), 1);
        assert_eq!(traj.segment_index(0.0), 0);
        assert_eq!(traj.segment_index(2.0), 1);
    }

    #[test]
    fn rejects_times_outside_span_but_clamps_roundoff() {
        let traj = quadratic_trajectory();
        assert!(traj.evaluate(-0.5).is_err());
        assert!(traj.evaluate(2.5).is_err());
        let s = traj.evaluate(2.0 + 1e-12).unwrap();
        assert_relative_eq!(s.value[DIM_X], 4.0, epsilon = 1e-9);
    }

    #[test]
    fn uniform_sampling_includes_exact_endpoint() {
        let traj = quadratic_trajectory();
        let samples = traj.sample_uniform(0.01).unwrap();
        assert_eq!(samples.len(), 201);
        assert_eq!(samples[0].t, 0.0);
        assert_eq!(samples.last().unwrap().t, 2.0);
        // off-grid step still terminates exactly at the end
        let samples = traj.sample_uniform(0.3).unwrap();
        assert_eq!(samples.last().unwrap().t, 2.0);
        assert_eq!(samples.len(), 8);
    }

    #[test]
    fn rejects_malformed_construction() {
        let zero = vec![Polynomial::zero()];
        assert_eq!(
            PiecewiseTrajectory::new(
                vec![0.0, 0.0],
                [zero.clone(), zero.clone(), zero.clone(), zero.clone()],
            )
            .unwrap_err(),
            TrajectoryError::InvalidKnots
        );
        let err = PiecewiseTrajectory::new(
            vec![0.0, 1.0],
            [vec![], zero.clone(), zero.clone(), zero],
        )
        .unwrap_err();
        assert!(matches!(err, TrajectoryError::SegmentCount { dim: 0, .. }));
    }

    #[test]
    fn scale_time_stretches_knots_and_row_times() {
        let mut problem = TrajectoryProblem::new(vec![1.0, 2.0, 3.0], 14, 4, 4);
        problem.push_row(LinearRow {
            time: 2.5,
            order: 1,
            weights: [1.0, 0.0, 0.0, 0.0],
            lower: 0.0,
            upper: 1.0,
        });
        let scaled = problem.scale_time(2.0).unwrap();
        assert_eq!(scaled.knots, vec![1.0, 3.0, 5.0]);
        assert_relative_eq!(scaled.rows[0].time, 4.0, epsilon = 1e-12);
        assert!(problem.scale_time(0.0).is_err());
    }
}
