//! On-disk artifact formats. Floats are written with Rust's shortest
//! round-trip formatting, so every file parses back to the exact bits
//! that produced it and a regenerated artifact can be compared to the
//! original byte for byte.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use nalgebra::{Matrix3, Vector3};
use perch_core::perch::{
    IterationRecord, PerchPlan, PlannerConfig, StartState, TargetPose, ThrustCertificate,
};
use perch_core::polyalg::Polynomial;
use perch_core::sim::TraceRow;
use perch_core::trajectory::{PiecewiseTrajectory, FLAT_DIMS};
use serde::{Deserialize, Serialize};

/// Column layout of `trajectory.csv`: time, then each derivative order
/// of the flat output grouped x, y, z, psi.
pub const TRAJECTORY_HEADER: &str =
    "t,x,y,z,psi,dx,dy,dz,dpsi,d2x,d2y,d2z,d2psi,d3x,d3y,d3z,d3psi,d4x,d4y,d4z,d4psi";

/// Column layout of `trace.csv`, matching the order documented on
/// [`TraceRow`].
pub const TRACE_HEADER: &str =
    "t,x,y,z,ref_x,ref_y,ref_z,ex,ey,ez,tau,Mx,My,Mz,wx,wy,wz";

/// Column layout of `iterations.csv`; `peak_thrust_n` is the square
/// root of the largest sampled squared thrust of that attempt.
pub const ITERATIONS_HEADER: &str = "iteration,horizon_s,peak_thrust_n,certified";

fn push_fields(out: &mut String, fields: &[f64]) {
    for (k, v) in fields.iter().enumerate() {
        if k > 0 {
            out.push(',');
        }
        out.push_str(&format!("{v}"));
    }
    out.push('\n');
}

/// Renders the flat trajectory sampled every `dt` seconds (final row
/// exactly at the end time) in the [`TRAJECTORY_HEADER`] layout.
pub fn trajectory_csv(trajectory: &PiecewiseTrajectory, dt: f64) -> Result<String> {
    let samples = trajectory
        .sample_uniform(dt)
        .map_err(|e| anyhow!("sampling trajectory: {e}"))?;
    let mut out = String::with_capacity(64 * (samples.len() + 1));
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    let mut fields = [0.0; 21];
    for s in &samples {
        fields[0] = s.t;
        for (group, values) in [s.value, s.d1, s.d2, s.d3, s.d4].iter().enumerate() {
            fields[1 + 4 * group..5 + 4 * group].copy_from_slice(values);
        }
        push_fields(&mut out, &fields);
    }
    Ok(out)
}

/// Renders a closed-loop trace in the [`TRACE_HEADER`] layout.
pub fn trace_csv(trace: &[TraceRow]) -> String {
    let mut out = String::with_capacity(64 * (trace.len() + 1));
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for row in trace {
        let p = row.position;
        let r = row.reference;
        let e = row.error;
        let m = row.moment;
        let w = row.body_rate;
        push_fields(
            &mut out,
            &[
                row.t, p.x, p.y, p.z, r.x, r.y, r.z, e.x, e.y, e.z, row.thrust, m.x, m.y, m.z,
                w.x, w.y, w.z,
            ],
        );
    }
    out
}

/// Renders the time-scaling log in the [`ITERATIONS_HEADER`] layout,
/// iterations numbered from 1.
pub fn iterations_csv(iterations: &[IterationRecord]) -> String {
    let mut out = String::from(ITERATIONS_HEADER);
    out.push('\n');
    for (k, rec) in iterations.iter().enumerate() {
        let peak = rec.peak_squared_thrust.max(0.0).sqrt();
        out.push_str(&format!(
            "{},{},{},{}\n",
            k + 1,
            rec.horizon,
            peak,
            rec.certified
        ));
    }
    out
}

/// Parses a numeric CSV produced by this module back into its header
/// and rows. Exact: fields round-trip to the bits that were written.
pub fn parse_numeric_csv(text: &str) -> Result<(String, Vec<Vec<f64>>)> {
    let mut lines = text.lines();
    let header = lines.next().context("empty CSV")?.to_string();
    let width = header.split(',').count();
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let row: Vec<f64> = line
            .split(',')
            .map(|f| f.parse::<f64>())
            .collect::<Result<_, _>>()
            .with_context(|| format!("CSV row {}", k + 2))?;
        if row.len() != width {
            bail!("CSV row {} has {} fields, expected {width}", k + 2, row.len());
        }
        rows.push(row);
    }
    Ok((header, rows))
}

/// Everything needed to rebuild a [`PerchPlan`] bit for bit offline:
/// the planned inputs, the solved polynomial coefficients, and the
/// certification history. Serialized as `plan_report.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanReport {
    /// Wall-clock planning time, ms, as measured by the run that wrote
    /// the report. Informational; not part of the rebuild.
    pub plan_ms: f64,
    pub mass: f64,
    pub start: StartReport,
    pub target: TargetReport,
    pub config: ConfigReport,
    /// Segment boundary times, seconds.
    pub knots: Vec<f64>,
    /// `coefficients[dim][seg]` = monomial coefficients of that segment
    /// in normalized local time, ascending powers.
    pub coefficients: Vec<Vec<Vec<f64>>>,
    pub iterations: Vec<IterationReport>,
    pub certificates: Vec<CertificateReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartReport {
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    pub acceleration: [f64; 3],
    pub jerk: [f64; 3],
    pub yaw: f64,
    pub yaw_rate: f64,
    pub yaw_accel: f64,
    pub yaw_jerk: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetReport {
    pub position: [f64; 3],
    /// Rotation matrix rows.
    pub rotation: [[f64; 3]; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigReport {
    pub alpha: f64,
    pub q: f64,
    pub dt: f64,
    pub t_k: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    pub poly_order: usize,
    pub cost_order: usize,
    pub time_scale_factor: f64,
    pub max_scale_iters: usize,
    pub psi_des: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IterationReport {
    pub horizon: f64,
    pub peak_squared_thrust: f64,
    pub certified: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateReport {
    pub upper: bool,
    pub lower: bool,
}

fn vec3(v: &Vector3<f64>) -> [f64; 3] {
    [v.x, v.y, v.z]
}

impl PlanReport {
    pub fn from_plan(plan: &PerchPlan, plan_ms: f64) -> Self {
        let trajectory = &plan.trajectory;
        let coefficients = (0..FLAT_DIMS)
            .map(|dim| {
                (0..trajectory.n_segments())
                    .map(|seg| trajectory.segment_poly(dim, seg).coeffs().to_vec())
                    .collect()
            })
            .collect();
        let rotation = plan.target.rotation;
        PlanReport {
            plan_ms,
            mass: plan.mass,
            start: StartReport {
                position: vec3(&plan.start.position),
                velocity: vec3(&plan.start.velocity),
                acceleration: vec3(&plan.start.acceleration),
                jerk: vec3(&plan.start.jerk),
                yaw: plan.start.yaw,
                yaw_rate: plan.start.yaw_rate,
                yaw_accel: plan.start.yaw_accel,
                yaw_jerk: plan.start.yaw_jerk,
            },
            target: TargetReport {
                position: vec3(&plan.target.position),
                rotation: [0, 1, 2].map(|i| [0, 1, 2].map(|j| rotation[(i, j)])),
            },
            config: ConfigReport {
                alpha: plan.config.alpha,
                q: plan.config.q,
                dt: plan.config.dt,
                t_k: plan.config.t_k,
                v_min: plan.config.v_min,
                v_max: plan.config.v_max,
                tau_min: plan.config.tau_min,
                tau_max: plan.config.tau_max,
                poly_order: plan.config.poly_order,
                cost_order: plan.config.cost_order,
                time_scale_factor: plan.config.time_scale_factor,
                max_scale_iters: plan.config.max_scale_iters,
                psi_des: plan.config.psi_des,
            },
            knots: trajectory.knots().to_vec(),
            iterations: plan
                .iterations
                .iter()
                .map(|r| IterationReport {
                    horizon: r.horizon,
                    peak_squared_thrust: r.peak_squared_thrust,
                    certified: r.certified,
                })
                .collect(),
            certificates: plan
                .certificates
                .iter()
                .map(|c| CertificateReport {
                    upper: c.upper,
                    lower: c.lower,
                })
                .collect(),
            coefficients,
        }
    }

    /// Rebuilds the plan the report was written from. The polynomial
    /// coefficients are stored losslessly, so the rebuilt trajectory
    /// evaluates to the same bits as the original.
    pub fn to_plan(&self) -> Result<PerchPlan> {
        if self.coefficients.len() != FLAT_DIMS {
            bail!(
                "plan report holds {} coefficient groups, expected {FLAT_DIMS}",
                self.coefficients.len()
            );
        }
        let mut dims: [Vec<Polynomial>; FLAT_DIMS] = Default::default();
        for (dim, segments) in self.coefficients.iter().enumerate() {
            dims[dim] = segments.iter().map(|c| Polynomial::new(c.clone())).collect();
        }
        let trajectory = PiecewiseTrajectory::new(self.knots.clone(), dims)
            .map_err(|e| anyhow!("rebuilding trajectory: {e}"))?;
        let start = StartState {
            position: Vector3::from(self.start.position),
            velocity: Vector3::from(self.start.velocity),
            acceleration: Vector3::from(self.start.acceleration),
            jerk: Vector3::from(self.start.jerk),
            yaw: self.start.yaw,
            yaw_rate: self.start.yaw_rate,
            yaw_accel: self.start.yaw_accel,
            yaw_jerk: self.start.yaw_jerk,
        };
        let mut rotation = Matrix3::zeros();
        for i in 0..3 {
            for j in 0..3 {
                rotation[(i, j)] = self.target.rotation[i][j];
            }
        }
        let target = TargetPose::new(Vector3::from(self.target.position), rotation)
            .context("plan report target pose")?;
        let config = PlannerConfig {
            alpha: self.config.alpha,
            q: self.config.q,
            dt: self.config.dt,
            t_k: self.config.t_k,
            v_min: self.config.v_min,
            v_max: self.config.v_max,
            tau_min: self.config.tau_min,
            tau_max: self.config.tau_max,
            poly_order: self.config.poly_order,
            cost_order: self.config.cost_order,
            time_scale_factor: self.config.time_scale_factor,
            max_scale_iters: self.config.max_scale_iters,
            psi_des: self.config.psi_des,
        };
        config.validate().context("plan report planner config")?;
        Ok(PerchPlan {
            trajectory,
            iterations: self
                .iterations
                .iter()
                .map(|r| IterationRecord {
                    horizon: r.horizon,
                    peak_squared_thrust: r.peak_squared_thrust,
                    certified: r.certified,
                })
                .collect(),
            certificates: self
                .certificates
                .iter()
                .map(|c| ThrustCertificate {
                    upper: c.upper,
                    lower: c.lower,
                })
                .collect(),
            start,
            target,
            config,
            mass: self.mass,
        })
    }
}

/// Writes a value as pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).context("serializing JSON")?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Reads a JSON artifact back.
pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}
