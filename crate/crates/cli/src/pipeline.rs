//! The `plan` / `simulate` / `campaign` / `check` pipelines behind the
//! binary: run the planner and simulator, write the artifact set, and
//! re-validate a previously written set offline.
//!
//! Failures carry a process exit code so scripts can branch on *why* a
//! run stopped: 1 for usage and IO trouble, 2 when no horizon yields a
//! solvable program, 3 when every attempt solved but none certified
//! under the thrust bounds, 4 when the closed loop diverged or missed
//! the touchdown contract.

use std::fmt;
use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use nalgebra::Vector3;
use perch_core::perch::{self, PerchPlan, PlanError};
use perch_core::qp::solve_flat_problem;
use perch_core::sim::{self, TrackingMetrics, TrackingResult};
use perch_core::{flatness, GRAVITY};
use serde_json::json;

use crate::artifacts::{self, PlanReport};
use crate::scenario::{self, Scenario};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_PLAN_INFEASIBLE: i32 = 2;
pub const EXIT_CERTIFICATE_FAILED: i32 = 3;
pub const EXIT_SIMULATION_VIOLATED: i32 = 4;

/// Samples per profile in `thrust_iterations.csv`, endpoint extra.
const THRUST_PROFILE_SAMPLES: usize = 200;

/// Points per segment when re-sampling squared thrust densely in the
/// slack report and the offline check.
const THRUST_CHECK_SAMPLES: usize = 2000;

/// Slack floor accepted when re-checking sampled linear constraints
/// offline; solved plans sit around 1e-9 or better.
const CHECK_SLACK_TOL: f64 = 1e-7;

/// Tolerance on re-checked equality pins (start state, terminal
/// position, terminal acceleration).
const CHECK_PIN_TOL: f64 = 1e-6;

/// A pipeline failure tagged with its process exit code.
#[derive(Debug)]
pub enum PipelineError {
    /// No horizon produced a solvable program (exit 2).
    PlanInfeasible(PlanError),
    /// Programs solved, but no attempt certified under the thrust
    /// bounds before the attempt cap (exit 3).
    CertificateFailed(PlanError),
    /// The closed loop failed outright or missed the touchdown
    /// contract (exit 4).
    SimulationViolated(String),
    /// Usage, IO, or validation trouble (exit 1).
    Other(anyhow::Error),
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PipelineError::PlanInfeasible(e) => write!(f, "plan infeasible: {e}"),
            PipelineError::CertificateFailed(e) => write!(f, "certificate failed: {e}"),
            PipelineError::SimulationViolated(msg) => write!(f, "simulation violated: {msg}"),
            PipelineError::Other(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<anyhow::Error> for PipelineError {
    fn from(e: anyhow::Error) -> Self {
        PipelineError::Other(e)
    }
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::PlanInfeasible(_) => EXIT_PLAN_INFEASIBLE,
            PipelineError::CertificateFailed(_) => EXIT_CERTIFICATE_FAILED,
            PipelineError::SimulationViolated(_) => EXIT_SIMULATION_VIOLATED,
            PipelineError::Other(_) => EXIT_USAGE,
        }
    }
}

/// A successful plan stage: the certified plan plus the wall-clock
/// planning time in milliseconds.
#[derive(Debug)]
pub struct PlanOutputs {
    pub plan: PerchPlan,
    pub plan_ms: f64,
}

/// Runs the planner on a resolved scenario, timing the solve and
/// classifying failures by exit code.
pub fn plan_scenario(sc: &Scenario) -> Result<PlanOutputs, PipelineError> {
    let clock = Instant::now();
    let outcome = perch::plan(
        &sc.start,
        &sc.target,
        &sc.planner,
        sc.vehicle.mass,
        sc.initial_horizon,
    );
    let plan_ms = clock.elapsed().as_secs_f64() * 1e3;
    match outcome {
        Ok(plan) => Ok(PlanOutputs { plan, plan_ms }),
        Err(e @ PlanError::Qp { .. }) => Err(PipelineError::PlanInfeasible(e)),
        Err(e @ PlanError::ScalingExhausted { .. }) => Err(PipelineError::CertificateFailed(e)),
        Err(e) => Err(PipelineError::Other(anyhow!(e))),
    }
}

/// Plans a scenario and writes the plan artifact set into `out_dir`:
/// `trajectory.csv`, `iterations.csv`, `thrust_iterations.csv`,
/// `plan_report.json`, and `slack_report.json`. On a failed
/// certificate the iteration log of the best attempt is still written
/// before the error is returned.
pub fn run_plan(sc: &Scenario, out_dir: &Path, verbose: bool) -> Result<PlanOutputs, PipelineError> {
    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    let outcome = plan_scenario(sc);
    if let Err(PipelineError::CertificateFailed(PlanError::ScalingExhausted { best })) = &outcome {
        let _ = fs::write(
            out_dir.join("iterations.csv"),
            artifacts::iterations_csv(&best.iterations),
        );
    }
    let outputs = outcome?;
    let plan = &outputs.plan;

    let trajectory = artifacts::trajectory_csv(&plan.trajectory, plan.config.dt)?;
    fs::write(out_dir.join("trajectory.csv"), trajectory).context("writing trajectory.csv")?;
    fs::write(
        out_dir.join("iterations.csv"),
        artifacts::iterations_csv(&plan.iterations),
    )
    .context("writing iterations.csv")?;
    fs::write(
        out_dir.join("thrust_iterations.csv"),
        thrust_iterations_csv(plan)?,
    )
    .context("writing thrust_iterations.csv")?;
    artifacts::write_json(
        &out_dir.join("plan_report.json"),
        &PlanReport::from_plan(plan, outputs.plan_ms),
    )?;
    let slack = slack_report(plan)?;
    artifacts::write_json(&out_dir.join("slack_report.json"), &slack)?;

    let last = plan.iterations.last().expect("a certified plan has iterations");
    println!(
        "plan: horizon {:.4} s after {} attempt(s), peak thrust {:.4} N (ceiling {} N), solved in {:.2} ms",
        plan.trajectory.end_time(),
        plan.iterations.len(),
        last.peak_squared_thrust.max(0.0).sqrt(),
        plan.config.tau_max,
        outputs.plan_ms
    );
    if verbose {
        println!("{}", serde_json::to_string_pretty(&slack).unwrap_or_default());
    }
    Ok(outputs)
}

/// Plans, then flies the plan closed loop and writes `trace.csv` and
/// `metrics.json` next to the plan artifacts. The touchdown contract
/// (terminal acceleration and impact-speed window, at the simulator's
/// acceptance tolerances) gates the exit code, but the artifacts are
/// written first so a violated run can still be inspected.
pub fn run_simulate(
    sc: &Scenario,
    out_dir: &Path,
    verbose: bool,
) -> Result<(PlanOutputs, TrackingResult), PipelineError> {
    let outputs = run_plan(sc, out_dir, verbose)?;
    let result = sim::run_tracking(&outputs.plan, &sc.gains, &sc.vehicle, sc.sim_step, sc.noise)
        .map_err(|e| PipelineError::SimulationViolated(e.to_string()))?;

    fs::write(out_dir.join("trace.csv"), artifacts::trace_csv(&result.trace))
        .context("writing trace.csv")?;
    artifacts::write_json(
        &out_dir.join("metrics.json"),
        &metrics_json(&result.metrics, &outputs, sc),
    )?;

    let m = &result.metrics;
    println!(
        "simulate: rmse [{:.5}, {:.5}, {:.5}] m, peak rate {:.1} deg/s, terminal position error {:.5} m",
        m.rmse.x,
        m.rmse.y,
        m.rmse.z,
        m.peak_body_rate.to_degrees(),
        m.terminal_position_error
    );
    println!(
        "touchdown: accel error {:.4} m/s^2 ({}), impact speed {:.4} m/s ({})",
        m.terminal_accel_error,
        if m.touchdown_accel_ok { "ok" } else { "VIOLATED" },
        m.impact_speed,
        if m.impact_window_ok { "ok" } else { "VIOLATED" }
    );
    if !(m.touchdown_accel_ok && m.impact_window_ok) {
        let mut missed = Vec::new();
        if !m.touchdown_accel_ok {
            missed.push(format!(
                "terminal accel error {:.4} m/s^2 over tolerance",
                m.terminal_accel_error
            ));
        }
        if !m.impact_window_ok {
            missed.push(format!(
                "impact speed {:.4} m/s outside [{}, {}]",
                m.impact_speed, outputs.plan.config.v_min, outputs.plan.config.v_max
            ));
        }
        return Err(PipelineError::SimulationViolated(format!(
            "touchdown contract missed: {}",
            missed.join("; ")
        )));
    }
    Ok((outputs, result))
}

fn metrics_json(
    metrics: &TrackingMetrics,
    outputs: &PlanOutputs,
    sc: &Scenario,
) -> serde_json::Value {
    json!({
        "plan_ms": outputs.plan_ms,
        "horizon_s": outputs.plan.trajectory.end_time(),
        "attempts": outputs.plan.iterations.len(),
        "seed": sc.seed,
        "sim_step_s": sc.sim_step,
        "rmse_m": [metrics.rmse.x, metrics.rmse.y, metrics.rmse.z],
        "peak_body_rate_rad_s": metrics.peak_body_rate,
        "peak_commanded_rate_rad_s": metrics.peak_commanded_rate,
        "max_rotation_defect": metrics.max_rotation_defect,
        "terminal_position_error_m": metrics.terminal_position_error,
        "terminal_attitude_error_rad": metrics.terminal_attitude_error,
        "terminal_velocity_error_m_s": metrics.terminal_velocity_error,
        "terminal_accel_error_m_s2": metrics.terminal_accel_error,
        "impact_speed_m_s": metrics.impact_speed,
        "touchdown_accel_ok": metrics.touchdown_accel_ok,
        "impact_window_ok": metrics.impact_window_ok,
    })
}

/// Renders `thrust_iterations.csv`: one `(t_k, tau_k)` column pair per
/// solve attempt in attempt order, each profile sampled uniformly over
/// that attempt's horizon. The scaling loop is deterministic, so
/// re-solving a logged horizon reproduces that attempt's trajectory
/// exactly; the final pair is the returned, certified plan.
pub fn thrust_iterations_csv(plan: &PerchPlan) -> Result<String> {
    if plan.iterations.is_empty() {
        bail!("plan has no logged attempts");
    }
    let mut columns: Vec<Vec<(f64, f64)>> = Vec::with_capacity(plan.iterations.len());
    for rec in &plan.iterations {
        let problem = perch::build_problem(&plan.start, &plan.target, &plan.config, rec.horizon)
            .map_err(|e| anyhow!("rebuilding attempt at horizon {}: {e}", rec.horizon))?;
        let trajectory = solve_flat_problem(&problem)
            .map_err(|e| anyhow!("re-solving attempt at horizon {}: {e}", rec.horizon))?;
        let mut column = Vec::with_capacity(THRUST_PROFILE_SAMPLES + 1);
        for k in 0..=THRUST_PROFILE_SAMPLES {
            let t = rec.horizon * k as f64 / THRUST_PROFILE_SAMPLES as f64;
            let sample = trajectory
                .evaluate(t)
                .map_err(|e| anyhow!("sampling attempt at horizon {}: {e}", rec.horizon))?;
            column.push((t, flatness::nominal_thrust(sample.acceleration(), plan.mass)));
        }
        columns.push(column);
    }

    let mut out = String::new();
    for k in 1..=columns.len() {
        if k > 1 {
            out.push(',');
        }
        out.push_str(&format!("t_{k},tau_{k}"));
    }
    out.push('\n');
    for row in 0..=THRUST_PROFILE_SAMPLES {
        for (k, column) in columns.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            let (t, tau) = column[row];
            out.push_str(&format!("{t},{tau}"));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Evaluates every touchdown constraint family directly on the planned
/// trajectory and reports signed slacks (positive = satisfied with
/// margin). This is the write side of the offline `check`.
pub fn slack_report(plan: &PerchPlan) -> Result<serde_json::Value> {
    let traj = &plan.trajectory;
    let cfg = &plan.config;
    let target = &plan.target;
    let t_f = traj.end_time();
    let terminal = traj.evaluate(t_f).map_err(|e| anyhow!("terminal sample: {e}"))?;

    let desired_accel = cfg.alpha * target.s3() - GRAVITY * Vector3::z();
    let accel_residual = (terminal.acceleration() - desired_accel).norm();
    let impact_speed = terminal.velocity().dot(&target.s3());
    let impact_slack = (impact_speed - cfg.v_min).min(cfg.v_max - impact_speed);

    let mut corridor_worst = f64::INFINITY;
    let mut corridor_worst_time = t_f;
    let corridor = perch::pre_impact_corridor(target, cfg, t_f);
    for row in &corridor {
        let sample = traj
            .evaluate(row.time)
            .map_err(|e| anyhow!("corridor sample: {e}"))?;
        let value: f64 = (0..4).map(|d| row.weights[d] * sample.deriv(d, row.order)).sum();
        let slack = (value - row.lower).min(row.upper - value);
        if slack < corridor_worst {
            corridor_worst = slack;
            corridor_worst_time = row.time;
        }
    }

    let start_sample = traj
        .evaluate(traj.start_time())
        .map_err(|e| anyhow!("start sample: {e}"))?;
    let s = &plan.start;
    let start_residual = [
        (start_sample.position() - s.position).norm(),
        (start_sample.velocity() - s.velocity).norm(),
        (start_sample.acceleration() - s.acceleration).norm(),
        (start_sample.jerk() - s.jerk).norm(),
        (start_sample.yaw() - s.yaw).abs(),
        (start_sample.yaw_rate() - s.yaw_rate).abs(),
        (start_sample.deriv(3, 2) - s.yaw_accel).abs(),
        (start_sample.deriv(3, 3) - s.yaw_jerk).abs(),
    ]
    .into_iter()
    .fold(0.0f64, f64::max);

    let (peak_thrust, min_thrust) = sampled_thrust_range(plan);
    let certified = plan.certificates.iter().all(|c| c.holds());

    Ok(json!({
        "horizon_s": t_f,
        "terminal": {
            "accel_residual_m_s2": accel_residual,
            "position_residual_m": (terminal.position() - target.position).norm(),
            "heading_residual_rad": (terminal.yaw() - cfg.psi_des).abs(),
            "impact_speed_m_s": impact_speed,
            "impact_speed_slack_m_s": impact_slack,
        },
        "corridor": {
            "rows": corridor.len(),
            "worst_slack_m_s2": corridor_worst,
            "worst_time_s": corridor_worst_time,
        },
        "start_worst_residual": start_residual,
        "thrust": {
            "certified": certified,
            "sampled_peak_n": peak_thrust,
            "sampled_min_n": min_thrust,
            "upper_slack_n": cfg.tau_max - peak_thrust,
            "lower_slack_n": min_thrust - cfg.tau_min,
        },
    }))
}

/// Dense thrust range over the whole plan, [`THRUST_CHECK_SAMPLES`]
/// points per segment plus endpoints.
fn sampled_thrust_range(plan: &PerchPlan) -> (f64, f64) {
    let mut peak = f64::NEG_INFINITY;
    let mut min = f64::INFINITY;
    for seg in 0..plan.trajectory.n_segments() {
        let h = perch::squared_thrust_polynomial(&plan.trajectory, seg, plan.mass);
        for k in 0..=THRUST_CHECK_SAMPLES {
            let v = h.eval(k as f64 / THRUST_CHECK_SAMPLES as f64);
            peak = peak.max(v);
            min = min.min(v);
        }
    }
    (peak.max(0.0).sqrt(), min.max(0.0).sqrt())
}

/// Re-validates an artifact directory written by `plan` or `simulate`:
/// rebuilds the plan from `plan_report.json`, re-derives the CSV
/// artifacts byte for byte, re-runs the certificates, and re-checks
/// every touchdown constraint. When `trace.csv` and `metrics.json` are
/// present the tracking error summary is recomputed from the trace.
/// Returns the list of verified artifact names.
pub fn run_check(dir: &Path) -> Result<Vec<String>> {
    let report: PlanReport = artifacts::read_json(&dir.join("plan_report.json"))?;
    let plan = report.to_plan()?;
    let mut verified = Vec::new();

    // The trajectory and iteration CSVs must match a regeneration from
    // the rebuilt plan exactly; any drift means the artifacts do not
    // describe the same trajectory.
    let trajectory_path = dir.join("trajectory.csv");
    let stored = fs::read_to_string(&trajectory_path)
        .with_context(|| format!("reading {}", trajectory_path.display()))?;
    let regenerated = artifacts::trajectory_csv(&plan.trajectory, plan.config.dt)?;
    if stored != regenerated {
        bail!("trajectory.csv does not match the plan report's trajectory");
    }
    verified.push("trajectory.csv".to_string());

    let iterations_path = dir.join("iterations.csv");
    let stored = fs::read_to_string(&iterations_path)
        .with_context(|| format!("reading {}", iterations_path.display()))?;
    if stored != artifacts::iterations_csv(&plan.iterations) {
        bail!("iterations.csv does not match the plan report's attempt log");
    }
    verified.push("iterations.csv".to_string());

    let thrust_path = dir.join("thrust_iterations.csv");
    if thrust_path.exists() {
        let stored = fs::read_to_string(&thrust_path)
            .with_context(|| format!("reading {}", thrust_path.display()))?;
        if stored != thrust_iterations_csv(&plan)? {
            bail!("thrust_iterations.csv does not match a re-solve of the logged attempts");
        }
        verified.push("thrust_iterations.csv".to_string());
    }

    check_plan_constraints(&plan)?;
    verified.push("plan_report.json".to_string());

    let trace_path = dir.join("trace.csv");
    if trace_path.exists() {
        let text = fs::read_to_string(&trace_path)
            .with_context(|| format!("reading {}", trace_path.display()))?;
        check_trace(&plan, &text, &artifacts::read_json(&dir.join("metrics.json"))?)?;
        verified.push("trace.csv".to_string());
        verified.push("metrics.json".to_string());
    }
    Ok(verified)
}

/// Re-runs the constraint families and certificates on a rebuilt plan.
fn check_plan_constraints(plan: &PerchPlan) -> Result<()> {
    let traj = &plan.trajectory;
    let cfg = &plan.config;
    let target = &plan.target;
    let t_f = traj.end_time();

    let last = plan
        .iterations
        .last()
        .context("plan report lists no attempts")?;
    if !last.certified {
        bail!("plan report's final attempt is not certified");
    }
    if last.horizon != t_f - traj.start_time() {
        bail!(
            "final attempt horizon {} does not match the trajectory span {}",
            last.horizon,
            t_f - traj.start_time()
        );
    }

    // Certificates must re-derive to the stored verdicts and all hold.
    if plan.certificates.len() != traj.n_segments() {
        bail!(
            "{} certificates for {} segments",
            plan.certificates.len(),
            traj.n_segments()
        );
    }
    for seg in 0..traj.n_segments() {
        let h = perch::squared_thrust_polynomial(traj, seg, plan.mass);
        let fresh = perch::certify_thrust(&h, cfg.tau_min, cfg.tau_max);
        if fresh != plan.certificates[seg] {
            bail!("segment {seg} certificate does not re-derive to the stored verdict");
        }
        if !fresh.holds() {
            bail!("segment {seg} fails its thrust certificate");
        }
    }
    let (peak, min) = sampled_thrust_range(plan);
    if cfg.tau_max.is_finite() && peak > cfg.tau_max * (1.0 + 1e-12) + 1e-9 {
        bail!("sampled thrust peak {peak} N exceeds the certified ceiling {} N", cfg.tau_max);
    }
    if cfg.tau_min > 0.0 && min < cfg.tau_min * (1.0 - 1e-12) - 1e-9 {
        bail!("sampled thrust floor {min} N undercuts the certified floor {} N", cfg.tau_min);
    }

    let terminal = traj.evaluate(t_f).map_err(|e| anyhow!("terminal sample: {e}"))?;
    let desired = cfg.alpha * target.s3() - GRAVITY * Vector3::z();
    let accel_residual = (terminal.acceleration() - desired).norm();
    if accel_residual > CHECK_PIN_TOL {
        bail!("terminal acceleration misses the contact value by {accel_residual} m/s^2");
    }
    let position_residual = (terminal.position() - target.position).norm();
    if position_residual > CHECK_PIN_TOL {
        bail!("terminal position misses the target by {position_residual} m");
    }
    let impact_speed = terminal.velocity().dot(&target.s3());
    if impact_speed < cfg.v_min - CHECK_SLACK_TOL || impact_speed > cfg.v_max + CHECK_SLACK_TOL {
        bail!(
            "impact speed {impact_speed} m/s leaves the window [{}, {}]",
            cfg.v_min,
            cfg.v_max
        );
    }
    for row in perch::pre_impact_corridor(target, cfg, t_f) {
        let sample = traj
            .evaluate(row.time)
            .map_err(|e| anyhow!("corridor sample: {e}"))?;
        let value: f64 = (0..4).map(|d| row.weights[d] * sample.deriv(d, row.order)).sum();
        if value < row.lower - CHECK_SLACK_TOL || value > row.upper + CHECK_SLACK_TOL {
            bail!(
                "corridor violated at t = {} s: {value} outside [{}, {}]",
                row.time,
                row.lower,
                row.upper
            );
        }
    }

    let start_sample = traj
        .evaluate(traj.start_time())
        .map_err(|e| anyhow!("start sample: {e}"))?;
    let s = &plan.start;
    let start_residual = [
        (start_sample.position() - s.position).norm(),
        (start_sample.velocity() - s.velocity).norm(),
        (start_sample.acceleration() - s.acceleration).norm(),
        (start_sample.jerk() - s.jerk).norm(),
        (start_sample.yaw() - s.yaw).abs(),
    ]
    .into_iter()
    .fold(0.0f64, f64::max);
    if start_residual > CHECK_PIN_TOL {
        bail!("start state misses its pins by {start_residual}");
    }
    Ok(())
}

/// Recomputes the per-axis RMS tracking error from the trace rows (same
/// accumulation order as the simulator, so the result is bit-exact) and
/// compares it against `metrics.json`.
fn check_trace(plan: &PerchPlan, trace_text: &str, metrics: &serde_json::Value) -> Result<()> {
    let (header, rows) = artifacts::parse_numeric_csv(trace_text)?;
    if header != artifacts::TRACE_HEADER {
        bail!("trace.csv header {header:?} is not the expected layout");
    }
    if rows.is_empty() {
        bail!("trace.csv holds no rows");
    }
    let t_f = plan.trajectory.end_time();
    let last = rows.last().unwrap();
    if last[0] != t_f {
        bail!("trace.csv ends at t = {} s, expected the horizon {t_f} s", last[0]);
    }

    let mut sum_sq = Vector3::zeros();
    for row in &rows {
        let error = Vector3::new(row[7], row[8], row[9]);
        sum_sq += error.component_mul(&error);
    }
    let rmse = (sum_sq / rows.len() as f64).map(|v| v.sqrt());
    let stored = metrics
        .get("rmse_m")
        .and_then(|v| v.as_array())
        .context("metrics.json lacks rmse_m")?;
    for (axis, value) in stored.iter().enumerate() {
        let stored = value.as_f64().context("rmse_m entry is not a number")?;
        if stored.to_bits() != rmse[axis].to_bits() {
            bail!(
                "metrics.json rmse_m[{axis}] = {stored} does not match the trace ({})",
                rmse[axis]
            );
        }
    }
    Ok(())
}

/// One cell of the built-in campaign grid.
#[derive(Debug)]
pub struct CampaignRow {
    pub inclination_deg: f64,
    pub distance: f64,
    pub outcome: Result<CampaignSummary, (i32, String)>,
}

#[derive(Debug)]
pub struct CampaignSummary {
    pub horizon: f64,
    pub attempts: usize,
    pub peak_thrust: f64,
    pub rmse_max: f64,
    pub peak_rate_deg: f64,
    pub plan_ms: f64,
}

/// Runs the four-scenario inclination/distance grid concurrently, one
/// artifact directory per cell, and prints a summary table. Returns the
/// worst exit code across the cells (0 when every cell lands).
pub fn run_campaign(out_dir: &Path, seed: u64, verbose: bool) -> Result<i32> {
    const GRID: [(f64, f64); 4] = [(60.0, 1.7), (60.0, 3.0), (90.0, 1.7), (90.0, 3.0)];
    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;

    let rows: Vec<CampaignRow> = std::thread::scope(|scope| {
        let handles: Vec<_> = GRID
            .iter()
            .map(|&(inclination_deg, distance)| {
                scope.spawn(move || {
                    let dir = out_dir.join(format!("incl{inclination_deg:.0}_dist{distance}"));
                    let outcome = campaign_cell(inclination_deg, distance, seed, &dir, verbose);
                    CampaignRow {
                        inclination_deg,
                        distance,
                        outcome,
                    }
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("campaign cell panicked"))
            .collect()
    });

    println!("incl_deg  dist_m  horizon_s  attempts  peak_N  rmse_max_m  peak_rate_deg_s  plan_ms  status");
    let mut worst = EXIT_OK;
    for row in &rows {
        match &row.outcome {
            Ok(s) => println!(
                "{:>8} {:>7} {:>10.4} {:>9} {:>7.3} {:>11.6} {:>16.1} {:>8.2}  ok",
                row.inclination_deg,
                row.distance,
                s.horizon,
                s.attempts,
                s.peak_thrust,
                s.rmse_max,
                s.peak_rate_deg,
                s.plan_ms
            ),
            Err((code, msg)) => {
                worst = worst.max(*code);
                println!(
                    "{:>8} {:>7} {:>10} {:>9} {:>7} {:>11} {:>16} {:>8}  exit {code}: {msg}",
                    row.inclination_deg, row.distance, "-", "-", "-", "-", "-", "-"
                );
            }
        }
    }
    Ok(worst)
}

fn campaign_cell(
    inclination_deg: f64,
    distance: f64,
    seed: u64,
    dir: &Path,
    verbose: bool,
) -> Result<CampaignSummary, (i32, String)> {
    let sc = scenario::grid_scenario(inclination_deg, distance, seed)
        .map_err(|e| (EXIT_USAGE, format!("{e:#}")))?;
    let (outputs, result) = run_simulate(&sc, dir, verbose)
        .map_err(|e| (e.exit_code(), e.to_string()))?;
    let last = outputs.plan.iterations.last().expect("certified plan");
    Ok(CampaignSummary {
        horizon: outputs.plan.trajectory.end_time(),
        attempts: outputs.plan.iterations.len(),
        peak_thrust: last.peak_squared_thrust.max(0.0).sqrt(),
        rmse_max: result.metrics.rmse.amax(),
        peak_rate_deg: result.metrics.peak_body_rate.to_degrees(),
        plan_ms: outputs.plan_ms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::parse_scenario;

    fn scenario_60() -> Scenario {
        parse_scenario("[target]\ndistance = 1.7\ninclination_deg = 60.0\n").unwrap()
    }

    #[test]
    fn plan_failures_map_to_their_exit_codes() {
        // Degree-5 polynomials cannot meet the start pins, terminal
        // pins, and corridor simultaneously: the program is infeasible.
        let mut sc = scenario_60();
        sc.planner.poly_order = 5;
        let err = plan_scenario(&sc).unwrap_err();
        assert_eq!(err.exit_code(), EXIT_PLAN_INFEASIBLE);

        // An unreachably low ceiling with a single attempt exhausts the
        // scaling loop immediately.
        let mut sc = scenario_60();
        sc.planner.tau_max = 0.1;
        sc.planner.max_scale_iters = 1;
        let err = plan_scenario(&sc).unwrap_err();
        assert_eq!(err.exit_code(), EXIT_CERTIFICATE_FAILED);
    }

    #[test]
    fn thrust_profile_final_column_is_the_certified_plan() {
        let sc = scenario_60();
        let outputs = plan_scenario(&sc).unwrap();
        let text = thrust_iterations_csv(&outputs.plan).unwrap();
        let (header, rows) = artifacts::parse_numeric_csv(&text).unwrap();
        let pairs = header.split(',').count() / 2;
        assert_eq!(pairs, outputs.plan.iterations.len());
        let ceiling = outputs.plan.config.tau_max;
        let last_tau = 2 * pairs - 1;
        for row in &rows {
            assert!(row[last_tau] <= ceiling * (1.0 + 1e-12) + 1e-9);
        }
        // Each profile's time column ends at its attempt's horizon.
        for (k, rec) in outputs.plan.iterations.iter().enumerate() {
            assert_eq!(rows.last().unwrap()[2 * k], rec.horizon);
        }
    }

    #[test]
    fn slack_report_shows_satisfied_constraints() {
        let sc = scenario_60();
        let outputs = plan_scenario(&sc).unwrap();
        let report = slack_report(&outputs.plan).unwrap();
        assert!(report["terminal"]["accel_residual_m_s2"].as_f64().unwrap() < 1e-6);
        assert!(report["terminal"]["impact_speed_slack_m_s"].as_f64().unwrap() > -1e-7);
        assert!(report["corridor"]["worst_slack_m_s2"].as_f64().unwrap() > -1e-7);
        assert!(report["thrust"]["certified"].as_bool().unwrap());
        assert!(report["thrust"]["upper_slack_n"].as_f64().unwrap() > -1e-9);
        assert!(report["start_worst_residual"].as_f64().unwrap() < 1e-6);
    }
}
