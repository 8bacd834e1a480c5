//! Scenario files: one TOML document describing the start state, the
//! target surface, and optional planner / vehicle / controller / noise
//! overrides on top of the built-in defaults.
//!
//! The target surface comes from exactly one of three sources:
//!
//! * `target.pose` - a directly measured surface pose,
//! * `target.corners` - four detected corner poses, averaged,
//! * `target.distance` + `target.inclination_deg` - a synthetic plane
//!   that distance away along its own normal, from which four corner
//!   poses of a `tag_size` square are synthesized and averaged exactly
//!   like detected ones.
//!
//! Unknown keys anywhere in the file are rejected, so a typo fails the
//! run instead of silently falling back to a default.

use std::fs;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector3};
use perch_core::perch::{self, PlannerConfig, StartState, TargetPose};
use perch_core::sim::{self, ControllerGains, SensorNoise, VehicleParams};
use serde::Deserialize;

/// Edge length of the synthesized corner square, m, when the scenario
/// does not override it.
pub const DEFAULT_TAG_SIZE: f64 = 0.4;

/// First horizon handed to the planner, s, when the scenario does not
/// override it.
pub const DEFAULT_INITIAL_HORIZON: f64 = 1.0;

/// A fully resolved, validated scenario ready for the pipeline.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub start: StartState,
    pub target: TargetPose,
    /// Corner poses the target was averaged from; `None` only when the
    /// file supplied the pose directly.
    pub corners: Option<CornerSet>,
    pub planner: PlannerConfig,
    pub vehicle: VehicleParams,
    pub gains: ControllerGains,
    /// Measurement noise for the tracking run; `None` runs on truth.
    pub noise: Option<SensorNoise>,
    pub seed: u64,
    pub initial_horizon: f64,
    /// Integrator step for the tracking run, s.
    pub sim_step: f64,
}

/// Four corner poses, kept around so reports can record what the
/// target was averaged from.
#[derive(Debug, Clone)]
pub struct CornerSet {
    pub positions: [Vector3<f64>; 4],
    pub orientations: [UnitQuaternion<f64>; 4],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    seed: Option<u64>,
    initial_horizon: Option<f64>,
    sim_step: Option<f64>,
    start: Option<StartSection>,
    target: TargetSection,
    planner: Option<PlannerSection>,
    vehicle: Option<VehicleSection>,
    gains: Option<GainsSection>,
    noise: Option<NoiseSection>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct StartSection {
    position: Option<[f64; 3]>,
    yaw: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TargetSection {
    distance: Option<f64>,
    inclination_deg: Option<f64>,
    tag_size: Option<f64>,
    pose: Option<PoseSection>,
    corners: Option<Vec<PoseSection>>,
}

/// A pose as position plus orientation quaternion in `[w, x, y, z]`
/// order. The quaternion is normalized on load.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseSection {
    position: [f64; 3],
    quaternion: [f64; 4],
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlannerSection {
    alpha: Option<f64>,
    q: Option<f64>,
    dt: Option<f64>,
    t_k: Option<f64>,
    v_min: Option<f64>,
    v_max: Option<f64>,
    tau_min: Option<f64>,
    tau_max: Option<f64>,
    poly_order: Option<usize>,
    cost_order: Option<usize>,
    time_scale_factor: Option<f64>,
    max_scale_iters: Option<usize>,
    psi_des: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct VehicleSection {
    mass: Option<f64>,
    inertia_diag: Option<[f64; 3]>,
    gravity: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GainsSection {
    k_x: Option<[f64; 3]>,
    k_v: Option<[f64; 3]>,
    k_r: Option<[f64; 3]>,
    k_omega: Option<[f64; 3]>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseSection {
    position_std: Option<f64>,
    velocity_std: Option<f64>,
    attitude_std: Option<f64>,
}

/// Reads and resolves a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading scenario {}", path.display()))?;
    parse_scenario(&text).with_context(|| format!("in scenario {}", path.display()))
}

/// Parses scenario TOML text and resolves it against the defaults.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let file: ScenarioFile = toml::from_str(text).context("parsing scenario TOML")?;
    resolve(file)
}

fn resolve(file: ScenarioFile) -> Result<Scenario> {
    let start_section = file.start.unwrap_or_default();
    let position = Vector3::from(start_section.position.unwrap_or([0.0, 0.0, 1.0]));
    let yaw = start_section.yaw.unwrap_or(0.0);
    ensure!(
        position.iter().all(|v| v.is_finite()) && yaw.is_finite(),
        "start.position and start.yaw must be finite"
    );
    let start = StartState::hover(position, yaw);

    let (target, corners) = resolve_target(&start, file.target)?;

    let planner = resolve_planner(file.planner, &target)?;
    let vehicle = resolve_vehicle(file.vehicle)?;
    let gains = resolve_gains(file.gains)?;
    let seed = file.seed.unwrap_or(0);
    let noise = resolve_noise(file.noise, seed)?;

    let initial_horizon = file.initial_horizon.unwrap_or(DEFAULT_INITIAL_HORIZON);
    ensure!(
        initial_horizon.is_finite() && initial_horizon > 0.0,
        "initial_horizon must be positive and finite, got {initial_horizon}"
    );
    let sim_step = file.sim_step.unwrap_or(sim::DEFAULT_STEP);
    ensure!(
        sim_step.is_finite() && sim_step > 0.0,
        "sim_step must be positive and finite, got {sim_step}"
    );

    Ok(Scenario {
        start,
        target,
        corners,
        planner,
        vehicle,
        gains,
        noise,
        seed,
        initial_horizon,
        sim_step,
    })
}

fn resolve_target(
    start: &StartState,
    section: TargetSection,
) -> Result<(TargetPose, Option<CornerSet>)> {
    let synthetic_keys =
        section.distance.is_some() || section.inclination_deg.is_some() || section.tag_size.is_some();
    match (section.pose, section.corners) {
        (Some(_), Some(_)) => {
            bail!("target: give either a direct pose or corner poses, not both")
        }
        (Some(pose), None) => {
            ensure!(
                !synthetic_keys,
                "target.pose excludes target.distance / target.inclination_deg / target.tag_size"
            );
            let (position, orientation) = parse_pose(&pose).context("target.pose")?;
            let target = TargetPose::new(position, orientation.to_rotation_matrix().into_inner())
                .context("target.pose")?;
            Ok((target, None))
        }
        (None, Some(list)) => {
            ensure!(
                !synthetic_keys,
                "target.corners excludes target.distance / target.inclination_deg / target.tag_size"
            );
            ensure!(
                list.len() == 4,
                "target.corners must hold exactly 4 poses, got {}",
                list.len()
            );
            let mut positions = [Vector3::zeros(); 4];
            let mut orientations = [UnitQuaternion::identity(); 4];
            for (k, pose) in list.iter().enumerate() {
                let (p, o) = parse_pose(pose).with_context(|| format!("target.corners[{k}]"))?;
                positions[k] = p;
                orientations[k] = o;
            }
            let corners = CornerSet {
                positions,
                orientations,
            };
            let target = perch::average_target_pose(&corners.positions, &corners.orientations)
                .context("averaging target.corners")?;
            Ok((target, Some(corners)))
        }
        (None, None) => {
            let distance = section
                .distance
                .context("target.distance is required without target.pose or target.corners")?;
            ensure!(
                distance.is_finite() && distance > 0.0,
                "target.distance must be positive and finite, got {distance}"
            );
            let inclination_deg = section.inclination_deg.context(
                "target.inclination_deg is required without target.pose or target.corners",
            )?;
            ensure!(
                (0.0..=90.0).contains(&inclination_deg),
                "target.inclination_deg must lie in [0, 90], got {inclination_deg}"
            );
            let tag_size = section.tag_size.unwrap_or(DEFAULT_TAG_SIZE);
            ensure!(
                tag_size.is_finite() && tag_size > 0.0,
                "target.tag_size must be positive and finite, got {tag_size}"
            );
            let corners = synthetic_corners(
                &start.position,
                distance,
                inclination_deg.to_radians(),
                tag_size,
            );
            let target = perch::average_target_pose(&corners.positions, &corners.orientations)
                .context("averaging synthesized corners")?;
            Ok((target, Some(corners)))
        }
    }
}

/// Corner poses of a `tag_size` square on a plane inclined by
/// `inclination` radians, centered `distance` along the plane's normal
/// axis from `start`. Every corner carries the plane's orientation, so
/// averaging them recovers the plane pose exactly.
pub fn synthetic_corners(
    start: &Vector3<f64>,
    distance: f64,
    inclination: f64,
    tag_size: f64,
) -> CornerSet {
    let rotation = perch::inclined_surface_rotation(inclination);
    let s1 = Vector3::from(rotation.column(0));
    let s2 = Vector3::from(rotation.column(1));
    let center = start + distance * Vector3::from(rotation.column(2));
    let half = 0.5 * tag_size;
    let orientation =
        UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(rotation));
    CornerSet {
        positions: [
            center + half * (s1 + s2),
            center + half * (s1 - s2),
            center + half * (-s1 - s2),
            center + half * (-s1 + s2),
        ],
        orientations: [orientation; 4],
    }
}

/// Built-in scenario for one campaign grid cell: hover start at 1 m,
/// a synthesized `inclination_deg` surface `distance` away, and every
/// other knob at its default.
pub fn grid_scenario(inclination_deg: f64, distance: f64, seed: u64) -> Result<Scenario> {
    let start = StartState::hover(Vector3::new(0.0, 0.0, 1.0), 0.0);
    let corners = synthetic_corners(
        &start.position,
        distance,
        inclination_deg.to_radians(),
        DEFAULT_TAG_SIZE,
    );
    let target = perch::average_target_pose(&corners.positions, &corners.orientations)
        .context("averaging grid corners")?;
    let planner = resolve_planner(None, &target)?;
    Ok(Scenario {
        start,
        target,
        corners: Some(corners),
        planner,
        vehicle: VehicleParams::default(),
        gains: ControllerGains::default(),
        noise: None,
        seed,
        initial_horizon: DEFAULT_INITIAL_HORIZON,
        sim_step: sim::DEFAULT_STEP,
    })
}

fn parse_pose(pose: &PoseSection) -> Result<(Vector3<f64>, UnitQuaternion<f64>)> {
    let position = Vector3::from(pose.position);
    ensure!(
        position.iter().all(|v| v.is_finite()),
        "position must be finite"
    );
    let [w, x, y, z] = pose.quaternion;
    let raw = Quaternion::new(w, x, y, z);
    ensure!(
        raw.coords.iter().all(|v| v.is_finite()) && raw.norm() > 1e-9,
        "quaternion must be finite with nonzero norm"
    );
    Ok((position, UnitQuaternion::from_quaternion(raw)))
}

fn resolve_planner(section: Option<PlannerSection>, target: &TargetPose) -> Result<PlannerConfig> {
    let mut cfg = PlannerConfig::default();
    // The terminal heading tracks the resolved surface unless the file
    // pins it explicitly.
    cfg.psi_des = perch::default_heading(target);
    let section = section.unwrap_or_default();
    if let Some(v) = section.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = section.q {
        cfg.q = v;
    }
    if let Some(v) = section.dt {
        cfg.dt = v;
    }
    if let Some(v) = section.t_k {
        cfg.t_k = v;
    }
    if let Some(v) = section.v_min {
        cfg.v_min = v;
    }
    if let Some(v) = section.v_max {
        cfg.v_max = v;
    }
    if let Some(v) = section.tau_min {
        cfg.tau_min = v;
    }
    if let Some(v) = section.tau_max {
        cfg.tau_max = v;
    }
    if let Some(v) = section.poly_order {
        cfg.poly_order = v;
    }
    if let Some(v) = section.cost_order {
        cfg.cost_order = v;
    }
    if let Some(v) = section.time_scale_factor {
        cfg.time_scale_factor = v;
    }
    if let Some(v) = section.max_scale_iters {
        cfg.max_scale_iters = v;
    }
    if let Some(v) = section.psi_des {
        cfg.psi_des = v;
    }
    cfg.validate().context("planner")?;
    Ok(cfg)
}

fn resolve_vehicle(section: Option<VehicleSection>) -> Result<VehicleParams> {
    let mut params = VehicleParams::default();
    let section = section.unwrap_or_default();
    if let Some(v) = section.mass {
        params.mass = v;
    }
    if let Some(d) = section.inertia_diag {
        params.inertia = Matrix3::from_diagonal(&Vector3::from(d));
    }
    if let Some(v) = section.gravity {
        params.gravity = v;
    }
    params.validate().context("vehicle")?;
    Ok(params)
}

fn resolve_gains(section: Option<GainsSection>) -> Result<ControllerGains> {
    let mut gains = ControllerGains::default();
    let section = section.unwrap_or_default();
    if let Some(v) = section.k_x {
        gains.k_x = Vector3::from(v);
    }
    if let Some(v) = section.k_v {
        gains.k_v = Vector3::from(v);
    }
    if let Some(v) = section.k_r {
        gains.k_r = Vector3::from(v);
    }
    if let Some(v) = section.k_omega {
        gains.k_omega = Vector3::from(v);
    }
    gains.validate().context("gains")?;
    Ok(gains)
}

fn resolve_noise(section: Option<NoiseSection>, seed: u64) -> Result<Option<SensorNoise>> {
    let Some(section) = section else {
        return Ok(None);
    };
    let noise = SensorNoise {
        position_std: section.position_std.unwrap_or(0.0),
        velocity_std: section.velocity_std.unwrap_or(0.0),
        attitude_std: section.attitude_std.unwrap_or(0.0),
        seed,
    };
    noise.validate().context("noise")?;
    Ok(Some(noise))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn minimal_file_fills_every_default() {
        let sc = parse_scenario(
            "[target]\ndistance = 1.7\ninclination_deg = 60.0\n",
        )
        .unwrap();
        assert_eq!(sc.start.position, Vector3::new(0.0, 0.0, 1.0));
        assert_eq!(sc.seed, 0);
        assert_eq!(sc.initial_horizon, DEFAULT_INITIAL_HORIZON);
        assert_eq!(sc.sim_step, sim::DEFAULT_STEP);
        assert_eq!(sc.planner, PlannerConfig::default());
        assert!(sc.noise.is_none());
        assert!(sc.corners.is_some());
        // The synthesized plane sits `distance` along its own normal.
        assert_relative_eq!(
            (sc.target.position - sc.start.position).norm(),
            1.7,
            epsilon = 1e-12
        );
        let rotation = perch::inclined_surface_rotation(60f64.to_radians());
        assert_relative_eq!(sc.target.rotation, rotation, epsilon = 1e-9);
    }

    #[test]
    fn unknown_keys_are_rejected_with_their_path() {
        let err = parse_scenario("[target]\ndistance = 1.7\ninclination_deg = 60.0\ntypo = 1\n")
            .unwrap_err();
        assert!(format!("{err:#}").contains("typo"), "{err:#}");
        let err = parse_scenario("[target]\ndistance = 1.7\ninclination_deg = 60.0\n[badsec]\n")
            .unwrap_err();
        assert!(format!("{err:#}").contains("badsec"), "{err:#}");
    }

    #[test]
    fn pose_sources_are_mutually_exclusive() {
        let both = "[target]\npose = { position = [0,0,2], quaternion = [1,0,0,0] }\n\
                    corners = [{ position = [0,0,2], quaternion = [1,0,0,0] }]\n";
        assert!(parse_scenario(both).is_err());
        let mixed = "[target]\ndistance = 1.0\n\
                     pose = { position = [0,0,2], quaternion = [1,0,0,0] }\n";
        assert!(parse_scenario(mixed).is_err());
        let missing = "[target]\ndistance = 1.0\n";
        assert!(parse_scenario(missing).is_err());
    }

    #[test]
    fn direct_pose_skips_corner_averaging() {
        let sc = parse_scenario(
            "[target]\npose = { position = [0.5, 0.0, 2.0], quaternion = [1, 0, 0, 0] }\n",
        )
        .unwrap();
        assert!(sc.corners.is_none());
        assert_eq!(sc.target.position, Vector3::new(0.5, 0.0, 2.0));
        assert_relative_eq!(sc.target.rotation, Matrix3::identity(), epsilon = 1e-12);
    }

    #[test]
    fn four_corners_average_to_their_center() {
        let text = "[target]\n\
            corners = [\n\
              { position = [0.2, 0.2, 2.0], quaternion = [1, 0, 0, 0] },\n\
              { position = [0.2, -0.2, 2.0], quaternion = [-1, 0, 0, 0] },\n\
              { position = [-0.2, -0.2, 2.0], quaternion = [1, 0, 0, 0] },\n\
              { position = [-0.2, 0.2, 2.0], quaternion = [1, 0, 0, 0] },\n\
            ]\n";
        let sc = parse_scenario(text).unwrap();
        assert_relative_eq!(sc.target.position, Vector3::new(0.0, 0.0, 2.0), epsilon = 1e-15);
        assert_relative_eq!(sc.target.rotation, Matrix3::identity(), epsilon = 1e-12);
        let five = text.replace(
            "corners = [\n",
            "corners = [\n  { position = [0.0, 0.0, 2.0], quaternion = [1, 0, 0, 0] },\n",
        );
        assert!(parse_scenario(&five).unwrap_err().to_string().contains("4 poses, got 5"));
    }

    #[test]
    fn overrides_land_in_the_right_fields() {
        let sc = parse_scenario(
            "seed = 7\ninitial_horizon = 0.8\nsim_step = 0.002\n\
             [start]\nposition = [1, 2, 3]\nyaw = 0.5\n\
             [target]\ndistance = 3.0\ninclination_deg = 90.0\ntag_size = 0.2\n\
             [planner]\nalpha = 4.0\ntau_max = 6.0\n\
             [vehicle]\nmass = 0.5\ninertia_diag = [1e-3, 1e-3, 2e-3]\n\
             [gains]\nk_x = [8, 8, 8]\n\
             [noise]\nposition_std = 0.01\n",
        )
        .unwrap();
        assert_eq!(sc.seed, 7);
        assert_eq!(sc.initial_horizon, 0.8);
        assert_eq!(sc.sim_step, 0.002);
        assert_eq!(sc.start.position, Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(sc.start.yaw, 0.5);
        assert_eq!(sc.planner.alpha, 4.0);
        assert_eq!(sc.planner.tau_max, 6.0);
        assert_eq!(sc.planner.q, 0.1);
        assert_eq!(sc.vehicle.mass, 0.5);
        assert_eq!(sc.vehicle.inertia[(2, 2)], 2e-3);
        assert_eq!(sc.gains.k_x, Vector3::new(8.0, 8.0, 8.0));
        assert_eq!(sc.gains.k_v, ControllerGains::default().k_v);
        let noise = sc.noise.unwrap();
        assert_eq!(noise.position_std, 0.01);
        assert_eq!(noise.seed, 7);
        // A 90 degree wall synthesized from distance sits along -x.
        assert_relative_eq!(
            sc.target.position,
            Vector3::new(-2.0, 2.0, 3.0),
            epsilon = 1e-12
        );
    }

    #[test]
    fn invalid_overrides_surface_core_validation() {
        let err = parse_scenario(
            "[target]\ndistance = 1.7\ninclination_deg = 60.0\n[planner]\nq = 1.5\n",
        )
        .unwrap_err();
        assert!(format!("{err:#}").contains("corridor tolerance"), "{err:#}");
        let err = parse_scenario(
            "[target]\ndistance = 1.7\ninclination_deg = 60.0\n[vehicle]\nmass = -1.0\n",
        )
        .unwrap_err();
        assert!(format!("{err:#}").contains("vehicle"), "{err:#}");
    }

    #[test]
    fn synthetic_corners_recover_the_plane_pose() {
        let start = Vector3::new(0.0, 0.0, 1.0);
        let corners = synthetic_corners(&start, 1.7, 60f64.to_radians(), 0.4);
        let target =
            perch::average_target_pose(&corners.positions, &corners.orientations).unwrap();
        let rotation = perch::inclined_surface_rotation(60f64.to_radians());
        let center = start + 1.7 * Vector3::from(rotation.column(2));
        assert_relative_eq!(target.position, center, epsilon = 1e-12);
        assert_relative_eq!(target.rotation, rotation, epsilon = 1e-12);
        // Corners straddle the center by half the tag size in-plane.
        for p in &corners.positions {
            let offset = p - center;
            assert_relative_eq!(offset.dot(&target.s3()), 0.0, epsilon = 1e-12);
            assert_relative_eq!(offset.norm(), 0.2 * 2f64.sqrt(), epsilon = 1e-12);
        }
    }

    #[test]
    fn default_heading_follows_a_rotated_surface() {
        // A wall whose lateral axis points along world -x: the resolved
        // default heading must turn the vehicle to match.
        let yawed = UnitQuaternion::from_euler_angles(0.0, 0.0, core::f64::consts::FRAC_PI_2)
            .to_rotation_matrix()
            .into_inner()
            * perch::inclined_surface_rotation(60f64.to_radians());
        let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(yawed));
        let text = format!(
            "[target]\npose = {{ position = [0, 0, 2], quaternion = [{}, {}, {}, {}] }}\n",
            q.w, q.i, q.j, q.k
        );
        let sc = parse_scenario(&text).unwrap();
        let expected = perch::default_heading(&sc.target);
        assert_eq!(sc.planner.psi_des, expected);
        assert_relative_eq!(expected, core::f64::consts::FRAC_PI_2, epsilon = 1e-9);
    }
}
