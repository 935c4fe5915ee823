//! Local view planning: one constrained PPA-ascent step per actor frame,
//! the baseline planners, and the per-sequence planning loop.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::actor::{build_cuboid, ActorPose2D, ActorSequence, CuboidSpec, Patch, Vec3};
use crate::camera::{backproject, render, CameraIntrinsics};
use crate::cloud::{voxel_downsample, PointCloud};
use crate::error::{Error, Result};
use crate::eval::{chamfer_distance, triangle_coverage};
use crate::mesh::{mesh_to_patches, TriangleMesh};
use crate::ppa::{
    is_front_facing, ppa_constrained, ppa_constrained_gradient, ppa_jacobian, ppa_sum, visible_patches,
    CameraPose,
};
use crate::tracking::ActorEstimator;

/// Slack on both constraints when checking a finished step.
pub const FEASIBILITY_TOL: f64 = 1e-9;
const PROJECTION_BISECTIONS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PlannerKind {
    NoPlan,
    Greedy,
    PpaCuboid,
    PpaMesh,
    EnumCoverage,
    EnumChamfer,
}

impl PlannerKind {
    pub const ALL: [PlannerKind; 6] = [
        PlannerKind::NoPlan,
        PlannerKind::Greedy,
        PlannerKind::PpaCuboid,
        PlannerKind::PpaMesh,
        PlannerKind::EnumCoverage,
        PlannerKind::EnumChamfer,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            PlannerKind::NoPlan => "no_plan",
            PlannerKind::Greedy => "greedy",
            PlannerKind::PpaCuboid => "ppa_cuboid",
            PlannerKind::PpaMesh => "ppa_mesh",
            PlannerKind::EnumCoverage => "enum_coverage",
            PlannerKind::EnumChamfer => "enum_chamfer",
        }
    }
}

impl fmt::Display for PlannerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PlannerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        PlannerKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown planner '{s}'")))
    }
}

/// How the view direction is chosen after a position update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrientationMode {
    /// Aim at the estimated actor center; only the position is optimized.
    LookAt,
    /// Ascend the unconstrained PPA in both position and view direction.
    Free,
}

impl OrientationMode {
    pub fn name(&self) -> &'static str {
        match self {
            OrientationMode::LookAt => "look_at",
            OrientationMode::Free => "free",
        }
    }
}

impl FromStr for OrientationMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "look_at" => Ok(OrientationMode::LookAt),
            "free" => Ok(OrientationMode::Free),
            other => Err(Error::Config(format!("unknown orientation mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannerConfig {
    pub r_safe: f64,
    /// Largest camera displacement per frame, meters.
    pub t_max: f64,
    /// Gradient step scale.
    pub delta_t: f64,
    pub planner_kind: PlannerKind,
    /// Candidates per frame for the enumeration baselines.
    pub enum_samples: usize,
    pub orientation: OrientationMode,
    /// Step halvings tried before giving up on an ascent step.
    pub max_backtracks: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            r_safe: 8.0,
            t_max: 1.0,
            delta_t: 0.5,
            planner_kind: PlannerKind::PpaMesh,
            enum_samples: 64,
            orientation: OrientationMode::LookAt,
            max_backtracks: 8,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if !ok(self.r_safe) || !ok(self.t_max) || !ok(self.delta_t) {
            return Err(Error::Config(format!(
                "r_safe, t_max and delta_t must be positive (got {}, {}, {})",
                self.r_safe, self.t_max, self.delta_t
            )));
        }
        if self.enum_samples == 0 {
            return Err(Error::Config("enum_samples must be at least 1".into()));
        }
        Ok(())
    }

    pub fn with_kind(&self, kind: PlannerKind) -> Self {
        Self {
            planner_kind: kind,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintFlag {
    None,
    StepClamped,
    SafetyProjected,
    Both,
}

impl ConstraintFlag {
    fn from_parts(clamped: bool, projected: bool) -> Self {
        match (clamped, projected) {
            (false, false) => ConstraintFlag::None,
            (true, false) => ConstraintFlag::StepClamped,
            (false, true) => ConstraintFlag::SafetyProjected,
            (true, true) => ConstraintFlag::Both,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ConstraintFlag::None => "none",
            ConstraintFlag::StepClamped => "step_clamped",
            ConstraintFlag::SafetyProjected => "safety_projected",
            ConstraintFlag::Both => "both",
        }
    }
}

impl FromStr for ConstraintFlag {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(ConstraintFlag::None),
            "step_clamped" => Ok(ConstraintFlag::StepClamped),
            "safety_projected" => Ok(ConstraintFlag::SafetyProjected),
            "both" => Ok(ConstraintFlag::Both),
            other => Err(Error::Argument(format!("unknown constraint flag '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanStep {
    pub frame_index: usize,
    pub t: f64,
    pub camera_before: CameraPose,
    pub camera_after: CameraPose,
    pub ppa_before: f64,
    pub ppa_after: f64,
    pub constraint_active: ConstraintFlag,
    /// Actor pose the planner was given.
    pub actor_estimate: ActorPose2D,
    pub actor_truth: ActorPose2D,
}

impl PlanStep {
    pub fn step_length(&self) -> f64 {
        (self.camera_after.position - self.camera_before.position).norm()
    }

    /// Distance from the executed camera to the estimated actor ground point.
    pub fn safety_distance(&self) -> f64 {
        (self.camera_after.position - self.actor_estimate.ground_point()).norm()
    }

    pub fn is_feasible(&self, config: &PlannerConfig) -> bool {
        self.step_length() <= config.t_max + FEASIBILITY_TOL
            && self.safety_distance() >= config.r_safe - FEASIBILITY_TOL
            && self.camera_after.position.z >= 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanRun {
    pub config: PlannerConfig,
    pub steps: Vec<PlanStep>,
    pub seed: u64,
}

fn on_or_outside(p: &Vec3, ground: &Vec3, r_safe: f64) -> bool {
    p.z >= 0.0 && (p - ground).norm() >= r_safe
}

/// Radial projection onto the safety hemisphere around `ground`.
fn project_to_hemisphere(p: &Vec3, ground: &Vec3, r_safe: f64, fallback: &Vec3) -> (Vec3, bool) {
    let mut q = *p;
    let mut moved = false;
    if q.z < 0.0 {
        q.z = 0.0;
        moved = true;
    }
    let rel = q - ground;
    let d = rel.norm();
    if d < r_safe {
        let dir = if d > 1e-12 {
            rel / d
        } else {
            let f = fallback - ground;
            if f.norm() > 1e-12 { f.normalize() } else { Vec3::x() }
        };
        q = ground + dir * r_safe;
        q.z = q.z.max(0.0);
        moved = true;
    }
    (q, moved)
}

/// Clamps the displacement to `t_max`, then projects radially onto the
/// safety hemisphere of radius `r_safe` around the actor ground point. When
/// the projection lengthens the step past `t_max`, the largest fraction of
/// the clamped move whose projection still fits is used instead.
pub fn constrain_step(current: &Vec3, proposed: &Vec3, actor_pos: &Vec3, config: &PlannerConfig) -> (Vec3, ConstraintFlag) {
    let ground = Vec3::new(actor_pos.x, actor_pos.y, 0.0);
    let mut target = *proposed;
    let disp = proposed - current;
    let len = disp.norm();
    let clamped = len > config.t_max;
    if clamped {
        target = current + disp * (config.t_max / len);
    }
    if on_or_outside(&target, &ground, config.r_safe) {
        return (target, ConstraintFlag::from_parts(clamped, false));
    }
    let (projected, _) = project_to_hemisphere(&target, &ground, config.r_safe, current);
    if (projected - current).norm() <= config.t_max {
        return (projected, ConstraintFlag::from_parts(clamped, true));
    }
    // shrink the move along the segment until its projection fits the step
    let at = |s: f64| project_to_hemisphere(&(current + (target - current) * s), &ground, config.r_safe, current).0;
    let (mut lo, mut hi) = (0.0, 1.0);
    let start = at(0.0);
    if (start - current).norm() > config.t_max {
        // the camera is deeper inside the hemisphere than one step; safety wins
        return (start, ConstraintFlag::Both);
    }
    for _ in 0..PROJECTION_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if (at(mid) - current).norm() <= config.t_max {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (at(lo), ConstraintFlag::Both)
}

/// Sum of look-at PPA over the patches facing `position`.
pub fn look_at_objective(position: &Vec3, patches: &[Patch]) -> f64 {
    patches
        .iter()
        .filter(|p| is_front_facing(position, p))
        .filter_map(|p| ppa_constrained(position, p).ok())
        .sum()
}

fn look_at_gradient(position: &Vec3, patches: &[Patch]) -> Vec3 {
    let facing: Vec<Patch> = patches.iter().filter(|p| is_front_facing(position, p)).copied().collect();
    ppa_constrained_gradient(position, &facing).unwrap_or_else(|_| Vec3::zeros())
}

/// Mean patch centroid; the look-at target for mesh patches.
pub fn patch_center(patches: &[Patch]) -> Vec3 {
    patches.iter().map(|p| p.centroid).sum::<Vec3>() / patches.len() as f64
}

/// Objective value of a pose under the configured orientation mode.
pub fn objective(camera: &CameraPose, patches: &[Patch], intr: &CameraIntrinsics, mode: OrientationMode) -> f64 {
    match mode {
        OrientationMode::LookAt => look_at_objective(&camera.position, patches),
        OrientationMode::Free => ppa_sum(camera, intr, patches),
    }
}

/// One constrained gradient-ascent step on the PPA of `patches`.
///
/// In look-at mode the new view direction aims at `aim`; in free mode it
/// follows the tangent-space gradient. The step scale is halved up to
/// `max_backtracks` times while the objective would drop; if it still
/// drops the camera stays put.
pub fn local_vp_step(
    camera: &CameraPose,
    patches: &[Patch],
    actor_pos: &Vec3,
    aim: &Vec3,
    intr: &CameraIntrinsics,
    config: &PlannerConfig,
) -> PlanStep {
    let mode = config.orientation;
    let before = objective(camera, patches, intr, mode);
    // a camera left inside a moved hemisphere is pushed back out even when
    // no ascent step is taken
    let (base, base_flag) = constrain_step(&camera.position, &camera.position, actor_pos, config);
    let hold = |ppa: f64, reaim: bool| {
        let camera_after = if reaim && mode == OrientationMode::LookAt {
            CameraPose::look_at(base, *aim)
        } else if base != camera.position {
            CameraPose {
                position: base,
                view_dir: camera.view_dir,
            }
        } else {
            *camera
        };
        let ppa_after = if camera_after == *camera {
            ppa
        } else {
            objective(&camera_after, patches, intr, mode)
        };
        PlanStep {
            frame_index: 0,
            t: 0.0,
            camera_before: *camera,
            camera_after,
            ppa_before: ppa,
            ppa_after,
            constraint_active: base_flag,
            actor_estimate: ActorPose2D::new(actor_pos.x, actor_pos.y, 0.0),
            actor_truth: ActorPose2D::new(actor_pos.x, actor_pos.y, 0.0),
        }
    };

    let (d_pos, d_view) = match mode {
        OrientationMode::LookAt => {
            if !patches.iter().any(|p| is_front_facing(&camera.position, p)) {
                return hold(before, false);
            }
            (look_at_gradient(&camera.position, patches), Vec3::zeros())
        }
        OrientationMode::Free => {
            let vis = visible_patches(camera, intr, patches);
            if vis.is_empty() {
                return hold(before, false);
            }
            match ppa_jacobian(camera, &vis) {
                Ok(g) => (g.d_position, g.d_view_dir),
                Err(_) => return hold(before, false),
            }
        }
    };

    let mut scale = config.delta_t;
    for _ in 0..=config.max_backtracks {
        let proposed = camera.position + d_pos * scale;
        let (pos, flag) = constrain_step(&camera.position, &proposed, actor_pos, config);
        let next = match mode {
            OrientationMode::LookAt => CameraPose::look_at(pos, *aim),
            OrientationMode::Free => {
                let dir = camera.view_dir + d_view * scale;
                CameraPose::new(pos, dir).unwrap_or(CameraPose {
                    position: pos,
                    view_dir: camera.view_dir,
                })
            }
        };
        let after = objective(&next, patches, intr, mode);
        if after >= before {
            let mut step = hold(before, false);
            step.camera_after = next;
            step.ppa_after = after;
            step.constraint_active = flag;
            return step;
        }
        scale *= 0.5;
    }
    hold(before, true)
}

/// Up to `n` positions drawn uniformly from the feasible set: the ball of
/// radius `t_max` around `current`, outside the safety hemisphere.
pub fn sample_feasible_ball(current: &Vec3, actor_pos: &Vec3, config: &PlannerConfig, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec3> {
    let ground = Vec3::new(actor_pos.x, actor_pos.y, 0.0);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n * 100 {
        if out.len() == n {
            break;
        }
        let v = Vec3::new(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0));
        if v.norm_squared() > 1.0 {
            continue;
        }
        let p = current + v * config.t_max;
        if on_or_outside(&p, &ground, config.r_safe) {
            out.push(p);
        }
    }
    out
}

/// Ground truth handed to the enumeration baselines: the body-frame mesh
/// and surface sample, and how the reconstruction merges frames. A
/// candidate is scored by the metric of the merged window it would join,
/// computed exactly as the evaluation does.
pub struct EnumOracle<'a> {
    pub mesh: &'a TriangleMesh,
    pub surface: &'a PointCloud,
    pub window_frames: usize,
    pub voxel: f64,
    pub prism_height: f64,
}

impl EnumOracle<'_> {
    fn score(&self, kind: PlannerKind, window: &PointCloud, candidate: &PointCloud) -> Result<f64> {
        let mut union = window.clone();
        union.extend(candidate);
        if union.is_empty() {
            return Ok(f64::NEG_INFINITY);
        }
        let merged = voxel_downsample(&union, self.voxel)?;
        Ok(match kind {
            PlannerKind::EnumChamfer => -chamfer_distance(&merged, self.surface)?.mean_mm,
            _ => triangle_coverage(&merged, self.mesh, self.prism_height)?.coverage_ratio,
        })
    }
}

/// Body-frame cloud seen from `camera` with the actor at its true pose.
fn body_view(mesh: &TriangleMesh, truth: &ActorPose2D, camera: &CameraPose, intr: &CameraIntrinsics) -> PointCloud {
    let view = render(&mesh.transformed(truth), camera, intr);
    backproject(&view).map(|p| truth.inverse_transform_point(p))
}

/// Picks the candidate whose view best improves the current merge window.
/// Candidate 0 is the current position (projected if needed); ties keep
/// the lower index. Returns the pose, its flag and its body-frame cloud.
#[allow(clippy::too_many_arguments)]
fn enumerate_step(
    camera: &CameraPose,
    actor_pos: &Vec3,
    aim: &Vec3,
    truth: &ActorPose2D,
    intr: &CameraIntrinsics,
    config: &PlannerConfig,
    oracle: &EnumOracle<'_>,
    window: &PointCloud,
    rng: &mut ChaCha8Rng,
) -> Result<(CameraPose, ConstraintFlag, PointCloud)> {
    let (first, first_flag) = constrain_step(&camera.position, &camera.position, actor_pos, config);
    let mut candidates = Vec::with_capacity(config.enum_samples + 1);
    candidates.push(first);
    candidates.extend(sample_feasible_ball(&camera.position, actor_pos, config, config.enum_samples, rng));
    let kind = config.planner_kind;
    let scored: Vec<(f64, PointCloud)> = candidates
        .par_iter()
        .map(|p| {
            let cloud = body_view(oracle.mesh, truth, &CameraPose::look_at(*p, *aim), intr);
            Ok((oracle.score(kind, window, &cloud)?, cloud))
        })
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, (s, _)) in scored.iter().enumerate() {
        if *s > scored[best].0 {
            best = i;
        }
    }
    let flag = if best == 0 { first_flag } else { ConstraintFlag::None };
    let cloud = scored.into_iter().nth(best).map(|(_, c)| c).unwrap_or_default();
    Ok((CameraPose::look_at(candidates[best], *aim), flag, cloud))
}

/// Moves up to `t_max` straight at the actor, stopping on the safety
/// hemisphere, and keeps looking at the actor.
fn greedy_step(camera: &CameraPose, actor_pos: &Vec3, aim: &Vec3, config: &PlannerConfig) -> (CameraPose, ConstraintFlag) {
    let to = aim - camera.position;
    let proposed = if to.norm() > 1e-12 {
        camera.position + to.normalize() * config.t_max
    } else {
        camera.position
    };
    let (pos, flag) = constrain_step(&camera.position, &proposed, actor_pos, config);
    (CameraPose::look_at(pos, *aim), flag)
}

/// Runs the configured planner over every frame of `seq`.
///
/// The enumeration baselines need `oracle`; `rng` feeds their sampling.
#[allow(clippy::too_many_arguments)]
pub fn plan_sequence(
    seq: &ActorSequence,
    initial: CameraPose,
    config: &PlannerConfig,
    cuboid: &CuboidSpec,
    intr: &CameraIntrinsics,
    estimator: &mut dyn ActorEstimator,
    oracle: Option<&EnumOracle<'_>>,
    mut rng: ChaCha8Rng,
    seed: u64,
) -> Result<PlanRun> {
    config.validate()?;
    if seq.is_empty() {
        return Err(Error::Config("actor sequence is empty".into()));
    }
    let first = seq.frames()[0].pose.ground_point();
    if !on_or_outside(&initial.position, &first, config.r_safe) {
        return Err(Error::Config(format!(
            "initial camera {:?} lies inside the safety hemisphere (r_safe = {} m)",
            initial.position, config.r_safe
        )));
    }
    let enumerating = matches!(config.planner_kind, PlannerKind::EnumCoverage | PlannerKind::EnumChamfer);
    if enumerating && oracle.is_none_or(|o| o.window_frames == 0) {
        return Err(Error::Argument("enumeration baselines need a ground-truth oracle".into()));
    }
    let mut window = PointCloud::default();

    let mut camera = initial;
    let mut steps = Vec::with_capacity(seq.len());
    for (k, frame) in seq.frames().iter().enumerate() {
        let truth = frame.pose;
        let est = estimator.estimate(frame.t, &truth)?;
        let actor_pos = est.ground_point();
        let est_mesh_patches = || mesh_to_patches(&frame.mesh.transformed(&est));
        let mut step = match config.planner_kind {
            PlannerKind::NoPlan => {
                let patches = est_mesh_patches();
                let v = objective(&camera, &patches, intr, config.orientation);
                PlanStep {
                    frame_index: k,
                    t: frame.t,
                    camera_before: camera,
                    camera_after: camera,
                    ppa_before: v,
                    ppa_after: v,
                    constraint_active: ConstraintFlag::None,
                    actor_estimate: est,
                    actor_truth: truth,
                }
            }
            PlannerKind::PpaCuboid | PlannerKind::PpaMesh => {
                let (patches, aim) = if config.planner_kind == PlannerKind::PpaCuboid {
                    (build_cuboid(&est, cuboid)?, cuboid.center(&est))
                } else {
                    let p = est_mesh_patches();
                    let c = patch_center(&p);
                    (p, c)
                };
                local_vp_step(&camera, &patches, &actor_pos, &aim, intr, config)
            }
            PlannerKind::Greedy | PlannerKind::EnumCoverage | PlannerKind::EnumChamfer => {
                let aim = cuboid.center(&est);
                let (next, flag) = match oracle.filter(|_| enumerating) {
                    None => greedy_step(&camera, &actor_pos, &aim, config),
                    Some(o) => {
                        if k % o.window_frames == 0 {
                            window = PointCloud::default();
                        }
                        let (pose, flag, cloud) =
                            enumerate_step(&camera, &actor_pos, &aim, &truth, intr, config, o, &window, &mut rng)?;
                        window.extend(&cloud);
                        (pose, flag)
                    }
                };
                let patches = est_mesh_patches();
                PlanStep {
                    frame_index: k,
                    t: frame.t,
                    camera_before: camera,
                    camera_after: next,
                    ppa_before: objective(&camera, &patches, intr, config.orientation),
                    ppa_after: objective(&next, &patches, intr, config.orientation),
                    constraint_active: flag,
                    actor_estimate: est,
                    actor_truth: truth,
                }
            }
        };
        step.frame_index = k;
        step.t = frame.t;
        step.actor_estimate = est;
        step.actor_truth = truth;
        camera = step.camera_after;
        steps.push(step);
    }
    Ok(PlanRun {
        config: *config,
        steps,
        seed,
    })
}

const CSV_COLUMNS: &str = "frame,t,before_x,before_y,before_z,before_dx,before_dy,before_dz,\
after_x,after_y,after_z,after_dx,after_dy,after_dz,ppa_before,ppa_after,constraint,\
est_x,est_y,est_yaw,true_x,true_y,true_yaw";

impl PlanRun {
    pub fn all_feasible(&self) -> bool {
        self.steps.iter().all(|s| s.is_feasible(&self.config))
    }

    pub fn to_csv(&self) -> String {
        let c = &self.config;
        let mut s = format!(
            "# planner={} orientation={} r_safe_m={:?} t_max_m={:?} delta_t={:?} enum_samples={} max_backtracks={} seed={}\n{CSV_COLUMNS}\n",
            c.planner_kind,
            c.orientation.name(),
            c.r_safe,
            c.t_max,
            c.delta_t,
            c.enum_samples,
            c.max_backtracks,
            self.seed
        );
        for st in &self.steps {
            let (b, a) = (&st.camera_before, &st.camera_after);
            let (e, t) = (&st.actor_estimate, &st.actor_truth);
            let _ = writeln!(
                s,
                "{},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{},{:?},{:?},{:?},{:?},{:?},{:?}",
                st.frame_index,
                st.t,
                b.position.x,
                b.position.y,
                b.position.z,
                b.view_dir.x,
                b.view_dir.y,
                b.view_dir.z,
                a.position.x,
                a.position.y,
                a.position.z,
                a.view_dir.x,
                a.view_dir.y,
                a.view_dir.z,
                st.ppa_before,
                st.ppa_after,
                st.constraint_active.name(),
                e.x,
                e.y,
                e.yaw,
                t.x,
                t.y,
                t.yaw
            );
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Parses the output of [`PlanRun::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |m: String| Error::Config(format!("malformed plan CSV: {m}"));
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
        let meta = header.strip_prefix("# ").ok_or_else(|| bad("missing metadata line".into()))?;
        let mut config = PlannerConfig::default();
        let mut seed = 0;
        for kv in meta.split_whitespace() {
            let (k, v) = kv.split_once('=').ok_or_else(|| bad(format!("bad field '{kv}'")))?;
            let num = |v: &str| v.parse::<f64>().map_err(|e| bad(format!("{k}: {e}")));
            let int = |v: &str| v.parse::<usize>().map_err(|e| bad(format!("{k}: {e}")));
            match k {
                "planner" => config.planner_kind = v.parse()?,
                "orientation" => config.orientation = v.parse()?,
                "r_safe_m" => config.r_safe = num(v)?,
                "t_max_m" => config.t_max = num(v)?,
                "delta_t" => config.delta_t = num(v)?,
                "enum_samples" => config.enum_samples = int(v)?,
                "max_backtracks" => config.max_backtracks = int(v)?,
                "seed" => seed = v.parse().map_err(|e| bad(format!("seed: {e}")))?,
                _ => return Err(bad(format!("unknown field '{k}'"))),
            }
        }
        if lines.next() != Some(CSV_COLUMNS) {
            return Err(bad("unexpected column header".into()));
        }
        let mut steps = Vec::new();
        for (n, line) in lines.enumerate() {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 23 {
                return Err(bad(format!("row {n} has {} fields", f.len())));
            }
            let x = |i: usize| f[i].parse::<f64>().map_err(|e| bad(format!("row {n} field {i}: {e}")));
            let v3 = |i: usize| -> Result<Vec3> { Ok(Vec3::new(x(i)?, x(i + 1)?, x(i + 2)?)) };
            steps.push(PlanStep {
                frame_index: f[0].parse().map_err(|e| bad(format!("row {n}: {e}")))?,
                t: x(1)?,
                camera_before: CameraPose {
                    position: v3(2)?,
                    view_dir: v3(5)?,
                },
                camera_after: CameraPose {
                    position: v3(8)?,
                    view_dir: v3(11)?,
                },
                ppa_before: x(14)?,
                ppa_after: x(15)?,
                constraint_active: f[16].parse()?,
                actor_estimate: ActorPose2D {
                    x: x(17)?,
                    y: x(18)?,
                    yaw: x(19)?,
                },
                actor_truth: ActorPose2D {
                    x: x(20)?,
                    y: x(21)?,
                    yaw: x(22)?,
                },
            });
        }
        Ok(Self { config, steps, seed })
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }
}
