//! End-to-end pipelines behind the command-line tool: the PPA correlation
//! study, planner comparison with reconstruction metrics, the multi-patch
//! tour, and replay of recorded runs. All writers produce deterministic text.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::actor::{build_cuboid, ActorSequence, Vec3};
use crate::camera::{backproject, render, sample_view_sphere, CameraFrame, CameraIntrinsics};
use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::eval::{
    chamfer_distance, run_correlation_study, summarize_correlation, triangle_coverage, CorrelationRecord,
    CorrelationSummary,
};
use crate::mesh::TriangleMesh;
use crate::planner::{plan_sequence, EnumOracle, PlanRun, PlannerKind};
use crate::ppa::CameraPose;
use crate::recon::{merge_frames, Frame, IcpParams};
use crate::scenario::Scenario;
use crate::seeds;
use crate::tracking::{ActorEstimator, GroundTruthEstimator, KalmanEstimator};
use crate::tspn::{build_neighborhoods, satisfies_constraints, solve_tour, Neighborhood, Tour};

/// Scenario with its mesh loaded and its sequence built.
pub struct Scene {
    pub scenario: Scenario,
    pub mesh: Arc<TriangleMesh>,
    pub sequence: ActorSequence,
    pub intrinsics: CameraIntrinsics,
}

impl Scene {
    pub fn new(scenario: Scenario) -> Result<Self> {
        let mesh = Arc::new(scenario.mesh()?);
        let sequence = scenario.sequence(Arc::clone(&mesh))?;
        let intrinsics = scenario.intrinsics()?;
        Ok(Self {
            scenario,
            mesh,
            sequence,
            intrinsics,
        })
    }

    /// Area-weighted sample of the body-frame mesh surface.
    pub fn surface_sample(&self) -> PointCloud {
        let mut rng = seeds::stream(self.scenario.seed, "surface");
        PointCloud::new(self.mesh.sample_surface(self.scenario.surface_samples, &mut rng))
    }
}

// ---------------------------------------------------------------- correlate

pub struct CorrelationOutput {
    pub records: Vec<CorrelationRecord>,
    pub summary: CorrelationSummary,
}

/// Views on the scenario's sphere grid around the actor center at frame 0.
pub fn correlation_views(scene: &Scene) -> Result<Vec<CameraPose>> {
    let s = &scene.scenario;
    let pose = scene.sequence.frames()[0].pose;
    let center = s.cuboid()?.center(&pose);
    sample_view_sphere(&center, &s.view_radii_m, s.view_polar_steps, s.view_azimuth_steps)
}

pub fn run_correlation(scene: &Scene) -> Result<CorrelationOutput> {
    let frame = &scene.sequence.frames()[0];
    let mesh = frame.mesh.transformed(&frame.pose);
    let cuboid = build_cuboid(&frame.pose, &scene.scenario.cuboid()?)?;
    let views = correlation_views(scene)?;
    let records = run_correlation_study(&mesh, &views, &scene.intrinsics, &cuboid)?;
    let summary = summarize_correlation(&records);
    Ok(CorrelationOutput { records, summary })
}

pub fn correlation_csv(records: &[CorrelationRecord]) -> String {
    let mut s = String::from("view,cam_x,cam_y,cam_z,ppa_mesh,ppa_cuboid,coverage_ratio,pixels_per_triangle\n");
    for (i, r) in records.iter().enumerate() {
        let p = r.view.position;
        let _ = writeln!(
            s,
            "{i},{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
            p.x, p.y, p.z, r.ppa_mesh, r.ppa_cuboid, r.coverage_ratio, r.pixels_per_triangle
        );
    }
    s
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".into(), |x| format!("{x:.6}"))
}

pub fn correlation_summary_line(summary: &CorrelationSummary) -> String {
    format!(
        "views={} spearman_ppa_vs_pixels_per_triangle={} spearman_ppa_vs_coverage={} spearman_ppa_mesh_vs_cuboid={}",
        summary.views,
        fmt_opt(summary.ppa_vs_pixels_per_triangle),
        fmt_opt(summary.ppa_vs_coverage),
        fmt_opt(summary.ppa_mesh_vs_cuboid)
    )
}

// --------------------------------------------------------------------- plan

/// Reconstruction quality of one run, averaged over merge windows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconstructionMetrics {
    pub coverage_pct: f64,
    pub chamfer_mm: f64,
    pub windows: usize,
    /// Windows in which the actor was not seen at all (coverage 0, no Chamfer term).
    pub empty_windows: usize,
}

impl ReconstructionMetrics {
    /// Mean over several runs, weighting each run equally.
    pub fn mean(all: &[ReconstructionMetrics]) -> Self {
        let n = all.len() as f64;
        let chamfer: Vec<f64> = all.iter().map(|m| m.chamfer_mm).filter(|c| c.is_finite()).collect();
        Self {
            coverage_pct: all.iter().map(|m| m.coverage_pct).sum::<f64>() / n,
            chamfer_mm: if chamfer.is_empty() {
                f64::NAN
            } else {
                chamfer.iter().sum::<f64>() / chamfer.len() as f64
            },
            windows: all.iter().map(|m| m.windows).sum(),
            empty_windows: all.iter().map(|m| m.empty_windows).sum(),
        }
    }
}

/// Renders the true actor from every executed camera, expresses each view
/// in the actor body frame, merges consecutive windows and scores every
/// merged cloud against the body-frame mesh. Also returns the union of the
/// merged windows.
pub fn evaluate_run(scene: &Scene, run: &PlanRun, surface: &PointCloud) -> Result<(ReconstructionMetrics, PointCloud)> {
    let s = &scene.scenario;
    let frames = scene.sequence.frames();
    if run.steps.len() != frames.len() {
        return Err(Error::Argument(format!(
            "run has {} steps but the sequence has {} frames",
            run.steps.len(),
            frames.len()
        )));
    }
    let body_frames: Vec<Frame> = run
        .steps
        .iter()
        .zip(frames)
        .map(|(step, frame)| {
            let world_mesh = frame.mesh.transformed(&frame.pose);
            let view = render(&world_mesh, &step.camera_after, &scene.intrinsics);
            let body_pose = CameraPose {
                position: frame.pose.inverse_transform_point(&step.camera_after.position),
                view_dir: frame.pose.inverse_transform_vector(&step.camera_after.view_dir),
            };
            let cam = CameraFrame::new(&body_pose);
            let cloud = backproject(&view).map(|p| cam.to_camera(&frame.pose.inverse_transform_point(p)));
            Frame { cloud, pose: body_pose }
        })
        .collect();

    let icp = IcpParams::default();
    let mut coverage = Vec::new();
    let mut chamfer = Vec::new();
    let mut empty = 0;
    let mut union = PointCloud::default();
    for window in body_frames.chunks(s.merge_window_frames) {
        let merged = merge_frames(window, s.use_icp, s.voxel_m, &icp)?;
        if merged.is_empty() {
            coverage.push(0.0);
            empty += 1;
            continue;
        }
        coverage.push(100.0 * triangle_coverage(&merged, &scene.mesh, s.prism_height_m)?.coverage_ratio);
        chamfer.push(chamfer_distance(&merged, surface)?.mean_mm);
        union.extend(&merged);
    }
    let metrics = ReconstructionMetrics {
        coverage_pct: coverage.iter().sum::<f64>() / coverage.len() as f64,
        chamfer_mm: if chamfer.is_empty() {
            f64::NAN
        } else {
            chamfer.iter().sum::<f64>() / chamfer.len() as f64
        },
        windows: coverage.len(),
        empty_windows: empty,
    };
    Ok((metrics, union))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub pos_std: f64,
    pub yaw_std: f64,
}

const ORACLE_SURFACE_STRIDE: usize = 5;

/// Runs of one planner from every initial camera, with their metrics.
pub struct PlannerResult {
    pub kind: PlannerKind,
    pub noisy: bool,
    pub runs: Vec<PlanRun>,
    pub per_run: Vec<ReconstructionMetrics>,
    pub metrics: ReconstructionMetrics,
    pub merged: PointCloud,
}

fn estimator(scene: &Scene, noise: Option<NoiseSpec>, start: usize) -> Result<Box<dyn ActorEstimator>> {
    Ok(match noise {
        None => Box::new(GroundTruthEstimator::default()),
        // every planner sees the same noise draws from a given start
        Some(n) => Box::new(KalmanEstimator::new(
            n.pos_std,
            n.yaw_std,
            scene.scenario.kf_accel_noise_mps2,
            seeds::indexed_stream(scene.scenario.seed, "tracking", start as u64),
        )?),
    })
}

/// Plans with `kind` from every initial camera and evaluates each run.
pub fn run_planner(scene: &Scene, kind: PlannerKind, noise: Option<NoiseSpec>, surface: &PointCloud) -> Result<PlannerResult> {
    let s = &scene.scenario;
    let config = s.planner_config(kind)?;
    let cuboid = s.cuboid()?;
    // the Chamfer oracle scores against a strided subsample to bound its cost
    let oracle_surface = PointCloud::new(surface.points.iter().step_by(ORACLE_SURFACE_STRIDE).copied().collect());
    let oracle = EnumOracle {
        mesh: &scene.mesh,
        surface: &oracle_surface,
        window_frames: s.merge_window_frames,
        voxel: s.voxel_m,
        prism_height: s.prism_height_m,
    };
    let target = cuboid.center(&scene.sequence.frames()[0].pose);

    let mut runs = Vec::new();
    let mut per_run = Vec::new();
    let mut merged = PointCloud::default();
    for (i, start) in s.initial_cameras().into_iter().enumerate() {
        let mut est = estimator(scene, noise, i)?;
        let rng = seeds::indexed_stream(s.seed, &format!("planner-{kind}"), i as u64);
        let run = plan_sequence(
            &scene.sequence,
            CameraPose::look_at(start, target),
            &config,
            &cuboid,
            &scene.intrinsics,
            est.as_mut(),
            Some(&oracle),
            rng,
            s.seed,
        )?;
        let (m, cloud) = evaluate_run(scene, &run, surface)?;
        if i == 0 {
            merged = cloud;
        }
        runs.push(run);
        per_run.push(m);
    }
    Ok(PlannerResult {
        kind,
        noisy: noise.is_some(),
        metrics: ReconstructionMetrics::mean(&per_run),
        runs,
        per_run,
        merged,
    })
}

/// Header echoed at the top of every metrics table.
pub fn plan_header(scene: &Scene) -> String {
    let s = &scene.scenario;
    format!(
        "# r_safe_m={:?} t_max_m={:?} delta_t={:?} frames={} initial_cameras={} resolution={}x{} seed={} noise_pos_std_m={:?} noise_yaw_std_rad={:?}",
        s.r_safe_m,
        s.t_max_m,
        s.delta_t,
        scene.sequence.len(),
        s.initial_cameras_m.len(),
        s.image_width_px,
        s.image_height_px,
        s.seed,
        s.noise_pos_std_m,
        s.noise_yaw_std_rad
    )
}

/// One row per (planner, noise setting): coverage % and Chamfer mm.
pub fn metrics_table(scene: &Scene, results: &[PlannerResult]) -> String {
    let mut s = plan_header(scene);
    s.push_str("\nplanner,noise,coverage_pct,chamfer_mm,windows,empty_windows\n");
    for r in results {
        let _ = writeln!(
            s,
            "{},{},{:.4},{:.4},{},{}",
            r.kind,
            if r.noisy { "noisy" } else { "clean" },
            r.metrics.coverage_pct,
            r.metrics.chamfer_mm,
            r.metrics.windows,
            r.metrics.empty_windows
        );
    }
    s
}

// --------------------------------------------------------------------- tour

pub struct TourOutput {
    pub neighborhoods: Vec<Neighborhood>,
    pub tour: Tour,
    /// True when every stop re-validates against its patch's constraints.
    pub valid: bool,
}

/// Tour over the cuboid faces of the actor at frame 0.
pub fn run_tour(scene: &Scene, c_threshold: f64) -> Result<TourOutput> {
    let s = &scene.scenario;
    let pose = scene.sequence.frames()[0].pose;
    let patches = build_cuboid(&pose, &s.cuboid()?)?;
    let hoods = build_neighborhoods(&patches, c_threshold, s.r_safe_m, s.tour_samples, s.seed)?;
    let tour = solve_tour(&hoods, s.seed)?;
    let valid = tour
        .order
        .iter()
        .zip(&tour.viewpoints)
        .all(|(&i, v)| satisfies_constraints(v, &patches[hoods[i].patch_index], c_threshold, s.r_safe_m));
    Ok(TourOutput {
        neighborhoods: hoods,
        tour,
        valid,
    })
}

// ------------------------------------------------------------------- replay

/// Waypoints parsed from either a plan CSV or a tour CSV.
pub enum Recording {
    Plan(PlanRun),
    Tour(Vec<Vec3>),
}

pub fn parse_recording(text: &str) -> Result<Recording> {
    if text.starts_with("# planner=") {
        return PlanRun::from_csv(text).map(Recording::Plan);
    }
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    let cols: Vec<&str> = header.split(',').collect();
    let pos = |name: &str| cols.iter().position(|c| *c == name);
    let (Some(ix), Some(iy), Some(iz)) = (pos("x"), pos("y"), pos("z")) else {
        return Err(Error::Config("recording is neither a plan CSV nor a waypoint CSV with x,y,z columns".into()));
    };
    let mut points = Vec::new();
    for (n, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        let get = |i: usize| -> Result<f64> {
            f.get(i)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Config(format!("waypoint row {n}: bad number in column {i}")))
        };
        points.push(Vec3::new(get(ix)?, get(iy)?, get(iz)?));
    }
    Ok(Recording::Tour(points))
}

/// Re-renders a recording. Plan runs are re-scored with [`evaluate_run`];
/// tour waypoints are rendered against the frame-0 actor, aimed at its
/// center, and scored as a single union.
pub fn replay(scene: &Scene, recording: &Recording, surface: &PointCloud) -> Result<(ReconstructionMetrics, PointCloud)> {
    match recording {
        Recording::Plan(run) => evaluate_run(scene, run, surface),
        Recording::Tour(points) => {
            if points.is_empty() {
                return Err(Error::Config("waypoint list is empty".into()));
            }
            let frame = &scene.sequence.frames()[0];
            let world_mesh = frame.mesh.transformed(&frame.pose);
            let center = scene.scenario.cuboid()?.center(&frame.pose);
            let mut cloud = PointCloud::default();
            for p in points {
                let view = render(&world_mesh, &CameraPose::look_at(*p, center), &scene.intrinsics);
                cloud.extend(&backproject(&view).map(|q| frame.pose.inverse_transform_point(q)));
            }
            let merged = crate::cloud::voxel_downsample(&cloud, scene.scenario.voxel_m)?;
            if merged.is_empty() {
                return Ok((
                    ReconstructionMetrics {
                        coverage_pct: 0.0,
                        chamfer_mm: f64::NAN,
                        windows: 1,
                        empty_windows: 1,
                    },
                    merged,
                ));
            }
            let m = ReconstructionMetrics {
                coverage_pct: 100.0 * triangle_coverage(&merged, &scene.mesh, scene.scenario.prism_height_m)?.coverage_ratio,
                chamfer_mm: chamfer_distance(&merged, surface)?.mean_mm,
                windows: 1,
                empty_windows: 0,
            };
            Ok((m, merged))
        }
    }
}
