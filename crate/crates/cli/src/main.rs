//! Command-line driver for the PPA view-planning experiments.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ppaview::experiment::{
    correlation_csv, correlation_summary_line, correlation_views, metrics_table, parse_recording, plan_header, replay,
    run_correlation, run_planner, run_tour, NoiseSpec, Recording, Scene,
};
use ppaview::{render, Error, PlannerKind, Scenario};

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "ppaview", version, about = "View planning for capturing a moving actor with a drone camera")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Correlate PPA with rendered reconstruction quality over a sphere of views.
    Correlate(Common),
    /// Run planners over the actor sequence and score their reconstructions.
    Plan {
        #[command(flatten)]
        common: Common,
        /// Comma-separated planner names; defaults to the scenario's list.
        #[arg(long, value_delimiter = ',')]
        planners: Option<Vec<PlannerKind>>,
        /// Actor position noise std (m) for the noisy runs.
        #[arg(long)]
        noise_pos_std: Option<f64>,
        /// Actor yaw noise std (rad) for the noisy runs.
        #[arg(long)]
        noise_yaw_std: Option<f64>,
    },
    /// Plan a tour visiting one viewpoint per cuboid face.
    Tour {
        #[command(flatten)]
        common: Common,
        /// Minimum PPA every face must reach (1/m).
        #[arg(long)]
        c_threshold: Option<f64>,
    },
    /// Re-render a recorded plan or tour CSV and score it.
    Replay {
        #[command(flatten)]
        common: Common,
        /// Plan CSV written by `plan` or waypoint CSV written by `tour`.
        recording: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Image size as WIDTHxHEIGHT.
    #[arg(long, value_parser = parse_resolution)]
    resolution: Option<(usize, usize)>,
}

fn parse_resolution(s: &str) -> std::result::Result<(usize, usize), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WIDTHxHEIGHT, got '{s}'"))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("bad resolution '{s}': {e}"));
    Ok((parse(w)?, parse(h)?))
}

impl Common {
    fn scenario(&self) -> Result<Scenario> {
        let mut s = Scenario::load(&self.scenario)?;
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        if let Some((w, h)) = self.resolution {
            s.image_width_px = w;
            s.image_height_px = h;
        }
        s.validate()?;
        Ok(s)
    }

    fn out_dir(&self) -> Result<&Path> {
        fs::create_dir_all(&self.out).with_context(|| format!("cannot create output directory {}", self.out.display()))?;
        Ok(&self.out)
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn correlate(common: &Common) -> Result<()> {
    let scene = Scene::new(common.scenario()?)?;
    let out = common.out_dir()?;
    let result = run_correlation(&scene)?;
    write(&out.join("correlation.csv"), correlation_csv(&result.records))?;
    let line = correlation_summary_line(&result.summary);
    write(&out.join("correlation_summary.txt"), format!("{line}\n"))?;
    if let Some(first) = correlation_views(&scene)?.first() {
        let frame = &scene.sequence.frames()[0];
        render(&frame.mesh.transformed(&frame.pose), first, &scene.intrinsics).write_pgm(&out.join("view0_depth.pgm"))?;
    }
    if result.summary.views < 2 || result.summary.ppa_vs_coverage.is_none() {
        eprintln!(
            "warning: correlation is degenerate with {} view(s); coefficients reported as nan",
            result.summary.views
        );
    }
    println!("{line}");
    Ok(())
}

fn plan(common: &Common, planners: Option<Vec<PlannerKind>>, pos_std: Option<f64>, yaw_std: Option<f64>) -> Result<()> {
    let mut scenario = common.scenario()?;
    if let Some(p) = pos_std {
        scenario.noise_pos_std_m = p;
    }
    if let Some(y) = yaw_std {
        scenario.noise_yaw_std_rad = y;
    }
    if let Some(list) = &planners {
        scenario.planners = list.iter().map(|k| k.name().to_string()).collect();
    }
    scenario.validate()?;
    let kinds = scenario.planner_kinds()?;
    let noise = NoiseSpec {
        pos_std: scenario.noise_pos_std_m,
        yaw_std: scenario.noise_yaw_std_rad,
    };
    let noisy = noise.pos_std > 0.0 || noise.yaw_std > 0.0;
    let scene = Scene::new(scenario)?;
    let out = common.out_dir()?;
    println!("{}", plan_header(&scene));

    let surface = scene.surface_sample();
    let mut results = Vec::new();
    for kind in kinds {
        let settings: &[Option<NoiseSpec>] = if noisy { &[None, Some(noise)] } else { &[None] };
        for setting in settings {
            let r = run_planner(&scene, kind, *setting, &surface)?;
            let tag = format!("{kind}_{}", if r.noisy { "noisy" } else { "clean" });
            for (i, run) in r.runs.iter().enumerate() {
                if !run.all_feasible() {
                    bail!("{tag} run {i} violated the step or safety constraint");
                }
                run.write_csv(&out.join(format!("{tag}_run{i}.csv")))?;
            }
            r.merged.write_ply(&out.join(format!("{tag}.ply")))?;
            if let (Some(step), Some(frame)) = (r.runs.first().and_then(|run| run.steps.first()), scene.sequence.frames().first()) {
                render(&frame.mesh.transformed(&frame.pose), &step.camera_after, &scene.intrinsics)
                    .write_pgm(&out.join(format!("{tag}_frame0_depth.pgm")))?;
            }
            println!(
                "{tag}: coverage {:.4} %, chamfer {:.4} mm",
                r.metrics.coverage_pct, r.metrics.chamfer_mm
            );
            results.push(r);
        }
    }
    write(&out.join("metrics.csv"), metrics_table(&scene, &results))?;
    Ok(())
}

fn tour(common: &Common, c_threshold: Option<f64>) -> Result<()> {
    let scene = Scene::new(common.scenario()?)?;
    let out = common.out_dir()?;
    let c = c_threshold.unwrap_or(scene.scenario.tour_c_threshold_per_m);
    let result = run_tour(&scene, c).map_err(|e| match e {
        Error::InfeasibleThreshold { max, .. } => anyhow::Error::new(e).context(format!(
            "lower --c-threshold to at most {max} or reduce r_safe_m"
        )),
        other => other.into(),
    })?;
    if !result.valid {
        bail!("tour stops failed constraint re-validation");
    }
    write(&out.join("tour.csv"), result.tour.to_csv(&result.neighborhoods))?;
    println!(
        "tour: {} stops, total length {:.4} m, all stops re-validated",
        result.tour.order.len(),
        result.tour.total_length
    );
    Ok(())
}

fn replay_cmd(common: &Common, recording: &Path) -> Result<()> {
    let scene = Scene::new(common.scenario()?)?;
    let out = common.out_dir()?;
    let text = fs::read_to_string(recording)
        .map_err(|e| Error::Config(format!("cannot read recording {}: {e}", recording.display())))?;
    let rec = parse_recording(&text)?;
    let label = match &rec {
        Recording::Plan(run) => run.config.planner_kind.name().to_string(),
        Recording::Tour(points) => format!("tour_{}_stops", points.len()),
    };
    let (m, cloud) = replay(&scene, &rec, &scene.surface_sample())?;
    cloud.write_ply(&out.join("replay.ply"))?;
    let line = format!(
        "{label},{:.4},{:.4},{},{}",
        m.coverage_pct, m.chamfer_mm, m.windows, m.empty_windows
    );
    write(
        &out.join("replay.csv"),
        format!("recording,coverage_pct,chamfer_mm,windows,empty_windows\n{line}\n"),
    )?;
    println!("{line}");
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(e) if e.is_configuration() => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Correlate(common) => correlate(common),
        Command::Plan {
            common,
            planners,
            noise_pos_std,
            noise_yaw_std,
        } => plan(common, planners.clone(), *noise_pos_std, *noise_yaw_std),
        Command::Tour { common, c_threshold } => tour(common, *c_threshold),
        Command::Replay { common, recording } => replay_cmd(common, recording),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
