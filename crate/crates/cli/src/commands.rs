use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use cmaxloc_core::pipeline::{self, StageTimings};
use cmaxloc_core::synthbench::{
    self, export_plot as export, generate_scene, parse_range, run_experiment, write_results,
    IoError, SceneConfig, SceneError, SolverKind, SweepAxis, SweepResult,
};
use cmaxloc_core::{pose_error, PipelineError, Pose, SolverConfig};
use serde::Serialize;
use thiserror::Error;

use crate::args::{ExportArgs, SceneArgs, SolveArgs, SolverArgs, SweepArgs, SynthArgs};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{path}: {source}")]
    Write { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Solver(PipelineError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) | CliError::Write { .. } => 3,
            CliError::Solver(PipelineError::NoConsensus { .. }) => 4,
            CliError::Solver(PipelineError::InsufficientInput { .. }) => 2,
        }
    }
}

impl From<SceneError> for CliError {
    fn from(e: SceneError) -> Self {
        CliError::Usage(e.to_string())
    }
}

fn write_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Write {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes to `path`, or stdout when `None`.
fn emit(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(write_err(p)),
        None => {
            let stdout = Path::new("<stdout>");
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(write_err(stdout))?;
            out.flush().map_err(write_err(stdout))
        }
    }
}

fn scene_config(a: &SceneArgs, seed: u64) -> SceneConfig {
    let mut cfg = SceneConfig {
        n_points: a.points,
        n_lines: a.lines,
        outlier_rate: a.outlier_rate,
        pixel_noise_bound: a.noise,
        gravity_noise_sigma_deg: a.imu_sigma,
        rng_seed: seed,
        ..SceneConfig::default()
    };
    cfg.camera.fx = a.focal;
    cfg.camera.fy = a.focal;
    cfg
}

fn solver_config(a: &SolverArgs, seed: u64) -> SolverConfig {
    SolverConfig {
        bound_mode: a.bound_mode.into(),
        ransac_iterations: a.ransac_iterations,
        refine_iters: a.refine_iters,
        rng_seed: seed,
        ..SolverConfig::default()
    }
}

pub fn synth(a: &SynthArgs) -> Result<(), CliError> {
    let scene = generate_scene(&scene_config(&a.scene, a.seed))?;
    let (po, lo) = scene.config.outlier_counts();
    log::info!(
        "{} points, {} lines, {} outliers",
        scene.points.len(),
        scene.lines.len(),
        po + lo
    );
    emit(a.out.as_deref(), &synthbench::scene_to_json(&scene))
}

#[derive(Serialize)]
struct PoseOut {
    /// Row-major world-to-camera rotation.
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
    yaw_deg: f64,
    pitch_deg: f64,
    roll_deg: f64,
}

impl From<&Pose> for PoseOut {
    fn from(p: &Pose) -> Self {
        let r = &p.rotation;
        let (yaw, pitch, roll) = p.yaw_pitch_roll();
        Self {
            rotation: std::array::from_fn(|i| std::array::from_fn(|j| r[(i, j)])),
            translation: [p.translation.x, p.translation.y, p.translation.z],
            yaw_deg: yaw.to_degrees(),
            pitch_deg: pitch.to_degrees(),
            roll_deg: roll.to_degrees(),
        }
    }
}

#[derive(Serialize)]
struct ErrorOut {
    translation: f64,
    rotation_deg: f64,
}

#[derive(Serialize)]
struct SolveOut {
    voting: &'static str,
    pose: PoseOut,
    alpha: f64,
    consensus_point_ids: Vec<usize>,
    consensus_line_ids: Vec<usize>,
    rotation_cardinality: usize,
    translation_cardinality: usize,
    bnb_expansions: usize,
    error: ErrorOut,
    #[serde(skip_serializing_if = "Option::is_none")]
    timings: Option<StageTimings>,
}

pub fn solve(a: &SolveArgs) -> Result<(), CliError> {
    let scene = synthbench::read_scene(&a.scene)?;
    let config = SolverConfig {
        voting_mode: a.voting.into(),
        ..solver_config(&a.solver, a.seed)
    };
    let result = pipeline::solve(
        &scene.points,
        &scene.lines,
        &scene.prior,
        &scene.config.camera,
        &config,
        a.trace.is_some(),
    )
    .map_err(CliError::Solver)?;

    if let (Some(path), Some(trace)) = (&a.trace, &result.trace) {
        let file = fs::File::create(path).map_err(write_err(path))?;
        let mut w = BufWriter::new(file);
        trace.write_jsonl(&mut w).map_err(write_err(path))?;
        w.flush().map_err(write_err(path))?;
    }

    let err = pose_error(&result.pose, &scene.true_pose);
    log::info!(
        "rotation cardinality {}, translation cardinality {}",
        result.rotation_cardinality,
        result.translation_cardinality
    );
    let out = SolveOut {
        voting: match a.voting {
            crate::args::VotingArg::Prioritized => "prioritized",
            crate::args::VotingArg::DimensionWise => "dimension-wise",
        },
        pose: PoseOut::from(&result.pose),
        alpha: result.alpha,
        consensus_point_ids: result.consensus_point_ids,
        consensus_line_ids: result.consensus_line_ids,
        rotation_cardinality: result.rotation_cardinality,
        translation_cardinality: result.translation_cardinality,
        bnb_expansions: result.bnb_expansions,
        error: ErrorOut {
            translation: err.translation,
            rotation_deg: err.rotation_deg,
        },
        timings: a.timings.then_some(result.stage_timings),
    };
    let mut text = serde_json::to_string_pretty(&out).expect("result serializes");
    text.push('\n');
    emit(None, &text)
}

fn sweep_axis(a: &SweepArgs) -> Result<Option<SweepAxis>, CliError> {
    let range = |s: &str| parse_range(s).map_err(CliError::Usage);
    if let Some(s) = &a.outlier_sweep {
        return Ok(Some(SweepAxis::OutlierRate(range(s)?)));
    }
    if let Some(s) = &a.imu_sigma_sweep {
        return Ok(Some(SweepAxis::GravitySigmaDeg(range(s)?)));
    }
    if let Some(s) = &a.n_sweep {
        let counts = range(s)?
            .into_iter()
            .map(|v| {
                if v >= 0.0 && v.fract() == 0.0 {
                    Ok(v as usize)
                } else {
                    Err(CliError::Usage(format!(
                        "correspondence count {v} is not a whole number"
                    )))
                }
            })
            .collect::<Result<_, _>>()?;
        return Ok(Some(SweepAxis::Correspondences(counts)));
    }
    Ok(None)
}

fn print_table(result: &SweepResult) {
    println!(
        "{:<8} {:>10} {:>6} {:>9} {:>10} {:>10} {:>9} {:>8}",
        "solver",
        result.axis.name(),
        "runs",
        "success",
        "mean_dt",
        "mean_dr",
        "recall",
        "card"
    );
    for s in &result.summary {
        println!(
            "{:<8} {:>10} {:>6} {:>9.3} {:>10.4} {:>10.4} {:>9.3} {:>8.1}",
            s.solver.name(),
            s.x,
            s.runs,
            s.success_rate,
            s.mean_dt,
            s.mean_dr,
            s.mean_recall,
            s.mean_cardinality
        );
    }
}

/// `bench` requires a sweep axis; `compare` falls back to a single cell.
pub fn sweep(
    a: &SweepArgs,
    default_solvers: &[SolverKind],
    needs_axis: bool,
) -> Result<(), CliError> {
    let axis = match sweep_axis(a)? {
        Some(axis) => axis,
        None if needs_axis => {
            return Err(CliError::Usage(
                "one of --outlier-sweep, --imu-sigma-sweep or --n-sweep is required".into(),
            ))
        }
        None => SweepAxis::Fixed,
    };
    if a.runs == 0 {
        return Err(CliError::Usage("--runs must be positive".into()));
    }
    let mut solvers = a
        .solvers
        .clone()
        .unwrap_or_else(|| default_solvers.to_vec());
    solvers.dedup();
    let base = scene_config(&a.scene, a.seed);
    base.validate()?;
    for cell in 0..axis.len() {
        axis.apply(&base, cell).validate()?;
    }
    let config = solver_config(&a.solver, a.seed);
    let result = run_experiment(&base, &config, &axis, &solvers, a.runs, a.jobs);
    write_results(&a.out, &result, &config, a.runs)?;
    print_table(&result);
    Ok(())
}

pub fn export_plot(a: &ExportArgs) -> Result<(), CliError> {
    let csv = export(&a.input, a.kind)?;
    emit(a.out.as_deref(), &csv)
}
