//! Scene files, sweep result files and plot-data export.
//!
//! A results directory holds `summary.csv` (one row per solver and cell),
//! `timing.csv` (mean seconds per stage), `trials.jsonl` (one record per
//! solver and trial) and `meta.json`. Everything except `timing.csv` is a
//! pure function of the inputs and seed.

use super::scene::SyntheticScene;
use super::sweep::{SolverKind, SweepResult};
use crate::pipeline::SolverConfig;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use thiserror::Error;

pub const SCENE_SCHEMA: &str = "cmaxloc.scene/v1";
pub const RESULTS_SCHEMA: &str = "cmaxloc.results/v1";

pub const SUMMARY_FILE: &str = "summary.csv";
pub const TIMING_FILE: &str = "timing.csv";
pub const TRIALS_FILE: &str = "trials.jsonl";
pub const META_FILE: &str = "meta.json";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    pub schema: String,
    #[serde(flatten)]
    pub scene: SyntheticScene,
}

pub fn scene_to_json(scene: &SyntheticScene) -> String {
    let file = SceneFile {
        schema: SCENE_SCHEMA.to_string(),
        scene: scene.clone(),
    };
    serde_json::to_string_pretty(&file).expect("scene serializes")
}

pub fn scene_from_json(text: &str, path: &Path) -> Result<SyntheticScene, IoError> {
    let file: SceneFile = serde_json::from_str(text).map_err(|source| IoError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    if file.schema != SCENE_SCHEMA {
        return Err(IoError::Format {
            path: path.to_path_buf(),
            message: format!(
                "unsupported schema '{}', expected '{SCENE_SCHEMA}'",
                file.schema
            ),
        });
    }
    Ok(file.scene)
}

pub fn write_scene(path: &Path, scene: &SyntheticScene) -> Result<(), IoError> {
    fs::write(path, scene_to_json(scene) + "\n").map_err(io_err(path))
}

pub fn read_scene(path: &Path) -> Result<SyntheticScene, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    scene_from_json(&text, path)
}

#[derive(Debug, Serialize)]
struct Meta<'a> {
    schema: &'static str,
    axis: &'a super::sweep::SweepAxis,
    base: &'a super::scene::SceneConfig,
    solver: &'a SolverConfig,
    solvers: Vec<SolverKind>,
    runs: usize,
}

fn camera_columns(result: &SweepResult) -> [String; 7] {
    let b = &result.base;
    [
        b.camera.fx.to_string(),
        b.camera.fy.to_string(),
        b.camera.cx.to_string(),
        b.camera.cy.to_string(),
        b.image_width.to_string(),
        b.image_height.to_string(),
        b.pixel_noise_bound.to_string(),
    ]
}

const CAMERA_HEADER: [&str; 7] = [
    "fx",
    "fy",
    "cx",
    "cy",
    "image_width",
    "image_height",
    "pixel_noise_bound",
];

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, IoError> {
    csv::Writer::from_path(path).map_err(|source| IoError::Csv {
        path: path.to_path_buf(),
        source,
    })
}

fn write_rows(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), IoError> {
    let wrap = |source| IoError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(wrap)?;
    for row in rows {
        w.write_record(&row).map_err(wrap)?;
    }
    w.flush().map_err(io_err(path))
}

/// Writes the four result files into `dir`, creating it if needed.
pub fn write_results(
    dir: &Path,
    result: &SweepResult,
    solver_config: &SolverConfig,
    runs: usize,
) -> Result<(), IoError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let cam = camera_columns(result);

    let summary_header: Vec<&str> = [
        "solver",
        "cell",
        "axis",
        "x",
        "runs",
        "successes",
        "success_rate",
        "mean_dt",
        "mean_dr",
        "mean_precision",
        "mean_recall",
        "mean_cardinality",
        "median_cardinality",
        "solver_failures",
        "generation_failures",
    ]
    .into_iter()
    .chain(CAMERA_HEADER)
    .collect();
    let rows = result
        .summary
        .iter()
        .map(|s| {
            [
                s.solver.to_string(),
                s.cell.to_string(),
                s.axis.clone(),
                s.x.to_string(),
                s.runs.to_string(),
                s.successes.to_string(),
                s.success_rate.to_string(),
                s.mean_dt.to_string(),
                s.mean_dr.to_string(),
                s.mean_precision.to_string(),
                s.mean_recall.to_string(),
                s.mean_cardinality.to_string(),
                s.median_cardinality.to_string(),
                s.solver_failures.to_string(),
                s.generation_failures.to_string(),
            ]
            .into_iter()
            .chain(cam.clone())
            .collect()
        })
        .collect();
    write_rows(&dir.join(SUMMARY_FILE), &summary_header, rows)?;

    let timing_header: Vec<&str> = [
        "solver",
        "cell",
        "x",
        "runs",
        "tims",
        "ransac",
        "rotation",
        "hypotheses",
        "voting",
        "refinement",
        "total",
    ]
    .into_iter()
    .chain(CAMERA_HEADER)
    .collect();
    let rows = result
        .timing
        .iter()
        .map(|t| {
            let m = &t.mean;
            [
                t.solver.to_string(),
                t.cell.to_string(),
                t.x.to_string(),
                t.runs.to_string(),
                m.tims.to_string(),
                m.ransac.to_string(),
                m.rotation.to_string(),
                m.hypotheses.to_string(),
                m.voting.to_string(),
                m.refinement.to_string(),
                m.total().to_string(),
            ]
            .into_iter()
            .chain(cam.clone())
            .collect()
        })
        .collect();
    write_rows(&dir.join(TIMING_FILE), &timing_header, rows)?;

    let path = dir.join(TRIALS_FILE);
    let file = fs::File::create(&path).map_err(io_err(&path))?;
    let mut w = BufWriter::new(file);
    for r in &result.records {
        let line = serde_json::to_string(r).expect("record serializes");
        writeln!(w, "{line}").map_err(io_err(&path))?;
    }
    w.flush().map_err(io_err(&path))?;

    let mut solvers: Vec<SolverKind> = result.summary.iter().map(|s| s.solver).collect();
    solvers.dedup();
    let meta = Meta {
        schema: RESULTS_SCHEMA,
        axis: &result.axis,
        base: &result.base,
        solver: solver_config,
        solvers,
        runs,
    };
    let path = dir.join(META_FILE);
    fs::write(
        &path,
        serde_json::to_string_pretty(&meta).expect("meta serializes") + "\n",
    )
    .map_err(io_err(&path))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    /// Success rate against the sweep variable, one series per solver.
    SuccessCurve,
    /// Mean total seconds against the sweep variable.
    Timing,
    /// Mean consensus size against the sweep variable.
    Cardinality,
}

impl PlotKind {
    fn source_file(self) -> &'static str {
        match self {
            PlotKind::Timing => TIMING_FILE,
            PlotKind::SuccessCurve | PlotKind::Cardinality => SUMMARY_FILE,
        }
    }

    fn y_column(self) -> &'static str {
        match self {
            PlotKind::SuccessCurve => "success_rate",
            PlotKind::Timing => "total",
            PlotKind::Cardinality => "mean_cardinality",
        }
    }
}

impl FromStr for PlotKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "success-curve" => Ok(PlotKind::SuccessCurve),
            "timing" => Ok(PlotKind::Timing),
            "cardinality" => Ok(PlotKind::Cardinality),
            _ => Err(format!("unknown plot kind '{s}'")),
        }
    }
}

/// Long-format `series,x,y` CSV from a results directory or a single
/// summary or timing CSV.
pub fn export_plot(input: &Path, kind: PlotKind) -> Result<String, IoError> {
    let path = if input.is_dir() {
        input.join(kind.source_file())
    } else {
        input.to_path_buf()
    };
    let wrap = |source| IoError::Csv {
        path: path.clone(),
        source,
    };
    let mut reader = csv::Reader::from_path(&path).map_err(wrap)?;
    let headers = reader.headers().map_err(wrap)?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IoError::Format {
                path: path.clone(),
                message: format!("missing column '{name}'"),
            })
    };
    let (series, x, y) = (column("solver")?, column("x")?, column(kind.y_column())?);

    let mut out = csv::Writer::from_writer(Vec::new());
    let to_csv = |source| IoError::Csv {
        path: path.clone(),
        source,
    };
    out.write_record(["series", "x", "y"]).map_err(to_csv)?;
    for record in reader.records() {
        let record = record.map_err(wrap)?;
        out.write_record([&record[series], &record[x], &record[y]])
            .map_err(to_csv)?;
    }
    let bytes = out.into_inner().map_err(|e| IoError::Format {
        path: path.clone(),
        message: e.to_string(),
    })?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
