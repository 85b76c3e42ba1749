//! Synthetic benchmark harness: scene generation, Monte-Carlo sweeps,
//! solver comparison and result files.

pub mod io;
pub mod scene;
pub mod sweep;

pub use io::{
    export_plot, read_scene, scene_from_json, scene_to_json, write_results, write_scene, IoError,
    PlotKind, RESULTS_SCHEMA, SCENE_SCHEMA,
};
pub use scene::{generate_scene, NoiseModel, SceneConfig, SceneError, SyntheticScene};
pub use sweep::{
    compare_solvers, evaluate, parse_range, run_experiment, run_sweep, summarize, trial_seed,
    CellSummary, CellTiming, SolverKind, SweepAxis, SweepResult, TrialMetrics, TrialRecord,
    SUCCESS_DR_DEG, SUCCESS_DT,
};
