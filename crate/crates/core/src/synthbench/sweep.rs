//! Monte-Carlo trials over synthetic scenes and per-cell aggregation.

use super::scene::{generate_scene, SceneConfig, SyntheticScene};
use crate::geom::pose_error;
use crate::pipeline::{
    solve, solve_ransac_baseline, LocalizationResult, SolverConfig, StageTimings,
};
use crate::trans_vote::VotingMode;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Success thresholds: translation in meters, rotation in degrees.
pub const SUCCESS_DT: f64 = 0.1;
pub const SUCCESS_DR_DEG: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    /// Full pipeline with prioritized progressive voting.
    Ours,
    /// Full pipeline with dimension-wise voting.
    OursDv,
    /// Plain two-entity RANSAC, best sample, no refinement.
    Ransac,
}

impl SolverKind {
    pub const ALL: [SolverKind; 3] = [SolverKind::Ours, SolverKind::OursDv, SolverKind::Ransac];

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Ours => "ours",
            SolverKind::OursDv => "ours-dv",
            SolverKind::Ransac => "ransac",
        }
    }

    pub fn run(self, scene: &SyntheticScene, config: &SolverConfig) -> Option<LocalizationResult> {
        let k = &scene.config.camera;
        let res = match self {
            SolverKind::Ours | SolverKind::OursDv => {
                let voting_mode = if self == SolverKind::Ours {
                    VotingMode::Prioritized
                } else {
                    VotingMode::DimensionWise
                };
                let cfg = SolverConfig {
                    voting_mode,
                    ..*config
                };
                solve(&scene.points, &scene.lines, &scene.prior, k, &cfg, false)
            }
            SolverKind::Ransac => {
                solve_ransac_baseline(&scene.points, &scene.lines, &scene.prior, k, config)
            }
        };
        match res {
            Ok(r) => Some(r),
            Err(e) => {
                log::debug!("{} failed: {e}", self.name());
                None
            }
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SolverKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown solver '{s}' (expected ours, ours-dv or ransac)"))
    }
}

/// The scene parameter varied across cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "axis", content = "values")]
pub enum SweepAxis {
    OutlierRate(Vec<f64>),
    GravitySigmaDeg(Vec<f64>),
    /// Total correspondence count, split between points and lines in the
    /// proportion of the base config.
    Correspondences(Vec<usize>),
    /// A single cell at the base config.
    Fixed,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::OutlierRate(_) => "outlier_rate",
            SweepAxis::GravitySigmaDeg(_) => "gravity_sigma_deg",
            SweepAxis::Correspondences(_) => "correspondences",
            SweepAxis::Fixed => "fixed",
        }
    }

    pub fn values(&self) -> Vec<f64> {
        match self {
            SweepAxis::OutlierRate(v) | SweepAxis::GravitySigmaDeg(v) => v.clone(),
            SweepAxis::Correspondences(v) => v.iter().map(|&n| n as f64).collect(),
            SweepAxis::Fixed => vec![0.0],
        }
    }

    /// The base config with cell `cell` applied.
    pub fn apply(&self, base: &SceneConfig, cell: usize) -> SceneConfig {
        let mut cfg = *base;
        match self {
            SweepAxis::OutlierRate(v) => cfg.outlier_rate = v[cell],
            SweepAxis::GravitySigmaDeg(v) => cfg.gravity_noise_sigma_deg = v[cell],
            SweepAxis::Correspondences(v) => {
                let total = (base.n_points + base.n_lines).max(1);
                cfg.n_points = (v[cell] * base.n_points + total / 2) / total;
                cfg.n_lines = v[cell] - cfg.n_points;
            }
            SweepAxis::Fixed => {}
        }
        cfg
    }

    pub fn len(&self) -> usize {
        self.values().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `lo:hi:step`, inclusive of `hi` up to rounding.
pub fn parse_range(range: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = range.split(':').collect();
    let [lo, hi, step] = parts[..] else {
        return Err(format!("expected lo:hi:step, got '{range}'"));
    };
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|e| format!("bad number '{s}': {e}"))
    };
    let (lo, hi, step) = (num(lo)?, num(hi)?, num(step)?);
    if step.is_nan() || step <= 0.0 || hi < lo {
        return Err(format!("empty or unbounded range '{range}'"));
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    // Rounded to 12 decimals so 0.1 steps print as 0.3, not 0.30000000000000004.
    Ok((0..count)
        .map(|i| ((lo + i as f64 * step) * 1e12).round() / 1e12)
        .collect())
}

/// Seed of trial `trial` in cell `cell`, mixed with splitmix64.
pub fn trial_seed(base: u64, cell: usize, trial: usize) -> u64 {
    let mut z = base
        .wrapping_add((cell as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add((trial as u64).wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    /// Meters; `None` if the solver returned no pose.
    pub dt: Option<f64>,
    /// Degrees.
    pub dr: Option<f64>,
    pub precision: f64,
    pub recall: f64,
    pub success: bool,
    /// Size of the returned consensus set.
    pub cardinality: usize,
    pub true_inliers: usize,
}

/// Compares a solver result against the scene's ground truth.
pub fn evaluate(scene: &SyntheticScene, result: Option<&LocalizationResult>) -> TrialMetrics {
    let true_inliers = scene.inlier_count();
    let Some(r) = result else {
        return TrialMetrics {
            dt: None,
            dr: None,
            precision: 0.0,
            recall: 0.0,
            success: false,
            cardinality: 0,
            true_inliers,
        };
    };
    let err = pose_error(&r.pose, &scene.true_pose);
    let hits = r
        .consensus_point_ids
        .iter()
        .filter(|&&i| scene.point_inlier[i])
        .count()
        + r.consensus_line_ids
            .iter()
            .filter(|&&i| scene.line_inlier[i])
            .count();
    let cardinality = r.consensus_point_ids.len() + r.consensus_line_ids.len();
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    TrialMetrics {
        dt: Some(err.translation),
        dr: Some(err.rotation_deg),
        precision: ratio(hits, cardinality),
        recall: ratio(hits, true_inliers),
        success: err.translation < SUCCESS_DT && err.rotation_deg < SUCCESS_DR_DEG,
        cardinality,
        true_inliers,
    }
}

/// One solver on one scene. Timings live apart from the metrics because
/// they are the only non-reproducible output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub solver: SolverKind,
    pub cell: usize,
    pub x: f64,
    pub trial: usize,
    pub seed: u64,
    /// `None` when the scene itself could not be generated.
    pub metrics: Option<TrialMetrics>,
    pub generation_error: Option<String>,
    #[serde(skip)]
    pub timings: StageTimings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub solver: SolverKind,
    pub cell: usize,
    pub axis: String,
    pub x: f64,
    pub runs: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Means over successful trials; NaN if there were none.
    pub mean_dt: f64,
    pub mean_dr: f64,
    /// Means over all trials, counting failures as zero.
    pub mean_precision: f64,
    pub mean_recall: f64,
    pub mean_cardinality: f64,
    pub median_cardinality: f64,
    pub solver_failures: usize,
    pub generation_failures: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellTiming {
    pub solver: SolverKind,
    pub cell: usize,
    pub x: f64,
    pub runs: usize,
    /// Mean seconds per stage.
    pub mean: StageTimings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub base: SceneConfig,
    pub records: Vec<TrialRecord>,
    pub summary: Vec<CellSummary>,
    pub timing: Vec<CellTiming>,
}

impl SweepResult {
    pub fn cell(&self, solver: SolverKind, cell: usize) -> Option<&CellSummary> {
        self.summary
            .iter()
            .find(|s| s.solver == solver && s.cell == cell)
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

fn median(mut values: Vec<f64>) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    }
}

/// Aggregates the records of one (solver, cell). Order-independent.
pub fn summarize(
    records: &[&TrialRecord],
    solver: SolverKind,
    cell: usize,
    axis: &str,
    x: f64,
) -> CellSummary {
    let runs = records.len();
    let metrics: Vec<&TrialMetrics> = records.iter().filter_map(|r| r.metrics.as_ref()).collect();
    let successes: Vec<&&TrialMetrics> = metrics.iter().filter(|m| m.success).collect();
    let per_run = |f: fn(&TrialMetrics) -> f64| {
        if runs == 0 {
            f64::NAN
        } else {
            metrics.iter().map(|m| f(m)).sum::<f64>() / runs as f64
        }
    };
    CellSummary {
        solver,
        cell,
        axis: axis.to_string(),
        x,
        runs,
        successes: successes.len(),
        success_rate: if runs == 0 {
            f64::NAN
        } else {
            successes.len() as f64 / runs as f64
        },
        mean_dt: mean(successes.iter().filter_map(|m| m.dt)),
        mean_dr: mean(successes.iter().filter_map(|m| m.dr)),
        mean_precision: per_run(|m| m.precision),
        mean_recall: per_run(|m| m.recall),
        mean_cardinality: per_run(|m| m.cardinality as f64),
        median_cardinality: median(metrics.iter().map(|m| m.cardinality as f64).collect()),
        solver_failures: metrics.iter().filter(|m| m.dt.is_none()).count(),
        generation_failures: runs - metrics.len(),
    }
}

fn run_trials(
    base: &SceneConfig,
    solver_config: &SolverConfig,
    axis: &SweepAxis,
    solvers: &[SolverKind],
    runs: usize,
) -> Vec<TrialRecord> {
    let values = axis.values();
    let jobs: Vec<(usize, usize)> = (0..values.len())
        .flat_map(|c| (0..runs).map(move |t| (c, t)))
        .collect();
    let per_trial: Vec<Vec<TrialRecord>> = jobs
        .par_iter()
        .map(|&(cell, trial)| {
            let seed = trial_seed(base.rng_seed, cell, trial);
            let cfg = SceneConfig {
                rng_seed: seed,
                ..axis.apply(base, cell)
            };
            let scene = generate_scene(&cfg);
            if let Err(e) = &scene {
                log::warn!("cell {cell} trial {trial}: {e}");
            }
            // Solver randomness is tied to the scene so every solver sees the
            // same RANSAC stream.
            let solver_cfg = SolverConfig {
                rng_seed: seed,
                ..*solver_config
            };
            solvers
                .iter()
                .map(|&solver| {
                    let (metrics, timings) = match &scene {
                        Ok(s) => {
                            let clock = std::time::Instant::now();
                            let result = solver.run(s, &solver_cfg);
                            let elapsed = clock.elapsed().as_secs_f64();
                            let timings = result.as_ref().map_or(
                                StageTimings {
                                    ransac: elapsed,
                                    ..StageTimings::default()
                                },
                                |r| r.stage_timings,
                            );
                            (Some(evaluate(s, result.as_ref())), timings)
                        }
                        Err(_) => (None, StageTimings::default()),
                    };
                    TrialRecord {
                        solver,
                        cell,
                        x: values[cell],
                        trial,
                        seed,
                        metrics,
                        generation_error: scene.as_ref().err().map(|e| e.to_string()),
                        timings,
                    }
                })
                .collect()
        })
        .collect();
    per_trial.into_iter().flatten().collect()
}

/// Runs `runs` trials per cell of `axis` for every solver. Each trial's
/// scene seed derives from `(base.rng_seed, cell, trial)`, so results do not
/// depend on `jobs` (0 uses the global rayon pool).
pub fn run_experiment(
    base: &SceneConfig,
    solver_config: &SolverConfig,
    axis: &SweepAxis,
    solvers: &[SolverKind],
    runs: usize,
    jobs: usize,
) -> SweepResult {
    let records = if jobs == 0 {
        run_trials(base, solver_config, axis, solvers, runs)
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .expect("thread pool")
            .install(|| run_trials(base, solver_config, axis, solvers, runs))
    };

    let values = axis.values();
    let mut summary = Vec::new();
    let mut timing = Vec::new();
    for &solver in solvers {
        for (cell, &x) in values.iter().enumerate() {
            let rs: Vec<&TrialRecord> = records
                .iter()
                .filter(|r| r.solver == solver && r.cell == cell)
                .collect();
            summary.push(summarize(&rs, solver, cell, axis.name(), x));
            let n = rs.len().max(1) as f64;
            let sum =
                |f: fn(&StageTimings) -> f64| rs.iter().map(|r| f(&r.timings)).sum::<f64>() / n;
            timing.push(CellTiming {
                solver,
                cell,
                x,
                runs: rs.len(),
                mean: StageTimings {
                    tims: sum(|t| t.tims),
                    ransac: sum(|t| t.ransac),
                    rotation: sum(|t| t.rotation),
                    hypotheses: sum(|t| t.hypotheses),
                    voting: sum(|t| t.voting),
                    refinement: sum(|t| t.refinement),
                },
            });
        }
    }
    SweepResult {
        axis: axis.clone(),
        base: *base,
        records,
        summary,
        timing,
    }
}

/// The default solver over a sweep.
pub fn run_sweep(base: &SceneConfig, axis: &SweepAxis, runs: usize) -> SweepResult {
    run_experiment(
        base,
        &SolverConfig::default(),
        axis,
        &[SolverKind::Ours],
        runs,
        0,
    )
}

/// Several solvers on the same scenes at the base config.
pub fn compare_solvers(base: &SceneConfig, solvers: &[SolverKind], runs: usize) -> SweepResult {
    run_experiment(
        base,
        &SolverConfig::default(),
        &SweepAxis::Fixed,
        solvers,
        runs,
        0,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_range_includes_upper_end() {
        assert_eq!(parse_range("0.1:0.9:0.1").unwrap().len(), 9);
        assert_eq!(parse_range("0.1:0.9:0.1").unwrap()[2], 0.3);
        assert_eq!(
            parse_range("0:5:1").unwrap(),
            vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]
        );
        assert!(parse_range("1:0:1").is_err());
        assert!(parse_range("0:1").is_err());
        assert!(parse_range("0:1:0").is_err());
    }

    #[test]
    fn trial_seeds_are_distinct() {
        let mut seen = std::collections::HashSet::new();
        for c in 0..10 {
            for t in 0..100 {
                assert!(seen.insert(trial_seed(7, c, t)));
            }
        }
    }

    #[test]
    fn correspondence_axis_keeps_proportion() {
        let base = SceneConfig {
            n_points: 25,
            n_lines: 25,
            ..SceneConfig::default()
        };
        let cfg = SweepAxis::Correspondences(vec![100]).apply(&base, 0);
        assert_eq!((cfg.n_points, cfg.n_lines), (50, 50));
    }

    #[test]
    fn clean_scenes_are_solved_exactly() {
        let base = SceneConfig {
            pixel_noise_bound: 0.0,
            n_points: 20,
            rng_seed: 11,
            ..SceneConfig::default()
        };
        let res = run_sweep(&base, &SweepAxis::OutlierRate(vec![0.0]), 5);
        let s = &res.summary[0];
        assert_eq!(s.successes, 5);
        assert!(s.mean_dt < 1e-6, "{}", s.mean_dt);
    }

    #[test]
    fn noisy_inlier_only_scenes_recover_every_inlier() {
        let base = SceneConfig {
            n_points: 20,
            rng_seed: 12,
            ..SceneConfig::default()
        };
        let res = run_sweep(&base, &SweepAxis::Fixed, 5);
        let s = &res.summary[0];
        assert_eq!(s.successes, 5);
        assert!(s.mean_precision > 0.999 && s.mean_recall > 0.999, "{s:?}");
    }

    #[test]
    fn single_solver_single_trial_gives_one_row() {
        let base = SceneConfig {
            n_points: 20,
            outlier_rate: 0.3,
            ..SceneConfig::default()
        };
        let res = compare_solvers(&base, &[SolverKind::Ours], 1);
        assert_eq!(res.summary.len(), 1);
        assert_eq!(res.records.len(), 1);
    }

    #[test]
    fn results_do_not_depend_on_job_count() {
        let base = SceneConfig {
            n_points: 20,
            outlier_rate: 0.5,
            rng_seed: 3,
            ..SceneConfig::default()
        };
        let axis = SweepAxis::OutlierRate(vec![0.2, 0.5]);
        let solvers = [SolverKind::Ours, SolverKind::Ransac];
        let a = run_experiment(&base, &SolverConfig::default(), &axis, &solvers, 3, 1);
        let b = run_experiment(&base, &SolverConfig::default(), &axis, &solvers, 3, 4);
        assert_eq!(
            serde_json::to_string(&a.records).unwrap(),
            serde_json::to_string(&b.records).unwrap()
        );
        assert_eq!(
            serde_json::to_string(&a.summary).unwrap(),
            serde_json::to_string(&b.summary).unwrap()
        );
    }

    #[test]
    fn summary_is_order_independent() {
        let base = SceneConfig {
            n_points: 20,
            outlier_rate: 0.4,
            ..SceneConfig::default()
        };
        let res = run_sweep(&base, &SweepAxis::Fixed, 4);
        let mut refs: Vec<&TrialRecord> = res.records.iter().collect();
        let fwd = summarize(&refs, SolverKind::Ours, 0, "fixed", 0.0);
        refs.reverse();
        let rev = summarize(&refs, SolverKind::Ours, 0, "fixed", 0.0);
        assert_eq!(fwd.successes, rev.successes);
        assert!((fwd.mean_precision - rev.mean_precision).abs() < 1e-15);
        assert_eq!(fwd.median_cardinality, rev.median_cardinality);
    }
}
