//! End-to-end solver: TIMs, yaw search, translation voting, refinement.

pub mod ransac;
pub mod refine;

pub use ransac::{ransac_2entity, RansacHypothesis, RansacOutput};
pub use refine::{
    max_normalized_residual, refine, refine_gradient, refine_minimax, refine_objective,
    RefineOutcome, RefineState,
};

use crate::geom::{build_rotation, project, CameraIntrinsics, GravityPrior, Pose};
use crate::rot_bnb::{bnb_search, BnbConfig, BnbError};
use crate::tim::{build_all_tims, BoundMode, LineCorrespondence, PointCorrespondence};
use crate::trace::Trace;
use crate::trans_vote::{
    dimension_wise_vote, generate_hypotheses, prioritized_progressive_vote, CorrId,
    TranslationHypothesis, VoteError, VotingMode,
};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error(
        "need at least two points, or a point and a line (got {points} points, {lines} lines)"
    )]
    InsufficientInput { points: usize, lines: usize },
    #[error("no consensus found during {stage}")]
    NoConsensus { stage: &'static str },
}

impl From<BnbError> for PipelineError {
    fn from(_: BnbError) -> Self {
        PipelineError::NoConsensus {
            stage: "rotation search",
        }
    }
}

impl From<VoteError> for PipelineError {
    fn from(_: VoteError) -> Self {
        PipelineError::NoConsensus {
            stage: "translation voting",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub bnb: BnbConfig,
    pub voting_mode: VotingMode,
    pub bound_mode: BoundMode,
    pub refine_iters: usize,
    pub refine_tol: f64,
    /// Seeds the RANSAC stage, the only randomized component.
    pub rng_seed: u64,
    pub ransac_iterations: usize,
    /// Cap on point pairs for TIMs and translation hypotheses.
    pub pair_cap: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            bnb: BnbConfig::default(),
            voting_mode: VotingMode::Prioritized,
            bound_mode: BoundMode::PairMin,
            refine_iters: 50,
            refine_tol: 1e-10,
            rng_seed: 0,
            ransac_iterations: 2000,
            pair_cap: None,
        }
    }
}

/// Correspondences passing the bounded-error test at some pose.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Consensus {
    pub point_ids: Vec<usize>,
    pub line_ids: Vec<usize>,
}

impl Consensus {
    pub fn len(&self) -> usize {
        self.point_ids.len() + self.line_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Enough structure to fix yaw and translation.
    pub fn is_solvable(&self) -> bool {
        self.point_ids.len() >= 2 || (!self.point_ids.is_empty() && !self.line_ids.is_empty())
    }
}

/// Smallest bound the tests divide by, in pixels. A converged fit to
/// noise-free data reaches it, while an exact zero would be unreachable in
/// floating point.
pub const MIN_NOISE_BOUND: f64 = 1e-6;

pub fn effective_bound(n: f64) -> f64 {
    n.max(MIN_NOISE_BOUND)
}

/// Point residual relative to its bound: the largest per-axis pixel error
/// divided by `n`. Infinite when the point is behind the camera.
pub fn point_residual(c: &PointCorrespondence, pose: &Pose, k: &CameraIntrinsics) -> f64 {
    match project(&c.p, pose, k) {
        Some(u) => (u - c.u).abs().max() / effective_bound(c.noise_bound),
        None => f64::INFINITY,
    }
}

/// Line residual relative to its bound: the larger distance of the two
/// projected world endpoints to the observed image line, divided by
/// `sqrt(2) n`. An endpoint displaced by at most `n` per axis moves at most
/// that far, so inliers score at most 1 at the true pose.
pub fn line_residual(l: &LineCorrespondence, pose: &Pose, k: &CameraIntrinsics) -> f64 {
    let (Some(a), Some(b)) = (project(&l.p_start, pose, k), project(&l.p_end, pose, k)) else {
        return f64::INFINITY;
    };
    let dir = l.u_end - l.u_start;
    let len = dir.norm();
    if len == 0.0 {
        return f64::INFINITY;
    }
    let dist = |p: nalgebra::Vector2<f64>| {
        (dir.x * (p.y - l.u_start.y) - dir.y * (p.x - l.u_start.x)).abs() / len
    };
    dist(a).max(dist(b)) / (std::f64::consts::SQRT_2 * effective_bound(l.noise_bound))
}

/// Point test: projection within `n` pixels on each axis.
pub fn point_passes(c: &PointCorrespondence, pose: &Pose, k: &CameraIntrinsics) -> bool {
    point_residual(c, pose, k) <= 1.0
}

/// Line test: both projected world endpoints within `sqrt(2) n` pixels of
/// the observed image line.
pub fn line_passes(l: &LineCorrespondence, pose: &Pose, k: &CameraIntrinsics) -> bool {
    line_residual(l, pose, k) <= 1.0
}

/// Everything passing its bounded-error test at `pose`.
pub fn consensus_at(
    points: &[PointCorrespondence],
    lines: &[LineCorrespondence],
    pose: &Pose,
    k: &CameraIntrinsics,
) -> Consensus {
    Consensus {
        point_ids: points
            .iter()
            .filter(|c| point_passes(c, pose, k))
            .map(|c| c.id)
            .collect(),
        line_ids: lines
            .iter()
            .filter(|l| line_passes(l, pose, k))
            .map(|l| l.id)
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub tims: f64,
    pub ransac: f64,
    pub rotation: f64,
    pub hypotheses: f64,
    pub voting: f64,
    pub refinement: f64,
}

impl StageTimings {
    pub fn total(&self) -> f64 {
        self.tims + self.ransac + self.rotation + self.hypotheses + self.voting + self.refinement
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationResult {
    pub pose: Pose,
    pub alpha: f64,
    pub consensus_point_ids: Vec<usize>,
    pub consensus_line_ids: Vec<usize>,
    /// TIM consensus at the searched yaw.
    pub rotation_cardinality: usize,
    /// Distinct correspondences in the winning translation vote.
    pub translation_cardinality: usize,
    pub bnb_expansions: usize,
    pub stage_timings: StageTimings,
    pub trace: Option<Trace>,
}

fn subset<T: Clone>(items: &[T], keep: impl Fn(&T) -> bool) -> Vec<T> {
    items.iter().filter(|x| keep(x)).cloned().collect()
}

const MINIMAX_ROUNDS: usize = 30;
const GROW_ROUNDS: usize = 4;
/// Correspondences within this multiple of their bound at the current pose
/// are offered back to the feasibility trim.
const GROW_SLACK: f64 = 3.0;

fn members_of<'a>(
    points: &'a [PointCorrespondence],
    lines: &'a [LineCorrespondence],
    members: &Consensus,
) -> (Vec<PointCorrespondence>, Vec<LineCorrespondence>) {
    (
        subset(points, |c| members.point_ids.contains(&c.id)),
        subset(lines, |l| members.line_ids.contains(&l.id)),
    )
}

/// A pose at which every member of `members` passes its bounded-error test,
/// if the least-squares or minimax fit from `start` finds one.
fn feasible_pose(
    points: &[PointCorrespondence],
    lines: &[LineCorrespondence],
    start: &Pose,
    prior: &GravityPrior,
    k: &CameraIntrinsics,
    config: &SolverConfig,
) -> (RefineOutcome, bool) {
    let ls = refine(
        points,
        lines,
        start,
        prior,
        k,
        config.refine_iters,
        config.refine_tol,
    );
    if max_normalized_residual(points, lines, &ls.pose, prior, k) <= 1.0 {
        return (ls, true);
    }
    let mm = refine_minimax(points, lines, &ls.pose, prior, k, MINIMAX_ROUNDS);
    let ok = mm.final_cost <= 1.0;
    (if ok { mm } else { ls }, ok)
}

/// Shrink `members` until a pose exists at which all of them pass their
/// bounded-error tests. The voting winner can hold a few outliers whose
/// boxes overlap the inliers' common cell; each round drops the member with
/// the largest residual at the voted pose, where such outliers stand out.
/// Fits over the untrimmed set are not used for ranking, as a few gross
/// outliers can drag them far enough to make inliers look worst.
fn trim_to_feasible(
    points: &[PointCorrespondence],
    lines: &[LineCorrespondence],
    members: &mut Consensus,
    start: &Pose,
    prior: &GravityPrior,
    k: &CameraIntrinsics,
    config: &SolverConfig,
) -> Option<RefineOutcome> {
    while members.is_solvable() {
        let (ps, ls) = members_of(points, lines, members);
        let (out, ok) = feasible_pose(&ps, &ls, start, prior, k, config);
        if ok {
            return Some(out);
        }
        let worst_point = ps
            .iter()
            .enumerate()
            .map(|(j, c)| (point_residual(c, start, k), j))
            .max_by(|a, b| a.0.total_cmp(&b.0));
        let worst_line = ls
            .iter()
            .enumerate()
            .map(|(j, l)| (line_residual(l, start, k), j))
            .max_by(|a, b| a.0.total_cmp(&b.0));
        match (worst_point, worst_line) {
            (Some((rp, j)), wl) if wl.is_none_or(|(rl, _)| rp >= rl) => {
                members.point_ids.remove(j);
            }
            (_, Some((_, j))) => {
                members.line_ids.remove(j);
            }
            _ => break,
        }
    }
    None
}

/// Component-wise median of the nominal pair translations of the winning
/// hypotheses. The winning cell can sit well away from the inliers' common
/// translation when long boxes from mixed pairs overlap there; pairs of two
/// inliers still cluster at the truth.
fn median_translation(hyps: &[TranslationHypothesis], ids: &[usize]) -> Vector3<f64> {
    let mut t = Vector3::zeros();
    for axis in 0..3 {
        let mut v: Vec<f64> = ids.iter().map(|&i| hyps[i].t_hat[axis]).collect();
        v.sort_by(f64::total_cmp);
        t[axis] = match v.len() {
            0 => 0.0,
            n if n % 2 == 1 => v[n / 2],
            n => 0.5 * (v[n / 2 - 1] + v[n / 2]),
        };
    }
    t
}

/// Alternate trimming `members` to feasibility with offering back every
/// correspondence near the current pose, until the set is stable. Returns
/// the final pose, its yaw, and everything passing its test there.
#[allow(clippy::too_many_arguments)]
fn grow_consensus(
    points: &[PointCorrespondence],
    lines: &[LineCorrespondence],
    mut members: Consensus,
    start: &Pose,
    alpha: f64,
    prior: &GravityPrior,
    k: &CameraIntrinsics,
    config: &SolverConfig,
) -> (Pose, f64, Consensus) {
    let mut pose = *start;
    let mut alpha_hat = alpha;
    for _ in 0..GROW_ROUNDS {
        if let Some(out) = trim_to_feasible(points, lines, &mut members, &pose, prior, k, config) {
            pose = out.pose;
            alpha_hat = out.alpha;
        }
        let candidates = Consensus {
            point_ids: points
                .iter()
                .filter(|c| point_residual(c, &pose, k) <= GROW_SLACK)
                .map(|c| c.id)
                .collect(),
            line_ids: lines
                .iter()
                .filter(|l| line_residual(l, &pose, k) <= GROW_SLACK)
                .map(|l| l.id)
                .collect(),
        };
        if candidates == members {
            break;
        }
        members = candidates;
    }
    let consensus = consensus_at(points, lines, &pose, k);
    (pose, alpha_hat, consensus)
}

/// Estimate the pose maximizing the bounded-error consensus.
///
/// Stages: TIMs, RANSAC seeds, yaw branch-and-bound, translation hypotheses
/// and voting, then refinement. The voting winner is trimmed until some
/// refined pose satisfies all its members' bounds; correspondences close to
/// that pose are then offered back and the trim repeated until the set is
/// stable. This runs from the voted translation and from the median pair
/// translation, keeping the larger result. The returned consensus is
/// everything passing its test at the final pose.
pub fn solve(
    points: &[PointCorrespondence],
    lines: &[LineCorrespondence],
    prior: &GravityPrior,
    k: &CameraIntrinsics,
    config: &SolverConfig,
    want_trace: bool,
) -> Result<LocalizationResult, PipelineError> {
    if points.len() < 2 && (points.is_empty() || lines.is_empty()) {
        return Err(PipelineError::InsufficientInput {
            points: points.len(),
            lines: lines.len(),
        });
    }
    let mut timings = StageTimings::default();
    let mut trace = want_trace.then(Trace::default);

    let clock = Instant::now();
    let tims = build_all_tims(points, lines, prior, k, config.pair_cap, config.bound_mode).tims;
    timings.tims = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let seeds = if config.ransac_iterations > 0 {
        ransac_2entity(
            points,
            lines,
            prior,
            k,
            config.ransac_iterations,
            config.rng_seed,
            config.bnb.ransac_seeds,
            0.5 * config.bnb.seed_width,
        )?
        .seeds
    } else {
        Vec::new()
    };
    timings.ransac = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let rotation = bnb_search(&tims, &config.bnb, &seeds, trace.as_mut())?;
    let alpha = rotation.best.alpha;
    timings.rotation = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let r = build_rotation(prior, alpha);
    let hyps = generate_hypotheses(points, lines, &r, k, config.pair_cap).hypotheses;
    timings.hypotheses = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let voted = match config.voting_mode {
        VotingMode::Prioritized => prioritized_progressive_vote(&hyps, trace.as_mut())?,
        VotingMode::DimensionWise => dimension_wise_vote(&hyps, trace.as_mut())?,
    };
    timings.voting = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let mut members = Consensus::default();
    for id in &voted.consensus_ids {
        match *id {
            CorrId::Point(i) => members.point_ids.push(i),
            CorrId::Line(i) => members.line_ids.push(i),
        }
    }
    let starts = [voted.t, median_translation(&hyps, &voted.hypothesis_ids)];
    let (pose, alpha_hat, consensus) = starts
        .iter()
        .map(|t| {
            grow_consensus(
                points,
                lines,
                members.clone(),
                &Pose::new(r, *t),
                alpha,
                prior,
                k,
                config,
            )
        })
        .reduce(|best, next| {
            if next.2.len() > best.2.len() {
                next
            } else {
                best
            }
        })
        .expect("two starts");
    timings.refinement = clock.elapsed().as_secs_f64();

    if consensus.is_empty() {
        return Err(PipelineError::NoConsensus {
            stage: "verification",
        });
    }
    Ok(LocalizationResult {
        pose,
        alpha: alpha_hat,
        consensus_point_ids: consensus.point_ids,
        consensus_line_ids: consensus.line_ids,
        rotation_cardinality: rotation.best.cardinality,
        translation_cardinality: voted.cardinality,
        bnb_expansions: rotation.expansions,
        stage_timings: timings,
        trace,
    })
}

/// Pose from the best RANSAC sample alone, without local optimization.
pub fn solve_ransac_baseline(
    points: &[PointCorrespondence],
    lines: &[LineCorrespondence],
    prior: &GravityPrior,
    k: &CameraIntrinsics,
    config: &SolverConfig,
) -> Result<LocalizationResult, PipelineError> {
    let clock = Instant::now();
    let out = ransac_2entity(
        points,
        lines,
        prior,
        k,
        config.ransac_iterations,
        config.rng_seed,
        1,
        0.0,
    )?;
    let best = out
        .best
        .ok_or(PipelineError::NoConsensus { stage: "ransac" })?;
    let timings = StageTimings {
        ransac: clock.elapsed().as_secs_f64(),
        ..StageTimings::default()
    };
    Ok(LocalizationResult {
        pose: best.pose,
        alpha: best.alpha,
        rotation_cardinality: best.consensus.len(),
        translation_cardinality: best.consensus.len(),
        consensus_point_ids: best.consensus.point_ids,
        consensus_line_ids: best.consensus.line_ids,
        bnb_expansions: 0,
        stage_timings: timings,
        trace: None,
    })
}
