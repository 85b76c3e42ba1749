//! Branch-and-bound over yaw.
//!
//! The objective `E(alpha)` counts constraints with `|d(alpha)| <= bound`.
//! Over an interval, replacing `|d|` by its exact minimum gives an upper
//! bound on `E`. Nodes are explored best-first and bisected until they are
//! narrower than `epsilon_alpha`; terminal nodes are then solved exactly by
//! intersecting the feasible arcs of their surviving constraints.

use crate::geom::wrap_angle;
use crate::tim::{feasible_arcs, TimConstraint, YawInterval};
use crate::trace::{record, Trace, TraceEvent};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::{PI, TAU};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BnbError {
    #[error("no constraints to search over")]
    EmptyInput,
    /// Fewer than two constraints agree on any yaw.
    #[error("no consensus: best cardinality {cardinality}")]
    NoConsensus { cardinality: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BnbConfig {
    /// Nodes narrower than this are solved exactly instead of split.
    pub epsilon_alpha: f64,
    /// How many seed yaws open a search window when seeding is on.
    pub ransac_seeds: usize,
    /// Width of the window around each seed.
    pub seed_width: f64,
    /// Children re-test only the constraints that survived their parent.
    pub use_cache: bool,
    /// Restrict the search to windows around the seeds.
    pub use_seeding: bool,
    pub branch_factor: usize,
}

impl Default for BnbConfig {
    fn default() -> Self {
        Self {
            epsilon_alpha: 1e-4,
            ransac_seeds: 10,
            seed_width: 0.1,
            use_cache: true,
            use_seeding: true,
            branch_factor: 2,
        }
    }
}

impl BnbConfig {
    /// Full-circle search; the returned cardinality is the global maximum.
    pub fn exhaustive() -> Self {
        Self {
            use_seeding: false,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationCandidate {
    pub alpha: f64,
    pub cardinality: usize,
    /// Indices into the constraint slice.
    pub inlier_ids: Vec<usize>,
    /// Sum of `|d(alpha)|` over the inliers; breaks cardinality ties.
    pub residual_sum: f64,
}

impl RotationCandidate {
    fn empty() -> Self {
        Self {
            alpha: 0.0,
            cardinality: 0,
            inlier_ids: Vec::new(),
            residual_sum: 0.0,
        }
    }

    fn beats(&self, other: &RotationCandidate) -> bool {
        self.cardinality > other.cardinality
            || (self.cardinality == other.cardinality && self.residual_sum < other.residual_sum)
    }
}

/// Search node: an interval, its bound, and the constraints that can still
/// be satisfied somewhere inside it.
#[derive(Debug, Clone)]
pub struct BnbNode {
    pub interval: YawInterval,
    pub upper: usize,
    pub active_ids: Vec<usize>,
}

impl PartialEq for BnbNode {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for BnbNode {}

impl PartialOrd for BnbNode {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for BnbNode {
    /// Max-heap order: larger bound, then wider, then smaller `lo`.
    fn cmp(&self, other: &Self) -> Ordering {
        self.upper
            .cmp(&other.upper)
            .then_with(|| self.interval.width().total_cmp(&other.interval.width()))
            .then_with(|| other.interval.lo.total_cmp(&self.interval.lo))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnbOutcome {
    pub best: RotationCandidate,
    /// Nodes popped and processed, terminal ones included.
    pub expansions: usize,
    pub terminal_nodes: usize,
    pub pruned_nodes: usize,
}

/// Consensus at a single yaw over every constraint.
pub fn count_inliers(tims: &[TimConstraint], alpha: f64) -> RotationCandidate {
    let ids: Vec<usize> = (0..tims.len()).collect();
    count_subset(tims, &ids, alpha)
}

fn count_subset(tims: &[TimConstraint], ids: &[usize], alpha: f64) -> RotationCandidate {
    let (s, c) = alpha.sin_cos();
    let mut inlier_ids = Vec::new();
    let mut residual_sum = 0.0;
    for &i in ids {
        let t = &tims[i];
        let r = (t.d1 * s + t.d2 * c + t.d3).abs();
        if r <= t.bound {
            inlier_ids.push(i);
            residual_sum += r;
        }
    }
    RotationCandidate {
        alpha,
        cardinality: inlier_ids.len(),
        inlier_ids,
        residual_sum,
    }
}

/// Count of constraints that may hold somewhere in the interval, with their ids.
pub fn upper_bound(tims: &[TimConstraint], interval: &YawInterval) -> (usize, Vec<usize>) {
    let ids: Vec<usize> = (0..tims.len()).collect();
    upper_bound_subset(tims, &ids, interval)
}

fn upper_bound_subset(
    tims: &[TimConstraint],
    ids: &[usize],
    interval: &YawInterval,
) -> (usize, Vec<usize>) {
    let active: Vec<usize> = ids
        .iter()
        .copied()
        .filter(|&i| tims[i].lower_bound_abs(interval) <= tims[i].bound)
        .collect();
    (active.len(), active)
}

/// Windows of width `width` centered on each seed, split at the +-pi seam
/// and merged where they overlap. A width of `2 pi` or more covers the circle.
pub fn seed_subsets(seeds: &[f64], width: f64) -> Vec<YawInterval> {
    assert!(width > 0.0, "seed window width must be positive");
    if seeds.is_empty() {
        return Vec::new();
    }
    if width >= TAU {
        return vec![YawInterval::FULL];
    }
    let half = 0.5 * width;
    let mut pieces: Vec<(f64, f64)> = Vec::new();
    for &s in seeds {
        let s = wrap_angle(s);
        let (lo, hi) = (s - half, s + half);
        if lo < -PI {
            pieces.push((-PI, hi));
            pieces.push((lo + TAU, PI));
        } else if hi > PI {
            pieces.push((lo, PI));
            pieces.push((-PI, hi - TAU));
        } else {
            pieces.push((lo, hi));
        }
    }
    pieces.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<YawInterval> = Vec::new();
    for (lo, hi) in pieces {
        match merged.last_mut() {
            Some(last) if lo <= last.hi => last.hi = last.hi.max(hi),
            _ => merged.push(YawInterval { lo, hi }),
        }
    }
    merged
}

/// Exact maximum of the consensus over a small interval by 1-D stabbing of
/// the constraints' feasible arcs.
fn resolve_terminal(tims: &[TimConstraint], node: &BnbNode) -> RotationCandidate {
    let iv = node.interval;
    let arcs: Vec<YawInterval> = node
        .active_ids
        .iter()
        .flat_map(|&i| feasible_arcs(&tims[i], &iv))
        .collect();
    let mut cuts: Vec<f64> = Vec::with_capacity(2 * arcs.len() + 2);
    cuts.push(iv.lo);
    cuts.push(iv.hi);
    for a in &arcs {
        cuts.push(a.lo);
        cuts.push(a.hi);
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    // Cell c spans cuts[c]..cuts[c + 1]; point p sits at cuts[p].
    let index = |x: f64| cuts.partition_point(|&c| c < x);
    let mut cell_diff = vec![0i64; cuts.len() + 1];
    let mut point_diff = vec![0i64; cuts.len() + 1];
    for a in &arcs {
        let (l, h) = (index(a.lo), index(a.hi));
        cell_diff[l] += 1;
        cell_diff[h] -= 1;
        point_diff[l] += 1;
        point_diff[h + 1] -= 1;
    }
    let mut candidates: Vec<f64> = Vec::new();
    let mut best_count = -1i64;
    let (mut cell_run, mut point_run) = (0i64, 0i64);
    for p in 0..cuts.len() {
        cell_run += cell_diff[p];
        point_run += point_diff[p];
        if p + 1 < cuts.len() {
            let mid = 0.5 * (cuts[p] + cuts[p + 1]);
            if cell_run > best_count {
                best_count = cell_run;
                candidates.clear();
            }
            if cell_run == best_count {
                candidates.push(mid);
            }
        }
        if point_run > best_count {
            best_count = point_run;
            candidates.clear();
            candidates.push(cuts[p]);
        }
    }
    if candidates.is_empty() {
        candidates.push(iv.center());
    }
    let mut best: Option<RotationCandidate> = None;
    for alpha in candidates {
        let c = count_subset(tims, &node.active_ids, alpha);
        if best.as_ref().is_none_or(|b| c.beats(b)) {
            best = Some(c);
        }
    }
    best.unwrap_or_else(RotationCandidate::empty)
}

/// Best-first branch-and-bound for the yaw maximizing TIM consensus.
///
/// `seeds` always warm-start the incumbent. With `use_seeding` the search is
/// also confined to windows around the first `ransac_seeds` of them, which is
/// a heuristic; without it the result is globally optimal.
pub fn bnb_search(
    tims: &[TimConstraint],
    config: &BnbConfig,
    seeds: &[(f64, usize)],
    mut trace: Option<&mut Trace>,
) -> Result<BnbOutcome, BnbError> {
    if tims.is_empty() {
        return Err(BnbError::EmptyInput);
    }
    assert!(config.epsilon_alpha > 0.0 && config.branch_factor >= 2);

    let all_ids: Vec<usize> = (0..tims.len()).collect();
    let mut best = RotationCandidate::empty();
    let improve =
        |cand: RotationCandidate, best: &mut RotationCandidate, trace: &mut Option<&mut Trace>| {
            if cand.beats(best) {
                record(trace, || TraceEvent::BnbIncumbent {
                    alpha: cand.alpha,
                    cardinality: cand.cardinality,
                });
                *best = cand;
            }
        };
    for &(alpha, _) in seeds {
        improve(
            count_subset(tims, &all_ids, wrap_angle(alpha)),
            &mut best,
            &mut trace,
        );
    }

    let roots = if config.use_seeding && !seeds.is_empty() {
        let alphas: Vec<f64> = seeds
            .iter()
            .take(config.ransac_seeds.max(1))
            .map(|s| s.0)
            .collect();
        seed_subsets(&alphas, config.seed_width)
    } else {
        vec![YawInterval::FULL]
    };

    let mut heap = BinaryHeap::new();
    let mut outcome_pruned = 0;
    for interval in roots {
        let (upper, active_ids) = upper_bound_subset(tims, &all_ids, &interval);
        heap.push(BnbNode {
            interval,
            upper,
            active_ids,
        });
    }

    let mut expansions = 0;
    let mut terminal_nodes = 0;
    while let Some(node) = heap.pop() {
        if node.upper <= best.cardinality {
            outcome_pruned += 1 + heap.len();
            break;
        }
        expansions += 1;
        let terminal = node.interval.width() < config.epsilon_alpha;
        record(&mut trace, || TraceEvent::BnbNode {
            lo: node.interval.lo,
            hi: node.interval.hi,
            upper: node.upper,
            incumbent: best.cardinality,
            pruned: false,
            terminal,
        });
        if terminal {
            terminal_nodes += 1;
            improve(resolve_terminal(tims, &node), &mut best, &mut trace);
            continue;
        }
        improve(
            count_subset(tims, &node.active_ids, node.interval.center()),
            &mut best,
            &mut trace,
        );
        for child in node.interval.split(config.branch_factor) {
            let pool = if config.use_cache {
                &node.active_ids
            } else {
                &all_ids
            };
            let (upper, active_ids) = upper_bound_subset(tims, pool, &child);
            if upper > best.cardinality {
                heap.push(BnbNode {
                    interval: child,
                    upper,
                    active_ids,
                });
            } else {
                outcome_pruned += 1;
                record(&mut trace, || TraceEvent::BnbNode {
                    lo: child.lo,
                    hi: child.hi,
                    upper,
                    incumbent: best.cardinality,
                    pruned: true,
                    terminal: false,
                });
            }
        }
    }

    if best.cardinality < 2 {
        return Err(BnbError::NoConsensus {
            cardinality: best.cardinality,
        });
    }
    Ok(BnbOutcome {
        best,
        expansions,
        terminal_nodes,
        pruned_nodes: outcome_pruned,
    })
}
