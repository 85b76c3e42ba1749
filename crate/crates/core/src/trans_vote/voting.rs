//! Interval voting over translation hypotheses.
//!
//! Along one axis, the sorted interval endpoints cut the line into cells;
//! every point inside a cell is contained in exactly the same hypotheses, so
//! a 1-D consensus problem has at most `2K - 1` distinct answers. A cell is
//! scored by the number of distinct correspondences among its hypotheses.

use super::hypothesis::{CorrId, TranslationHypothesis};
use crate::trace::{record, Trace, TraceEvent};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VoteError {
    #[error("no translation hypotheses to vote on")]
    NoConsensus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VotingMode {
    #[default]
    Prioritized,
    DimensionWise,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AxisCell {
    pub lo: f64,
    pub hi: f64,
    /// Hypothesis indices, ascending.
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AxisConsensusMap {
    pub axis: usize,
    /// All `2K` endpoints, ascending.
    pub breakpoints: Vec<f64>,
    /// Cells in ascending position. A zero-width cell appears only where a
    /// zero-width hypothesis sits.
    pub cells: Vec<AxisCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationResult {
    pub t: Vector3<f64>,
    /// Distinct correspondences backing the winning hypotheses, sorted.
    pub consensus_ids: Vec<CorrId>,
    pub cardinality: usize,
    /// Winning hypothesis indices, ascending.
    pub hypothesis_ids: Vec<usize>,
}

/// Distinct correspondences referenced by a set of hypotheses.
pub fn unique_correspondences(hyps: &[TranslationHypothesis], members: &[usize]) -> Vec<CorrId> {
    let mut ids: Vec<CorrId> = members.iter().flat_map(|&k| hyps[k].members).collect();
    ids.sort_unstable();
    ids.dedup();
    ids
}

/// The arrangement of every hypothesis along `axis`.
pub fn vote_axis(hyps: &[TranslationHypothesis], axis: usize) -> AxisConsensusMap {
    let all: Vec<usize> = (0..hyps.len()).collect();
    vote_axis_subset(hyps, &all, axis)
}

/// The arrangement of `subset` along `axis`.
pub fn vote_axis_subset(
    hyps: &[TranslationHypothesis],
    subset: &[usize],
    axis: usize,
) -> AxisConsensusMap {
    let ctx = Context::new(hyps);
    let mut breakpoints: Vec<f64> = subset
        .iter()
        .flat_map(|&k| [hyps[k].lo[axis], hyps[k].hi[axis]])
        .collect();
    breakpoints.sort_by(f64::total_cmp);
    let cells = ctx
        .sweep(subset, axis, axis)
        .into_iter()
        .map(|c| {
            let mut members = ctx.members(subset, axis, &c);
            members.sort_unstable();
            AxisCell {
                lo: c.lo,
                hi: c.hi,
                members,
            }
        })
        .collect();
    AxisConsensusMap {
        axis,
        breakpoints,
        cells,
    }
}

/// A cell of a sweep, with its distinct-correspondence count and summed
/// member widths but without materialized members.
#[derive(Debug, Clone, Copy)]
struct SweepCell {
    lo: f64,
    hi: f64,
    cardinality: usize,
    width: i128,
}

/// Widths are summed in fixed point so a cell's total does not depend on
/// the order its members were added.
const WIDTH_SCALE: f64 = (1u64 << 40) as f64;

fn fixed(w: f64) -> i128 {
    (w * WIDTH_SCALE).round() as i128
}

/// Dense correspondence indices, so sweeps can count distinct
/// correspondences incrementally.
struct Context<'a> {
    hyps: &'a [TranslationHypothesis],
    corr: Vec<[usize; 2]>,
    n_corr: usize,
    /// Fixed-point widths per hypothesis: along x, y, z, and their sum.
    widths: Vec<[i128; 4]>,
    /// Per axis, hypothesis indices sorted by lower and by upper endpoint.
    by_lo: [Vec<usize>; 3],
    by_hi: [Vec<usize>; 3],
}

impl<'a> Context<'a> {
    fn new(hyps: &'a [TranslationHypothesis]) -> Self {
        let mut ids: Vec<CorrId> = hyps.iter().flat_map(|h| h.members).collect();
        ids.sort_unstable();
        ids.dedup();
        let index = |c: &CorrId| ids.binary_search(c).expect("collected above");
        let corr = hyps
            .iter()
            .map(|h| [index(&h.members[0]), index(&h.members[1])])
            .collect();
        let widths = hyps
            .iter()
            .map(|h| {
                let w = [fixed(h.width(0)), fixed(h.width(1)), fixed(h.width(2))];
                [w[0], w[1], w[2], w[0] + w[1] + w[2]]
            })
            .collect();
        let sorted = |key: &dyn Fn(&TranslationHypothesis) -> f64| {
            let mut order: Vec<usize> = (0..hyps.len()).collect();
            order.sort_by(|&a, &b| key(&hyps[a]).total_cmp(&key(&hyps[b])));
            order
        };
        let by_lo = [0, 1, 2].map(|a| sorted(&|h| h.lo[a]));
        let by_hi = [0, 1, 2].map(|a| sorted(&|h| h.hi[a]));
        Context {
            hyps,
            corr,
            n_corr: ids.len(),
            widths,
            by_lo,
            by_hi,
        }
    }

    /// Cells of `subset` along `axis` in ascending position. Between two
    /// consecutive distinct endpoints the active set is constant; a
    /// zero-width cell is emitted only where a zero-width hypothesis sits.
    /// Cell widths sum column `width_col` of the member widths.
    fn sweep(&self, subset: &[usize], axis: usize, width_col: usize) -> Vec<SweepCell> {
        let hyps = self.hyps;
        let mut in_subset = vec![false; hyps.len()];
        for &k in subset {
            in_subset[k] = true;
        }
        let starts: Vec<(f64, usize)> = self.by_lo[axis]
            .iter()
            .filter(|&&k| in_subset[k])
            .map(|&k| (hyps[k].lo[axis], k))
            .collect();
        let ends: Vec<(f64, usize)> = self.by_hi[axis]
            .iter()
            .filter(|&&k| in_subset[k])
            .map(|&k| (hyps[k].hi[axis], k))
            .collect();
        let mut points: Vec<f64> = subset
            .iter()
            .filter(|&&k| hyps[k].lo[axis] == hyps[k].hi[axis])
            .map(|&k| hyps[k].lo[axis])
            .collect();
        points.sort_by(f64::total_cmp);

        let mut counts = vec![0u32; self.n_corr];
        let mut cardinality = 0usize;
        let mut width = 0i128;
        let mut cells = Vec::with_capacity(2 * subset.len());
        let (mut si, mut ei, mut pi) = (0, 0, 0);
        while ei < ends.len() {
            let x = match starts.get(si) {
                Some(s) if s.0 <= ends[ei].0 => s.0,
                _ => ends[ei].0,
            };
            while si < starts.len() && starts[si].0 == x {
                width += self.widths[starts[si].1][width_col];
                for &c in &self.corr[starts[si].1] {
                    if counts[c] == 0 {
                        cardinality += 1;
                    }
                    counts[c] += 1;
                }
                si += 1;
            }
            while pi < points.len() && points[pi] < x {
                pi += 1;
            }
            if pi < points.len() && points[pi] == x {
                cells.push(SweepCell {
                    lo: x,
                    hi: x,
                    cardinality,
                    width,
                });
            }
            while ei < ends.len() && ends[ei].0 == x {
                width -= self.widths[ends[ei].1][width_col];
                for &c in &self.corr[ends[ei].1] {
                    counts[c] -= 1;
                    if counts[c] == 0 {
                        cardinality -= 1;
                    }
                }
                ei += 1;
            }
            let next = match (starts.get(si), ends.get(ei)) {
                (Some(s), Some(e)) => Some(s.0.min(e.0)),
                (None, Some(e)) => Some(e.0),
                _ => None,
            };
            if let Some(next) = next {
                cells.push(SweepCell {
                    lo: x,
                    hi: next,
                    cardinality,
                    width,
                });
            }
        }
        cells
    }

    /// Hypotheses of `subset` covering `cell`, in subset order.
    fn members(&self, subset: &[usize], axis: usize, cell: &SweepCell) -> Vec<usize> {
        subset
            .iter()
            .copied()
            .filter(|&k| self.hyps[k].lo[axis] <= cell.lo && cell.hi <= self.hyps[k].hi[axis])
            .collect()
    }
}

/// Ranking key: more distinct correspondences, then tighter hypotheses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Score {
    cardinality: usize,
    width: i128,
}

impl Score {
    fn of(cell: &SweepCell) -> Self {
        Score {
            cardinality: cell.cardinality,
            width: cell.width,
        }
    }

    /// `Less` means better.
    fn rank(&self, other: &Score) -> Ordering {
        other
            .cardinality
            .cmp(&self.cardinality)
            .then(self.width.cmp(&other.width))
    }
}

/// Cell indices by decreasing cardinality, ties by position.
fn by_cardinality(cells: &[SweepCell]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..cells.len()).collect();
    order.sort_by(|&a, &b| {
        cells[b]
            .cardinality
            .cmp(&cells[a].cardinality)
            .then(a.cmp(&b))
    });
    order
}

fn finish(hyps: &[TranslationHypothesis], members: Vec<usize>) -> TranslationResult {
    let mut t = Vector3::zeros();
    for axis in 0..3 {
        let lo = members
            .iter()
            .map(|&k| hyps[k].lo[axis])
            .fold(f64::NEG_INFINITY, f64::max);
        let hi = members
            .iter()
            .map(|&k| hyps[k].hi[axis])
            .fold(f64::INFINITY, f64::min);
        t[axis] = 0.5 * (lo + hi);
    }
    let consensus_ids = unique_correspondences(hyps, &members);
    TranslationResult {
        t,
        cardinality: consensus_ids.len(),
        consensus_ids,
        hypothesis_ids: members,
    }
}

/// Greedy per-axis voting: the best x cell's members are voted on y, then z.
/// Cells tied on cardinality go to the smallest width sum along the axis,
/// then the lowest position.
pub fn dimension_wise_vote(
    hyps: &[TranslationHypothesis],
    mut trace: Option<&mut Trace>,
) -> Result<TranslationResult, VoteError> {
    if hyps.is_empty() {
        return Err(VoteError::NoConsensus);
    }
    let ctx = Context::new(hyps);
    let mut members: Vec<usize> = (0..hyps.len()).collect();
    for axis in 0..3 {
        let cells = ctx.sweep(&members, axis, axis);
        let best = (0..cells.len())
            .min_by(|&a, &b| {
                Score::of(&cells[a])
                    .rank(&Score::of(&cells[b]))
                    .then(a.cmp(&b))
            })
            .expect("a non-empty subset has a cell");
        record(&mut trace, || TraceEvent::Vote {
            axis,
            hypotheses: members.len(),
            cells: cells.len(),
            best: cells[best].cardinality,
        });
        members = ctx.members(&members, axis, &cells[best]);
    }
    members.sort_unstable();
    Ok(finish(hyps, members))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VoteOptions {
    /// Skip cells that cannot beat the incumbent. Disabling this gives a
    /// slow reference search.
    pub cutoffs: bool,
    /// Also visit x and y cells that can only tie the incumbent, so that
    /// equal-cardinality cells anywhere are ranked by total width. Without
    /// it the first maximal cell in exploration order wins. The returned
    /// cardinality is the same either way; with many inliers, tied cells
    /// number in the hundreds of thousands.
    pub resolve_ties: bool,
}

impl Default for VoteOptions {
    fn default() -> Self {
        Self {
            cutoffs: true,
            resolve_ties: false,
        }
    }
}

/// Nested voting that explores x cells, then y and z cells within each, in
/// decreasing cardinality, stopping once no cell can beat the incumbent.
/// The winner is the largest set of hypotheses sharing one 3-D point. Within
/// a z sweep, equal cells go to the smallest total width, then the lowest
/// position; across sweeps, the first one found in exploration order wins
/// (see [`VoteOptions::resolve_ties`]).
pub fn prioritized_progressive_vote(
    hyps: &[TranslationHypothesis],
    trace: Option<&mut Trace>,
) -> Result<TranslationResult, VoteError> {
    prioritized_progressive_vote_with(hyps, VoteOptions::default(), trace)
}

pub fn prioritized_progressive_vote_with(
    hyps: &[TranslationHypothesis],
    options: VoteOptions,
    mut trace: Option<&mut Trace>,
) -> Result<TranslationResult, VoteError> {
    if hyps.is_empty() {
        return Err(VoteError::NoConsensus);
    }
    let ctx = Context::new(hyps);
    let all: Vec<usize> = (0..hyps.len()).collect();
    let mut best: Option<(Score, [usize; 3], Vec<usize>)> = None;
    let mut incumbent = 0usize;
    let skip = |card: usize, incumbent: usize| {
        options.cutoffs
            && (card < incumbent || (!options.resolve_ties && card == incumbent && incumbent > 0))
    };

    let cells_x = ctx.sweep(&all, 0, 0);
    record(&mut trace, || TraceEvent::Vote {
        axis: 0,
        hypotheses: all.len(),
        cells: cells_x.len(),
        best: cells_x.iter().map(|c| c.cardinality).max().unwrap_or(0),
    });
    for ix in by_cardinality(&cells_x) {
        if skip(cells_x[ix].cardinality, incumbent) {
            break;
        }
        let members_x = ctx.members(&all, 0, &cells_x[ix]);
        // No 3-D cell inside this x cell can hold more correspondences than
        // the best z cell of its whole member set.
        let z_bound = ctx
            .sweep(&members_x, 2, 3)
            .iter()
            .map(|c| c.cardinality)
            .max()
            .unwrap_or(0);
        if skip(z_bound, incumbent) {
            continue;
        }
        let cells_y = ctx.sweep(&members_x, 1, 1);
        for iy in by_cardinality(&cells_y) {
            if skip(cells_y[iy].cardinality, incumbent) {
                break;
            }
            let members_y = ctx.members(&members_x, 1, &cells_y[iy]);
            if members_y.is_empty() {
                continue;
            }
            let cells_z = ctx.sweep(&members_y, 2, 3);
            let Some(iz) = (0..cells_z.len()).min_by(|&a, &b| {
                Score::of(&cells_z[a])
                    .rank(&Score::of(&cells_z[b]))
                    .then(a.cmp(&b))
            }) else {
                continue;
            };
            let score = Score::of(&cells_z[iz]);
            let path = [ix, iy, iz];
            let better = match &best {
                None => true,
                Some((s, p, _)) => match score.rank(s) {
                    Ordering::Less => true,
                    Ordering::Equal => options.resolve_ties && path < *p,
                    Ordering::Greater => false,
                },
            };
            if better {
                incumbent = score.cardinality;
                let mut members = ctx.members(&members_y, 2, &cells_z[iz]);
                members.sort_unstable();
                best = Some((score, path, members));
            }
        }
    }
    let (_, _, members) = best.expect("a non-empty arrangement has at least one cell");
    Ok(finish(hyps, members))
}
