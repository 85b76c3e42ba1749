//! Translation recovery once yaw is fixed: closed-form pair hypotheses with
//! noise enclosures, then interval voting for the largest consistent set.

pub mod hypothesis;
pub mod interval;
pub mod voting;

pub use hypothesis::{
    bound_hypothesis, generate_hypotheses, hypothesis_point_line, hypothesis_point_point,
    pair_pivot, solve_pair_point_line, solve_pair_point_point, solve_pair_point_point_pivoted,
    CorrId, HypothesisError, HypothesisSet, PairPartner, Pivot, TranslationHypothesis,
};
pub use interval::{mccormick, Interval, Scalar};
pub use voting::{
    dimension_wise_vote, prioritized_progressive_vote, prioritized_progressive_vote_with,
    unique_correspondences, vote_axis, vote_axis_subset, AxisCell, AxisConsensusMap,
    TranslationResult, VoteError, VoteOptions, VotingMode,
};
