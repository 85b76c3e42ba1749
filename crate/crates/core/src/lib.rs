//! Globally optimal camera localization under a known gravity direction.
//!
//! With pitch and roll fixed by an inertial prior, yaw is found by
//! branch-and-bound over translation-invariant measurements ([`tim`],
//! [`rot_bnb`]), translation by voting over interval-bounded pairwise
//! hypotheses ([`trans_vote`]), and the result is polished by a 4-DoF
//! reprojection refinement ([`pipeline`]). [`synthbench`] generates
//! synthetic scenes and runs Monte-Carlo sweeps.

pub mod geom;
pub mod pipeline;
pub mod rot_bnb;
pub mod synthbench;
pub mod tim;
pub mod trace;
pub mod trans_vote;

pub use geom::{pose_error, CameraIntrinsics, GravityPrior, Pose, PoseError};
pub use pipeline::{solve, solve_ransac_baseline, LocalizationResult, PipelineError, SolverConfig};
pub use rot_bnb::BnbConfig;
pub use tim::{BoundMode, LineCorrespondence, PointCorrespondence};
pub use trace::{Trace, TraceEvent};
pub use trans_vote::{CorrId, VotingMode};
