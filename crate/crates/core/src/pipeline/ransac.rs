//! Two-entity RANSAC under a gravity prior: a point pair, or a point and a
//! line, fixes yaw through the zeros of their TIM and translation through the
//! pair solver. Used to seed the rotation search and as a baseline.

use super::{consensus_at, Consensus, PipelineError};
use crate::geom::{angle_distance, build_rotation, CameraIntrinsics, GravityPrior, Pose};
use crate::tim::{line_tim, point_tim, BoundMode, LineCorrespondence, PointCorrespondence};
use crate::trans_vote::{solve_pair_point_line, solve_pair_point_point, PairPartner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

#[derive(Debug, Clone, PartialEq)]
pub struct RansacHypothesis {
    pub alpha: f64,
    pub pose: Pose,
    pub consensus: Consensus,
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacOutput {
    /// Up to `max_seeds` yaws with their consensus sizes, best first,
    /// pairwise further apart than the separation passed in.
    pub seeds: Vec<(f64, usize)>,
    pub best: Option<RansacHypothesis>,
}

/// Best hypothesis from one minimal sample, or `None` if it was degenerate.
fn run_iteration(
    points: &[PointCorrespondence],
    lines: &[LineCorrespondence],
    prior: &GravityPrior,
    k: &CameraIntrinsics,
    rng_seed: u64,
    iteration: usize,
) -> Option<RansacHypothesis> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    rng.set_stream(iteration as u64);
    let ia = rng.random_range(0..points.len());
    let a = &points[ia];
    let pick = rng.random_range(0..points.len() - 1 + lines.len());
    let partner = if pick + 1 < points.len() {
        PairPartner::Point(&points[if pick >= ia { pick + 1 } else { pick }])
    } else {
        PairPartner::Line(&lines[pick + 1 - points.len()])
    };
    let tim = match partner {
        PairPartner::Point(b) => point_tim(a, b, prior, k, BoundMode::PairMin),
        PairPartner::Line(l) => line_tim(l, prior, k, BoundMode::PairMin),
    }
    .ok()?;

    // Both TIM roots are scored; the one with the larger consensus wins.
    let mut best: Option<RansacHypothesis> = None;
    for alpha in tim.solve_level(0.0) {
        let r = build_rotation(prior, alpha);
        let t = match partner {
            PairPartner::Point(b) => solve_pair_point_point(a, b, &r, k),
            PairPartner::Line(l) => solve_pair_point_line(a, l, &r, k),
        };
        let Ok(t) = t else { continue };
        let pose = Pose::new(r, t);
        let consensus = consensus_at(points, lines, &pose, k);
        if best
            .as_ref()
            .is_none_or(|b| consensus.len() > b.consensus.len())
        {
            best = Some(RansacHypothesis {
                alpha,
                pose,
                consensus,
                iteration,
            });
        }
    }
    best
}

/// Runs `iterations` independent minimal samples. Each iteration draws from
/// its own ChaCha stream of `rng_seed`, so the output does not depend on
/// thread scheduling.
#[allow(clippy::too_many_arguments)]
pub fn ransac_2entity(
    points: &[PointCorrespondence],
    lines: &[LineCorrespondence],
    prior: &GravityPrior,
    k: &CameraIntrinsics,
    iterations: usize,
    rng_seed: u64,
    max_seeds: usize,
    seed_separation: f64,
) -> Result<RansacOutput, PipelineError> {
    if points.is_empty() || points.len() + lines.len() < 2 {
        return Err(PipelineError::InsufficientInput {
            points: points.len(),
            lines: lines.len(),
        });
    }
    let mut hyps: Vec<RansacHypothesis> = (0..iterations)
        .into_par_iter()
        .filter_map(|i| run_iteration(points, lines, prior, k, rng_seed, i))
        .collect();
    // Stable sort keeps iteration order among equal consensus sizes.
    hyps.sort_by_key(|h| std::cmp::Reverse(h.consensus.len()));

    let mut seeds: Vec<(f64, usize)> = Vec::new();
    for h in &hyps {
        if seeds.len() >= max_seeds {
            break;
        }
        if seeds
            .iter()
            .all(|s| angle_distance(s.0, h.alpha) > seed_separation)
        {
            seeds.push((h.alpha, h.consensus.len()));
        }
    }
    Ok(RansacOutput {
        seeds,
        best: hyps.into_iter().next(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{pose_error, yaw_pitch_roll};
    use crate::synthbench::{generate_scene, SceneConfig};

    #[test]
    fn same_seed_same_output_and_seeds_are_separated() {
        let s = generate_scene(&SceneConfig {
            outlier_rate: 0.5,
            rng_seed: 4,
            ..SceneConfig::default()
        })
        .unwrap();
        let k = s.config.camera;
        let a = ransac_2entity(&s.points, &s.lines, &s.prior, &k, 300, 7, 4, 0.1).unwrap();
        let b = ransac_2entity(&s.points, &s.lines, &s.prior, &k, 300, 7, 4, 0.1).unwrap();
        assert_eq!(a, b);
        assert!(!a.seeds.is_empty() && a.seeds.len() <= 4);
        for (i, x) in a.seeds.iter().enumerate() {
            for y in &a.seeds[i + 1..] {
                assert!(angle_distance(x.0, y.0) > 0.1);
            }
        }
        assert!(a.seeds.windows(2).all(|w| w[0].1 >= w[1].1));

        let best = a.best.unwrap();
        assert_eq!(best.consensus.len(), a.seeds[0].1);
        let (yaw, _, _) = yaw_pitch_roll(&s.true_pose.rotation);
        assert!(angle_distance(best.alpha, yaw) < 2f64.to_radians());
        assert!(pose_error(&best.pose, &s.true_pose).translation < 0.2);
    }

    #[test]
    fn zero_iterations_give_no_seeds() {
        let s = generate_scene(&SceneConfig::default()).unwrap();
        let out = ransac_2entity(
            &s.points,
            &s.lines,
            &s.prior,
            &s.config.camera,
            0,
            1,
            4,
            0.1,
        )
        .unwrap();
        assert!(out.seeds.is_empty() && out.best.is_none());
    }

    #[test]
    fn needs_a_point_and_a_partner() {
        let s = generate_scene(&SceneConfig::default()).unwrap();
        let err = ransac_2entity(
            &s.points[..1],
            &[],
            &s.prior,
            &s.config.camera,
            10,
            1,
            4,
            0.1,
        )
        .unwrap_err();
        assert_eq!(
            err,
            PipelineError::InsufficientInput {
                points: 1,
                lines: 0
            }
        );
    }
}
