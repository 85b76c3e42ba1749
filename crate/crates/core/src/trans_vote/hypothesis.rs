//! Closed-form translation from two correspondences once the rotation is
//! fixed, and its enclosure under bounded pixel noise.

use super::interval::{Interval, Scalar};
use crate::geom::CameraIntrinsics;
use crate::tim::{select_pairs, LineCorrespondence, PointCorrespondence, DEGENERACY_EPSILON};
use nalgebra::{Matrix3, Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A correspondence identifier, unique within its kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrId {
    Point(usize),
    Line(usize),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HypothesisError {
    /// Both bearings agree in x and y, so depth is unobservable.
    #[error("degenerate point pair ({i}, {j})")]
    DegeneratePair { i: usize, j: usize },
    /// The point's bearing lies in the plane back-projected from the line.
    #[error("point {i} bearing lies in the plane of line {k}")]
    DegeneratePairLine { i: usize, k: usize },
    /// A denominator interval contains zero under the pixel noise bounds.
    #[error("translation bound is unbounded for {members:?}")]
    UnboundedHypothesis { members: [CorrId; 2] },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TranslationHypothesis {
    pub t_hat: Vector3<f64>,
    pub lo: Vector3<f64>,
    pub hi: Vector3<f64>,
    pub members: [CorrId; 2],
}

impl TranslationHypothesis {
    pub fn width(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn contains(&self, t: &Vector3<f64>) -> bool {
        (0..3).all(|a| self.lo[a] <= t[a] && t[a] <= self.hi[a])
    }
}

#[derive(Debug, Clone, Copy)]
struct Bearing<S> {
    x: S,
    y: S,
}

fn bearing_point(u: &Vector2<f64>, k: &CameraIntrinsics) -> Bearing<f64> {
    Bearing {
        x: (u.x - k.cx) / k.fx,
        y: (u.y - k.cy) / k.fy,
    }
}

/// Backprojection of the pixel box `u +- n` (exact: the map is affine).
fn bearing_box(u: &Vector2<f64>, n: f64, k: &CameraIntrinsics) -> Bearing<Interval> {
    Bearing {
        x: Interval::new((u.x - n - k.cx) / k.fx, (u.x + n - k.cx) / k.fx),
        y: Interval::new((u.y - n - k.cy) / k.fy, (u.y + n - k.cy) / k.fy),
    }
}

/// Which image row of the two-point system determines depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pivot {
    X,
    Y,
}

/// The better-conditioned row for a pair, from the observed pixels.
pub fn pair_pivot(
    ci: &PointCorrespondence,
    cj: &PointCorrespondence,
    k: &CameraIntrinsics,
) -> Option<Pivot> {
    choose_pivot(&bearing_point(&ci.u, k), &bearing_point(&cj.u, k))
}

fn choose_pivot(b1: &Bearing<f64>, b2: &Bearing<f64>) -> Option<Pivot> {
    let dy = (b1.y - b2.y).abs();
    let dx = (b1.x - b2.x).abs();
    if dy.max(dx) < DEGENERACY_EPSILON {
        None
    } else if dy >= dx {
        Some(Pivot::Y)
    } else {
        Some(Pivot::X)
    }
}

/// With `lambda_1 b_1 = h + t` and `lambda_2 b_2 = R p_2 + t`, subtracting
/// gives `lambda_2 b_2 - lambda_1 b_1 = q`, `q = R (p_2 - p_1)`. The third
/// row fixes `lambda_2 = lambda_1 + q_3`; the pivot row then yields
/// `lambda_1`, and `t = lambda_1 b_1 - h`.
fn point_point<S: Scalar>(
    b1: Bearing<S>,
    b2: Bearing<S>,
    h: &Vector3<f64>,
    q: &Vector3<f64>,
    pivot: Pivot,
) -> Option<[S; 3]> {
    let lambda = match pivot {
        Pivot::Y => (S::constant(-q.y) + b2.y.scale(q.z)).checked_div(b1.y - b2.y)?,
        Pivot::X => (S::constant(-q.x) + b2.x.scale(q.z)).checked_div(b1.x - b2.x)?,
    };
    Some([
        lambda * b1.x - S::constant(h.x),
        lambda * b1.y - S::constant(h.y),
        lambda - S::constant(h.z),
    ])
}

/// Returns the plane-normal dot product with the point bearing alongside the
/// translation so callers can test the degeneracy on nominal values.
fn point_line<S: Scalar>(
    bi: Bearing<S>,
    b1: Bearing<S>,
    b2: Bearing<S>,
    h: &Vector3<f64>,
    m: &Vector3<f64>,
) -> (S, Option<[S; 3]>) {
    // n = (b1.x, b1.y, 1) x (b2.x, b2.y, 1)
    let n1 = b1.y - b2.y;
    let n2 = b2.x - b1.x;
    let n3 = b1.x * b2.y - b1.y * b2.x;
    let den = n1 * bi.x + n2 * bi.y + n3;
    let c = h - m;
    let num = n1.scale(c.x) + n2.scale(c.y) + n3.scale(c.z);
    let t = num.checked_div(den).map(|lambda| {
        [
            lambda * bi.x - S::constant(h.x),
            lambda * bi.y - S::constant(h.y),
            lambda - S::constant(h.z),
        ]
    });
    (den, t)
}

fn to_vector(t: [f64; 3]) -> Vector3<f64> {
    Vector3::new(t[0], t[1], t[2])
}

/// Translation agreeing with both point observations under rotation `r`.
pub fn solve_pair_point_point(
    ci: &PointCorrespondence,
    cj: &PointCorrespondence,
    r: &Matrix3<f64>,
    k: &CameraIntrinsics,
) -> Result<Vector3<f64>, HypothesisError> {
    let degenerate = HypothesisError::DegeneratePair { i: ci.id, j: cj.id };
    let pivot = pair_pivot(ci, cj, k).ok_or(degenerate)?;
    solve_pair_point_point_pivoted(ci, cj, r, k, pivot)
}

/// As [`solve_pair_point_point`] with the pivot row fixed by the caller, so
/// perturbed observations can be solved with the same closed form as the
/// nominal ones.
pub fn solve_pair_point_point_pivoted(
    ci: &PointCorrespondence,
    cj: &PointCorrespondence,
    r: &Matrix3<f64>,
    k: &CameraIntrinsics,
    pivot: Pivot,
) -> Result<Vector3<f64>, HypothesisError> {
    let (h, q) = (r * ci.p, r * (cj.p - ci.p));
    point_point(
        bearing_point(&ci.u, k),
        bearing_point(&cj.u, k),
        &h,
        &q,
        pivot,
    )
    .map(to_vector)
    .ok_or(HypothesisError::DegeneratePair { i: ci.id, j: cj.id })
}

/// Translation placing the point on its ray and the line in its plane.
pub fn solve_pair_point_line(
    ci: &PointCorrespondence,
    lk: &LineCorrespondence,
    r: &Matrix3<f64>,
    k: &CameraIntrinsics,
) -> Result<Vector3<f64>, HypothesisError> {
    let (h, m) = (r * ci.p, r * lk.p_start);
    let (den, t) = point_line(
        bearing_point(&ci.u, k),
        bearing_point(&lk.u_start, k),
        bearing_point(&lk.u_end, k),
        &h,
        &m,
    );
    match t {
        Some(t) if den.abs() > DEGENERACY_EPSILON => Ok(to_vector(t)),
        _ => Err(HypothesisError::DegeneratePairLine { i: ci.id, k: lk.id }),
    }
}

fn interval_bounds(t: [Interval; 3]) -> (Vector3<f64>, Vector3<f64>) {
    (
        Vector3::new(t[0].lo, t[1].lo, t[2].lo),
        Vector3::new(t[0].hi, t[1].hi, t[2].hi),
    )
}

/// Point-pair hypothesis with its enclosure over the pixel noise boxes.
pub fn hypothesis_point_point(
    ci: &PointCorrespondence,
    cj: &PointCorrespondence,
    r: &Matrix3<f64>,
    k: &CameraIntrinsics,
) -> Result<TranslationHypothesis, HypothesisError> {
    let members = [CorrId::Point(ci.id), CorrId::Point(cj.id)];
    let b1 = bearing_point(&ci.u, k);
    let b2 = bearing_point(&cj.u, k);
    let degenerate = HypothesisError::DegeneratePair { i: ci.id, j: cj.id };
    let pivot = choose_pivot(&b1, &b2).ok_or(degenerate.clone())?;
    let (h, q) = (r * ci.p, r * (cj.p - ci.p));
    let t_hat = point_point(b1, b2, &h, &q, pivot).ok_or(degenerate)?;
    let boxed = point_point(
        bearing_box(&ci.u, ci.noise_bound, k),
        bearing_box(&cj.u, cj.noise_bound, k),
        &h,
        &q,
        pivot,
    )
    .ok_or(HypothesisError::UnboundedHypothesis { members })?;
    let (lo, hi) = interval_bounds(boxed);
    Ok(TranslationHypothesis {
        t_hat: to_vector(t_hat),
        lo,
        hi,
        members,
    })
}

/// Point-line hypothesis with its enclosure over the pixel noise boxes.
pub fn hypothesis_point_line(
    ci: &PointCorrespondence,
    lk: &LineCorrespondence,
    r: &Matrix3<f64>,
    k: &CameraIntrinsics,
) -> Result<TranslationHypothesis, HypothesisError> {
    let members = [CorrId::Point(ci.id), CorrId::Line(lk.id)];
    let t_hat = solve_pair_point_line(ci, lk, r, k)?;
    let (h, m) = (r * ci.p, r * lk.p_start);
    let (_, boxed) = point_line(
        bearing_box(&ci.u, ci.noise_bound, k),
        bearing_box(&lk.u_start, lk.noise_bound, k),
        bearing_box(&lk.u_end, lk.noise_bound, k),
        &h,
        &m,
    );
    let (lo, hi) = interval_bounds(boxed.ok_or(HypothesisError::UnboundedHypothesis { members })?);
    Ok(TranslationHypothesis {
        t_hat,
        lo,
        hi,
        members,
    })
}

/// Enclosure `(lo, hi)` of the translation for any observations within the
/// pixel bounds.
pub fn bound_hypothesis(
    ci: &PointCorrespondence,
    other: PairPartner<'_>,
    r: &Matrix3<f64>,
    k: &CameraIntrinsics,
) -> Result<(Vector3<f64>, Vector3<f64>), HypothesisError> {
    let h = match other {
        PairPartner::Point(cj) => hypothesis_point_point(ci, cj, r, k)?,
        PairPartner::Line(lk) => hypothesis_point_line(ci, lk, r, k)?,
    };
    Ok((h.lo, h.hi))
}

/// Second member of a translation pair.
#[derive(Debug, Clone, Copy)]
pub enum PairPartner<'a> {
    Point(&'a PointCorrespondence),
    Line(&'a LineCorrespondence),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisSet {
    pub hypotheses: Vec<TranslationHypothesis>,
    pub skipped: Vec<HypothesisError>,
}

/// All point-point pairs (`i < j`) then all point-line pairs, in index
/// order, stride-subsampled to `pair_cap` when given.
pub fn generate_hypotheses(
    points: &[PointCorrespondence],
    lines: &[LineCorrespondence],
    r: &Matrix3<f64>,
    k: &CameraIntrinsics,
    pair_cap: Option<usize>,
) -> HypothesisSet {
    let mut jobs: Vec<(usize, Option<usize>, Option<usize>)> = select_pairs(points.len(), None)
        .into_iter()
        .map(|(i, j)| (i, Some(j), None))
        .collect();
    for i in 0..points.len() {
        for l in 0..lines.len() {
            jobs.push((i, None, Some(l)));
        }
    }
    if let Some(cap) = pair_cap.filter(|&c| c < jobs.len()) {
        let total = jobs.len();
        jobs = (0..cap).map(|s| jobs[s * total / cap]).collect();
    }
    let built: Vec<_> = jobs
        .par_iter()
        .map(|&(i, j, l)| match (j, l) {
            (Some(j), _) => hypothesis_point_point(&points[i], &points[j], r, k),
            (_, Some(l)) => hypothesis_point_line(&points[i], &lines[l], r, k),
            _ => unreachable!(),
        })
        .collect();
    let mut set = HypothesisSet {
        hypotheses: Vec::with_capacity(built.len()),
        skipped: Vec::new(),
    };
    for b in built {
        match b {
            Ok(h) => set.hypotheses.push(h),
            Err(e) => set.skipped.push(e),
        }
    }
    set
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{build_rotation, project, GravityPrior, Pose};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn camera() -> CameraIntrinsics {
        CameraIntrinsics::new(400.0, 400.0, 320.0, 240.0).unwrap()
    }

    struct Rig {
        prior: GravityPrior,
        alpha: f64,
        pose: Pose,
    }

    fn rig(rng: &mut ChaCha8Rng) -> Rig {
        let prior =
            GravityPrior::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)).unwrap();
        let alpha = rng.random_range(-PI..PI);
        let r = build_rotation(&prior, alpha);
        let t = Vector3::new(
            rng.random_range(-0.5..0.5),
            rng.random_range(-0.5..0.5),
            rng.random_range(4.0..6.0),
        );
        Rig {
            prior,
            alpha,
            pose: Pose::new(r, t),
        }
    }

    fn cube(rng: &mut ChaCha8Rng) -> Vector3<f64> {
        Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        )
    }

    fn point(id: usize, p: Vector3<f64>, pose: &Pose, n: f64) -> PointCorrespondence {
        PointCorrespondence {
            id,
            p,
            u: project(&p, pose, &camera()).unwrap(),
            noise_bound: n,
        }
    }

    fn line(
        id: usize,
        a: Vector3<f64>,
        b: Vector3<f64>,
        pose: &Pose,
        n: f64,
    ) -> LineCorrespondence {
        LineCorrespondence {
            id,
            p_start: a,
            p_end: b,
            u_start: project(&a, pose, &camera()).unwrap(),
            u_end: project(&b, pose, &camera()).unwrap(),
            noise_bound: n,
        }
    }

    #[test]
    fn point_pair_recovers_translation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let k = camera();
        for _ in 0..500 {
            let s = rig(&mut rng);
            let a = point(0, cube(&mut rng), &s.pose, 2.0);
            let b = point(1, cube(&mut rng), &s.pose, 2.0);
            let t = solve_pair_point_point(&a, &b, &s.pose.rotation, &k).unwrap();
            assert!((t - s.pose.translation).norm() < 1e-9);

            let shift = Vector3::new(1.0, 0.0, 0.0);
            let moved = Pose::new(s.pose.rotation, s.pose.translation + shift);
            let a2 = point(0, a.p, &moved, 2.0);
            let b2 = point(1, b.p, &moved, 2.0);
            let t2 = solve_pair_point_point(&a2, &b2, &s.pose.rotation, &k).unwrap();
            assert!((t2 - t - shift).norm() < 1e-9);
        }
    }

    #[test]
    fn identical_bearings_are_degenerate() {
        let a = PointCorrespondence {
            id: 3,
            p: Vector3::zeros(),
            u: Vector2::new(100.0, 100.0),
            noise_bound: 2.0,
        };
        let b = PointCorrespondence {
            id: 5,
            p: Vector3::x(),
            ..a
        };
        assert_eq!(
            solve_pair_point_point(&a, &b, &Matrix3::identity(), &camera()),
            Err(HypothesisError::DegeneratePair { i: 3, j: 5 })
        );
    }

    #[test]
    fn point_line_recovers_translation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let k = camera();
        for _ in 0..500 {
            let s = rig(&mut rng);
            let c = point(0, cube(&mut rng), &s.pose, 2.0);
            let l = line(0, cube(&mut rng), cube(&mut rng), &s.pose, 2.0);
            let t = solve_pair_point_line(&c, &l, &s.pose.rotation, &k).unwrap();
            assert!(
                (t - s.pose.translation).norm() < 1e-8,
                "{}",
                (t - s.pose.translation).norm()
            );
        }
    }

    #[test]
    fn wrong_rotation_breaks_the_point_line_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k = camera();
        for _ in 0..200 {
            let s = rig(&mut rng);
            let c = point(0, cube(&mut rng), &s.pose, 2.0);
            let l = line(0, cube(&mut rng), cube(&mut rng), &s.pose, 2.0);
            let wrong = build_rotation(&s.prior, s.alpha + 0.5);
            let Ok(t) = solve_pair_point_line(&c, &l, &wrong, &k) else {
                continue;
            };
            // The point ray and line plane hold by construction; the far
            // endpoint's plane residual exposes the wrong rotation.
            let n = crate::geom::backproject(&l.u_start, &k)
                .to_vector()
                .cross(&crate::geom::backproject(&l.u_end, &k).to_vector());
            let residual = n.normalize().dot(&(wrong * l.p_end + t));
            assert!(residual.abs() > 1e-6);
        }
    }

    #[test]
    fn point_in_line_plane_is_degenerate() {
        let k = camera();
        let l = LineCorrespondence {
            id: 7,
            p_start: Vector3::new(-1.0, 0.0, 5.0),
            p_end: Vector3::new(1.0, 0.0, 5.0),
            u_start: Vector2::new(100.0, 240.0),
            u_end: Vector2::new(500.0, 240.0),
            noise_bound: 2.0,
        };
        let c = PointCorrespondence {
            id: 1,
            p: Vector3::new(0.0, 1.0, 5.0),
            u: Vector2::new(320.0, 240.0),
            noise_bound: 2.0,
        };
        assert_eq!(
            solve_pair_point_line(&c, &l, &Matrix3::identity(), &k),
            Err(HypothesisError::DegeneratePairLine { i: 1, k: 7 })
        );
    }

    #[test]
    fn zero_noise_box_collapses() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let k = camera();
        let s = rig(&mut rng);
        let a = point(0, cube(&mut rng), &s.pose, 0.0);
        let b = point(1, cube(&mut rng), &s.pose, 0.0);
        let h = hypothesis_point_point(&a, &b, &s.pose.rotation, &k).unwrap();
        assert_eq!(h.lo, h.t_hat);
        assert_eq!(h.hi, h.t_hat);
        let l = line(2, cube(&mut rng), cube(&mut rng), &s.pose, 0.0);
        let h = hypothesis_point_line(&a, &l, &s.pose.rotation, &k).unwrap();
        assert_eq!(h.lo, h.t_hat);
        assert_eq!(h.hi, h.t_hat);
    }

    #[test]
    fn boxes_enclose_noisy_realizations() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let k = camera();
        let mut tested = 0;
        while tested < 20 {
            let s = rig(&mut rng);
            let a = point(0, cube(&mut rng), &s.pose, 2.0);
            let b = point(1, cube(&mut rng), &s.pose, 2.0);
            let l = line(0, cube(&mut rng), cube(&mut rng), &s.pose, 2.0);
            let (Ok(hp), Ok(hl)) = (
                hypothesis_point_point(&a, &b, &s.pose.rotation, &k),
                hypothesis_point_line(&a, &l, &s.pose.rotation, &k),
            ) else {
                continue;
            };
            tested += 1;
            let pivot = pair_pivot(&a, &b, &k).unwrap();
            assert!(hp.contains(&s.pose.translation) && hl.contains(&s.pose.translation));
            let mut jitter = |u: Vector2<f64>| {
                u + Vector2::new(rng.random_range(-2.0..=2.0), rng.random_range(-2.0..=2.0))
            };
            for _ in 0..200 {
                let na = PointCorrespondence {
                    u: jitter(a.u),
                    ..a
                };
                let nb = PointCorrespondence {
                    u: jitter(b.u),
                    ..b
                };
                let nl = LineCorrespondence {
                    u_start: jitter(l.u_start),
                    u_end: jitter(l.u_end),
                    ..l
                };
                if let Ok(t) = solve_pair_point_point_pivoted(&na, &nb, &s.pose.rotation, &k, pivot)
                {
                    assert!(hp.contains(&t));
                }
                if let Ok(t) = solve_pair_point_line(&na, &nl, &s.pose.rotation, &k) {
                    assert!(hl.contains(&t));
                }
            }
        }
    }

    #[test]
    fn generation_order_and_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let k = camera();
        let s = rig(&mut rng);
        let points: Vec<_> = (0..6)
            .map(|i| point(i, cube(&mut rng), &s.pose, 2.0))
            .collect();
        let lines: Vec<_> = (0..2)
            .map(|i| line(i, cube(&mut rng), cube(&mut rng), &s.pose, 2.0))
            .collect();
        let set = generate_hypotheses(&points, &lines, &s.pose.rotation, &k, None);
        assert_eq!(set.hypotheses.len() + set.skipped.len(), 15 + 12);
        assert_eq!(
            set.hypotheses[0].members,
            [CorrId::Point(0), CorrId::Point(1)]
        );
        assert_eq!(
            set.hypotheses.last().unwrap().members,
            [CorrId::Point(5), CorrId::Line(1)]
        );
        let capped = generate_hypotheses(&points, &lines, &s.pose.rotation, &k, Some(9));
        assert_eq!(capped.hypotheses.len() + capped.skipped.len(), 9);
    }
}
