//! Translation-invariant measurements (TIMs).
//!
//! Eliminating the translation from a pair of point observations, or from
//! the two endpoints of a line observation, leaves a scalar constraint that
//! depends on yaw only:
//!
//! ```text
//! d(alpha) = d1 sin(alpha) + d2 cos(alpha) + d3
//! ```
//!
//! Both cases reduce to `(b_a x b_b) . R(alpha) v` for two bearings and a
//! world-frame difference vector `v`. Coefficients are divided by
//! `|b_a| |b_b| |v|`, which turns the residual into a triple product of unit
//! vectors. Its first-order sensitivity to bearing noise is then bounded by
//! the normalized-plane displacement of the observations, independent of
//! depth and baseline.

use crate::geom::{backproject, CameraIntrinsics, GravityPrior, YawRotationBasis};
use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use thiserror::Error;

/// Cross-product norm below which two bearings count as parallel.
pub const DEGENERACY_EPSILON: f64 = 1e-12;

/// A world point observed at a pixel, with an L-infinity pixel noise bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointCorrespondence {
    pub id: usize,
    pub p: Vector3<f64>,
    pub u: Vector2<f64>,
    pub noise_bound: f64,
}

/// A world segment observed as an image segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineCorrespondence {
    pub id: usize,
    pub p_start: Vector3<f64>,
    pub p_end: Vector3<f64>,
    pub u_start: Vector2<f64>,
    pub u_end: Vector2<f64>,
    pub noise_bound: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TimError {
    /// The two bearings are parallel or the world points coincide.
    #[error("degenerate point pair ({i}, {j})")]
    DegeneratePair { i: usize, j: usize },
    /// The endpoint bearings are parallel or the world endpoints coincide.
    #[error("degenerate line {k}")]
    DegenerateLine { k: usize },
}

/// How the pixel noise bound is mapped onto the unit-free TIM residual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMode {
    /// `min(n_i, n_j) / f_mean`: the pair bound is the smaller pixel bound.
    #[default]
    PairMin,
    /// First-order propagation of both observations' pixel boxes.
    Propagated,
}

/// Which correspondences a constraint was built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TimOrigin {
    PointPair(usize, usize),
    Line(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimConstraint {
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub bound: f64,
    pub origin: TimOrigin,
}

/// `a1 sin(alpha + a2) + d3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinusoidForm {
    pub a1: f64,
    pub a2: f64,
    pub d3: f64,
}

impl SinusoidForm {
    pub fn evaluate(&self, alpha: f64) -> f64 {
        self.a1 * (alpha + self.a2).sin() + self.d3
    }
}

/// Closed yaw interval inside `[-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YawInterval {
    pub lo: f64,
    pub hi: f64,
}

impl YawInterval {
    pub const FULL: YawInterval = YawInterval { lo: -PI, hi: PI };

    /// Panics unless `-pi <= lo <= hi <= pi`.
    pub fn new(lo: f64, hi: f64) -> Self {
        assert!(
            (-PI..=PI).contains(&lo) && (-PI..=PI).contains(&hi) && lo <= hi,
            "invalid yaw interval [{lo}, {hi}]"
        );
        Self { lo, hi }
    }

    pub fn point(alpha: f64) -> Self {
        Self::new(alpha, alpha)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, alpha: f64) -> bool {
        self.lo <= alpha && alpha <= self.hi
    }

    /// Split into `parts` equal pieces sharing endpoints.
    pub fn split(&self, parts: usize) -> Vec<YawInterval> {
        let step = self.width() / parts as f64;
        (0..parts)
            .map(|k| {
                let lo = if k == 0 {
                    self.lo
                } else {
                    self.lo + step * k as f64
                };
                let hi = if k + 1 == parts {
                    self.hi
                } else {
                    self.lo + step * (k + 1) as f64
                };
                YawInterval { lo, hi }
            })
            .collect()
    }
}

impl TimConstraint {
    pub fn evaluate(&self, alpha: f64) -> f64 {
        let (s, c) = alpha.sin_cos();
        self.d1 * s + self.d2 * c + self.d3
    }

    pub fn is_satisfied(&self, alpha: f64) -> bool {
        self.evaluate(alpha).abs() <= self.bound
    }

    pub fn amplitude(&self) -> f64 {
        self.d1.hypot(self.d2)
    }

    pub fn sinusoid_form(&self) -> SinusoidForm {
        SinusoidForm {
            a1: self.amplitude(),
            a2: self.d2.atan2(self.d1),
            d3: self.d3,
        }
    }

    /// False when the residual does not vary with yaw, e.g. a vertical line
    /// under a level camera.
    pub fn is_yaw_informative(&self) -> bool {
        self.amplitude() > DEGENERACY_EPSILON
    }

    /// Exact minimum of `|d(alpha)|` over the closed interval.
    pub fn lower_bound_abs(&self, interval: &YawInterval) -> f64 {
        lower_bound_abs(self, interval)
    }

    /// Yaws in `[-pi, pi)` where `d(alpha) = target`, at most two.
    pub fn solve_level(&self, target: f64) -> Vec<f64> {
        let form = self.sinusoid_form();
        if form.a1 <= DEGENERACY_EPSILON {
            return Vec::new();
        }
        let ratio = (target - form.d3) / form.a1;
        if !(-1.0..=1.0).contains(&ratio) {
            return Vec::new();
        }
        let theta = ratio.asin();
        let mut roots = vec![
            crate::geom::wrap_angle(theta - form.a2),
            crate::geom::wrap_angle(PI - theta - form.a2),
        ];
        roots.sort_by(f64::total_cmp);
        roots.dedup();
        roots
    }
}

/// `d1 sin(alpha) + d2 cos(alpha) + d3`.
pub fn evaluate(tim: &TimConstraint, alpha: f64) -> f64 {
    tim.evaluate(alpha)
}

/// Exact minimum of `|d(alpha)|` over a closed yaw interval.
///
/// Between consecutive stationary points the sinusoid is monotone, so the
/// minimum is zero if any such piece changes sign and the smallest sampled
/// magnitude otherwise.
pub fn lower_bound_abs(tim: &TimConstraint, interval: &YawInterval) -> f64 {
    let mut candidates: [f64; 8] = [0.0; 8];
    let mut n = 0;
    candidates[n] = interval.lo;
    n += 1;
    if tim.d1 != 0.0 || tim.d2 != 0.0 {
        // d'(alpha) = d1 cos(alpha) - d2 sin(alpha) vanishes at phi + k pi.
        let phi = tim.d1.atan2(tim.d2);
        let k0 = ((interval.lo - phi) / PI).ceil() as i64;
        let mut k = k0;
        loop {
            let a = phi + k as f64 * PI;
            if a >= interval.hi {
                break;
            }
            if a > interval.lo {
                candidates[n] = a;
                n += 1;
            }
            k += 1;
        }
    }
    candidates[n] = interval.hi;
    n += 1;

    let mut prev = tim.evaluate(candidates[0]);
    let mut best = prev.abs();
    for &a in &candidates[1..n] {
        let v = tim.evaluate(a);
        if (prev <= 0.0 && v >= 0.0) || (prev >= 0.0 && v <= 0.0) {
            return 0.0;
        }
        best = best.min(v.abs());
        prev = v;
    }
    best
}

fn normalized_bound(n_a: f64, n_b: f64, mode: BoundMode, k: &CameraIntrinsics) -> f64 {
    match mode {
        BoundMode::PairMin => n_a.min(n_b) / k.mean_focal(),
        BoundMode::Propagated => {
            let ra = k.normalized_radius(n_a);
            let rb = k.normalized_radius(n_b);
            ra + rb + ra * rb
        }
    }
}

/// Shared construction: `d(alpha) = (b_a x b_b) . R(alpha) v`, normalized.
fn triple_product_tim(
    basis: &YawRotationBasis,
    b_a: &Vector3<f64>,
    b_b: &Vector3<f64>,
    v: &Vector3<f64>,
) -> Option<(f64, f64, f64)> {
    let w = b_a.cross(b_b);
    let v_norm = v.norm();
    if w.norm() < DEGENERACY_EPSILON || v_norm < DEGENERACY_EPSILON {
        return None;
    }
    let scale = 1.0 / (b_a.norm() * b_b.norm() * v_norm);
    let d1 = w.dot(&(basis.sin_part * v)) * scale;
    let d2 = w.dot(&(basis.cos_part * v)) * scale;
    let d3 = w.dot(&(basis.fixed_part * v)) * scale;
    Some((d1, d2, d3))
}

pub fn point_tim(
    ci: &PointCorrespondence,
    cj: &PointCorrespondence,
    prior: &GravityPrior,
    k: &CameraIntrinsics,
    mode: BoundMode,
) -> Result<TimConstraint, TimError> {
    point_tim_with_basis(ci, cj, &YawRotationBasis::new(prior), k, mode)
}

pub fn point_tim_with_basis(
    ci: &PointCorrespondence,
    cj: &PointCorrespondence,
    basis: &YawRotationBasis,
    k: &CameraIntrinsics,
    mode: BoundMode,
) -> Result<TimConstraint, TimError> {
    let b_i = backproject(&ci.u, k).to_vector();
    let b_j = backproject(&cj.u, k).to_vector();
    let (d1, d2, d3) = triple_product_tim(basis, &b_i, &b_j, &(cj.p - ci.p))
        .ok_or(TimError::DegeneratePair { i: ci.id, j: cj.id })?;
    Ok(TimConstraint {
        d1,
        d2,
        d3,
        bound: normalized_bound(ci.noise_bound, cj.noise_bound, mode, k),
        origin: TimOrigin::PointPair(ci.id, cj.id),
    })
}

pub fn line_tim(
    lk: &LineCorrespondence,
    prior: &GravityPrior,
    k: &CameraIntrinsics,
    mode: BoundMode,
) -> Result<TimConstraint, TimError> {
    line_tim_with_basis(lk, &YawRotationBasis::new(prior), k, mode)
}

pub fn line_tim_with_basis(
    lk: &LineCorrespondence,
    basis: &YawRotationBasis,
    k: &CameraIntrinsics,
    mode: BoundMode,
) -> Result<TimConstraint, TimError> {
    let b_1 = backproject(&lk.u_start, k).to_vector();
    let b_2 = backproject(&lk.u_end, k).to_vector();
    let (d1, d2, d3) = triple_product_tim(basis, &b_1, &b_2, &(lk.p_start - lk.p_end))
        .ok_or(TimError::DegenerateLine { k: lk.id })?;
    Ok(TimConstraint {
        d1,
        d2,
        d3,
        bound: normalized_bound(lk.noise_bound, lk.noise_bound, mode, k),
        origin: TimOrigin::Line(lk.id),
    })
}

/// Result of building every constraint for a scene.
#[derive(Debug, Clone, PartialEq)]
pub struct TimSet {
    pub tims: Vec<TimConstraint>,
    pub skipped: Vec<TimError>,
}

/// Unordered index pairs `(i, j)`, `i < j`, in lexicographic order. With a
/// cap below the full count, a deterministic even-stride subsample is taken.
pub fn select_pairs(n: usize, pair_cap: Option<usize>) -> Vec<(usize, usize)> {
    let all: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    match pair_cap {
        Some(cap) if cap < all.len() => {
            let total = all.len();
            (0..cap).map(|s| all[s * total / cap]).collect()
        }
        _ => all,
    }
}

/// One constraint per selected point pair followed by one per line.
pub fn build_all_tims(
    points: &[PointCorrespondence],
    lines: &[LineCorrespondence],
    prior: &GravityPrior,
    k: &CameraIntrinsics,
    pair_cap: Option<usize>,
    mode: BoundMode,
) -> TimSet {
    let basis = YawRotationBasis::new(prior);
    let pairs = select_pairs(points.len(), pair_cap);
    let built: Vec<Result<TimConstraint, TimError>> = pairs
        .par_iter()
        .map(|&(i, j)| point_tim_with_basis(&points[i], &points[j], &basis, k, mode))
        .chain(
            lines
                .par_iter()
                .map(|l| line_tim_with_basis(l, &basis, k, mode)),
        )
        .collect();
    let mut set = TimSet {
        tims: Vec::with_capacity(built.len()),
        skipped: Vec::new(),
    };
    for r in built {
        match r {
            Ok(t) => set.tims.push(t),
            Err(e) => set.skipped.push(e),
        }
    }
    set
}

/// Closed sub-intervals of `interval` on which `|d(alpha)| <= bound`.
pub fn feasible_arcs(tim: &TimConstraint, interval: &YawInterval) -> Vec<YawInterval> {
    let mut cuts: Vec<f64> = vec![interval.lo, interval.hi];
    for level in [tim.bound, -tim.bound] {
        for root in tim.solve_level(level) {
            for shift in [-TAU, 0.0, TAU] {
                let a = root + shift;
                if a > interval.lo && a < interval.hi {
                    cuts.push(a);
                }
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut arcs: Vec<YawInterval> = Vec::new();
    if cuts.len() == 2 && interval.width() == 0.0 {
        if tim.is_satisfied(interval.lo) {
            arcs.push(*interval);
        }
        return arcs;
    }
    for w in cuts.windows(2) {
        if !tim.is_satisfied(0.5 * (w[0] + w[1])) {
            continue;
        }
        match arcs.last_mut() {
            Some(last) if last.hi == w[0] => last.hi = w[1],
            _ => arcs.push(YawInterval { lo: w[0], hi: w[1] }),
        }
    }
    arcs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{project, Pose};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn camera() -> CameraIntrinsics {
        CameraIntrinsics::new(400.0, 400.0, 320.0, 240.0).unwrap()
    }

    fn random_prior(rng: &mut ChaCha8Rng) -> GravityPrior {
        GravityPrior::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)).unwrap()
    }

    fn random_cube_point(rng: &mut ChaCha8Rng) -> Vector3<f64> {
        Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        )
    }

    /// Pose that puts the unit cube about 5 m in front of the camera.
    fn facing_pose(prior: &GravityPrior, alpha: f64, rng: &mut ChaCha8Rng) -> Pose {
        let r = crate::geom::build_rotation(prior, alpha);
        let offset = Vector3::new(
            rng.random_range(-0.5..0.5),
            rng.random_range(-0.5..0.5),
            rng.random_range(4.0..6.0),
        );
        Pose::new(r, offset)
    }

    fn observe(
        id: usize,
        p: Vector3<f64>,
        pose: &Pose,
        k: &CameraIntrinsics,
    ) -> PointCorrespondence {
        PointCorrespondence {
            id,
            p,
            u: project(&p, pose, k).unwrap(),
            noise_bound: 2.0,
        }
    }

    fn tim(d1: f64, d2: f64, d3: f64) -> TimConstraint {
        TimConstraint {
            d1,
            d2,
            d3,
            bound: 0.1,
            origin: TimOrigin::Line(0),
        }
    }

    #[test]
    fn noise_free_point_pairs_vanish_at_true_yaw() {
        let k = camera();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let prior = random_prior(&mut rng);
            let alpha = rng.random_range(-PI..PI);
            let pose = facing_pose(&prior, alpha, &mut rng);
            let a = observe(0, random_cube_point(&mut rng), &pose, &k);
            let b = observe(1, random_cube_point(&mut rng), &pose, &k);
            let t = point_tim(&a, &b, &prior, &k, BoundMode::PairMin).unwrap();
            assert!(t.evaluate(alpha).abs() < 1e-9);

            let moved = Pose::new(
                pose.rotation,
                pose.translation + Vector3::new(0.3, -0.2, 0.5),
            );
            let a2 = observe(0, a.p, &moved, &k);
            let b2 = observe(1, b.p, &moved, &k);
            let t2 = point_tim(&a2, &b2, &prior, &k, BoundMode::PairMin).unwrap();
            assert!(t2.evaluate(alpha).abs() < 1e-9);
        }
    }

    #[test]
    fn outlier_pairs_mostly_violate_the_bound() {
        let k = camera();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut violations = 0;
        let draws = 1000;
        for _ in 0..draws {
            let prior = random_prior(&mut rng);
            let alpha = rng.random_range(-PI..PI);
            let pose = facing_pose(&prior, alpha, &mut rng);
            let decoy = facing_pose(&prior, rng.random_range(-PI..PI), &mut rng);
            let a = observe(0, random_cube_point(&mut rng), &pose, &k);
            let b = observe(1, random_cube_point(&mut rng), &decoy, &k);
            let t = point_tim(&a, &b, &prior, &k, BoundMode::PairMin).unwrap();
            if t.evaluate(alpha).abs() > t.bound {
                violations += 1;
            }
        }
        // Observed rate on this stream; the contract is only "high".
        assert!(
            violations as f64 / draws as f64 >= 0.95,
            "rate {violations}/{draws}"
        );
    }

    #[test]
    fn noise_free_lines_vanish_at_true_yaw() {
        let k = camera();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for id in 0..1000 {
            let prior = random_prior(&mut rng);
            let alpha = rng.random_range(-PI..PI);
            let pose = facing_pose(&prior, alpha, &mut rng);
            let p_start = random_cube_point(&mut rng);
            let p_end = random_cube_point(&mut rng);
            let line = LineCorrespondence {
                id,
                p_start,
                p_end,
                u_start: project(&p_start, &pose, &k).unwrap(),
                u_end: project(&p_end, &pose, &k).unwrap(),
                noise_bound: 2.0,
            };
            let t = line_tim(&line, &prior, &k, BoundMode::Propagated).unwrap();
            assert!(t.evaluate(alpha).abs() < 1e-9);
        }
    }

    #[test]
    fn vertical_line_under_level_camera_is_yaw_uninformative() {
        let k = camera();
        let prior = GravityPrior::new(0.0, 0.0).unwrap();
        // Level camera looking along world +z with world z as the vertical.
        let pose = Pose::new(
            crate::geom::build_rotation(&prior, 0.4),
            Vector3::new(0.1, 0.2, 5.0),
        );
        let p_start = Vector3::new(0.2, 0.1, -0.5);
        let p_end = Vector3::new(0.2, 0.1, 0.5);
        let line = LineCorrespondence {
            id: 0,
            p_start,
            p_end,
            u_start: project(&p_start, &pose, &k).unwrap(),
            u_end: project(&p_end, &pose, &k).unwrap(),
            noise_bound: 2.0,
        };
        let t = line_tim(&line, &prior, &k, BoundMode::PairMin).unwrap();
        assert!(t.d1.abs() < 1e-12 && t.d2.abs() < 1e-12 && t.d3.abs() < 1e-12);
        assert!(!t.is_yaw_informative());
    }

    #[test]
    fn degenerate_constructions_are_reported() {
        let k = camera();
        let prior = GravityPrior::new(0.0, 0.0).unwrap();
        let a = PointCorrespondence {
            id: 4,
            p: Vector3::new(0.0, 0.0, 1.0),
            u: Vector2::new(300.0, 200.0),
            noise_bound: 2.0,
        };
        let b = PointCorrespondence {
            id: 9,
            p: Vector3::new(1.0, 0.0, 1.0),
            ..a
        };
        assert_eq!(
            point_tim(&a, &b, &prior, &k, BoundMode::PairMin),
            Err(TimError::DegeneratePair { i: 4, j: 9 })
        );
        let line = LineCorrespondence {
            id: 2,
            p_start: Vector3::zeros(),
            p_end: Vector3::x(),
            u_start: Vector2::new(10.0, 10.0),
            u_end: Vector2::new(10.0, 10.0),
            noise_bound: 2.0,
        };
        assert_eq!(
            line_tim(&line, &prior, &k, BoundMode::PairMin),
            Err(TimError::DegenerateLine { k: 2 })
        );
    }

    #[test]
    fn bound_modes() {
        let k = CameraIntrinsics::new(400.0, 300.0, 0.0, 0.0).unwrap();
        assert_eq!(
            normalized_bound(2.0, 3.0, BoundMode::PairMin, &k),
            2.0 / 350.0
        );
        let r2 = 2.0 * (1.0f64 / 160000.0 + 1.0 / 90000.0).sqrt();
        let r3 = 1.5 * r2;
        let expected = r2 + r3 + r2 * r3;
        assert!((normalized_bound(2.0, 3.0, BoundMode::Propagated, &k) - expected).abs() < 1e-15);
    }

    #[test]
    fn evaluate_examples() {
        assert_eq!(tim(0.0, 0.0, 0.7).evaluate(1.234), 0.7);
        assert_eq!(tim(1.0, 0.0, 0.0).evaluate(FRAC_PI_2), 1.0);
    }

    #[test]
    fn full_circle_lower_bounds() {
        let above = tim(0.3, 0.4, 0.9);
        assert!((above.lower_bound_abs(&YawInterval::FULL) - 0.4).abs() < 1e-12);
        let below = tim(0.3, -0.4, -0.9);
        assert!((below.lower_bound_abs(&YawInterval::FULL) - 0.4).abs() < 1e-12);
        let crossing = tim(0.3, 0.4, 0.2);
        assert_eq!(crossing.lower_bound_abs(&YawInterval::FULL), 0.0);
    }

    #[test]
    fn degenerate_interval_collapses_to_evaluate() {
        let t = tim(0.3, -0.2, 0.05);
        for a in [-3.0, -0.5, 0.0, 1.1, 2.9] {
            assert_eq!(
                t.lower_bound_abs(&YawInterval::point(a)),
                t.evaluate(a).abs()
            );
        }
    }

    #[test]
    fn sinusoid_form_matches_evaluate() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let t = tim(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let form = t.sinusoid_form();
            assert!((form.a1 - t.d1.hypot(t.d2)).abs() < 1e-15);
            for _ in 0..20 {
                let a = rng.random_range(-PI..PI);
                assert!((form.evaluate(a) - t.evaluate(a)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lower_bound_matches_dense_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let t = tim(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.5..1.5),
            );
            let a = rng.random_range(-PI..PI);
            let b = rng.random_range(-PI..PI);
            let iv = YawInterval::new(a.min(b), a.max(b));
            let h = iv.width() / 100_000.0;
            let (arg, grid_min) = (0..=100_000)
                .map(|s| iv.lo + h * s as f64)
                .map(|x| (x, t.evaluate(x).abs()))
                .fold(
                    (0.0, f64::INFINITY),
                    |acc, v| if v.1 < acc.1 { v } else { acc },
                );
            let lb = t.lower_bound_abs(&iv);
            assert!(lb <= grid_min + 1e-12);
            // The raw grid is only within a1 * h / 2 of the true minimum, so
            // polish its argmin with a ternary search on |d| before comparing.
            let (mut a, mut b) = ((arg - h).max(iv.lo), (arg + h).min(iv.hi));
            for _ in 0..200 {
                let m1 = a + (b - a) / 3.0;
                let m2 = b - (b - a) / 3.0;
                if t.evaluate(m1).abs() < t.evaluate(m2).abs() {
                    b = m2;
                } else {
                    a = m1;
                }
            }
            let polished = t.evaluate(0.5 * (a + b)).abs().min(grid_min);
            assert!(grid_min - lb <= t.amplitude() * h / 2.0 + 1e-12);
            assert!(
                (polished - lb).abs() < 1e-9,
                "polished {polished} bound {lb}"
            );
        }
    }

    #[test]
    fn solve_level_roots() {
        let t = tim(0.4, -0.3, 0.1);
        for target in [0.0, 0.2, -0.35] {
            let roots = t.solve_level(target);
            assert_eq!(roots.len(), 2);
            for r in roots {
                assert!((t.evaluate(r) - target).abs() < 1e-12);
            }
        }
        assert!(t.solve_level(0.7).is_empty());
    }

    #[test]
    fn feasible_arcs_agree_with_pointwise_test() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let mut t = tim(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            t.bound = rng.random_range(0.01..0.5);
            let a = rng.random_range(-PI..PI);
            let b = rng.random_range(-PI..PI);
            let iv = YawInterval::new(a.min(b), a.max(b));
            let arcs = feasible_arcs(&t, &iv);
            for s in 0..2000 {
                let x = iv.lo + iv.width() * (s as f64 + 0.5) / 2000.0;
                let inside = arcs.iter().any(|arc| arc.contains(x));
                let margin = (t.evaluate(x).abs() - t.bound).abs();
                if margin > 1e-9 {
                    assert_eq!(inside, t.is_satisfied(x), "alpha {x}");
                }
            }
        }
    }

    #[test]
    fn build_all_counts() {
        let k = camera();
        let prior = GravityPrior::new(0.05, -0.02).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pose = facing_pose(&prior, 0.3, &mut rng);
        let points: Vec<_> = (0..50)
            .map(|i| observe(i, random_cube_point(&mut rng), &pose, &k))
            .collect();
        let set = build_all_tims(&points, &[], &prior, &k, None, BoundMode::PairMin);
        assert_eq!(set.tims.len() + set.skipped.len(), 1225);

        let lines: Vec<_> = (0..25)
            .map(|id| {
                let p_start = random_cube_point(&mut rng);
                let p_end = random_cube_point(&mut rng);
                LineCorrespondence {
                    id,
                    p_start,
                    p_end,
                    u_start: project(&p_start, &pose, &k).unwrap(),
                    u_end: project(&p_end, &pose, &k).unwrap(),
                    noise_bound: 2.0,
                }
            })
            .collect();
        let set = build_all_tims(&points[..25], &lines, &prior, &k, None, BoundMode::PairMin);
        assert_eq!(set.tims.len() + set.skipped.len(), 325);
        assert_eq!(set.tims.last().unwrap().origin, TimOrigin::Line(24));

        let set = build_all_tims(&points[..2], &[], &prior, &k, None, BoundMode::PairMin);
        assert_eq!(set.tims.len(), 1);
        assert_eq!(set.tims[0].origin, TimOrigin::PointPair(0, 1));
    }

    #[test]
    fn pair_cap_subsamples_deterministically() {
        let all = select_pairs(10, None);
        assert_eq!(all.len(), 45);
        let capped = select_pairs(10, Some(9));
        assert_eq!(capped.len(), 9);
        assert_eq!(capped[0], (0, 1));
        assert!(capped.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(select_pairs(10, Some(100)), all);
    }

    proptest! {
        #[test]
        fn lower_bound_is_sound_and_nested(
            d1 in -1.0f64..1.0, d2 in -1.0f64..1.0, d3 in -1.5f64..1.5,
            a in -PI..PI, b in -PI..PI, f0 in 0.0f64..1.0, f1 in 0.0f64..1.0,
        ) {
            let t = tim(d1, d2, d3);
            let iv = YawInterval::new(a.min(b), a.max(b));
            let lb = t.lower_bound_abs(&iv);
            for s in 0..=200 {
                let x = iv.lo + iv.width() * s as f64 / 200.0;
                prop_assert!(lb <= t.evaluate(x).abs() + 1e-12);
            }
            let x0 = iv.lo + iv.width() * f0.min(f1);
            let x1 = iv.lo + iv.width() * f0.max(f1);
            let inner = YawInterval::new(x0, x1.min(iv.hi));
            prop_assert!(t.lower_bound_abs(&inner) >= lb);
        }
    }
}
