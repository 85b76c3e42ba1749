//! Four-parameter (yaw, translation) least-squares refinement with pitch and
//! roll held at the prior.
//!
//! Points contribute their pixel reprojection error. Each line endpoint
//! contributes the distance, in pixels, between its projection and the
//! observed image line.

use crate::geom::{
    backproject, yaw_pitch_roll, CameraIntrinsics, GravityPrior, Pose, YawRotationBasis,
    DEPTH_EPSILON,
};
use crate::tim::{LineCorrespondence, PointCorrespondence};
use nalgebra::{Matrix4, Vector3, Vector4};

/// `(alpha, tx, ty, tz)`.
pub type RefineState = Vector4<f64>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineOutcome {
    pub pose: Pose,
    pub alpha: f64,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: usize,
}

/// Residual rows with their gradients with respect to the state.
struct Linearization {
    residuals: Vec<f64>,
    jacobian: Vec<Vector4<f64>>,
}

struct Problem<'a> {
    points: &'a [PointCorrespondence],
    lines: Vec<(Vector3<f64>, &'a LineCorrespondence)>,
    basis: YawRotationBasis,
    k: CameraIntrinsics,
    /// Per-row multipliers; empty means all ones.
    row_scale: Vec<f64>,
}

impl<'a> Problem<'a> {
    fn new(
        points: &'a [PointCorrespondence],
        lines: &'a [LineCorrespondence],
        prior: &GravityPrior,
        k: &CameraIntrinsics,
    ) -> Self {
        let lines = lines
            .iter()
            .map(|l| {
                let w = backproject(&l.u_start, k)
                    .to_vector()
                    .cross(&backproject(&l.u_end, k).to_vector());
                (w, l)
            })
            .collect();
        Self {
            points,
            lines,
            basis: YawRotationBasis::new(prior),
            k: *k,
            row_scale: Vec::new(),
        }
    }

    /// Row residuals divided by their bounded-error tolerance: `n` for each
    /// point axis and `sqrt(2) n` for each line endpoint.
    fn row_bounds(&self) -> Vec<f64> {
        let points = self
            .points
            .iter()
            .flat_map(|c| [super::effective_bound(c.noise_bound); 2]);
        let lines = self.lines.iter().flat_map(|(_, l)| {
            [std::f64::consts::SQRT_2 * super::effective_bound(l.noise_bound); 2]
        });
        points.chain(lines).collect()
    }

    /// `None` if any feature falls behind the camera.
    fn linearize(&self, s: &RefineState, with_jacobian: bool) -> Option<Linearization> {
        let r = self.basis.rotation(s[0]);
        let dr = self.basis.rotation_derivative(s[0]);
        let t = Vector3::new(s[1], s[2], s[3]);
        let k = &self.k;
        let mut out = Linearization {
            residuals: Vec::with_capacity(2 * (self.points.len() + self.lines.len())),
            jacobian: Vec::new(),
        };
        // d x_c / d state = [dR p | I]
        let push_row = |out: &mut Linearization,
                        value: f64,
                        grad_x: Vector3<f64>,
                        dx_dalpha: &Vector3<f64>| {
            let w = self
                .row_scale
                .get(out.residuals.len())
                .copied()
                .unwrap_or(1.0);
            out.residuals.push(w * value);
            if with_jacobian {
                out.jacobian
                    .push(Vector4::new(grad_x.dot(dx_dalpha), grad_x.x, grad_x.y, grad_x.z) * w);
            }
        };
        for c in self.points {
            let x = r * c.p + t;
            if x.z <= DEPTH_EPSILON {
                return None;
            }
            let dx = dr * c.p;
            let iz = 1.0 / x.z;
            let ru = k.fx * x.x * iz + k.cx - c.u.x;
            let rv = k.fy * x.y * iz + k.cy - c.u.y;
            push_row(
                &mut out,
                ru,
                Vector3::new(k.fx * iz, 0.0, -k.fx * x.x * iz * iz),
                &dx,
            );
            push_row(
                &mut out,
                rv,
                Vector3::new(0.0, k.fy * iz, -k.fy * x.y * iz * iz),
                &dx,
            );
        }
        let f = k.mean_focal();
        for (w, l) in &self.lines {
            let scale = f / w.xy().norm();
            for p in [l.p_start, l.p_end] {
                let x = r * p + t;
                if x.z <= DEPTH_EPSILON {
                    return None;
                }
                let iz = 1.0 / x.z;
                let wx = w.dot(&x);
                let value = scale * wx * iz;
                let grad = (w * iz - Vector3::z() * (wx * iz * iz)) * scale;
                push_row(&mut out, value, grad, &(dr * p));
            }
        }
        Some(out)
    }

    fn cost(&self, s: &RefineState) -> f64 {
        self.linearize(s, false)
            .map_or(f64::INFINITY, |l| l.residuals.iter().map(|r| r * r).sum())
    }
}

/// Sum of squared residuals at `state`; infinite if a feature is behind the camera.
pub fn refine_objective(
    points: &[PointCorrespondence],
    lines: &[LineCorrespondence],
    prior: &GravityPrior,
    k: &CameraIntrinsics,
    state: &RefineState,
) -> f64 {
    Problem::new(points, lines, prior, k).cost(state)
}

/// Analytic gradient `2 J^T r` of [`refine_objective`].
pub fn refine_gradient(
    points: &[PointCorrespondence],
    lines: &[LineCorrespondence],
    prior: &GravityPrior,
    k: &CameraIntrinsics,
    state: &RefineState,
) -> Option<Vector4<f64>> {
    let lin = Problem::new(points, lines, prior, k).linearize(state, true)?;
    Some(
        lin.jacobian
            .iter()
            .zip(&lin.residuals)
            .fold(Vector4::zeros(), |g, (j, r)| g + j * (2.0 * r)),
    )
}

fn initial_state(initial: &Pose) -> RefineState {
    let (alpha0, _, _) = yaw_pitch_roll(&initial.rotation);
    RefineState::new(
        alpha0,
        initial.translation.x,
        initial.translation.y,
        initial.translation.z,
    )
}

fn outcome(
    problem: &Problem,
    state: &RefineState,
    initial_cost: f64,
    final_cost: f64,
    iterations: usize,
) -> RefineOutcome {
    let alpha = crate::geom::wrap_angle(state[0]);
    RefineOutcome {
        pose: Pose::new(
            problem.basis.rotation(alpha),
            Vector3::new(state[1], state[2], state[3]),
        ),
        alpha,
        initial_cost,
        final_cost,
        iterations,
    }
}

/// Levenberg-Marquardt from `state`; returns the final state, its cost and
/// the number of iterations taken.
fn levenberg_marquardt(
    problem: &Problem,
    mut state: RefineState,
    max_iters: usize,
    tol: f64,
) -> (RefineState, f64, usize) {
    let mut cost = problem.cost(&state);
    let mut lambda = 1e-3;
    let mut iterations = 0;

    while iterations < max_iters && cost.is_finite() {
        let Some(lin) = problem.linearize(&state, true) else {
            break;
        };
        let mut h = Matrix4::zeros();
        let mut g = Vector4::zeros();
        for (j, r) in lin.jacobian.iter().zip(&lin.residuals) {
            h += j * j.transpose();
            g += j * *r;
        }
        if 2.0 * g.norm() < tol {
            break;
        }
        iterations += 1;
        let mut accepted = false;
        for _ in 0..20 {
            let mut damped = h;
            for d in 0..4 {
                damped[(d, d)] += lambda * h[(d, d)].max(1e-12);
            }
            let Some(step) = damped.cholesky().map(|c| c.solve(&(-g))) else {
                lambda *= 10.0;
                continue;
            };
            let candidate = state + step;
            let candidate_cost = problem.cost(&candidate);
            if candidate_cost < cost {
                let converged = step.norm() < 1e-14 * (1.0 + state.norm());
                state = candidate;
                cost = candidate_cost;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = !converged;
                break;
            }
            lambda *= 5.0;
        }
        if !accepted {
            break;
        }
    }
    (state, cost, iterations)
}

/// Levenberg-Marquardt over `(alpha, t)`. Only cost-decreasing steps are
/// accepted, so the result is never worse than the initial pose.
pub fn refine(
    points: &[PointCorrespondence],
    lines: &[LineCorrespondence],
    initial: &Pose,
    prior: &GravityPrior,
    k: &CameraIntrinsics,
    max_iters: usize,
    tol: f64,
) -> RefineOutcome {
    let problem = Problem::new(points, lines, prior, k);
    let state = initial_state(initial);
    let initial_cost = problem.cost(&state);
    let (state, cost, iterations) = levenberg_marquardt(&problem, state, max_iters, tol);
    outcome(&problem, &state, initial_cost, cost, iterations)
}

/// Largest residual row relative to its bound at `pose`; at most 1 exactly
/// when every correspondence passes its bounded-error test. Infinite if a
/// feature is behind the camera.
pub fn max_normalized_residual(
    points: &[PointCorrespondence],
    lines: &[LineCorrespondence],
    pose: &Pose,
    prior: &GravityPrior,
    k: &CameraIntrinsics,
) -> f64 {
    let mut problem = Problem::new(points, lines, prior, k);
    problem.row_scale = problem.row_bounds().iter().map(|b| 1.0 / b).collect();
    max_abs(&problem, &initial_state(pose))
}

fn max_abs(problem: &Problem, state: &RefineState) -> f64 {
    problem.linearize(state, false).map_or(f64::INFINITY, |l| {
        l.residuals.iter().fold(0.0, |m: f64, r| m.max(r.abs()))
    })
}

/// Approximate minimax fit: minimizes the largest bound-normalized residual
/// by Lawson reweighting of weighted least squares. `final_cost` is that
/// largest residual, so a result at most 1 puts every correspondence inside
/// its bound. The best iterate is returned; it is never worse than `initial`.
pub fn refine_minimax(
    points: &[PointCorrespondence],
    lines: &[LineCorrespondence],
    initial: &Pose,
    prior: &GravityPrior,
    k: &CameraIntrinsics,
    rounds: usize,
) -> RefineOutcome {
    let mut problem = Problem::new(points, lines, prior, k);
    let inv_bounds: Vec<f64> = problem.row_bounds().iter().map(|b| 1.0 / b).collect();
    let rows = inv_bounds.len();
    let mut weights = vec![1.0 / rows as f64; rows];
    problem.row_scale = inv_bounds.clone();
    let mut state = initial_state(initial);
    let initial_cost = max_abs(&problem, &state);
    let (mut best, mut best_cost) = (state, initial_cost);
    let mut iterations = 0;

    for _ in 0..rounds {
        problem.row_scale = inv_bounds
            .iter()
            .zip(&weights)
            .map(|(s, w)| s * w.sqrt())
            .collect();
        state = levenberg_marquardt(&problem, state, 20, 1e-14).0;
        iterations += 1;
        problem.row_scale = inv_bounds.clone();
        let Some(lin) = problem.linearize(&state, false) else {
            break;
        };
        let worst = lin.residuals.iter().fold(0.0, |m: f64, r| m.max(r.abs()));
        if worst < best_cost {
            best = state;
            best_cost = worst;
        }
        for (w, r) in weights.iter_mut().zip(&lin.residuals) {
            *w *= r.abs().max(1e-12);
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            break;
        }
        weights.iter_mut().for_each(|w| *w /= total);
    }
    problem.row_scale = inv_bounds;
    outcome(&problem, &best, initial_cost, best_cost, iterations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{build_rotation, pose_error, project};
    use nalgebra::Vector2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    struct Fixture {
        prior: GravityPrior,
        truth: Pose,
        k: CameraIntrinsics,
        points: Vec<PointCorrespondence>,
        lines: Vec<LineCorrespondence>,
    }

    fn fixture(seed: u64, noise: f64) -> Fixture {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = CameraIntrinsics::new(400.0, 400.0, 320.0, 240.0).unwrap();
        let prior =
            GravityPrior::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)).unwrap();
        let truth = Pose::new(
            build_rotation(&prior, rng.random_range(-PI..PI)),
            Vector3::new(
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
                rng.random_range(4.0..6.0),
            ),
        );
        let mut cube = || {
            Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
        };
        let raw: Vec<Vector3<f64>> = (0..30).map(|_| cube()).collect();
        let mut jitter = {
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
            move || {
                Vector2::new(
                    rng.random_range(-noise..=noise),
                    rng.random_range(-noise..=noise),
                )
            }
        };
        let points = raw[..20]
            .iter()
            .enumerate()
            .map(|(id, p)| PointCorrespondence {
                id,
                p: *p,
                u: project(p, &truth, &k).unwrap() + jitter(),
                noise_bound: 2.0,
            })
            .collect();
        let lines = raw[20..]
            .chunks(2)
            .enumerate()
            .map(|(id, pair)| LineCorrespondence {
                id,
                p_start: pair[0],
                p_end: pair[1],
                u_start: project(&pair[0], &truth, &k).unwrap() + jitter(),
                u_end: project(&pair[1], &truth, &k).unwrap() + jitter(),
                noise_bound: 2.0,
            })
            .collect();
        Fixture {
            prior,
            truth,
            k,
            points,
            lines,
        }
    }

    #[test]
    fn ground_truth_is_stationary_without_noise() {
        let f = fixture(1, 0.0);
        let out = refine(&f.points, &f.lines, &f.truth, &f.prior, &f.k, 50, 1e-12);
        let e = pose_error(&out.pose, &f.truth);
        assert!(e.translation < 1e-10 && e.rotation_deg < 1e-8, "{e:?}");
    }

    #[test]
    fn perturbed_start_descends_and_improves() {
        for seed in 0..10 {
            let f = fixture(seed, 2.0);
            let (alpha, _, _) = yaw_pitch_roll(&f.truth.rotation);
            let start = Pose::new(
                build_rotation(&f.prior, alpha + 0.5f64.to_radians()),
                f.truth.translation + Vector3::new(0.03, -0.03, 0.03),
            );
            let e0 = pose_error(&start, &f.truth);
            let out = refine(&f.points, &f.lines, &start, &f.prior, &f.k, 50, 1e-10);
            let e1 = pose_error(&out.pose, &f.truth);
            assert!(out.final_cost < out.initial_cost);
            assert!(e1.translation < e0.translation && e1.rotation_deg < e0.rotation_deg);
            let (_, pitch, roll) = yaw_pitch_roll(&out.pose.rotation);
            assert!((pitch - f.prior.pitch).abs() < 1e-12);
            assert!(crate::geom::angle_distance(roll, f.prior.roll) < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let f = fixture(7, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(70);
        let (alpha, _, _) = yaw_pitch_roll(&f.truth.rotation);
        for _ in 0..20 {
            let s = RefineState::new(
                alpha + rng.random_range(-0.05..0.05),
                f.truth.translation.x + rng.random_range(-0.2..0.2),
                f.truth.translation.y + rng.random_range(-0.2..0.2),
                f.truth.translation.z + rng.random_range(-0.2..0.2),
            );
            let g = refine_gradient(&f.points, &f.lines, &f.prior, &f.k, &s).unwrap();
            let mut fd = Vector4::zeros();
            for d in 0..4 {
                let h = 1e-6;
                let mut sp = s;
                let mut sm = s;
                sp[d] += h;
                sm[d] -= h;
                fd[d] = (refine_objective(&f.points, &f.lines, &f.prior, &f.k, &sp)
                    - refine_objective(&f.points, &f.lines, &f.prior, &f.k, &sm))
                    / (2.0 * h);
            }
            assert!((g - fd).norm() / fd.norm().max(1e-12) < 1e-5);
        }
    }

    #[test]
    fn zero_iterations_return_the_start() {
        let f = fixture(3, 2.0);
        let out = refine(&f.points, &f.lines, &f.truth, &f.prior, &f.k, 0, 0.0);
        assert_eq!(out.final_cost, out.initial_cost);
        assert_eq!(out.pose.translation, f.truth.translation);
    }
}
