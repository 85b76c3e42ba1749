//! Synthetic scenes: features in a cube, a random camera looking at it,
//! bounded pixel noise on inliers, and outliers rendered from decoy cameras.

use crate::geom::{project, CameraIntrinsics, GravityPrior, Pose};
use crate::pipeline::{line_passes, point_passes};
use crate::tim::{LineCorrespondence, PointCorrespondence};
use nalgebra::{Vector2, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};
use thiserror::Error;

/// A world point with its pixel.
type WorldPixel = (Vector3<f64>, Vector2<f64>);

/// Resampling budget for poses and for each feature.
pub const MAX_ATTEMPTS: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("invalid scene config: {0}")]
    InvalidConfig(String),
    #[error("scene generation failed: {0}")]
    GenerationFailure(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    /// Uniform in `[-n, n]` per axis.
    #[default]
    Uniform,
    /// Gaussian with sigma `n / 2`, resampled until inside `[-n, n]`.
    TruncatedGaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub n_points: usize,
    pub n_lines: usize,
    pub outlier_rate: f64,
    /// `n` in pixels, shared by every correspondence.
    pub pixel_noise_bound: f64,
    pub noise_model: NoiseModel,
    pub world_cube_half: f64,
    /// Camera centers are drawn from `[-h, h]^3`.
    pub translation_half: f64,
    /// Yaw and roll are drawn from `[-r, r]`, pitch from `[-min(r, pi/2), min(r, pi/2)]`.
    pub rotation_range: f64,
    pub gravity_noise_sigma_deg: f64,
    pub camera: CameraIntrinsics,
    pub image_width: f64,
    pub image_height: f64,
    pub min_line_length_px: f64,
    /// Features closer than this to the camera plane are resampled.
    pub min_depth: f64,
    pub rng_seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            n_points: 50,
            n_lines: 0,
            outlier_rate: 0.0,
            pixel_noise_bound: 2.0,
            noise_model: NoiseModel::Uniform,
            world_cube_half: 1.0,
            translation_half: 2.0,
            rotation_range: PI,
            gravity_noise_sigma_deg: 0.0,
            camera: CameraIntrinsics {
                fx: 400.0,
                fy: 400.0,
                cx: 320.0,
                cy: 240.0,
            },
            image_width: 640.0,
            image_height: 480.0,
            min_line_length_px: 20.0,
            min_depth: 0.1,
            rng_seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |m: &str| Err(SceneError::InvalidConfig(m.to_string()));
        if self.n_points + self.n_lines == 0 {
            return bad("empty scene");
        }
        if !(0.0..1.0).contains(&self.outlier_rate) {
            return bad("outlier_rate must lie in [0, 1)");
        }
        let non_negative = |v: f64| v >= 0.0;
        if !non_negative(self.pixel_noise_bound) || !non_negative(self.gravity_noise_sigma_deg) {
            return bad("noise bounds must be non-negative");
        }
        if self.camera.validate().is_err() || !(self.image_width > 0.0 && self.image_height > 0.0) {
            return bad("invalid camera");
        }
        Ok(())
    }

    /// `(point outliers, line outliers)`. The total is `rate * N` rounded to
    /// nearest, split in proportion to the feature counts.
    pub fn outlier_counts(&self) -> (usize, usize) {
        let total = self.n_points + self.n_lines;
        let outliers = (self.outlier_rate * total as f64).round() as usize;
        let points = ((outliers * self.n_points) as f64 / total as f64).round() as usize;
        let points = points
            .min(self.n_points)
            .max(outliers.saturating_sub(self.n_lines));
        (points, outliers - points)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub config: SceneConfig,
    pub true_pose: Pose,
    pub true_prior: GravityPrior,
    /// The prior handed to solvers; equals `true_prior` when sigma is zero.
    pub prior: GravityPrior,
    pub points: Vec<PointCorrespondence>,
    pub lines: Vec<LineCorrespondence>,
    pub point_inlier: Vec<bool>,
    pub line_inlier: Vec<bool>,
}

impl SyntheticScene {
    pub fn inlier_count(&self) -> usize {
        self.point_inlier
            .iter()
            .chain(&self.line_inlier)
            .filter(|&&b| b)
            .count()
    }
}

struct Generator<'a> {
    cfg: &'a SceneConfig,
    rng: ChaCha8Rng,
}

impl Generator<'_> {
    fn cube_point(&mut self) -> Vector3<f64> {
        let h = self.cfg.world_cube_half;
        Vector3::new(
            self.rng.random_range(-h..=h),
            self.rng.random_range(-h..=h),
            self.rng.random_range(-h..=h),
        )
    }

    /// Pitch and roll of a random orientation, canonicalized.
    fn orientation(&mut self) -> (GravityPrior, f64) {
        let r = self.cfg.rotation_range;
        let yaw = self.rng.random_range(-r..=r);
        let pitch = self
            .rng
            .random_range(-(r.min(FRAC_PI_2))..=r.min(FRAC_PI_2));
        let roll = self.rng.random_range(-r..=r);
        (GravityPrior { pitch, roll }, yaw)
    }

    /// A pose whose center is outside the cube and which sees the cube center.
    fn pose(&mut self) -> Result<(GravityPrior, Pose), SceneError> {
        for _ in 0..MAX_ATTEMPTS {
            let (prior, yaw) = self.orientation();
            let h = self.cfg.translation_half;
            let center = Vector3::new(
                self.rng.random_range(-h..=h),
                self.rng.random_range(-h..=h),
                self.rng.random_range(-h..=h),
            );
            if center.abs().max() <= self.cfg.world_cube_half {
                continue;
            }
            let r = crate::geom::build_rotation(&prior, yaw);
            let pose = Pose::new(r, -(r * center));
            if self.visible(&Vector3::zeros(), &pose, 0.0).is_some() {
                return Ok((prior, pose));
            }
        }
        Err(SceneError::GenerationFailure(format!(
            "no camera pose seeing the cube after {MAX_ATTEMPTS} attempts"
        )))
    }

    /// Pixel of `p` if it is in front of the camera and at least `margin`
    /// inside the image.
    fn visible(&self, p: &Vector3<f64>, pose: &Pose, margin: f64) -> Option<Vector2<f64>> {
        if pose.transform(p).z < self.cfg.min_depth {
            return None;
        }
        let u = project(p, pose, &self.cfg.camera)?;
        let inside = u.x >= margin
            && u.y >= margin
            && u.x <= self.cfg.image_width - margin
            && u.y <= self.cfg.image_height - margin;
        inside.then_some(u)
    }

    fn noise(&mut self) -> Vector2<f64> {
        let n = self.cfg.pixel_noise_bound;
        if n == 0.0 {
            return Vector2::zeros();
        }
        let mut draw = || match self.cfg.noise_model {
            NoiseModel::Uniform => self.rng.random_range(-n..=n),
            NoiseModel::TruncatedGaussian => {
                let normal = Normal::new(0.0, n / 2.0).expect("positive sigma");
                loop {
                    let v: f64 = normal.sample(&mut self.rng);
                    if v.abs() <= n {
                        break v;
                    }
                }
            }
        };
        let x = draw();
        let y = draw();
        Vector2::new(x, y)
    }

    fn point(&mut self, pose: &Pose) -> Result<(Vector3<f64>, Vector2<f64>), SceneError> {
        let n = self.cfg.pixel_noise_bound;
        for _ in 0..MAX_ATTEMPTS {
            let p = self.cube_point();
            if let Some(u) = self.visible(&p, pose, n) {
                return Ok((p, u + self.noise()));
            }
        }
        Err(SceneError::GenerationFailure("no visible point".into()))
    }

    fn line(&mut self, pose: &Pose) -> Result<[WorldPixel; 2], SceneError> {
        let n = self.cfg.pixel_noise_bound;
        for _ in 0..MAX_ATTEMPTS {
            let a = self.cube_point();
            let b = self.cube_point();
            let (Some(ua), Some(ub)) = (self.visible(&a, pose, n), self.visible(&b, pose, n))
            else {
                continue;
            };
            if (ua - ub).norm() >= self.cfg.min_line_length_px {
                return Ok([(a, ua + self.noise()), (b, ub + self.noise())]);
            }
        }
        Err(SceneError::GenerationFailure("no visible line".into()))
    }
}

/// Outliers must fail the inlier test at the true pose even with the bound
/// doubled, so noise can never turn them into accidental inliers.
const OUTLIER_MARGIN: f64 = 2.0;

pub fn generate_scene(config: &SceneConfig) -> Result<SyntheticScene, SceneError> {
    config.validate()?;
    let mut g = Generator {
        cfg: config,
        rng: ChaCha8Rng::seed_from_u64(config.rng_seed),
    };
    let k = config.camera;
    let n = config.pixel_noise_bound;
    let (true_prior, true_pose) = g.pose()?;
    let (point_outliers, line_outliers) = config.outlier_counts();

    let mut point_inlier: Vec<bool> = (0..config.n_points).map(|i| i >= point_outliers).collect();
    let mut line_inlier: Vec<bool> = (0..config.n_lines).map(|i| i >= line_outliers).collect();
    point_inlier.shuffle(&mut g.rng);
    line_inlier.shuffle(&mut g.rng);

    let mut points = Vec::with_capacity(config.n_points);
    for (id, &inlier) in point_inlier.iter().enumerate() {
        let c = if inlier {
            let (p, u) = g.point(&true_pose)?;
            PointCorrespondence {
                id,
                p,
                u,
                noise_bound: n,
            }
        } else {
            let mut found = None;
            for _ in 0..MAX_ATTEMPTS {
                let (_, decoy) = g.pose()?;
                let (p, u) = g.point(&decoy)?;
                let c = PointCorrespondence {
                    id,
                    p,
                    u,
                    noise_bound: n,
                };
                let strict = PointCorrespondence {
                    noise_bound: OUTLIER_MARGIN * n,
                    ..c
                };
                if !point_passes(&strict, &true_pose, &k) {
                    found = Some(c);
                    break;
                }
            }
            found
                .ok_or_else(|| SceneError::GenerationFailure("no separable point outlier".into()))?
        };
        points.push(c);
    }

    let mut lines = Vec::with_capacity(config.n_lines);
    for (id, &inlier) in line_inlier.iter().enumerate() {
        let make = |[(p_start, u_start), (p_end, u_end)]: [(Vector3<f64>, Vector2<f64>); 2]| {
            LineCorrespondence {
                id,
                p_start,
                p_end,
                u_start,
                u_end,
                noise_bound: n,
            }
        };
        let l = if inlier {
            make(g.line(&true_pose)?)
        } else {
            let mut found = None;
            for _ in 0..MAX_ATTEMPTS {
                let (_, decoy) = g.pose()?;
                let l = make(g.line(&decoy)?);
                let strict = LineCorrespondence {
                    noise_bound: OUTLIER_MARGIN * n,
                    ..l
                };
                if !line_passes(&strict, &true_pose, &k) {
                    found = Some(l);
                    break;
                }
            }
            found
                .ok_or_else(|| SceneError::GenerationFailure("no separable line outlier".into()))?
        };
        lines.push(l);
    }

    let prior = if config.gravity_noise_sigma_deg > 0.0 {
        let normal =
            Normal::new(0.0, config.gravity_noise_sigma_deg.to_radians()).expect("positive sigma");
        GravityPrior {
            pitch: (true_prior.pitch + normal.sample(&mut g.rng)).clamp(-FRAC_PI_2, FRAC_PI_2),
            roll: crate::geom::wrap_angle(true_prior.roll + normal.sample(&mut g.rng)),
        }
    } else {
        true_prior
    };

    Ok(SyntheticScene {
        config: *config,
        true_pose,
        true_prior,
        prior,
        points,
        lines,
        point_inlier,
        line_inlier,
    })
}
