//! Pinhole camera, gravity-constrained rotations and pose error metrics.
//!
//! Poses map world points into the camera frame: `x_c = R * p + t`.
//! The world-from-camera rotation is decomposed as `Rz(yaw) * Ry(pitch) * Rx(roll)`
//! and the solver-facing `R` is its transpose. Pitch and roll come from an
//! inertial gravity estimate, so only yaw remains unknown.

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Camera-frame depth at or below which a point counts as behind the camera.
pub const DEPTH_EPSILON: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("invalid intrinsics: fx={fx}, fy={fy}, cx={cx}, cy={cy}")]
    InvalidIntrinsics { fx: f64, fy: f64, cx: f64, cy: f64 },
    #[error(
        "gravity prior must be finite with pitch in [-pi/2, pi/2], got pitch={pitch}, roll={roll}"
    )]
    InvalidPrior { pitch: f64, roll: f64 },
}

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self, GeomError> {
        let k = Self { fx, fy, cx, cy };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GeomError> {
        let finite = [self.fx, self.fy, self.cx, self.cy]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(GeomError::InvalidIntrinsics {
                fx: self.fx,
                fy: self.fy,
                cx: self.cx,
                cy: self.cy,
            });
        }
        Ok(())
    }

    /// Mean focal length, used to express pixel tolerances on the normalized plane.
    pub fn mean_focal(&self) -> f64 {
        0.5 * (self.fx + self.fy)
    }

    /// Largest Euclidean displacement on the normalized plane caused by a
    /// pixel perturbation bounded by `n` on each axis.
    pub fn normalized_radius(&self, n: f64) -> f64 {
        n * (self.fx.powi(-2) + self.fy.powi(-2)).sqrt()
    }
}

/// Pitch and roll of the camera relative to the gravity-aligned world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GravityPrior {
    pub pitch: f64,
    pub roll: f64,
}

impl GravityPrior {
    pub fn new(pitch: f64, roll: f64) -> Result<Self, GeomError> {
        let prior = Self { pitch, roll };
        prior.validate()?;
        Ok(prior)
    }

    pub fn validate(&self) -> Result<(), GeomError> {
        let half_pi = std::f64::consts::FRAC_PI_2;
        if !self.pitch.is_finite() || !self.roll.is_finite() || self.pitch.abs() > half_pi {
            return Err(GeomError::InvalidPrior {
                pitch: self.pitch,
                roll: self.roll,
            });
        }
        Ok(())
    }
}

/// `R(alpha) = cos_part * cos(alpha) + sin_part * sin(alpha) + fixed_part`.
///
/// Precomputed once per prior so evaluating a yaw costs two trig calls and a
/// handful of multiply-adds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YawRotationBasis {
    pub cos_part: Matrix3<f64>,
    pub sin_part: Matrix3<f64>,
    pub fixed_part: Matrix3<f64>,
}

impl YawRotationBasis {
    pub fn new(prior: &GravityPrior) -> Self {
        let tilt = rot_y(prior.pitch) * rot_x(prior.roll);
        // Rz(a) = cos(a) * diag(1,1,0) + sin(a) * [e_z]x + diag(0,0,1)
        let pc = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0);
        let ps = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let pz = Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        Self {
            cos_part: (pc * tilt).transpose(),
            sin_part: (ps * tilt).transpose(),
            fixed_part: (pz * tilt).transpose(),
        }
    }

    pub fn rotation(&self, alpha: f64) -> Matrix3<f64> {
        let (s, c) = alpha.sin_cos();
        self.cos_part * c + self.sin_part * s + self.fixed_part
    }

    /// `dR/dalpha`.
    pub fn rotation_derivative(&self, alpha: f64) -> Matrix3<f64> {
        let (s, c) = alpha.sin_cos();
        self.sin_part * c - self.cos_part * s
    }
}

/// World-to-camera rigid transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_yaw(prior: &GravityPrior, alpha: f64, translation: Vector3<f64>) -> Self {
        Self::new(build_rotation(prior, alpha), translation)
    }

    pub fn transform(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    /// `(yaw, pitch, roll)` of the world-from-camera rotation.
    pub fn yaw_pitch_roll(&self) -> (f64, f64, f64) {
        yaw_pitch_roll(&self.rotation)
    }
}

/// A ray direction `(x, y, 1)` on the normalized image plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BearingVector {
    pub x: f64,
    pub y: f64,
}

impl BearingVector {
    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, 1.0)
    }
}

pub fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// World-to-camera rotation for the given prior and yaw.
pub fn build_rotation(prior: &GravityPrior, alpha: f64) -> Matrix3<f64> {
    YawRotationBasis::new(prior).rotation(alpha)
}

/// Decompose a world-to-camera rotation `R` into the `(yaw, pitch, roll)` of
/// `R^T = Rz(yaw) Ry(pitch) Rx(roll)`.
pub fn yaw_pitch_roll(r: &Matrix3<f64>) -> (f64, f64, f64) {
    // Entries of R_wc = R^T, read from R directly.
    let wc = |i: usize, j: usize| r[(j, i)];
    let pitch = (-wc(2, 0)).atan2(wc(2, 1).hypot(wc(2, 2)));
    let roll = wc(2, 1).atan2(wc(2, 2));
    let yaw = wc(1, 0).atan2(wc(0, 0));
    (yaw, pitch, roll)
}

pub fn backproject(u: &Vector2<f64>, k: &CameraIntrinsics) -> BearingVector {
    BearingVector {
        x: (u.x - k.cx) / k.fx,
        y: (u.y - k.cy) / k.fy,
    }
}

/// Pixel projection of a world point, or `None` when it lies behind the camera.
pub fn project(p: &Vector3<f64>, pose: &Pose, k: &CameraIntrinsics) -> Option<Vector2<f64>> {
    project_camera(&pose.transform(p), k)
}

/// Pixel projection of a camera-frame point.
pub fn project_camera(x: &Vector3<f64>, k: &CameraIntrinsics) -> Option<Vector2<f64>> {
    if x.z <= DEPTH_EPSILON {
        return None;
    }
    Some(Vector2::new(
        k.fx * x.x / x.z + k.cx,
        k.fy * x.y / x.z + k.cy,
    ))
}

/// Translation and rotation discrepancy between two poses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseError {
    /// `|t_est - t_gt|` in meters.
    pub translation: f64,
    /// Angle of `R_est * R_gt^T` in degrees.
    pub rotation_deg: f64,
}

pub fn pose_error(estimate: &Pose, truth: &Pose) -> PoseError {
    PoseError {
        translation: (estimate.translation - truth.translation).norm(),
        rotation_deg: rotation_angle(&(estimate.rotation * truth.rotation.transpose()))
            .to_degrees(),
    }
}

/// Rotation angle in `[0, pi]`.
pub fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    // atan2 keeps precision near 0 and pi where acos of the trace does not.
    let axis = Vector3::new(
        r[(2, 1)] - r[(1, 2)],
        r[(0, 2)] - r[(2, 0)],
        r[(1, 0)] - r[(0, 1)],
    );
    let sin2 = axis.norm();
    let cos2 = r.trace() - 1.0;
    sin2.atan2(cos2)
}

/// Wrap an angle into `[-pi, pi)`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let w = (a + PI).rem_euclid(TAU) - PI;
    if w >= PI {
        w - TAU
    } else {
        w
    }
}

/// Absolute circular distance between two angles.
pub fn angle_distance(a: f64, b: f64) -> f64 {
    wrap_angle(a - b).abs()
}
