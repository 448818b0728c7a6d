//! Rotation and angle utilities shared by the kinematic model and the controller.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{KinematicsError, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Rot3 = Rotation3<f64>;

/// Smallest |cos β| accepted before the Euler-rate map is considered singular.
pub const GIMBAL_COS_MIN: f64 = 1e-6;

const AXIS_ZERO_ANGLE: f64 = 1e-9;
const AXIS_NEAR_PI: f64 = 1e-6;

/// ZYX (yaw, pitch, roll) attitude, `R = Rz(alpha) Ry(beta) Rx(gamma)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EulerZyx {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl EulerZyx {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Self {
        Self { alpha, beta, gamma }
    }

    pub fn to_rotation(&self) -> Rot3 {
        rot_z(self.alpha) * rot_y(self.beta) * rot_x(self.gamma)
    }

    /// Recovers yaw, pitch and roll from a rotation matrix. Pitch lands in [-π/2, π/2].
    pub fn from_rotation(r: &Rot3) -> Self {
        let m = r.matrix();
        let beta = (-m[(2, 0)]).clamp(-1.0, 1.0).asin();
        let alpha = m[(1, 0)].atan2(m[(0, 0)]);
        let gamma = m[(2, 1)].atan2(m[(2, 2)]);
        Self { alpha, beta, gamma }
    }
}

pub fn rot_x(angle: f64) -> Rot3 {
    let (s, c) = angle.sin_cos();
    Rot3::from_matrix_unchecked(Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c))
}

pub fn rot_y(angle: f64) -> Rot3 {
    let (s, c) = angle.sin_cos();
    Rot3::from_matrix_unchecked(Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c))
}

pub fn rot_z(angle: f64) -> Rot3 {
    let (s, c) = angle.sin_cos();
    Rot3::from_matrix_unchecked(Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))
}

/// Rotation of `angle` about the unit vector `axis` (Rodrigues).
pub fn rotation_about(axis: &Vec3, angle: f64) -> Rot3 {
    let k = skew(axis);
    let m = Mat3::identity() + k * angle.sin() + k * k * (1.0 - angle.cos());
    Rot3::from_matrix_unchecked(m)
}

/// Cross-product matrix: `skew(v) * w == v.cross(w)`.
pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Maps ZYX Euler-angle rates `[α̇, β̇, γ̇]` to the world-frame angular velocity.
pub fn euler_rate_map(alpha: f64, beta: f64) -> Result<Mat3> {
    let (sa, ca) = alpha.sin_cos();
    let (sb, cb) = beta.sin_cos();
    if cb.abs() < GIMBAL_COS_MIN {
        return Err(KinematicsError::GimbalProximity { beta });
    }
    Ok(Mat3::new(
        0.0,
        -sa,
        ca * cb,
        0.0,
        ca,
        sa * cb,
        1.0,
        0.0,
        -sb,
    ))
}

/// Axis-angle form of `R_err = R_goal · R_currentᵀ`.
///
/// Returns `(mu, m)` with `mu ∈ [0, π]` such that rotating `current` by `mu`
/// about the world-frame axis `m` yields `goal`. When the two rotations
/// coincide the axis is the zero vector.
pub fn axis_angle_error(current: &Rot3, goal: &Rot3) -> (f64, Vec3) {
    let err = goal.matrix() * current.matrix().transpose();
    let cos_mu = ((err.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let v = Vec3::new(
        err[(2, 1)] - err[(1, 2)],
        err[(0, 2)] - err[(2, 0)],
        err[(1, 0)] - err[(0, 1)],
    );
    // atan2 keeps full precision at both ends, where acos alone does not
    let mu = (0.5 * v.norm()).atan2(cos_mu);
    if mu < AXIS_ZERO_ANGLE {
        return (0.0, Vec3::zeros());
    }
    if PI - mu < AXIS_NEAR_PI {
        // Symmetric part is cos μ·I + (1 − cos μ)·m mᵀ; pick the best-conditioned column.
        let sym = (err + err.transpose()) * 0.5;
        let outer = (sym - Mat3::identity() * cos_mu) / (1.0 - cos_mu);
        let k = (0..3)
            .max_by(|&a, &b| outer[(a, a)].total_cmp(&outer[(b, b)]))
            .unwrap_or(0);
        let mut axis = outer.column(k).into_owned() / outer[(k, k)].max(0.0).sqrt();
        axis.normalize_mut();
        if axis.dot(&v) < 0.0 {
            axis = -axis;
        }
        return (mu, axis);
    }
    let axis = v / (2.0 * mu.sin());
    (mu, axis.normalize())
}

/// Quintic smoothstep `6t⁵ − 15t⁴ + 10t³` over `t = (x − lower)/(upper − lower)`,
/// saturated to 0 below `lower` and 1 above `upper`.
pub fn smoothstep5(x: f64, lower: f64, upper: f64) -> Result<f64> {
    if !(lower < upper) {
        return Err(KinematicsError::InvalidBand { lower, upper });
    }
    if x <= lower {
        return Ok(0.0);
    }
    if x >= upper {
        return Ok(1.0);
    }
    let t = (x - lower) / (upper - lower);
    Ok(t * t * t * (t * (t * 6.0 - 15.0) + 10.0))
}

/// Wraps an angle into (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut r = a.rem_euclid(two_pi);
    if r > PI {
        r -= two_pi;
    }
    r
}
