//! State layout, geometric parameters and forward kinematics of the vehicle-arm chain.
//!
//! The chain is `{GCS} → {A}` (vehicle) `→ {B}` (arm mount) `→ {C}` (tip of
//! segment 1) `→ {D}` (end effector). Each continuum segment bends with
//! constant curvature: its local x axis is the backbone tangent at the base
//! and the bending plane contains x and `[0, cos φ, sin φ]`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::geometry::{rotation_about, EulerZyx, Rot3, Vec3};

/// Below this bending angle the segment formulas switch to Taylor series.
pub const THETA_EPS: f64 = 1e-4;

/// Number of entries in the full state vector.
pub const STATE_DIM: usize = 10;

/// Index of each coordinate inside the 10-vector state and its rates.
pub mod idx {
    pub const X: usize = 0;
    pub const Y: usize = 1;
    pub const Z: usize = 2;
    pub const YAW: usize = 3;
    pub const PITCH: usize = 4;
    pub const ROLL: usize = 5;
    pub const THETA1: usize = 6;
    pub const PHI1: usize = 7;
    pub const THETA2: usize = 8;
    pub const PHI2: usize = 9;
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VehicleState {
    pub position: Vec3,
    pub attitude: EulerZyx,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ManipulatorState {
    pub theta1: f64,
    pub phi1: f64,
    pub theta2: f64,
    pub phi2: f64,
}

impl ManipulatorState {
    pub fn bending(&self) -> [f64; 2] {
        [self.theta1, self.theta2]
    }
}

/// Full configuration `[x, y, z, α, β, γ, θ1, φ1, θ2, φ2]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RobotState {
    pub vehicle: VehicleState,
    pub manipulator: ManipulatorState,
}

impl RobotState {
    pub fn from_array(q: &[f64; STATE_DIM]) -> Self {
        Self {
            vehicle: VehicleState {
                position: Vec3::new(q[0], q[1], q[2]),
                attitude: EulerZyx::new(q[3], q[4], q[5]),
            },
            manipulator: ManipulatorState {
                theta1: q[6],
                phi1: q[7],
                theta2: q[8],
                phi2: q[9],
            },
        }
    }

    pub fn to_array(&self) -> [f64; STATE_DIM] {
        let p = &self.vehicle.position;
        let a = &self.vehicle.attitude;
        let m = &self.manipulator;
        [
            p.x, p.y, p.z, a.alpha, a.beta, a.gamma, m.theta1, m.phi1, m.theta2, m.phi2,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Lengths, mount transform and bending limits of the arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryParams {
    pub l1: f64,
    pub l2: f64,
    /// Mount offset of segment 1's base in the vehicle frame.
    pub r_ab: [f64; 3],
    /// Fixed mount rotation as ZYX Euler angles `[yaw, pitch, roll]`.
    pub mount_ypr: [f64; 3],
    pub theta_min: f64,
    pub theta_max: f64,
}

impl Default for GeometryParams {
    fn default() -> Self {
        Self {
            l1: 0.2,
            l2: 0.2,
            r_ab: [0.2, 0.0, -0.1],
            mount_ypr: [0.0, 0.0, 0.0],
            theta_min: -PI / 3.0,
            theta_max: PI / 3.0,
        }
    }
}

impl GeometryParams {
    pub fn mount_offset(&self) -> Vec3 {
        Vec3::from(self.r_ab)
    }

    pub fn mount_rotation(&self) -> Rot3 {
        let [y, p, r] = self.mount_ypr;
        EulerZyx::new(y, p, r).to_rotation()
    }

    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        let all = [
            self.l1,
            self.l2,
            self.r_ab[0],
            self.r_ab[1],
            self.r_ab[2],
            self.mount_ypr[0],
            self.mount_ypr[1],
            self.mount_ypr[2],
            self.theta_min,
            self.theta_max,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            problems.push("geometry: all values must be finite".to_string());
        }
        if !(self.l1 > 0.0 && self.l2 > 0.0) {
            problems.push("geometry: segment lengths l1, l2 must be positive".to_string());
        }
        if !(self.theta_min < 0.0 && 0.0 < self.theta_max) {
            problems.push("geometry: require theta_min < 0 < theta_max".to_string());
        }
        problems
    }
}

/// End-effector position and orientation in the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub p: Vec3,
    pub r: Rot3,
}

impl Pose {
    pub fn new(p: Vec3, r: Rot3) -> Self {
        Self { p, r }
    }
}

/// World-frame pose of every frame along the chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FramePoses {
    pub r_a: Rot3,
    pub p_a: Vec3,
    pub r_b: Rot3,
    pub p_b: Vec3,
    pub r_c: Rot3,
    pub p_c: Vec3,
    pub end_effector: Pose,
}

/// `sin θ / θ` and `(1 − cos θ) / θ`, with series forms near zero.
pub(crate) fn arc_ratios(theta: f64) -> (f64, f64) {
    if theta.abs() < THETA_EPS {
        let t2 = theta * theta;
        let f = 1.0 - t2 / 6.0 * (1.0 - t2 / 20.0 * (1.0 - t2 / 42.0));
        let g = theta / 2.0 * (1.0 - t2 / 12.0 * (1.0 - t2 / 30.0 * (1.0 - t2 / 56.0)));
        (f, g)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta)
    }
}

/// Tip position of a constant-curvature segment in its base frame.
pub fn segment_tip_position(theta: f64, phi: f64, l: f64) -> Vec3 {
    let (f, g) = arc_ratios(theta);
    let (sp, cp) = phi.sin_cos();
    Vec3::new(l * f, l * g * cp, l * g * sp)
}

/// Bending axis `[0, −sin φ, cos φ]` of a segment.
pub fn bending_axis(phi: f64) -> Vec3 {
    let (sp, cp) = phi.sin_cos();
    Vec3::new(0.0, -sp, cp)
}

/// Tip orientation of a segment relative to its base: rotation by θ about the bending axis.
pub fn segment_tip_rotation(theta: f64, phi: f64) -> Rot3 {
    if theta == 0.0 {
        return Rot3::identity();
    }
    rotation_about(&bending_axis(phi), theta)
}

pub fn forward_kinematics(state: &RobotState, geom: &GeometryParams) -> FramePoses {
    let m = &state.manipulator;
    let r_a = state.vehicle.attitude.to_rotation();
    let p_a = state.vehicle.position;
    let r_b = r_a * geom.mount_rotation();
    let p_b = p_a + r_a * geom.mount_offset();
    let r_c = r_b * segment_tip_rotation(m.theta1, m.phi1);
    let p_c = p_b + r_b * segment_tip_position(m.theta1, m.phi1, geom.l1);
    let r_d = r_c * segment_tip_rotation(m.theta2, m.phi2);
    let p_d = p_c + r_c * segment_tip_position(m.theta2, m.phi2, geom.l2);
    FramePoses {
        r_a,
        p_a,
        r_b,
        p_b,
        r_c,
        p_c,
        end_effector: Pose::new(p_d, r_d),
    }
}

pub fn end_effector_pose(state: &RobotState, geom: &GeometryParams) -> Pose {
    forward_kinematics(state, geom).end_effector
}
