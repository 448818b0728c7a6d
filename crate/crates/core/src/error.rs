use thiserror::Error;

/// Failures raised by the kinematic model and the redundancy solver.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum KinematicsError {
    #[error("vehicle pitch {beta} rad is too close to the Euler-angle singularity")]
    GimbalProximity { beta: f64 },

    #[error("task-space system is numerically singular (condition number {condition:e})")]
    SingularTask { condition: f64 },

    #[error("bending angle of segment {segment} ({theta} rad) is outside the open joint-limit interval")]
    JointLimitViolation { segment: usize, theta: f64 },

    #[error("vehicle is directly above or below the goal; heading objective is undefined")]
    DegenerateAlignment,

    #[error("smoothing band is empty: lower bound {lower} must be below upper bound {upper}")]
    InvalidBand { lower: f64, upper: f64 },
}

pub type Result<T, E = KinematicsError> = std::result::Result<T, E>;
