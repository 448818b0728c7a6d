//! Kinematics and kinematic control of a free-floating underwater vehicle
//! carrying a two-segment constant-curvature continuum arm.
//!
//! The crate is layered bottom-up:
//!
//! * [`geometry`]: rotations, skew operator, Euler-rate map, axis-angle error, smoothing polynomial
//! * [`model`]: state layout, geometry parameters, forward kinematics
//! * [`jacobian`]: analytic total Jacobian, 4-DoF reduction, finite-difference oracle
//! * [`redundancy`]: weighted least-norm inverse, weightings, subtask gradients
//! * [`control`]: the resolved-rates loop
//! * [`sim`]: scenario files, the nine reference cases, CSV output, command stream, suite report
//! * [`check`]: randomized oracle checks shared by the CLI and the test suites
//!
//! With the default `parallel` feature, case suites and oracle sweeps run on
//! the rayon thread pool; without it they fall back to plain iterators.

// `!(a < b)` guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod check;
pub mod control;
pub mod error;
pub mod geometry;
pub mod jacobian;
pub mod model;
pub mod par;
pub mod redundancy;
pub mod sim;

pub use error::{KinematicsError, Result};
