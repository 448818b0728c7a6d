//! Randomized oracle checks: analytic Jacobian vs finite differences, weighted
//! least-norm optimality, and subtask gradients vs finite differences.
//!
//! Each check is seeded, so results are reproducible, and its samples are
//! mapped through [`crate::par::map`].

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{wrap_angle, Vec3};
use crate::jacobian::{fd_jacobian, relative_frobenius, total_jacobian, FD_STEP};
use crate::model::{GeometryParams, ManipulatorState, RobotState, STATE_DIM};
use crate::par::{self, Execution};
use crate::redundancy::{
    g1, g2, g3, grad_g1, grad_g2, grad_g3, joint_limit_barrier, weight_joint_limits,
    weighted_pinv, JointLimitTracker, StateVector,
};

pub const JACOBIAN_TOL: f64 = 1e-6;
pub const RESIDUAL_TOL: f64 = 1e-9;
pub const GRADIENT_TOL: f64 = 1e-8;
pub const WLN_COST_SLACK: f64 = 1e-12;
const LIMIT_MARGIN: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub worst: f64,
    pub tolerance: f64,
    pub samples: usize,
    pub elapsed: Duration,
}

impl std::fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "[{}] {}: worst {:.3e} (tol {:.1e}) over {} samples in {:.3} s",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.worst,
            self.tolerance,
            self.samples,
            self.elapsed.as_secs_f64()
        )
    }
}

fn seeds(n: usize, seed: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen()).collect()
}

/// Random state with bending angles 0.01 rad inside the limits and |pitch| < 1.
pub fn random_state(rng: &mut impl Rng, geom: &GeometryParams) -> RobotState {
    let lo = geom.theta_min + LIMIT_MARGIN;
    let hi = geom.theta_max - LIMIT_MARGIN;
    let mut q = [0.0; STATE_DIM];
    q[0] = rng.gen_range(-2.0..2.0);
    q[1] = rng.gen_range(-2.0..2.0);
    q[2] = rng.gen_range(-2.0..2.0);
    q[3] = rng.gen_range(-PI..PI);
    q[4] = rng.gen_range(-0.999..0.999);
    q[5] = rng.gen_range(-PI..PI);
    q[6] = rng.gen_range(lo..hi);
    q[7] = rng.gen_range(-PI..PI);
    q[8] = rng.gen_range(lo..hi);
    q[9] = rng.gen_range(-PI..PI);
    RobotState::from_array(&q)
}

fn outcome(name: &'static str, worst: f64, tolerance: f64, samples: usize, start: Instant) -> CheckOutcome {
    CheckOutcome {
        name,
        passed: worst < tolerance,
        worst,
        tolerance,
        samples,
        elapsed: start.elapsed(),
    }
}

/// Worst relative Frobenius gap between the analytic and finite-difference Jacobians.
pub fn jacobian_oracle(n: usize, seed: u64, geom: &GeometryParams, exec: Execution) -> CheckOutcome {
    let start = Instant::now();
    let errors = par::map(&seeds(n, seed), exec, |&s| {
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let state = random_state(&mut rng, geom);
        match total_jacobian(&state, geom) {
            Ok(j) => relative_frobenius(&j.matrix, &fd_jacobian(&state, geom, FD_STEP)),
            Err(_) => f64::INFINITY,
        }
    });
    let worst = errors.into_iter().fold(0.0, f64::max);
    outcome("jacobian_vs_finite_differences", worst, JACOBIAN_TOL, n, start)
}

/// Result of one weighted least-norm sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WlnSample {
    pub residual: f64,
    /// Smallest `cost(Ψ̇ + z) − cost(Ψ̇)` over sampled null-space directions, relative to `1 + cost(Ψ̇)`.
    pub min_cost_gain: f64,
}

/// One random `(J, W, ẋ)` instance probed with `probes` null-space perturbations.
///
/// Perturbations come from the Moore–Penrose projector built with an SVD,
/// independent of the weighted inverse under test.
pub fn wln_sample(seed: u64, probes: usize) -> WlnSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let j = DMatrix::from_fn(6, STATE_DIM, |_, _| rng.gen_range(-1.0..1.0));
    let w: Vec<f64> = (0..STATE_DIM).map(|_| 10f64.powf(rng.gen_range(-2.0..3.0))).collect();
    let xdot = Vector6::from_fn(|_, _| rng.gen_range(-1.0..1.0));
    let pinv = match weighted_pinv(&j, &w) {
        Ok(p) => p,
        Err(_) => {
            return WlnSample {
                residual: f64::INFINITY,
                min_cost_gain: f64::NEG_INFINITY,
            }
        }
    };
    let rates = &pinv * xdot;
    let residual = (&j * &rates - xdot).norm();
    let cost = |v: &DVector<f64>| v.iter().zip(&w).map(|(x, wi)| wi * x * x).sum::<f64>();
    let base = cost(&rates);
    let mp = j.clone().pseudo_inverse(1e-12).expect("svd of a random matrix");
    let projector = DMatrix::<f64>::identity(STATE_DIM, STATE_DIM) - &mp * &j;
    let mut min_gain = f64::INFINITY;
    for _ in 0..probes {
        let v = DVector::from_fn(STATE_DIM, |_, _| rng.gen_range(-1.0..1.0));
        let scale = 10f64.powf(rng.gen_range(-3.0..0.0));
        let z = &projector * v * scale;
        let gain = (cost(&(&rates + z)) - base) / (1.0 + base);
        min_gain = min_gain.min(gain);
    }
    WlnSample {
        residual,
        min_cost_gain: min_gain,
    }
}

/// Returns the residual check and the optimality check.
pub fn wln_oracle(n: usize, probes: usize, seed: u64, exec: Execution) -> (CheckOutcome, CheckOutcome) {
    let start = Instant::now();
    let samples = par::map(&seeds(n, seed), exec, |&s| wln_sample(s, probes));
    let worst_residual = samples.iter().map(|s| s.residual).fold(0.0, f64::max);
    let worst_gain = samples.iter().map(|s| s.min_cost_gain).fold(f64::INFINITY, f64::min);
    let residual = outcome("wln_task_residual", worst_residual, RESIDUAL_TOL, n, start);
    // a negative gain means a perturbation found a cheaper solution
    let optimality = outcome(
        "wln_null_space_optimality",
        (-worst_gain).max(0.0),
        WLN_COST_SLACK,
        n * probes,
        start,
    );
    (residual, optimality)
}

fn fd_gradient(f: impl Fn(&RobotState) -> f64, state: &RobotState) -> StateVector {
    let h = 1e-6;
    let q = state.to_array();
    StateVector::from_fn(|i, _| {
        let mut plus = q;
        let mut minus = q;
        plus[i] += h;
        minus[i] -= h;
        (f(&RobotState::from_array(&plus)) - f(&RobotState::from_array(&minus))) / (2.0 * h)
    })
}

/// Max-abs gap between each analytic subtask gradient and central differences.
///
/// Samples keep the vehicle at least 0.5 m from the goal in the plane and the
/// heading error at least 0.1 rad away from the ±π seam.
pub fn gradient_oracle(n: usize, seed: u64, exec: Execution) -> CheckOutcome {
    let start = Instant::now();
    let geom = GeometryParams::default();
    let errors = par::map(&seeds(n, seed), exec, |&s| {
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        loop {
            let state = random_state(&mut rng, &geom);
            let goal = Vec3::new(
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-1.0..1.0),
            );
            let p = state.vehicle.position;
            let planar = ((goal.x - p.x).powi(2) + (goal.y - p.y).powi(2)).sqrt();
            let zeta = (goal.y - p.y).atan2(goal.x - p.x);
            if planar < 0.5 || wrap_angle(state.vehicle.attitude.alpha - zeta).abs() > PI - 0.1 {
                continue;
            }
            let psi_des = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let e1 = (grad_g1(&state) - fd_gradient(g1, &state)).amax();
            let e2 = match grad_g2(&state, &goal) {
                Ok(g) => (g - fd_gradient(|s| g2(s, &goal), &state)).amax(),
                Err(_) => f64::INFINITY,
            };
            let e3 = (grad_g3(&state, &psi_des) - fd_gradient(|s| g3(s, &psi_des), &state)).amax();
            break e1.max(e2).max(e3);
        }
    });
    let worst = errors.into_iter().fold(0.0, f64::max);
    outcome("subtask_gradients_vs_finite_differences", worst, GRADIENT_TOL, n, start)
}

/// W_j entry just inside the upper limit while moving outward, and while moving inward.
pub fn joint_limit_weights(geom: &GeometryParams) -> (f64, f64) {
    let theta = geom.theta_max - 1e-4;
    let manip = ManipulatorState {
        theta1: theta,
        ..Default::default()
    };
    let mut outward = JointLimitTracker::new();
    outward.update(&ManipulatorState {
        theta1: theta - 1e-3,
        ..Default::default()
    });
    let mut inward = JointLimitTracker::new();
    inward.update(&ManipulatorState {
        theta1: theta + 5e-5,
        ..Default::default()
    });
    let w_out = weight_joint_limits(&manip, &outward, geom).map_or(f64::NAN, |w| w[6]);
    let w_in = weight_joint_limits(&manip, &inward, geom).map_or(f64::NAN, |w| w[6]);
    debug_assert_eq!(w_out, joint_limit_barrier(theta, geom.theta_min, geom.theta_max));
    (w_out, w_in)
}

/// All oracle checks with the sample counts used by the `check` command.
pub fn run_all(seed: u64, exec: Execution) -> Vec<CheckOutcome> {
    let geom = GeometryParams::default();
    let mut out = vec![jacobian_oracle(1000, seed, &geom, exec)];
    let (res, opt) = wln_oracle(1000, 100, seed.wrapping_add(1), exec);
    out.push(res);
    out.push(opt);
    out.push(gradient_oracle(1000, seed.wrapping_add(2), exec));
    let start = Instant::now();
    let (w_out, w_in) = joint_limit_weights(&geom);
    out.push(CheckOutcome {
        name: "joint_limit_weight_blow_up",
        passed: w_out > 1e6 && w_in == 1.0,
        worst: w_out,
        tolerance: 1e6,
        samples: 2,
        elapsed: start.elapsed(),
    });
    out
}
