//! Weighted least-norm inverse, weighting schedules and null-space subtask gradients.
//!
//! Weighting matrices are diagonal, so they are carried as their diagonals
//! ([`StateVector`]). Use [`diag_matrix`] when a dense matrix is needed.

use nalgebra::{DMatrix, DVector, SVector, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{KinematicsError, Result};
use crate::geometry::{smoothstep5, wrap_angle, Vec3};
use crate::model::{idx, GeometryParams, ManipulatorState, RobotState, STATE_DIM};

pub type StateVector = SVector<f64, STATE_DIM>;

/// Entries of W are floored to this before inversion.
pub const WEIGHT_FLOOR: f64 = 1e-12;
/// Largest accepted condition number of `J W⁻¹ Jᵀ`.
pub const MAX_CONDITION: f64 = 1e12;
/// Bounds of the vehicle/arm priority factor η.
pub const ETA_MIN: f64 = 0.01;
pub const ETA_MAX: f64 = 0.9;

/// Null-space subtask gains, phase thresholds and arm poses for each phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SubtaskGains {
    /// Upright-vehicle objective gain (maximised, so positive).
    pub k1: f64,
    /// Heading-to-target objective gain.
    pub k2: f64,
    /// Arm-pose objective gain; only applied while `δ_p ≥ lambda_pre`.
    pub k3: f64,
    pub lambda_pre: f64,
    pub lambda_tra: f64,
    pub psi_tra: [f64; 2],
    pub psi_pre: [f64; 2],
}

impl Default for SubtaskGains {
    fn default() -> Self {
        use std::f64::consts::FRAC_PI_4;
        Self {
            k1: 3.0,
            k2: -0.05,
            k3: -0.1,
            lambda_pre: 0.3,
            lambda_tra: 0.8,
            psi_tra: [0.0, 0.0],
            psi_pre: [-FRAC_PI_4, FRAC_PI_4],
        }
    }
}

impl SubtaskGains {
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        let values = [
            self.k1,
            self.k2,
            self.k3,
            self.lambda_pre,
            self.lambda_tra,
            self.psi_tra[0],
            self.psi_tra[1],
            self.psi_pre[0],
            self.psi_pre[1],
        ];
        if values.iter().any(|v| !v.is_finite()) {
            problems.push("gains: all values must be finite".to_string());
        }
        if !(0.0 < self.lambda_pre && self.lambda_pre < self.lambda_tra) {
            problems.push("gains: require 0 < lambda_pre < lambda_tra".to_string());
        }
        problems
    }

    /// Arm-pose gain in effect at position error `delta_p`.
    pub fn active_k3(&self, delta_p: f64) -> f64 {
        if delta_p >= self.lambda_pre {
            self.k3
        } else {
            0.0
        }
    }
}

/// Which weighting matrices are multiplied into W.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightingScheme {
    Identity,
    Wc,
    WcWj,
    WcWjWm,
}

impl WeightingScheme {
    pub fn label(self) -> &'static str {
        match self {
            WeightingScheme::Identity => "I",
            WeightingScheme::Wc => "Wc",
            WeightingScheme::WcWj => "Wc*Wj",
            WeightingScheme::WcWjWm => "Wc*Wj*Wm",
        }
    }
}

/// The three diagonal weightings whose product is the total weight W.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightSet {
    pub wc: StateVector,
    pub wj: StateVector,
    pub wm: StateVector,
}

impl WeightSet {
    pub fn identity() -> Self {
        let one = StateVector::repeat(1.0);
        Self {
            wc: one,
            wj: one,
            wm: one,
        }
    }

    pub fn combined(&self) -> StateVector {
        self.wc.component_mul(&self.wj).component_mul(&self.wm)
    }
}

/// Remembers |θ| from the previous control step so W_j can tell outward from inward motion.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct JointLimitTracker {
    previous: Option<[f64; 2]>,
}

impl JointLimitTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn previous(&self) -> Option<[f64; 2]> {
        self.previous
    }

    pub fn update(&mut self, manip: &ManipulatorState) {
        let [a, b] = manip.bending();
        self.previous = Some([a.abs(), b.abs()]);
    }
}

pub fn diag_matrix(d: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(d))
}

/// Constant weighting: vehicle 1000, segment 1 unity, segment 2 0.01.
pub fn weight_constant() -> StateVector {
    StateVector::from_column_slice(&[
        1000.0, 1000.0, 1000.0, 1000.0, 1000.0, 1000.0, 1.0, 1.0, 0.01, 0.01,
    ])
}

/// Barrier weight for one bending angle when it moves away from the centre of its range.
pub fn joint_limit_barrier(theta: f64, theta_min: f64, theta_max: f64) -> f64 {
    let span = theta_max - theta_min;
    let num = span * span * (2.0 * theta - theta_max - theta_min);
    let den = 4.0 * (theta_max - theta).powi(2) * (theta - theta_min).powi(2);
    1.0 + (num / den).abs()
}

/// Joint-limit weighting. Only the bending-angle entries differ from one.
pub fn weight_joint_limits(
    manip: &ManipulatorState,
    tracker: &JointLimitTracker,
    geom: &GeometryParams,
) -> Result<StateVector> {
    let mut w = StateVector::repeat(1.0);
    let thetas = manip.bending();
    for (seg, &theta) in thetas.iter().enumerate() {
        if !(geom.theta_min < theta && theta < geom.theta_max) {
            return Err(KinematicsError::JointLimitViolation {
                segment: seg + 1,
                theta,
            });
        }
    }
    let Some(prev) = tracker.previous() else {
        return Ok(w);
    };
    for (seg, (&theta, &prev_abs)) in thetas.iter().zip(prev.iter()).enumerate() {
        if theta.abs() - prev_abs >= 0.0 {
            let index = if seg == 0 { idx::THETA1 } else { idx::THETA2 };
            w[index] = joint_limit_barrier(theta, geom.theta_min, geom.theta_max);
        }
    }
    Ok(w)
}

/// Priority factor η ∈ [0.01, 0.9]; small near the goal.
pub fn priority_factor(delta_p: f64, gains: &SubtaskGains) -> f64 {
    let s = smoothstep5(delta_p, 0.0, gains.lambda_pre).unwrap_or(1.0);
    ETA_MIN + (ETA_MAX - ETA_MIN) * s
}

/// Shifts effort from vehicle to arm as the end effector approaches the goal.
pub fn weight_manipulator_priority(delta_p: f64, gains: &SubtaskGains) -> StateVector {
    let eta = priority_factor(delta_p, gains);
    let mut w = StateVector::repeat(1.0 / (1.0 - eta));
    for v in w.iter_mut().take(6) {
        *v = 1.0 / eta;
    }
    w
}

/// Assembles the weights selected by `scheme`; unused factors are identity.
pub fn assemble_weights(
    scheme: WeightingScheme,
    manip: &ManipulatorState,
    tracker: &JointLimitTracker,
    geom: &GeometryParams,
    delta_p: f64,
    gains: &SubtaskGains,
) -> Result<WeightSet> {
    let mut set = WeightSet::identity();
    if scheme != WeightingScheme::Identity {
        set.wc = weight_constant();
    }
    if matches!(scheme, WeightingScheme::WcWj | WeightingScheme::WcWjWm) {
        set.wj = weight_joint_limits(manip, tracker, geom)?;
    }
    if scheme == WeightingScheme::WcWjWm {
        set.wm = weight_manipulator_priority(delta_p, gains);
    }
    Ok(set)
}

/// `J_W⁺ = W⁻¹ Jᵀ (J W⁻¹ Jᵀ)⁻¹` for diagonal `W` given by `weights`.
pub fn weighted_pinv(j: &DMatrix<f64>, weights: &[f64]) -> Result<DMatrix<f64>> {
    assert_eq!(j.ncols(), weights.len(), "weight count must match Jacobian columns");
    let w_inv = DVector::from_iterator(weights.len(), weights.iter().map(|w| 1.0 / w.max(WEIGHT_FLOOR)));
    // W⁻¹ Jᵀ, scaling rows of Jᵀ
    let mut wj_t = j.transpose();
    for (mut row, s) in wj_t.row_iter_mut().zip(w_inv.iter()) {
        row *= *s;
    }
    let a = j * &wj_t;
    let a = (&a + a.transpose()) * 0.5;
    let eig = a.clone().symmetric_eigenvalues();
    let lo = eig.min();
    let hi = eig.max();
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition < MAX_CONDITION) {
        return Err(KinematicsError::SingularTask { condition });
    }
    let chol = a
        .cholesky()
        .ok_or(KinematicsError::SingularTask { condition })?;
    Ok(wj_t * chol.inverse())
}

/// Weighted minimum-norm least-squares inverse `W^{-1/2} (J W^{-1/2})⁺`, with
/// singular values below `rtol · σ_max` discarded.
///
/// Agrees with [`weighted_pinv`] when `J` has full row rank. When it does not,
/// it still solves `J Ψ̇ = ẋ` exactly for every `ẋ` in the range of `J`, and
/// `J J_W⁺ J = J` keeps the null-space projector valid.
pub fn weighted_pinv_truncated(j: &DMatrix<f64>, weights: &[f64], rtol: f64) -> DMatrix<f64> {
    assert_eq!(j.ncols(), weights.len(), "weight count must match Jacobian columns");
    let scale: Vec<f64> = weights.iter().map(|w| 1.0 / w.max(WEIGHT_FLOOR).sqrt()).collect();
    let mut js = j.clone();
    for (mut col, s) in js.column_iter_mut().zip(&scale) {
        col *= *s;
    }
    let svd = js.svd(true, true);
    let cutoff = rtol * svd.singular_values.max();
    let mut p = svd.pseudo_inverse(cutoff).expect("both factors were computed");
    for (mut row, s) in p.row_iter_mut().zip(&scale) {
        row *= *s;
    }
    p
}

/// Upright objective `cos β cos γ`.
pub fn g1(state: &RobotState) -> f64 {
    let a = state.vehicle.attitude;
    a.beta.cos() * a.gamma.cos()
}

pub fn grad_g1(state: &RobotState) -> StateVector {
    let a = state.vehicle.attitude;
    let mut g = StateVector::zeros();
    g[idx::PITCH] = -a.beta.sin() * a.gamma.cos();
    g[idx::ROLL] = -a.beta.cos() * a.gamma.sin();
    g
}

/// Planar offset from vehicle to goal and the heading error `wrap(α − ζ)`.
fn heading_error(state: &RobotState, goal: &Vec3) -> (f64, f64, f64) {
    let dx = goal.x - state.vehicle.position.x;
    let dy = goal.y - state.vehicle.position.y;
    let zeta = dy.atan2(dx);
    (dx, dy, wrap_angle(state.vehicle.attitude.alpha - zeta))
}

/// Heading objective `(α − ζ)²`, with the difference wrapped into (−π, π].
pub fn g2(state: &RobotState, goal: &Vec3) -> f64 {
    let (_, _, e) = heading_error(state, goal);
    e * e
}

pub fn grad_g2(state: &RobotState, goal: &Vec3) -> Result<StateVector> {
    let (dx, dy, e) = heading_error(state, goal);
    let r2 = dx * dx + dy * dy;
    if r2 <= 1e-12 {
        return Err(KinematicsError::DegenerateAlignment);
    }
    let mut g = StateVector::zeros();
    g[idx::X] = 2.0 * e * (-dy / r2);
    g[idx::Y] = 2.0 * e * (dx / r2);
    g[idx::YAW] = 2.0 * e;
    Ok(g)
}

/// Arm-pose objective `‖[θ1, θ2] − ψ_des‖²`.
pub fn g3(state: &RobotState, psi_des: &[f64; 2]) -> f64 {
    let m = &state.manipulator;
    (m.theta1 - psi_des[0]).powi(2) + (m.theta2 - psi_des[1]).powi(2)
}

pub fn grad_g3(state: &RobotState, psi_des: &[f64; 2]) -> StateVector {
    let m = &state.manipulator;
    let mut g = StateVector::zeros();
    g[idx::THETA1] = 2.0 * (m.theta1 - psi_des[0]);
    g[idx::THETA2] = 2.0 * (m.theta2 - psi_des[1]);
    g
}

/// Desired bending angles: the preparation pose near the goal, the travel pose far
/// away, blended smoothly across `[lambda_pre, lambda_tra]`.
pub fn desired_arm_pose(delta_p: f64, gains: &SubtaskGains) -> [f64; 2] {
    let s = smoothstep5(delta_p, gains.lambda_pre, gains.lambda_tra).unwrap_or(0.0);
    let [pre0, pre1] = gains.psi_pre;
    let [tra0, tra1] = gains.psi_tra;
    [pre0 + s * (tra0 - pre0), pre1 + s * (tra1 - pre1)]
}

/// `Ψ̇ = J_W⁺ ẋ + (I − J_W⁺ J) Σ k_j ∇g_j`.
///
/// `weights` and each gradient must have one entry per Jacobian column.
pub fn resolve(
    j: &DMatrix<f64>,
    weights: &[f64],
    xdot: &Vector6<f64>,
    gradients: &[(f64, DVector<f64>)],
) -> Result<DVector<f64>> {
    let pinv = weighted_pinv(j, weights)?;
    let mut rates = &pinv * xdot;
    if !gradients.is_empty() {
        let mut drift = DVector::zeros(j.ncols());
        for (k, g) in gradients {
            drift.axpy(*k, g, 1.0);
        }
        let task_part = &pinv * (j * &drift);
        rates += drift - task_part;
    }
    Ok(rates)
}

/// Null-space projector `I − J_W⁺ J`.
pub fn null_space_projector(j: &DMatrix<f64>, weights: &[f64]) -> Result<DMatrix<f64>> {
    let pinv = weighted_pinv(j, weights)?;
    Ok(DMatrix::identity(j.ncols(), j.ncols()) - pinv * j)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn geom() -> GeometryParams {
        GeometryParams::default()
    }

    fn random_matrix(seed: u64) -> DMatrix<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(6, 10, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn manip(theta1: f64, theta2: f64) -> ManipulatorState {
        ManipulatorState {
            theta1,
            theta2,
            ..Default::default()
        }
    }

    #[test]
    fn constant_weights() {
        let w = weight_constant();
        assert_eq!(w[0], 1000.0);
        assert_eq!(w[5], 1000.0);
        assert_eq!(w[6], 1.0);
        assert_eq!(w[7], 1.0);
        assert_eq!(w[8], 0.01);
        assert_eq!(w[9], 0.01);
    }

    #[test]
    fn joint_limit_weight_midpoint_and_inward() {
        let g = geom();
        let mut tracker = JointLimitTracker::new();
        tracker.update(&manip(0.0, 0.0));
        let w = weight_joint_limits(&manip(0.0, 0.0), &tracker, &g).unwrap();
        assert_eq!(w, StateVector::repeat(1.0));

        tracker.update(&manip(0.9, -0.9));
        let w = weight_joint_limits(&manip(0.8, -0.85), &tracker, &g).unwrap();
        assert_eq!(w[idx::THETA1], 1.0);
        assert_eq!(w[idx::THETA2], 1.0);
    }

    #[test]
    fn joint_limit_weight_near_limit() {
        let g = geom();
        let theta_m = PI / 3.0;
        let theta = 0.9 * theta_m;
        let mut tracker = JointLimitTracker::new();
        tracker.update(&manip(0.85 * theta_m, 0.0));
        let w = weight_joint_limits(&manip(theta, 0.0), &tracker, &g).unwrap();
        let span = 2.0 * PI / 3.0;
        let expected = 1.0
            + (span * span * (1.8 * PI / 3.0)
                / (4.0 * (0.1 * PI / 3.0_f64).powi(2) * (1.9 * PI / 3.0_f64).powi(2)))
            .abs();
        assert_abs_diff_eq!(w[idx::THETA1], expected, epsilon = 1e-9);
        assert_abs_diff_eq!(w[idx::THETA1], 48.6, epsilon = 0.05);
        assert_eq!(w[idx::THETA2], 1.0);
    }

    #[test]
    fn first_step_uses_inward_branch() {
        let w = weight_joint_limits(&manip(1.0, -1.0), &JointLimitTracker::new(), &geom()).unwrap();
        assert_eq!(w, StateVector::repeat(1.0));
    }

    #[test]
    fn joint_limit_violation() {
        let err = weight_joint_limits(&manip(0.0, -1.1), &JointLimitTracker::new(), &geom());
        assert!(matches!(
            err,
            Err(KinematicsError::JointLimitViolation { segment: 2, .. })
        ));
    }

    #[test]
    fn manipulator_priority_bounds() {
        let gains = SubtaskGains::default();
        let w = weight_manipulator_priority(0.0, &gains);
        assert_abs_diff_eq!(w[0], 100.0, epsilon = 1e-9);
        assert_abs_diff_eq!(w[9], 1.0 / 0.99, epsilon = 1e-12);
        let w = weight_manipulator_priority(gains.lambda_pre * 2.0, &gains);
        assert_abs_diff_eq!(w[0], 1.0 / 0.9, epsilon = 1e-12);
        assert_abs_diff_eq!(w[6], 10.0, epsilon = 1e-9);
        let mid = gains.lambda_pre / 2.0;
        assert_abs_diff_eq!(priority_factor(mid, &gains), 0.455, epsilon = 1e-15);
        let w = weight_manipulator_priority(mid, &gains);
        assert_abs_diff_eq!(w[0], 1.0 / 0.455, epsilon = 1e-12);
        assert_abs_diff_eq!(w[6], 1.0 / 0.545, epsilon = 1e-12);
    }

    #[test]
    fn pinv_with_identity_weight_is_moore_penrose() {
        let j = random_matrix(7);
        let p = weighted_pinv(&j, &[1.0; 10]).unwrap();
        let mp = j.clone().pseudo_inverse(1e-12).unwrap();
        assert!((&p - &mp).norm() < 1e-9);
        assert!((&j * &p - DMatrix::identity(6, 6)).norm() < 1e-9);
    }

    #[test]
    fn truncated_pinv_matches_full_rank_and_handles_deficiency() {
        let j = random_matrix(3);
        let w = weight_constant();
        let a = weighted_pinv(&j, w.as_slice()).unwrap();
        let b = weighted_pinv_truncated(&j, w.as_slice(), 1e-12);
        assert!((&a - &b).norm() < 1e-9 * (1.0 + a.norm()));

        let mut j = random_matrix(4);
        let row = j.row(0).into_owned();
        j.set_row(5, &row);
        let p = weighted_pinv_truncated(&j, w.as_slice(), 1e-12);
        assert!((&j * &p * &j - &j).norm() < 1e-12);
        let xdot = &j * DVector::from_element(10, 0.1);
        assert!((&j * (&p * &xdot) - &xdot).norm() < 1e-12);
    }

    #[test]
    fn pinv_rejects_rank_deficiency() {
        let mut j = DMatrix::from_fn(6, 10, |r, c| ((r * 10 + c) as f64 * 0.37).sin());
        let row = j.row(0).into_owned();
        j.set_row(5, &row);
        assert!(matches!(
            weighted_pinv(&j, &[1.0; 10]),
            Err(KinematicsError::SingularTask { .. })
        ));
    }

    #[test]
    fn gradient_values() {
        let mut s = RobotState::default();
        assert_eq!(grad_g1(&s), StateVector::zeros());
        s.vehicle.attitude.beta = 0.1;
        assert_eq!(grad_g1(&s)[idx::PITCH], -(0.1_f64).sin());

        let s = RobotState::default();
        let goal = Vec3::new(1.0, 0.0, 0.0);
        assert_eq!(grad_g2(&s, &goal).unwrap(), StateVector::zeros());
        let mut s = RobotState::default();
        s.vehicle.attitude.alpha = 0.1;
        let g = grad_g2(&s, &goal).unwrap();
        assert_abs_diff_eq!(g[idx::YAW], 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(g[idx::X], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g[idx::Y], 0.2, epsilon = 1e-15);

        let s = RobotState::default();
        let pre = SubtaskGains::default().psi_pre;
        let g = grad_g3(&s, &pre);
        assert_abs_diff_eq!(g[idx::THETA1], PI / 2.0, epsilon = 1e-15);
        assert_eq!(grad_g3(&s, &[0.0, 0.0]), StateVector::zeros());
    }

    #[test]
    fn heading_gradient_degenerate() {
        let s = RobotState::default();
        assert_eq!(
            grad_g2(&s, &Vec3::new(0.0, 0.0, 3.0)),
            Err(KinematicsError::DegenerateAlignment)
        );
    }

    #[test]
    fn desired_pose_phases() {
        let gains = SubtaskGains::default();
        assert_eq!(desired_arm_pose(1.0, &gains), [0.0, 0.0]);
        assert_eq!(desired_arm_pose(0.1, &gains), gains.psi_pre);
        let mid = 0.5 * (gains.lambda_pre + gains.lambda_tra);
        let d = desired_arm_pose(mid, &gains);
        assert_abs_diff_eq!(d[0], -PI / 8.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d[1], PI / 8.0, epsilon = 1e-15);
    }

    #[test]
    fn k3_gate() {
        let gains = SubtaskGains::default();
        assert_eq!(gains.active_k3(0.3), -0.1);
        assert_eq!(gains.active_k3(0.299), 0.0);
    }

    #[test]
    fn resolve_without_gradients_is_wln() {
        let j = random_matrix(11);
        let w = weight_constant();
        let xdot = Vector6::new(0.1, -0.2, 0.05, 0.0, 0.3, -0.1);
        let a = resolve(&j, w.as_slice(), &xdot, &[]).unwrap();
        let b = weighted_pinv(&j, w.as_slice()).unwrap() * xdot;
        assert_eq!(a, b);
        let zero = DVector::zeros(10);
        let c = resolve(&j, w.as_slice(), &xdot, &[(3.0, zero)]).unwrap();
        assert!((c - b).norm() < 1e-15);
    }
}
