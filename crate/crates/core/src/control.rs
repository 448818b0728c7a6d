//! Closed-loop resolved-rates trajectory generation with redundancy resolution.
//!
//! Each step reads the current pose, turns the pose error into a bounded
//! twist, resolves it into state rates with the weighted least-norm inverse
//! plus projected subtask gradients, and integrates with forward Euler.

use nalgebra::{DVector, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{KinematicsError, Result};
use crate::geometry::{axis_angle_error, Vec3};
use crate::jacobian::{jacobian_for_mode, VehicleMode};
use crate::model::{forward_kinematics, idx, GeometryParams, Pose, RobotState, STATE_DIM};
use crate::redundancy::{
    assemble_weights, desired_arm_pose, g1, g2, g3, grad_g1, grad_g2, grad_g3, priority_factor,
    weighted_pinv, weighted_pinv_truncated, JointLimitTracker, StateVector, SubtaskGains, WeightingScheme,
};

/// Bending angles are kept this far inside the joint limits after integration.
pub const LIMIT_MARGIN: f64 = 1e-6;
/// A run is declared diverged once δ_p exceeds this multiple of its initial value.
pub const DIVERGENCE_FACTOR: f64 = 10.0;
pub const DEFAULT_MAX_STEPS: usize = 60_000;
/// Relative singular-value cutoff of the reduced-mode fallback inverse.
const RANK_RTOL: f64 = 1e-10;
/// Largest task residual the fallback inverse may leave.
const RANGE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerParams {
    pub v_max: f64,
    pub v_min: f64,
    pub omega_max: f64,
    pub omega_min: f64,
    pub e_p: f64,
    pub e_mu: f64,
    pub lambda_p: f64,
    pub lambda_mu: f64,
    pub dt: f64,
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self {
            v_max: 0.1,
            v_min: 0.005,
            omega_max: 0.3,
            omega_min: 0.015,
            e_p: 0.01,
            e_mu: 0.02,
            lambda_p: 10.0,
            lambda_mu: 10.0,
            dt: 0.01,
        }
    }
}

impl ControllerParams {
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        let values = [
            self.v_max,
            self.v_min,
            self.omega_max,
            self.omega_min,
            self.e_p,
            self.e_mu,
            self.lambda_p,
            self.lambda_mu,
            self.dt,
        ];
        if values.iter().any(|v| !v.is_finite()) {
            problems.push("controller: all values must be finite".to_string());
        }
        if !(0.0 < self.v_min && self.v_min < self.v_max) {
            problems.push("controller: require 0 < v_min < v_max".to_string());
        }
        if !(0.0 < self.omega_min && self.omega_min < self.omega_max) {
            problems.push("controller: require 0 < omega_min < omega_max".to_string());
        }
        if !(self.e_p > 0.0 && self.e_mu > 0.0) {
            problems.push("controller: thresholds e_p, e_mu must be positive".to_string());
        }
        if !(self.lambda_p > 1.0 && self.lambda_mu > 1.0) {
            problems.push("controller: lambda_p, lambda_mu must exceed 1".to_string());
        }
        if !(self.dt > 0.0) {
            problems.push("controller: dt must be positive".to_string());
        }
        problems
    }
}

/// Everything a control step needs besides the evolving state.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSetup {
    pub geometry: GeometryParams,
    pub params: ControllerParams,
    /// Gains with `k1..k3` already set for the selected case.
    pub gains: SubtaskGains,
    pub weighting: WeightingScheme,
    pub mode: VehicleMode,
    pub goal: Pose,
    pub initial_state: RobotState,
    pub max_steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    Running,
    Diverged,
    Singular,
    MaxSteps,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Converged => "converged",
            Status::Running => "running",
            Status::Diverged => "diverged",
            Status::Singular => "singular",
            Status::MaxSteps => "max_steps",
        }
    }
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Position and orientation error of `pose` relative to `goal`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseError {
    pub delta_p: f64,
    pub delta_mu: f64,
    /// Unit direction towards the goal position, zero when already there.
    pub dir_p: Vec3,
    /// World-frame rotation axis towards the goal orientation, zero when aligned.
    pub axis: Vec3,
}

pub fn compute_errors(pose: &Pose, goal: &Pose) -> PoseError {
    let diff = goal.p - pose.p;
    let delta_p = diff.norm();
    let dir_p = if delta_p < 1e-12 {
        Vec3::zeros()
    } else {
        diff / delta_p
    };
    let (mu, axis) = axis_angle_error(&pose.r, &goal.r);
    PoseError {
        delta_p,
        delta_mu: (axis * mu).norm(),
        dir_p,
        axis,
    }
}

/// Saturated linear ramp: `hi` while `delta/e > lambda`, falling to `lo` at `delta = e`.
pub fn twist_schedule(delta: f64, e: f64, lambda: f64, lo: f64, hi: f64) -> f64 {
    if delta / e > lambda {
        hi
    } else {
        lo + (hi - lo) * (delta - e) / (e * (lambda - 1.0))
    }
}

/// Commanded end-effector twist `[ṗ; ω]` for the given error.
pub fn desired_twist(err: &PoseError, params: &ControllerParams) -> Vector6<f64> {
    let v = if err.delta_p < 1e-12 {
        0.0
    } else {
        twist_schedule(err.delta_p, params.e_p, params.lambda_p, params.v_min, params.v_max)
    };
    let w = if err.axis == Vec3::zeros() {
        0.0
    } else {
        twist_schedule(
            err.delta_mu,
            params.e_mu,
            params.lambda_mu,
            params.omega_min,
            params.omega_max,
        )
    };
    let lin = err.dir_p * v;
    let ang = err.axis * w;
    Vector6::new(lin.x, lin.y, lin.z, ang.x, ang.y, ang.z)
}

pub fn is_converged(err: &PoseError, params: &ControllerParams) -> bool {
    err.delta_p <= params.e_p && err.delta_mu <= params.e_mu
}

/// Commands sent to the vehicle and the arm after a control step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommandRecord {
    pub t: f64,
    pub vehicle_vel: [f64; 6],
    pub manip_target: [f64; 4],
    pub status: Status,
}

/// Result of one executed control step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub next_state: RobotState,
    /// Applied state rates in the full 10-entry layout.
    pub rates: StateVector,
    pub twist: Vector6<f64>,
    /// `‖J Ψ̇ − ẋ‖` for the applied rates.
    pub residual: f64,
    /// Same residual for the weighted least-norm rates alone, before subtask projection.
    pub task_only_residual: f64,
    /// Diagonal of the total weight, full layout.
    pub weights: StateVector,
    pub eta: f64,
    pub error: PoseError,
}

/// Outcome of [`step`]: either the goal was already reached or a step was executed.
#[derive(Debug, Clone, PartialEq)]
pub enum StepOutcome {
    Converged(PoseError),
    Moved(Box<StepReport>),
}

fn expand(mode: VehicleMode, reduced: &DVector<f64>) -> StateVector {
    let mut full = StateVector::zeros();
    for (value, &col) in reduced.iter().zip(mode.columns()) {
        full[col] = *value;
    }
    full
}

fn restrict(mode: VehicleMode, full: &StateVector) -> DVector<f64> {
    DVector::from_iterator(mode.dim(), mode.columns().iter().map(|&c| full[c]))
}

/// One iteration of the resolved-rates loop.
///
/// The tracker is advanced with the pre-step bending angles.
pub fn step(
    state: &RobotState,
    setup: &ControlSetup,
    tracker: &mut JointLimitTracker,
) -> Result<StepOutcome> {
    let pose = forward_kinematics(state, &setup.geometry).end_effector;
    let err = compute_errors(&pose, &setup.goal);
    if is_converged(&err, &setup.params) {
        return Ok(StepOutcome::Converged(err));
    }
    let twist = desired_twist(&err, &setup.params);

    let mode = setup.mode;
    let gains = &setup.gains;
    let weights = assemble_weights(
        setup.weighting,
        &state.manipulator,
        tracker,
        &setup.geometry,
        err.delta_p,
        gains,
    )?
    .combined();
    tracker.update(&state.manipulator);

    let j = jacobian_for_mode(state, &setup.geometry, mode)?.matrix;
    let w = restrict(mode, &weights);
    let pinv = match (weighted_pinv(&j, w.as_slice()), mode) {
        (Ok(p), _) => p,
        // A level vehicle with a straight arm has no roll or pitch authority once
        // those columns are dropped. Fall back to the rank-revealing inverse and
        // accept it only if the commanded twist is still reachable.
        (Err(KinematicsError::SingularTask { condition }), VehicleMode::Reduced4) => {
            let p = weighted_pinv_truncated(&j, w.as_slice(), RANK_RTOL);
            if (&j * (&p * twist) - twist).norm() > RANGE_TOL {
                return Err(KinematicsError::SingularTask { condition });
            }
            p
        }
        (Err(e), _) => return Err(e),
    };

    let mut drift = StateVector::zeros();
    if gains.k1 != 0.0 {
        drift += grad_g1(state) * gains.k1;
    }
    if gains.k2 != 0.0 {
        drift += grad_g2(state, &setup.goal.p)? * gains.k2;
    }
    let k3 = gains.active_k3(err.delta_p);
    if k3 != 0.0 {
        let psi_des = desired_arm_pose(err.delta_p, gains);
        drift += grad_g3(state, &psi_des) * k3;
    }

    let task_rates = &pinv * twist;
    let drift = restrict(mode, &drift);
    let rates = &task_rates + &drift - &pinv * (&j * &drift);

    let task_only_residual = (&j * &task_rates - twist).norm();
    let residual = (&j * &rates - twist).norm();

    let rates = expand(mode, &rates);
    let mut next = state.to_array();
    for (q, r) in next.iter_mut().zip(rates.iter()) {
        *q += r * setup.params.dt;
    }
    let lo = setup.geometry.theta_min + LIMIT_MARGIN;
    let hi = setup.geometry.theta_max - LIMIT_MARGIN;
    next[idx::THETA1] = next[idx::THETA1].clamp(lo, hi);
    next[idx::THETA2] = next[idx::THETA2].clamp(lo, hi);

    Ok(StepOutcome::Moved(Box::new(StepReport {
        next_state: RobotState::from_array(&next),
        rates,
        twist,
        residual,
        task_only_residual,
        weights,
        eta: priority_factor(err.delta_p, gains),
        error: err,
    })))
}

/// One logged sample, taken after the step that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub time: f64,
    pub state: [f64; STATE_DIM],
    pub rates: [f64; STATE_DIM],
    pub pose: Pose,
    pub delta_p: f64,
    pub delta_mu: f64,
    pub g1: f64,
    pub g2: f64,
    pub g3: f64,
    pub eta: f64,
    pub w7: f64,
    pub w9: f64,
    pub residual: f64,
    pub task_only_residual: f64,
}

/// Averages and extrema over a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub status: Status,
    pub steps: usize,
    pub final_delta_p: f64,
    pub final_delta_mu: f64,
    pub mean_rates: [f64; STATE_DIM],
    pub mean_g1: f64,
    pub mean_g2: f64,
    pub mean_g3: f64,
    pub max_abs_theta1: f64,
    pub max_abs_theta2: f64,
    pub max_residual: f64,
    /// Largest change in residual caused by subtask projection.
    pub max_residual_shift: f64,
    pub max_linear_speed: f64,
    pub max_angular_speed: f64,
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub rows: Vec<TrajectoryRow>,
    pub summary: RunSummary,
}

fn objectives(state: &RobotState, delta_p: f64, setup: &ControlSetup) -> (f64, f64, f64) {
    let psi_des = desired_arm_pose(delta_p, &setup.gains);
    (
        g1(state),
        g2(state, &setup.goal.p),
        g3(state, &psi_des),
    )
}

fn final_command(t: f64, state: &RobotState, status: Status) -> CommandRecord {
    let m = &state.manipulator;
    CommandRecord {
        t,
        vehicle_vel: [0.0; 6],
        manip_target: [m.theta1, m.phi1, m.theta2, m.phi2],
        status,
    }
}

pub fn run(setup: &ControlSetup) -> Trajectory {
    run_observed(setup, |_| {})
}

/// Runs to convergence, divergence, a solver failure or `max_steps`, passing every
/// command (one per executed step plus a terminal record) to `on_command`.
pub fn run_observed(setup: &ControlSetup, mut on_command: impl FnMut(&CommandRecord)) -> Trajectory {
    let mut state = setup.initial_state;
    let mut tracker = JointLimitTracker::new();
    let mut rows: Vec<TrajectoryRow> = Vec::new();
    let initial_err = compute_errors(&forward_kinematics(&state, &setup.geometry).end_effector, &setup.goal);
    let divergence_limit = DIVERGENCE_FACTOR * initial_err.delta_p.max(setup.params.e_p);

    let mut rate_sum = [0.0; STATE_DIM];
    let mut g_sum = [0.0; 3];
    let mut max_abs_theta = [
        state.manipulator.theta1.abs(),
        state.manipulator.theta2.abs(),
    ];
    let mut max_residual = 0.0_f64;
    let mut max_shift = 0.0_f64;
    let mut max_lin = 0.0_f64;
    let mut max_ang = 0.0_f64;
    let mut last_err = initial_err;
    let mut message = None;

    let status = loop {
        let t = rows.len() as f64 * setup.params.dt;
        if rows.len() >= setup.max_steps {
            let err = compute_errors(&forward_kinematics(&state, &setup.geometry).end_effector, &setup.goal);
            last_err = err;
            break if is_converged(&err, &setup.params) {
                Status::Converged
            } else {
                Status::MaxSteps
            };
        }
        let report = match step(&state, setup, &mut tracker) {
            Ok(StepOutcome::Converged(err)) => {
                last_err = err;
                break Status::Converged;
            }
            Ok(StepOutcome::Moved(report)) => report,
            Err(e) => {
                message = Some(e.to_string());
                break Status::Singular;
            }
        };
        let next = report.next_state;
        let pose = forward_kinematics(&next, &setup.geometry).end_effector;
        let err = compute_errors(&pose, &setup.goal);
        let (o1, o2, o3) = objectives(&next, err.delta_p, setup);

        for (acc, r) in rate_sum.iter_mut().zip(report.rates.iter()) {
            *acc += r;
        }
        g_sum[0] += o1;
        g_sum[1] += o2;
        g_sum[2] += o3;
        max_abs_theta[0] = max_abs_theta[0].max(next.manipulator.theta1.abs());
        max_abs_theta[1] = max_abs_theta[1].max(next.manipulator.theta2.abs());
        max_residual = max_residual.max(report.residual);
        max_shift = max_shift.max((report.residual - report.task_only_residual).abs());
        max_lin = max_lin.max(report.twist.fixed_rows::<3>(0).norm());
        max_ang = max_ang.max(report.twist.fixed_rows::<3>(3).norm());

        let time = t + setup.params.dt;
        let m = &next.manipulator;
        let r = &report.rates;
        on_command(&CommandRecord {
            t: time,
            vehicle_vel: [r[0], r[1], r[2], r[3], r[4], r[5]],
            manip_target: [m.theta1, m.phi1, m.theta2, m.phi2],
            status: Status::Running,
        });
        rows.push(TrajectoryRow {
            time,
            state: next.to_array(),
            rates: r.as_slice().try_into().expect("state-sized rates"),
            pose,
            delta_p: err.delta_p,
            delta_mu: err.delta_mu,
            g1: o1,
            g2: o2,
            g3: o3,
            eta: report.eta,
            w7: report.weights[idx::THETA1],
            w9: report.weights[idx::THETA2],
            residual: report.residual,
            task_only_residual: report.task_only_residual,
        });
        state = next;
        last_err = err;

        if !state.is_finite() {
            message = Some(KinematicsError::SingularTask { condition: f64::INFINITY }.to_string());
            break Status::Singular;
        }
        if err.delta_p > divergence_limit {
            message = Some(format!(
                "position error {} exceeded {} times its initial value",
                err.delta_p, DIVERGENCE_FACTOR
            ));
            break Status::Diverged;
        }
    };

    let steps = rows.len();
    let t_end = steps as f64 * setup.params.dt;
    on_command(&final_command(t_end, &state, status));

    let (mean_rates, mean_g) = if steps == 0 {
        let (o1, o2, o3) = objectives(&state, last_err.delta_p, setup);
        ([0.0; STATE_DIM], [o1, o2, o3])
    } else {
        let n = steps as f64;
        (rate_sum.map(|v| v / n), g_sum.map(|v| v / n))
    };

    Trajectory {
        rows,
        summary: RunSummary {
            status,
            steps,
            final_delta_p: last_err.delta_p,
            final_delta_mu: last_err.delta_mu,
            mean_rates,
            mean_g1: mean_g[0],
            mean_g2: mean_g[1],
            mean_g3: mean_g[2],
            max_abs_theta1: max_abs_theta[0],
            max_abs_theta2: max_abs_theta[1],
            max_residual,
            max_residual_shift: max_shift,
            max_linear_speed: max_lin,
            max_angular_speed: max_ang,
            message,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{rot_x, rot_z, Rot3};
    use approx::assert_abs_diff_eq;

    fn params() -> ControllerParams {
        ControllerParams::default()
    }

    #[test]
    fn errors_at_goal_are_zero() {
        let pose = Pose::new(Vec3::new(0.3, 0.1, 0.0), rot_x(0.2));
        let e = compute_errors(&pose, &pose);
        assert_eq!(e.delta_p, 0.0);
        assert_eq!(e.delta_mu, 0.0);
        assert_eq!(e.dir_p, Vec3::zeros());
        assert_eq!(e.axis, Vec3::zeros());
    }

    #[test]
    fn errors_towards_reference_goal() {
        let pose = Pose::new(Vec3::zeros(), Rot3::identity());
        let goal = Pose::new(Vec3::new(1.0, 0.0, 0.0), rot_z(1.0));
        let e = compute_errors(&pose, &goal);
        assert_eq!(e.delta_p, 1.0);
        assert_eq!(e.dir_p, Vec3::x());
        assert_abs_diff_eq!(e.delta_mu, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn schedule_shape() {
        let (e, l, lo, hi) = (0.01, 10.0, 0.005, 0.1);
        assert_abs_diff_eq!(twist_schedule(l * e, e, l, lo, hi), hi, epsilon = 1e-15);
        assert_abs_diff_eq!(twist_schedule(l * e * 1.0001, e, l, lo, hi), hi, epsilon = 1e-15);
        assert_abs_diff_eq!(twist_schedule(e, e, l, lo, hi), lo, epsilon = 1e-15);
        assert_abs_diff_eq!(
            twist_schedule(e * (1.0 + l) / 2.0, e, l, lo, hi),
            (lo + hi) / 2.0,
            epsilon = 1e-15
        );
        assert_eq!(twist_schedule(5.0, e, l, lo, hi), hi);
    }

    #[test]
    fn twist_is_bounded() {
        let p = params();
        for d in [0.0, 1e-13, 0.005, 0.05, 0.2, 3.0] {
            let err = PoseError {
                delta_p: d,
                delta_mu: d,
                dir_p: if d < 1e-12 { Vec3::zeros() } else { Vec3::x() },
                axis: if d == 0.0 { Vec3::zeros() } else { Vec3::z() },
            };
            let tw = desired_twist(&err, &p);
            assert!(tw.fixed_rows::<3>(0).norm() <= p.v_max + 1e-15);
            assert!(tw.fixed_rows::<3>(3).norm() <= p.omega_max + 1e-15);
        }
    }

    #[test]
    fn params_validation() {
        assert!(params().validate().is_empty());
        let bad = ControllerParams {
            v_min: 0.2,
            lambda_mu: 1.0,
            ..params()
        };
        assert_eq!(bad.validate().len(), 2);
    }
}
