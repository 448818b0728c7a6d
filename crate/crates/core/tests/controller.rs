use nalgebra::DVector;
use uvms_core::control::{
    compute_errors, desired_twist, is_converged, run, run_observed, step, ControlSetup, Status,
    StepOutcome, LIMIT_MARGIN,
};
use uvms_core::jacobian::{total_jacobian, VehicleMode};
use uvms_core::model::{end_effector_pose, forward_kinematics, idx, RobotState};
use uvms_core::redundancy::{
    assemble_weights, desired_arm_pose, grad_g1, grad_g2, grad_g3, resolve, JointLimitTracker,
};
use uvms_core::sim::ScenarioConfig;

fn setup(id: u8) -> ControlSetup {
    ScenarioConfig::reference(id).control_setup()
}

/// One control step written out from the public building blocks, solving with
/// `resolve` instead of the loop's inline projection.
fn reference_step(state: &RobotState, s: &ControlSetup, tracker: &mut JointLimitTracker) -> Option<RobotState> {
    let pose = forward_kinematics(state, &s.geometry).end_effector;
    let err = compute_errors(&pose, &s.goal);
    if is_converged(&err, &s.params) {
        return None;
    }
    let xdot = desired_twist(&err, &s.params);
    let w = assemble_weights(s.weighting, &state.manipulator, tracker, &s.geometry, err.delta_p, &s.gains)
        .unwrap()
        .combined();
    tracker.update(&state.manipulator);
    let j = total_jacobian(state, &s.geometry).unwrap().matrix;
    let psi_des = desired_arm_pose(err.delta_p, &s.gains);
    let to_dyn = |v: nalgebra::SVector<f64, 10>| DVector::from_column_slice(v.as_slice());
    let grads = vec![
        (s.gains.k1, to_dyn(grad_g1(state))),
        (s.gains.k2, to_dyn(grad_g2(state, &s.goal.p).unwrap())),
        (s.gains.active_k3(err.delta_p), to_dyn(grad_g3(state, &psi_des))),
    ];
    let rates = resolve(&j, w.as_slice(), &xdot, &grads).unwrap();
    let mut q = state.to_array();
    for (qi, r) in q.iter_mut().zip(rates.iter()) {
        *qi += r * s.params.dt;
    }
    for i in [idx::THETA1, idx::THETA2] {
        q[i] = q[i].clamp(s.geometry.theta_min + LIMIT_MARGIN, s.geometry.theta_max - LIMIT_MARGIN);
    }
    Some(RobotState::from_array(&q))
}

#[test]
fn loop_step_matches_composed_reference_for_100_steps() {
    for id in [1, 4, 9] {
        let s = setup(id);
        let (mut a, mut b) = (s.initial_state, s.initial_state);
        let (mut ta, mut tb) = (JointLimitTracker::new(), JointLimitTracker::new());
        for n in 0..100 {
            let StepOutcome::Moved(report) = step(&a, &s, &mut ta).unwrap() else {
                panic!("case {id} converged after {n} steps");
            };
            a = report.next_state;
            b = reference_step(&b, &s, &mut tb).unwrap();
        }
        let gap = a
            .to_array()
            .iter()
            .zip(b.to_array())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(gap < 1e-12, "case {id}: states differ by {gap:e}");
    }
}

#[test]
fn first_step_of_case_1_meets_the_task() {
    let s = setup(1);
    let StepOutcome::Moved(r) = step(&s.initial_state, &s, &mut JointLimitTracker::new()).unwrap() else {
        panic!("expected a step");
    };
    assert!(r.residual < 1e-9, "residual {:e}", r.residual);
    // far from the goal the ramp is saturated
    let lin = r.twist.fixed_rows::<3>(0).norm();
    assert!((lin - s.params.v_max).abs() < 1e-15);
}

#[test]
fn goal_at_the_start_converges_without_moving() {
    let mut s = setup(9);
    s.goal = end_effector_pose(&s.initial_state, &s.geometry);
    let mut records = Vec::new();
    let t = run_observed(&s, |c| records.push(*c));
    assert_eq!(t.summary.status, Status::Converged);
    assert_eq!(t.summary.steps, 0);
    assert!(t.rows.is_empty());
    assert_eq!(records.len(), 1);
    assert_eq!(records[0].status, Status::Converged);
    assert_eq!(records[0].vehicle_vel, [0.0; 6]);
}

#[test]
fn case_9_converges_with_bounded_commands() {
    let s = setup(9);
    let t = run(&s);
    let sum = &t.summary;
    assert_eq!(sum.status, Status::Converged);
    assert!(sum.final_delta_p <= s.params.e_p && sum.final_delta_mu <= s.params.e_mu);
    assert!(sum.max_linear_speed <= s.params.v_max + 1e-15);
    assert!(sum.max_angular_speed <= s.params.omega_max + 1e-15);
    for row in &t.rows {
        for i in [idx::THETA1, idx::THETA2] {
            assert!(row.state[i] > s.geometry.theta_min && row.state[i] < s.geometry.theta_max);
        }
    }
}

#[test]
fn position_error_decreases_monotonically_near_the_goal() {
    for id in [1, 5, 9] {
        let s = setup(id);
        let t = run(&s);
        let start = t
            .rows
            .iter()
            .position(|r| r.delta_p < s.params.lambda_p * s.params.e_p)
            .expect("reaches the ramp region");
        for w in t.rows[start..].windows(2) {
            assert!(w[1].delta_p < w[0].delta_p, "case {id} at t = {}", w[1].time);
        }
    }
}

#[test]
fn reduced_mode_keeps_the_vehicle_level() {
    let mut s = setup(9);
    s.mode = VehicleMode::Reduced4;
    let t = run(&s);
    assert_eq!(t.summary.status, Status::Converged);
    for row in &t.rows {
        assert_eq!(row.state[idx::PITCH], 0.0);
        assert_eq!(row.state[idx::ROLL], 0.0);
        assert_eq!(row.rates[idx::PITCH], 0.0);
        assert_eq!(row.rates[idx::ROLL], 0.0);
    }
    assert!(t.summary.max_residual < 1e-9);
}

#[test]
fn unreachable_step_budget_reports_max_steps() {
    let mut s = setup(9);
    s.max_steps = 10;
    let t = run(&s);
    assert_eq!(t.summary.status, Status::MaxSteps);
    assert_eq!(t.rows.len(), 10);
}
