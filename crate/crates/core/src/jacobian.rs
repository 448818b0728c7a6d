//! Segment Jacobians, the total 6×10 Jacobian and its finite-difference oracle.
//!
//! Rows are `[ṗ; ω]` in the world frame, columns follow the state layout in
//! [`crate::model::idx`].

use nalgebra::{DMatrix, Matrix3x2};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{euler_rate_map, skew, Rot3, Vec3};
use crate::model::{arc_ratios, forward_kinematics, GeometryParams, RobotState, STATE_DIM, THETA_EPS};

/// Default central-difference step.
pub const FD_STEP: f64 = 1e-6;

const FULL_COLUMNS: [usize; 10] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9];
const REDUCED_COLUMNS: [usize; 8] = [0, 1, 2, 3, 6, 7, 8, 9];

/// Which vehicle degrees of freedom are actuated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VehicleMode {
    /// Position and all three Euler angles.
    #[default]
    Full6,
    /// Position and yaw only; pitch and roll are held at zero.
    Reduced4,
}

impl VehicleMode {
    /// Indices of the full state vector that stay in the solve.
    pub fn columns(self) -> &'static [usize] {
        match self {
            VehicleMode::Full6 => &FULL_COLUMNS,
            VehicleMode::Reduced4 => &REDUCED_COLUMNS,
        }
    }

    pub fn dim(self) -> usize {
        self.columns().len()
    }
}

/// Position and orientation Jacobians of one segment w.r.t. `(θ, φ)`, in the segment base frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentJacobian {
    pub jp: Matrix3x2<f64>,
    pub jmu: Matrix3x2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TotalJacobian {
    pub matrix: DMatrix<f64>,
    pub mode: VehicleMode,
}

/// Derivatives of `sin θ/θ` and `(1 − cos θ)/θ`.
fn arc_ratio_derivatives(theta: f64) -> (f64, f64) {
    if theta.abs() < THETA_EPS {
        let t2 = theta * theta;
        let df = -theta / 3.0 + theta * t2 / 30.0 - theta * t2 * t2 / 840.0
            + theta * t2 * t2 * t2 / 45360.0;
        let dg = 0.5 - t2 / 8.0 + t2 * t2 / 144.0 - t2 * t2 * t2 / 5760.0;
        (df, dg)
    } else {
        let (s, c) = theta.sin_cos();
        ((c - s / theta) / theta, (s + (c - 1.0) / theta) / theta)
    }
}

pub fn segment_jacobian(theta: f64, phi: f64, l: f64) -> SegmentJacobian {
    let (_, g) = arc_ratios(theta);
    let (df, dg) = arc_ratio_derivatives(theta);
    let (sp, cp) = phi.sin_cos();
    let (st, ct) = theta.sin_cos();
    let jp = Matrix3x2::new(
        l * df,
        0.0,
        l * dg * cp,
        -l * g * sp,
        l * dg * sp,
        l * g * cp,
    );
    let jmu = Matrix3x2::new(0.0, 1.0 - ct, -sp, -st * cp, cp, -st * sp);
    SegmentJacobian { jp, jmu }
}

/// Analytic world-frame Jacobian of the end-effector twist with respect to all ten state rates.
pub fn total_jacobian(state: &RobotState, geom: &GeometryParams) -> Result<TotalJacobian> {
    let att = state.vehicle.attitude;
    let t = euler_rate_map(att.alpha, att.beta)?;
    let fk = forward_kinematics(state, geom);
    let p_d = fk.end_effector.p;
    let m = &state.manipulator;

    let mut j = DMatrix::<f64>::zeros(6, STATE_DIM);
    j.view_mut((0, 0), (3, 3)).fill_with_identity();

    let r_ad = p_d - fk.p_a;
    j.view_mut((0, 3), (3, 3)).copy_from(&(-skew(&r_ad) * t));
    j.view_mut((3, 3), (3, 3)).copy_from(&t);

    let seg1 = segment_jacobian(m.theta1, m.phi1, geom.l1);
    let rb = fk.r_b.matrix();
    let omega1 = rb * seg1.jmu;
    let r_cd = p_d - fk.p_c;
    j.view_mut((0, 6), (3, 2))
        .copy_from(&(rb * seg1.jp - skew(&r_cd) * omega1));
    j.view_mut((3, 6), (3, 2)).copy_from(&omega1);

    let seg2 = segment_jacobian(m.theta2, m.phi2, geom.l2);
    let rc = fk.r_c.matrix();
    j.view_mut((0, 8), (3, 2)).copy_from(&(rc * seg2.jp));
    j.view_mut((3, 8), (3, 2)).copy_from(&(rc * seg2.jmu));

    Ok(TotalJacobian {
        matrix: j,
        mode: VehicleMode::Full6,
    })
}

/// Drops the pitch and roll columns. A reduced Jacobian is returned unchanged.
pub fn reduce_to_4dof(j: &TotalJacobian) -> TotalJacobian {
    if j.mode == VehicleMode::Reduced4 {
        return j.clone();
    }
    TotalJacobian {
        matrix: j.matrix.select_columns(REDUCED_COLUMNS.iter()),
        mode: VehicleMode::Reduced4,
    }
}

/// Jacobian for the requested vehicle mode.
pub fn jacobian_for_mode(
    state: &RobotState,
    geom: &GeometryParams,
    mode: VehicleMode,
) -> Result<TotalJacobian> {
    let j = total_jacobian(state, geom)?;
    Ok(match mode {
        VehicleMode::Full6 => j,
        VehicleMode::Reduced4 => reduce_to_4dof(&j),
    })
}

/// Central-difference Jacobian of forward kinematics. Angular rows come from
/// the rotation vector of `R(q + h e_i) R(q − h e_i)ᵀ` divided by `2h`.
pub fn fd_jacobian(state: &RobotState, geom: &GeometryParams, step: f64) -> DMatrix<f64> {
    let q = state.to_array();
    let mut j = DMatrix::<f64>::zeros(6, STATE_DIM);
    for i in 0..STATE_DIM {
        let mut plus = q;
        let mut minus = q;
        plus[i] += step;
        minus[i] -= step;
        let a = forward_kinematics(&RobotState::from_array(&plus), geom).end_effector;
        let b = forward_kinematics(&RobotState::from_array(&minus), geom).end_effector;
        let dp = (a.p - b.p) / (2.0 * step);
        let dw = small_rotation_vector(&(a.r * b.r.inverse())) / (2.0 * step);
        j.view_mut((0, i), (3, 1)).copy_from(&dp);
        j.view_mut((3, i), (3, 1)).copy_from(&dw);
    }
    j
}

/// Rotation vector of a small rotation from its skew part; avoids the `acos`
/// cancellation that makes angle-based extraction inaccurate near zero.
pub(crate) fn small_rotation_vector(r: &Rot3) -> Vec3 {
    let m = r.matrix();
    Vec3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]) * 0.5
}

/// `‖A − B‖_F / (1 + ‖B‖_F)`.
pub fn relative_frobenius(analytic: &DMatrix<f64>, reference: &DMatrix<f64>) -> f64 {
    (analytic - reference).norm() / (1.0 + reference.norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::EulerZyx;
    use crate::model::{segment_tip_position, segment_tip_rotation};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn fd_segment(theta: f64, phi: f64, l: f64) -> SegmentJacobian {
        let h = 1e-6;
        let mut jp = Matrix3x2::zeros();
        let mut jmu = Matrix3x2::zeros();
        for (c, (dt, dp)) in [(h, 0.0), (0.0, h)].into_iter().enumerate() {
            let pa = segment_tip_position(theta + dt, phi + dp, l);
            let pb = segment_tip_position(theta - dt, phi - dp, l);
            let ra = segment_tip_rotation(theta + dt, phi + dp);
            let rb = segment_tip_rotation(theta - dt, phi - dp);
            jp.set_column(c, &((pa - pb) / (2.0 * h)));
            jmu.set_column(c, &(small_rotation_vector(&(ra * rb.inverse())) / (2.0 * h)));
        }
        SegmentJacobian { jp, jmu }
    }

    #[test]
    fn straight_segment_limits() {
        let l = 0.2;
        let s = segment_jacobian(0.0, 0.0, l);
        assert_abs_diff_eq!((s.jp.column(0) - Vec3::new(0.0, l / 2.0, 0.0)).norm(), 0.0, epsilon = 1e-15);
        assert_eq!(s.jp.column(1).norm(), 0.0);
        assert_eq!(s.jmu.column(1).norm(), 0.0);
        let fd = fd_segment(1e-7, 0.0, l);
        assert!((fd.jp.column(0) - Vec3::new(0.0, l / 2.0, 0.0)).norm() < 1e-8);
    }

    #[test]
    fn first_entry_matches_closed_form() {
        let (theta, l) = (0.8, 0.3);
        let s = segment_jacobian(theta, 0.4, l);
        let expected = l / theta * (theta.cos() - theta.sin() / theta);
        assert_abs_diff_eq!(s.jp[(0, 0)], expected, epsilon = 1e-15);
    }

    #[test]
    fn segment_jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..500 {
            let theta = rng.gen_range(-1.2..1.2);
            let phi = rng.gen_range(-PI..PI);
            let l = rng.gen_range(0.05..0.5);
            let a = segment_jacobian(theta, phi, l);
            let f = fd_segment(theta, phi, l);
            assert!((a.jp - f.jp).norm() / (1.0 + f.jp.norm()) < 1e-6);
            assert!((a.jmu - f.jmu).norm() / (1.0 + f.jmu.norm()) < 1e-6);
        }
    }

    #[test]
    fn series_derivatives_are_continuous() {
        for theta in [THETA_EPS * (1.0 - 1e-9), THETA_EPS * (1.0 + 1e-9)] {
            let (df, dg) = arc_ratio_derivatives(theta);
            let (s, c) = theta.sin_cos();
            let dg_exact = (s + (c - 1.0) / theta) / theta;
            assert_abs_diff_eq!(dg, dg_exact, epsilon = 1e-8);
            assert_abs_diff_eq!(df, -theta / 3.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn zero_state_blocks() {
        let geom = GeometryParams::default();
        let j = total_jacobian(&RobotState::default(), &geom).unwrap().matrix;
        let eye = j.view((0, 0), (6, 3));
        for r in 0..6 {
            for c in 0..3 {
                assert_eq!(eye[(r, c)], if r == c { 1.0 } else { 0.0 });
            }
        }
        // yaw column: z × r_AD
        let p_d = crate::model::end_effector_pose(&RobotState::default(), &geom).p;
        let v = Vec3::z().cross(&p_d);
        for r in 0..3 {
            assert_abs_diff_eq!(j[(r, 3)], v[r], epsilon = 1e-15);
        }
        // φ columns vanish when straight
        assert_eq!(j.column(7).norm(), 0.0);
        assert_eq!(j.column(9).norm(), 0.0);
        assert_eq!(j.rank(1e-9), 6);
    }

    #[test]
    fn matches_fd_on_random_states() {
        let geom = GeometryParams {
            mount_ypr: [0.3, 0.1, -0.2],
            ..GeometryParams::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..200 {
            let mut q = [0.0; STATE_DIM];
            q[0] = rng.gen_range(-1.0..1.0);
            q[3] = rng.gen_range(-PI..PI);
            q[4] = rng.gen_range(-1.0..1.0);
            q[5] = rng.gen_range(-PI..PI);
            q[6] = rng.gen_range(-1.0..1.0);
            q[7] = rng.gen_range(-PI..PI);
            q[8] = rng.gen_range(-1.0..1.0);
            q[9] = rng.gen_range(-PI..PI);
            let s = RobotState::from_array(&q);
            let a = total_jacobian(&s, &geom).unwrap().matrix;
            let f = fd_jacobian(&s, &geom, FD_STEP);
            assert!(relative_frobenius(&a, &f) < 1e-6);
        }
    }

    #[test]
    fn fd_error_is_second_order() {
        let geom = GeometryParams::default();
        let s = RobotState::from_array(&[0.1, 0.2, -0.3, 0.4, 0.3, -0.2, 0.9, 0.5, -0.8, 1.9]);
        let a = total_jacobian(&s, &geom).unwrap().matrix;
        let e1 = (&a - fd_jacobian(&s, &geom, 1e-2)).norm();
        let e2 = (&a - fd_jacobian(&s, &geom, 5e-3)).norm();
        let ratio = e1 / e2;
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn reduction_drops_pitch_and_roll() {
        let geom = GeometryParams::default();
        let s = RobotState::from_array(&[0.0, 0.0, 0.0, 0.5, 0.2, 0.1, 0.3, 0.4, -0.2, 0.1]);
        let full = total_jacobian(&s, &geom).unwrap();
        let red = reduce_to_4dof(&full);
        assert_eq!(red.matrix.ncols(), 8);
        assert_eq!(red.matrix.column(4), full.matrix.column(6));
        let rates = nalgebra::DVector::from_vec(vec![0.1, -0.2, 0.3, 0.4, 0.0, 0.0, 0.5, -0.6, 0.7, 0.8]);
        let reduced_rates = rates.select_rows(REDUCED_COLUMNS.iter());
        assert!((&full.matrix * &rates - &red.matrix * reduced_rates).norm() < 1e-15);
        assert_eq!(red.matrix.rank(1e-9), 6);
        // straight arm, level vehicle: only yaw is left among the angular rows
        let zero = reduce_to_4dof(&total_jacobian(&RobotState::default(), &geom).unwrap());
        assert_eq!(zero.matrix.rank(1e-9), 4);
        let range = zero.matrix.clone().svd(true, false).u.unwrap().columns(0, 4).into_owned();
        let twist = nalgebra::DVector::from_vec(vec![0.3, -0.1, 0.2, 0.0, 0.0, 0.5]);
        assert!((&range * range.transpose() * &twist - &twist).norm() < 1e-12);
    }

    #[test]
    fn gimbal_lock_is_reported() {
        let mut s = RobotState::default();
        s.vehicle.attitude = EulerZyx::new(0.0, PI / 2.0, 0.0);
        assert!(total_jacobian(&s, &GeometryParams::default()).is_err());
    }
}
