//! Rigid-body model of a single leg treated as a planar double pendulum.
//!
//! Joint 1 is the hip, joint 2 the knee. Both angles are measured from the
//! downward vertical, so the equations of motion take the form
//!
//! ```text
//! tau = M(theta) theta_ddot + V(theta, theta_dot) theta_dot + G_sd(theta) theta
//! ```
//!
//! where `G_sd` is the state-dependent factorisation of the gravity torque
//! (each diagonal entry carries a `sin(x)/x` factor).

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};

/// Physical constants of one leg.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LegParams {
    /// Thigh length (m).
    pub l1: f64,
    /// Lower-leg length (m).
    pub l2: f64,
    /// Hip motor mass (kg). Kept for completeness; the displayed mass,
    /// Coriolis and gravity matrices do not use it.
    pub m1: f64,
    /// Knee motor mass (kg), lumped at the knee.
    pub m2: f64,
    /// Thigh mass (kg).
    pub mc1: f64,
    /// Lower-leg mass (kg).
    pub mc2: f64,
    /// Gravitational acceleration (m/s^2).
    pub g: f64,
}

impl LegParams {
    pub fn new(l1: f64, l2: f64, m1: f64, m2: f64, mc1: f64, mc2: f64, g: f64) -> Result<Self> {
        let p = Self {
            l1,
            l2,
            m1,
            m2,
            mc1,
            mc2,
            g,
        };
        p.validate()?;
        Ok(p)
    }

    /// Constants of the desk-scale bipedal platform (g = 9.81 m/s^2).
    pub fn platform() -> Self {
        Self {
            l1: 0.251,
            l2: 0.28,
            m1: 0.876,
            m2: 0.876,
            mc1: 2.89,
            mc2: 3.242,
            g: 9.81,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("l1", self.l1),
            ("l2", self.l2),
            ("m1", self.m1),
            ("m2", self.m2),
            ("mc1", self.mc1),
            ("mc2", self.mc2),
            ("g", self.g),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v <= 0.0 {
                return Err(validation(format!(
                    "leg parameter {name} must be finite and > 0, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Centroidal inertia of the thigh, `mc1 l1^2 / 12`.
    pub fn thigh_inertia(&self) -> f64 {
        self.mc1 * self.l1 * self.l1 / 12.0
    }

    /// Centroidal inertia of the lower leg, `mc2 l2^2 / 12`.
    pub fn shank_inertia(&self) -> f64 {
        self.mc2 * self.l2 * self.l2 / 12.0
    }

    fn coupling(&self) -> f64 {
        0.5 * self.mc2 * self.l1 * self.l2
    }

    fn hip_gravity_gain(&self) -> f64 {
        (self.m2 + 0.5 * self.mc1 + self.mc2) * self.g * self.l1
    }

    fn knee_gravity_gain(&self) -> f64 {
        0.5 * self.mc2 * self.g * self.l2
    }
}

impl Default for LegParams {
    fn default() -> Self {
        Self::platform()
    }
}

/// Joint angles and velocities of one leg.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct JointState {
    pub theta: Vector2<f64>,
    pub omega: Vector2<f64>,
}

impl JointState {
    pub fn new(theta: Vector2<f64>, omega: Vector2<f64>) -> Self {
        Self { theta, omega }
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().chain(self.omega.iter()).all(|v| v.is_finite())
    }
}

/// Joint torques `[tau_hip, tau_knee]` in N m.
pub type JointTorque = Vector2<f64>;

/// `sin(x)/x` with the removable singularity at zero filled in.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

pub fn mass_matrix(p: &LegParams, theta: &Vector2<f64>) -> Matrix2<f64> {
    let m11 = 0.25 * p.mc1 * p.l1 * p.l1
        + p.thigh_inertia()
        + p.m2 * p.l1 * p.l1
        + p.mc2 * p.l1 * p.l1;
    let m22 = 0.25 * p.mc2 * p.l2 * p.l2 + p.shank_inertia();
    let m12 = p.coupling() * (theta[0] - theta[1]).cos();
    Matrix2::new(m11, m12, m12, m22)
}

pub fn coriolis_matrix(p: &LegParams, theta: &Vector2<f64>, omega: &Vector2<f64>) -> Matrix2<f64> {
    let c = p.coupling() * (theta[0] - theta[1]).sin();
    Matrix2::new(0.0, c * omega[1], -c * omega[0], 0.0)
}

pub fn gravity_matrix(p: &LegParams, theta: &Vector2<f64>) -> Matrix2<f64> {
    Matrix2::new(
        p.hip_gravity_gain() * sinc(theta[0]),
        0.0,
        0.0,
        p.knee_gravity_gain() * sinc(theta[1]),
    )
}

pub fn inverse_dynamics(
    p: &LegParams,
    theta: &Vector2<f64>,
    omega: &Vector2<f64>,
    alpha: &Vector2<f64>,
) -> JointTorque {
    mass_matrix(p, theta) * alpha
        + coriolis_matrix(p, theta, omega) * omega
        + gravity_matrix(p, theta) * theta
}

/// Joint accelerations produced by `tau` at `state`.
pub fn forward_dynamics(p: &LegParams, state: &JointState, tau: &JointTorque) -> Vector2<f64> {
    let m = mass_matrix(p, &state.theta);
    let rhs = tau
        - coriolis_matrix(p, &state.theta, &state.omega) * state.omega
        - gravity_matrix(p, &state.theta) * state.theta;
    // M is symmetric positive definite, so the 2x2 solve by Cramer's rule is safe.
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    Vector2::new(
        (m[(1, 1)] * rhs[0] - m[(0, 1)] * rhs[1]) / det,
        (m[(0, 0)] * rhs[1] - m[(1, 0)] * rhs[0]) / det,
    )
}

/// Inverse of the mass matrix.
pub fn mass_matrix_inverse(p: &LegParams, theta: &Vector2<f64>) -> Matrix2<f64> {
    let m = mass_matrix(p, theta);
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    Matrix2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]) / det
}

/// One classical Runge-Kutta step under a torque held constant over `dt`.
pub fn rk4_step(p: &LegParams, state: &JointState, tau: &JointTorque, dt: f64) -> Result<JointState> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(validation(format!("integration step must be > 0, got {dt}")));
    }
    let deriv = |s: &JointState| -> (Vector2<f64>, Vector2<f64>) {
        (s.omega, forward_dynamics(p, s, tau))
    };
    let shift = |s: &JointState, d: &(Vector2<f64>, Vector2<f64>), h: f64| JointState {
        theta: s.theta + d.0 * h,
        omega: s.omega + d.1 * h,
    };

    let k1 = deriv(state);
    let k2 = deriv(&shift(state, &k1, 0.5 * dt));
    let k3 = deriv(&shift(state, &k2, 0.5 * dt));
    let k4 = deriv(&shift(state, &k3, dt));

    Ok(JointState {
        theta: state.theta + (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0) * (dt / 6.0),
        omega: state.omega + (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1) * (dt / 6.0),
    })
}

pub fn kinetic_energy(p: &LegParams, state: &JointState) -> f64 {
    0.5 * state
        .omega
        .dot(&(mass_matrix(p, &state.theta) * state.omega))
}

/// Gravitational potential energy, zero reference at the hip.
pub fn potential_energy(p: &LegParams, theta: &Vector2<f64>) -> f64 {
    -p.hip_gravity_gain() * theta[0].cos() - p.knee_gravity_gain() * theta[1].cos()
}

pub fn total_energy(p: &LegParams, state: &JointState) -> f64 {
    kinetic_energy(p, state) + potential_energy(p, &state.theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    // Term-by-term evaluation of the kinetic energy expression written out in
    // full, independent of mass_matrix.
    fn kinetic_energy_expanded(p: &LegParams, s: &JointState) -> f64 {
        let (w1, w2) = (s.omega[0], s.omega[1]);
        let ic1 = p.mc1 * p.l1 * p.l1 / 12.0;
        let ic2 = p.mc2 * p.l2 * p.l2 / 12.0;
        0.125 * p.mc1 * p.l1 * p.l1 * w1 * w1
            + 0.5 * ic1 * w1 * w1
            + 0.5 * p.m2 * p.l1 * p.l1 * w1 * w1
            + 0.5
                * p.mc2
                * (p.l1 * p.l1 * w1 * w1
                    + 0.25 * p.l2 * p.l2 * w2 * w2
                    + p.l1 * p.l2 * w1 * w2 * (s.theta[0] - s.theta[1]).cos())
            + 0.5 * ic2 * w2 * w2
    }

    #[test]
    fn mass_matrix_platform_values() {
        let p = LegParams::platform();
        let m = mass_matrix(&p, &Vector2::zeros());
        // Hand evaluation of each entry with the platform constants.
        assert_relative_eq!(m[(0, 0)], 0.320_129_081_333_333_34, epsilon = 1e-15);
        assert_relative_eq!(m[(1, 1)], 0.084_724_266_666_666_67, epsilon = 1e-15);
        assert_relative_eq!(m[(0, 1)], 0.113_923_88, epsilon = 1e-15);
        assert_eq!(m[(0, 1)], m[(1, 0)]);
    }

    #[test]
    fn mass_matrix_offdiagonal_vanishes_at_right_angle() {
        let p = LegParams::platform();
        let m = mass_matrix(&p, &Vector2::new(FRAC_PI_2 + 0.3, 0.3));
        assert!(m[(0, 1)].abs() < 1e-15);
        assert!(m[(1, 0)].abs() < 1e-15);
    }

    #[test]
    fn coriolis_special_cases() {
        let p = LegParams::platform();
        let th = Vector2::new(0.4, -0.2);
        assert_eq!(coriolis_matrix(&p, &th, &Vector2::zeros()), Matrix2::zeros());
        assert_eq!(
            coriolis_matrix(&p, &Vector2::new(0.3, 0.3), &Vector2::new(1.0, -2.0)),
            Matrix2::zeros()
        );
        let v = coriolis_matrix(&p, &Vector2::new(FRAC_PI_2, 0.0), &Vector2::new(1.0, 1.0));
        assert_relative_eq!(v[(0, 1)], 0.5 * 3.242 * 0.251 * 0.28, epsilon = 1e-15);
        assert_relative_eq!(v[(1, 0)], -0.5 * 3.242 * 0.251 * 0.28, epsilon = 1e-15);
        assert_eq!(v[(0, 0)], 0.0);
        assert_eq!(v[(1, 1)], 0.0);
    }

    #[test]
    fn gravity_matrix_limits() {
        let p = LegParams::platform();
        let g0 = gravity_matrix(&p, &Vector2::zeros());
        assert_eq!(g0[(0, 0)], (p.m2 + 0.5 * p.mc1 + p.mc2) * p.g * p.l1);
        assert_eq!(g0[(1, 1)], 0.5 * p.mc2 * p.g * p.l2);
        assert_relative_eq!(g0[(0, 0)], 13.697_830_53, epsilon = 1e-12);
        assert_relative_eq!(g0[(1, 1)], 4.452_562_8, epsilon = 1e-12);

        let gpi = gravity_matrix(&p, &Vector2::new(PI, PI));
        assert!(gpi.abs().max() < 1e-14);

        let eps = gravity_matrix(&p, &Vector2::new(1e-6, 1e-6));
        assert!((eps - g0).abs().max() < 1e-8);
    }

    #[test]
    fn sinc_is_smooth_across_branch_switch() {
        for x in [9.9e-5, 1e-4, 1.01e-4, -1e-4] {
            assert_relative_eq!(sinc(x), x.sin() / x, epsilon = 1e-15);
        }
        assert_eq!(sinc(0.0), 1.0);
    }

    #[test]
    fn inverse_dynamics_trivial_cases() {
        let p = LegParams::platform();
        let z = Vector2::zeros();
        assert_eq!(inverse_dynamics(&p, &z, &z, &z), z);
        let th = Vector2::new(0.3, 0.2);
        assert_eq!(
            inverse_dynamics(&p, &th, &z, &z),
            gravity_matrix(&p, &th) * th
        );
    }

    #[test]
    fn forward_dynamics_cases() {
        let p = LegParams::platform();
        let s = JointState::new(Vector2::new(0.3, -0.5), Vector2::new(1.2, -0.7));
        let tau = inverse_dynamics(&p, &s.theta, &s.omega, &Vector2::new(1.0, -2.0));
        let acc = forward_dynamics(&p, &s, &tau);
        assert!((acc - Vector2::new(1.0, -2.0)).abs().max() < 1e-10);

        let st = JointState::new(Vector2::new(0.4, 0.1), Vector2::zeros());
        let hold = gravity_matrix(&p, &st.theta) * st.theta;
        assert!(forward_dynamics(&p, &st, &hold).abs().max() < 1e-12);

        assert_eq!(
            forward_dynamics(&p, &JointState::default(), &Vector2::zeros()),
            Vector2::zeros()
        );
    }

    #[test]
    fn gravity_torque_matches_potential_gradient() {
        // Central differences of the potential energy, independent of G_sd.
        let p = LegParams::platform();
        let h = 1e-6;
        let mut seed = 7u64;
        for _ in 0..100 {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let a = ((seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 2.0 * PI;
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let b = ((seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 2.0 * PI;
            let th = Vector2::new(a, b);
            let grad = Vector2::new(
                (potential_energy(&p, &Vector2::new(a + h, b))
                    - potential_energy(&p, &Vector2::new(a - h, b)))
                    / (2.0 * h),
                (potential_energy(&p, &Vector2::new(a, b + h))
                    - potential_energy(&p, &Vector2::new(a, b - h)))
                    / (2.0 * h),
            );
            let g = gravity_matrix(&p, &th) * th;
            assert!((g - grad).abs().max() < 1e-7, "theta={th:?}");
        }
    }

    #[test]
    fn kinetic_energy_matches_expanded_form() {
        let p = LegParams::platform();
        let s = JointState::new(Vector2::new(0.7, -0.4), Vector2::new(2.0, -1.5));
        assert_relative_eq!(
            kinetic_energy(&p, &s),
            kinetic_energy_expanded(&p, &s),
            epsilon = 1e-13
        );
    }

    #[test]
    fn rk4_rejects_nonpositive_step() {
        let p = LegParams::platform();
        let s = JointState::default();
        assert!(rk4_step(&p, &s, &Vector2::zeros(), 0.0).is_err());
        assert!(rk4_step(&p, &s, &Vector2::zeros(), -1e-3).is_err());
    }

    #[test]
    fn rk4_energy_conservation_unforced_swing() {
        let p = LegParams::platform();
        let mut s = JointState::new(Vector2::new(0.1, 0.1), Vector2::zeros());
        let e0 = total_energy(&p, &s);
        let mut worst = 0.0f64;
        for _ in 0..1000 {
            s = rk4_step(&p, &s, &Vector2::zeros(), 1e-3).unwrap();
            worst = worst.max(((total_energy(&p, &s) - e0) / e0).abs());
        }
        assert!(worst < 1e-6, "relative drift {worst}");
    }

    #[test]
    fn rk4_fourth_order_convergence() {
        // Reference: 10 sub-steps of dt/10. Error of a single step is O(dt^5).
        let p = LegParams::platform();
        let s = JointState::new(Vector2::new(0.8, -0.6), Vector2::new(1.0, 2.0));
        let tau = Vector2::new(0.5, -0.2);
        let err = |dt: f64| {
            let one = rk4_step(&p, &s, &tau, dt).unwrap();
            let mut r = s;
            for _ in 0..10 {
                r = rk4_step(&p, &r, &tau, dt / 10.0).unwrap();
            }
            (one.theta - r.theta).norm() + (one.omega - r.omega).norm()
        };
        let ratio = err(0.04) / err(0.02);
        // Local error of a single step scales as dt^5 (32x); the global
        // fourth-order rate (16x) is the lower bound asserted here.
        assert!(ratio > 16.0, "ratio {ratio}");
        let small = rk4_step(&p, &s, &tau, 1e-6).unwrap();
        assert!((small.theta - s.theta).norm() < 1e-5);
    }

    #[test]
    fn rejects_invalid_params() {
        assert!(LegParams::new(0.251, 0.28, 0.876, 0.876, 2.89, 0.0, 9.81).is_err());
        assert!(LegParams::new(-1.0, 0.28, 0.876, 0.876, 2.89, 3.0, 9.81).is_err());
        assert!(LegParams::new(0.251, 0.28, 0.876, 0.876, 2.89, 3.242, f64::NAN).is_err());
    }

    proptest! {
        #[test]
        fn mass_matrix_symmetric_positive_definite(a in -10.0f64..10.0, b in -10.0f64..10.0) {
            let p = LegParams::platform();
            let m = mass_matrix(&p, &Vector2::new(a, b));
            prop_assert_eq!(m, m.transpose());
            let eig = m.symmetric_eigenvalues();
            prop_assert!(eig.min() > 0.0);
        }

        #[test]
        fn forward_inverse_round_trip(
            a in -3.0f64..3.0, b in -3.0f64..3.0,
            w1 in -5.0f64..5.0, w2 in -5.0f64..5.0,
            a1 in -20.0f64..20.0, a2 in -20.0f64..20.0,
        ) {
            let p = LegParams::platform();
            let s = JointState::new(Vector2::new(a, b), Vector2::new(w1, w2));
            let acc = Vector2::new(a1, a2);
            let tau = inverse_dynamics(&p, &s.theta, &s.omega, &acc);
            prop_assert!((forward_dynamics(&p, &s, &tau) - acc).abs().max() < 1e-10);
        }

        #[test]
        fn coriolis_structure(a in -3.0f64..3.0, b in -3.0f64..3.0, w1 in -5.0f64..5.0, w2 in -5.0f64..5.0) {
            // Off-diagonals carry the same sin factor with opposite sign and
            // swapped velocity factors.
            let p = LegParams::platform();
            let th = Vector2::new(a, b);
            let v = coriolis_matrix(&p, &th, &Vector2::new(w1, w2));
            let swapped = coriolis_matrix(&p, &th, &Vector2::new(w2, w1));
            prop_assert_eq!(v[(0, 0)], 0.0);
            prop_assert_eq!(v[(1, 1)], 0.0);
            prop_assert!((v[(0, 1)] + swapped[(1, 0)]).abs() < 1e-15);
        }
    }
}
