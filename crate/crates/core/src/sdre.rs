//! SDRE tracking control of one leg.
//!
//! The tracking error `x = [theta - theta_d, theta_dot - theta_dot_d, zeta]`
//! is written in state-dependent coefficient form `x' = A(x) x + B(x) u`
//! with `u = tau - tau_d`. The mismatch term `g_f`, which collects the
//! difference between the dynamics matrices evaluated on the actual and the
//! desired trajectory, enters through the auxiliary state `zeta`. `zeta`
//! starts at 1 and decays as `zeta' = -eta zeta`, so the column
//! `-M^-1 g_f` of `A` reproduces the mismatch exactly at `t = 0` and acts as a
//! decaying gate afterwards.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, Matrix2, SMatrix, SVector, Vector2};
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    coriolis_matrix, forward_dynamics, gravity_matrix, inverse_dynamics, mass_matrix,
    mass_matrix_inverse, rk4_step, JointState, JointTorque, LegParams,
};
use crate::error::{validation, Error, Result};
use crate::gait::GaitProfile;
use crate::riccati::{hautus_stabilizable, solve_care, CareProblem, CareSolution};

pub type Matrix5 = SMatrix<f64, 5, 5>;
pub type Matrix5x2 = SMatrix<f64, 5, 2>;
pub type Vector5 = SVector<f64, 5>;

/// Weights of the SDRE cost and the decay rate of the auxiliary state.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlGains {
    pub q: Matrix5,
    pub r: Matrix2<f64>,
    pub eta: f64,
}

impl ControlGains {
    pub fn new(q: Matrix5, r: Matrix2<f64>, eta: f64) -> Result<Self> {
        let g = Self { q, r, eta };
        g.validate()?;
        Ok(g)
    }

    pub fn from_diagonals(q: [f64; 5], r: [f64; 2], eta: f64) -> Result<Self> {
        Self::new(
            Matrix5::from_diagonal(&Vector5::from(q)),
            Matrix2::from_diagonal(&Vector2::from(r)),
            eta,
        )
    }

    /// `Q = diag(500, 500, 20, 20, 1)`, `R = diag(20, 20)`, `eta = 1`.
    pub fn platform() -> Self {
        Self::from_diagonals([500.0, 500.0, 20.0, 20.0, 1.0], [20.0, 20.0], 1.0)
            .expect("platform gains are valid")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(validation(format!("eta must be > 0, got {}", self.eta)));
        }
        if (self.q - self.q.transpose()).amax() > 1e-10 * self.q.amax().max(1.0)
            || self.q.symmetric_eigenvalues().min() < -1e-10
        {
            return Err(validation("Q must be symmetric positive semi-definite"));
        }
        if (self.r - self.r.transpose()).amax() > 1e-10 * self.r.amax().max(1.0)
            || self.r.symmetric_eigenvalues().min() <= 0.0
        {
            return Err(validation("R must be symmetric positive definite"));
        }
        Ok(())
    }

    fn r_inverse(&self) -> Matrix2<f64> {
        self.r
            .try_inverse()
            .expect("R is positive definite after validation")
    }
}

impl Default for ControlGains {
    fn default() -> Self {
        Self::platform()
    }
}

/// Desired angle, velocity and acceleration at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DesiredSample {
    pub theta: Vector2<f64>,
    pub omega: Vector2<f64>,
    pub alpha: Vector2<f64>,
}

impl DesiredSample {
    /// Feedforward torque of the desired motion.
    pub fn feedforward(&self, p: &LegParams) -> JointTorque {
        inverse_dynamics(p, &self.theta, &self.omega, &self.alpha)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorState {
    pub x_theta: Vector2<f64>,
    pub x_w: Vector2<f64>,
    pub zeta: f64,
}

impl ErrorState {
    pub fn between(actual: &JointState, desired: &DesiredSample, zeta: f64) -> Self {
        Self {
            x_theta: actual.theta - desired.theta,
            x_w: actual.omega - desired.omega,
            zeta,
        }
    }

    pub fn to_vector(&self) -> Vector5 {
        Vector5::new(
            self.x_theta[0],
            self.x_theta[1],
            self.x_w[0],
            self.x_w[1],
            self.zeta,
        )
    }

    pub fn from_vector(v: &Vector5) -> Self {
        Self {
            x_theta: Vector2::new(v[0], v[1]),
            x_w: Vector2::new(v[2], v[3]),
            zeta: v[4],
        }
    }

    /// Joint state the error refers to.
    pub fn actual(&self, desired: &DesiredSample) -> JointState {
        JointState::new(self.x_theta + desired.theta, self.x_w + desired.omega)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdcModel {
    pub a: Matrix5,
    pub b: Matrix5x2,
}

impl SdcModel {
    pub fn a_dyn(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(5, 5, self.a.as_slice())
    }

    pub fn b_dyn(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(5, 2, self.b.as_slice())
    }

    /// `A x + B u`.
    pub fn derivative(&self, x: &Vector5, u: &Vector2<f64>) -> Vector5 {
        self.a * x + self.b * u
    }
}

/// Dynamics mismatch between the actual and the desired trajectory.
pub fn g_f_term(p: &LegParams, state: &JointState, desired: &DesiredSample) -> Vector2<f64> {
    (mass_matrix(p, &state.theta) - mass_matrix(p, &desired.theta)) * desired.alpha
        + (coriolis_matrix(p, &state.theta, &state.omega)
            - coriolis_matrix(p, &desired.theta, &desired.omega))
            * desired.omega
        + (gravity_matrix(p, &state.theta) - gravity_matrix(p, &desired.theta)) * desired.theta
}

/// State-dependent coefficient realization of the error dynamics at `x`.
pub fn build_sdc(p: &LegParams, x: &ErrorState, desired: &DesiredSample, gains: &ControlGains) -> SdcModel {
    let state = x.actual(desired);
    let m_inv = mass_matrix_inverse(p, &state.theta);
    let g = gravity_matrix(p, &state.theta);
    let v = coriolis_matrix(p, &state.theta, &state.omega);
    let gf = g_f_term(p, &state, desired);

    let mut a = Matrix5::zeros();
    a.fixed_view_mut::<2, 2>(0, 2).copy_from(&Matrix2::identity());
    a.fixed_view_mut::<2, 2>(2, 0).copy_from(&(-m_inv * g));
    a.fixed_view_mut::<2, 2>(2, 2).copy_from(&(-m_inv * v));
    a.fixed_view_mut::<2, 1>(2, 4).copy_from(&(-m_inv * gf));
    a[(4, 4)] = -gains.eta;

    let mut b = Matrix5x2::zeros();
    b.fixed_view_mut::<2, 2>(2, 0).copy_from(&m_inv);

    SdcModel { a, b }
}

pub fn care_problem(model: &SdcModel, gains: &ControlGains) -> Result<CareProblem> {
    CareProblem::new(
        model.a_dyn(),
        model.b_dyn(),
        DMatrix::from_column_slice(5, 5, gains.q.as_slice()),
        DMatrix::from_column_slice(2, 2, gains.r.as_slice()),
    )
}

/// Control correction `u = -R^-1 B^T P x` with the returned CARE solution.
pub fn sdre_feedback(
    model: &SdcModel,
    gains: &ControlGains,
    x: &ErrorState,
) -> Result<(Vector2<f64>, CareSolution)> {
    let sol = solve_care(&care_problem(model, gains)?)?;
    let p = Matrix5::from_column_slice(sol.p.as_slice());
    Ok((feedback_with(model, gains, &p, x), sol))
}

fn feedback_with(model: &SdcModel, gains: &ControlGains, p: &Matrix5, x: &ErrorState) -> Vector2<f64> {
    -(gains.r_inverse() * model.b.transpose() * p * x.to_vector())
}

/// Closed-loop matrix `A - B R^-1 B^T P`.
pub fn closed_loop_matrix(model: &SdcModel, gains: &ControlGains, p: &Matrix5) -> Matrix5 {
    model.a - model.b * gains.r_inverse() * model.b.transpose() * p
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    pub dt: f64,
    /// Solve the CARE every `care_every` steps and hold `P` in between.
    pub care_every: usize,
    /// Abort once `|x|_inf` exceeds this bound.
    pub divergence_bound: f64,
    /// Initial angle error (rad).
    pub initial_angle_error: Vector2<f64>,
    /// Initial velocity error (rad/s).
    pub initial_velocity_error: Vector2<f64>,
    /// Run the Hautus stabilizability test at every visited SDC point.
    pub check_stabilizability: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            care_every: 1,
            divergence_bound: 1e3,
            initial_angle_error: Vector2::zeros(),
            initial_velocity_error: Vector2::zeros(),
            check_stabilizability: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrackingDiagnostics {
    pub care_solves: usize,
    pub max_care_residual: f64,
    pub max_closed_loop_real: f64,
    /// Largest violation of `tau - tau_d = M dθ'' + V dθ' + G dθ + g_f`.
    pub max_decomposition_residual: f64,
    pub stabilizability_checks: usize,
    pub stabilizability_failures: usize,
}

#[derive(Debug, Clone, Default)]
pub struct TrackingResult {
    pub t: Vec<f64>,
    pub theta: Vec<Vector2<f64>>,
    pub omega: Vec<Vector2<f64>>,
    pub tau: Vec<JointTorque>,
    pub tau_d: Vec<JointTorque>,
    pub err: Vec<Vector2<f64>>,
    /// Full error state per sample. Empty when read back from CSV.
    pub x: Vec<Vector5>,
    pub diagnostics: TrackingDiagnostics,
}

const TRACKING_HEADER: &str = "t,theta1,theta2,omega1,omega2,tau1,tau2,tau_d1,tau_d2,err1,err2";

impl TrackingResult {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        match (self.t.first(), self.t.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    /// Control corrections `u = tau - tau_d`.
    pub fn controls(&self) -> Vec<Vector2<f64>> {
        self.tau.iter().zip(&self.tau_d).map(|(a, b)| a - b).collect()
    }

    /// Per-joint angle RMSE in radians.
    pub fn angle_rmse(&self) -> Vector2<f64> {
        crate::report::rmse(&self.err)
    }

    pub fn peak_torque(&self) -> Vector2<f64> {
        self.tau.iter().fold(Vector2::zeros(), |acc, t| acc.sup(&t.abs()))
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{TRACKING_HEADER}")?;
        for i in 0..self.len() {
            let (th, om, ta, td, e) = (self.theta[i], self.omega[i], self.tau[i], self.tau_d[i], self.err[i]);
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                self.t[i], th[0], th[1], om[0], om[1], ta[0], ta[1], td[0], td[1], e[0], e[1]
            )?;
        }
        Ok(())
    }

    /// Reads a file produced by [`TrackingResult::write_csv`]. The error
    /// state and diagnostics are not part of the file and stay empty.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut res = TrackingResult::default();
        let mut seen_header = false;
        for (idx, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !seen_header {
                if line != TRACKING_HEADER {
                    return Err(Error::Parse {
                        line: idx + 1,
                        message: format!("expected header `{TRACKING_HEADER}`"),
                    });
                }
                seen_header = true;
                continue;
            }
            let vals = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse {
                    line: idx + 1,
                    message: e.to_string(),
                })?;
            if vals.len() != 11 {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("expected 11 columns, got {}", vals.len()),
                });
            }
            res.t.push(vals[0]);
            res.theta.push(Vector2::new(vals[1], vals[2]));
            res.omega.push(Vector2::new(vals[3], vals[4]));
            res.tau.push(Vector2::new(vals[5], vals[6]));
            res.tau_d.push(Vector2::new(vals[7], vals[8]));
            res.err.push(Vector2::new(vals[9], vals[10]));
        }
        if !seen_header {
            return Err(Error::Parse {
                line: 0,
                message: "missing header".into(),
            });
        }
        Ok(res)
    }
}

/// Closed-loop SDRE tracking of `profile`, marching the plant with RK4 and
/// holding the torque constant over each step.
pub fn simulate_tracking(
    p: &LegParams,
    profile: &GaitProfile,
    gains: &ControlGains,
    opts: &SimOptions,
) -> Result<TrackingResult> {
    p.validate()?;
    gains.validate()?;
    if !(opts.dt > 0.0) || !opts.dt.is_finite() {
        return Err(validation(format!("dt must be > 0, got {}", opts.dt)));
    }
    if opts.care_every == 0 {
        return Err(validation("care_every must be at least 1"));
    }
    let resampled;
    let profile = if profile.is_uniform(opts.dt) {
        profile
    } else {
        resampled = profile.resample(opts.dt)?;
        &resampled
    };

    let n = profile.len();
    let mut out = TrackingResult {
        t: Vec::with_capacity(n),
        theta: Vec::with_capacity(n),
        omega: Vec::with_capacity(n),
        tau: Vec::with_capacity(n),
        tau_d: Vec::with_capacity(n),
        err: Vec::with_capacity(n),
        x: Vec::with_capacity(n),
        diagnostics: TrackingDiagnostics {
            max_closed_loop_real: f64::NEG_INFINITY,
            ..Default::default()
        },
    };

    let d0 = profile.desired(0);
    let mut state = JointState::new(
        d0.theta + opts.initial_angle_error,
        d0.omega + opts.initial_velocity_error,
    );
    let mut zeta = 1.0;
    let mut held_p: Option<Matrix5> = None;

    for i in 0..n {
        let t = profile.t[i];
        let desired = profile.desired(i);
        let x = ErrorState::between(&state, &desired, zeta);
        let xv = x.to_vector();
        let norm = xv.amax();
        if !norm.is_finite() || norm > opts.divergence_bound {
            return Err(Error::SimulationDiverged { t, norm });
        }

        let tau_d = desired.feedforward(p);
        let model = build_sdc(p, &x, &desired, gains);
        if opts.check_stabilizability {
            out.diagnostics.stabilizability_checks += 1;
            if !hautus_stabilizable(&model.a_dyn(), &model.b_dyn()) {
                out.diagnostics.stabilizability_failures += 1;
            }
        }
        if i % opts.care_every == 0 || held_p.is_none() {
            let sol = solve_care(&care_problem(&model, gains)?)?;
            let d = &mut out.diagnostics;
            d.care_solves += 1;
            d.max_care_residual = d.max_care_residual.max(sol.residual_norm);
            d.max_closed_loop_real = d.max_closed_loop_real.max(sol.max_closed_loop_real());
            held_p = Some(Matrix5::from_column_slice(sol.p.as_slice()));
        }
        let p_mat = held_p.as_ref().expect("P is set on the first step");
        let u = feedback_with(&model, gains, p_mat, &x);
        let tau = tau_d + u;

        let accel = forward_dynamics(p, &state, &tau);
        let rebuilt = mass_matrix(p, &state.theta) * (accel - desired.alpha)
            + coriolis_matrix(p, &state.theta, &state.omega) * x.x_w
            + gravity_matrix(p, &state.theta) * x.x_theta
            + g_f_term(p, &state, &desired);
        let defect = (u - rebuilt).amax();
        out.diagnostics.max_decomposition_residual = out.diagnostics.max_decomposition_residual.max(defect);

        out.t.push(t);
        out.theta.push(state.theta);
        out.omega.push(state.omega);
        out.tau.push(tau);
        out.tau_d.push(tau_d);
        out.err.push(x.x_theta);
        out.x.push(xv);

        if i + 1 < n {
            let h = profile.t[i + 1] - t;
            state = rk4_step(p, &state, &tau, h)?;
            zeta *= (-gains.eta * h).exp();
        }
    }
    Ok(out)
}
