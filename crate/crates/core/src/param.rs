//! Motor-compatible velocity parameterization.
//!
//! Between consecutive characteristic times `t0[k]` and `t0[k+1]` a joint
//! ramps linearly from the previous target velocity `w[k-1]` to `w[k]` with
//! acceleration `alpha[k]`, reaching it at `t1[k] = t0[k] + (w[k] - w[k-1]) /
//! alpha[k]`, and then holds `w[k]` until the next node. Each segment is one
//! motor command; a new command overwrites the previous one.
//!
//! [`optimize_plan`] fits the `(w, alpha)` parameters of both joints so that
//! the inverse-dynamics torque of the resulting motion matches a reference
//! torque in a weighted RMS sense.

use std::io::Write;

use nalgebra::{Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{inverse_dynamics, LegParams};
use crate::error::{validation, Error, Result};
use crate::gait::{GaitProfile, NodeSequence};
use crate::nelder_mead::{minimize_box, NelderMeadOptions};
use crate::sdre::TrackingResult;

/// Tolerance for the ramp-fits-in-segment check.
const RAMP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanBounds {
    pub w_min: f64,
    pub w_max: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
}

impl Default for PlanBounds {
    /// `|w| <= 6 rad/s`, `|alpha| <= 40 rad/s^2`.
    fn default() -> Self {
        Self {
            w_min: -6.0,
            w_max: 6.0,
            alpha_min: -40.0,
            alpha_max: 40.0,
        }
    }
}

impl PlanBounds {
    pub fn new(w_min: f64, w_max: f64, alpha_min: f64, alpha_max: f64) -> Result<Self> {
        let b = Self {
            w_min,
            w_max,
            alpha_min,
            alpha_max,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.w_min, self.w_max, self.alpha_min, self.alpha_max];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InfeasibleBounds("bounds must be finite".into()));
        }
        if self.w_min > self.w_max {
            return Err(Error::InfeasibleBounds(format!(
                "w_min ({}) exceeds w_max ({})",
                self.w_min, self.w_max
            )));
        }
        if self.alpha_min > self.alpha_max {
            return Err(Error::InfeasibleBounds(format!(
                "alpha_min ({}) exceeds alpha_max ({})",
                self.alpha_min, self.alpha_max
            )));
        }
        Ok(())
    }

    fn holds_w(&self, w: f64) -> bool {
        w >= self.w_min && w <= self.w_max
    }

    fn holds_alpha(&self, a: f64) -> bool {
        a >= self.alpha_min && a <= self.alpha_max
    }
}

/// Piecewise-linear velocity command schedule of one joint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityPlan {
    nodes: NodeSequence,
    w0: f64,
    w: Vec<f64>,
    alpha: Vec<f64>,
    bounds: PlanBounds,
}

impl VelocityPlan {
    /// Builds a plan and checks every invariant: bounds on `w0`, `w[k]` and
    /// `alpha[k]`, sign consistency of `alpha[k]` with the velocity change,
    /// and each ramp ending before the next node.
    pub fn new(nodes: NodeSequence, w0: f64, w: Vec<f64>, alpha: Vec<f64>, bounds: PlanBounds) -> Result<Self> {
        bounds.validate()?;
        let segs = nodes.segments();
        if w.len() != segs || alpha.len() != segs {
            return Err(validation(format!(
                "plan with {segs} segments needs {segs} velocities and accelerations, got {} and {}",
                w.len(),
                alpha.len()
            )));
        }
        if !bounds.holds_w(w0) {
            return Err(validation(format!("initial velocity {w0} outside bounds")));
        }
        let plan = Self {
            nodes,
            w0,
            w,
            alpha,
            bounds,
        };
        for k in 0..segs {
            let (wk, ak) = (plan.w[k], plan.alpha[k]);
            if !bounds.holds_w(wk) || !bounds.holds_alpha(ak) {
                return Err(validation(format!("segment {k} parameters ({wk}, {ak}) outside bounds")));
            }
            let dw = wk - plan.previous_velocity(k);
            if dw != 0.0 && (ak == 0.0 || ak.signum() != dw.signum()) {
                return Err(validation(format!(
                    "segment {k}: acceleration {ak} cannot move velocity by {dw}"
                )));
            }
            let len = plan.segment_length(k);
            if plan.ramp_duration(k) > len * (1.0 + RAMP_TOL) + RAMP_TOL {
                return Err(validation(format!(
                    "segment {k}: ramp of {} s does not fit in {len} s",
                    plan.ramp_duration(k)
                )));
            }
        }
        Ok(plan)
    }

    /// Turns arbitrary parameters into a feasible plan.
    ///
    /// Processed segment by segment: `w[k]` is clamped to the speed bounds
    /// and to the range reachable from `w[k-1]` within the segment, then
    /// `alpha[k]` is clamped to the accelerations that take the ramp from
    /// `w[k-1]` to `w[k]` without overrunning the segment. The returned
    /// penalty is the total absolute adjustment.
    pub fn repaired(
        nodes: NodeSequence,
        w0: f64,
        raw_w: &[f64],
        raw_alpha: &[f64],
        bounds: PlanBounds,
    ) -> Result<(Self, f64)> {
        bounds.validate()?;
        let segs = nodes.segments();
        if raw_w.len() != segs || raw_alpha.len() != segs {
            return Err(validation("parameter count does not match the node sequence"));
        }
        let mut penalty = 0.0;
        let w0c = w0.clamp(bounds.w_min, bounds.w_max);
        penalty += (w0c - w0).abs();
        let mut prev = w0c;
        let mut w = Vec::with_capacity(segs);
        let mut alpha = Vec::with_capacity(segs);
        let times = nodes.times();
        for k in 0..segs {
            let len = times[k + 1] - times[k];
            let lo = bounds.w_min.max(prev + bounds.alpha_min.min(0.0) * len);
            let hi = bounds.w_max.min(prev + bounds.alpha_max.max(0.0) * len);
            let wk = raw_w[k].clamp(lo, hi);
            penalty += (wk - raw_w[k]).abs();
            let dw = wk - prev;
            let ak = if dw > 0.0 {
                // Rounding can put dw / len an ulp past the bound.
                let need = (dw / len).min(bounds.alpha_max);
                raw_alpha[k].clamp(need.max(bounds.alpha_min), bounds.alpha_max)
            } else if dw < 0.0 {
                let need = (dw / len).max(bounds.alpha_min);
                raw_alpha[k].clamp(bounds.alpha_min, need.min(bounds.alpha_max))
            } else {
                raw_alpha[k].clamp(bounds.alpha_min, bounds.alpha_max)
            };
            penalty += (ak - raw_alpha[k]).abs();
            w.push(wk);
            alpha.push(ak);
            prev = wk;
        }
        let plan = Self {
            nodes,
            w0: w0c,
            w,
            alpha,
            bounds,
        };
        Ok((plan, penalty))
    }

    pub fn nodes(&self) -> &NodeSequence {
        &self.nodes
    }

    pub fn w0(&self) -> f64 {
        self.w0
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn bounds(&self) -> &PlanBounds {
        &self.bounds
    }

    pub fn segments(&self) -> usize {
        self.w.len()
    }

    pub fn start(&self) -> f64 {
        self.nodes.start()
    }

    pub fn end(&self) -> f64 {
        self.nodes.end()
    }

    /// Velocity at the start of segment `k`.
    pub fn previous_velocity(&self, k: usize) -> f64 {
        if k == 0 {
            self.w0
        } else {
            self.w[k - 1]
        }
    }

    pub fn segment_length(&self, k: usize) -> f64 {
        let t = self.nodes.times();
        t[k + 1] - t[k]
    }

    /// `t1[k] - t0[k]`; zero when the velocity does not change.
    pub fn ramp_duration(&self, k: usize) -> f64 {
        let dw = self.w[k] - self.previous_velocity(k);
        if dw == 0.0 {
            0.0
        } else {
            dw / self.alpha[k]
        }
    }

    pub fn ramp_end(&self, k: usize) -> f64 {
        self.nodes.times()[k] + self.ramp_duration(k)
    }

    fn segment_of(&self, t: f64) -> usize {
        let times = self.nodes.times();
        // Node t0[k+1] closes segment k.
        let idx = times.partition_point(|&v| v < t);
        idx.saturating_sub(1).min(self.segments() - 1)
    }

    fn check_domain(&self, t: f64) -> Result<()> {
        let (s, e) = (self.start(), self.end());
        let slack = 1e-12 * (e - s).abs().max(1.0);
        if !(t >= s - slack && t <= e + slack) {
            return Err(Error::OutOfDomain { t, start: s, end: e });
        }
        Ok(())
    }

    pub fn eval_velocity(&self, t: f64) -> Result<f64> {
        self.check_domain(t)?;
        let k = self.segment_of(t);
        let tau = t - self.nodes.times()[k];
        let ramp = self.ramp_duration(k);
        Ok(if tau <= ramp {
            self.previous_velocity(k) + self.alpha[k] * tau
        } else {
            self.w[k]
        })
    }

    /// Ordered motor commands, one per segment.
    pub fn commands(&self) -> Vec<MotorCommand> {
        (0..self.segments())
            .map(|k| MotorCommand {
                t0: self.nodes.times()[k],
                w: self.w[k],
                alpha: self.alpha[k],
            })
            .collect()
    }

    /// Angle offsets from the plan start at the beginning of each segment.
    fn segment_start_angles(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(self.segments() + 1);
        out.push(0.0);
        for k in 0..self.segments() {
            let d = self.ramp_duration(k);
            let prev = self.previous_velocity(k);
            acc += prev * d + 0.5 * self.alpha[k] * d * d + self.w[k] * (self.segment_length(k) - d);
            out.push(acc);
        }
        out
    }
}

pub fn plan_to_commands(plan: &VelocityPlan) -> Vec<MotorCommand> {
    plan.commands()
}

/// Velocity command: starting at `t0`, ramp towards `w` at rate `alpha`,
/// then hold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotorCommand {
    pub t0: f64,
    pub w: f64,
    pub alpha: f64,
}

/// Velocity a motor produces at time `t` when it starts at `w0` and each
/// command in `commands` takes over from its predecessor at its issue time.
pub fn replay_commands(commands: &[MotorCommand], w0: f64, t: f64) -> f64 {
    let mut v = w0;
    for (i, c) in commands.iter().enumerate() {
        if t < c.t0 {
            break;
        }
        let until = commands.get(i + 1).map(|n| n.t0.min(t)).unwrap_or(t);
        let elapsed = until - c.t0;
        let ramp = if c.w == v { 0.0 } else { (c.w - v) / c.alpha };
        v = if elapsed < ramp { v + c.alpha * elapsed } else { c.w };
    }
    v
}

/// Sampled motion of one joint following a plan.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanTrajectory {
    pub t: Vec<f64>,
    pub theta: Vec<f64>,
    pub omega: Vec<f64>,
    pub accel: Vec<f64>,
}

/// Closed-form integration of the plan from `theta0`, sampled every `dt`.
pub fn integrate_plan(plan: &VelocityPlan, theta0: f64, dt: f64) -> Result<PlanTrajectory> {
    let grid = crate::gait::uniform_grid(plan.start(), plan.end(), dt)?;
    integrate_plan_at(plan, theta0, &grid)
}

/// Closed-form integration of the plan at the given times: quadratic on
/// ramps, linear on plateaus.
pub fn integrate_plan_at(plan: &VelocityPlan, theta0: f64, times: &[f64]) -> Result<PlanTrajectory> {
    let starts = plan.segment_start_angles();
    let mut out = PlanTrajectory {
        t: Vec::with_capacity(times.len()),
        theta: Vec::with_capacity(times.len()),
        omega: Vec::with_capacity(times.len()),
        accel: Vec::with_capacity(times.len()),
    };
    for &t in times {
        plan.check_domain(t)?;
        let k = plan.segment_of(t);
        let tau = t - plan.nodes.times()[k];
        let ramp = plan.ramp_duration(k);
        let prev = plan.previous_velocity(k);
        let (theta, omega, accel) = if tau < ramp {
            (
                prev * tau + 0.5 * plan.alpha[k] * tau * tau,
                prev + plan.alpha[k] * tau,
                plan.alpha[k],
            )
        } else {
            (
                prev * ramp + 0.5 * plan.alpha[k] * ramp * ramp + plan.w[k] * (tau - ramp),
                plan.w[k],
                0.0,
            )
        };
        out.t.push(t);
        out.theta.push(theta0 + starts[k] + theta);
        out.omega.push(omega);
        out.accel.push(accel);
    }
    Ok(out)
}

/// Velocity plans for the hip and the knee on a shared node sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegPlan {
    pub hip: VelocityPlan,
    pub knee: VelocityPlan,
}

impl LegPlan {
    pub fn new(hip: VelocityPlan, knee: VelocityPlan) -> Result<Self> {
        if hip.nodes != knee.nodes {
            return Err(Error::DomainMismatch("hip and knee plans use different nodes".into()));
        }
        Ok(Self { hip, knee })
    }

    pub fn joints(&self) -> [&VelocityPlan; 2] {
        [&self.hip, &self.knee]
    }

    pub fn nodes(&self) -> &NodeSequence {
        &self.hip.nodes
    }

    /// Angles, velocities and accelerations of both joints at `times`.
    pub fn motion_at(
        &self,
        theta0: &Vector2<f64>,
        times: &[f64],
    ) -> Result<(Vec<Vector2<f64>>, Vec<Vector2<f64>>, Vec<Vector2<f64>>)> {
        let h = integrate_plan_at(&self.hip, theta0[0], times)?;
        let k = integrate_plan_at(&self.knee, theta0[1], times)?;
        let zip = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| Vector2::new(*x, *y)).collect::<Vec<_>>();
        Ok((zip(&h.theta, &k.theta), zip(&h.omega, &k.omega), zip(&h.accel, &k.accel)))
    }

    /// Inverse-dynamics torques of the planned motion at `times`.
    pub fn torques_at(&self, p: &LegParams, theta0: &Vector2<f64>, times: &[f64]) -> Result<Vec<Vector2<f64>>> {
        let (th, om, ac) = self.motion_at(theta0, times)?;
        Ok((0..times.len())
            .map(|i| inverse_dynamics(p, &th[i], &om[i], &ac[i]))
            .collect())
    }

    /// Plan CSV: `k,t0,w_hip,w_knee,alpha_hip,alpha_knee`. Row 0 carries the
    /// initial velocities with empty accelerations.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "k,t0,w_hip,w_knee,alpha_hip,alpha_knee")?;
        writeln!(out, "0,{},{},{},,", self.hip.start(), self.hip.w0, self.knee.w0)?;
        for k in 0..self.hip.segments() {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                k + 1,
                self.hip.nodes.times()[k],
                self.hip.w[k],
                self.knee.w[k],
                self.hip.alpha[k],
                self.knee.alpha[k]
            )?;
        }
        Ok(())
    }

    /// Motor command list: `joint,t0,w,alpha` in issue order.
    pub fn write_commands_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "joint,t0,w,alpha")?;
        for (name, plan) in [("hip", &self.hip), ("knee", &self.knee)] {
            for c in plan.commands() {
                writeln!(out, "{name},{},{},{}", c.t0, c.w, c.alpha)?;
            }
        }
        Ok(())
    }
}

/// Diagonal, non-negative weights on the hip and knee torque errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightMatrix {
    diag: [f64; 2],
}

impl WeightMatrix {
    pub fn new(hip: f64, knee: f64) -> Result<Self> {
        if !(hip >= 0.0 && knee >= 0.0) || !hip.is_finite() || !knee.is_finite() {
            return Err(validation("torque weights must be finite and >= 0"));
        }
        Ok(Self { diag: [hip, knee] })
    }

    /// `W = diag(10, 10)`.
    pub fn platform() -> Self {
        Self { diag: [10.0, 10.0] }
    }

    pub fn diag(&self) -> [f64; 2] {
        self.diag
    }

    pub fn matrix(&self) -> Matrix2<f64> {
        Matrix2::from_diagonal(&Vector2::from(self.diag))
    }

    fn quad(&self, e: &Vector2<f64>) -> f64 {
        self.diag[0] * e[0] * e[0] + self.diag[1] * e[1] * e[1]
    }
}

impl Default for WeightMatrix {
    fn default() -> Self {
        Self::platform()
    }
}

/// Torque history a plan is fitted against, with the initial condition
/// the plan starts from.
#[derive(Debug, Clone, PartialEq)]
pub struct TorqueReference {
    pub label: String,
    pub t: Vec<f64>,
    pub tau: Vec<Vector2<f64>>,
    pub theta: Vec<Vector2<f64>>,
    pub omega: Vec<Vector2<f64>>,
}

impl TorqueReference {
    pub fn new(
        label: impl Into<String>,
        t: Vec<f64>,
        tau: Vec<Vector2<f64>>,
        theta: Vec<Vector2<f64>>,
        omega: Vec<Vector2<f64>>,
    ) -> Result<Self> {
        let n = t.len();
        if n < 2 || tau.len() != n || theta.len() != n || omega.len() != n {
            return Err(validation("reference needs at least two samples with matching columns"));
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(validation("reference time must be strictly increasing"));
        }
        Ok(Self {
            label: label.into(),
            t,
            tau,
            theta,
            omega,
        })
    }

    /// Closed-loop SDRE torques.
    pub fn from_tracking(res: &TrackingResult) -> Result<Self> {
        Self::new("sdre", res.t.clone(), res.tau.clone(), res.theta.clone(), res.omega.clone())
    }

    /// Inverse-dynamics torques of the desired profile itself.
    pub fn from_profile(p: &LegParams, profile: &GaitProfile) -> Result<Self> {
        Self::new(
            "human",
            profile.t.clone(),
            profile.feedforward_torques(p),
            profile.theta.clone(),
            profile.theta_dot.clone(),
        )
    }

    /// Torques of the motion produced by `plan`, sampled every `dt`.
    pub fn from_plan(p: &LegParams, plan: &LegPlan, theta0: Vector2<f64>, dt: f64) -> Result<Self> {
        let t = crate::gait::uniform_grid(plan.hip.start(), plan.hip.end(), dt)?;
        let (theta, omega, _) = plan.motion_at(&theta0, &t)?;
        let tau = plan.torques_at(p, &theta0, &t)?;
        Self::new("plan", t, tau, theta, omega)
    }

    pub fn start(&self) -> f64 {
        self.t[0]
    }

    pub fn end(&self) -> f64 {
        self.t[self.t.len() - 1]
    }

    pub fn theta0(&self) -> Vector2<f64> {
        self.theta[0]
    }
}

fn check_horizon(plan: &LegPlan, reference: &TorqueReference) -> Result<()> {
    let tol = 1e-9 * (reference.end() - reference.start()).abs().max(1.0);
    if (plan.hip.start() - reference.start()).abs() > tol || (plan.hip.end() - reference.end()).abs() > tol {
        return Err(Error::DomainMismatch(format!(
            "plan covers [{}, {}] but the reference covers [{}, {}]",
            plan.hip.start(),
            plan.hip.end(),
            reference.start(),
            reference.end()
        )));
    }
    if plan.hip.nodes != plan.knee.nodes {
        return Err(Error::DomainMismatch("hip and knee plans use different nodes".into()));
    }
    Ok(())
}

/// Weighted RMS torque error
/// `J = sqrt( (1/T) int e^T W e dt )`, `e = tau_ref - tau_plan`,
/// by the trapezoidal rule on the reference samples.
pub fn plan_cost(p: &LegParams, plan: &LegPlan, reference: &TorqueReference, w: &WeightMatrix) -> Result<f64> {
    check_horizon(plan, reference)?;
    let tau = plan.torques_at(p, &reference.theta0(), &reference.t)?;
    let integrand: Vec<f64> = reference
        .tau
        .iter()
        .zip(&tau)
        .map(|(r, m)| w.quad(&(r - m)))
        .collect();
    let mut integral = 0.0;
    for i in 1..reference.t.len() {
        integral += 0.5 * (reference.t[i] - reference.t[i - 1]) * (integrand[i] + integrand[i - 1]);
    }
    Ok((integral / (reference.end() - reference.start())).sqrt())
}

/// Starting plan derived from the reference motion: initial velocity from
/// the first sample, `w[k]` the mean reference velocity over segment `k`,
/// `alpha[k]` half the acceleration bound in the direction of the change.
pub fn initial_plan(nodes: &NodeSequence, reference: &TorqueReference, bounds: PlanBounds) -> Result<LegPlan> {
    bounds.validate()?;
    let times = nodes.times();
    let mut plans = Vec::with_capacity(2);
    for j in 0..2 {
        let w0 = reference.omega[0][j];
        let mut w = Vec::with_capacity(nodes.segments());
        for k in 0..nodes.segments() {
            let (a, b) = (times[k], times[k + 1]);
            // Mean velocity over the segment is its angle change over its length.
            let ta = interp_scalar(&reference.t, &reference.theta, j, a);
            let tb = interp_scalar(&reference.t, &reference.theta, j, b);
            w.push((tb - ta) / (b - a));
        }
        let mut alpha = Vec::with_capacity(w.len());
        let mut prev = w0;
        for &wk in &w {
            let a = if wk >= prev {
                0.5 * bounds.alpha_max
            } else {
                0.5 * bounds.alpha_min
            };
            alpha.push(a);
            prev = wk;
        }
        plans.push(VelocityPlan::repaired(nodes.clone(), w0, &w, &alpha, bounds)?.0);
    }
    let knee = plans.pop().expect("two joints");
    let hip = plans.pop().expect("two joints");
    LegPlan::new(hip, knee)
}

fn interp_scalar(t: &[f64], f: &[Vector2<f64>], j: usize, s: f64) -> f64 {
    let hi = t.partition_point(|&v| v < s).min(t.len() - 1);
    if hi == 0 {
        return f[0][j];
    }
    let lo = hi - 1;
    let w = ((s - t[lo]) / (t[hi] - t[lo])).clamp(0.0, 1.0);
    f[lo][j] * (1.0 - w) + f[hi][j] * w
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeOptions {
    /// Number of Nelder-Mead starts: the initial plan plus `starts - 1`
    /// uniformly perturbed copies.
    pub starts: usize,
    /// Half-width of the start perturbation, as a fraction of each
    /// parameter's bound range.
    pub perturbation: f64,
    pub seed: u64,
    pub max_evals: usize,
    pub f_tol: f64,
    pub x_tol: f64,
    /// Run the starts on separate threads.
    pub parallel: bool,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            starts: 5,
            perturbation: 0.1,
            seed: 0,
            max_evals: 40_000,
            f_tol: 1e-12,
            x_tol: 1e-10,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeResult {
    pub plan: LegPlan,
    pub cost: f64,
    pub initial_cost: f64,
    /// Best cost per iteration of the winning start.
    pub trace: Vec<f64>,
    pub start_costs: Vec<f64>,
    pub winning_start: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// The evaluation budget ran out before convergence. The plan is the
    /// best one found.
    pub hit_max_evals: bool,
    /// Repair adjustment applied to the initial plan.
    pub init_repair: f64,
}

/// Search coordinates of the optimizer: per joint, the segment velocities
/// `w[k]` followed by the ramp fractions `(t1[k] - t0[k]) / (t0[k+1] - t0[k])`.
/// Ramp ends then move along coordinate axes, which keeps the kinks of the
/// cost axis-aligned for the simplex search.
struct Layout {
    nodes: NodeSequence,
    w0: [f64; 2],
    bounds: PlanBounds,
    segs: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    free: Vec<usize>,
}

impl Layout {
    fn new(nodes: &NodeSequence, w0: [f64; 2], bounds: PlanBounds) -> Self {
        let segs = nodes.segments();
        let mut lower = Vec::with_capacity(4 * segs);
        let mut upper = Vec::with_capacity(4 * segs);
        for _ in 0..2 {
            lower.extend(std::iter::repeat(bounds.w_min).take(segs));
            upper.extend(std::iter::repeat(bounds.w_max).take(segs));
            let ramp_free = bounds.alpha_max > bounds.alpha_min;
            lower.extend(std::iter::repeat(0.0).take(segs));
            upper.extend(std::iter::repeat(if ramp_free { 1.0 } else { 0.0 }).take(segs));
        }
        let free = (0..lower.len()).filter(|&i| upper[i] > lower[i]).collect();
        Self {
            nodes: nodes.clone(),
            w0,
            bounds,
            segs,
            lower,
            upper,
            free,
        }
    }

    fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        self.free
            .iter()
            .map(|&i| ((x[i] - self.lower[i]) / (self.upper[i] - self.lower[i])).clamp(0.0, 1.0))
            .collect()
    }

    fn from_unit(&self, base: &[f64], u: &[f64]) -> Vec<f64> {
        let mut x = base.to_vec();
        for (slot, &i) in self.free.iter().enumerate() {
            x[i] = self.lower[i] + u[slot] * (self.upper[i] - self.lower[i]);
        }
        x
    }

    fn encode(&self, plan: &LegPlan) -> Vec<f64> {
        let mut x = Vec::with_capacity(4 * self.segs);
        for j in plan.joints() {
            x.extend_from_slice(&j.w);
            x.extend((0..self.segs).map(|k| (j.ramp_duration(k) / j.segment_length(k)).clamp(0.0, 1.0)));
        }
        x
    }

    fn joint(&self, w0: f64, w: &[f64], frac: &[f64]) -> Result<VelocityPlan> {
        let b = &self.bounds;
        let times = self.nodes.times();
        let mut prev = w0.clamp(b.w_min, b.w_max);
        let mut ws = Vec::with_capacity(self.segs);
        let mut alphas = Vec::with_capacity(self.segs);
        for k in 0..self.segs {
            let len = times[k + 1] - times[k];
            let lo = b.w_min.max(prev + b.alpha_min.min(0.0) * len);
            let hi = b.w_max.min(prev + b.alpha_max.max(0.0) * len);
            let wk = w[k].clamp(lo, hi);
            let dw = wk - prev;
            alphas.push(if dw == 0.0 { 0.0 } else { dw / (frac[k].max(1e-12) * len) });
            ws.push(wk);
            prev = wk;
        }
        Ok(VelocityPlan::repaired(self.nodes.clone(), w0, &ws, &alphas, self.bounds)?.0)
    }

    fn plan(&self, x: &[f64]) -> Result<LegPlan> {
        let s = self.segs;
        Ok(LegPlan {
            hip: self.joint(self.w0[0], &x[0..s], &x[s..2 * s])?,
            knee: self.joint(self.w0[1], &x[2 * s..3 * s], &x[3 * s..4 * s])?,
        })
    }
}

/// Box-constrained multi-start fit of both joints' `(w, alpha)` to the
/// reference torque.
///
/// Every evaluated plan is feasible: parameters are kept inside the bounds
/// and passed through [`VelocityPlan::repaired`]. The returned cost never
/// exceeds the cost of the (repaired) initial plan.
pub fn optimize_plan(
    p: &LegParams,
    reference: &TorqueReference,
    w: &WeightMatrix,
    init: &LegPlan,
    opts: &OptimizeOptions,
) -> Result<OptimizeResult> {
    let bounds = init.hip.bounds;
    bounds.validate()?;
    if init.knee.bounds != bounds {
        return Err(validation("hip and knee plans must share bounds"));
    }
    if opts.starts == 0 {
        return Err(validation("need at least one optimizer start"));
    }
    check_horizon(init, reference)?;

    let layout = Layout::new(init.nodes(), [init.hip.w0, init.knee.w0], bounds);
    let mut init_repair = 0.0;
    let mut repaired = Vec::with_capacity(2);
    for j in init.joints() {
        let (plan, penalty) = VelocityPlan::repaired(j.nodes.clone(), j.w0, &j.w, &j.alpha, bounds)?;
        init_repair += penalty;
        repaired.push(plan);
    }
    let knee = repaired.pop().expect("two joints");
    let hip = repaired.pop().expect("two joints");
    let init_plan = LegPlan { hip, knee };
    let x0 = layout.encode(&init_plan);
    let initial_cost = plan_cost(p, &init_plan, reference, w)?;

    let u0 = layout.to_unit(&x0);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts = vec![u0.clone()];
    for _ in 1..opts.starts {
        starts.push(
            u0.iter()
                .map(|&v| (v + rng.gen_range(-opts.perturbation..=opts.perturbation)).clamp(0.0, 1.0))
                .collect(),
        );
    }

    let nm = NelderMeadOptions {
        max_evals: opts.max_evals,
        f_tol: opts.f_tol,
        x_tol: opts.x_tol,
        ..Default::default()
    };
    let dim = layout.free.len();
    let lo = vec![0.0; dim];
    let hi = vec![1.0; dim];
    let run = |start: &Vec<f64>| {
        let objective = |u: &[f64]| {
            let x = layout.from_unit(&x0, u);
            match layout.plan(&x).and_then(|plan| plan_cost(p, &plan, reference, w)) {
                Ok(c) => c,
                Err(_) => f64::INFINITY,
            }
        };
        minimize_box(objective, start, &lo, &hi, &nm)
    };

    let results: Vec<_> = if opts.parallel && starts.len() > 1 {
        std::thread::scope(|scope| {
            let handles: Vec<_> = starts.iter().map(|s| scope.spawn(|| run(s))).collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("optimizer thread panicked"))
                .collect()
        })
    } else {
        starts.iter().map(run).collect()
    };

    let winning_start = results
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.f.total_cmp(&b.1.f).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .expect("at least one start");
    let best = &results[winning_start];

    let (mut plan, mut cost) = (init_plan.clone(), initial_cost);
    if best.f < initial_cost {
        let x = layout.from_unit(&x0, &best.x);
        plan = layout.plan(&x)?;
        cost = plan_cost(p, &plan, reference, w)?;
    }

    Ok(OptimizeResult {
        plan,
        cost,
        initial_cost,
        trace: best.trace.clone(),
        start_costs: results.iter().map(|r| r.f).collect(),
        winning_start,
        evaluations: results.iter().map(|r| r.evals).sum(),
        converged: best.converged,
        hit_max_evals: !best.converged,
        init_repair,
    })
}
