//! End-to-end pipelines behind the `sdre-gait` subcommands.
//!
//! Each `run_*` function loads the configured motion, processes every leg
//! in it and writes its outputs into `RunConfig::out_dir`. Outputs depend
//! only on the configuration, so identical configurations give
//! byte-identical files.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, Vector2};
use serde::Serialize;

use crate::config::{ProfileSource, ReferenceSource, RunConfig};
use crate::dynamics::mass_matrix;
use crate::error::{validation, Error, Result};
use crate::gait::{
    load_profiles, select_nodes, synthetic_squat_pair, synthetic_walk_pair, write_profiles, GaitProfile,
    NodeSequence,
};
use crate::param::{initial_plan, optimize_plan, LegPlan, OptimizeResult, PlanBounds, TorqueReference};
use crate::report::{to_degrees, write_torque_series, ComparisonReport, MethodErrors};
use crate::riccati::{hautus_detectable, hautus_stabilizable, psd_sqrt, solve_care};
use crate::sdre::{build_sdc, care_problem, simulate_tracking, ErrorState, TrackingDiagnostics, TrackingResult};

/// Loads every leg of the configured motion, sampled on the simulation grid.
pub fn load_legs(cfg: &RunConfig) -> Result<Vec<GaitProfile>> {
    let dt = cfg.sim_options()?.dt;
    let legs = match &cfg.profile {
        ProfileSource::Walk => synthetic_walk_pair(dt)?,
        ProfileSource::Squat => synthetic_squat_pair(dt)?,
        ProfileSource::File(p) => load_profiles(p)?,
    };
    legs.into_iter()
        .map(|leg| if leg.is_uniform(dt) { Ok(leg) } else { leg.resample(dt) })
        .collect()
}

/// `left`, `right`, or `leg` for single-leg files.
pub fn leg_name(profile: &GaitProfile) -> String {
    profile.side.map(|s| s.to_string()).unwrap_or_else(|| "leg".into())
}

fn create_out_dir(cfg: &RunConfig) -> Result<&Path> {
    fs::create_dir_all(&cfg.out_dir)?;
    Ok(&cfg.out_dir)
}

fn write_file(dir: &Path, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<PathBuf> {
    let path = dir.join(name);
    let mut w = BufWriter::new(File::create(&path)?);
    body(&mut w)?;
    w.flush()?;
    Ok(path)
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    write_file(dir, name, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(|e| Error::Io(e.into()))?;
        writeln!(w)?;
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// simulate

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LegTrackingSummary {
    pub leg: String,
    pub samples: usize,
    pub duration: f64,
    pub angle_rmse_deg: [f64; 2],
    pub peak_torque: [f64; 2],
    pub diagnostics: TrackingDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulateSummary {
    pub config_hash: String,
    pub profile: String,
    pub legs: Vec<LegTrackingSummary>,
}

pub fn track_leg(cfg: &RunConfig, profile: &GaitProfile) -> Result<TrackingResult> {
    simulate_tracking(&cfg.leg, profile, &cfg.gains()?, &cfg.sim_options()?)
}

fn tracking_summary(name: &str, res: &TrackingResult) -> LegTrackingSummary {
    let rmse = to_degrees(res.angle_rmse());
    let peak = res.peak_torque();
    LegTrackingSummary {
        leg: name.to_string(),
        samples: res.len(),
        duration: res.horizon(),
        angle_rmse_deg: [rmse[0], rmse[1]],
        peak_torque: [peak[0], peak[1]],
        diagnostics: res.diagnostics.clone(),
    }
}

/// SDRE tracking of every leg. Writes `tracking_<leg>.csv` and
/// `summary.json`.
pub fn run_simulate(cfg: &RunConfig) -> Result<SimulateSummary> {
    cfg.validate()?;
    let legs = load_legs(cfg)?;
    let dir = create_out_dir(cfg)?;
    let mut summary = SimulateSummary {
        config_hash: cfg.hash(),
        profile: cfg.profile.to_string(),
        legs: Vec::new(),
    };
    for leg in &legs {
        let name = leg_name(leg);
        let res = track_leg(cfg, leg)?;
        write_file(dir, &format!("tracking_{name}.csv"), |w| res.write_csv(w))?;
        summary.legs.push(tracking_summary(&name, &res));
    }
    write_json(dir, "summary.json", &summary)?;
    Ok(summary)
}

// ---------------------------------------------------------------------------
// parameterize

/// Torque reference of one leg according to the configured source.
pub fn reference_for(cfg: &RunConfig, profile: &GaitProfile, tracking: Option<&TrackingResult>) -> Result<TorqueReference> {
    match cfg.reference {
        ReferenceSource::Human => TorqueReference::from_profile(&cfg.leg, profile),
        ReferenceSource::Sdre => match tracking {
            Some(t) => TorqueReference::from_tracking(t),
            None => TorqueReference::from_tracking(&track_leg(cfg, profile)?),
        },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LegParameterization {
    pub nodes: NodeSequence,
    pub reference: TorqueReference,
    pub result: OptimizeResult,
}

/// Picks nodes on the motion and fits a velocity plan to `reference`.
pub fn parameterize_leg(cfg: &RunConfig, profile: &GaitProfile, reference: TorqueReference) -> Result<LegParameterization> {
    cfg.bounds.validate()?;
    let nodes = select_nodes(profile, &cfg.node_options())?;
    let init = initial_plan(&nodes, &reference, cfg.bounds)?;
    let result = optimize_plan(&cfg.leg, &reference, &cfg.weights()?, &init, &cfg.optimizer)?;
    Ok(LegParameterization {
        nodes,
        reference,
        result,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanDocument {
    pub config_hash: String,
    pub leg: String,
    pub reference: ReferenceSource,
    pub bounds: PlanBounds,
    pub node_times: Vec<f64>,
    pub segments: usize,
    pub cost: f64,
    pub initial_cost: f64,
    pub evaluations: usize,
    pub converged: bool,
    pub hit_max_evals: bool,
    pub winning_start: usize,
    pub start_costs: Vec<f64>,
    pub init_repair: f64,
    pub plan: LegPlan,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterizeSummary {
    pub config_hash: String,
    pub legs: Vec<PlanDocument>,
}

impl ParameterizeSummary {
    /// Legs whose optimizer ran out of evaluations.
    pub fn warnings(&self) -> Vec<String> {
        self.legs
            .iter()
            .filter(|d| d.hit_max_evals)
            .map(|d| {
                format!(
                    "{} leg: evaluation budget exhausted before convergence; plan is the best found (cost {:.6})",
                    d.leg, d.cost
                )
            })
            .collect()
    }
}

fn write_plan_outputs(dir: &Path, doc: &PlanDocument, trace: &[f64]) -> Result<()> {
    let name = &doc.leg;
    write_file(dir, &format!("plan_{name}.csv"), |w| doc.plan.write_csv(w))?;
    write_json(dir, &format!("plan_{name}.json"), doc)?;
    write_file(dir, &format!("commands_{name}.csv"), |w| doc.plan.write_commands_csv(w))?;
    write_file(dir, &format!("cost_trace_{name}.csv"), |w| {
        writeln!(w, "iteration,cost")?;
        for (i, c) in trace.iter().enumerate() {
            writeln!(w, "{i},{c}")?;
        }
        Ok(())
    })?;
    Ok(())
}

fn plan_document(cfg: &RunConfig, name: &str, lp: &LegParameterization) -> PlanDocument {
    let r = &lp.result;
    PlanDocument {
        config_hash: cfg.hash(),
        leg: name.to_string(),
        reference: cfg.reference,
        bounds: cfg.bounds,
        node_times: lp.nodes.times().to_vec(),
        segments: lp.nodes.segments(),
        cost: r.cost,
        initial_cost: r.initial_cost,
        evaluations: r.evaluations,
        converged: r.converged,
        hit_max_evals: r.hit_max_evals,
        winning_start: r.winning_start,
        start_costs: r.start_costs.clone(),
        init_repair: r.init_repair,
        plan: r.plan.clone(),
    }
}

/// Velocity plans for every leg. Writes `plan_<leg>.csv`,
/// `plan_<leg>.json`, `commands_<leg>.csv` and `cost_trace_<leg>.csv`.
pub fn run_parameterize(cfg: &RunConfig) -> Result<ParameterizeSummary> {
    cfg.validate()?;
    let legs = load_legs(cfg)?;
    let dir = create_out_dir(cfg)?;
    let mut summary = ParameterizeSummary {
        config_hash: cfg.hash(),
        legs: Vec::new(),
    };
    for leg in &legs {
        let name = leg_name(leg);
        let reference = reference_for(cfg, leg, None)?;
        let lp = parameterize_leg(cfg, leg, reference)?;
        let doc = plan_document(cfg, &name, &lp);
        write_plan_outputs(dir, &doc, &lp.result.trace)?;
        summary.legs.push(doc);
    }
    Ok(summary)
}

// ---------------------------------------------------------------------------
// compare

/// Torques and motions of both methods on one leg, on the motion's grid.
#[derive(Debug, Clone)]
pub struct LegComparison {
    pub leg: String,
    pub t: Vec<f64>,
    pub tau_ref: Vec<Vector2<f64>>,
    pub tracking: TrackingResult,
    pub plan_theta: Vec<Vector2<f64>>,
    pub plan_tau: Vec<Vector2<f64>>,
    pub sdre: MethodErrors,
    pub plan: MethodErrors,
    pub parameterization: LegParameterization,
}

/// Runs both methods on one leg and scores them against the recorded
/// motion: angles against the profile, torques against its inverse
/// dynamics.
pub fn compare_leg(cfg: &RunConfig, profile: &GaitProfile) -> Result<LegComparison> {
    let tracking = track_leg(cfg, profile)?;
    if tracking.t != profile.t {
        return Err(Error::DomainMismatch("tracking and profile grids differ".into()));
    }
    let reference = reference_for(cfg, profile, Some(&tracking))?;
    let theta0 = reference.theta0();
    let lp = parameterize_leg(cfg, profile, reference)?;
    let plan = &lp.result.plan;
    let (plan_theta, _, _) = plan.motion_at(&theta0, &profile.t)?;
    let plan_tau = plan.torques_at(&cfg.leg, &theta0, &profile.t)?;
    let tau_ref = profile.feedforward_torques(&cfg.leg);
    let sdre = MethodErrors::between(&profile.theta, &tau_ref, &tracking.theta, &tracking.tau)?;
    let plan_err = MethodErrors::between(&profile.theta, &tau_ref, &plan_theta, &plan_tau)?;
    Ok(LegComparison {
        leg: leg_name(profile),
        t: profile.t.clone(),
        tau_ref,
        tracking,
        plan_theta,
        plan_tau,
        sdre,
        plan: plan_err,
        parameterization: lp,
    })
}

/// SDRE against the velocity plan for every leg. Writes `comparison.csv`,
/// `comparison.txt` and `torque_<leg>.csv`, plus the plan files of
/// [`run_parameterize`].
pub fn run_compare(cfg: &RunConfig) -> Result<ComparisonReport> {
    cfg.validate()?;
    let legs = load_legs(cfg)?;
    let dir = create_out_dir(cfg)?;
    let mut report = ComparisonReport::new(cfg.hash());
    for leg in &legs {
        let c = compare_leg(cfg, leg)?;
        report.push_leg(&leg.label, &c.leg, &c.sdre, &c.plan);
        write_file(dir, &format!("torque_{}.csv", c.leg), |w| {
            write_torque_series(w, &c.t, &c.tau_ref, &c.tracking.tau, &c.plan_tau)
        })?;
        let doc = plan_document(cfg, &c.leg, &c.parameterization);
        write_plan_outputs(dir, &doc, &c.parameterization.result.trace)?;
    }
    write_file(dir, "comparison.csv", |w| report.write_csv(w))?;
    write_file(dir, "comparison.txt", |w| {
        w.write_all(report.to_text().as_bytes())?;
        Ok(())
    })?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// check

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LegCheck {
    pub leg: String,
    pub points: usize,
    pub stabilizable_failures: usize,
    /// Failures of detectability through `Q^(1/2)`.
    pub detectable_q_failures: usize,
    /// Failures of detectability through the full state.
    pub detectable_state_failures: usize,
    /// Failures of detectability through the joint angles alone.
    pub detectable_angle_failures: usize,
    pub max_care_residual: f64,
    pub max_closed_loop_real: f64,
    pub mass_matrix_cond_min: f64,
    pub mass_matrix_cond_max: f64,
}

impl LegCheck {
    pub fn passed(&self) -> bool {
        self.stabilizable_failures == 0
            && self.detectable_q_failures == 0
            && self.detectable_state_failures == 0
            && self.detectable_angle_failures == 0
            && self.max_care_residual < CARE_RESIDUAL_LIMIT
            && self.max_closed_loop_real < 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub config_hash: String,
    pub passed: bool,
    pub legs: Vec<LegCheck>,
}

/// Largest acceptable CARE residual in a check.
pub const CARE_RESIDUAL_LIMIT: f64 = 1e-8;

/// Minimum number of SDC points examined per leg, when the motion has that
/// many samples.
pub const MIN_CHECK_POINTS: usize = 200;

fn angle_output() -> DMatrix<f64> {
    let mut c = DMatrix::zeros(2, 5);
    c[(0, 0)] = 1.0;
    c[(1, 1)] = 1.0;
    c
}

/// Stabilizability, detectability and CARE checks at SDC points visited by
/// the tracking simulation of one leg.
pub fn check_leg(cfg: &RunConfig, profile: &GaitProfile) -> Result<LegCheck> {
    let gains = cfg.gains()?;
    let tracking = track_leg(cfg, profile)?;
    let q_sqrt = psd_sqrt(&DMatrix::from_column_slice(5, 5, gains.q.as_slice()));
    let full = DMatrix::identity(5, 5);
    let angles = angle_output();
    let n = tracking.len();
    let stride = (n / MIN_CHECK_POINTS).max(1);

    let mut out = LegCheck {
        leg: leg_name(profile),
        points: 0,
        stabilizable_failures: 0,
        detectable_q_failures: 0,
        detectable_state_failures: 0,
        detectable_angle_failures: 0,
        max_care_residual: 0.0,
        max_closed_loop_real: f64::NEG_INFINITY,
        mass_matrix_cond_min: f64::INFINITY,
        mass_matrix_cond_max: 0.0,
    };
    for i in (0..n).step_by(stride) {
        let x = ErrorState::from_vector(&tracking.x[i]);
        let model = build_sdc(&cfg.leg, &x, &profile.desired(i), &gains);
        let (a, b) = (model.a_dyn(), model.b_dyn());
        out.points += 1;
        if !hautus_stabilizable(&a, &b) {
            out.stabilizable_failures += 1;
        }
        out.detectable_q_failures += usize::from(!hautus_detectable(&a, &q_sqrt));
        out.detectable_state_failures += usize::from(!hautus_detectable(&a, &full));
        out.detectable_angle_failures += usize::from(!hautus_detectable(&a, &angles));
        match solve_care(&care_problem(&model, &gains)?) {
            Ok(sol) => {
                out.max_care_residual = out.max_care_residual.max(sol.residual_norm);
                out.max_closed_loop_real = out.max_closed_loop_real.max(sol.max_closed_loop_real());
            }
            Err(Error::NotStabilizable) => {}
            Err(e) => return Err(e),
        }
        let eig = mass_matrix(&cfg.leg, &tracking.theta[i]).symmetric_eigenvalues();
        let cond = eig.max() / eig.min();
        out.mass_matrix_cond_min = out.mass_matrix_cond_min.min(cond);
        out.mass_matrix_cond_max = out.mass_matrix_cond_max.max(cond);
    }
    Ok(out)
}

/// Runs [`check_leg`] on every leg and writes `check.json`. The report is
/// written even when a check fails; the returned error then names the
/// first failure.
pub fn run_check(cfg: &RunConfig) -> Result<CheckReport> {
    cfg.validate()?;
    let legs = load_legs(cfg)?;
    let dir = create_out_dir(cfg)?;
    let checks = legs.iter().map(|l| check_leg(cfg, l)).collect::<Result<Vec<_>>>()?;
    let report = CheckReport {
        config_hash: cfg.hash(),
        passed: checks.iter().all(LegCheck::passed),
        legs: checks,
    };
    write_json(dir, "check.json", &report)?;
    if report.legs.iter().any(|l| l.stabilizable_failures > 0) {
        return Err(Error::NotStabilizable);
    }
    if let Some(l) = report.legs.iter().find(|l| !l.passed()) {
        return Err(Error::NumericalFailure(format!("{} leg failed the detectability or CARE checks", l.leg)));
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// gen-profile

/// Built-in synthetic motions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Motion {
    Walk,
    Squat,
}

impl std::str::FromStr for Motion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "walk" => Ok(Self::Walk),
            "squat" => Ok(Self::Squat),
            other => Err(validation(format!("unknown motion `{other}` (expected walk or squat)"))),
        }
    }
}

/// Both legs of a synthetic motion as a two-leg profile CSV.
pub fn gen_profile<W: Write>(motion: Motion, dt: f64, out: W) -> Result<()> {
    let legs = match motion {
        Motion::Walk => synthetic_walk_pair(dt)?,
        Motion::Squat => synthetic_squat_pair(dt)?,
    };
    let mut w = BufWriter::new(out);
    writeln!(w, "# synthetic {}, sampled every {dt} s, angles in rad", legs[0].label)?;
    write_profiles(&legs, &mut w)?;
    w.flush()?;
    Ok(())
}
