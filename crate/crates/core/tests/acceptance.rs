//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any failed.
//!
//! `cargo test --test acceptance`

use std::f64::consts::PI;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sdre_gait::commands::{check_leg, load_legs, run_compare};
use sdre_gait::config::{ProfileSource, RunConfig};
use sdre_gait::dynamics::{
    forward_dynamics, inverse_dynamics, mass_matrix, rk4_step, total_energy, JointState, LegParams,
};
use sdre_gait::gait::{select_nodes, GaitProfile, NodeOptions, NodeSequence};
use sdre_gait::param::{
    optimize_plan, LegPlan, OptimizeOptions, PlanBounds, TorqueReference, VelocityPlan, WeightMatrix,
};
use sdre_gait::report::to_degrees;
use sdre_gait::riccati::{hautus_stabilizable, solve_care, CareProblem};
use sdre_gait::sdre::{simulate_tracking, ControlGains, SimOptions};

// Tolerances.
const ROUND_TRIP_TOL: f64 = 1e-10;
const ENERGY_DRIFT_TOL: f64 = 1e-6;
const SCALAR_CARE_TOL: f64 = 1e-12;
const CARE_RESIDUAL_TOL: f64 = 1e-8;
const MIN_SDC_POINTS: usize = 100;
const TRACKING_RMSE_DEG: f64 = 1.0;
const DECOMPOSITION_TOL: f64 = 1e-9;
const PLANTED_COST_RATIO: f64 = 1e-3;

// Runtime budgets (s).
const BUDGET: [f64; 8] = [10.0, 30.0, 20.0, 60.0, 60.0, 120.0, 600.0, 10.0];

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data")
}

fn bundled_profiles() -> Vec<PathBuf> {
    vec![data_dir().join("walk.csv"), data_dir().join("squat.csv")]
}

fn config_for(path: &Path) -> RunConfig {
    RunConfig {
        profile: ProfileSource::File(path.to_path_buf()),
        ..RunConfig::default()
    }
}

fn stem(path: &Path) -> String {
    path.file_stem().unwrap().to_string_lossy().into_owned()
}

fn criterion_1() -> Outcome {
    let p = LegParams::platform();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_round_trip = 0.0f64;
    for _ in 0..1000 {
        let s = JointState::new(
            Vector2::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)),
            Vector2::new(rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0)),
        );
        let tau = Vector2::new(rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0));
        let acc = forward_dynamics(&p, &s, &tau);
        let back = inverse_dynamics(&p, &s.theta, &s.omega, &acc);
        worst_round_trip = worst_round_trip.max((back - tau).amax() / tau.amax().max(1.0));
    }
    ensure(worst_round_trip < ROUND_TRIP_TOL, || format!("round trip error {worst_round_trip:e}"))?;

    let mut min_eig = f64::INFINITY;
    for _ in 0..1000 {
        let th = Vector2::new(rng.gen_range(-PI..PI), rng.gen_range(-PI..PI));
        let m = mass_matrix(&p, &th);
        ensure(m[(0, 1)] == m[(1, 0)], || format!("M not symmetric at {th:?}"))?;
        min_eig = min_eig.min(m.symmetric_eigenvalues().min());
    }
    ensure(min_eig > 0.0, || format!("M not positive definite, min eigenvalue {min_eig}"))?;

    let mut s = JointState::new(Vector2::new(0.1, 0.1), Vector2::zeros());
    let e0 = total_energy(&p, &s);
    let mut drift = 0.0f64;
    for _ in 0..1000 {
        s = rk4_step(&p, &s, &Vector2::zeros(), 1e-3).map_err(|e| e.to_string())?;
        drift = drift.max(((total_energy(&p, &s) - e0) / e0).abs());
    }
    ensure(drift < ENERGY_DRIFT_TOL, || format!("energy drift {drift:e}"))?;
    Ok(format!(
        "round trip {worst_round_trip:.1e}, min eig(M) {min_eig:.4}, energy drift {drift:.1e}"
    ))
}

fn scalar_care(a: f64, b: f64, q: f64, r: f64) -> Result<f64, String> {
    let m = |v: f64| DMatrix::from_element(1, 1, v);
    let prob = CareProblem::new(m(a), m(b), m(q), m(r)).map_err(|e| e.to_string())?;
    Ok(solve_care(&prob).map_err(|e| e.to_string())?.p[(0, 0)])
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

fn criterion_2() -> Outcome {
    let p0 = scalar_care(0.0, 1.0, 1.0, 1.0)?;
    ensure((p0 - 1.0).abs() < SCALAR_CARE_TOL, || format!("a=0: P={p0}"))?;
    let p1 = scalar_care(1.0, 1.0, 1.0, 1.0)?;
    ensure((p1 - (1.0 + 2f64.sqrt())).abs() < SCALAR_CARE_TOL, || format!("a=1: P={p1}"))?;

    // Entries uniform on [-1, 1]; Q and R get a small identity floor to stay
    // definite. Every stabilizable draw counts, including nearly
    // uncontrollable ones.
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut solved, mut worst_real) = (0, f64::NEG_INFINITY);
    let mut residuals = Vec::with_capacity(200);
    let mut failures = Vec::new();
    while solved < 200 {
        let n = 1 + solved % 8;
        let m = rng.gen_range(1..=n);
        let a = random_matrix(&mut rng, n, n);
        let b = random_matrix(&mut rng, n, m);
        if !hautus_stabilizable(&a, &b) {
            continue;
        }
        let l = random_matrix(&mut rng, n, n);
        let k = random_matrix(&mut rng, m, m);
        let q = &l * l.transpose() + DMatrix::identity(n, n) * 0.01;
        let r = &k * k.transpose() + DMatrix::identity(m, m) * 0.1;
        let prob = CareProblem::new(a, b, q, r).map_err(|e| e.to_string())?;
        let sol = solve_care(&prob).map_err(|e| format!("problem {solved} (n={n}): {e}"))?;
        ensure(sol.max_closed_loop_real() < 0.0, || format!("problem {solved}: closed loop not Hurwitz"))?;
        worst_real = worst_real.max(sol.max_closed_loop_real());
        residuals.push(sol.residual_norm);
        if sol.residual_norm >= CARE_RESIDUAL_TOL {
            // Residual of the solution rounded by one ulp: the attainable
            // floor in double precision.
            let floor = prob.residual_norm(&(&sol.p * (1.0 + f64::EPSILON))).map_err(|e| e.to_string())?;
            failures.push(format!(
                "#{solved} n={n} m={m} |P|={:.1e} residual {:.1e} (1-ulp floor {floor:.1e})",
                sol.p.norm(),
                sol.residual_norm
            ));
        }
        solved += 1;
    }
    let worst = residuals.iter().copied().fold(0.0, f64::max);
    ensure(failures.is_empty(), || {
        format!(
            "{} of 200 residuals >= {CARE_RESIDUAL_TOL:e}: {}",
            failures.len(),
            failures.join("; ")
        )
    })?;
    Ok(format!(
        "scalar P = {p0}, {p1:.15}; 200 random: max residual {worst:.1e}, max Re(eig) {worst_real:.3}"
    ))
}

fn criterion_3() -> Outcome {
    let mut notes = Vec::new();
    for path in bundled_profiles() {
        let cfg = config_for(&path);
        for leg in load_legs(&cfg).map_err(|e| e.to_string())? {
            let c = check_leg(&cfg, &leg).map_err(|e| e.to_string())?;
            let name = format!("{} {}", stem(&path), c.leg);
            ensure(c.points >= MIN_SDC_POINTS, || format!("{name}: only {} points", c.points))?;
            ensure(c.passed(), || format!("{name}: {c:?}"))?;
            notes.push(format!("{name} {} pts", c.points));
        }
    }
    Ok(format!("all verdicts pass ({})", notes.join(", ")))
}

fn track_bundled(check_decomposition: bool) -> Outcome {
    let gains = ControlGains::from_diagonals([500.0, 500.0, 20.0, 20.0, 1.0], [20.0, 20.0], 1.0)
        .map_err(|e| e.to_string())?;
    let mut notes = Vec::new();
    for path in bundled_profiles() {
        let cfg = config_for(&path);
        for leg in load_legs(&cfg).map_err(|e| e.to_string())? {
            let res = simulate_tracking(&cfg.leg, &leg, &gains, &SimOptions::default()).map_err(|e| e.to_string())?;
            let name = format!("{} {}", stem(&path), leg.side.map(|s| s.to_string()).unwrap_or_default());
            if check_decomposition {
                let d = res.diagnostics.max_decomposition_residual;
                ensure(d < DECOMPOSITION_TOL, || format!("{name}: decomposition residual {d:e}"))?;
                notes.push(format!("{name} {d:.1e}"));
            } else {
                let rmse = to_degrees(res.angle_rmse());
                ensure(rmse.iter().all(|v| v.is_finite() && *v < TRACKING_RMSE_DEG), || {
                    format!("{name}: RMSE {rmse:?} deg")
                })?;
                notes.push(format!("{name} {:.4}/{:.4} deg", rmse[0], rmse[1]));
            }
        }
    }
    Ok(notes.join(", "))
}

fn criterion_4() -> Outcome {
    track_bundled(false)
}

fn criterion_5() -> Outcome {
    track_bundled(true).map(|s| format!("max residual per leg: {s}"))
}

fn criterion_6() -> Outcome {
    let p = LegParams::platform();
    let bounds = PlanBounds::default();
    let nodes = NodeSequence::new(vec![0.0, 0.3, 0.7, 1.0]).map_err(|e| e.to_string())?;
    let plan = |w0: f64, w: Vec<f64>, a: Vec<f64>| VelocityPlan::new(nodes.clone(), w0, w, a, bounds);
    let truth = LegPlan::new(
        plan(0.0, vec![1.0, -0.5, 0.2], vec![10.0, -8.0, 5.0]).map_err(|e| e.to_string())?,
        plan(0.5, vec![-1.0, 1.5, 0.0], vec![-15.0, 12.0, -20.0]).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let reference = TorqueReference::from_plan(&p, &truth, Vector2::new(0.1, -0.2), 1e-3).map_err(|e| e.to_string())?;

    // Every parameter scaled by 1 +/- 10%, signs drawn from a fixed seed.
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut perturb = |v: &VelocityPlan| {
        let mut f = || if rng.gen_bool(0.5) { 1.1 } else { 0.9 };
        let w: Vec<f64> = v.w().iter().map(|x| x * f()).collect();
        let a: Vec<f64> = v.alpha().iter().map(|x| x * f()).collect();
        VelocityPlan::repaired(nodes.clone(), v.w0(), &w, &a, bounds).map(|r| r.0)
    };
    let init = LegPlan::new(
        perturb(&truth.hip).map_err(|e| e.to_string())?,
        perturb(&truth.knee).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;

    let opts = OptimizeOptions {
        starts: 5,
        seed: 6,
        ..OptimizeOptions::default()
    };
    let res = optimize_plan(&p, &reference, &WeightMatrix::platform(), &init, &opts).map_err(|e| e.to_string())?;
    let ratio = res.cost / res.initial_cost;
    ensure(ratio < PLANTED_COST_RATIO, || {
        format!("cost {} from {} (ratio {ratio:e})", res.cost, res.initial_cost)
    })?;
    for j in res.plan.joints() {
        ensure(j.w0() >= bounds.w_min && j.w0() <= bounds.w_max, || "w0 out of bounds".into())?;
        ensure(j.w().iter().all(|w| *w >= bounds.w_min && *w <= bounds.w_max), || "w out of bounds".into())?;
        ensure(j.alpha().iter().all(|a| *a >= bounds.alpha_min && *a <= bounds.alpha_max), || {
            "alpha out of bounds".into()
        })?;
        VelocityPlan::new(j.nodes().clone(), j.w0(), j.w().to_vec(), j.alpha().to_vec(), bounds)
            .map_err(|e| format!("recovered plan infeasible: {e}"))?;
    }
    Ok(format!(
        "cost {:.3e} -> {:.3e} (ratio {ratio:.1e}), {} evaluations",
        res.initial_cost, res.cost, res.evaluations
    ))
}

fn read_outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn criterion_7() -> Outcome {
    let path = data_dir().join("walk.csv");
    let (a, b) = (tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?);
    let mut cfg = config_for(&path);
    cfg.optimizer.seed = 7;
    cfg.out_dir = a.path().to_path_buf();
    let report = run_compare(&cfg).map_err(|e| e.to_string())?;
    cfg.out_dir = b.path().to_path_buf();
    run_compare(&cfg).map_err(|e| e.to_string())?;

    let mut notes = Vec::new();
    for r in &report.rows {
        let vals = [r.sdre_angle_rmse_deg, r.plan_angle_rmse_deg, r.sdre_torque_rmse, r.plan_torque_rmse];
        let name = format!("{} {}", r.side, r.joint);
        ensure(vals.iter().all(|v| v.is_finite()), || format!("{name}: non-finite RMSE {vals:?}"))?;
        ensure(r.plan_angle_rmse_deg >= r.sdre_angle_rmse_deg, || format!("{name}: angle ordering {vals:?}"))?;
        ensure(r.plan_torque_rmse >= r.sdre_torque_rmse, || format!("{name}: torque ordering {vals:?}"))?;
        notes.push(format!("{name} {:.3}>={:.3} deg", r.plan_angle_rmse_deg, r.sdre_angle_rmse_deg));
    }
    let (fa, fb) = (read_outputs(a.path()), read_outputs(b.path()));
    ensure(fa.len() > 0 && fa == fb, || "outputs differ between identical runs".into())?;
    Ok(format!("{}; {} output files byte-identical", notes.join(", "), fa.len()))
}

fn criterion_8() -> Outcome {
    let dt = 1e-3;
    let sine = GaitProfile::from_fn("sine", dt, 1.0, |t| Vector2::new((2.0 * PI * t).sin(), 0.0))
        .map_err(|e| e.to_string())?;
    let nodes = select_nodes(&sine, &NodeOptions::default()).map_err(|e| e.to_string())?;
    let t = nodes.times();
    ensure(t.len() == 4 && t[0] == 0.0 && t[3] == 1.0, || format!("nodes {t:?}"))?;
    ensure((t[1] - 0.25).abs() <= dt + 1e-12 && (t[2] - 0.75).abs() <= dt + 1e-12, || {
        format!("interior nodes {:?} not at 0.25 / 0.75", &t[1..3])
    })?;

    let ramp = GaitProfile::from_fn("ramp", dt, 1.0, |t| Vector2::new(0.5 * t, -0.3 * t)).map_err(|e| e.to_string())?;
    let flat = select_nodes(&ramp, &NodeOptions::default()).map_err(|e| e.to_string())?;
    ensure(flat.times() == [0.0, 1.0], || format!("constant velocity gave {:?}", flat.times()))?;
    Ok(format!("sine nodes {:?}; constant velocity {:?}", t, flat.times()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("dynamics identities", criterion_1),
        ("CARE solver oracles", criterion_2),
        ("stabilizability/detectability along bundled profiles", criterion_3),
        ("SDRE tracking RMSE on bundled profiles", criterion_4),
        ("tracking error decomposition identity", criterion_5),
        ("planted plan recovery", criterion_6),
        ("plan vs SDRE ordering and deterministic report", criterion_7),
        ("node selection", criterion_8),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        let outcome = outcome.and_then(|note| {
            if secs <= BUDGET[i] {
                Ok(note)
            } else {
                Err(format!("took {secs:.1} s, budget {} s ({note})", BUDGET[i]))
            }
        });
        match outcome {
            Ok(note) => println!("criterion {} PASS  {name} [{secs:.1} s]: {note}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} FAIL  {name} [{secs:.1} s]: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
