//! Fits ramp-and-hold velocity commands to the torque of a tracked squat and
//! prints the motor command table.
//!
//! `cargo run --release --example fit_velocity_plan`

use sdre_gait::gait::{select_nodes, synthetic_squat, NodeOptions};
use sdre_gait::param::{initial_plan, optimize_plan, plan_cost, OptimizeOptions, PlanBounds, TorqueReference, WeightMatrix};
use sdre_gait::{simulate_tracking, ControlGains, LegParams, SimOptions};

fn main() -> sdre_gait::Result<()> {
    let p = LegParams::platform();
    let profile = synthetic_squat(1e-3)?;
    let tracking = simulate_tracking(&p, &profile, &ControlGains::platform(), &SimOptions::default())?;
    let reference = TorqueReference::from_tracking(&tracking)?;

    let nodes = select_nodes(&profile, &NodeOptions::default())?;
    let bounds = PlanBounds::default();
    let weights = WeightMatrix::platform();
    let init = initial_plan(&nodes, &reference, bounds)?;
    println!("{} nodes, initial cost {:.4}", nodes.len(), plan_cost(&p, &init, &reference, &weights)?);

    let opts = OptimizeOptions { starts: 3, max_evals: 10_000, ..OptimizeOptions::default() };
    let res = optimize_plan(&p, &reference, &weights, &init, &opts)?;
    println!(
        "fitted cost {:.4} after {} evaluations (start {} of {} won, costs {:?})",
        res.cost,
        res.evaluations,
        res.winning_start,
        res.start_costs.len(),
        res.start_costs.iter().map(|c| format!("{c:.4}")).collect::<Vec<_>>()
    );

    for (name, joint) in [("hip", &res.plan.hip), ("knee", &res.plan.knee)] {
        println!("{name}: start velocity {:+.4} rad/s", joint.w0());
        for c in joint.commands() {
            println!("  t0 {:.3} s  ramp at {:+8.3} rad/s^2 to {:+.4} rad/s", c.t0, c.alpha, c.w);
        }
    }
    Ok(())
}
