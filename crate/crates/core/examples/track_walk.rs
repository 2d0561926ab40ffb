//! SDRE tracking of a synthetic walking cycle, starting off the profile.
//!
//! `cargo run --release --example track_walk [out.csv]`

use std::fs::File;

use nalgebra::Vector2;
use sdre_gait::gait::synthetic_walk;
use sdre_gait::report::to_degrees;
use sdre_gait::{simulate_tracking, ControlGains, LegParams, SimOptions};

fn main() -> sdre_gait::Result<()> {
    let p = LegParams::platform();
    let profile = synthetic_walk(1e-3)?;
    let gains = ControlGains::platform();

    for offset in [0.0, 0.05, 0.2] {
        let opts = SimOptions {
            initial_angle_error: Vector2::new(offset, -offset),
            ..SimOptions::default()
        };
        let res = simulate_tracking(&p, &profile, &gains, &opts)?;
        let rmse = to_degrees(res.angle_rmse());
        let peak = res.peak_torque();
        let settled = res.err.iter().position(|e| e.amax() < 1e-3).map(|i| res.t[i]);
        println!(
            "offset {offset:.2} rad: RMSE hip {:.4} knee {:.4} deg, peak torque ({:.2}, {:.2}) N·m, within 1 mrad at {:?} s",
            rmse[0], rmse[1], peak[0], peak[1], settled
        );
        println!(
            "  {} CARE solves, max residual {:.1e}, max closed-loop Re {:.3}",
            res.diagnostics.care_solves, res.diagnostics.max_care_residual, res.diagnostics.max_closed_loop_real
        );
        if offset == 0.05 {
            if let Some(path) = std::env::args().nth(1) {
                res.write_csv(File::create(&path)?)?;
                println!("  wrote {path}");
            }
        }
    }
    Ok(())
}
