//! Stabilizability, detectability and Riccati checks along a tracked motion.
//!
//! `cargo run --release --example check_motion`

use sdre_gait::commands::{check_leg, load_legs};
use sdre_gait::config::ProfileSource;
use sdre_gait::RunConfig;

fn main() -> sdre_gait::Result<()> {
    for profile in [ProfileSource::Walk, ProfileSource::Squat] {
        let cfg = RunConfig { profile, ..RunConfig::default() };
        for leg in load_legs(&cfg)? {
            let c = check_leg(&cfg, &leg)?;
            println!(
                "{} {}: {} points, {}",
                leg.label,
                c.leg,
                c.points,
                if c.passed() { "pass" } else { "FAIL" }
            );
            println!(
                "  failures: stabilizable {} / detectable via Q^1/2 {}, full state {}, angles {}",
                c.stabilizable_failures, c.detectable_q_failures, c.detectable_state_failures, c.detectable_angle_failures
            );
            println!(
                "  max CARE residual {:.1e}, max closed-loop Re {:.3}, cond(M) {:.2}..{:.2}",
                c.max_care_residual, c.max_closed_loop_real, c.mass_matrix_cond_min, c.mass_matrix_cond_max
            );
        }
    }
    Ok(())
}
