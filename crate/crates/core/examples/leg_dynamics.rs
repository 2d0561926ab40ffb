//! Forward and inverse dynamics of the two-link leg, and an unforced swing.
//!
//! `cargo run --example leg_dynamics`

use nalgebra::Vector2;
use sdre_gait::dynamics::{
    forward_dynamics, gravity_matrix, inverse_dynamics, mass_matrix, rk4_step, total_energy,
};
use sdre_gait::{JointState, LegParams};

fn main() -> sdre_gait::Result<()> {
    let p = LegParams::platform();
    let theta = Vector2::new(0.4, -0.3);
    let omega = Vector2::new(1.0, -2.0);

    let m = mass_matrix(&p, &theta);
    let eig = m.symmetric_eigenvalues();
    println!("M = [[{:.5}, {:.5}], [{:.5}, {:.5}]]", m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    println!("eigenvalues {:.5}, {:.5}", eig[0], eig[1]);
    // Gravity enters as a state-dependent matrix times the angles.
    let g = gravity_matrix(&p, &theta) * theta;
    println!("gravity torque ({:.5}, {:.5})", g[0], g[1]);

    let accel = Vector2::new(3.0, -5.0);
    let tau = inverse_dynamics(&p, &theta, &omega, &accel);
    let back = forward_dynamics(&p, &JointState::new(theta, omega), &tau);
    println!("torque for accel (3, -5): ({:.5}, {:.5})", tau[0], tau[1]);
    println!("round trip error {:.2e}", (back - accel).amax());

    // Hanging from a small offset with zero torque: energy stays put.
    let mut s = JointState::new(Vector2::new(0.3, 0.1), Vector2::zeros());
    let e0 = total_energy(&p, &s);
    for step in 1..=2000 {
        s = rk4_step(&p, &s, &Vector2::zeros(), 1e-3)?;
        if step % 500 == 0 {
            println!(
                "t={:.1}s theta=({:+.4}, {:+.4}) rel. energy drift {:.1e}",
                step as f64 * 1e-3,
                s.theta[0],
                s.theta[1],
                (total_energy(&p, &s) - e0) / e0
            );
        }
    }
    Ok(())
}
