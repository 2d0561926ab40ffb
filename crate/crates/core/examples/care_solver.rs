//! Algebraic Riccati equation and the Hautus rank tests.
//!
//! `cargo run --example care_solver`

use nalgebra::DMatrix;
use sdre_gait::riccati::{hautus_detectable, hautus_stabilizable, psd_sqrt, solve_care, CareProblem};

fn main() -> sdre_gait::Result<()> {
    // Scalar case with a closed form: P = a + sqrt(a^2 + 1) for b = q = r = 1.
    for a in [0.0, 1.0, -2.0] {
        let m = |v: f64| DMatrix::from_element(1, 1, v);
        let sol = solve_care(&CareProblem::new(m(a), m(1.0), m(1.0), m(1.0))?)?;
        println!("a={a:+}: P={:.15} closed form {:.15}", sol.p[(0, 0)], a + (a * a + 1.0).sqrt());
    }

    // Unstable double integrator with an extra unstable mode.
    let a = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.5]);
    let b = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 1.0]);
    let q = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![10.0, 1.0, 1.0]));
    let r = DMatrix::from_element(1, 1, 0.5);
    println!("stabilizable: {}", hautus_stabilizable(&a, &b));
    println!("detectable through Q^1/2: {}", hautus_detectable(&a, &psd_sqrt(&q)));

    let prob = CareProblem::new(a, b, q, r)?;
    let sol = solve_care(&prob)?;
    println!("P =\n{:.6}", sol.p);
    println!("K = {:.6}", prob.gain(&sol.p)?);
    println!("residual {:.2e}", sol.residual_norm);
    for e in &sol.closed_loop_eigs {
        println!("closed-loop eigenvalue {:.4}{:+.4}i", e.re, e.im);
    }

    // Moving the extra mode out of reach of the input breaks stabilizability.
    let a2 = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
    let b2 = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
    println!("uncontrolled unstable mode stabilizable: {}", hautus_stabilizable(&a2, &b2));
    Ok(())
}
