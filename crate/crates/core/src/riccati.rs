//! Continuous-time algebraic Riccati equation
//!
//! ```text
//! P A + A^T P - P B R^-1 B^T P + Q = 0
//! ```
//!
//! and the Hautus rank tests for stabilizability and detectability.
//!
//! The stabilizing solution is read off the stable invariant subspace of the
//! Hamiltonian `H = [[A, -B R^-1 B^T], [-Q, -A^T]]`. The subspace is obtained
//! from the matrix sign function of `H` (scaled Newton iteration), and the
//! result is then polished with Newton-Kleinman steps, each of which solves a
//! Lyapunov equation.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{validation, Error, Result};

/// Eigenvalues with real part at or above this value count as "not stable"
/// in the Hautus tests.
pub const MARGINAL_EIG_TOL: f64 = -1e-10;

/// Relative singular-value threshold for the Hautus rank tests.
pub const RANK_REL_TOL: f64 = 1e-8;

const SIGN_MAX_ITER: usize = 100;
const NEWTON_KLEINMAN_STEPS: usize = 4;

#[derive(Debug, Clone)]
pub struct CareProblem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl CareProblem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(validation(format!("A must be square, got {}x{}", a.nrows(), a.ncols())));
        }
        if b.nrows() != n || b.ncols() == 0 {
            return Err(validation(format!("B must be {n}xm, got {}x{}", b.nrows(), b.ncols())));
        }
        let m = b.ncols();
        if q.shape() != (n, n) {
            return Err(validation(format!("Q must be {n}x{n}")));
        }
        if r.shape() != (m, m) {
            return Err(validation(format!("R must be {m}x{m}")));
        }
        let all = a.iter().chain(b.iter()).chain(q.iter()).chain(r.iter());
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(validation("CARE data contains non-finite entries"));
        }
        if !is_symmetric(&q, 1e-10) || q.clone().symmetric_eigenvalues().min() < -1e-10 {
            return Err(validation("Q must be symmetric positive semi-definite"));
        }
        if !is_symmetric(&r, 1e-10) || r.clone().symmetric_eigenvalues().min() <= 0.0 {
            return Err(validation("R must be symmetric positive definite"));
        }
        Ok(Self { a, b, q, r })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// `B R^-1 B^T`.
    fn input_gramian(&self) -> Result<DMatrix<f64>> {
        let r_inv = spd_inverse(&self.r)?;
        Ok(&self.b * r_inv * self.b.transpose())
    }

    /// Frobenius norm of the Riccati residual at `p`.
    pub fn residual_norm(&self, p: &DMatrix<f64>) -> Result<f64> {
        let s = self.input_gramian()?;
        let res = p * &self.a + self.a.transpose() * p - p * s * p + &self.q;
        Ok(res.norm())
    }

    /// Feedback gain `K = R^-1 B^T P`.
    pub fn gain(&self, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(spd_inverse(&self.r)? * self.b.transpose() * p)
    }

    pub fn closed_loop(&self, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(&self.a - &self.b * self.gain(p)?)
    }
}

#[derive(Debug, Clone)]
pub struct CareSolution {
    pub p: DMatrix<f64>,
    pub residual_norm: f64,
    pub closed_loop_eigs: Vec<Complex64>,
}

impl CareSolution {
    pub fn max_closed_loop_real(&self) -> f64 {
        self.closed_loop_eigs
            .iter()
            .map(|e| e.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Stabilizing solution of the CARE.
pub fn solve_care(problem: &CareProblem) -> Result<CareSolution> {
    if !hautus_stabilizable(&problem.a, &problem.b) {
        return Err(Error::NotStabilizable);
    }
    let p0 = hamiltonian_sign_solution(problem)?;
    let p = newton_kleinman(problem, p0)?;
    finish(problem, p)
}

/// Newton-Kleinman iteration started from `initial`, which must yield a
/// stabilizing gain. Converges to the same unique stabilizing solution that
/// [`solve_care`] returns.
pub fn refine_care(problem: &CareProblem, initial: &DMatrix<f64>) -> Result<CareSolution> {
    let n = problem.dim();
    if initial.shape() != (n, n) {
        return Err(validation(format!("initial P must be {n}x{n}")));
    }
    let cl = problem.closed_loop(initial)?;
    if max_real_eig(&cl) >= 0.0 {
        return Err(Error::NumericalFailure(
            "initial guess does not give a stabilizing gain".into(),
        ));
    }
    let mut p = symmetrize(initial);
    for _ in 0..50 {
        let next = kleinman_step(problem, &p)?;
        let step = (&next - &p).norm();
        p = next;
        if step <= 1e-13 * p.norm().max(1.0) {
            break;
        }
    }
    let p = newton_kleinman(problem, p)?;
    finish(problem, p)
}

fn finish(problem: &CareProblem, p: DMatrix<f64>) -> Result<CareSolution> {
    let residual_norm = problem.residual_norm(&p)?;
    let cl = problem.closed_loop(&p)?;
    let closed_loop_eigs: Vec<Complex64> = cl.complex_eigenvalues().iter().copied().collect();
    let sol = CareSolution {
        p,
        residual_norm,
        closed_loop_eigs,
    };
    if !residual_norm.is_finite() || sol.max_closed_loop_real() >= 0.0 {
        return Err(Error::NumericalFailure(format!(
            "CARE solution is not stabilizing (residual {residual_norm:.3e}, max Re(eig) {:.3e})",
            sol.max_closed_loop_real()
        )));
    }
    Ok(sol)
}

fn hamiltonian_sign_solution(problem: &CareProblem) -> Result<DMatrix<f64>> {
    let n = problem.dim();
    let s = problem.input_gramian()?;
    let mut h = DMatrix::<f64>::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(&problem.a);
    h.view_mut((0, n), (n, n)).copy_from(&(-&s));
    h.view_mut((n, 0), (n, n)).copy_from(&(-&problem.q));
    h.view_mut((n, n), (n, n)).copy_from(&(-problem.a.transpose()));

    let w = matrix_sign(h)?;

    // sign(H) [I; P] = -[I; P]  =>  [W12; W22 + I] P = -[W11 + I; W21]
    let eye = DMatrix::<f64>::identity(n, n);
    let mut lhs = DMatrix::<f64>::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&w.view((0, n), (n, n)));
    lhs.view_mut((n, 0), (n, n)).copy_from(&(w.view((n, n), (n, n)) + &eye));
    let mut rhs = DMatrix::<f64>::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n)).copy_from(&(-(w.view((0, 0), (n, n)) + &eye)));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-w.view((n, 0), (n, n))));

    let svd = lhs.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-12 * smax) {
        return Err(Error::NumericalFailure(
            "stable invariant subspace is not a graph over the state space".into(),
        ));
    }
    let p = svd
        .solve(&rhs, 0.0)
        .map_err(|e| Error::NumericalFailure(e.to_string()))?;
    Ok(symmetrize(&p))
}

/// Matrix sign function by Newton iteration with determinant scaling.
fn matrix_sign(mut z: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let dim = z.nrows() as f64;
    for _ in 0..SIGN_MAX_ITER {
        let lu = z.clone().lu();
        let inv = lu
            .try_inverse()
            .ok_or_else(|| Error::NumericalFailure("Hamiltonian has eigenvalues on the imaginary axis".into()))?;
        let det = z.clone().lu().determinant().abs();
        let c = if det.is_finite() && det > 0.0 {
            det.powf(1.0 / dim)
        } else {
            1.0
        };
        let next = (&z / c + &inv * c) * 0.5;
        let change = (&next - &z).norm();
        let scale = next.norm();
        z = next;
        if !scale.is_finite() {
            break;
        }
        if change <= 1e-13 * scale {
            return Ok(z);
        }
    }
    // Accept a converged-enough iterate: Z^2 should be the identity.
    let defect = (&z * &z - DMatrix::<f64>::identity(z.nrows(), z.ncols())).norm();
    if defect.is_finite() && defect < 1e-8 {
        Ok(z)
    } else {
        Err(Error::NumericalFailure(format!(
            "matrix sign iteration did not converge (|Z^2 - I| = {defect:.3e})"
        )))
    }
}

/// A few Newton-Kleinman steps, each kept only while the residual improves.
fn newton_kleinman(problem: &CareProblem, mut p: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut best = problem.residual_norm(&p)?;
    for _ in 0..NEWTON_KLEINMAN_STEPS {
        if best == 0.0 {
            break;
        }
        let Ok(next) = kleinman_step(problem, &p) else {
            break;
        };
        let res = problem.residual_norm(&next)?;
        if !(res < best) {
            break;
        }
        best = res;
        p = next;
    }
    Ok(p)
}

fn kleinman_step(problem: &CareProblem, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = problem.gain(p)?;
    let ak = &problem.a - &problem.b * &k;
    let rhs = &problem.q + k.transpose() * &problem.r * &k;
    Ok(symmetrize(&solve_lyapunov(&ak, &rhs)?))
}

/// Solves `A^T X + X A + C = 0` by the Kronecker-product linear system.
/// Intended for the small state dimensions used here.
pub fn solve_lyapunov(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let at = a.transpose();
    let lhs = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = -DVector::from_column_slice(c.as_slice());
    let x = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::NumericalFailure("singular Lyapunov operator".into()))?;
    Ok(DMatrix::from_column_slice(n, n, x.as_slice()))
}

/// Hautus test: for every eigenvalue of `A` with non-negative real part,
/// `[A - lambda I, B]` must have full row rank.
pub fn hautus_stabilizable(a: &DMatrix<f64>, b: &DMatrix<f64>) -> bool {
    let n = a.nrows();
    assert_eq!(a.ncols(), n, "A must be square");
    assert_eq!(b.nrows(), n, "B must have as many rows as A");
    let m = b.ncols();
    for lambda in a.clone().complex_eigenvalues().iter() {
        if lambda.re < MARGINAL_EIG_TOL {
            continue;
        }
        let mut pencil = DMatrix::<Complex64>::zeros(n, n + m);
        for i in 0..n {
            for j in 0..n {
                pencil[(i, j)] = Complex64::new(a[(i, j)], 0.0);
            }
            pencil[(i, i)] -= lambda;
            for j in 0..m {
                pencil[(i, n + j)] = Complex64::new(b[(i, j)], 0.0);
            }
        }
        if complex_rank(pencil) < n {
            return false;
        }
    }
    true
}

/// Detectability of `(A, C)`, by duality with stabilizability of `(A^T, C^T)`.
pub fn hautus_detectable(a: &DMatrix<f64>, c: &DMatrix<f64>) -> bool {
    hautus_stabilizable(&a.transpose(), &c.transpose())
}

fn complex_rank(m: DMatrix<Complex64>) -> usize {
    let sv = m.singular_values();
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    let tol = RANK_REL_TOL * smax;
    sv.iter().filter(|&&s| s > tol).count()
}

/// Symmetric positive semi-definite square root.
pub fn psd_sqrt(q: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = symmetrize(q).symmetric_eigen();
    let vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

pub fn max_real_eig(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .complex_eigenvalues()
        .iter()
        .map(|e| e.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    m.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::NumericalFailure("matrix is not positive definite".into()))
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    (m - m.transpose()).amax() <= tol * m.amax().max(1.0)
}
