//! Box-constrained Nelder-Mead.
//!
//! Trial points are projected onto the box before evaluation, so every
//! evaluated point is feasible. Uses the dimension-adaptive coefficients of
//! Gao and Han. Each simplex run is followed by a compass search along the
//! coordinate axes, which gets past axis-aligned kinks where the simplex
//! stalls. Then a fresh simplex is built around the incumbent, until a
//! round no longer improves it.

/// Iterations without improvement, per dimension, after which a run is
/// restarted.
const STALL_ITERS_PER_DIM: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    /// Absolute spread of simplex values below which a run has converged.
    pub f_tol: f64,
    /// Simplex diameter below which a run has converged.
    pub x_tol: f64,
    /// Edge length of the initial simplex, per coordinate, as a fraction of
    /// the box width.
    pub initial_step: f64,
    pub max_restarts: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_evals: 40_000,
            f_tol: 1e-12,
            x_tol: 1e-10,
            initial_step: 0.1,
            max_restarts: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub f: f64,
    /// Best value after each iteration; non-increasing.
    pub trace: Vec<f64>,
    pub evals: usize,
    pub converged: bool,
}

pub fn minimize_box<F>(
    mut f: F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: &NelderMeadOptions,
) -> NelderMeadResult
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    assert_eq!(lower.len(), n);
    assert_eq!(upper.len(), n);
    let project = |x: &mut [f64]| {
        for i in 0..n {
            x[i] = x[i].clamp(lower[i], upper[i]);
        }
    };
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut best_x = x0.to_vec();
    project(&mut best_x);
    let mut best_f = eval(&best_x, &mut evals);
    let mut trace = vec![best_f];
    if n == 0 {
        return NelderMeadResult {
            x: best_x,
            f: best_f,
            trace,
            evals,
            converged: true,
        };
    }

    let nf = n as f64;
    let (refl, expand, contract, shrink) = if n >= 2 {
        (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf)
    } else {
        (1.0, 2.0, 0.5, 0.5)
    };

    let free: Vec<usize> = (0..n).filter(|&i| upper[i] > lower[i]).collect();
    let mut directions: Vec<Vec<(usize, f64)>> = Vec::new();
    for (a, &i) in free.iter().enumerate() {
        directions.push(vec![(i, 1.0)]);
        directions.push(vec![(i, -1.0)]);
        for &j in &free[a + 1..] {
            for (si, sj) in [(1.0, 1.0), (-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0)] {
                directions.push(vec![(i, si), (j, sj)]);
            }
        }
    }

    let mut converged = false;
    for _restart in 0..=opts.max_restarts {
        if evals >= opts.max_evals {
            break;
        }
        let start_f = best_f;
        // Initial simplex around the incumbent.
        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
        simplex.push((best_x.clone(), best_f));
        for i in 0..n {
            let mut v = best_x.clone();
            let step = opts.initial_step * (upper[i] - lower[i]).max(1e-12);
            v[i] = if v[i] + step <= upper[i] { v[i] + step } else { v[i] - step };
            project(&mut v);
            let fv = eval(&v, &mut evals);
            simplex.push((v, fv));
        }

        let mut run_converged = false;
        let mut last_gain = 0usize;
        let mut iter = 0usize;
        while evals < opts.max_evals {
            iter += 1;
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            if simplex[0].1 < best_f {
                if best_f - simplex[0].1 > opts.f_tol {
                    last_gain = iter;
                }
                best_f = simplex[0].1;
                best_x.clone_from(&simplex[0].0);
            }
            trace.push(best_f);
            // A crawling simplex is rebuilt around the incumbent.
            if iter - last_gain > STALL_ITERS_PER_DIM * n {
                run_converged = true;
                break;
            }

            let spread = simplex[n].1 - simplex[0].1;
            let diameter = simplex[1..]
                .iter()
                .map(|(v, _)| {
                    v.iter()
                        .zip(&simplex[0].0)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max)
                })
                .fold(0.0, f64::max);
            if (spread.is_finite() && spread <= opts.f_tol && diameter <= opts.x_tol.max(1e-3))
                || diameter <= opts.x_tol
            {
                run_converged = true;
                break;
            }

            let mut centroid = vec![0.0; n];
            for (v, _) in &simplex[..n] {
                for i in 0..n {
                    centroid[i] += v[i] / nf;
                }
            }
            let along = |coef: f64| -> Vec<f64> {
                let worst = &simplex[n].0;
                let mut p: Vec<f64> = (0..n).map(|i| centroid[i] + coef * (centroid[i] - worst[i])).collect();
                project(&mut p);
                p
            };

            let xr = along(refl);
            let fr = eval(&xr, &mut evals);
            if fr < simplex[0].1 {
                let xe = along(refl * expand);
                let fe = eval(&xe, &mut evals);
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
                continue;
            }
            if fr < simplex[n - 1].1 {
                simplex[n] = (xr, fr);
                continue;
            }
            let (xc, fc) = if fr < simplex[n].1 {
                let xc = along(refl * contract);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            } else {
                let xc = along(-contract);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            };
            if fc < fr.min(simplex[n].1) {
                simplex[n] = (xc, fc);
                continue;
            }
            let x_best = simplex[0].0.clone();
            for (v, fv) in simplex.iter_mut().skip(1) {
                for i in 0..n {
                    v[i] = x_best[i] + shrink * (v[i] - x_best[i]);
                }
                project(v);
                *fv = eval(v, &mut evals);
            }
        }
        for (v, fv) in &simplex {
            if *fv < best_f {
                best_f = *fv;
                best_x.clone_from(v);
            }
        }
        if let Some(last) = trace.last_mut() {
            *last = last.min(best_f);
        }

        // Pattern search from the incumbent along the axes and the pairwise
        // diagonals, which crosses kinks that run along a diagonal.
        let mut step = 0.1 * opts.initial_step;
        while step > opts.x_tol && evals < opts.max_evals {
            let mut moved = false;
            for d in &directions {
                let mut v = best_x.clone();
                for &(i, sign) in d {
                    v[i] = (v[i] + sign * step * (upper[i] - lower[i])).clamp(lower[i], upper[i]);
                }
                if v == best_x {
                    continue;
                }
                let fv = eval(&v, &mut evals);
                if fv < best_f {
                    best_f = fv;
                    best_x = v;
                    moved = true;
                }
                if evals >= opts.max_evals {
                    break;
                }
            }
            trace.push(best_f);
            if !moved {
                step *= 0.5;
            }
        }

        if !run_converged {
            break;
        }
        if start_f - best_f <= opts.f_tol {
            converged = true;
            break;
        }
    }

    NelderMeadResult {
        x: best_x,
        f: best_f,
        trace,
        evals,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> f64 {
        x.windows(2)
            .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
            .sum()
    }

    #[test]
    fn finds_rosenbrock_minimum() {
        let r = minimize_box(rosenbrock, &[-1.2, 1.0], &[-5.0; 2], &[5.0; 2], &NelderMeadOptions::default());
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-5 && (r.x[1] - 1.0).abs() < 1e-5, "{:?}", r.x);
    }

    #[test]
    fn respects_bounds() {
        // Unconstrained minimum at (3, -3) lies outside the box.
        let f = |x: &[f64]| (x[0] - 3.0).powi(2) + (x[1] + 3.0).powi(2);
        let mut inside = true;
        let g = |x: &[f64]| {
            inside &= x[0] >= -1.0 && x[0] <= 1.0 && x[1] >= -1.0 && x[1] <= 1.0;
            f(x)
        };
        let r = minimize_box(g, &[0.0, 0.0], &[-1.0; 2], &[1.0; 2], &NelderMeadOptions::default());
        assert!(inside);
        assert!((r.x[0] - 1.0).abs() < 1e-8 && (r.x[1] + 1.0).abs() < 1e-8);
    }

    #[test]
    fn trace_is_monotone() {
        let r = minimize_box(rosenbrock, &[0.0; 4], &[-2.0; 4], &[2.0; 4], &NelderMeadOptions::default());
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(*r.trace.last().unwrap(), r.f);
    }

    #[test]
    fn eval_budget_is_honoured() {
        let opts = NelderMeadOptions {
            max_evals: 50,
            ..Default::default()
        };
        let r = minimize_box(rosenbrock, &[0.0; 6], &[-2.0; 6], &[2.0; 6], &opts);
        assert!(!r.converged);
        assert!(r.evals <= 50 + 6 + 1);
    }

    #[test]
    fn collapsed_box_returns_the_point() {
        let r = minimize_box(rosenbrock, &[0.3, 0.4], &[0.5, 0.5], &[0.5, 0.5], &NelderMeadOptions::default());
        assert_eq!(r.x, vec![0.5, 0.5]);
        assert_eq!(r.f, rosenbrock(&[0.5, 0.5]));
    }
}
