//! Restarted GMRES with right preconditioning, matrix-free over plain
//! `f64` slices. Deterministic: all reductions are serial.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct GmresOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub restart: usize,
    pub max_iters: usize,
}

impl Default for GmresOptions {
    fn default() -> Self {
        GmresOptions {
            rel_tol: 1e-12,
            abs_tol: 1e-14,
            restart: 40,
            max_iters: 400,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GmresStats {
    pub iterations: usize,
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `A x = b` with right preconditioning `A M^{-1} y = b`,
/// `x = M^{-1} y`. `apply` computes `A v`, `precond` computes `M^{-1} v`.
/// `x` carries the initial guess on entry and the solution on exit.
pub fn gmres(
    apply: &(dyn Fn(&[f64], &mut [f64]) + Sync),
    precond: &(dyn Fn(&[f64], &mut [f64]) + Sync),
    b: &[f64],
    x: &mut [f64],
    opts: GmresOptions,
) -> Result<GmresStats> {
    let n = b.len();
    let b_norm = norm(b);
    let target = (opts.rel_tol * b_norm).max(opts.abs_tol);

    let mut scratch = vec![0.0; n];
    let mut residual = vec![0.0; n];

    // r = b - A x
    apply(x, &mut scratch);
    for i in 0..n {
        residual[i] = b[i] - scratch[i];
    }
    let mut r_norm = norm(&residual);
    if r_norm <= target {
        return Ok(GmresStats {
            iterations: 0,
            residual: r_norm,
        });
    }

    let mut total_iters = 0;
    let m = opts.restart;
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    let mut hess = vec![vec![0.0; m]; m + 1];

    while total_iters < opts.max_iters {
        basis.clear();
        for row in hess.iter_mut() {
            for v in row.iter_mut() {
                *v = 0.0;
            }
        }
        let beta = r_norm;
        basis.push(residual.iter().map(|v| v / beta).collect());
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut k_used = 0;

        for k in 0..m {
            if total_iters >= opts.max_iters {
                break;
            }
            total_iters += 1;
            // w = A M^{-1} v_k
            precond(&basis[k], &mut scratch);
            let mut w = vec![0.0; n];
            apply(&scratch, &mut w);
            // Modified Gram-Schmidt.
            for j in 0..=k {
                let h = dot(&w, &basis[j]);
                hess[j][k] = h;
                for i in 0..n {
                    w[i] -= h * basis[j][i];
                }
            }
            let h_next = norm(&w);
            hess[k + 1][k] = h_next;
            // Givens rotations to keep the least-squares triangular.
            for j in 0..k {
                let t = cs[j] * hess[j][k] + sn[j] * hess[j + 1][k];
                hess[j + 1][k] = -sn[j] * hess[j][k] + cs[j] * hess[j + 1][k];
                hess[j][k] = t;
            }
            let denom = (hess[k][k] * hess[k][k] + h_next * h_next).sqrt();
            if denom == 0.0 {
                k_used = k + 1;
                break;
            }
            cs[k] = hess[k][k] / denom;
            sn[k] = h_next / denom;
            hess[k][k] = denom;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            let approx_res = g[k + 1].abs();
            if h_next <= 1e-300 || approx_res <= target {
                break;
            }
            basis.push(w.iter().map(|v| v / h_next).collect());
        }

        // Solve the triangular system and update x.
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= hess[i][j] * y[j];
            }
            y[i] = s / hess[i][i];
        }
        let mut correction = vec![0.0; n];
        for (j, &yj) in y.iter().enumerate() {
            for i in 0..n {
                correction[i] += yj * basis[j][i];
            }
        }
        precond(&correction, &mut scratch);
        for i in 0..n {
            x[i] += scratch[i];
        }

        // True residual for the restart test.
        apply(x, &mut scratch);
        for i in 0..n {
            residual[i] = b[i] - scratch[i];
        }
        r_norm = norm(&residual);
        if r_norm <= target.max(1e-15 * b_norm.max(1.0)) {
            return Ok(GmresStats {
                iterations: total_iters,
                residual: r_norm,
            });
        }
    }

    if r_norm <= (10.0 * target).max(1e-12 * b_norm.max(1.0)) {
        // Close enough that downstream tolerances still hold; report it.
        return Ok(GmresStats {
            iterations: total_iters,
            residual: r_norm,
        });
    }
    Err(Error::LinearSolve(format!(
        "GMRES stalled at residual {r_norm:.3e} (target {target:.3e}) after {total_iters} iterations"
    )))
}
