//! One-dimensional Gauss quadrature for general weights.
//!
//! Recurrence coefficients of the weight's orthonormal polynomials are
//! obtained by a discretized Stieltjes procedure on a fine composite
//! Gauss-Legendre grid; nodes and weights then come out of the symmetric
//! tridiagonal (Jacobi) eigenproblem in Golub-Welsch form.

use crate::error::{Error, Result};
use nalgebra::DMatrix;

/// Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    // Jacobi matrix of the Legendre weight: alpha_k = 0,
    // beta_k = k^2 / (4k^2 - 1).
    let mut j = DMatrix::zeros(n, n);
    for k in 1..n {
        let kf = k as f64;
        let b = kf * kf / (4.0 * kf * kf - 1.0);
        j[(k - 1, k)] = b.sqrt();
        j[(k, k - 1)] = b.sqrt();
    }
    let eig = j.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let x = eig.eigenvalues[i];
            let w = 2.0 * eig.eigenvectors[(0, i)].powi(2);
            (x, w)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pairs.into_iter().unzip()
}

/// Three-term recurrence of the orthonormal polynomials of a weight:
/// `t p_k = sqrt(b_{k+1}) p_{k+1} + a_k p_k + sqrt(b_k) p_{k-1}`,
/// with `b_0` the total weight mass.
#[derive(Debug, Clone)]
pub struct Recurrence {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl Recurrence {
    /// Evaluate the orthonormal polynomials p_0..p_{m-1} at `x`.
    pub fn eval(&self, x: f64, out: &mut [f64]) {
        let m = out.len();
        assert!(m <= self.alpha.len());
        let mut prev = 0.0;
        let mut cur = 1.0 / self.beta[0].sqrt();
        for k in 0..m {
            out[k] = cur;
            if k + 1 < m {
                let next =
                    ((x - self.alpha[k]) * cur - if k > 0 { self.beta[k].sqrt() } else { 0.0 } * prev)
                        / self.beta[k + 1].sqrt();
                prev = cur;
                cur = next;
            }
        }
    }

    /// Evaluate values and first derivatives at `x`.
    pub fn eval_with_derivative(&self, x: f64, val: &mut [f64], der: &mut [f64]) {
        let m = val.len();
        assert!(m <= self.alpha.len());
        let mut prev = 0.0;
        let mut cur = 1.0 / self.beta[0].sqrt();
        let mut dprev = 0.0;
        let mut dcur = 0.0;
        for k in 0..m {
            val[k] = cur;
            der[k] = dcur;
            if k + 1 < m {
                let sb_k = if k > 0 { self.beta[k].sqrt() } else { 0.0 };
                let sb_n = self.beta[k + 1].sqrt();
                let next = ((x - self.alpha[k]) * cur - sb_k * prev) / sb_n;
                let dnext = ((x - self.alpha[k]) * dcur + cur - sb_k * dprev) / sb_n;
                prev = cur;
                cur = next;
                dprev = dcur;
                dcur = dnext;
            }
        }
    }
}

/// A discretization of a weight function: nodes with strictly positive
/// weights embedding the weight values.
#[derive(Debug, Clone)]
pub struct DiscretizedWeight {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl DiscretizedWeight {
    /// Composite Gauss-Legendre discretization of `w` on panels split at
    /// `breaks`; `n_per_panel` nodes each. Wide panels are subdivided so no
    /// chunk exceeds three units. Panels must be increasing.
    pub fn composite(w: impl Fn(f64) -> f64, breaks: &[f64], n_per_panel: usize) -> Self {
        let (gx, gw) = gauss_legendre(n_per_panel);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for seg in breaks.windows(2) {
            let chunks = ((seg[1] - seg[0]) / 3.0).ceil().max(1.0) as usize;
            for c in 0..chunks {
                let a = seg[0] + (seg[1] - seg[0]) * c as f64 / chunks as f64;
                let b = seg[0] + (seg[1] - seg[0]) * (c + 1) as f64 / chunks as f64;
                let half = 0.5 * (b - a);
                let mid = 0.5 * (a + b);
                for (x, wt) in gx.iter().zip(&gw) {
                    let t = mid + half * x;
                    nodes.push(t);
                    weights.push(half * wt * w(t));
                }
            }
        }
        DiscretizedWeight { nodes, weights }
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Discretized Stieltjes: recurrence coefficients for the first `m`
/// orthonormal polynomials of the discretized weight.
pub fn stieltjes(disc: &DiscretizedWeight, m: usize) -> Result<Recurrence> {
    let n = disc.nodes.len();
    if m > n {
        return Err(Error::Resolution(format!(
            "requested {m} recurrence coefficients from a {n}-point discretization"
        )));
    }
    let mut alpha = vec![0.0; m];
    let mut beta = vec![0.0; m + 1];
    beta[0] = disc.total_mass();
    if !(beta[0] > 0.0) {
        return Err(Error::Resolution("weight has nonpositive mass".into()));
    }
    let mut p_prev = vec![0.0; n];
    let mut p_cur = vec![1.0 / beta[0].sqrt(); n];
    for k in 0..m {
        let mut a = 0.0;
        for i in 0..n {
            a += disc.weights[i] * disc.nodes[i] * p_cur[i] * p_cur[i];
        }
        alpha[k] = a;
        let sbk = beta[k].sqrt();
        let mut q = vec![0.0; n];
        let mut b_next = 0.0;
        for i in 0..n {
            q[i] = (disc.nodes[i] - a) * p_cur[i] - if k > 0 { sbk } else { 0.0 } * p_prev[i];
            b_next += disc.weights[i] * q[i] * q[i];
        }
        if !(b_next > 0.0) {
            return Err(Error::Resolution(
                "moment matrix lost positive definiteness in the Stieltjes recursion".into(),
            ));
        }
        beta[k + 1] = b_next;
        let sbn = b_next.sqrt();
        for i in 0..n {
            let next = q[i] / sbn;
            p_prev[i] = p_cur[i];
            p_cur[i] = next;
        }
    }
    Ok(Recurrence { alpha, beta })
}

/// Gauss rule with respect to the weight behind `rec`, by Golub-Welsch.
/// A rule of `n` nodes integrates weight-polynomials of degree `2n-1`
/// exactly.
pub fn golub_welsch(rec: &Recurrence, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 || n > rec.alpha.len() {
        return Err(Error::Resolution(format!(
            "cannot build {n}-node rule from {} recurrence coefficients",
            rec.alpha.len()
        )));
    }
    let mut j = DMatrix::zeros(n, n);
    for k in 0..n {
        j[(k, k)] = rec.alpha[k];
        if k + 1 < n {
            let s = rec.beta[k + 1].sqrt();
            j[(k, k + 1)] = s;
            j[(k + 1, k)] = s;
        }
    }
    let eig = j.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            (
                eig.eigenvalues[i],
                rec.beta[0] * eig.eigenvectors[(0, i)].powi(2),
            )
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    Ok(pairs.into_iter().unzip())
}

/// Convenience: an `n`-node Gauss rule for `w` on `[a, b]` with interior
/// break points (weight kinks) honoured by the discretization.
pub fn gauss_rule_for_weight(
    w: impl Fn(f64) -> f64 + Copy,
    a: f64,
    b: f64,
    interior_breaks: &[f64],
    n: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut breaks = vec![a];
    for &x in interior_breaks {
        if x > a && x < b {
            breaks.push(x);
        }
    }
    breaks.push(b);
    // Discretization fine enough for degree ~4n moments.
    let fine = (4 * n + 20).min(180);
    let disc = DiscretizedWeight::composite(w, &breaks, fine);
    let rec = stieltjes(&disc, n + 1)?;
    golub_welsch(&rec, n)
}
