//! Discrete state containers: the weighted Fokker-Planck density on the
//! combined (x, q) product space, its marginal, velocity fields, and the
//! assembled discretization bundle shared by the solvers.

use crate::error::{Error, Result};
use crate::maxwellian::MaxwellianModel;
use crate::params::ModelParams;
use crate::qspace::QSpace;
use crate::xspace::{RealField, SpecField, XSpace};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

/// Grid sizes: Fourier modes per x-axis and polynomial degree per q
/// coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Resolution {
    pub x_modes: usize,
    pub q_degree: usize,
}

/// Everything the solvers need about the discretization, built once per
/// run and immutable afterwards.
#[derive(Debug)]
pub struct Spaces {
    pub params: ModelParams,
    pub model: MaxwellianModel,
    pub xs: XSpace,
    pub qs: QSpace,
    pub resolution: Resolution,
}

/// Builds the product-space discretization: spectral torus in x, weighted
/// polynomial Galerkin basis in q.
pub fn build_spaces(params: ModelParams, resolution: Resolution) -> Result<Spaces> {
    if resolution.x_modes < 4 {
        return Err(Error::Resolution("need at least 4 x-modes per axis".into()));
    }
    if resolution.q_degree < 1 {
        return Err(Error::Resolution("need q-degree >= 1".into()));
    }
    let model = MaxwellianModel::build(
        params.chain.potential,
        params.physical.springs,
        params.physical.dim,
        resolution.q_degree,
    )?;
    let xs = XSpace::new(resolution.x_modes)?;
    let qs = QSpace::build(&model, &params.chain, resolution.q_degree)?;
    Ok(Spaces {
        params,
        model,
        xs,
        qs,
        resolution,
    })
}

/// Divergence-free velocity field in spectral representation.
#[derive(Debug, Clone)]
pub struct Velocity {
    pub spec: [SpecField; 2],
}

impl Velocity {
    pub fn zero(xs: &XSpace) -> Self {
        Velocity { spec: xs.zero_vector() }
    }

    pub fn norm_sq(&self, xs: &XSpace) -> f64 {
        xs.norm_sq_spec(&self.spec[0]) + xs.norm_sq_spec(&self.spec[1])
    }

    pub fn grad_norm_sq(&self, xs: &XSpace) -> f64 {
        xs.grad_norm_sq(&self.spec)
    }

    pub fn diff_norm_sq(&self, other: &Velocity) -> f64 {
        let mut total = 0.0;
        for c in 0..2 {
            for (a, b) in self.spec[c].iter().zip(&other.spec[c]) {
                total += (a - b).norm_sqr();
            }
        }
        total
    }

    pub fn divergence_max(&self, xs: &XSpace) -> f64 {
        xs.spec_max(&xs.divergence(&self.spec))
    }

    pub fn nodal(&self, xs: &XSpace) -> [RealField; 2] {
        xs.vector_to_real(&self.spec)
    }
}

/// Weighted density `psi_hat = psi / M` as coefficients in the
/// (x-nodal) x (q-basis) product representation, stored x-major:
/// `data[x * n_q + k]`.
#[derive(Debug, Clone)]
pub struct ConfigurationDensity {
    pub nx: usize,
    pub nq: usize,
    pub data: Vec<f64>,
}

/// Marginal `zeta(x) = int M psi_hat dq` on the x-grid.
#[derive(Debug, Clone)]
pub struct MarginalDensity {
    pub values: RealField,
}

impl ConfigurationDensity {
    pub fn constant(spaces: &Spaces, value: f64) -> Self {
        let nx = spaces.xs.len();
        let nq = spaces.qs.n_q;
        let mut data = vec![0.0; nx * nq];
        for x in 0..nx {
            data[x * nq] = value;
        }
        ConfigurationDensity { nx, nq, data }
    }

    pub fn zeros_like(&self) -> Self {
        ConfigurationDensity {
            nx: self.nx,
            nq: self.nq,
            data: vec![0.0; self.data.len()],
        }
    }

    #[inline]
    pub fn coeffs(&self, x: usize) -> &[f64] {
        &self.data[x * self.nq..(x + 1) * self.nq]
    }

    #[inline]
    pub fn coeffs_mut(&mut self, x: usize) -> &mut [f64] {
        &mut self.data[x * self.nq..(x + 1) * self.nq]
    }

    /// Weighted L^2_M(Omega x D) inner product; exact by orthonormality in
    /// q and trig-exact nodal quadrature in x.
    pub fn inner(&self, other: &ConfigurationDensity) -> f64 {
        let s: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a * b)
            .sum();
        s / self.nx as f64
    }

    pub fn norm_sq(&self) -> f64 {
        self.inner(self)
    }

    pub fn diff_norm_sq(&self, other: &ConfigurationDensity) -> f64 {
        let s: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        s / self.nx as f64
    }

    /// Marginal is the coefficient of the constant basis function.
    pub fn marginal(&self) -> MarginalDensity {
        MarginalDensity {
            values: (0..self.nx).map(|x| self.data[x * self.nq]).collect(),
        }
    }
}

impl MarginalDensity {
    pub fn min_max(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in &self.values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }
}

/// Nodes with Maxwellian weight below this floor carry no usable measure;
/// polynomial expansions are unbounded there and nodal extrema or cut-off
/// activity decisions must ignore them.
pub const WEIGHT_FLOOR: f64 = 1e-11;

/// Per-x nodal evaluation of q-expansions on the spring quadrature nodes,
/// including the tensor contraction for two-spring chains.
pub struct QNodalEvaluator<'a> {
    spaces: &'a Spaces,
    /// Per-configuration-node weight (product across springs).
    pub node_weight: Vec<f64>,
    /// `(|q_i|^2 / 2)` per node per spring.
    pub node_s: Vec<Vec<f64>>,
    /// Whether the node carries measure above `WEIGHT_FLOOR`.
    pub significant: Vec<bool>,
    n_nodes: usize,
}

impl<'a> QNodalEvaluator<'a> {
    pub fn new(spaces: &'a Spaces) -> Self {
        let sq = &spaces.qs.spring.quad;
        let ns = sq.len();
        match spaces.qs.springs {
            1 => {
                let significant = sq.weights.iter().map(|&w| w > WEIGHT_FLOOR).collect();
                QNodalEvaluator {
                    spaces,
                    node_weight: sq.weights.clone(),
                    node_s: vec![sq.s_values.clone()],
                    significant,
                    n_nodes: ns,
                }
            }
            2 => {
                let mut w = Vec::with_capacity(ns * ns);
                let mut s1 = Vec::with_capacity(ns * ns);
                let mut s2 = Vec::with_capacity(ns * ns);
                for a in 0..ns {
                    for b in 0..ns {
                        w.push(sq.weights[a] * sq.weights[b]);
                        s1.push(sq.s_values[a]);
                        s2.push(sq.s_values[b]);
                    }
                }
                let significant = w.iter().map(|&v| v > WEIGHT_FLOOR).collect();
                QNodalEvaluator {
                    spaces,
                    node_weight: w,
                    node_s: vec![s1, s2],
                    significant,
                    n_nodes: ns * ns,
                }
            }
            _ => unreachable!(),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    /// Nodal values of the q-expansion at one x node.
    pub fn values(&self, coeffs: &[f64], out: &mut Vec<f64>) {
        let qs = &self.spaces.qs;
        let e = &qs.spring.eval;
        match qs.springs {
            1 => {
                let c = DVector::from_column_slice(coeffs);
                let v = e * c;
                out.clear();
                out.extend(v.iter());
            }
            2 => {
                let m = qs.spring.m;
                let c = DMatrix::from_fn(m, m, |k1, k2| coeffs[k1 * m + k2]);
                let t = e * c; // nodes x m
                let v = &t * e.transpose(); // nodes x nodes
                out.clear();
                out.reserve(v.nrows() * v.ncols());
                for a in 0..v.nrows() {
                    for b in 0..v.ncols() {
                        out.push(v[(a, b)]);
                    }
                }
            }
            _ => unreachable!(),
        }
    }

    /// Weighted projection of nodal values back onto the basis:
    /// `c_k = sum_n w_n phi_k(n) f_n`.
    pub fn project(&self, nodal: &[f64], out: &mut [f64]) {
        let qs = &self.spaces.qs;
        let e = &qs.spring.eval;
        match qs.springs {
            1 => {
                let weighted = DVector::from_fn(self.n_nodes, |n, _| nodal[n] * self.node_weight[n]);
                let c = e.transpose() * weighted;
                out.copy_from_slice(c.as_slice());
            }
            2 => {
                let ns = qs.spring.quad.len();
                let m = qs.spring.m;
                let w = DMatrix::from_fn(ns, ns, |a, b| nodal[a * ns + b] * self.node_weight[a * ns + b]);
                let t = e.transpose() * w; // m x nodes
                let c = t * e; // m x m
                for k1 in 0..m {
                    for k2 in 0..m {
                        out[k1 * m + k2] = c[(k1, k2)];
                    }
                }
            }
            _ => unreachable!(),
        }
    }

    /// Applies `f` to the nodal values at each x node in parallel, then
    /// reduces the per-x outputs serially in index order (deterministic).
    pub fn map_reduce<T: Send, R>(
        &self,
        density: &ConfigurationDensity,
        per_x: impl Fn(usize, &[f64]) -> T + Sync,
        mut fold: impl FnMut(R, T) -> R,
        init: R,
    ) -> R {
        let results: Vec<T> = (0..density.nx)
            .into_par_iter()
            .map_init(
                || Vec::new(),
                |buf, x| {
                    self.values(density.coeffs(x), buf);
                    per_x(x, buf)
                },
            )
            .collect();
        let mut acc = init;
        for t in results {
            acc = fold(acc, t);
        }
        acc
    }
}

/// Applies a dense q-matrix to every x slot: `out_x = mat * c_x`.
pub fn apply_q_matrix(mat: &DMatrix<f64>, input: &ConfigurationDensity, out: &mut ConfigurationDensity) {
    let nq = input.nq;
    out.data
        .par_chunks_mut(nq)
        .zip(input.data.par_chunks(nq))
        .for_each(|(o, c)| {
            // out = mat * c, column-major accumulation.
            for v in o.iter_mut() {
                *v = 0.0;
            }
            for (k, &ck) in c.iter().enumerate() {
                if ck != 0.0 {
                    let col = mat.column(k);
                    for (ov, &mv) in o.iter_mut().zip(col.iter()) {
                        *ov += mv * ck;
                    }
                }
            }
        });
}

/// Gathers the x-field of one q-coefficient, applies a spectral transform,
/// and scatters it back. `f` maps the spectral field in place.
pub fn transform_x_fields(
    xs: &XSpace,
    density: &ConfigurationDensity,
    out: &mut ConfigurationDensity,
    f: impl Fn(usize, &mut SpecField) + Sync,
) {
    let nx = density.nx;
    let nq = density.nq;
    let columns: Vec<Vec<f64>> = (0..nq)
        .into_par_iter()
        .map(|k| {
            let col: Vec<f64> = (0..nx).map(|x| density.data[x * nq + k]).collect();
            let mut spec = xs.to_spectral(&col);
            f(k, &mut spec);
            xs.to_real(&spec)
        })
        .collect();
    for (k, col) in columns.iter().enumerate() {
        for x in 0..nx {
            out.data[x * nq + k] = col[x];
        }
    }
}
