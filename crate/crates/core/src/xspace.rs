//! Periodic spectral discretization of the unit torus `[0,1]^2`:
//! Fourier transforms, derivatives, Leray projection and dealiased
//! pseudo-spectral products.
//!
//! Coefficient convention: `f(x) = sum_k c_k exp(2 pi i k . x)` with the
//! forward transform normalized by `1/n^2`. Real-space fields are stored
//! row-major as `f[i * n + j]` for the node `(i/n, j/n)`.

use crate::error::{Error, Result};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

pub type RealField = Vec<f64>;
pub type SpecField = Vec<Complex64>;

#[derive(Clone)]
pub struct XSpace {
    /// Grid points (and modes) per axis.
    pub n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    /// Signed integer wavenumber per index, Nyquist mapped to zero.
    pub xi: Vec<f64>,
    /// 2/3-rule dealias mask per flattened mode index.
    pub keep: Vec<bool>,
}

impl std::fmt::Debug for XSpace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("XSpace").field("n", &self.n).finish()
    }
}

pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

impl XSpace {
    pub fn new(n: usize) -> Result<Self> {
        if n < 4 || !n.is_power_of_two() {
            return Err(Error::Resolution(format!(
                "x-resolution must be a power of two >= 4, got {n}"
            )));
        }
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let xi: Vec<f64> = (0..n)
            .map(|k| {
                if k == n / 2 {
                    0.0
                } else if k <= n / 2 {
                    k as f64
                } else {
                    k as f64 - n as f64
                }
            })
            .collect();
        let kmax = ((n as f64) / 3.0).floor() - f64::from((n % 3) == 0);
        let kmax = kmax.max(1.0);
        let keep: Vec<bool> = (0..n * n)
            .map(|idx| {
                let (i, j) = (idx / n, idx % n);
                let ki = if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
                let kj = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
                i != n / 2 && j != n / 2 && ki.abs() <= kmax && kj.abs() <= kmax
            })
            .collect();
        Ok(XSpace { n, fwd, inv, xi, keep })
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Largest retained wavenumber magnitude after dealiasing.
    pub fn kept_mode_limit(&self) -> f64 {
        let n = self.n;
        (0..n * n)
            .filter(|&i| self.keep[i])
            .map(|idx| self.xi[idx / n].abs().max(self.xi[idx % n].abs()))
            .fold(0.0, f64::max)
    }

    fn fft2(&self, data: &mut [Complex64], forward: bool) {
        let n = self.n;
        let plan = if forward { &self.fwd } else { &self.inv };
        // Rows.
        for row in data.chunks_mut(n) {
            plan.process(row);
        }
        // Columns via transpose.
        let mut col = vec![Complex64::default(); n];
        for j in 0..n {
            for i in 0..n {
                col[i] = data[i * n + j];
            }
            plan.process(&mut col);
            for i in 0..n {
                data[i * n + j] = col[i];
            }
        }
    }

    /// Real nodal field to spectral coefficients.
    pub fn to_spectral(&self, f: &[f64]) -> SpecField {
        let mut buf: Vec<Complex64> = f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft2(&mut buf, true);
        let scale = 1.0 / (self.n * self.n) as f64;
        for c in &mut buf {
            *c *= scale;
        }
        buf
    }

    /// Spectral coefficients to real nodal values.
    pub fn to_real(&self, c: &[Complex64]) -> RealField {
        let mut buf = c.to_vec();
        self.fft2(&mut buf, false);
        buf.iter().map(|v| v.re).collect()
    }

    /// Signed wavenumber pair of a flattened mode index.
    #[inline]
    pub fn mode(&self, idx: usize) -> (f64, f64) {
        (self.xi[idx / self.n], self.xi[idx % self.n])
    }

    /// Apply the 2/3-rule mask in place.
    pub fn dealias(&self, c: &mut [Complex64]) {
        for (v, &k) in c.iter_mut().zip(&self.keep) {
            if !k {
                *v = Complex64::default();
            }
        }
    }

    /// Spectral derivative along `axis` (0 = x, 1 = y).
    pub fn derivative(&self, c: &[Complex64], axis: usize) -> SpecField {
        let n = self.n;
        c.iter()
            .enumerate()
            .map(|(idx, &v)| {
                let k = if axis == 0 { self.xi[idx / n] } else { self.xi[idx % n] };
                Complex64::new(0.0, TWO_PI * k) * v
            })
            .collect()
    }

    /// `|2 pi xi|^2` multiplier table.
    pub fn laplace_symbol(&self, idx: usize) -> f64 {
        let (ki, kj) = self.mode(idx);
        TWO_PI * TWO_PI * (ki * ki + kj * kj)
    }

    /// Leray projection onto divergence-free, mean-zero fields.
    pub fn leray(&self, u: &mut [SpecField; 2]) {
        let n = self.n;
        for idx in 0..n * n {
            let (ki, kj) = self.mode(idx);
            let k2 = ki * ki + kj * kj;
            if k2 == 0.0 {
                u[0][idx] = Complex64::default();
                u[1][idx] = Complex64::default();
            } else {
                let dot = ki * u[0][idx] + kj * u[1][idx];
                u[0][idx] -= ki * dot / k2;
                u[1][idx] -= kj * dot / k2;
            }
        }
    }

    /// Spectral divergence of a vector field.
    pub fn divergence(&self, u: &[SpecField; 2]) -> SpecField {
        let mut d = self.derivative(&u[0], 0);
        let dy = self.derivative(&u[1], 1);
        for (a, b) in d.iter_mut().zip(dy) {
            *a += b;
        }
        d
    }

    /// Max spectral magnitude, used as a norm for divergence checks.
    pub fn spec_max(&self, c: &[Complex64]) -> f64 {
        c.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// `int f g dx` for real fields on the torus.
    pub fn inner_real(&self, f: &[f64], g: &[f64]) -> f64 {
        let s: f64 = f.iter().zip(g).map(|(a, b)| a * b).sum();
        s / (self.n * self.n) as f64
    }

    /// `int f g dx` by Parseval for spectral fields of real data.
    pub fn inner_spec(&self, f: &[Complex64], g: &[Complex64]) -> f64 {
        f.iter().zip(g).map(|(a, b)| (a * b.conj()).re).sum()
    }

    pub fn norm_sq_spec(&self, f: &[Complex64]) -> f64 {
        f.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `int |grad u|^2` for a spectral vector field.
    pub fn grad_norm_sq(&self, u: &[SpecField; 2]) -> f64 {
        let mut total = 0.0;
        for comp in u {
            for (idx, v) in comp.iter().enumerate() {
                total += self.laplace_symbol(idx) * v.norm_sqr();
            }
        }
        total
    }

    /// Squared dual norm of a force with respect to the gradient seminorm
    /// on solenoidal mean-zero fields:
    /// `sum_{xi != 0} |P f_hat(xi)|^2 / |2 pi xi|^2`.
    pub fn dual_norm_sq(&self, f: &[SpecField; 2]) -> f64 {
        let mut p = [f[0].clone(), f[1].clone()];
        self.leray(&mut p);
        let mut total = 0.0;
        for idx in 0..self.len() {
            let s = self.laplace_symbol(idx);
            if s > 0.0 {
                total += (p[0][idx].norm_sqr() + p[1][idx].norm_sqr()) / s;
            }
        }
        total
    }

    /// Dealiased pseudo-spectral product of two spectral scalars.
    pub fn product(&self, a: &[Complex64], b: &[Complex64]) -> SpecField {
        let mut am = a.to_vec();
        let mut bm = b.to_vec();
        self.dealias(&mut am);
        self.dealias(&mut bm);
        let ar = self.to_real(&am);
        let br = self.to_real(&bm);
        let prod: Vec<f64> = ar.iter().zip(&br).map(|(x, y)| x * y).collect();
        let mut c = self.to_spectral(&prod);
        self.dealias(&mut c);
        c
    }

    /// Dealiased convection `(v . grad) w` for a spectral scalar `w`.
    pub fn convect_scalar(&self, v_nodal: &[RealField; 2], w: &[Complex64]) -> SpecField {
        let mut wm = w.to_vec();
        self.dealias(&mut wm);
        let wx = self.to_real(&self.derivative(&wm, 0));
        let wy = self.to_real(&self.derivative(&wm, 1));
        let prod: Vec<f64> = (0..self.len())
            .map(|i| v_nodal[0][i] * wx[i] + v_nodal[1][i] * wy[i])
            .collect();
        let mut c = self.to_spectral(&prod);
        self.dealias(&mut c);
        c
    }

    /// Nodal values of a dealiased spectral vector field.
    pub fn vector_to_real(&self, u: &[SpecField; 2]) -> [RealField; 2] {
        let mut u0 = u[0].clone();
        let mut u1 = u[1].clone();
        self.dealias(&mut u0);
        self.dealias(&mut u1);
        [self.to_real(&u0), self.to_real(&u1)]
    }

    /// Velocity gradient tensor `sigma(u) = grad u` as nodal fields,
    /// ordered `[du0/dx, du0/dy, du1/dx, du1/dy]`.
    pub fn velocity_gradient(&self, u: &[SpecField; 2]) -> [RealField; 4] {
        let mut um = [u[0].clone(), u[1].clone()];
        self.dealias(&mut um[0]);
        self.dealias(&mut um[1]);
        [
            self.to_real(&self.derivative(&um[0], 0)),
            self.to_real(&self.derivative(&um[0], 1)),
            self.to_real(&self.derivative(&um[1], 0)),
            self.to_real(&self.derivative(&um[1], 1)),
        ]
    }

    /// Zero spectral vector field.
    pub fn zero_vector(&self) -> [SpecField; 2] {
        [
            vec![Complex64::default(); self.len()],
            vec![Complex64::default(); self.len()],
        ]
    }

    /// Taylor-Green cell `a (sin 2pi x cos 2pi y, -cos 2pi x sin 2pi y)`,
    /// solenoidal and mean-zero.
    pub fn taylor_green(&self, amplitude: f64) -> [SpecField; 2] {
        let n = self.n;
        let mut u0 = vec![0.0; n * n];
        let mut u1 = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let x = TWO_PI * i as f64 / n as f64;
                let y = TWO_PI * j as f64 / n as f64;
                u0[i * n + j] = amplitude * x.sin() * y.cos();
                u1[i * n + j] = -amplitude * x.cos() * y.sin();
            }
        }
        let mut u = [self.to_spectral(&u0), self.to_spectral(&u1)];
        self.dealias(&mut u[0]);
        self.dealias(&mut u[1]);
        u
    }

    /// Single solenoidal cosine mode of wavevector `(kx, ky)`.
    pub fn solenoidal_mode(&self, kx: i32, ky: i32, amplitude: f64) -> [SpecField; 2] {
        let n = self.n;
        let (dx, dy) = if kx == 0 && ky == 0 {
            (0.0, 0.0)
        } else {
            let norm = ((kx * kx + ky * ky) as f64).sqrt();
            (-(ky as f64) / norm, kx as f64 / norm)
        };
        let mut u0 = vec![0.0; n * n];
        let mut u1 = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let phase = TWO_PI * (kx as f64 * i as f64 + ky as f64 * j as f64) / n as f64;
                u0[i * n + j] = amplitude * dx * phase.cos();
                u1[i * n + j] = amplitude * dy * phase.cos();
            }
        }
        let mut u = [self.to_spectral(&u0), self.to_spectral(&u1)];
        self.dealias(&mut u[0]);
        self.dealias(&mut u[1]);
        u
    }

    /// Nodal scalar field from a closure of the node position in `[0,1)^2`.
    pub fn nodal_scalar(&self, f: impl Fn(f64, f64) -> f64) -> RealField {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = f(i as f64 / n as f64, j as f64 / n as f64);
            }
        }
        out
    }
}

/// Mean-zero torus Poincare constant `1 / sqrt(lambda_1)` with
/// `lambda_1 = 4 pi^2` on the unit torus, and the no-slip unit-box value
/// `1 / (pi sqrt(d))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    Torus { side: f64 },
    NoSlipBox { side: f64, dim: usize },
}

pub fn poincare_constant(domain: Domain) -> Result<f64> {
    match domain {
        Domain::Torus { side } => {
            if !(side > 0.0) {
                return Err(Error::invalid("side", "torus side must be > 0"));
            }
            Ok(side / TWO_PI)
        }
        Domain::NoSlipBox { side, dim } => {
            if !(side > 0.0) {
                return Err(Error::invalid("side", "box side must be > 0"));
            }
            if dim < 1 {
                return Err(Error::invalid("dim", "dimension must be >= 1"));
            }
            Ok(side / (std::f64::consts::PI * (dim as f64).sqrt()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn roundtrip_fft() {
        let xs = XSpace::new(16).unwrap();
        let f = xs.nodal_scalar(|x, y| (TWO_PI * x).sin() + 0.3 * (2.0 * TWO_PI * y).cos() + 0.7);
        let c = xs.to_spectral(&f);
        let back = xs.to_real(&c);
        for (a, b) in f.iter().zip(&back) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn derivative_of_sine() {
        let xs = XSpace::new(32).unwrap();
        let f = xs.nodal_scalar(|x, _| (TWO_PI * x).sin());
        let c = xs.to_spectral(&f);
        let dx = xs.to_real(&xs.derivative(&c, 0));
        let expect = xs.nodal_scalar(|x, _| TWO_PI * (TWO_PI * x).cos());
        for (a, b) in dx.iter().zip(&expect) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn leray_annihilates_gradients_and_is_idempotent() {
        let xs = XSpace::new(16).unwrap();
        // Pure gradient field grad chi.
        let chi = xs.nodal_scalar(|x, y| (TWO_PI * x).cos() * (TWO_PI * y).sin());
        let cs = xs.to_spectral(&chi);
        let mut g = [xs.derivative(&cs, 0), xs.derivative(&cs, 1)];
        xs.leray(&mut g);
        assert!(xs.spec_max(&g[0]) < 1e-13);
        assert!(xs.spec_max(&g[1]) < 1e-13);

        // Random-ish field: P(P(u)) = P(u), divergence-free to 1e-13.
        let f0 = xs.nodal_scalar(|x, y| (TWO_PI * x).sin() * (2.0 * TWO_PI * y).cos() + 0.3);
        let f1 = xs.nodal_scalar(|x, y| (3.0 * TWO_PI * y).sin() + 0.2 * (TWO_PI * x).cos());
        let mut u = [xs.to_spectral(&f0), xs.to_spectral(&f1)];
        xs.leray(&mut u);
        let div = xs.divergence(&u);
        assert!(xs.spec_max(&div) < 1e-13);
        let once = [u[0].clone(), u[1].clone()];
        xs.leray(&mut u);
        for idx in 0..xs.len() {
            assert_abs_diff_eq!((u[0][idx] - once[0][idx]).norm(), 0.0, epsilon = 1e-14);
            assert_abs_diff_eq!((u[1][idx] - once[1][idx]).norm(), 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn taylor_green_is_solenoidal() {
        let xs = XSpace::new(32).unwrap();
        let u = xs.taylor_green(1.0);
        let div = xs.divergence(&u);
        assert!(xs.spec_max(&div) < 1e-13);
        // Energy: int |u|^2 = a^2/2 for the unit cell.
        let e = xs.norm_sq_spec(&u[0]) + xs.norm_sq_spec(&u[1]);
        assert_abs_diff_eq!(e, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn convection_skew_symmetry() {
        // int ((v.grad) w1) . w2 = -int ((v.grad) w2) . w1 for solenoidal v.
        let xs = XSpace::new(32).unwrap();
        let v = xs.taylor_green(0.9);
        let vn = xs.vector_to_real(&v);
        let w1 = xs.solenoidal_mode(1, 2, 0.8);
        let w2 = xs.solenoidal_mode(2, -1, 1.1);
        let mut lhs = 0.0;
        let mut rhs = 0.0;
        for c in 0..2 {
            let cw1 = xs.convect_scalar(&vn, &w1[c]);
            let cw2 = xs.convect_scalar(&vn, &w2[c]);
            lhs += xs.inner_spec(&cw1, &w2[c]);
            rhs -= xs.inner_spec(&cw2, &w1[c]);
        }
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-11);
    }

    #[test]
    fn parseval_matches_nodal_quadrature() {
        let xs = XSpace::new(16).unwrap();
        let f = xs.nodal_scalar(|x, y| 1.0 + (TWO_PI * x).sin() * (TWO_PI * y).cos());
        let g = xs.nodal_scalar(|x, y| 0.5 - (TWO_PI * y).sin() + (TWO_PI * x).cos());
        let nodal = xs.inner_real(&f, &g);
        let spec = xs.inner_spec(&xs.to_spectral(&f), &xs.to_spectral(&g));
        assert_abs_diff_eq!(nodal, spec, epsilon = 1e-12);
    }

    #[test]
    fn dual_norm_of_single_mode() {
        // f = a cos(2 pi x) e_y is solenoidal; |f|_{V'}^2 = |f|^2 / (4 pi^2).
        let xs = XSpace::new(16).unwrap();
        let f = xs.solenoidal_mode(1, 0, 2.0);
        let l2 = xs.norm_sq_spec(&f[0]) + xs.norm_sq_spec(&f[1]);
        let dual = xs.dual_norm_sq(&f);
        assert_abs_diff_eq!(dual, l2 / (TWO_PI * TWO_PI), epsilon = 1e-12);
    }

    #[test]
    fn poincare_constants() {
        assert_abs_diff_eq!(
            poincare_constant(Domain::Torus { side: 1.0 }).unwrap(),
            1.0 / TWO_PI,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            poincare_constant(Domain::NoSlipBox { side: 1.0, dim: 2 }).unwrap(),
            1.0 / (std::f64::consts::PI * 2.0_f64.sqrt()),
            epsilon = 1e-15
        );
        // Dilation scaling.
        assert_abs_diff_eq!(
            poincare_constant(Domain::Torus { side: 0.5 }).unwrap(),
            0.5 / TWO_PI,
            epsilon = 1e-15
        );
    }
}
