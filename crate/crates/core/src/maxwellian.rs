//! Hookean-type spring potentials, the Maxwellian weight, its quadrature
//! and moments, and the Bakry-Emery (log-Sobolev) modulus.
//!
//! The per-spring Maxwellian is radial in R^2; integrals against it are
//! computed with a Gauss rule in the radius (built from the weight's own
//! moments, with the potential crossover honoured as a panel break) crossed
//! with a uniform angular grid, which integrates polynomial integrands
//! exactly up to a recorded total degree.

use crate::error::{Error, Result};
use crate::params::PotentialSpec;
use crate::quad1d::{self, DiscretizedWeight, Recurrence};

/// Spring potential of Hookean type: `U(s) = s` below the crossover and
/// `(s_inf/theta) [ (s/s_inf)^theta + (theta - 1) ]` above it; C^1 at the
/// crossover. `order` 0 gives the value, 1 the derivative.
pub fn potential(s: f64, spec: &PotentialSpec, order: u8) -> Result<f64> {
    if s < 0.0 {
        return Err(Error::Domain(format!("potential argument s = {s} < 0")));
    }
    match order {
        0 => Ok(potential_value(s, spec)),
        1 => Ok(potential_derivative(s, spec)),
        _ => Err(Error::Domain(format!("order {order} not in {{0,1}}"))),
    }
}

#[inline]
pub(crate) fn potential_value(s: f64, spec: &PotentialSpec) -> f64 {
    if s <= spec.s_inf || spec.s_inf == 0.0 && s == 0.0 {
        s
    } else if spec.s_inf == 0.0 {
        // Degenerate crossover at the origin: pure power law.
        s.powf(spec.theta) / spec.theta
    } else {
        spec.s_inf / spec.theta * ((s / spec.s_inf).powf(spec.theta) + (spec.theta - 1.0))
    }
}

#[inline]
pub(crate) fn potential_derivative(s: f64, spec: &PotentialSpec) -> f64 {
    if s <= spec.s_inf {
        1.0
    } else {
        (s / spec.s_inf).powf(spec.theta - 1.0)
    }
}

#[inline]
pub(crate) fn potential_second_derivative(s: f64, spec: &PotentialSpec) -> f64 {
    if s <= spec.s_inf {
        0.0
    } else {
        (spec.theta - 1.0) / spec.s_inf * (s / spec.s_inf).powf(spec.theta - 2.0)
    }
}

/// Invert U on [0, inf) by bisection.
fn potential_inverse(u: f64, spec: &PotentialSpec) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    let mut hi = spec.s_inf.max(1.0);
    while potential_value(hi, spec) < u {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if potential_value(mid, spec) < u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Truncation radius: beyond `R` the weighted integrands
/// `r^(degree+1) e^{-U(r^2/2)}` are below the target tail mass.
pub(crate) fn truncation_radius(spec: &PotentialSpec, degree: usize) -> f64 {
    let mut r: f64 = (2.0 * potential_inverse(42.0, spec)).sqrt();
    for _ in 0..4 {
        let cap = 42.0 + (degree as f64 + 3.0) * r.max(std::f64::consts::E).ln();
        r = (2.0 * potential_inverse(cap, spec)).sqrt();
    }
    r
}

/// Quadrature over one spring's configuration plane with respect to the
/// normalized Maxwellian `M_i`. Weights sum to one.
#[derive(Debug, Clone)]
pub struct SpringQuadrature {
    /// Node coordinates (x, y).
    pub coords: Vec<[f64; 2]>,
    /// Normalized weights (include the Maxwellian; sum to 1).
    pub weights: Vec<f64>,
    /// Per-node radius squared over two, `s = |q|^2 / 2`.
    pub s_values: Vec<f64>,
    /// Truncation radius.
    pub radius: f64,
    /// Total polynomial degree integrated exactly.
    pub exactness: usize,
    /// Physical normalization constant `Z = int exp(-U) dq`.
    pub z_const: f64,
    n_radial: usize,
    n_angular: usize,
}

impl SpringQuadrature {
    /// Rule exact for polynomial integrands of total degree `<= degree`
    /// against the Maxwellian.
    pub fn for_degree(spec: &PotentialSpec, degree: usize) -> Result<Self> {
        let n_radial = degree / 2 + 3;
        let n_angular = (degree + 4).next_multiple_of(2);
        Self::build(spec, degree, n_radial, n_angular)
    }

    fn build(spec: &PotentialSpec, degree: usize, n_radial: usize, n_angular: usize) -> Result<Self> {
        if n_radial < 2 || n_angular < 4 {
            return Err(Error::Resolution("quadrature resolution too small".into()));
        }
        let radius = truncation_radius(spec, degree);
        let r_kink = (2.0 * spec.s_inf).sqrt();
        let weight = |r: f64| r * (-potential_value(0.5 * r * r, spec)).exp();
        // Separate Gauss rules on either side of the potential crossover so
        // piecewise-smooth integrands are integrated panel-exactly.
        let mut rn = Vec::new();
        let mut rw = Vec::new();
        let mut edges = vec![0.0];
        if r_kink > 0.0 && r_kink < radius {
            edges.push(r_kink);
        }
        edges.push(radius);
        for seg in edges.windows(2) {
            let (pn, pw) = quad1d::gauss_rule_for_weight(weight, seg[0], seg[1], &[], n_radial)?;
            rn.extend(pn);
            rw.extend(pw);
        }
        let mass: f64 = rw.iter().sum();
        if !(mass > 0.0) {
            return Err(Error::Resolution("radial weight mass vanished".into()));
        }
        let z_const = 2.0 * std::f64::consts::PI * mass;
        let mut coords = Vec::with_capacity(n_radial * n_angular);
        let mut weights = Vec::with_capacity(n_radial * n_angular);
        let mut s_values = Vec::with_capacity(n_radial * n_angular);
        for (r, wr) in rn.iter().zip(&rw) {
            for b in 0..n_angular {
                let th = 2.0 * std::f64::consts::PI * (b as f64 + 0.5) / n_angular as f64;
                coords.push([r * th.cos(), r * th.sin()]);
                weights.push(wr / (mass * n_angular as f64));
                s_values.push(0.5 * r * r);
            }
        }
        Ok(SpringQuadrature {
            coords,
            weights,
            s_values,
            radius,
            exactness: (2 * n_radial - 1).min(n_angular - 1).min(degree + 2),
            z_const,
            n_radial,
            n_angular,
        })
    }

    /// A twin rule with doubled resolution, for truncation-residual
    /// estimates.
    pub fn refined(&self, spec: &PotentialSpec) -> Result<Self> {
        Self::build(
            spec,
            2 * self.exactness,
            2 * self.n_radial,
            2 * self.n_angular,
        )
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Integrate `f(q)` against the normalized Maxwellian.
    pub fn integrate(&self, mut f: impl FnMut(&[f64; 2], f64) -> f64) -> f64 {
        self.coords
            .iter()
            .zip(&self.weights)
            .zip(&self.s_values)
            .map(|((c, w), s)| w * f(c, *s))
            .sum()
    }
}

/// The built Maxwellian model for a chain of identical springs: potential,
/// per-spring quadrature, normalization, cached moments and the
/// Bakry-Emery modulus.
#[derive(Debug, Clone)]
pub struct MaxwellianModel {
    pub potential: PotentialSpec,
    pub springs: usize,
    pub dim: usize,
    pub quad: SpringQuadrature,
    /// Twin rule with doubled resolution, for truncation-residual
    /// estimates and non-polynomial projections.
    pub refined: SpringQuadrature,
    /// 1D recurrence of the proto weight `exp(-U(x^2/2))` used to seed the
    /// Galerkin basis.
    pub proto_recurrence: Recurrence,
    pub proto_radius: f64,
    /// Bakry-Emery modulus: lower bound on the Hessian of `-log M`.
    pub kappa: f64,
    /// `int M |q|^2 dq` over the whole configuration space.
    pub c_m: f64,
}

impl MaxwellianModel {
    /// Build the model; `degree` is the maximal per-coordinate polynomial
    /// degree the quadrature must pair exactly (basis degree).
    pub fn build(spec: PotentialSpec, springs: usize, dim: usize, degree: usize) -> Result<Self> {
        spec.validate()?;
        if dim != 2 {
            return Err(Error::Unsupported(
                "configuration-space discretization is implemented for d = 2".into(),
            ));
        }
        if springs < 1 {
            return Err(Error::invalid("springs", "need at least one spring"));
        }
        if degree < 1 {
            return Err(Error::Resolution("q-degree must be at least 1".into()));
        }
        // Products of two basis functions with the drag/stress monomials
        // reach total degree 4*degree + 4.
        let quad = SpringQuadrature::for_degree(&spec, 4 * degree + 6)?;
        let refined = quad.refined(&spec)?;

        // 1D proto weight on [-R, R] with kink break points.
        let proto_radius = truncation_radius(&spec, 2 * degree + 4);
        let xk = (2.0 * spec.s_inf).sqrt();
        let w1 = |x: f64| (-potential_value(0.5 * x * x, &spec)).exp();
        let mut breaks = vec![-proto_radius];
        if xk < proto_radius {
            breaks.push(-xk);
            breaks.push(0.0);
            breaks.push(xk);
        } else {
            breaks.push(0.0);
        }
        breaks.push(proto_radius);
        let disc = DiscretizedWeight::composite(w1, &breaks, 160);
        let proto_recurrence = quad1d::stieltjes(&disc, degree + 2)?;

        let kappa = bakry_emery_modulus_with(&spec, &quad)?;
        let per_spring_q2 = quad.integrate(|_, s| 2.0 * s);
        let c_m = springs as f64 * per_spring_q2;

        Ok(MaxwellianModel {
            potential: spec,
            springs,
            dim,
            quad,
            refined,
            proto_recurrence,
            proto_radius,
            kappa,
            c_m,
        })
    }

    /// Normalized Maxwellian density `M(q) = prod_i M_i(q_i)` at a full
    /// configuration vector of length `springs * dim`.
    pub fn density(&self, q: &[f64]) -> Result<f64> {
        if q.len() != self.springs * self.dim {
            return Err(Error::State(format!(
                "configuration vector has length {}, expected {}",
                q.len(),
                self.springs * self.dim
            )));
        }
        if !(self.quad.z_const > 0.0) {
            return Err(Error::State("model is not normalized".into()));
        }
        let mut m = 1.0;
        for i in 0..self.springs {
            let s = 0.5 * (q[2 * i] * q[2 * i] + q[2 * i + 1] * q[2 * i + 1]);
            m *= (-potential_value(s, &self.potential)).exp() / self.quad.z_const;
        }
        Ok(m)
    }

    /// `int M (1 + |q|)^p dq`, supporting chains of one or two springs.
    pub fn moment_one_plus_pow(&self, p: u32) -> Result<f64> {
        let eval = |rule: &SpringQuadrature| -> f64 {
            match self.springs {
                1 => rule.integrate(|_, s| (1.0 + (2.0 * s).sqrt()).powi(p as i32)),
                2 => {
                    let mut total = 0.0;
                    for (wa, sa) in rule.weights.iter().zip(&rule.s_values) {
                        for (wb, sb) in rule.weights.iter().zip(&rule.s_values) {
                            total += wa * wb * (1.0 + (2.0 * (sa + sb)).sqrt()).powi(p as i32);
                        }
                    }
                    total
                }
                _ => f64::NAN,
            }
        };
        if self.springs > 2 {
            return Err(Error::Unsupported(
                "full-configuration moments implemented for K <= 2".into(),
            ));
        }
        let coarse = eval(&self.quad);
        let fine = eval(&self.refined);
        let resid = (coarse - fine).abs() / fine.abs().max(1.0);
        if resid > 1e-10 {
            return Err(Error::Accuracy(format!(
                "quadrature truncation residual {resid:.2e} exceeds 1e-10 for (1+|q|)^{p}"
            )));
        }
        Ok(fine)
    }

    /// Per-spring moment `int M_i (|q_i|^2 / 2)^theta dq_i`.
    pub fn moment_theta(&self) -> Result<f64> {
        let th = self.potential.theta;
        let coarse = self.quad.integrate(|_, s| s.powf(th));
        let fine = self.refined.integrate(|_, s| s.powf(th));
        let resid = (coarse - fine).abs() / fine.abs().max(1.0);
        if resid > 1e-10 {
            return Err(Error::Accuracy(format!(
                "quadrature truncation residual {resid:.2e} exceeds 1e-10 for the theta moment"
            )));
        }
        Ok(fine)
    }

    /// Finiteness check quantity `int [1 + U^2 + (U')^2] M_i dq_i`.
    pub fn moment_u_bound(&self) -> f64 {
        self.quad.integrate(|_, s| {
            let u = potential_value(s, &self.potential);
            let up = potential_derivative(s, &self.potential);
            1.0 + u * u + up * up
        })
    }

    /// `int M_i exp((c1/2) (|q_i|^2/2)^theta) dq_i`, the tail constant of
    /// the theta-moment bound.
    pub fn moment_exp_tail(&self) -> Result<f64> {
        let c1 = self.potential.growth_c1();
        let th = self.potential.theta;
        let coarse = self.quad.integrate(|_, s| (0.5 * c1 * s.powf(th)).exp());
        let fine = self.refined.integrate(|_, s| (0.5 * c1 * s.powf(th)).exp());
        let resid = (coarse - fine).abs() / fine.abs().max(1.0);
        if resid > 1e-8 {
            return Err(Error::Accuracy(format!(
                "exp-tail moment residual {resid:.2e} exceeds 1e-8"
            )));
        }
        Ok(fine)
    }

    /// Kramers stress norm constant `(int M (U')^2 |q|^4 dq)^(1/2)` per
    /// spring.
    pub fn stress_bound_constant(&self) -> f64 {
        self.quad
            .integrate(|_, s| {
                let up = potential_derivative(s, &self.potential);
                up * up * (2.0 * s) * (2.0 * s)
            })
            .sqrt()
    }
}

/// Bakry-Emery modulus: the minimum over quadrature nodes of the smallest
/// eigenvalue of the per-spring Hessian of `U_i(|q_i|^2/2)`. The Hessian is
/// `U'' q q^T + U' I`, with eigenvalues `U'` and `U' + 2 s U''`.
pub fn bakry_emery_modulus(spec: &PotentialSpec) -> Result<f64> {
    let quad = SpringQuadrature::for_degree(spec, 16)?;
    bakry_emery_modulus_with(spec, &quad)
}

fn bakry_emery_modulus_with(spec: &PotentialSpec, quad: &SpringQuadrature) -> Result<f64> {
    let mut kappa = 1.0_f64; // value at the origin: U'(0) = 1, U'' term vanishes
    for &s in &quad.s_values {
        let up = potential_derivative(s, spec);
        let upp = potential_second_derivative(s, spec);
        let min_eig = up.min(up + 2.0 * s * upp);
        if min_eig <= 0.0 {
            return Err(Error::State(format!(
                "Maxwellian loses log-concavity at s = {s} (eigenvalue {min_eig})"
            )));
        }
        kappa = kappa.min(min_eig);
    }
    Ok(kappa)
}
