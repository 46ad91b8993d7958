//! Analysis-derived functionals and audits: relative entropy, Fisher
//! information, free energy, the discrete energy budget, the
//! Csiszar-Kullback and log-Sobolev gaps, theta-moment bounds and the
//! exponential decay-rate fit.
//!
//! Nonlinear functionals clip the density at zero node-wise; the solver
//! state itself is never mutated. Small quadrature-induced negativity is
//! reported through `psi_min`.

use crate::entropy::{entropy_f, entropy_family, log_young_residual};
use crate::error::{Error, Result};
use crate::fields::{ConfigurationDensity, QNodalEvaluator, Spaces, Velocity};
use crate::xspace::Domain;

/// Which gradient direction a Fisher information refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FisherDirection {
    X,
    Q,
}

/// Relative entropy `int int M F(max(psi_hat, 0)) dq dx`.
pub fn relative_entropy(spaces: &Spaces, psi: &ConfigurationDensity) -> Result<f64> {
    let ev = QNodalEvaluator::new(spaces);
    let weights = ev.node_weight.clone();
    let total = ev.map_reduce(
        psi,
        |_, vals| {
            let mut s = 0.0;
            for (v, w) in vals.iter().zip(&weights) {
                s += w * entropy_f(v.max(0.0)).expect("clipped argument");
            }
            s
        },
        |acc, v| acc + v,
        0.0,
    );
    Ok(total / psi.nx as f64)
}

/// Coefficients of `sqrt(max(psi_hat, 0))` projected onto the q-basis,
/// per x node.
fn sqrt_projection(spaces: &Spaces, psi: &ConfigurationDensity) -> ConfigurationDensity {
    let ev = QNodalEvaluator::new(spaces);
    let nq = psi.nq;
    let rows: Vec<Vec<f64>> = (0..psi.nx)
        .map(|x| {
            let mut buf = Vec::new();
            ev.values(psi.coeffs(x), &mut buf);
            let nodal: Vec<f64> = buf.iter().map(|&v| v.max(0.0).sqrt()).collect();
            let mut out = vec![0.0; nq];
            ev.project(&nodal, &mut out);
            out
        })
        .collect();
    let mut out = psi.zeros_like();
    for (x, row) in rows.into_iter().enumerate() {
        out.data[x * nq..(x + 1) * nq].copy_from_slice(&row);
    }
    out
}

/// Fisher information `4 int int M |grad sqrt(psi_hat)|^2` in the chosen
/// direction, gradients applied to the coefficient expansion of the root.
pub fn fisher_information(
    spaces: &Spaces,
    psi: &ConfigurationDensity,
    direction: FisherDirection,
) -> Result<f64> {
    let root = sqrt_projection(spaces, psi);
    Ok(match direction {
        FisherDirection::Q => 4.0 * quadratic_form_heat(spaces, &root),
        FisherDirection::X => 4.0 * grad_x_norm_sq(spaces, &root),
    })
}

fn quadratic_form_heat(spaces: &Spaces, f: &ConfigurationDensity) -> f64 {
    let s = &spaces.qs.s_heat;
    let nq = f.nq;
    let mut total = 0.0;
    let mut tmp = vec![0.0; nq];
    for x in 0..f.nx {
        let c = f.coeffs(x);
        for v in tmp.iter_mut() {
            *v = 0.0;
        }
        for (k, &ck) in c.iter().enumerate() {
            if ck != 0.0 {
                let col = s.column(k);
                for (tv, &mv) in tmp.iter_mut().zip(col.iter()) {
                    *tv += mv * ck;
                }
            }
        }
        total += c.iter().zip(&tmp).map(|(a, b)| a * b).sum::<f64>();
    }
    total / f.nx as f64
}

fn grad_x_norm_sq(spaces: &Spaces, f: &ConfigurationDensity) -> f64 {
    let xs = &spaces.xs;
    let nx = f.nx;
    let nq = f.nq;
    let mut total = 0.0;
    for k in 0..nq {
        let col: Vec<f64> = (0..nx).map(|x| f.data[x * nq + k]).collect();
        let spec = xs.to_spectral(&col);
        for (idx, c) in spec.iter().enumerate() {
            total += xs.laplace_symbol(idx) * c.norm_sqr();
        }
    }
    total
}

/// Csiszar-Kullback / log-Sobolev gap audit.
#[derive(Debug, Clone, Copy)]
pub struct InequalityAudit {
    /// `2 |Omega| RE - |psi_hat - 1|^2_{L1_M}`; nonnegative when the
    /// marginal is normalized.
    pub ck_gap: f64,
    /// `(1/2 kappa) I_q - int_Omega int M psi log(psi / zeta) dq dx`.
    pub ls_gap: f64,
    /// Minimum logarithmic-Young residual over sampled node pairs.
    pub log_young_min: f64,
}

pub fn inequality_audits(spaces: &Spaces, psi: &ConfigurationDensity) -> Result<InequalityAudit> {
    let kappa = spaces.model.kappa;
    let ev = QNodalEvaluator::new(spaces);
    let weights = ev.node_weight.clone();
    let c1 = spaces.params.chain.potential.growth_c1();
    let theta = spaces.params.chain.potential.theta;
    let node_s0 = ev.node_s[0].clone();
    let (re_sum, l1_sum, ent_sum, ly_min) = ev.map_reduce(
        psi,
        |_, vals| {
            let mut re = 0.0;
            let mut l1 = 0.0;
            let mut psilog = 0.0;
            let mut mass = 0.0;
            let mut ly = f64::INFINITY;
            for (n, (v, w)) in vals.iter().zip(&weights).enumerate() {
                let c = v.max(0.0);
                re += w * entropy_f(c).expect("clipped");
                l1 += w * (c - 1.0).abs();
                if c > 1e-300 {
                    psilog += w * c * c.ln();
                }
                mass += w * c;
                let s_arg = 0.5 * c1 * node_s0[n].powf(theta);
                ly = ly.min(log_young_residual(c, s_arg).expect("clipped"));
            }
            let ent = if mass > 1e-300 {
                psilog - mass * mass.ln()
            } else {
                0.0
            };
            (re, l1, ent, ly)
        },
        |(a, b, c, d), (re, l1, ent, ly)| (a + re, b + l1, c + ent, d.min(ly)),
        (0.0, 0.0, 0.0, f64::INFINITY),
    );
    let nx = psi.nx as f64;
    let re = re_sum / nx;
    let l1 = l1_sum / nx;
    let ent = ent_sum / nx;
    let fisher_q = fisher_information(spaces, psi, FisherDirection::Q)?;
    Ok(InequalityAudit {
        ck_gap: 2.0 * re - l1 * l1,
        ls_gap: fisher_q / (2.0 * kappa) - ent,
        log_young_min: ly_min,
    })
}

/// Proven lower bound on the free-energy decay rate:
/// `gamma_0 = min(nu / C_P^2, kappa a_0 / (2 lambda))`.
pub fn decay_rate_bound(nu: f64, lambda: f64, kappa: f64, a0: f64, domain: Domain) -> Result<f64> {
    let c_p = crate::xspace::poincare_constant(domain)?;
    Ok((nu / (c_p * c_p)).min(kappa * a0 / (2.0 * lambda)))
}

/// Per-step diagnostics. The first thirteen fields are the CSV contract;
/// the remainder feed the budget audit.
#[derive(Debug, Clone)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub kinetic_energy: f64,
    pub relative_entropy: f64,
    pub fisher_x: f64,
    pub fisher_q: f64,
    pub free_energy: f64,
    pub mass_min: f64,
    pub mass_max: f64,
    pub psi_min: f64,
    pub cutoff_active_fraction: f64,
    pub energy_budget_slack: f64,
    pub ck_gap: f64,
    pub ls_gap: f64,
    // Budget bookkeeping.
    pub u_norm_sq: f64,
    pub u_increment_sq: f64,
    pub grad_u_norm_sq: f64,
    pub fl_int: f64,
    pub psi_increment_sq: f64,
    pub f_dual_sq: f64,
    pub psi_max: f64,
    pub moment_theta: Vec<f64>,
    pub picard_iterations: usize,
    pub outer_iterations: usize,
}

impl DiagnosticsRecord {
    /// Free-energy identity `E = KE + k RE`, recomputed.
    pub fn free_energy_residual(&self, k: f64) -> f64 {
        (self.free_energy - (self.kinetic_energy + k * self.relative_entropy)).abs()
    }
}

/// Scalar state functionals bundled for one step.
pub struct StepInputs<'a> {
    pub t: f64,
    pub u: &'a Velocity,
    pub psi: &'a ConfigurationDensity,
    pub u_prev: &'a Velocity,
    pub psi_prev: &'a ConfigurationDensity,
    pub f_dual_sq: f64,
    pub picard_iterations: usize,
    pub outer_iterations: usize,
}

/// One full diagnostics pass over a state.
pub fn compute_record(spaces: &Spaces, cutoff: f64, inp: &StepInputs) -> Result<DiagnosticsRecord> {
    let k_stress = spaces.params.physical.k;
    let theta = spaces.params.chain.potential.theta;
    let ev = QNodalEvaluator::new(spaces);
    let weights = ev.node_weight.clone();
    let node_s = ev.node_s.clone();
    let significant = ev.significant.clone();
    let springs = spaces.qs.springs;

    struct PerX {
        re: f64,
        fl: f64,
        l1: f64,
        ent: f64,
        min: f64,
        max: f64,
        cut: f64,
        moments: Vec<f64>,
        sqrt_coeffs: Vec<f64>,
    }
    let nq = inp.psi.nq;
    let per: Vec<PerX> = ev.map_reduce(
        inp.psi,
        |_, vals| {
            let mut p = PerX {
                re: 0.0,
                fl: 0.0,
                l1: 0.0,
                ent: 0.0,
                min: f64::INFINITY,
                max: f64::NEG_INFINITY,
                cut: 0.0,
                moments: vec![0.0; springs],
                sqrt_coeffs: vec![0.0; nq],
            };
            let mut psilog = 0.0;
            let mut mass = 0.0;
            let mut roots = vec![0.0; vals.len()];
            for (n, (v, w)) in vals.iter().zip(&weights).enumerate() {
                let c = v.max(0.0);
                roots[n] = c.sqrt();
                p.re += w * entropy_f(c).expect("clipped");
                p.fl += w * entropy_family(c, cutoff, 0).expect("clipped");
                p.l1 += w * (c - 1.0).abs();
                if c > 1e-300 {
                    psilog += w * c * c.ln();
                }
                mass += w * c;
                if significant[n] {
                    p.min = p.min.min(*v);
                    p.max = p.max.max(*v);
                    if *v >= cutoff {
                        p.cut += w;
                    }
                }
                for i in 0..springs {
                    p.moments[i] += w * node_s[i][n].powf(theta) * c;
                }
            }
            ev.project(&roots, &mut p.sqrt_coeffs);
            p.ent = if mass > 1e-300 { psilog - mass * mass.ln() } else { 0.0 };
            p
        },
        |mut acc: Vec<PerX>, p| {
            acc.push(p);
            acc
        },
        Vec::new(),
    );

    let nx = inp.psi.nx as f64;
    let re: f64 = per.iter().map(|p| p.re).sum::<f64>() / nx;
    let fl: f64 = per.iter().map(|p| p.fl).sum::<f64>() / nx;
    let l1: f64 = per.iter().map(|p| p.l1).sum::<f64>() / nx;
    let ent: f64 = per.iter().map(|p| p.ent).sum::<f64>() / nx;
    let psi_min = per.iter().map(|p| p.min).fold(f64::INFINITY, f64::min);
    let psi_max = per.iter().map(|p| p.max).fold(f64::NEG_INFINITY, f64::max);
    let cut_frac: f64 = per.iter().map(|p| p.cut).sum::<f64>() / nx;
    let mut moment_theta = vec![0.0; springs];
    for p in &per {
        for i in 0..springs {
            moment_theta[i] += p.moments[i] / nx;
        }
    }

    let mut root = inp.psi.zeros_like();
    for (x, p) in per.iter().enumerate() {
        root.data[x * nq..(x + 1) * nq].copy_from_slice(&p.sqrt_coeffs);
    }
    let fisher_q = 4.0 * quadratic_form_heat(spaces, &root);
    let fisher_x = 4.0 * grad_x_norm_sq(spaces, &root);

    let (mass_min, mass_max) = inp.psi.marginal().min_max();
    let xs = &spaces.xs;
    let u_norm_sq = inp.u.norm_sq(xs);
    let kinetic_energy = 0.5 * u_norm_sq;
    let free_energy = kinetic_energy + k_stress * re;
    let kappa = spaces.model.kappa;

    Ok(DiagnosticsRecord {
        t: inp.t,
        kinetic_energy,
        relative_entropy: re,
        fisher_x,
        fisher_q,
        free_energy,
        mass_min,
        mass_max,
        psi_min,
        cutoff_active_fraction: cut_frac,
        energy_budget_slack: 0.0, // filled by the budget accumulator
        ck_gap: 2.0 * re - l1 * l1,
        ls_gap: fisher_q / (2.0 * kappa) - ent,
        u_norm_sq,
        u_increment_sq: inp.u.diff_norm_sq(inp.u_prev),
        grad_u_norm_sq: inp.u.grad_norm_sq(xs),
        fl_int: fl,
        psi_increment_sq: inp.psi.diff_norm_sq(inp.psi_prev),
        f_dual_sq: inp.f_dual_sq,
        psi_max,
        moment_theta,
        picard_iterations: inp.picard_iterations,
        outer_iterations: inp.outer_iterations,
    })
}

/// Free energy of a state: `1/2 |u|^2 + k int M F(psi_hat)`.
pub fn free_energy(spaces: &Spaces, u: &Velocity, psi: &ConfigurationDensity) -> Result<f64> {
    Ok(0.5 * u.norm_sq(&spaces.xs) + spaces.params.physical.k * relative_entropy(spaces, psi)?)
}

/// Initial quantities the budget audit measures against.
#[derive(Debug, Clone, Copy)]
pub struct BudgetBaseline {
    /// `|u_0|^2` of the raw datum.
    pub u0_raw_norm_sq: f64,
    /// `int M F(psi_hat_0)` of the raw datum.
    pub re0_raw: f64,
    /// `|u^0|^2` of the lifted initial velocity.
    pub u0_lift_norm_sq: f64,
    /// `int M F^L` of the scheme's initial density (lifted and capped).
    pub fl0_init: f64,
}

/// Cumulative and per-step slack of the discrete energy inequality.
#[derive(Debug, Clone)]
pub struct BudgetAudit {
    pub cumulative_slack: Vec<f64>,
    pub per_step_slack: Vec<f64>,
    pub min_cumulative: f64,
    pub min_per_step: f64,
    /// Steps whose cumulative slack dropped below `-1e-9`.
    pub flagged: Vec<usize>,
}

/// Evaluates both sides of the cumulative discrete energy inequality and
/// the one-step cut-off form; reports slack per step.
pub fn energy_budget_audit(
    spaces: &Spaces,
    baseline: &BudgetBaseline,
    dt: f64,
    cutoff: f64,
    records: &[DiagnosticsRecord],
) -> BudgetAudit {
    let p = &spaces.params.physical;
    let a0 = spaces.params.chain.a0;
    let (nu, k, lambda, eps) = (p.nu, p.k, p.lambda, p.epsilon);

    let mut cumulative_slack = Vec::with_capacity(records.len());
    let mut per_step_slack = Vec::with_capacity(records.len());
    let mut acc_incr_u = 0.0;
    let mut acc_grad = 0.0;
    let mut acc_incr_psi = 0.0;
    let mut acc_fx = 0.0;
    let mut acc_fq = 0.0;
    let mut acc_f2 = 0.0;
    let mut prev_u_sq = baseline.u0_lift_norm_sq;
    let mut prev_fl = baseline.fl0_init;
    for r in records {
        acc_incr_u += r.u_increment_sq;
        acc_grad += r.grad_u_norm_sq;
        acc_incr_psi += r.psi_increment_sq;
        acc_fx += r.fisher_x;
        acc_fq += r.fisher_q;
        acc_f2 += r.f_dual_sq;

        let lhs_cum = r.u_norm_sq
            + acc_incr_u
            + nu * dt * acc_grad
            + 2.0 * k * r.relative_entropy
            + (k / cutoff) * acc_incr_psi
            + 2.0 * k * eps * dt * acc_fx
            + (a0 * k / (2.0 * lambda)) * dt * acc_fq;
        let rhs_cum = baseline.u0_raw_norm_sq + (dt / nu) * acc_f2 + 2.0 * k * baseline.re0_raw;
        cumulative_slack.push(rhs_cum - lhs_cum);

        let lhs_step = r.u_norm_sq
            + r.u_increment_sq
            + nu * dt * r.grad_u_norm_sq
            + 2.0 * k * r.fl_int
            + (k / cutoff) * r.psi_increment_sq
            + 2.0 * k * eps * dt * r.fisher_x
            + (a0 * k / (2.0 * lambda)) * dt * r.fisher_q;
        let rhs_step = prev_u_sq + (dt / nu) * r.f_dual_sq + 2.0 * k * prev_fl;
        per_step_slack.push(rhs_step - lhs_step);
        prev_u_sq = r.u_norm_sq;
        prev_fl = r.fl_int;
    }
    let min_cumulative = cumulative_slack.iter().cloned().fold(f64::INFINITY, f64::min);
    let min_per_step = per_step_slack.iter().cloned().fold(f64::INFINITY, f64::min);
    let flagged = cumulative_slack
        .iter()
        .enumerate()
        .filter(|(_, s)| **s < -1e-9)
        .map(|(i, _)| i + 1)
        .collect();
    BudgetAudit {
        cumulative_slack,
        per_step_slack,
        min_cumulative,
        min_per_step,
        flagged,
    }
}

/// Least-squares exponential rate of `|u|^2 + 2k RE` against time.
/// Returns the fitted decay rate (positive for decay).
pub fn decay_fit(k_stress: f64, records: &[DiagnosticsRecord]) -> Result<f64> {
    if records.len() < 20 {
        return Err(Error::InsufficientSignal(format!(
            "decay fit needs at least 20 steps, got {}",
            records.len()
        )));
    }
    let floor = 1e3 * f64::EPSILON;
    let pts: Vec<(f64, f64)> = records
        .iter()
        .map(|r| (r.t, r.u_norm_sq + 2.0 * k_stress * r.relative_entropy))
        .filter(|(_, y)| *y > floor)
        .collect();
    if pts.len() < 10 {
        return Err(Error::InsufficientSignal(
            "decay quantity is below the floor almost everywhere".into(),
        ));
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|(t, _)| t).sum();
    let sy: f64 = pts.iter().map(|(_, y)| y.ln()).sum();
    let sxx: f64 = pts.iter().map(|(t, _)| t * t).sum();
    let sxy: f64 = pts.iter().map(|(t, y)| t * y.ln()).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-30 {
        return Err(Error::InsufficientSignal("degenerate time window".into()));
    }
    let slope = (n * sxy - sx * sy) / denom;
    Ok(-slope)
}

/// Theta-moment values against the a-priori bound
/// `(1 / k c_1) B^2 + C_exp` per spring.
#[derive(Debug, Clone)]
pub struct MomentAudit {
    pub values: Vec<f64>,
    pub bound: f64,
    pub pass: bool,
}

pub fn moment_audit(
    spaces: &Spaces,
    psi: &ConfigurationDensity,
    b_squared: f64,
) -> Result<MomentAudit> {
    let theta = spaces.params.chain.potential.theta;
    let c1 = spaces.params.chain.potential.growth_c1();
    let k = spaces.params.physical.k;
    let ev = QNodalEvaluator::new(spaces);
    let weights = ev.node_weight.clone();
    let node_s = ev.node_s.clone();
    let springs = spaces.qs.springs;
    let sums = ev.map_reduce(
        psi,
        |_, vals| {
            let mut m = vec![0.0; springs];
            for (n, (v, w)) in vals.iter().zip(&weights).enumerate() {
                let c = v.max(0.0);
                for i in 0..springs {
                    m[i] += w * node_s[i][n].powf(theta) * c;
                }
            }
            m
        },
        |mut acc: Vec<f64>, m| {
            if acc.is_empty() {
                acc = m;
            } else {
                for (a, b) in acc.iter_mut().zip(m) {
                    *a += b;
                }
            }
            acc
        },
        Vec::new(),
    );
    let values: Vec<f64> = sums.iter().map(|s| s / psi.nx as f64).collect();
    let c_exp = 2.0 / c1 * spaces.model.moment_exp_tail()?;
    let bound = b_squared / (k * c1) + c_exp;
    let pass = values.iter().all(|v| *v <= bound);
    Ok(MomentAudit { values, bound, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{build_spaces, Resolution};
    use crate::params::{rouse_matrix_with, validate_params, PhysicalParams, PotentialSpec};
    use crate::xspace::TWO_PI;
    use approx::assert_abs_diff_eq;

    fn spaces(q_degree: usize) -> Spaces {
        let chain = rouse_matrix_with(1, PotentialSpec { theta: 2.0, s_inf: 1e8 }).unwrap();
        let params = validate_params(PhysicalParams::default(), chain).unwrap();
        build_spaces(
            params,
            Resolution {
                x_modes: 8,
                q_degree,
            },
        )
        .unwrap()
    }

    #[test]
    fn relative_entropy_reference_values() {
        let sp = spaces(4);
        let one = ConfigurationDensity::constant(&sp, 1.0);
        assert_abs_diff_eq!(relative_entropy(&sp, &one).unwrap(), 0.0, epsilon = 1e-13);
        let e = ConfigurationDensity::constant(&sp, std::f64::consts::E);
        assert_abs_diff_eq!(relative_entropy(&sp, &e).unwrap(), 1.0, epsilon = 1e-12);
        let zero = ConfigurationDensity::constant(&sp, 0.0);
        assert_abs_diff_eq!(relative_entropy(&sp, &zero).unwrap(), 1.0, epsilon = 1e-13);
    }

    #[test]
    fn fisher_vanishes_on_constants_and_scales() {
        let sp = spaces(4);
        let c = ConfigurationDensity::constant(&sp, 0.8);
        assert!(fisher_information(&sp, &c, FisherDirection::Q).unwrap() < 1e-12);
        assert!(fisher_information(&sp, &c, FisherDirection::X).unwrap() < 1e-12);

        // Homogeneity: I(c psi) = c I(psi).
        let mut psi = ConfigurationDensity::constant(&sp, 1.0);
        for x in 0..psi.nx {
            psi.coeffs_mut(x)[1] = 0.2;
        }
        let mut psi3 = psi.clone();
        for v in psi3.data.iter_mut() {
            *v *= 3.0;
        }
        let i1 = fisher_information(&sp, &psi, FisherDirection::Q).unwrap();
        let i3 = fisher_information(&sp, &psi3, FisherDirection::Q).unwrap();
        assert_abs_diff_eq!(i3, 3.0 * i1, epsilon = 1e-12 * i3.max(1.0));
    }

    #[test]
    fn fisher_linearization_matches_quadrature() {
        // psi = 1 + a phi_1: I_q = a^2 int M |grad phi_1|^2 (1 + O(a)).
        let sp = spaces(6);
        let a = 1e-4;
        let mut psi = ConfigurationDensity::constant(&sp, 1.0);
        let k1 = (0..sp.qs.n_q).find(|&k| sp.qs.total_degree(k) == 1).unwrap();
        for x in 0..psi.nx {
            psi.coeffs_mut(x)[k1] = a;
        }
        let iq = fisher_information(&sp, &psi, FisherDirection::Q).unwrap();
        // int M |grad phi_1|^2 = 1 for the degree-1 Hermite mode.
        assert_abs_diff_eq!(iq, a * a, epsilon = 1e-8 * a * a + 1e-14);
    }

    #[test]
    fn fisher_matches_independent_finite_difference_quadrature() {
        // Evaluate 4 int M |grad_q sqrt(psi)|^2 on the refined rule with
        // centered differences of the root, fully outside the coefficient
        // path used by fisher_information.
        let sp = spaces(6);
        let mut psi = ConfigurationDensity::constant(&sp, 1.0);
        let k1 = (0..sp.qs.n_q).find(|&k| sp.qs.total_degree(k) == 1).unwrap();
        for x in 0..psi.nx {
            psi.coeffs_mut(x)[k1] = 0.02;
        }
        let iq = fisher_information(&sp, &psi, FisherDirection::Q).unwrap();

        let fine = &sp.model.refined;
        let basis = &sp.qs.spring;
        let rec = &sp.model.proto_recurrence;
        let h = 1e-5;
        let mut vals = vec![0.0; sp.qs.n_q];
        let eval_psi = |coeffs: &[f64], x: f64, y: f64, vals: &mut [f64]| -> f64 {
            basis.eval_point(rec, x, y, vals);
            coeffs.iter().zip(vals.iter()).map(|(c, v)| c * v).sum()
        };
        let coeffs = psi.coeffs(0).to_vec();
        let mut direct = 0.0;
        for n in 0..fine.len() {
            let c = fine.coords[n];
            let root = |x: f64, y: f64, vals: &mut [f64]| eval_psi(&coeffs, x, y, vals).max(0.0).sqrt();
            let gx = (root(c[0] + h, c[1], &mut vals) - root(c[0] - h, c[1], &mut vals)) / (2.0 * h);
            let gy = (root(c[0], c[1] + h, &mut vals) - root(c[0], c[1] - h, &mut vals)) / (2.0 * h);
            direct += fine.weights[n] * (gx * gx + gy * gy);
        }
        direct *= 4.0;
        // The coefficient path truncates sqrt(psi) at the basis degree;
        // for this small perturbation the two routes agree to ~1e-8.
        assert_abs_diff_eq!(iq, direct, epsilon = 1e-8);
    }

    #[test]
    fn gaps_vanish_at_equilibrium_and_stay_nonnegative() {
        let sp = spaces(5);
        let one = ConfigurationDensity::constant(&sp, 1.0);
        let audit = inequality_audits(&sp, &one).unwrap();
        assert_abs_diff_eq!(audit.ck_gap, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(audit.ls_gap, 0.0, epsilon = 1e-12);
        assert!(audit.log_young_min >= -1e-12);

        let mut psi = ConfigurationDensity::constant(&sp, 1.0);
        for x in 0..psi.nx {
            psi.coeffs_mut(x)[1] = 0.15;
            psi.coeffs_mut(x)[3] = -0.05;
        }
        let audit = inequality_audits(&sp, &psi).unwrap();
        assert!(audit.ck_gap >= -1e-9, "ck {}", audit.ck_gap);
        assert!(audit.ls_gap >= -1e-9, "ls {}", audit.ls_gap);
    }

    #[test]
    fn decay_rate_bound_reference_values() {
        let torus = Domain::Torus { side: 1.0 };
        // nu = 1, lambda = 1, kappa = 1, a0 = 2: min(4 pi^2, 1) = 1.
        let g = decay_rate_bound(1.0, 1.0, 1.0, 2.0, torus).unwrap();
        assert_abs_diff_eq!(g, 1.0, epsilon = 1e-14);
        let g2 = decay_rate_bound(1e-3, 1.0, 1.0, 2.0, torus).unwrap();
        assert_abs_diff_eq!(g2, 4.0 * std::f64::consts::PI.powi(2) * 1e-3, epsilon = 1e-12);
        // lambda large: entropy branch dominates and tends to zero.
        let g3 = decay_rate_bound(1.0, 1e12, 1.0, 2.0, torus).unwrap();
        assert!(g3 < 1e-11);
    }

    #[test]
    fn moment_values_for_equilibrium() {
        // int (|q|^2/2)^2 M dq = 2 for the 2D Gaussian.
        let sp = spaces(4);
        let one = ConfigurationDensity::constant(&sp, 1.0);
        let audit = moment_audit(&sp, &one, 1.0).unwrap();
        assert_abs_diff_eq!(audit.values[0], 2.0, epsilon = 1e-10);
        let zero = ConfigurationDensity::constant(&sp, 0.0);
        let audit0 = moment_audit(&sp, &zero, 1.0).unwrap();
        assert_abs_diff_eq!(audit0.values[0], 0.0, epsilon = 1e-14);
        assert!(audit0.pass);
    }

    fn dummy_record(t: f64) -> DiagnosticsRecord {
        DiagnosticsRecord {
            t,
            kinetic_energy: 0.0,
            relative_entropy: 0.0,
            fisher_x: 0.0,
            fisher_q: 0.0,
            free_energy: 0.0,
            mass_min: 1.0,
            mass_max: 1.0,
            psi_min: 1.0,
            cutoff_active_fraction: 0.0,
            energy_budget_slack: 0.0,
            ck_gap: 0.0,
            ls_gap: 0.0,
            u_norm_sq: 0.0,
            u_increment_sq: 0.0,
            grad_u_norm_sq: 0.0,
            fl_int: 0.0,
            psi_increment_sq: 0.0,
            f_dual_sq: 0.0,
            psi_max: 1.0,
            moment_theta: vec![0.0],
            picard_iterations: 0,
            outer_iterations: 0,
        }
    }

    #[test]
    fn decay_fit_recovers_synthetic_rate() {
        let mut records = Vec::new();
        let gamma = 1.7;
        for n in 0..40 {
            let t = 0.05 * (n + 1) as f64;
            let y = 2.0 * (-gamma * t).exp();
            let mut r = dummy_record(t);
            r.u_norm_sq = y;
            r.relative_entropy = 0.0;
            records.push(r);
        }
        let rate = decay_fit(1.0, &records).unwrap();
        assert_abs_diff_eq!(rate, gamma, epsilon = 1e-9);
    }

    #[test]
    fn decay_fit_rejects_flat_equilibrium() {
        let mut records = Vec::new();
        for n in 0..40 {
            let mut r = dummy_record(0.05 * (n + 1) as f64);
            r.u_norm_sq = 0.0;
            r.relative_entropy = 0.0;
            records.push(r);
        }
        assert!(matches!(
            decay_fit(1.0, &records),
            Err(Error::InsufficientSignal(_))
        ));
    }

    #[test]
    fn budget_audit_flags_injected_violation() {
        let sp = spaces(3);
        let baseline = BudgetBaseline {
            u0_raw_norm_sq: 1.0,
            re0_raw: 0.0,
            u0_lift_norm_sq: 1.0,
            fl0_init: 0.0,
        };
        let mut records = Vec::new();
        for n in 0..5 {
            let mut r = dummy_record(0.1 * (n + 1) as f64);
            r.u_norm_sq = 0.5;
            records.push(r);
        }
        let ok = energy_budget_audit(&sp, &baseline, 0.1, 10.0, &records);
        assert!(ok.flagged.is_empty());
        assert!(ok.min_cumulative >= 0.0);
        // Inflate a later velocity norm beyond the budget.
        records[3].u_norm_sq = 5.0;
        let bad = energy_budget_audit(&sp, &baseline, 0.1, 10.0, &records);
        assert_eq!(bad.flagged, vec![4]);
    }

    #[test]
    fn equilibrium_record_is_clean() {
        let sp = spaces(4);
        let psi = ConfigurationDensity::constant(&sp, 1.0);
        let u = Velocity::zero(&sp.xs);
        let rec = compute_record(
            &sp,
            10.0,
            &StepInputs {
                t: 0.1,
                u: &u,
                psi: &psi,
                u_prev: &u,
                psi_prev: &psi,
                f_dual_sq: 0.0,
                picard_iterations: 1,
                outer_iterations: 1,
            },
        )
        .unwrap();
        assert_abs_diff_eq!(rec.free_energy, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rec.mass_min, 1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(rec.mass_max, 1.0, epsilon = 1e-13);
        assert!(rec.psi_min > 0.99 && rec.psi_max < 1.01);
        assert_eq!(rec.cutoff_active_fraction, 0.0);
        assert!(rec.free_energy_residual(sp.params.physical.k) < 1e-14);
        // Free energy additivity on a non-trivial state.
        let mut psi2 = ConfigurationDensity::constant(&sp, 1.0);
        for x in 0..psi2.nx {
            psi2.coeffs_mut(x)[2] = 0.1;
        }
        let u2 = Velocity { spec: sp.xs.taylor_green(0.2) };
        let fe = free_energy(&sp, &u2, &psi2).unwrap();
        let ke = 0.5 * u2.norm_sq(&sp.xs);
        let re = relative_entropy(&sp, &psi2).unwrap();
        assert_abs_diff_eq!(fe, ke + sp.params.physical.k * re, epsilon = 1e-13);
        // Parseval cross-check of the kinetic energy for a single mode.
        let tg_energy = 0.5 * (0.2_f64 * 0.2 * 0.5);
        assert_abs_diff_eq!(ke, tg_energy, epsilon = 1e-12);
        let _ = TWO_PI;
    }
}
