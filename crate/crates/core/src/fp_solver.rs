//! One implicit-Euler Fokker-Planck step with microscopic cut-off, the
//! marginal advection-diffusion solve used as its independent oracle, and
//! the initial-datum lifting.
//!
//! The step solves the weighted Galerkin system
//! `mass + dt [ eps grad_x - u_prev psi ] . grad_x + (dt/2 lambda) A-stiffness`
//! against the previous density plus the explicit drag pairing
//! `dt sum_i (sigma(u_curr) q_i) beta^L(psi) . grad_qi`, with the cut-off
//! nonlinearity resolved by Picard iteration. The linear solves are
//! matrix-free GMRES, preconditioned by the exact inverse of the symmetric
//! part in the (x-Fourier) x (q-eigen) frame.

use crate::entropy;
use crate::error::{Error, Result};
use crate::fields::{
    apply_q_matrix, transform_x_fields, ConfigurationDensity, MarginalDensity, QNodalEvaluator,
    Spaces, Velocity,
};
use crate::krylov::{gmres, GmresOptions, GmresStats};
use crate::xspace::{RealField, SpecField, XSpace};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;

pub const PICARD_TOL: f64 = 1e-10;
pub const PICARD_MAX_ITERS: usize = 50;
const PICARD_DAMPING_AFTER: usize = 10;

#[derive(Debug, Clone, Copy, Default)]
pub struct FpStepStats {
    pub picard_iterations: usize,
    pub gmres_iterations: usize,
    pub nodal_max: f64,
    pub nodal_min: f64,
    pub cutoff_active: bool,
    pub delta_used: Option<f64>,
    /// Whether `nodal_min`/`nodal_max` come from an actual nodal sweep.
    pub verified: bool,
}

/// Applies the implicit part of the Fokker-Planck form:
/// `out = v + dt eps (-Lap_x) v + dt (u_prev . grad_x) v + (dt/2 lambda) S_A v`.
fn fp_apply(
    spaces: &Spaces,
    dt: f64,
    u_prev_nodal: &[RealField; 2],
    v: &ConfigurationDensity,
    out: &mut ConfigurationDensity,
) {
    let lambda = spaces.params.physical.lambda;
    let eps = spaces.params.physical.epsilon;
    let scale = dt / (2.0 * lambda);
    // q-stiffness per x node.
    apply_q_matrix(&spaces.qs.s_rouse, v, out);
    for (o, i) in out.data.iter_mut().zip(&v.data) {
        *o = i + scale * *o;
    }
    // x-transport and diffusion per q coefficient.
    let xs = &spaces.xs;
    let nx = v.nx;
    let nq = v.nq;
    let columns: Vec<Vec<f64>> = (0..nq)
        .into_par_iter()
        .map(|k| {
            let col: Vec<f64> = (0..nx).map(|x| v.data[x * nq + k]).collect();
            let mut spec = xs.to_spectral(&col);
            xs.dealias(&mut spec);
            let conv = xs.convect_scalar(u_prev_nodal, &spec);
            for (idx, c) in spec.iter_mut().enumerate() {
                *c = dt * (eps * xs.laplace_symbol(idx) * *c + conv[idx]);
            }
            xs.to_real(&spec)
        })
        .collect();
    for (k, col) in columns.iter().enumerate() {
        for x in 0..nx {
            out.data[x * nq + k] += col[x];
        }
    }
}

/// Exact inverse of `mass + dt eps (-Lap_x) + (dt / 2 lambda) S_A` in the
/// joint (Fourier x q-eigen) frame.
fn fp_precondition(spaces: &Spaces, dt: f64, r: &ConfigurationDensity, out: &mut ConfigurationDensity) {
    let lambda = spaces.params.physical.lambda;
    let eps = spaces.params.physical.epsilon;
    let scale = dt / (2.0 * lambda);
    let v = &spaces.qs.rouse_vectors;
    let nq = r.nq;
    // Rotate into the eigenbasis: tilde_x = V^T r_x.
    let mut rotated = r.zeros_like();
    rotated
        .data
        .par_chunks_mut(nq)
        .zip(r.data.par_chunks(nq))
        .for_each(|(o, c)| {
            for k in 0..nq {
                let mut s = 0.0;
                let col = v.column(k);
                for (cv, &mv) in c.iter().zip(col.iter()) {
                    s += mv * cv;
                }
                o[k] = s;
            }
        });
    // Divide by the symbol per eigen-column in Fourier space.
    let mut divided = r.zeros_like();
    let xs = &spaces.xs;
    let values = &spaces.qs.rouse_values;
    transform_x_fields(xs, &rotated, &mut divided, |k, spec| {
        let lam = values[k].max(0.0);
        for (idx, c) in spec.iter_mut().enumerate() {
            *c /= 1.0 + dt * eps * xs.laplace_symbol(idx) + scale * lam;
        }
    });
    // Rotate back: out_x = V tilde_x.
    out.data
        .par_chunks_mut(nq)
        .zip(divided.data.par_chunks(nq))
        .for_each(|(o, c)| {
            for ov in o.iter_mut() {
                *ov = 0.0;
            }
            for (k, &ck) in c.iter().enumerate() {
                if ck != 0.0 {
                    let col = v.column(k);
                    for (ov, &mv) in o.iter_mut().zip(col.iter()) {
                        *ov += mv * ck;
                    }
                }
            }
        });
}

/// Drag pairing with a coefficient-space density `g` (valid while the
/// cut-off is inactive): per x,
/// `out_x += dt sum_i sum_cc' sigma_cc'(x) D_i^{cc'} g_x`.
fn drag_linear(
    spaces: &Spaces,
    dt: f64,
    sigma: &[RealField; 4],
    g: &ConfigurationDensity,
    out: &mut ConfigurationDensity,
) {
    let nq = g.nq;
    let springs = spaces.qs.springs;
    out.data
        .par_chunks_mut(nq)
        .enumerate()
        .zip(g.data.par_chunks(nq))
        .for_each(|((x, o), gx)| {
            for i in 0..springs {
                for c in 0..2 {
                    for cp in 0..2 {
                        let s = dt * sigma[2 * c + cp][x];
                        if s != 0.0 {
                            let mat = &spaces.qs.drag_total[i][c][cp];
                            for (l, &gl) in gx.iter().enumerate() {
                                if gl != 0.0 {
                                    let col = mat.column(l);
                                    for (ov, &mv) in o.iter_mut().zip(col.iter()) {
                                        *ov += s * gl * mv;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        });
}

/// Drag pairing with nodal cut-off values `beta(psi)` evaluated on the
/// quadrature grid (single-spring chains).
fn drag_nodal_k1(
    spaces: &Spaces,
    ev: &QNodalEvaluator,
    dt: f64,
    sigma: &[RealField; 4],
    g: &ConfigurationDensity,
    cutoff: f64,
    delta: Option<f64>,
    out: &mut ConfigurationDensity,
) {
    let nq = g.nq;
    let basis = &spaces.qs.spring;
    let quad = &basis.quad;
    let nn = quad.len();
    let m = basis.m;
    out.data
        .par_chunks_mut(nq)
        .enumerate()
        .zip(g.data.par_chunks(nq))
        .for_each(|((x, o), gx)| {
            // Nodal values of the iterate, then the cut-off.
            let mut vals = vec![0.0; nn];
            for (k, &ck) in gx.iter().enumerate() {
                if ck != 0.0 {
                    for n in 0..nn {
                        vals[n] += basis.eval[(n, k)] * ck;
                    }
                }
            }
            for v in vals.iter_mut() {
                *v = match delta {
                    Some(d) => entropy::beta_delta(*v, cutoff, d),
                    None => entropy::beta(*v, cutoff),
                };
            }
            // out_mu += dt sum_cc' sigma_cc' sum_n W_n q_cp(n) d_c phi_mu(n) vals_n
            for c in 0..2 {
                for cp in 0..2 {
                    let s = dt * sigma[2 * c + cp][x];
                    if s != 0.0 {
                        for n in 0..nn {
                            let wqg = quad.weights[n] * quad.coords[n][cp] * vals[n] * s;
                            if wqg != 0.0 {
                                for mu in 0..m {
                                    o[mu] += wqg * basis.deval[c][(n, mu)];
                                }
                            }
                        }
                    }
                }
            }
            let _ = ev;
        });
}

/// Result of the cut-off projection: coefficients of the nodal
/// `min(psi, cap)` together with measure-significant nodal extrema.
/// Activity is decided on the nodes that carry Maxwellian measure; the
/// polynomial expansion is unbounded on the measure-free far tail and must
/// not trip the cut-off there.
pub fn cutoff_project(
    spaces: &Spaces,
    psi: &ConfigurationDensity,
    cap: f64,
) -> (ConfigurationDensity, f64, f64) {
    let ev = QNodalEvaluator::new(spaces);
    let nq = psi.nq;
    let results: Vec<(Vec<f64>, f64, f64)> = (0..psi.nx)
        .into_par_iter()
        .map_init(Vec::new, |buf, x| {
            ev.values(psi.coeffs(x), buf);
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for (v, sig) in buf.iter().zip(&ev.significant) {
                if *sig {
                    lo = lo.min(*v);
                    hi = hi.max(*v);
                }
            }
            let mut coeffs = vec![0.0; nq];
            if hi <= cap {
                coeffs.copy_from_slice(psi.coeffs(x));
            } else {
                let clipped: Vec<f64> = buf.iter().map(|&v| v.min(cap)).collect();
                ev.project(&clipped, &mut coeffs);
            }
            (coeffs, lo, hi)
        })
        .collect();
    let mut out = psi.zeros_like();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (x, (coeffs, l, h)) in results.into_iter().enumerate() {
        out.data[x * nq..(x + 1) * nq].copy_from_slice(&coeffs);
        lo = lo.min(l);
        hi = hi.max(h);
    }
    (out, lo, hi)
}

/// Nodal extrema of the density over measure-significant nodes.
pub fn nodal_extrema(spaces: &Spaces, psi: &ConfigurationDensity) -> (f64, f64) {
    let ev = QNodalEvaluator::new(spaces);
    let mask = ev.significant.clone();
    ev.map_reduce(
        psi,
        |_, vals| {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for (&v, &sig) in vals.iter().zip(&mask) {
                if sig {
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
            (lo, hi)
        },
        |(alo, ahi), (lo, hi)| (alo.min(lo), ahi.max(hi)),
        (f64::INFINITY, f64::NEG_INFINITY),
    )
}

fn solve_fp_system(
    spaces: &Spaces,
    dt: f64,
    u_prev_nodal: &[RealField; 2],
    rhs: &ConfigurationDensity,
    guess: &ConfigurationDensity,
) -> Result<(ConfigurationDensity, GmresStats)> {
    let apply = |v: &[f64], out: &mut [f64]| {
        let vin = ConfigurationDensity {
            nx: rhs.nx,
            nq: rhs.nq,
            data: v.to_vec(),
        };
        let mut vout = vin.zeros_like();
        fp_apply(spaces, dt, u_prev_nodal, &vin, &mut vout);
        out.copy_from_slice(&vout.data);
    };
    let precond = |v: &[f64], out: &mut [f64]| {
        let vin = ConfigurationDensity {
            nx: rhs.nx,
            nq: rhs.nq,
            data: v.to_vec(),
        };
        let mut vout = vin.zeros_like();
        fp_precondition(spaces, dt, &vin, &mut vout);
        out.copy_from_slice(&vout.data);
    };
    let mut x = guess.data.clone();
    let stats = gmres(&apply, &precond, &rhs.data, &mut x, GmresOptions::default())?;
    Ok((
        ConfigurationDensity {
            nx: rhs.nx,
            nq: rhs.nq,
            data: x,
        },
        stats,
    ))
}

fn picard_solve(
    spaces: &Spaces,
    psi_prev: &ConfigurationDensity,
    u_prev_nodal: &[RealField; 2],
    sigma: &[RealField; 4],
    dt: f64,
    cutoff: f64,
    delta: Option<f64>,
    use_nodal_beta: bool,
    stats: &mut FpStepStats,
) -> Result<ConfigurationDensity> {
    picard_solve_from(
        spaces,
        psi_prev,
        psi_prev,
        u_prev_nodal,
        sigma,
        dt,
        cutoff,
        delta,
        use_nodal_beta,
        stats,
    )
}

/// Warm-started continuation step of the delta cascade.
#[allow(clippy::too_many_arguments)]
fn picard_continue(
    spaces: &Spaces,
    psi_prev: &ConfigurationDensity,
    warm_start: &ConfigurationDensity,
    u_prev_nodal: &[RealField; 2],
    sigma: &[RealField; 4],
    dt: f64,
    cutoff: f64,
    delta: Option<f64>,
    stats: &mut FpStepStats,
) -> Result<ConfigurationDensity> {
    picard_solve_from(
        spaces,
        psi_prev,
        warm_start,
        u_prev_nodal,
        sigma,
        dt,
        cutoff,
        delta,
        true,
        stats,
    )
}

#[allow(clippy::too_many_arguments)]
fn picard_solve_from(
    spaces: &Spaces,
    psi_prev: &ConfigurationDensity,
    start: &ConfigurationDensity,
    u_prev_nodal: &[RealField; 2],
    sigma: &[RealField; 4],
    dt: f64,
    cutoff: f64,
    delta: Option<f64>,
    use_nodal_beta: bool,
    stats: &mut FpStepStats,
) -> Result<ConfigurationDensity> {
    let ev = QNodalEvaluator::new(spaces);
    let mut iterate = start.clone();
    for it in 1..=PICARD_MAX_ITERS {
        let mut rhs = psi_prev.clone();
        if use_nodal_beta && spaces.qs.springs == 1 {
            drag_nodal_k1(spaces, &ev, dt, sigma, &iterate, cutoff, delta, &mut rhs);
        } else if use_nodal_beta {
            // Multi-spring chains: project the cut-off values onto the
            // basis, then pair linearly.
            let (clipped, _, _) = cutoff_project(spaces, &iterate, cutoff);
            drag_linear(spaces, dt, sigma, &clipped, &mut rhs);
        } else {
            drag_linear(spaces, dt, sigma, &iterate, &mut rhs);
        }
        let (mut next, gm) = solve_fp_system(spaces, dt, u_prev_nodal, &rhs, &iterate)?;
        stats.gmres_iterations += gm.iterations;
        stats.picard_iterations = it;
        if it > PICARD_DAMPING_AFTER {
            for (n, p) in next.data.iter_mut().zip(&iterate.data) {
                *n = 0.5 * (*n + p);
            }
        }
        let incr = next.diff_norm_sq(&iterate).sqrt();
        let scale = next.norm_sq().sqrt().max(1e-300);
        if !incr.is_finite() || incr > 1e8 * scale {
            return Err(Error::LinearSolve(format!(
                "Picard iteration on the cut-off drag diverged (increment {incr:.3e} at iteration {it})"
            )));
        }
        iterate = next;
        if incr <= PICARD_TOL * scale {
            return Ok(iterate);
        }
    }
    Err(Error::LinearSolve(format!(
        "Picard iteration on the cut-off drag did not converge in {PICARD_MAX_ITERS} iterations"
    )))
}

/// One implicit-Euler Fokker-Planck step. Transport uses `u_prev`, drag
/// uses `u_curr` as the scheme prescribes. On Picard failure the step is
/// retried with the delta-regularized cut-off, halving delta from its
/// configured start down to 1e-12.
///
/// While the density stays below the cut-off, beta^L is the identity on it
/// and the drag pairing is exactly linear in the coefficients; the linear
/// path is verified by a nodal sweep of the converged solution. Callers
/// that iterate fp_step inside an outer fixed point can defer that sweep
/// to the accepted iterate with `fp_step_unverified` plus a final
/// [`nodal_extrema`] check.
pub fn fp_step(
    spaces: &Spaces,
    psi_prev: &ConfigurationDensity,
    u_prev: &Velocity,
    u_curr: &Velocity,
    dt: f64,
    cutoff: f64,
    prev_nodal_max: Option<f64>,
) -> Result<(ConfigurationDensity, FpStepStats)> {
    let (sol, mut stats) =
        fp_step_unverified(spaces, psi_prev, u_prev, u_curr, dt, cutoff, prev_nodal_max)?;
    if stats.verified {
        return Ok((sol, stats));
    }
    let (lo, hi) = nodal_extrema(spaces, &sol);
    stats.nodal_min = lo;
    stats.nodal_max = hi;
    stats.verified = true;
    if hi < cutoff {
        stats.cutoff_active = false;
        return Ok((sol, stats));
    }
    // The step left the linear regime; redo with the true cut-off pairing.
    let (sol, mut stats) =
        fp_step_unverified(spaces, psi_prev, u_prev, u_curr, dt, cutoff, Some(hi))?;
    if !stats.verified {
        let (lo, hi) = nodal_extrema(spaces, &sol);
        stats.nodal_min = lo;
        stats.nodal_max = hi;
        stats.cutoff_active = hi >= cutoff;
        stats.verified = true;
    }
    Ok((sol, stats))
}

/// The solve of [`fp_step`] without the final nodal verification sweep of
/// the linear path. `stats.verified` reports whether nodal extrema were
/// computed (always true on the nodal cut-off path).
pub fn fp_step_unverified(
    spaces: &Spaces,
    psi_prev: &ConfigurationDensity,
    u_prev: &Velocity,
    u_curr: &Velocity,
    dt: f64,
    cutoff: f64,
    prev_nodal_max: Option<f64>,
) -> Result<(ConfigurationDensity, FpStepStats)> {
    let xs = &spaces.xs;
    let u_prev_nodal = u_prev.nodal(xs);
    let sigma = xs.velocity_gradient(&u_curr.spec);
    let mut stats = FpStepStats::default();

    let linear_ok = prev_nodal_max.map(|m| m < 0.9 * cutoff).unwrap_or(false);

    let attempt = |use_nodal: bool, delta: Option<f64>, stats: &mut FpStepStats| {
        picard_solve(
            spaces,
            psi_prev,
            &u_prev_nodal,
            &sigma,
            dt,
            cutoff,
            delta,
            use_nodal,
            stats,
        )
    };

    if linear_ok {
        if let Ok(sol) = attempt(false, None, &mut stats) {
            stats.nodal_max = prev_nodal_max.unwrap_or(f64::NAN);
            stats.nodal_min = f64::NAN;
            stats.cutoff_active = false;
            stats.verified = false;
            return Ok((sol, stats));
        }
    }

    let solution = match attempt(true, None, &mut stats) {
        Ok(sol) => Some(sol),
        Err(_) => {
            // Delta-regularized fallback: solve once at delta = 1e-4, then
            // continue delta towards zero with warm starts. If even the
            // first regularized solve fails the step is hopeless.
            let mut delta = 1e-4;
            match attempt(true, Some(delta), &mut stats) {
                Err(_) => None,
                Ok(mut sol) => {
                    stats.delta_used = Some(delta);
                    while delta > 1e-12 {
                        delta *= 0.5;
                        match picard_continue(
                            spaces,
                            psi_prev,
                            &sol,
                            &u_prev_nodal,
                            &sigma,
                            dt,
                            cutoff,
                            Some(delta),
                            &mut stats,
                        ) {
                            Ok(refined) => {
                                sol = refined;
                                stats.delta_used = Some(delta);
                            }
                            Err(_) => break,
                        }
                    }
                    Some(sol)
                }
            }
        }
    };

    let sol = solution.ok_or_else(|| Error::LinearSolve(
        "Fokker-Planck step failed: Picard and delta-continuation both stalled".into(),
    ))?;
    let (lo, hi) = nodal_extrema(spaces, &sol);
    stats.nodal_min = lo;
    stats.nodal_max = hi;
    stats.cutoff_active = hi >= cutoff;
    stats.verified = true;
    Ok((sol, stats))
}

/// Marginal of the density (coefficient of the constant q-basis function).
pub fn marginal(psi: &ConfigurationDensity) -> MarginalDensity {
    psi.marginal()
}

/// Stand-alone implicit advection-diffusion step for the marginal;
/// independent oracle for the coupled solver's mass transport.
pub fn marginal_step(
    xs: &XSpace,
    eps: f64,
    zeta_prev: &MarginalDensity,
    u_prev: &Velocity,
    dt: f64,
) -> Result<MarginalDensity> {
    let u_nodal = u_prev.nodal(xs);
    let n = xs.len();
    let apply = |v: &[f64], out: &mut [f64]| {
        let spec: SpecField = (0..n).map(|i| Complex64::new(v[2 * i], v[2 * i + 1])).collect();
        let conv = xs.convect_scalar(&u_nodal, &spec);
        for i in 0..n {
            let y = spec[i] * (1.0 + dt * eps * xs.laplace_symbol(i)) + dt * conv[i];
            out[2 * i] = y.re;
            out[2 * i + 1] = y.im;
        }
    };
    let precond = |v: &[f64], out: &mut [f64]| {
        for i in 0..n {
            let d = 1.0 + dt * eps * xs.laplace_symbol(i);
            out[2 * i] = v[2 * i] / d;
            out[2 * i + 1] = v[2 * i + 1] / d;
        }
    };
    let spec_prev = xs.to_spectral(&zeta_prev.values);
    let mut b = vec![0.0; 2 * n];
    for i in 0..n {
        b[2 * i] = spec_prev[i].re;
        b[2 * i + 1] = spec_prev[i].im;
    }
    let mut x = b.clone();
    gmres(&apply, &precond, &b, &mut x, GmresOptions::default())?;
    let spec: SpecField = (0..n).map(|i| Complex64::new(x[2 * i], x[2 * i + 1])).collect();
    Ok(MarginalDensity {
        values: xs.to_real(&spec),
    })
}

/// Initial-datum lifting: one implicit heat step in the weighted (x, q)
/// metric applied to the capped datum, solved exactly in the joint
/// eigenframe.
pub fn lift_initial_density(
    spaces: &Spaces,
    psi0: &ConfigurationDensity,
    dt: f64,
    cap: f64,
) -> Result<ConfigurationDensity> {
    // Nonnegativity of the datum is monitored downstream, not enforced
    // here; the cap applies to the nodal values.
    let (capped, _lo, _hi) = cutoff_project(spaces, psi0, cap);
    let v = &spaces.qs.heat_vectors;
    let values = &spaces.qs.heat_values;
    let nq = capped.nq;
    // Rotate into the heat eigenbasis.
    let mut rotated = capped.zeros_like();
    rotated
        .data
        .par_chunks_mut(nq)
        .zip(capped.data.par_chunks(nq))
        .for_each(|(o, c)| {
            for k in 0..nq {
                let col = v.column(k);
                let mut s = 0.0;
                for (cv, &mv) in c.iter().zip(col.iter()) {
                    s += mv * cv;
                }
                o[k] = s;
            }
        });
    let xs = &spaces.xs;
    let mut divided = capped.zeros_like();
    transform_x_fields(xs, &rotated, &mut divided, |k, spec| {
        let lam = values[k].max(0.0);
        for (idx, c) in spec.iter_mut().enumerate() {
            *c /= 1.0 + dt * (xs.laplace_symbol(idx) + lam);
        }
    });
    let mut out = capped.zeros_like();
    out.data
        .par_chunks_mut(nq)
        .zip(divided.data.par_chunks(nq))
        .for_each(|(o, c)| {
            for ov in o.iter_mut() {
                *ov = 0.0;
            }
            for (k, &ck) in c.iter().enumerate() {
                if ck != 0.0 {
                    let col = v.column(k);
                    for (ov, &mv) in o.iter_mut().zip(col.iter()) {
                        *ov += mv * ck;
                    }
                }
            }
        });
    Ok(out)
}
