//! Kramers stress assembly and the semi-implicit momentum step: implicit
//! viscosity and convection linearized at the previous velocity, elastic
//! forcing from the configuration density, all on the discrete solenoidal
//! spectral space.

use crate::error::Result;
use crate::fields::{ConfigurationDensity, Spaces, Velocity};
use crate::krylov::{gmres, GmresOptions, GmresStats};
use crate::params::ForceSpec;
use crate::xspace::{RealField, SpecField, XSpace, TWO_PI};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;

/// Kramers stress data: per-spring conformation moments `C_i(x)` (2x2,
/// stored row-major), polymer density `rho`, and the extra stress
/// `tau = k (sum_i C_i - rho I)`. The isotropic part is reported but never
/// enters the solenoidal momentum solve.
#[derive(Debug, Clone)]
pub struct StressField {
    pub c_per_spring: Vec<[RealField; 4]>,
    pub rho: RealField,
    pub tau: [RealField; 4],
}

/// Conformation moments by contracting the density's q-coefficients with
/// the precomputed Maxwellian moment vectors.
pub fn kramers_stress(spaces: &Spaces, psi: &ConfigurationDensity) -> StressField {
    let nx = psi.nx;
    let nq = psi.nq;
    let k_stress = spaces.params.physical.k;
    let springs = spaces.qs.springs;
    let mut c_per_spring = Vec::with_capacity(springs);
    for i in 0..springs {
        let mut comp: [RealField; 4] = [
            vec![0.0; nx],
            vec![0.0; nx],
            vec![0.0; nx],
            vec![0.0; nx],
        ];
        for c in 0..2 {
            for cp in 0..2 {
                let vec_ref = &spaces.qs.kramers_total[i][c][cp];
                let out: Vec<f64> = (0..nx)
                    .into_par_iter()
                    .map(|x| {
                        let coeffs = &psi.data[x * nq..(x + 1) * nq];
                        coeffs
                            .iter()
                            .zip(vec_ref.iter())
                            .map(|(a, b)| a * b)
                            .sum()
                    })
                    .collect();
                comp[2 * c + cp] = out;
            }
        }
        c_per_spring.push(comp);
    }
    let rho = psi.marginal().values;
    let mut tau: [RealField; 4] = [
        vec![0.0; nx],
        vec![0.0; nx],
        vec![0.0; nx],
        vec![0.0; nx],
    ];
    for e in 0..4 {
        for x in 0..nx {
            let mut s = 0.0;
            for ci in &c_per_spring {
                s += ci[e][x];
            }
            let iso = if e == 0 || e == 3 { rho[x] } else { 0.0 };
            tau[e][x] = k_stress * (s - iso);
        }
    }
    StressField {
        c_per_spring,
        rho,
        tau,
    }
}

fn pack(u: &[SpecField; 2], out: &mut [f64]) {
    let n = u[0].len();
    for c in 0..2 {
        for i in 0..n {
            out[2 * (c * n + i)] = u[c][i].re;
            out[2 * (c * n + i) + 1] = u[c][i].im;
        }
    }
}

fn unpack(v: &[f64], u: &mut [SpecField; 2]) {
    let n = u[0].len();
    for c in 0..2 {
        for i in 0..n {
            u[c][i] = Complex64::new(v[2 * (c * n + i)], v[2 * (c * n + i) + 1]);
        }
    }
}

/// Spectral right-hand side of the momentum solve: previous velocity plus
/// time-step-weighted force and elastic divergence, projected.
fn momentum_rhs(
    spaces: &Spaces,
    u_prev: &Velocity,
    stress: &StressField,
    force: &[SpecField; 2],
    dt: f64,
) -> [SpecField; 2] {
    let xs = &spaces.xs;
    let k_stress = spaces.params.physical.k;
    // Deviatoric elastic stress k * sum_i C_i; the rho I part drops
    // against divergence-free test functions.
    let mut sum_c: [RealField; 4] = [
        vec![0.0; xs.len()],
        vec![0.0; xs.len()],
        vec![0.0; xs.len()],
        vec![0.0; xs.len()],
    ];
    for e in 0..4 {
        for x in 0..xs.len() {
            let mut s = 0.0;
            for ci in &stress.c_per_spring {
                s += ci[e][x];
            }
            sum_c[e][x] = k_stress * s;
        }
    }
    // div tau, row c: d_x tau_{c0} + d_y tau_{c1}.
    let spec: Vec<SpecField> = sum_c.iter().map(|f| xs.to_spectral(f)).collect();
    let mut div = [
        {
            let mut d = xs.derivative(&spec[0], 0);
            let dy = xs.derivative(&spec[1], 1);
            for (a, b) in d.iter_mut().zip(dy) {
                *a += b;
            }
            d
        },
        {
            let mut d = xs.derivative(&spec[2], 0);
            let dy = xs.derivative(&spec[3], 1);
            for (a, b) in d.iter_mut().zip(dy) {
                *a += b;
            }
            d
        },
    ];
    xs.dealias(&mut div[0]);
    xs.dealias(&mut div[1]);

    let mut rhs = [u_prev.spec[0].clone(), u_prev.spec[1].clone()];
    for c in 0..2 {
        for i in 0..xs.len() {
            rhs[c][i] += dt * (force[c][i] + div[c][i]);
        }
    }
    xs.leray(&mut rhs);
    rhs
}

/// One semi-implicit momentum step. Convection is linearized at `u_prev`
/// exactly as the scheme prescribes; the output is Leray-projected.
pub fn ns_step(
    spaces: &Spaces,
    u_prev: &Velocity,
    stress: &StressField,
    force: &[SpecField; 2],
    dt: f64,
) -> Result<(Velocity, GmresStats)> {
    let xs = &spaces.xs;
    let nu = spaces.params.physical.nu;
    let n = xs.len();
    let u_prev_nodal = u_prev.nodal(xs);

    let apply = |v: &[f64], out: &mut [f64]| {
        let mut u = [vec![Complex64::default(); n], vec![Complex64::default(); n]];
        unpack(v, &mut u);
        let mut y = [vec![Complex64::default(); n], vec![Complex64::default(); n]];
        for c in 0..2 {
            let conv = xs.convect_scalar(&u_prev_nodal, &u[c]);
            for i in 0..n {
                y[c][i] = u[c][i] * (1.0 + dt * nu * xs.laplace_symbol(i)) + dt * conv[i];
            }
        }
        xs.leray(&mut y);
        for c in 0..2 {
            xs.dealias(&mut y[c]);
        }
        pack(&y, out);
    };
    let precond = |v: &[f64], out: &mut [f64]| {
        let mut u = [vec![Complex64::default(); n], vec![Complex64::default(); n]];
        unpack(v, &mut u);
        for c in 0..2 {
            for i in 0..n {
                u[c][i] /= 1.0 + dt * nu * xs.laplace_symbol(i);
            }
        }
        pack(&u, out);
    };

    let mut rhs = momentum_rhs(spaces, u_prev, stress, force, dt);
    xs.dealias(&mut rhs[0]);
    xs.dealias(&mut rhs[1]);
    let mut b = vec![0.0; 4 * n];
    pack(&rhs, &mut b);
    let mut x = vec![0.0; 4 * n];
    pack(&u_prev.spec, &mut x);

    let stats = gmres(&apply, &precond, &b, &mut x, GmresOptions::default())?;
    let mut u = [vec![Complex64::default(); n], vec![Complex64::default(); n]];
    unpack(&x, &mut u);
    xs.leray(&mut u);
    for c in 0..2 {
        xs.dealias(&mut u[c]);
    }
    Ok((Velocity { spec: u }, stats))
}

/// Nodal body force at time `t`.
pub fn force_nodal(xs: &XSpace, spec: &ForceSpec, t: f64) -> [RealField; 2] {
    match spec {
        ForceSpec::Zero => [vec![0.0; xs.len()], vec![0.0; xs.len()]],
        ForceSpec::TaylorGreen { amplitude, omega } => {
            let a = amplitude * (omega * t).cos();
            let f0 = xs.nodal_scalar(|x, y| a * (TWO_PI * x).sin() * (TWO_PI * y).cos());
            let f1 = xs.nodal_scalar(|x, y| -a * (TWO_PI * x).cos() * (TWO_PI * y).sin());
            [f0, f1]
        }
        ForceSpec::TimeRamp { amplitude } => {
            let a = amplitude * t;
            let f0 = xs.nodal_scalar(|_, y| a * (TWO_PI * y).sin());
            let f1 = xs.nodal_scalar(|x, _| a * (TWO_PI * x).sin());
            [f0, f1]
        }
    }
}

/// Time-averaged force over `[t_{n-1}, t_n]` by 4-point Gauss quadrature,
/// Leray-projected in spectral form.
pub fn average_force(xs: &XSpace, spec: &ForceSpec, step_index: usize, dt: f64) -> [SpecField; 2] {
    if spec.is_zero() {
        return xs.zero_vector();
    }
    let t0 = (step_index - 1) as f64 * dt;
    // 4-point Gauss-Legendre on [0, 1].
    let nodes = [
        0.5 - 0.430568155797026,
        0.5 - 0.169990521792428,
        0.5 + 0.169990521792428,
        0.5 + 0.430568155797026,
    ];
    let weights = [
        0.173927422568727,
        0.326072577431273,
        0.326072577431273,
        0.173927422568727,
    ];
    let n = xs.len();
    let mut avg = [vec![0.0; n], vec![0.0; n]];
    for (s, w) in nodes.iter().zip(&weights) {
        let f = force_nodal(xs, spec, t0 + s * dt);
        for c in 0..2 {
            for i in 0..n {
                avg[c][i] += w * f[c][i];
            }
        }
    }
    let mut out = [xs.to_spectral(&avg[0]), xs.to_spectral(&avg[1])];
    xs.leray(&mut out);
    xs.dealias(&mut out[0]);
    xs.dealias(&mut out[1]);
    out
}

/// Initial-velocity lifting: one implicit Stokes-type smoothing step,
/// `(1 + dt |2 pi xi|^2) u0_lifted = P u0` mode by mode.
pub fn lift_initial_velocity(xs: &XSpace, u0: &[SpecField; 2], dt: f64) -> Velocity {
    let mut u = [u0[0].clone(), u0[1].clone()];
    xs.leray(&mut u);
    for c in 0..2 {
        for i in 0..xs.len() {
            u[c][i] /= 1.0 + dt * xs.laplace_symbol(i);
        }
        xs.dealias(&mut u[c]);
    }
    Velocity { spec: u }
}
