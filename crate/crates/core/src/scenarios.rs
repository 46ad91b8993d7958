//! Initial-data builders, named scenario presets and the selftest suite.

use crate::config::{Psi0Spec, RunConfig, U0Spec};
use crate::error::{Error, Result};
use crate::fields::{ConfigurationDensity, Spaces};
use crate::params::{ForceSpec, PotentialSpec};
use crate::xspace::TWO_PI;

/// Deterministic generator for test fixtures (SplitMix64).
#[derive(Debug, Clone)]
pub struct SplitMix64(pub u64);

impl SplitMix64 {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    /// Uniform in [-1, 1).
    pub fn next_sym(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 52) as f64 - 1.0
    }

    /// Uniform in [0, 1).
    pub fn next_unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }
}

/// Nonnegative, exactly mass-one initial density built from a squared
/// perturbation of equilibrium on the first spring:
/// `psi_hat_0 = (1 + eta(x) phi_k(q))^2 / (1 + eta(x)^2)` with
/// `eta(x) = amplitude cos(2 pi m.x)`. Exactly representable in the basis
/// when `2 deg(phi_k) <= q_degree`, so no truncation artifacts.
pub fn squared_mode_density(
    spaces: &Spaces,
    spring_mode: usize,
    x_mode: (i32, i32),
    amplitude: f64,
) -> Result<ConfigurationDensity> {
    let qs = &spaces.qs;
    let spring = &qs.spring;
    let m = spring.m;
    if spring_mode == 0 || spring_mode >= m {
        return Err(Error::invalid(
            "q_index",
            format!("squared perturbation needs a non-constant spring mode < {m}"),
        ));
    }
    let (a, b) = spring.degrees[spring_mode];
    if 2 * (a + b) > spaces.resolution.q_degree {
        return Err(Error::invalid(
            "q_index",
            format!(
                "squared mode of degree {} needs q_degree >= {}",
                a + b,
                2 * (a + b)
            ),
        ));
    }
    // Exact expansion of phi_k^2 (container degree suffices).
    let nn = spring.quad.len();
    let mut sq = vec![0.0; m];
    for n in 0..nn {
        let v = spring.eval[(n, spring_mode)];
        let w = spring.quad.weights[n] * v * v;
        for k in 0..m {
            sq[k] += w * spring.eval[(n, k)];
        }
    }
    // Assemble per-spring coefficients into the total basis (mode on the
    // first spring, constant on the rest).
    let embed = |k: usize| -> usize {
        match qs.springs {
            1 => k,
            2 => k * m,
            _ => unreachable!(),
        }
    };
    let eta = spaces.xs.nodal_scalar(|x, y| {
        amplitude * (TWO_PI * (x_mode.0 as f64 * x + x_mode.1 as f64 * y)).cos()
    });
    let mut psi = ConfigurationDensity::constant(spaces, 0.0);
    for x in 0..psi.nx {
        let e = eta[x];
        let norm = 1.0 + e * e;
        let row = psi.coeffs_mut(x);
        row[0] = 1.0; // phi_0 part of (1 + 2 e phi + e^2 phi^2) / (1 + e^2)
        row[embed(spring_mode)] += 2.0 * e / norm;
        for k in 1..m {
            row[embed(k)] += e * e * sq[k] / norm;
        }
    }
    Ok(psi)
}

/// `1 + amplitude cos(2 pi m.x) phi_k(q)`; mean-free in q for `k > 0`.
pub fn perturbed_mode_density(
    spaces: &Spaces,
    q_index: usize,
    x_mode: (i32, i32),
    amplitude: f64,
) -> Result<ConfigurationDensity> {
    if q_index >= spaces.qs.n_q {
        return Err(Error::invalid(
            "q_index",
            format!("mode index {q_index} exceeds basis size {}", spaces.qs.n_q),
        ));
    }
    let profile = spaces.xs.nodal_scalar(|x, y| {
        amplitude * (TWO_PI * (x_mode.0 as f64 * x + x_mode.1 as f64 * y)).cos()
    });
    let mut psi = ConfigurationDensity::constant(spaces, 1.0);
    if q_index == 0 {
        for x in 0..psi.nx {
            psi.coeffs_mut(x)[0] = 1.0 + profile[x];
        }
    } else {
        for x in 0..psi.nx {
            psi.coeffs_mut(x)[q_index] = profile[x];
        }
    }
    Ok(psi)
}

/// Materializes the configured initial density.
pub fn build_initial_density(spaces: &Spaces, spec: &Psi0Spec) -> Result<ConfigurationDensity> {
    match spec {
        Psi0Spec::Equilibrium => Ok(ConfigurationDensity::constant(spaces, 1.0)),
        Psi0Spec::Squared {
            q_index,
            mode_x,
            mode_y,
            amplitude,
        } => squared_mode_density(spaces, *q_index, (*mode_x, *mode_y), *amplitude),
        Psi0Spec::Mode {
            q_index,
            mode_x,
            mode_y,
            amplitude,
        } => perturbed_mode_density(spaces, *q_index, (*mode_x, *mode_y), *amplitude),
        Psi0Spec::File { path } => {
            let cp = crate::trace_io::read_checkpoint(std::path::Path::new(path))?;
            if cp.n_q != spaces.qs.n_q || cp.x_modes != spaces.resolution.x_modes {
                return Err(Error::State(format!(
                    "checkpoint resolution ({}, {}) does not match the configuration ({}, {})",
                    cp.x_modes, cp.n_q, spaces.resolution.x_modes, spaces.qs.n_q
                )));
            }
            Ok(ConfigurationDensity {
                nx: cp.x_modes * cp.x_modes,
                nq: cp.n_q,
                data: cp.psi_data,
            })
        }
    }
}

/// Near-Gaussian potential used by the relaxation oracles: the crossover
/// sits far beyond the quadrature box.
pub fn near_gaussian_potential() -> PotentialSpec {
    PotentialSpec {
        theta: 2.0,
        s_inf: 1e8,
    }
}

/// Named scenario presets for the CLI.
pub fn preset(name: &str) -> Option<RunConfig> {
    let mut cfg = RunConfig::default();
    match name {
        "equilibrium" => {
            cfg.physical.t_final = 1.0;
            cfg.cutoff_l = 4.0;
            cfg.c0 = 0.5;
            cfg.resolution.x_modes = 16;
            cfg.resolution.q_degree = 5;
            Some(cfg)
        }
        "decay-demo" => {
            cfg.physical.nu = 1.0;
            cfg.physical.lambda = 1.0;
            cfg.physical.k = 0.5;
            cfg.physical.epsilon = 0.5;
            cfg.physical.t_final = 2.0;
            cfg.cutoff_l = 12.0;
            cfg.c0 = 0.5;
            cfg.resolution.x_modes = 32;
            cfg.resolution.q_degree = 6;
            cfg.u0 = U0Spec::TaylorGreen { amplitude: 0.05 };
            cfg.psi0 = Psi0Spec::Squared {
                q_index: 1,
                mode_x: 1,
                mode_y: 0,
                amplitude: 0.4,
            };
            Some(cfg)
        }
        "ou-relaxation" => {
            cfg.physical.nu = 1.0;
            cfg.physical.lambda = 1.0;
            cfg.physical.k = 1.0;
            cfg.physical.epsilon = 0.5;
            cfg.physical.t_final = 1.5;
            cfg.potential = near_gaussian_potential();
            cfg.cutoff_l = 16.0;
            cfg.c0 = 0.5;
            cfg.resolution.x_modes = 4;
            cfg.resolution.q_degree = 8;
            cfg.u0 = U0Spec::Zero;
            cfg.psi0 = Psi0Spec::Squared {
                q_index: 1,
                mode_x: 0,
                mode_y: 0,
                amplitude: 0.5,
            };
            Some(cfg)
        }
        "forced-smooth" => {
            cfg.physical.t_final = 1.0;
            cfg.physical.k = 0.5;
            cfg.physical.epsilon = 0.5;
            cfg.physical.body_force = ForceSpec::TaylorGreen {
                amplitude: 0.05,
                omega: 2.0,
            };
            cfg.cutoff_l = 6.0;
            cfg.c0 = 0.5;
            cfg.resolution.x_modes = 16;
            cfg.resolution.q_degree = 6;
            Some(cfg)
        }
        "k2-smoke" => {
            cfg.physical.springs = 2;
            cfg.physical.t_final = 0.1;
            cfg.physical.epsilon = 0.5;
            cfg.cutoff_l = 16.0;
            cfg.c0 = 0.5;
            cfg.resolution.x_modes = 8;
            cfg.resolution.q_degree = 3;
            cfg.u0 = U0Spec::TaylorGreen { amplitude: 0.1 };
            cfg.psi0 = Psi0Spec::Squared {
                q_index: 1,
                mode_x: 1,
                mode_y: 0,
                amplitude: 0.3,
            };
            Some(cfg)
        }
        _ => None,
    }
}

pub fn preset_names() -> &'static [&'static str] {
    &[
        "equilibrium",
        "decay-demo",
        "ou-relaxation",
        "forced-smooth",
        "k2-smoke",
    ]
}

/// Invariant selftest: quadrature exactness, basis orthonormality, the
/// integration-by-parts / Kramers duality with random trace-free matrices,
/// Leray idempotence, convection skew-symmetry and equilibrium
/// stationarity. Returns the report lines; errors on any failure.
pub fn run_selftest() -> Result<Vec<String>> {
    use crate::coupled::{coupled_step, State};
    use crate::fields::{build_spaces, Resolution, Velocity};
    use crate::params::{rouse_matrix_with, validate_params, PhysicalParams};

    let mut lines = Vec::new();
    let chain = rouse_matrix_with(1, PotentialSpec::default())?;
    let params = validate_params(PhysicalParams::default(), chain)?;
    let spaces = build_spaces(
        params,
        Resolution {
            x_modes: 16,
            q_degree: 8,
        },
    )?;

    // Quadrature normalization.
    let mass: f64 = spaces.qs.spring.quad.weights.iter().sum();
    if (mass - 1.0).abs() > 1e-12 {
        return Err(Error::Audit(format!("quadrature mass {mass} deviates from 1")));
    }
    lines.push(format!("quadrature mass                       1 {:+.2e}", mass - 1.0));

    // Orthonormality.
    let basis = &spaces.qs.spring;
    let mut worst = 0.0_f64;
    for i in 0..basis.m {
        for j in 0..basis.m {
            let mut g = 0.0;
            for n in 0..basis.quad.len() {
                g += basis.quad.weights[n] * basis.eval[(n, i)] * basis.eval[(n, j)];
            }
            let expect = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g - expect).abs());
        }
    }
    if worst > 1e-12 {
        return Err(Error::Audit(format!("basis Gram deviation {worst}")));
    }
    lines.push(format!("q-basis orthonormality deviation      {worst:.2e}"));

    // Integration-by-parts duality: every basis function against 20 random
    // trace-free matrices, residual <= 1e-10.
    let mut rng = SplitMix64(0x7061706572);
    let mut worst_ibp = 0.0_f64;
    for _ in 0..20 {
        let a = rng.next_sym();
        let b = rng.next_sym();
        let c = rng.next_sym();
        let mat = [[a, b], [c, -a]];
        for k in 0..spaces.qs.n_q {
            let mut coeffs = vec![0.0; spaces.qs.n_q];
            coeffs[k] = 1.0;
            worst_ibp = worst_ibp.max(spaces.qs.ibp_residual(&mat, &coeffs)?);
        }
    }
    if worst_ibp > 1e-10 {
        return Err(Error::Audit(format!(
            "integration-by-parts residual {worst_ibp} exceeds 1e-10"
        )));
    }
    lines.push(format!("integration-by-parts residual (max)   {worst_ibp:.2e}"));

    // Leray idempotence on a mixed field.
    let f0 = spaces.xs.nodal_scalar(|x, y| (TWO_PI * x).sin() + 0.4 * (2.0 * TWO_PI * y).cos());
    let f1 = spaces.xs.nodal_scalar(|x, y| (TWO_PI * (x + y)).cos());
    let mut u = [spaces.xs.to_spectral(&f0), spaces.xs.to_spectral(&f1)];
    spaces.xs.leray(&mut u);
    let once = [u[0].clone(), u[1].clone()];
    spaces.xs.leray(&mut u);
    let mut dev = 0.0_f64;
    for c in 0..2 {
        for i in 0..spaces.xs.len() {
            dev = dev.max((u[c][i] - once[c][i]).norm());
        }
    }
    if dev > 1e-13 {
        return Err(Error::Audit(format!("Leray projection not idempotent: {dev}")));
    }
    lines.push(format!("Leray idempotence deviation           {dev:.2e}"));

    // Convection skew-symmetry.
    let v = Velocity { spec: spaces.xs.taylor_green(0.8) };
    let vn = v.nodal(&spaces.xs);
    let w1 = spaces.xs.solenoidal_mode(1, 2, 0.6);
    let w2 = spaces.xs.solenoidal_mode(2, -1, 0.9);
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for c in 0..2 {
        lhs += spaces.xs.inner_spec(&spaces.xs.convect_scalar(&vn, &w1[c]), &w2[c]);
        rhs -= spaces.xs.inner_spec(&spaces.xs.convect_scalar(&vn, &w2[c]), &w1[c]);
    }
    if (lhs - rhs).abs() > 1e-11 {
        return Err(Error::Audit(format!(
            "convection skew-symmetry residual {}",
            (lhs - rhs).abs()
        )));
    }
    lines.push(format!("convection skew-symmetry residual     {:.2e}", (lhs - rhs).abs()));

    // Entropy function spot checks.
    let fl = crate::entropy::entropy_family(4.0, 2.0, 0)?;
    if (fl - 4.0 * 2.0_f64.ln()).abs() > 1e-13 {
        return Err(Error::Audit("cut-off entropy value mismatch".into()));
    }
    lines.push("entropy family spot values            ok".into());

    // Equilibrium stationarity over five coupled steps.
    let mut state = State {
        t: 0.0,
        step_index: 0,
        u: Velocity::zero(&spaces.xs),
        psi: ConfigurationDensity::constant(&spaces, 1.0),
    };
    let f = spaces.xs.zero_vector();
    let mut drift = 0.0_f64;
    for _ in 0..5 {
        let (next, _) = coupled_step(&spaces, &state, &f, 0.02, 4.0, Some(1.0))?;
        drift = drift.max(next.u.norm_sq(&spaces.xs).sqrt());
        drift = drift.max(next.psi.diff_norm_sq(&state.psi).sqrt());
        state = next;
    }
    if drift > 1e-12 {
        return Err(Error::Audit(format!("equilibrium drift {drift}")));
    }
    lines.push(format!("equilibrium drift over 5 steps        {drift:.2e}"));

    Ok(lines)
}
