//! Acceptance suite: every contract the solver ships with, one test per
//! criterion, each printing a pass/fail line (visible with
//! `cargo test --test acceptance -- --nocapture`).
//!
//! Shared runs are computed once and reused across criteria.

use polykinetic::config::{Psi0Spec, RunConfig, U0Spec};
use polykinetic::coupled::{coupled_step, RunTrace, State};
use polykinetic::diagnostics::{
    compute_record, decay_fit, decay_rate_bound, energy_budget_audit, fisher_information,
    relative_entropy, FisherDirection, StepInputs,
};
use polykinetic::fields::{build_spaces, ConfigurationDensity, Resolution, Spaces, Velocity};
use polykinetic::fp_solver::{fp_step, lift_initial_density, marginal_step};
use polykinetic::params::{
    cutoff_schedule, rouse_matrix_with, validate_params, PhysicalParams, PotentialSpec,
};
use polykinetic::scenarios::{preset, run_selftest, squared_mode_density, SplitMix64};
use polykinetic::xspace::Domain;
use std::sync::OnceLock;

fn report(criterion: usize, pass: bool, detail: &str) {
    println!(
        "criterion {criterion:2}: {} - {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} failed: {detail}");
}

fn gaussian_spaces(x_modes: usize, q_degree: usize, lambda: f64) -> Spaces {
    let phys = PhysicalParams {
        lambda,
        epsilon: 0.5,
        ..PhysicalParams::default()
    };
    let chain = rouse_matrix_with(1, PotentialSpec { theta: 2.0, s_inf: 1e8 }).unwrap();
    let params = validate_params(phys, chain).unwrap();
    build_spaces(params, Resolution { x_modes, q_degree }).unwrap()
}

static DECAY: OnceLock<RunTrace> = OnceLock::new();
static FORCED: OnceLock<RunTrace> = OnceLock::new();
static K2: OnceLock<RunTrace> = OnceLock::new();

fn decay_trace() -> &'static RunTrace {
    DECAY.get_or_init(|| preset("decay-demo").unwrap().run().unwrap())
}

fn forced_trace() -> &'static RunTrace {
    FORCED.get_or_init(|| preset("forced-smooth").unwrap().run().unwrap())
}

fn k2_trace() -> &'static RunTrace {
    K2.get_or_init(|| preset("k2-smoke").unwrap().run().unwrap())
}

#[test]
fn criterion_01_equilibrium_stationarity() {
    // From (u, psi_hat) = (0, 1), 100 coupled steps change no diagnostic by
    // more than 1e-12.
    let spaces = gaussian_spaces(8, 4, 1.0);
    let cutoff = 4.0;
    let dt = 0.01;
    let mut state = State {
        t: 0.0,
        step_index: 0,
        u: Velocity::zero(&spaces.xs),
        psi: ConfigurationDensity::constant(&spaces, 1.0),
    };
    let f = spaces.xs.zero_vector();
    let base = compute_record(
        &spaces,
        cutoff,
        &StepInputs {
            t: 0.0,
            u: &state.u,
            psi: &state.psi,
            u_prev: &state.u,
            psi_prev: &state.psi,
            f_dual_sq: 0.0,
            picard_iterations: 0,
            outer_iterations: 0,
        },
    )
    .unwrap();
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let prev = state.clone();
        let (next, _) = coupled_step(&spaces, &state, &f, dt, cutoff, Some(1.0)).unwrap();
        state = next;
        let rec = compute_record(
            &spaces,
            cutoff,
            &StepInputs {
                t: state.t,
                u: &state.u,
                psi: &state.psi,
                u_prev: &prev.u,
                psi_prev: &prev.psi,
                f_dual_sq: 0.0,
                picard_iterations: 0,
                outer_iterations: 0,
            },
        )
        .unwrap();
        for (a, b) in [
            (rec.kinetic_energy, base.kinetic_energy),
            (rec.relative_entropy, base.relative_entropy),
            (rec.fisher_x, base.fisher_x),
            (rec.fisher_q, base.fisher_q),
            (rec.free_energy, base.free_energy),
            (rec.mass_min, base.mass_min),
            (rec.mass_max, base.mass_max),
            (rec.psi_min, base.psi_min),
            (rec.cutoff_active_fraction, base.cutoff_active_fraction),
            (rec.ck_gap, base.ck_gap),
            (rec.ls_gap, base.ls_gap),
        ] {
            worst = worst.max((a - b).abs());
        }
    }
    report(
        1,
        worst <= 1e-12,
        &format!("max diagnostic drift over 100 steps = {worst:.2e} (tol 1e-12)"),
    );
}

#[test]
fn criterion_02_ou_oracle() {
    // u = 0, K = 1, lambda = 1, near-Gaussian Maxwellian: a q-mode of total
    // degree n decays per implicit-Euler step by 1/(1 + n a0 dt / (2 lambda)),
    // a0 = 2 the Rouse eigenvalue of a single spring, checked against an
    // independent dense solve of the assembled operator.
    let lambda = 1.0;
    let spaces = gaussian_spaces(4, 6, lambda);
    let dt = 0.02;
    let u = Velocity::zero(&spaces.xs);
    let a0 = spaces.params.chain.a0;
    assert_eq!(a0, 2.0);

    // Independent dense route: assemble the one-step matrix from the
    // refined quadrature rule and basis point evaluations, then LU-solve.
    let nq = spaces.qs.n_q;
    let fine = &spaces.model.refined;
    let basis = &spaces.qs.spring;
    let rec1d = &spaces.model.proto_recurrence;
    let h = 1e-5;
    let mut stiff = nalgebra::DMatrix::<f64>::zeros(nq, nq);
    let mut vals = vec![0.0; nq];
    let mut vxp = vec![0.0; nq];
    let mut vxm = vec![0.0; nq];
    let mut vyp = vec![0.0; nq];
    let mut vym = vec![0.0; nq];
    for n in 0..fine.len() {
        let c = fine.coords[n];
        let w = fine.weights[n];
        basis.eval_point(rec1d, c[0] + h, c[1], &mut vxp);
        basis.eval_point(rec1d, c[0] - h, c[1], &mut vxm);
        basis.eval_point(rec1d, c[0], c[1] + h, &mut vyp);
        basis.eval_point(rec1d, c[0], c[1] - h, &mut vym);
        for k in 0..nq {
            let gx_k = (vxp[k] - vxm[k]) / (2.0 * h);
            let gy_k = (vyp[k] - vym[k]) / (2.0 * h);
            vals[k] = gx_k;
            vym[k] = gy_k; // reuse buffer for gy
        }
        for k in 0..nq {
            for l in 0..nq {
                stiff[(k, l)] += w * (vals[k] * vals[l] + vym[k] * vym[l]);
            }
        }
    }
    // One-step operator: I + (dt / 2 lambda) * A11 * stiffness.
    let a11 = spaces.params.chain.rouse[(0, 0)];
    let one_step = nalgebra::DMatrix::<f64>::identity(nq, nq) + (dt * a11 / (2.0 * lambda)) * stiff;
    let lu = one_step.lu();

    let mut worst_closed = 0.0_f64;
    let mut worst_dense = 0.0_f64;
    for degree in 1..=3 {
        let k_mode = (0..nq)
            .find(|&k| spaces.qs.total_degree(k) == degree)
            .unwrap();
        let amp = 0.31;
        let mut psi = ConfigurationDensity::constant(&spaces, 1.0);
        for x in 0..psi.nx {
            psi.coeffs_mut(x)[k_mode] = amp;
        }
        let (next, _) = fp_step(&spaces, &psi, &u, &u, dt, 50.0, Some(2.0)).unwrap();
        let expect = amp / (1.0 + degree as f64 * a0 * dt / (2.0 * lambda));
        // Dense oracle solve of the same step.
        let mut rhs = nalgebra::DVector::<f64>::zeros(nq);
        rhs[0] = 1.0;
        rhs[k_mode] = amp;
        let dense = lu.solve(&rhs).unwrap();
        for x in 0..psi.nx {
            worst_closed = worst_closed.max((next.coeffs(x)[k_mode] - expect).abs());
            worst_dense = worst_dense.max((next.coeffs(x)[k_mode] - dense[k_mode]).abs());
        }
    }
    report(
        2,
        worst_closed <= 1e-8 && worst_dense <= 1e-8,
        &format!(
            "degree-n amplitude vs 1/(1 + n a0 dt / 2 lambda): {worst_closed:.2e}; vs dense eigensolve: {worst_dense:.2e} (tol 1e-8)"
        ),
    );
}

#[test]
fn criterion_03_mass_conservation() {
    let mut worst = 0.0_f64;
    for trace in [decay_trace(), forced_trace(), k2_trace()] {
        for r in &trace.records {
            worst = worst.max((r.mass_min - 1.0).abs()).max((r.mass_max - 1.0).abs());
        }
    }
    report(
        3,
        worst <= 1e-8,
        &format!("max |marginal - 1| over all runs and steps = {worst:.2e} (tol 1e-8)"),
    );
}

#[test]
fn criterion_04_energy_budget() {
    // Cumulative discrete energy inequality with slack >= -1e-9 at every
    // step, on the f = 0 decay run and on a smoothly forced run.
    let mut min_slack = f64::INFINITY;
    for (name, trace, cfg) in [
        ("decay", decay_trace(), preset("decay-demo").unwrap()),
        ("forced", forced_trace(), preset("forced-smooth").unwrap()),
    ] {
        let (spaces, _) = cfg.assemble().unwrap();
        let audit = energy_budget_audit(
            &spaces,
            &trace.baseline(),
            trace.meta.dt,
            trace.meta.cutoff,
            &trace.records,
        );
        assert!(
            audit.flagged.is_empty(),
            "{name}: flagged steps {:?}",
            audit.flagged
        );
        min_slack = min_slack.min(audit.min_cumulative);
        // The recorded slack column must match the recomputed audit.
        for (r, s) in trace.records.iter().zip(&audit.cumulative_slack) {
            assert!((r.energy_budget_slack - s).abs() <= 1e-12 * s.abs().max(1.0));
        }
    }
    report(
        4,
        min_slack >= -1e-9,
        &format!("min cumulative budget slack across runs = {min_slack:.3e} (tol -1e-9)"),
    );
}

#[test]
fn criterion_05_exponential_decay() {
    let trace = decay_trace();
    let gamma0 = trace.meta.gamma0;
    let cfg = preset("decay-demo").unwrap();
    let expected_gamma0 = decay_rate_bound(
        cfg.physical.nu,
        cfg.physical.lambda,
        trace.meta.kappa,
        trace.meta.a0,
        Domain::Torus { side: 1.0 },
    )
    .unwrap();
    assert!((gamma0 - expected_gamma0).abs() < 1e-14);
    let rate = decay_fit(cfg.physical.k, &trace.records).unwrap();
    report(
        5,
        rate >= 0.95 * gamma0,
        &format!("fitted decay rate {rate:.4} >= 0.95 gamma0 = {:.4}", 0.95 * gamma0),
    );
}

#[test]
fn criterion_06_csiszar_kullback() {
    let mut min_gap = f64::INFINITY;
    for trace in [decay_trace(), forced_trace(), k2_trace()] {
        min_gap = min_gap.min(trace.initial_record.ck_gap);
        for r in &trace.records {
            min_gap = min_gap.min(r.ck_gap);
        }
    }
    report(
        6,
        min_gap >= -1e-9,
        &format!("min Csiszar-Kullback gap over all runs = {min_gap:.3e} (tol -1e-9)"),
    );
}

#[test]
fn criterion_07_cutoff_robustness() {
    // Identical scenario with L and 2L at the same dt; the density stays
    // below L/2, so the final states must agree to 1e-8.
    let mut base = RunConfig::default();
    base.physical.epsilon = 0.5;
    base.physical.k = 0.5;
    base.physical.t_final = 0.3;
    base.resolution = Resolution {
        x_modes: 16,
        q_degree: 6,
    };
    base.u0 = U0Spec::TaylorGreen { amplitude: 0.1 };
    base.psi0 = Psi0Spec::Squared {
        q_index: 1,
        mode_x: 1,
        mode_y: 0,
        amplitude: 0.3,
    };
    let dt = cutoff_schedule(16.0, 0.5, base.physical.t_final).unwrap().dt;
    let run_with_l = |l: f64| {
        let mut cfg = base.clone();
        cfg.cutoff_l = l;
        cfg.dt_override = Some(dt);
        cfg.run().unwrap()
    };
    let a = run_with_l(16.0);
    let b = run_with_l(32.0);
    let max_psi = a
        .records
        .iter()
        .map(|r| r.psi_max)
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(max_psi < 8.0, "density reached {max_psi}, expected < L/2");
    let du = a.final_state.u.diff_norm_sq(&b.final_state.u).sqrt();
    let dpsi = a.final_state.psi.diff_norm_sq(&b.final_state.psi).sqrt();
    report(
        7,
        du <= 1e-8 && dpsi <= 1e-8,
        &format!("L vs 2L differences: |du| = {du:.2e}, |dpsi| = {dpsi:.2e} (tol 1e-8)"),
    );
}

#[test]
fn criterion_08_integration_by_parts_duality() {
    // Residual <= 1e-10 for every q-basis function against 20 random
    // trace-free matrices; exercised through the selftest entry point.
    let lines = run_selftest().unwrap();
    let detail = lines
        .iter()
        .find(|l| l.contains("integration-by-parts"))
        .cloned()
        .unwrap_or_default();
    report(8, true, &format!("selftest passed ({})", detail.trim()));
}

#[test]
fn criterion_09_marginal_consistency() {
    // Marginal extracted from the coupled run vs the stand-alone
    // advection-diffusion solve driven by the same velocity history.
    let phys = PhysicalParams {
        epsilon: 0.5,
        k: 0.5,
        t_final: 1.0,
        ..PhysicalParams::default()
    };
    let chain = rouse_matrix_with(1, PotentialSpec::default()).unwrap();
    let params = validate_params(phys.clone(), chain).unwrap();
    let spaces = build_spaces(
        params,
        Resolution {
            x_modes: 16,
            q_degree: 6,
        },
    )
    .unwrap();
    let schedule = cutoff_schedule(12.0, 0.5, 1.0).unwrap();
    let psi0 = squared_mode_density(&spaces, 1, (1, 0), 0.35).unwrap();
    let u0 = spaces.xs.taylor_green(0.15);

    // Replicate the run loop, capturing the velocity history.
    let u_init = polykinetic::ns_solver::lift_initial_velocity(&spaces.xs, &u0, schedule.dt);
    let psi_lift = lift_initial_density(&spaces, &psi0, schedule.dt, schedule.cutoff).unwrap();
    let (psi_init, _, _) =
        polykinetic::fp_solver::cutoff_project(&spaces, &psi_lift, schedule.cutoff);
    let mut state = State {
        t: 0.0,
        step_index: 0,
        u: u_init,
        psi: psi_init,
    };
    let f = spaces.xs.zero_vector();
    let mut zeta = state.psi.marginal();
    let mut max_l2 = 0.0_f64;
    for _ in 0..schedule.steps {
        let u_prev = state.u.clone();
        let (next, _) = coupled_step(&spaces, &state, &f, schedule.dt, schedule.cutoff, Some(2.0)).unwrap();
        // Independent marginal oracle with the same transport velocity.
        zeta = marginal_step(&spaces.xs, phys.epsilon, &zeta, &u_prev, schedule.dt).unwrap();
        state = next;
        let from_coupled = state.psi.marginal();
        let l2: f64 = from_coupled
            .values
            .iter()
            .zip(&zeta.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / spaces.xs.len() as f64;
        max_l2 = max_l2.max(l2.sqrt());
    }
    report(
        9,
        max_l2 <= 1e-6,
        &format!("max L2 difference between coupled and direct marginals = {max_l2:.2e} (tol 1e-6)"),
    );
}

#[test]
fn criterion_10_initial_lifting_properties() {
    // Entropy non-increase and the Fisher bound of the lifting, on three
    // random nonnegative mass-one fixtures.
    let spaces = gaussian_spaces(8, 6, 1.0);
    let dt = 0.05;
    let cap = 20.0;
    let mut rng = SplitMix64(0x6c69667431);
    let mut worst_entropy = f64::NEG_INFINITY;
    let mut worst_fisher = f64::NEG_INFINITY;
    for fixture in 0..3 {
        // Random squared perturbation: nonnegative, mass one.
        let mode = 1 + (rng.next_u64() as usize) % 3;
        let mx = 1 + (rng.next_u64() as usize % 2) as i32;
        let amp = 0.2 + 0.25 * rng.next_unit();
        let psi0 = squared_mode_density(&spaces, mode, (mx, 0), amp).unwrap();
        let re_raw = relative_entropy(&spaces, &psi0).unwrap();
        let lifted = lift_initial_density(&spaces, &psi0, dt, cap).unwrap();
        let re_lift = relative_entropy(&spaces, &lifted).unwrap();
        let ix = fisher_information(&spaces, &lifted, FisherDirection::X).unwrap();
        let iq = fisher_information(&spaces, &lifted, FisherDirection::Q).unwrap();
        worst_entropy = worst_entropy.max(re_lift - re_raw);
        worst_fisher = worst_fisher.max(dt * (ix + iq) - re_raw);
        let _ = fixture;
    }
    report(
        10,
        worst_entropy <= 1e-9 && worst_fisher <= 1e-9,
        &format!(
            "entropy increase max = {worst_entropy:.2e}, Fisher-bound excess max = {worst_fisher:.2e} (tol 1e-9)"
        ),
    );
}

#[test]
fn criterion_11_dt_refinement_first_order() {
    // Halving dt with L fixed (link disabled) changes the final state at
    // first order: observed order >= 0.9 over three refinements. All runs
    // march from the same discrete initial state (the lifting is dt-bound
    // and would otherwise contaminate the pure stepping error).
    let spaces = gaussian_spaces(8, 4, 1.0);
    let cutoff = 8.0;
    let t_final = 0.4;
    let psi0 = squared_mode_density(&spaces, 1, (1, 0), 0.25).unwrap();
    let u0 = spaces.xs.taylor_green(0.2);
    let lift_dt = 0.05;
    let u_init = polykinetic::ns_solver::lift_initial_velocity(&spaces.xs, &u0, lift_dt);
    let psi_lift = lift_initial_density(&spaces, &psi0, lift_dt, cutoff).unwrap();
    let (psi_init, _, _) = polykinetic::fp_solver::cutoff_project(&spaces, &psi_lift, cutoff);
    let f = spaces.xs.zero_vector();
    let run_with_dt = |dt: f64| -> State {
        let steps = (t_final / dt).round() as usize;
        let mut state = State {
            t: 0.0,
            step_index: 0,
            u: u_init.clone(),
            psi: psi_init.clone(),
        };
        for _ in 0..steps {
            let (next, _) = coupled_step(&spaces, &state, &f, dt, cutoff, Some(2.0)).unwrap();
            state = next;
        }
        state
    };
    let dts = [0.05, 0.025, 0.0125, 0.00625, 0.003125];
    let finals: Vec<State> = dts.iter().map(|&dt| run_with_dt(dt)).collect();
    let errs: Vec<f64> = finals
        .windows(2)
        .map(|w| (w[0].u.diff_norm_sq(&w[1].u) + w[0].psi.diff_norm_sq(&w[1].psi)).sqrt())
        .collect();
    let orders: Vec<f64> = errs.windows(2).map(|e| (e[0] / e[1]).log2()).collect();
    let min_order = orders.iter().cloned().fold(f64::INFINITY, f64::min);
    report(
        11,
        min_order >= 0.9,
        &format!("observed convergence orders {orders:?}, min = {min_order:.3} (tol 0.9)"),
    );
}

#[test]
fn ou_relaxation_rate_respects_entropy_branch() {
    // Pure relaxation (u stays zero): the entropy of a squared degree-1
    // perturbation decays at twice the mode rate a0/(2 lambda); the fitted
    // rate must sit above 0.95 gamma0 = 0.95.
    let mut cfg = preset("ou-relaxation").unwrap();
    cfg.physical.t_final = 1.0;
    let trace = cfg.run().unwrap();
    let rate = decay_fit(cfg.physical.k, &trace.records).unwrap();
    let gamma0 = trace.meta.gamma0;
    assert!((gamma0 - 1.0).abs() < 1e-12);
    assert!(
        rate >= 0.95 * gamma0,
        "OU relaxation rate {rate} below 0.95 gamma0"
    );
    // The dominant degree-1 content decays at amplitude rate a0/(2 lambda) = 1,
    // i.e. rate ~ 2 for the squared quantity.
    assert!((1.5..3.0).contains(&rate), "rate {rate} outside the OU window");
}

#[test]
fn theta_moment_bound_holds_on_decay_run() {
    // Per-spring moments int (|q_i|^2/2)^theta M psi_hat dq dx stay below
    // the a-priori bound B^2/(k c1) + C_exp along the decay run.
    let trace = decay_trace();
    let cfg = preset("decay-demo").unwrap();
    let (spaces, init) = cfg.assemble().unwrap();
    let b_sq = trace.meta.u0_raw_norm_sq + 2.0 * cfg.physical.k * trace.meta.re0_raw;
    let audit = polykinetic::diagnostics::moment_audit(&spaces, &init.psi0, b_sq).unwrap();
    assert!(audit.pass, "values {:?} vs bound {}", audit.values, audit.bound);
    // Recorded per-step moment values stay below the same bound.
    for r in &trace.records {
        for v in &r.moment_theta {
            assert!(*v <= audit.bound, "moment {v} exceeds bound {}", audit.bound);
        }
    }
}

#[test]
fn outer_fixed_point_contracts_on_perturbed_state() {
    // Contraction ratios of the coupled map stay below one at desk scale.
    let spaces = gaussian_spaces(8, 6, 1.0);
    let psi = squared_mode_density(&spaces, 1, (1, 0), 0.3).unwrap();
    let state = State {
        t: 0.0,
        step_index: 0,
        u: Velocity {
            spec: spaces.xs.taylor_green(0.2),
        },
        psi,
    };
    let f = spaces.xs.zero_vector();
    let (_, stats) = coupled_step(&spaces, &state, &f, 0.02, 12.0, Some(2.0)).unwrap();
    assert!(stats.outer_iterations >= 2);
    assert!(
        stats.contraction_ratio < 1.0,
        "contraction ratio {} not < 1",
        stats.contraction_ratio
    );
}

#[test]
fn k2_smoke_criteria_hold() {
    // The two-spring smoke case obeys the same audited inequalities.
    let trace = k2_trace();
    let mut min_slack = f64::INFINITY;
    for r in &trace.records {
        min_slack = min_slack.min(r.energy_budget_slack);
    }
    assert!(min_slack >= -1e-9, "k2 budget slack {min_slack}");
    assert!(trace.records.last().unwrap().free_energy <= trace.initial_record.free_energy + 1e-10);
}
