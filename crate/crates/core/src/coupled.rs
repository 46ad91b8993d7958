//! The per-step coupled fixed point (velocity solve, then Fokker-Planck
//! solve, iterated to joint convergence) and the full time loop under the
//! dt-L schedule, with diagnostics and budget accounting per step.

use crate::diagnostics::{
    compute_record, relative_entropy, BudgetBaseline, DiagnosticsRecord, StepInputs,
};
use crate::error::{Error, Result};
use crate::fields::{ConfigurationDensity, Spaces, Velocity};
use crate::fp_solver::{cutoff_project, lift_initial_density};
use crate::ns_solver::{average_force, kramers_stress, lift_initial_velocity, ns_step};
use crate::params::{CutoffSchedule, ForceSpec};
use crate::xspace::{Domain, SpecField};

pub const OUTER_TOL: f64 = 1e-10;
pub const MAX_OUTER: usize = 30;

/// One point of the discrete trajectory.
#[derive(Debug, Clone)]
pub struct State {
    pub t: f64,
    pub step_index: usize,
    pub u: Velocity,
    pub psi: ConfigurationDensity,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CoupledStepStats {
    pub outer_iterations: usize,
    pub picard_iterations: usize,
    pub last_increment: f64,
    pub contraction_ratio: f64,
    pub nodal_max: f64,
    pub nodal_min: f64,
    pub substeps: usize,
}

/// Run-level metadata the audits measure against.
#[derive(Debug, Clone)]
pub struct TraceMeta {
    pub config_fingerprint: String,
    pub dt: f64,
    pub steps: usize,
    pub cutoff: f64,
    pub a0: f64,
    pub kappa: f64,
    pub poincare: f64,
    pub gamma0: f64,
    pub u0_raw_norm_sq: f64,
    pub re0_raw: f64,
    pub u0_lift_norm_sq: f64,
    pub re0_init: f64,
    pub fl0_init: f64,
    /// The analysis is carried out on the periodic torus; the mean-zero
    /// Poincare constant replaces the no-slip one everywhere.
    pub domain_note: &'static str,
}

/// Ordered per-step records plus the final state.
#[derive(Debug, Clone)]
pub struct RunTrace {
    pub meta: TraceMeta,
    pub initial_record: DiagnosticsRecord,
    pub records: Vec<DiagnosticsRecord>,
    pub final_state: State,
}

impl RunTrace {
    pub fn baseline(&self) -> BudgetBaseline {
        BudgetBaseline {
            u0_raw_norm_sq: self.meta.u0_raw_norm_sq,
            re0_raw: self.meta.re0_raw,
            u0_lift_norm_sq: self.meta.u0_lift_norm_sq,
            fl0_init: self.meta.fl0_init,
        }
    }
}

/// One step of the coupled fixed-point map: from the current iterate's
/// density solve the momentum equation, then the Fokker-Planck equation,
/// and repeat until both relative increments fall below `OUTER_TOL`.
pub fn coupled_step(
    spaces: &Spaces,
    state: &State,
    force: &[SpecField; 2],
    dt: f64,
    cutoff: f64,
    prev_nodal_max: Option<f64>,
) -> Result<(State, CoupledStepStats)> {
    coupled_step_inner(spaces, state, force, dt, cutoff, prev_nodal_max, true)
}

fn coupled_step_inner(
    spaces: &Spaces,
    state: &State,
    force: &[SpecField; 2],
    dt: f64,
    cutoff: f64,
    prev_nodal_max: Option<f64>,
    allow_retry: bool,
) -> Result<(State, CoupledStepStats)> {
    let mut stats = CoupledStepStats::default();
    let mut u_iter = state.u.clone();
    let mut psi_iter = state.psi.clone();
    let mut prev_increment = f64::INFINITY;
    for outer in 1..=MAX_OUTER {
        let stress = kramers_stress(spaces, &psi_iter);
        let (u_new, _gm) = ns_step(spaces, &state.u, &stress, force, dt)?;
        // The nodal verification of the linear cut-off path is deferred to
        // the accepted outer iterate below.
        let (psi_new, fp_stats) = crate::fp_solver::fp_step_unverified(
            spaces,
            &state.psi,
            &state.u,
            &u_new,
            dt,
            cutoff,
            prev_nodal_max,
        )?;
        stats.picard_iterations += fp_stats.picard_iterations;
        stats.outer_iterations = outer;
        stats.nodal_max = fp_stats.nodal_max;
        stats.nodal_min = fp_stats.nodal_min;
        let used_linear_path = !fp_stats.verified;

        // Increments are measured against the equilibrium scale (order
        // one); a purely relative test against a decaying |u| would chase
        // inner-solver noise forever.
        let du = u_new.diff_norm_sq(&u_iter).sqrt() / u_new.norm_sq(&spaces.xs).sqrt().max(1.0);
        let dpsi = psi_new.diff_norm_sq(&psi_iter).sqrt() / psi_new.norm_sq().sqrt().max(1.0);
        let incr = du.max(dpsi);
        stats.contraction_ratio = if prev_increment.is_finite() && prev_increment > 0.0 {
            incr / prev_increment
        } else {
            0.0
        };
        stats.last_increment = incr;
        prev_increment = incr;
        u_iter = u_new;
        psi_iter = psi_new;
        if incr <= OUTER_TOL {
            let (lo, hi) = crate::fp_solver::nodal_extrema(spaces, &psi_iter);
            stats.nodal_min = lo;
            stats.nodal_max = hi;
            if hi >= cutoff && used_linear_path && allow_retry {
                // The linear drag path was used on a state that crossed the
                // cut-off; redo the step with the nodal pairing engaged.
                return coupled_step_inner(spaces, state, force, dt, cutoff, Some(hi), false);
            }
            return Ok((
                State {
                    t: state.t + dt,
                    step_index: state.step_index + 1,
                    u: u_iter,
                    psi: psi_iter,
                },
                stats,
            ));
        }
    }
    Err(Error::StepFailure {
        step: state.step_index + 1,
        message: format!(
            "coupled fixed point did not converge in {MAX_OUTER} outer iterations \
             (last increment {:.3e})",
            prev_increment
        ),
    })
}

/// Attempts one macro step, falling back to halved sub-steps (up to
/// eight) composed over the same interval.
fn macro_step(
    spaces: &Spaces,
    state: &State,
    force: &[SpecField; 2],
    dt: f64,
    cutoff: f64,
    prev_nodal_max: Option<f64>,
) -> Result<(State, CoupledStepStats)> {
    let mut halvings = 0;
    loop {
        let pieces = 1usize << halvings;
        let sub_dt = dt / pieces as f64;
        let mut cur = state.clone();
        let mut agg = CoupledStepStats::default();
        let mut ok = true;
        let mut hint = prev_nodal_max;
        for _ in 0..pieces {
            match coupled_step(spaces, &cur, force, sub_dt, cutoff, hint) {
                Ok((next, st)) => {
                    hint = Some(st.nodal_max);
                    agg.outer_iterations += st.outer_iterations;
                    agg.picard_iterations += st.picard_iterations;
                    agg.last_increment = st.last_increment;
                    agg.contraction_ratio = st.contraction_ratio;
                    agg.nodal_max = st.nodal_max;
                    agg.nodal_min = st.nodal_min;
                    agg.substeps += 1;
                    cur = next;
                }
                Err(_) if halvings < 3 => {
                    ok = false;
                    break;
                }
                Err(e) => {
                    return Err(Error::StepFailure {
                        step: state.step_index + 1,
                        message: format!("after {halvings} dt-halvings: {e}"),
                    });
                }
            }
        }
        if ok {
            // Preserve macro bookkeeping: one step index per macro interval.
            let fixed = State {
                t: state.t + dt,
                step_index: state.step_index + 1,
                u: cur.u,
                psi: cur.psi,
            };
            return Ok((fixed, agg));
        }
        halvings += 1;
    }
}

/// Initial data in raw (pre-lifting) form.
#[derive(Debug, Clone)]
pub struct InitialData {
    pub u0: [SpecField; 2],
    pub psi0: ConfigurationDensity,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub config_fingerprint: String,
    /// Write a checkpoint of the last good state here on step failure.
    pub failure_checkpoint: Option<std::path::PathBuf>,
    /// Write a checkpoint every this many macro steps (0 = never).
    pub checkpoint_every: usize,
    /// Directory for periodic checkpoints.
    pub checkpoint_dir: Option<std::path::PathBuf>,
}

/// Full time loop: lift both data, apply the scheme's initial cut-off,
/// then march `steps` coupled steps, recording diagnostics (including the
/// cumulative energy-budget slack) every step.
pub fn run(
    spaces: &Spaces,
    init: &InitialData,
    schedule: &CutoffSchedule,
    force: &ForceSpec,
    opts: &RunOptions,
) -> Result<RunTrace> {
    let dt = schedule.dt;
    let cutoff = schedule.cutoff;
    let xs = &spaces.xs;
    let phys = &spaces.params.physical;

    let u0_raw_norm_sq = xs.norm_sq_spec(&init.u0[0]) + xs.norm_sq_spec(&init.u0[1]);
    let re0_raw = relative_entropy(spaces, &init.psi0)?;

    let u_init = lift_initial_velocity(xs, &init.u0, dt);
    let psi_lifted = lift_initial_density(spaces, &init.psi0, dt, cutoff)?;
    let (psi_init, _, psi_init_max) = cutoff_project(spaces, &psi_lifted, cutoff);

    let mut state = State {
        t: 0.0,
        step_index: 0,
        u: u_init,
        psi: psi_init,
    };
    let initial_record = compute_record(
        spaces,
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
    )?;

    let kappa = spaces.model.kappa;
    let a0 = spaces.params.chain.a0;
    let poincare = crate::xspace::poincare_constant(Domain::Torus { side: 1.0 })?;
    let gamma0 =
        crate::diagnostics::decay_rate_bound(phys.nu, phys.lambda, kappa, a0, Domain::Torus { side: 1.0 })?;
    let meta = TraceMeta {
        config_fingerprint: opts.config_fingerprint.clone(),
        dt,
        steps: schedule.steps,
        cutoff,
        a0,
        kappa,
        poincare,
        gamma0,
        u0_raw_norm_sq,
        re0_raw,
        u0_lift_norm_sq: state.u.norm_sq(xs),
        re0_init: initial_record.relative_entropy,
        fl0_init: initial_record.fl_int,
        domain_note: "periodic torus [0,1]^2; mean-zero Poincare constant",
    };

    // Budget accumulators (cumulative criterion form).
    let nu = phys.nu;
    let k = phys.k;
    let lambda = phys.lambda;
    let eps = phys.epsilon;
    let mut acc_incr_u = 0.0;
    let mut acc_grad = 0.0;
    let mut acc_incr_psi = 0.0;
    let mut acc_fx = 0.0;
    let mut acc_fq = 0.0;
    let mut acc_f2 = 0.0;

    let mut records = Vec::with_capacity(schedule.steps);
    let mut nodal_max_hint = Some(psi_init_max);
    for n in 1..=schedule.steps {
        let f_n = average_force(xs, force, n, dt);
        let f_dual_sq = xs.dual_norm_sq(&f_n);
        let prev_state = state.clone();
        let (next, stats) = match macro_step(spaces, &state, &f_n, dt, cutoff, nodal_max_hint) {
            Ok(v) => v,
            Err(e) => {
                if let Some(path) = &opts.failure_checkpoint {
                    let _ = crate::trace_io::write_checkpoint(path, spaces, &state, &opts.config_fingerprint);
                }
                return Err(e);
            }
        };
        nodal_max_hint = Some(stats.nodal_max);
        state = next;

        let mut rec = compute_record(
            spaces,
            cutoff,
            &StepInputs {
                t: state.t,
                u: &state.u,
                psi: &state.psi,
                u_prev: &prev_state.u,
                psi_prev: &prev_state.psi,
                f_dual_sq,
                picard_iterations: stats.picard_iterations,
                outer_iterations: stats.outer_iterations,
            },
        )?;
        acc_incr_u += rec.u_increment_sq;
        acc_grad += rec.grad_u_norm_sq;
        acc_incr_psi += rec.psi_increment_sq;
        acc_fx += rec.fisher_x;
        acc_fq += rec.fisher_q;
        acc_f2 += rec.f_dual_sq;
        let lhs = rec.u_norm_sq
            + acc_incr_u
            + nu * dt * acc_grad
            + 2.0 * k * rec.relative_entropy
            + (k / cutoff) * acc_incr_psi
            + 2.0 * k * eps * dt * acc_fx
            + (a0 * k / (2.0 * lambda)) * dt * acc_fq;
        let rhs = meta.u0_raw_norm_sq + (dt / nu) * acc_f2 + 2.0 * k * meta.re0_raw;
        rec.energy_budget_slack = rhs - lhs;
        records.push(rec);
        if opts.checkpoint_every > 0 && n % opts.checkpoint_every == 0 {
            if let Some(dir) = &opts.checkpoint_dir {
                let path = dir.join(format!("checkpoint_{n:06}.ckpt"));
                crate::trace_io::write_checkpoint(&path, spaces, &state, &opts.config_fingerprint)?;
            }
        }
    }

    Ok(RunTrace {
        meta,
        initial_record,
        records,
        final_state: state,
    })
}
