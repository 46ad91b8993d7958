//! Model constants, chain topology and the cut-off schedule.
//!
//! Everything downstream treats these as immutable after validation.

use crate::error::{Error, Result};
use nalgebra::DMatrix;

/// Analytic body-force field on the torus.
///
/// The force is evaluated on the x-grid each step and time-averaged over
/// the step interval by 4-point Gauss quadrature before entering the
/// momentum solve.
#[derive(Debug, Clone, PartialEq)]
pub enum ForceSpec {
    Zero,
    /// `amplitude * cos(omega t) * (sin 2pi x cos 2pi y, -cos 2pi x sin 2pi y)`,
    /// a solenoidal mean-zero cellular field.
    TaylorGreen { amplitude: f64, omega: f64 },
    /// `amplitude * t * (sin 2pi y, sin 2pi x)`; linear in time, used by the
    /// time-averaging tests.
    TimeRamp { amplitude: f64 },
}

impl ForceSpec {
    pub fn is_zero(&self) -> bool {
        matches!(self, ForceSpec::Zero)
    }
}

/// All dimensionless model constants of the coupled system.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalParams {
    /// Reciprocal Reynolds number.
    pub nu: f64,
    /// Stress prefactor (k_B T scale).
    pub k: f64,
    /// Weissenberg number.
    pub lambda: f64,
    /// Centre-of-mass diffusion coefficient.
    pub epsilon: f64,
    /// Number of springs in the chain.
    pub springs: usize,
    /// Spatial dimension.
    pub dim: usize,
    /// Final time.
    pub t_final: f64,
    pub body_force: ForceSpec,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        PhysicalParams {
            nu: 1.0,
            k: 1.0,
            lambda: 1.0,
            epsilon: 0.1,
            springs: 1,
            dim: 2,
            t_final: 1.0,
            body_force: ForceSpec::Zero,
        }
    }
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0) {
            return Err(Error::invalid("nu", "nu must be > 0"));
        }
        if !(self.k > 0.0) {
            return Err(Error::invalid("k", "k must be > 0"));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::invalid("lambda", "lambda must be > 0"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid("epsilon", "epsilon must be > 0"));
        }
        if self.springs < 1 {
            return Err(Error::invalid("springs", "chain needs at least one spring"));
        }
        if self.dim != 2 && self.dim != 3 {
            return Err(Error::invalid("dim", "spatial dimension must be 2 or 3"));
        }
        if !(self.t_final > 0.0) {
            return Err(Error::invalid("t_final", "final time must be > 0"));
        }
        Ok(())
    }
}

/// Per-spring potential shape: Hookean up to `s_inf`, power growth with
/// exponent `theta` beyond it. A single global exponent is applied to all
/// springs; the decay analysis only ever uses the minimum modulus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialSpec {
    pub theta: f64,
    pub s_inf: f64,
}

impl Default for PotentialSpec {
    fn default() -> Self {
        PotentialSpec {
            theta: 2.0,
            s_inf: 4.0,
        }
    }
}

impl PotentialSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 1.0) {
            return Err(Error::invalid("theta", "theta must exceed 1"));
        }
        if !(self.s_inf >= 0.0) || !self.s_inf.is_finite() {
            return Err(Error::invalid("s_inf", "s_inf must be finite and >= 0"));
        }
        Ok(())
    }

    /// Leading tail coefficient of the potential, `U(s) ~ c1 s^theta`.
    pub fn growth_c1(&self) -> f64 {
        self.s_inf.powf(1.0 - self.theta) / self.theta
    }
}

/// Chain topology: the Rouse connectivity matrix and derived constants.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSpec {
    pub rouse: DMatrix<f64>,
    /// Smallest eigenvalue of the Rouse matrix.
    pub a0: f64,
    pub potential: PotentialSpec,
}

/// Linear-chain Rouse matrix `tridiag[-1, 2, -1]` of size KxK with its
/// smallest eigenvalue from a symmetric eigensolve.
pub fn rouse_matrix(springs: usize) -> Result<ChainSpec> {
    rouse_matrix_with(springs, PotentialSpec::default())
}

pub fn rouse_matrix_with(springs: usize, potential: PotentialSpec) -> Result<ChainSpec> {
    if springs < 1 {
        return Err(Error::invalid("springs", "chain needs at least one spring"));
    }
    potential.validate()?;
    let a = DMatrix::from_fn(springs, springs, |i, j| {
        if i == j {
            2.0
        } else if i.abs_diff(j) == 1 {
            -1.0
        } else {
            0.0
        }
    });
    let eig = a.clone().symmetric_eigen();
    let a0 = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(a0 > 0.0) {
        return Err(Error::invalid("rouse", "Rouse matrix is not positive definite"));
    }
    Ok(ChainSpec {
        rouse: a,
        a0,
        potential,
    })
}

/// Cut-off level, lower regularization and the time step linked by
/// `dt <= C0 / (L log L)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CutoffSchedule {
    pub cutoff: f64,
    pub delta: f64,
    pub c0: f64,
    pub dt: f64,
    pub steps: usize,
}

/// Derives `dt` from `(L, C0, T)` so the dt-L link can never be violated:
/// `dt = T / ceil(T L log L / C0)`.
pub fn cutoff_schedule(cutoff: f64, c0: f64, t_final: f64) -> Result<CutoffSchedule> {
    if !(cutoff > 1.0) {
        return Err(Error::invalid("cutoff", "cut-off level L must exceed 1"));
    }
    if !(c0 > 0.0) {
        return Err(Error::invalid("c0", "link constant C0 must be > 0"));
    }
    if !(t_final > 0.0) {
        return Err(Error::invalid("t_final", "final time must be > 0"));
    }
    let steps = (t_final * cutoff * cutoff.ln() / c0).ceil().max(1.0) as usize;
    let dt = t_final / steps as f64;
    Ok(CutoffSchedule {
        cutoff,
        delta: 1e-4,
        c0,
        dt,
        steps,
    })
}

impl CutoffSchedule {
    /// Override the derived step for the dt-refinement study. The dt-L link
    /// is intentionally not enforced here; callers own that decision.
    pub fn with_explicit_dt(cutoff: f64, dt: f64, t_final: f64) -> Result<CutoffSchedule> {
        if !(cutoff > 1.0) {
            return Err(Error::invalid("cutoff", "cut-off level L must exceed 1"));
        }
        if !(dt > 0.0) || !(t_final > 0.0) {
            return Err(Error::invalid("dt", "dt and T must be > 0"));
        }
        let steps = (t_final / dt).round().max(1.0) as usize;
        let dt = t_final / steps as f64;
        Ok(CutoffSchedule {
            cutoff,
            delta: 1e-4,
            c0: f64::NAN,
            dt,
            steps,
        })
    }

    pub fn validate(&self, t_final: f64) -> Result<()> {
        if !(self.cutoff > 1.0) {
            return Err(Error::invalid("cutoff", "cut-off level L must exceed 1"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid("delta", "delta must lie in (0,1)"));
        }
        let nt = self.steps as f64 * self.dt;
        if (nt - t_final).abs() > 1e-12 * t_final.max(1.0) {
            return Err(Error::invalid("dt", "N*dt must equal T"));
        }
        Ok(())
    }
}

/// Validated, immutable parameter bundle handed to the solvers.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub physical: PhysicalParams,
    pub chain: ChainSpec,
}

pub fn validate_params(physical: PhysicalParams, chain: ChainSpec) -> Result<ModelParams> {
    physical.validate()?;
    chain.potential.validate()?;
    if chain.rouse.nrows() != physical.springs || chain.rouse.ncols() != physical.springs {
        return Err(Error::invalid(
            "rouse",
            "Rouse matrix size does not match the spring count",
        ));
    }
    let asym = (&chain.rouse - chain.rouse.transpose()).norm();
    if asym > 1e-12 {
        return Err(Error::invalid("rouse", "Rouse matrix must be symmetric"));
    }
    if !(chain.a0 > 0.0) {
        return Err(Error::invalid("a0", "smallest Rouse eigenvalue must be > 0"));
    }
    Ok(ModelParams { physical, chain })
}
