//! Scalar entropy / cut-off function families and the entropy-type
//! functionals evaluated on discrete densities.
//!
//! The scalar families are pure functions; the functionals at the bottom of
//! the module combine them with the weighted quadrature of a built model.

use crate::error::{Error, Result};

/// `F(s) = s (log s - 1) + 1`, extended by continuity with `F(0) = 1`.
pub fn entropy_f(s: f64) -> Result<f64> {
    if s < 0.0 {
        return Err(Error::Domain(format!("F(s) undefined for s = {s} < 0")));
    }
    if s < 1e-300 {
        return Ok(1.0);
    }
    Ok(s * (s.ln() - 1.0) + 1.0)
}

/// Cut-off entropy `F^L` and its first two derivatives.
///
/// Quadratic continuation above `s = L`; matches `F` in value and first
/// derivative there. `order` selects the derivative (0, 1 or 2).
pub fn entropy_family(s: f64, cutoff: f64, order: u8) -> Result<f64> {
    if !(cutoff > 1.0) {
        return Err(Error::invalid("cutoff", "L must exceed 1"));
    }
    if s < 0.0 {
        return Err(Error::Domain(format!("F^L(s) undefined for s = {s} < 0")));
    }
    match order {
        0 => {
            if s <= cutoff {
                entropy_f(s)
            } else {
                Ok((s * s - cutoff * cutoff) / (2.0 * cutoff) + s * (cutoff.ln() - 1.0) + 1.0)
            }
        }
        1 => {
            if s == 0.0 {
                Err(Error::Domain("(F^L)'(0) is a pole".into()))
            } else if s <= cutoff {
                Ok(s.ln())
            } else {
                Ok(s / cutoff + cutoff.ln() - 1.0)
            }
        }
        2 => {
            if s == 0.0 {
                Err(Error::Domain("(F^L)''(0) is a pole".into()))
            } else {
                Ok(1.0 / s.min(cutoff))
            }
        }
        _ => Err(Error::Domain(format!("order {order} not in {{0,1,2}}"))),
    }
}

/// Microscopic cut-off `beta^L(s) = min(s, L)`.
pub fn beta(s: f64, cutoff: f64) -> f64 {
    s.min(cutoff)
}

/// `beta^L_delta(s) = max(beta^L(s), delta)`.
pub fn beta_delta(s: f64, cutoff: f64, delta: f64) -> f64 {
    s.min(cutoff).max(delta)
}

/// Which member of the delta-regularized family to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegularizedKind {
    /// `F^L_delta` or one of its derivatives.
    Value(u8),
    /// `beta^L_delta`.
    Beta,
    /// `G^L_delta`, the flux potential with `[G^L_delta]'(s) = s / beta^L_delta(s)`.
    Flux,
}

/// The convex `C^{2,1}` regularization `F^L_delta` of `F` (quadratic below
/// `delta` and above `L`), together with `beta^L_delta` and `G^L_delta`.
/// Defined on all of R.
pub fn regularized_family(s: f64, cutoff: f64, delta: f64, kind: RegularizedKind) -> Result<f64> {
    if !(cutoff > 1.0) {
        return Err(Error::invalid("cutoff", "L must exceed 1"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid("delta", "delta must lie in (0,1)"));
    }
    let v = match kind {
        RegularizedKind::Value(0) => {
            if s <= delta {
                (s * s - delta * delta) / (2.0 * delta) + s * (delta.ln() - 1.0) + 1.0
            } else if s <= cutoff {
                s * (s.ln() - 1.0) + 1.0
            } else {
                (s * s - cutoff * cutoff) / (2.0 * cutoff) + s * (cutoff.ln() - 1.0) + 1.0
            }
        }
        RegularizedKind::Value(1) => {
            if s <= delta {
                s / delta + delta.ln() - 1.0
            } else if s <= cutoff {
                s.ln()
            } else {
                s / cutoff + cutoff.ln() - 1.0
            }
        }
        RegularizedKind::Value(2) => 1.0 / s.clamp(delta, cutoff),
        RegularizedKind::Value(n) => {
            return Err(Error::Domain(format!("order {n} not in {{0,1,2}}")));
        }
        RegularizedKind::Beta => beta_delta(s, cutoff, delta),
        RegularizedKind::Flux => {
            if s <= delta {
                s * s / (2.0 * delta) + (delta - cutoff) / 2.0
            } else if s <= cutoff {
                s - cutoff / 2.0
            } else {
                s * s / (2.0 * cutoff)
            }
        }
    };
    Ok(v)
}

/// Piecewise flux potential `G^L` appearing in the transport manipulation:
/// `s - L/2` below the cut-off and `s^2/(2L)` above it.
pub fn flux_potential(s: f64, cutoff: f64) -> f64 {
    if s <= cutoff {
        s - cutoff / 2.0
    } else {
        s * s / (2.0 * cutoff)
    }
}

/// Logarithmic Young inequality residual `(r log r - r + e^s) - r s`,
/// nonnegative for `r, s >= 0`.
pub fn log_young_residual(r: f64, s: f64) -> Result<f64> {
    if r < 0.0 || s < 0.0 {
        return Err(Error::Domain("log-Young residual needs r, s >= 0".into()));
    }
    let rlogr = if r < 1e-300 { 0.0 } else { r * r.ln() };
    Ok(rlogr - r + s.exp() - r * s)
}
