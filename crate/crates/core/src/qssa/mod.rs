//! Quasi-steady-state reduction of the DG equation.
//!
//! The QSSA level `q̃(s)` is the unique nonnegative root of
//! `d(q̃) = 2 kappa q̃^2 + q̃ / (1 + q̃) = m1(s) / V`.

mod compare;
mod expansions;
mod perturbation;
mod reduced;
mod timescales;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kinetics::{rate_d, rate_d_prime, rate_m1, ModelParams};

pub use compare::{approximate_q, compare_expansions, regime_orders, ExpansionComparison};
pub use expansions::{expansion_q_kappa, expansion_q_v, kappa_terms, v_terms};
pub use perturbation::{perturbation, sign_identity, PerturbationSeries, SignIdentityReport};
pub use reduced::{simulate_reduced, ReducedModel, ReducedTrajectory, Regime};
pub use timescales::{
    detect_layer, layer_event, timescales, timescales_from_layer, LayerPoint, Percentile,
    TimescaleReport, LAYER_EVENT,
};

/// Absolute residual target for the exact root.
pub const ROOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QssaMethod {
    ExactRoot,
    LemmaApprox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QssaPoint {
    pub q_tilde: f64,
    pub input_i: f64,
    pub method: QssaMethod,
    /// `q̃ <= 1/2`: checked directly for the exact root, and through the
    /// equivalent `I <= (1 + 2 kappa) / 4` for the approximation.
    pub valid_half: bool,
}

/// Exact QSSA level at substrate level `s`.
pub fn solve_qssa(s: f64, p: &ModelParams) -> Result<QssaPoint> {
    if !(s >= 0.0 && s.is_finite()) {
        return Err(invalid(
            "s",
            format!("must be nonnegative and finite, got {s}"),
        ));
    }
    solve_qssa_input(rate_m1(s, p.k) / p.v, p.kappa)
}

/// Shorthand for `solve_qssa(s, p)?.q_tilde`.
pub fn q_tilde(s: f64, p: &ModelParams) -> Result<f64> {
    Ok(solve_qssa(s, p)?.q_tilde)
}

/// Root of `d(q) = input` by bracket doubling followed by Newton steps
/// safeguarded with bisection.
pub fn solve_qssa_input(input: f64, kappa: f64) -> Result<QssaPoint> {
    if !(input >= 0.0 && input.is_finite()) {
        return Err(invalid(
            "I",
            format!("must be nonnegative and finite, got {input}"),
        ));
    }
    if !(kappa >= 0.0 && kappa.is_finite()) {
        return Err(invalid(
            "kappa",
            format!("must be nonnegative and finite, got {kappa}"),
        ));
    }
    let exact = |q: f64| QssaPoint {
        q_tilde: q,
        input_i: input,
        method: QssaMethod::ExactRoot,
        valid_half: q <= 0.5,
    };
    if input == 0.0 {
        return Ok(exact(0.0));
    }
    if kappa == 0.0 && input >= 1.0 {
        return Err(Error::NoRoot { input });
    }

    let g = |q: f64| rate_d(q, kappa) - input;
    let mut lo = 0.0;
    let mut hi = if kappa > 0.0 {
        input
            .min((input / (2.0 * kappa)).sqrt())
            .max(f64::MIN_POSITIVE)
    } else {
        input
    };
    while g(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::NoRoot { input });
        }
    }

    let mut q = 0.5 * (lo + hi);
    for _ in 0..200 {
        let r = g(q);
        if r == 0.0 {
            break;
        }
        if r > 0.0 {
            hi = q;
        } else {
            lo = q;
        }
        let newton = q - r / rate_d_prime(q, kappa);
        let next = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        // Newton converges quadratically, so polish to rounding level once
        // inside the tolerance rather than stopping at the threshold.
        let settled = r.abs() < ROOT_TOL && (next - q).abs() <= 4.0 * f64::EPSILON * q;
        if settled || hi - lo <= f64::EPSILON * hi {
            if g(next).abs() <= r.abs() {
                q = next;
            }
            break;
        }
        q = next;
    }
    Ok(exact(q))
}

/// Explicit small-`q̃` approximation `2 I / (sqrt(1 + 4 I (2 kappa - 1)) + 1)`.
pub fn qssa_approx(input: f64, kappa: f64) -> Result<QssaPoint> {
    if !(input > 0.0 && input.is_finite()) {
        return Err(invalid(
            "I",
            format!("must be positive and finite, got {input}"),
        ));
    }
    if !(kappa >= 0.0 && kappa.is_finite()) {
        return Err(invalid(
            "kappa",
            format!("must be nonnegative and finite, got {kappa}"),
        ));
    }
    let disc = 1.0 + 4.0 * input * (2.0 * kappa - 1.0);
    if disc < 0.0 {
        return Err(Error::NonRealDiscriminant {
            input,
            kappa,
            discriminant: disc,
        });
    }
    Ok(QssaPoint {
        q_tilde: 2.0 * input / (disc.sqrt() + 1.0),
        input_i: input,
        method: QssaMethod::LemmaApprox,
        valid_half: input <= (1.0 + 2.0 * kappa) / 4.0,
    })
}

/// `V >= 4 / (1 + 2 kappa)`, the sufficient condition for `q̃ <= 1/2` at
/// every `s <= 1`.
pub fn vkappa_condition(v: f64, kappa: f64) -> bool {
    v * (1.0 + 2.0 * kappa) >= 4.0
}
