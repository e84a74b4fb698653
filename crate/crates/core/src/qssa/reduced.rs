use serde::{Deserialize, Serialize};

use super::{expansions, q_tilde};
use crate::error::{invalid, Error, Result};
use crate::integrator::{IntegrationError, Integrator, OdeSystem};
use crate::kinetics::{
    rate_d_prime, rate_m1, rate_m1_prime, rate_m2, rate_m2_prime, ModelParams, State, Trajectory,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    #[serde(rename = "L-large")]
    LLarge,
    #[serde(rename = "V-large")]
    VLarge,
    #[serde(rename = "kappa-large")]
    KappaLarge,
}

/// Reduced `(s, p, f)` system for one asymptotic regime.
///
/// `q` is not a state variable; [`ReducedModel::q_observable`] rebuilds it
/// from the QSSA level or the regime's expansion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedModel {
    pub regime: Regime,
    pub order: u8,
    /// `1/L`, `1/V` or `1/sqrt(kappa)` by regime.
    pub epsilon: f64,
    pub params: ModelParams,
}

impl ReducedModel {
    pub fn new(regime: Regime, order: u8, params: ModelParams) -> Result<Self> {
        params.validate()?;
        if order > 1 {
            return Err(invalid(
                "order",
                format!("reduced models have order 0 or 1, got {order}"),
            ));
        }
        let epsilon = match regime {
            Regime::LLarge => 1.0 / params.l,
            Regime::VLarge => 1.0 / params.v,
            Regime::KappaLarge => {
                if params.kappa <= 0.0 {
                    return Err(invalid("kappa", "the kappa regime needs kappa > 0"));
                }
                1.0 / params.kappa.sqrt()
            }
        };
        Ok(Self {
            regime,
            order,
            epsilon,
            params,
        })
    }

    /// Replaces the expansion parameter while keeping the model parameters.
    pub fn with_epsilon(self, epsilon: f64) -> Self {
        Self { epsilon, ..self }
    }

    fn eps(&self) -> f64 {
        if self.order == 0 {
            0.0
        } else {
            self.epsilon
        }
    }

    /// `(ds/dt, dp/dt, df/dt)` at substrate level `s`.
    pub fn derivative(&self, s: f64) -> Result<[f64; 3]> {
        let p = &self.params;
        let s = s.max(0.0);
        let eps = self.eps();
        let m1 = rate_m1(s, p.k);
        let dm1 = rate_m1_prime(s, p.k);
        match self.regime {
            Regime::LLarge => {
                let q = q_tilde(s, p)?;
                let m2 = rate_m2(q);
                let dm2 = rate_m2_prime(q);
                let vd = p.v * rate_d_prime(q, p.kappa);
                let s_dot0 = -m1 + p.v * p.kappa * q * q;
                let q1 = -dm1 * s_dot0 / (vd * vd);
                Ok([
                    (1.0 - 2.0 * eps * q * dm1 / (vd * vd)) * s_dot0,
                    p.v * p.kappa * q * q + p.v * m2 + eps * p.v * (2.0 * p.kappa * q + dm2) * q1,
                    m1 + p.v * m2 + eps * p.v * dm2 * q1,
                ])
            }
            Regime::VLarge => {
                let corr = eps * dm1 * m1 / p.l;
                let trans = eps * p.kappa * m1 * m1;
                Ok([
                    -m1 + trans,
                    m1 + corr - trans,
                    2.0 * m1 + corr - 2.0 * trans,
                ])
            }
            Regime::KappaLarge => {
                let root_v = (p.v * m1 / 8.0).sqrt();
                let corr = dm1 / (8.0 * p.l) * (m1 / (2.0 * p.v)).sqrt();
                Ok([
                    -0.5 * m1 - eps * root_v + eps * corr,
                    0.5 * m1 + eps * root_v + eps * corr,
                    m1 + eps * (p.v * m1 / 2.0).sqrt(),
                ])
            }
        }
    }

    /// Reconstructed DG level: `q̃ (+ q1/L)` in the `L` regime, the partial
    /// sum of order `order + 1` of the expansion otherwise.
    pub fn q_observable(&self, s: f64) -> Result<f64> {
        let p = &self.params;
        let s = s.max(0.0);
        match self.regime {
            Regime::LLarge => {
                let q = q_tilde(s, p)?;
                if self.order == 0 {
                    return Ok(q);
                }
                let m1 = rate_m1(s, p.k);
                let vd = p.v * rate_d_prime(q, p.kappa);
                let q1 = -rate_m1_prime(s, p.k) * (-m1 + p.v * p.kappa * q * q) / (vd * vd);
                Ok(q + self.epsilon * q1)
            }
            Regime::VLarge => expansions::expansion_q_v(s, p, self.order as usize + 1),
            Regime::KappaLarge => expansions::expansion_q_kappa(s, p, self.order as usize + 1),
        }
    }
}

impl OdeSystem for ReducedModel {
    fn dim(&self) -> usize {
        3
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        match self.derivative(y[0]) {
            Ok(d) => dy.copy_from_slice(&d),
            Err(_) => dy.fill(f64::NAN),
        }
    }

    fn autonomous(&self) -> bool {
        true
    }
}

/// Output of a reduced run; `states` carries the reconstructed `q`.
pub type ReducedTrajectory = Trajectory;

/// Integrates a reduced model from `(s, p, f) = (1, 0, 0)`. Event targets
/// see the three-component state `(s, p, f)`.
pub fn simulate_reduced(
    model: &ReducedModel,
    integrator: &Integrator<'_>,
) -> Result<ReducedTrajectory> {
    let sol = match integrator.solve(model, &[1.0, 0.0, 0.0]) {
        Ok(sol) => sol,
        Err(IntegrationError::NonFinite { state, .. }) if model.derivative(state[0]).is_err() => {
            return Err(model.derivative(state[0]).unwrap_err());
        }
        Err(e) => return Err(Error::from(e)),
    };
    let states = sol
        .states
        .iter()
        .map(|y| Ok(State::new(y[0], model.q_observable(y[0])?, y[1], y[2])))
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory {
        times: sol.times.clone(),
        states,
        events: sol.events.clone(),
    })
}
