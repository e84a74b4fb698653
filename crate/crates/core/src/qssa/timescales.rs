use serde::{Deserialize, Serialize};

use super::q_tilde;
use crate::error::{invalid, Error, Result};
use crate::integrator::{Direction, EventSpec, Integrator, IntegratorConfig};
use crate::kinetics::{
    rate_d, rate_d_prime, rate_m1, simulate_with, ModelParams, State, Trajectory,
};

/// Label of the event marking the maximum of `q`.
pub const LAYER_EVENT: &str = "q_max";

/// Fraction of substrate still present at the reference time, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Percentile(f64);

impl Percentile {
    pub fn new(x: f64) -> Result<Self> {
        if x > 0.0 && x < 100.0 {
            Ok(Self(x))
        } else {
            Err(invalid(
                "percentile",
                format!("must lie in (0, 100), got {x}"),
            ))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `c = (4/3)(1 - x/100)`, the slope of the shorthand `c (1 + K)`.
    pub fn slope(self) -> f64 {
        4.0 / 3.0 * (1.0 - self.0 / 100.0)
    }

    /// Time at which `s' = -(3/4) m1(s)` brings `s` from 1 to `x/100`.
    pub fn reference_time(self, k: f64) -> f64 {
        let r = self.0 / 100.0;
        4.0 / 3.0 * (1.0 - r - k * r.ln())
    }

    pub fn reference_shorthand(self, k: f64) -> f64 {
        self.slope() * (1.0 + k)
    }
}

impl Default for Percentile {
    fn default() -> Self {
        Self(90.0)
    }
}

/// State at the end of the initial layer, where `q` peaks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerPoint {
    pub t_m: f64,
    pub state: State,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimescaleReport {
    pub percentile: f64,
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    /// `1 / (1/t1 + 1/t2 + 1/t3)`.
    pub t_estimate: f64,
    /// Upper bound `2(K+1)^2 / ((L/q̃m)(K+1) + 3K/4)` on `t_estimate`.
    pub t_bound: f64,
    /// Reference time at the configured percentile (90 by default).
    pub t90: f64,
    /// Shorthand `c (1 + K)` of `t90`.
    pub t90_shorthand: f64,
    pub q_tilde_m: f64,
    pub q_tilde_0: f64,
    pub t_m: f64,
    pub s_m: f64,
    /// `theta(q̃0) = V q̃0 d'(q̃0) / m1(1)`, used in `t2`.
    pub theta: f64,
    /// `theta(q̃m)` with `m1(s(t_m))`, used in `t3`.
    pub theta_m: f64,
    /// `(m1 - V kappa q̃m^2) / m1` at `t_m`.
    pub psi: f64,
    pub condition_full: bool,
    pub condition_simple: bool,
    /// Explicit sufficient condition on `kappa` for `condition_simple`.
    pub condition_kappa_explicit: bool,
    /// Explicit sufficient condition on `V` for `condition_simple`.
    pub condition_v_explicit: bool,
}

/// Event spec firing when `dq/dt` changes from positive to negative.
pub fn layer_event<'a>(p: ModelParams) -> EventSpec<'a> {
    EventSpec::new(LAYER_EVENT, Direction::Falling, move |_t, y: &[f64]| {
        rate_m1(y[0].max(0.0), p.k) - p.v * rate_d(y[1].max(0.0), p.kappa)
    })
}

/// Integrates the full model up to the maximum of `q`.
pub fn detect_layer(p: &ModelParams, cfg: &IntegratorConfig) -> Result<LayerPoint> {
    let it = Integrator::new(cfg.clone())
        .event(layer_event(*p))
        .stop_after_events(true);
    let sol = simulate_with(p, &it)?;
    let ev = sol
        .event(LAYER_EVENT)
        .ok_or_else(|| Error::MissingEvent(LAYER_EVENT.into()))?;
    Ok(LayerPoint {
        t_m: ev.time,
        state: State::from_slice(&ev.state),
    })
}

/// Report from a trajectory that recorded the [`layer_event`].
pub fn timescales(p: &ModelParams, traj: &Trajectory, pct: Percentile) -> Result<TimescaleReport> {
    let ev = traj
        .events
        .iter()
        .find(|e| e.label == LAYER_EVENT)
        .ok_or_else(|| Error::MissingEvent(LAYER_EVENT.into()))?;
    let layer = LayerPoint {
        t_m: ev.time,
        state: State::from_slice(&ev.state),
    };
    timescales_from_layer(p, &layer, pct)
}

pub fn timescales_from_layer(
    p: &ModelParams,
    layer: &LayerPoint,
    pct: Percentile,
) -> Result<TimescaleReport> {
    p.validate()?;
    let (k, l, v, kappa) = (p.k, p.l, p.v, p.kappa);
    let qm = layer.state.q;
    let sm = layer.state.s;
    if !(qm > 0.0) {
        return Err(invalid(
            "q_tilde_m",
            format!("layer maximum must be positive, got {qm}"),
        ));
    }
    let q0 = q_tilde(1.0, p)?;
    let theta_of = |q: f64, m1: f64| v * q * rate_d_prime(q, kappa) / m1;

    let m1_0 = rate_m1(1.0, k);
    let m1_m = rate_m1(sm, k);
    let theta = theta_of(q0, m1_0);
    let theta_m = theta_of(qm, m1_m);
    let psi = (m1_m - v * kappa * qm * qm) / m1_m;

    let t1 = 2.0 * (k + 1.0) * qm / l;
    let t2 = 2.0 * (k + 1.0).powi(2) / k * (qm / q0) * theta;
    let t3 = 2.0 * (k + sm).powi(2) / k * theta_m / psi;
    let t_estimate = 1.0 / (1.0 / t1 + 1.0 / t2 + 1.0 / t3);
    let t_bound = 2.0 * (k + 1.0).powi(2) / (l / qm * (k + 1.0) + 0.75 * k);

    let n = 2.0 / pct.slope();
    let condition_full = l / qm >= n - 0.75 * k / (k + 1.0);
    let condition_simple = qm <= l / n;
    let condition_kappa_explicit = kappa >= n / (2.0 * l) * (n / (l * v) - 1.0 / (1.0 + l / n));
    let condition_v_explicit = v >= 1.0 / (2.0 * kappa * l * l / (n * n) + 1.0 / (1.0 + n / l));

    Ok(TimescaleReport {
        percentile: pct.value(),
        t1,
        t2,
        t3,
        t_estimate,
        t_bound,
        t90: pct.reference_time(k),
        t90_shorthand: pct.reference_shorthand(k),
        q_tilde_m: qm,
        q_tilde_0: q0,
        t_m: layer.t_m,
        s_m: sm,
        theta,
        theta_m,
        psi,
        condition_full,
        condition_simple,
        condition_kappa_explicit,
        condition_v_explicit,
    })
}
