use serde::{Deserialize, Serialize};

use super::reduced::{ReducedModel, Regime};
use super::timescales::{layer_event, LAYER_EVENT};
use super::{expansion_q_kappa, expansion_q_v};
use crate::error::{invalid, Error, Result};
use crate::integrator::{Integrator, IntegratorConfig};
use crate::kinetics::{simulate_with, ModelParams};

/// Full-model `q` against the regime's approximations of increasing order,
/// sampled on a uniform grid over `window`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionComparison {
    pub regime: Regime,
    /// Orders of the approximations: `0, 1` for `L`, `1..=3` for `V`,
    /// `1, 2` for `kappa`.
    pub orders: Vec<usize>,
    pub t_m: f64,
    pub window: (f64, f64),
    pub times: Vec<f64>,
    pub s: Vec<f64>,
    pub q_full: Vec<f64>,
    /// `approx[k][i]` is order `orders[k]` at `times[i]`.
    pub approx: Vec<Vec<f64>>,
    pub sup_errors: Vec<f64>,
}

pub fn regime_orders(regime: Regime) -> Vec<usize> {
    match regime {
        Regime::LLarge => vec![0, 1],
        Regime::VLarge => vec![1, 2, 3],
        Regime::KappaLarge => vec![1, 2],
    }
}

/// Approximation of order `order` to `q` at substrate level `s`.
pub fn approximate_q(regime: Regime, order: usize, s: f64, p: &ModelParams) -> Result<f64> {
    match regime {
        Regime::LLarge => ReducedModel::new(regime, order as u8, *p)?.q_observable(s),
        Regime::VLarge => expansion_q_v(s, p, order),
        Regime::KappaLarge => expansion_q_kappa(s, p, order),
    }
}

/// Runs the full model to `cfg.t_end` and compares on `[start, cfg.t_end]`
/// with `points` samples. `start` defaults to `3 t_m`.
pub fn compare_expansions(
    p: &ModelParams,
    regime: Regime,
    cfg: &IntegratorConfig,
    start: Option<f64>,
    points: usize,
) -> Result<ExpansionComparison> {
    if points < 2 {
        return Err(invalid("points", "need at least two samples"));
    }
    let sol = simulate_with(p, &Integrator::new(cfg.clone()).event(layer_event(*p)))?;
    let t_m = sol
        .event(LAYER_EVENT)
        .ok_or_else(|| Error::MissingEvent(LAYER_EVENT.into()))?
        .time;
    let t_end = sol.t_final();
    let a = start.unwrap_or(3.0 * t_m);
    if !(a >= 0.0 && a < t_end) {
        return Err(invalid(
            "start",
            format!("window start {a} must lie in [0, {t_end})"),
        ));
    }
    let orders = regime_orders(regime);
    let mut out = ExpansionComparison {
        regime,
        orders: orders.clone(),
        t_m,
        window: (a, t_end),
        times: Vec::with_capacity(points),
        s: Vec::with_capacity(points),
        q_full: Vec::with_capacity(points),
        approx: vec![Vec::with_capacity(points); orders.len()],
        sup_errors: vec![0.0; orders.len()],
    };
    for i in 0..points {
        let t = a + (t_end - a) * i as f64 / (points - 1) as f64;
        let y = sol.sample(t).expect("grid lies inside the solution span");
        out.times.push(t);
        out.s.push(y[0]);
        out.q_full.push(y[1]);
        for (k, &order) in orders.iter().enumerate() {
            let q = approximate_q(regime, order, y[0], p)?;
            out.sup_errors[k] = out.sup_errors[k].max((y[1] - q).abs());
            out.approx[k].push(q);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::Method;

    #[test]
    fn v_regime_errors_fall_with_order() {
        let p = ModelParams::new(1.0, 1.0, 10.0, 1.0, 0.0).unwrap();
        let cfg = IntegratorConfig::default()
            .with_t_end(10.0)
            .with_tolerances(1e-11, 1e-13)
            .with_method(Method::DormandPrince45);
        let c = compare_expansions(&p, Regime::VLarge, &cfg, None, 2001).unwrap();
        assert_eq!(c.orders, vec![1, 2, 3]);
        let e = &c.sup_errors;
        assert!(e[0] > e[1] && e[1] > e[2], "{e:?}");
        assert_eq!(c.window.1, 10.0);
        assert!((c.window.0 - 3.0 * c.t_m).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_window() {
        let p = ModelParams::new(1.0, 1.0, 10.0, 1.0, 0.0).unwrap();
        let cfg = IntegratorConfig::default().with_t_end(1.0);
        assert!(compare_expansions(&p, Regime::VLarge, &cfg, Some(2.0), 10).is_err());
        assert!(compare_expansions(&p, Regime::VLarge, &cfg, None, 1).is_err());
    }
}
