//! Forward sensitivities with respect to `kappa`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{Integrator, IntegratorConfig, Method, OdeSystem, Solution};
use crate::kinetics::{
    rate_d_prime, rate_m1, rate_m1_prime, rate_m2_prime, FullModel, ModelParams, State,
};
use crate::qssa::q_tilde;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SensitivityState {
    pub ds_dk: f64,
    pub dq_dk: f64,
    pub dp_dk: f64,
    pub df_dk: f64,
}

impl SensitivityState {
    pub fn to_array(self) -> [f64; 4] {
        [self.ds_dk, self.dq_dk, self.dp_dk, self.df_dk]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self {
            ds_dk: v[0],
            dq_dk: v[1],
            dp_dk: v[2],
            df_dk: v[3],
        }
    }
}

/// Time derivative of the sensitivities along the full system.
pub fn rhs_sensitivity_full(x: &State, sv: &SensitivityState, p: &ModelParams) -> SensitivityState {
    let s = x.s.max(0.0);
    let q = x.q.max(0.0);
    let dm1 = rate_m1_prime(s, p.k);
    let dm2 = rate_m2_prime(q);
    let (v, l, kappa) = (p.v, p.l, p.kappa);
    let (ds, dq) = (sv.ds_dk, sv.dq_dk);
    SensitivityState {
        ds_dk: -dm1 * ds + v * q * q + 2.0 * v * kappa * q * dq,
        dq_dk: l * (dm1 * ds - 2.0 * v * q * q - v * (dm2 + 4.0 * kappa * q) * dq),
        dp_dk: v * (q * q + (dm2 + 2.0 * kappa * q) * dq),
        df_dk: dm1 * ds + v * dm2 * dq,
    }
}

/// Full model augmented with its `kappa` sensitivities, ordered
/// `(s, q, p, f, ds, dq, dp, df)`.
#[derive(Debug, Clone, Copy)]
pub struct AugmentedModel {
    base: FullModel,
}

impl AugmentedModel {
    pub fn new(params: ModelParams, atol: f64) -> Self {
        Self {
            base: FullModel::new(params, atol),
        }
    }
}

impl OdeSystem for AugmentedModel {
    fn dim(&self) -> usize {
        8
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        self.base.rhs(t, &y[..4], &mut dy[..4]);
        let d = rhs_sensitivity_full(
            &State::from_slice(&y[..4]),
            &SensitivityState::from_slice(&y[4..]),
            &self.base.params,
        );
        dy[4..].copy_from_slice(&d.to_array());
    }

    fn autonomous(&self) -> bool {
        true
    }

    fn check_state(&self, y: &[f64]) -> std::result::Result<(), String> {
        self.base.check_state(&y[..4])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivitySeries {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    pub sens: Vec<SensitivityState>,
}

fn split_series(sol: &Solution) -> SensitivitySeries {
    SensitivitySeries {
        times: sol.times.clone(),
        states: sol
            .states
            .iter()
            .map(|y| State::from_slice(&y[..4]))
            .collect(),
        sens: sol
            .states
            .iter()
            .map(|y| SensitivityState::from_slice(&y[4..]))
            .collect(),
    }
}

fn augmented_solution(
    p: &ModelParams,
    cfg: &IntegratorConfig,
    t_grid: Option<&[f64]>,
) -> Result<Solution> {
    p.validate()?;
    let sys = AugmentedModel::new(*p, cfg.atol);
    let mut y0 = [0.0; 8];
    y0[..4].copy_from_slice(&State::initial(p).to_array());
    let mut it = Integrator::new(cfg.clone());
    if let Some(grid) = t_grid {
        it = it.t_eval(grid.to_vec());
    }
    Ok(it.solve(&sys, &y0)?)
}

/// Integrates the augmented system; output at `t_grid` when given, per step
/// otherwise.
pub fn simulate_sensitivity(
    p: &ModelParams,
    cfg: &IntegratorConfig,
    t_grid: Option<&[f64]>,
) -> Result<SensitivitySeries> {
    Ok(split_series(&augmented_solution(p, cfg, t_grid)?))
}

/// `dq̃/dkappa` and the rate of change of `ds̃/dkappa` on the QSSA manifold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QssaSensitivity {
    pub q_tilde: f64,
    pub mu: f64,
    pub dq_dk: f64,
    pub ds_dk_rate: f64,
}

pub fn qssa_sensitivity(s: f64, ds_dk: f64, p: &ModelParams) -> Result<QssaSensitivity> {
    let s = s.max(0.0);
    let q = q_tilde(s, p)?;
    let mu = rate_d_prime(q, p.kappa);
    let dm1 = rate_m1_prime(s, p.k);
    let kappa = p.kappa;
    Ok(QssaSensitivity {
        q_tilde: q,
        mu,
        dq_dk: (dm1 / p.v * ds_dk - 2.0 * q * q) / mu,
        ds_dk_rate: -dm1 * (1.0 - 2.0 * kappa * q / mu) * ds_dk
            + p.v * q * q * (1.0 - 4.0 * kappa * q / mu),
    })
}

/// Zero-order QSSA flow `s̃' = -m1 + V kappa q̃^2` with its sensitivity,
/// ordered `(s̃, ds̃/dkappa)`.
#[derive(Debug, Clone, Copy)]
pub struct QssaSensitivityModel {
    pub params: ModelParams,
}

impl OdeSystem for QssaSensitivityModel {
    fn dim(&self) -> usize {
        2
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let p = &self.params;
        match qssa_sensitivity(y[0], y[1], p) {
            Ok(r) => {
                let s = y[0].max(0.0);
                dy[0] = -rate_m1(s, p.k) + p.v * p.kappa * r.q_tilde * r.q_tilde;
                dy[1] = r.ds_dk_rate;
            }
            Err(_) => dy.fill(f64::NAN),
        }
    }

    fn autonomous(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QssaSensitivityPoint {
    pub s: f64,
    pub q: f64,
    pub ds_dk: f64,
    pub dq_dk: f64,
    /// `-ds_dk`, from the zero-order conservation `s̃ + p̃ = 1`.
    pub dp_dk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QssaSensitivitySeries {
    pub times: Vec<f64>,
    pub points: Vec<QssaSensitivityPoint>,
}

fn qssa_solution(
    p: &ModelParams,
    cfg: &IntegratorConfig,
    t_grid: Option<&[f64]>,
) -> Result<Solution> {
    p.validate()?;
    q_tilde(1.0, p)?;
    let mut it = Integrator::new(cfg.clone());
    if let Some(grid) = t_grid {
        it = it.t_eval(grid.to_vec());
    }
    Ok(it.solve(&QssaSensitivityModel { params: *p }, &[1.0, 0.0])?)
}

fn qssa_point(y: &[f64], p: &ModelParams) -> Result<QssaSensitivityPoint> {
    let r = qssa_sensitivity(y[0], y[1], p)?;
    Ok(QssaSensitivityPoint {
        s: y[0],
        q: r.q_tilde,
        ds_dk: y[1],
        dq_dk: r.dq_dk,
        dp_dk: -y[1],
    })
}

pub fn simulate_qssa_sensitivity(
    p: &ModelParams,
    cfg: &IntegratorConfig,
    t_grid: Option<&[f64]>,
) -> Result<QssaSensitivitySeries> {
    let sol = qssa_solution(p, cfg, t_grid)?;
    let points = sol
        .states
        .iter()
        .map(|y| qssa_point(y, p))
        .collect::<Result<Vec<_>>>()?;
    Ok(QssaSensitivitySeries {
        times: sol.times.clone(),
        points,
    })
}

/// Integrator settings used by the finite-difference oracle.
pub fn oracle_config(t_end: f64) -> IntegratorConfig {
    IntegratorConfig::default()
        .with_t_end(t_end)
        .with_tolerances(1e-12, 1e-14)
        .with_method(Method::DormandPrince45)
}

/// Central differences of full trajectories at `kappa (1 ± h)`, sampled on
/// `t_grid` (which must start at or after 0 and be increasing).
pub fn fd_sensitivity_oracle(
    p: &ModelParams,
    t_grid: &[f64],
    h: f64,
) -> Result<Vec<SensitivityState>> {
    p.validate()?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::DegenerateStep(format!(
            "relative step must be positive, got {h}"
        )));
    }
    if p.kappa <= 0.0 {
        return Err(Error::DegenerateStep(
            "kappa = 0 gives a zero-width stencil".into(),
        ));
    }
    let Some(&t_end) = t_grid.last() else {
        return Ok(Vec::new());
    };
    if t_end <= 0.0 {
        return Ok(vec![SensitivityState::default(); t_grid.len()]);
    }
    let cfg = oracle_config(t_end);
    let dk = h * p.kappa;
    let run = |kappa: f64| -> Result<Vec<Vec<f64>>> {
        let q = p.with_kappa(kappa);
        let sys = FullModel::new(q, cfg.atol);
        let sol = Integrator::new(cfg.clone())
            .t_eval(t_grid.to_vec())
            .solve(&sys, &State::initial(&q).to_array())?;
        Ok(sol.states)
    };
    let plus = run(p.kappa + dk)?;
    let minus = run(p.kappa - dk)?;
    Ok(plus
        .iter()
        .zip(&minus)
        .map(|(a, b)| {
            let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y) / (2.0 * dk)).collect();
            SensitivityState::from_slice(&d)
        })
        .collect())
}

/// Largest relative deviation between two sensitivity series over entries
/// whose oracle magnitude exceeds `floor`.
pub fn max_relative_deviation(
    forward: &[SensitivityState],
    oracle: &[SensitivityState],
    floor: f64,
) -> f64 {
    let mut worst = 0.0f64;
    for (a, b) in forward.iter().zip(oracle) {
        for (x, y) in a.to_array().iter().zip(b.to_array()) {
            if y.abs() > floor {
                worst = worst.max((x - y).abs() / y.abs());
            }
        }
    }
    worst
}

/// Earliest interval on which the full-system and QSSA predictions of
/// `dp/dkappa` have different signs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignDiscrepancyReport {
    /// `(start, end)` of the first discrepancy, `None` when there is none.
    pub interval: Option<(f64, f64)>,
    pub duration: f64,
    /// First interval on which the full `dp/dkappa` is positive.
    pub full_positive: Option<(f64, f64)>,
    /// `max_t dp̃/dkappa` over the QSSA run.
    pub qssa_max_dp: f64,
    pub t_end: f64,
}

fn sgn(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Bisects `[a, b]` for the switch point of a predicate that holds at `b`
/// and fails at `a` (or the reverse).
fn refine(mut a: f64, mut b: f64, pred: &dyn Fn(f64) -> bool) -> f64 {
    let pa = pred(a);
    for _ in 0..60 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if pred(m) == pa {
            a = m;
        } else {
            b = m;
        }
    }
    b
}

fn first_interval(times: &[f64], pred: &dyn Fn(f64) -> bool) -> Option<(f64, f64)> {
    let mut start = None;
    for i in 0..times.len() {
        let t = times[i];
        let holds = pred(t);
        match start {
            None if holds => {
                start = Some(if i == 0 {
                    t
                } else {
                    refine(times[i - 1], t, pred)
                });
            }
            Some(s) if !holds => return Some((s, refine(times[i - 1], t, pred))),
            _ => {}
        }
    }
    start.map(|s| (s, *times.last().unwrap()))
}

pub fn sign_discrepancy_probe(
    p: &ModelParams,
    cfg: &IntegratorConfig,
) -> Result<SignDiscrepancyReport> {
    let full = augmented_solution(p, cfg, None)?;
    let red = qssa_solution(p, cfg, None)?;

    let mut times: Vec<f64> = full.times.iter().chain(&red.times).copied().collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let t_end = full.t_final().min(red.t_final());
    times.retain(|&t| t <= t_end);

    let dp_full = |t: f64| full.sample(t).map_or(0.0, |y| y[6]);
    let dp_red = |t: f64| red.sample(t).map_or(0.0, |y| -y[1]);
    let differ = |t: f64| sgn(dp_full(t)) != sgn(dp_red(t));
    let positive = |t: f64| dp_full(t) > 0.0;

    let interval = first_interval(&times, &differ);
    let qssa_max_dp = red
        .states
        .iter()
        .map(|y| -y[1])
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(SignDiscrepancyReport {
        interval,
        duration: interval.map_or(0.0, |(a, b)| b - a),
        full_positive: first_interval(&times, &positive),
        qssa_max_dp,
        t_end,
    })
}

/// Checks `ds + dq/L + dp = 0` and `3 ds + 2 dq/L + dp + df = 0`.
pub fn differentiated_conservation(sv: &SensitivityState, p: &ModelParams) -> [f64; 2] {
    [
        sv.ds_dk + sv.dq_dk / p.l + sv.dp_dk,
        3.0 * sv.ds_dk + 2.0 * sv.dq_dk / p.l + sv.dp_dk + sv.df_dk,
    ]
}
