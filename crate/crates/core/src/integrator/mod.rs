//! Adaptive initial-value integration with dense output and event location.
//!
//! Two embedded pairs are available:
//!
//! * [`Method::Rosenbrock23`] (default): the L-stable linearly implicit
//!   Rosenbrock pair of order 2(3) due to Shampine and Reichelt. It handles
//!   the stiff relaxation of the DG pool when `L * V` is large.
//! * [`Method::DormandPrince45`]: the explicit 5(4) pair with Hairer's
//!   fourth-order continuous extension, for nonstiff problems.
//!
//! Jacobians are taken from [`OdeSystem::jacobian`] when the system supplies
//! one and by forward differences otherwise.

mod dopri;
mod events;
mod rosenbrock;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use events::{Direction, EventRecord, EventSpec};

/// A first-order system `y' = f(t, y)`.
pub trait OdeSystem {
    fn dim(&self) -> usize;

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]);

    /// Writes the analytic Jacobian `df/dy` into `jac` and returns `true`, or
    /// returns `false` to request a finite-difference Jacobian.
    fn jacobian(&self, _t: f64, _y: &[f64], _jac: &mut DMatrix<f64>) -> bool {
        false
    }

    /// `true` when `f` does not depend on `t` explicitly.
    fn autonomous(&self) -> bool {
        false
    }

    /// Hook run on every accepted state. An `Err` aborts the integration.
    fn check_state(&self, _y: &[f64]) -> Result<(), String> {
        Ok(())
    }
}

/// Adapter turning a closure into an [`OdeSystem`].
pub struct FnSystem<F> {
    dim: usize,
    f: F,
    autonomous: bool,
}

impl<F> FnSystem<F>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    pub fn new(dim: usize, f: F) -> Self {
        Self {
            dim,
            f,
            autonomous: false,
        }
    }

    pub fn autonomous(mut self) -> Self {
        self.autonomous = true;
        self
    }
}

impl<F> OdeSystem for FnSystem<F>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        (self.f)(t, y, dy)
    }

    fn autonomous(&self) -> bool {
        self.autonomous
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    Rosenbrock23,
    DormandPrince45,
}

impl Method {
    /// Order of the local error estimate (exponent base for step control).
    fn error_order(self) -> f64 {
        match self {
            Method::Rosenbrock23 => 3.0,
            Method::DormandPrince45 => 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub rtol: f64,
    pub atol: f64,
    pub t_end: f64,
    pub max_steps: usize,
    pub initial_step: Option<f64>,
    pub method: Method,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            t_end: 1e3,
            max_steps: 1_000_000,
            initial_step: None,
            method: Method::Rosenbrock23,
        }
    }
}

impl IntegratorConfig {
    pub fn with_t_end(mut self, t_end: f64) -> Self {
        self.t_end = t_end;
        self
    }

    pub fn with_tolerances(mut self, rtol: f64, atol: f64) -> Self {
        self.rtol = rtol;
        self.atol = atol;
        self
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn validate(&self) -> Result<(), IntegrationError> {
        let bad = |msg: String| Err(IntegrationError::InvalidConfig(msg));
        if !(self.rtol > 0.0 && self.rtol.is_finite()) {
            return bad(format!("rtol must be positive, got {}", self.rtol));
        }
        if !(self.atol > 0.0 && self.atol.is_finite()) {
            return bad(format!("atol must be positive, got {}", self.atol));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be positive, got {}", self.t_end));
        }
        if self.max_steps == 0 {
            return bad("max_steps must be at least 1".into());
        }
        if let Some(h) = self.initial_step {
            if !(h > 0.0 && h.is_finite()) {
                return bad(format!("initial_step must be positive, got {h}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrationError {
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),
    #[error("initial state has dimension {got}, system expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("step budget of {max_steps} exhausted at t = {t}")]
    MaxSteps {
        max_steps: usize,
        t: f64,
        state: Vec<f64>,
    },
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64, state: Vec<f64> },
    #[error("non-finite derivative at t = {t}")]
    NonFinite { t: f64, state: Vec<f64> },
    #[error("invalid state at t = {t}: {reason}")]
    InvalidState {
        t: f64,
        reason: String,
        state: Vec<f64>,
    },
}

/// Why an integration stopped without error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    ReachedEnd,
    SteadyState,
    EventsResolved,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
    pub jacobian_evals: usize,
}

/// Interpolation data for one accepted step.
#[derive(Debug, Clone)]
pub(crate) enum Dense {
    /// `y(t0 + s h) = y0 + h (b1(s) k1 + b2(s) k2)`.
    Rosenbrock { k1: Vec<f64>, k2: Vec<f64> },
    /// Hairer's `contd5` coefficients.
    Dopri { rcont: [Vec<f64>; 5] },
}

#[derive(Debug, Clone)]
pub(crate) struct Segment {
    t0: f64,
    h: f64,
    y0: Vec<f64>,
    dense: Dense,
}

impl Segment {
    fn eval(&self, t: f64, out: &mut [f64]) {
        let s = ((t - self.t0) / self.h).clamp(0.0, 1.0);
        match &self.dense {
            Dense::Rosenbrock { k1, k2 } => {
                let d = rosenbrock::D;
                let b1 = s * (1.0 - s) / (1.0 - 2.0 * d);
                let b2 = s * (s - 2.0 * d) / (1.0 - 2.0 * d);
                for i in 0..out.len() {
                    out[i] = self.y0[i] + self.h * (b1 * k1[i] + b2 * k2[i]);
                }
            }
            Dense::Dopri { rcont } => {
                let s1 = 1.0 - s;
                for i in 0..out.len() {
                    out[i] = rcont[0][i]
                        + s * (rcont[1][i]
                            + s1 * (rcont[2][i] + s * (rcont[3][i] + s1 * rcont[4][i])));
                }
            }
        }
    }

    fn t1(&self) -> f64 {
        self.t0 + self.h
    }
}

/// Result of an integration: output samples, located events and the dense
/// interpolant over every accepted step.
#[derive(Debug, Clone)]
pub struct Solution {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub events: Vec<EventRecord>,
    pub termination: Termination,
    pub stats: Stats,
    segments: Vec<Segment>,
    t_final: f64,
    y_final: Vec<f64>,
}

impl Solution {
    /// Time reached by the integration (`t_end` unless stopped early).
    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn final_state(&self) -> &[f64] {
        &self.y_final
    }

    pub fn event(&self, label: &str) -> Option<&EventRecord> {
        self.events.iter().find(|e| e.label == label)
    }

    /// Evaluates the dense output at `t`; `None` outside `[0, t_final]`.
    pub fn sample(&self, t: f64) -> Option<Vec<f64>> {
        if self.segments.is_empty() {
            return (t == 0.0).then(|| self.y_final.clone());
        }
        if t < self.segments[0].t0 || t > self.t_final {
            return None;
        }
        let idx = self
            .segments
            .partition_point(|seg| seg.t1() < t)
            .min(self.segments.len() - 1);
        let mut out = vec![0.0; self.y_final.len()];
        self.segments[idx].eval(t, &mut out);
        Some(out)
    }
}

/// Builder holding the configuration, event specs and stopping rules for
/// one or more integrations.
pub struct Integrator<'a> {
    cfg: IntegratorConfig,
    events: Vec<EventSpec<'a>>,
    stop_when: Option<Box<dyn Fn(f64, &[f64]) -> bool + 'a>>,
    stop_after_events: bool,
    t_eval: Option<Vec<f64>>,
}

impl<'a> Integrator<'a> {
    pub fn new(cfg: IntegratorConfig) -> Self {
        Self {
            cfg,
            events: Vec::new(),
            stop_when: None,
            stop_after_events: false,
            t_eval: None,
        }
    }

    pub fn config(&self) -> &IntegratorConfig {
        &self.cfg
    }

    pub fn event(mut self, spec: EventSpec<'a>) -> Self {
        self.events.push(spec);
        self
    }

    pub fn events(mut self, specs: impl IntoIterator<Item = EventSpec<'a>>) -> Self {
        self.events.extend(specs);
        self
    }

    /// Stops once `pred` holds on an accepted state and every event has fired.
    pub fn stop_when(mut self, pred: impl Fn(f64, &[f64]) -> bool + 'a) -> Self {
        self.stop_when = Some(Box::new(pred));
        self
    }

    /// Stops as soon as every registered event has fired.
    pub fn stop_after_events(mut self, yes: bool) -> Self {
        self.stop_after_events = yes;
        self
    }

    /// Replaces per-step output by samples of the dense output at `times`.
    /// Samples past an early termination are dropped.
    pub fn t_eval(mut self, times: Vec<f64>) -> Self {
        self.t_eval = Some(times);
        self
    }

    pub fn solve<S: OdeSystem + ?Sized>(
        &self,
        sys: &S,
        y0: &[f64],
    ) -> Result<Solution, IntegrationError> {
        self.cfg.validate()?;
        if y0.len() != sys.dim() {
            return Err(IntegrationError::DimensionMismatch {
                expected: sys.dim(),
                got: y0.len(),
            });
        }
        if let Some(te) = &self.t_eval {
            let ordered = te.windows(2).all(|w| w[0] < w[1]);
            let inside = te.iter().all(|&t| (0.0..=self.cfg.t_end).contains(&t));
            if !ordered || !inside {
                return Err(IntegrationError::InvalidConfig(
                    "t_eval must be strictly increasing within [0, t_end]".into(),
                ));
            }
        }
        Driver::new(self, sys, y0).run()
    }
}

/// Solves with default builder settings.
pub fn integrate<S: OdeSystem + ?Sized>(
    sys: &S,
    y0: &[f64],
    cfg: &IntegratorConfig,
    events: Vec<EventSpec<'_>>,
) -> Result<Solution, IntegrationError> {
    Integrator::new(cfg.clone()).events(events).solve(sys, y0)
}

pub(crate) fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Weighted RMS norm used for step control.
pub(crate) fn error_norm(err: &[f64], y0: &[f64], y1: &[f64], rtol: f64, atol: f64) -> f64 {
    let n = err.len().max(1) as f64;
    let sum: f64 = err
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sc = atol + rtol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (sum / n).sqrt()
}

/// Forward-difference Jacobian using `f0 = f(t, y)`.
pub(crate) fn fd_jacobian<S: OdeSystem + ?Sized>(
    sys: &S,
    t: f64,
    y: &[f64],
    f0: &[f64],
    jac: &mut DMatrix<f64>,
) -> usize {
    let n = y.len();
    let mut yp = y.to_vec();
    let mut fp = vec![0.0; n];
    for j in 0..n {
        let delta = f64::EPSILON.sqrt() * y[j].abs().max(1.0);
        yp[j] = y[j] + delta;
        let step = yp[j] - y[j];
        sys.rhs(t, &yp, &mut fp);
        for i in 0..n {
            jac[(i, j)] = (fp[i] - f0[i]) / step;
        }
        yp[j] = y[j];
    }
    n
}

/// Local stiffness indicator: `h` times the spectral radius of a
/// finite-difference Jacobian at `(t, y)`. Values well above the explicit
/// stability bound (about 3) mean an explicit pair will be step-limited.
pub fn stiffness_probe<S: OdeSystem + ?Sized>(sys: &S, t: f64, y: &[f64], h: f64) -> f64 {
    let n = y.len();
    let mut f0 = vec![0.0; n];
    sys.rhs(t, y, &mut f0);
    let mut jac = DMatrix::zeros(n, n);
    fd_jacobian(sys, t, y, &f0, &mut jac);
    if jac.iter().all(|v| *v == 0.0) {
        return 0.0;
    }
    let radius = jac
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    h.abs() * radius
}

/// Outcome of one trial step.
pub(crate) struct StepOutcome {
    pub y_new: Vec<f64>,
    pub f_new: Vec<f64>,
    pub err: f64,
    pub dense: Dense,
}

pub(crate) enum Stepper {
    Rosenbrock(rosenbrock::Rosenbrock23),
    Dopri(dopri::DormandPrince),
}

impl Stepper {
    fn new(method: Method, n: usize) -> Self {
        match method {
            Method::Rosenbrock23 => Stepper::Rosenbrock(rosenbrock::Rosenbrock23::new(n)),
            Method::DormandPrince45 => Stepper::Dopri(dopri::DormandPrince::new(n)),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn step<S: OdeSystem + ?Sized>(
        &mut self,
        sys: &S,
        t: f64,
        y: &[f64],
        f0: &[f64],
        h: f64,
        cfg: &IntegratorConfig,
        stats: &mut Stats,
    ) -> Option<StepOutcome> {
        match self {
            Stepper::Rosenbrock(r) => r.step(sys, t, y, f0, h, cfg, stats),
            Stepper::Dopri(d) => d.step(sys, t, y, f0, h, cfg, stats),
        }
    }

    /// Called when the base point changes so cached Jacobians are dropped.
    fn invalidate(&mut self) {
        if let Stepper::Rosenbrock(r) = self {
            r.invalidate();
        }
    }
}

struct Driver<'b, 'a, S: ?Sized> {
    opts: &'b Integrator<'a>,
    sys: &'b S,
    y0: &'b [f64],
}

impl<'b, 'a, S: OdeSystem + ?Sized> Driver<'b, 'a, S> {
    fn new(opts: &'b Integrator<'a>, sys: &'b S, y0: &'b [f64]) -> Self {
        Self { opts, sys, y0 }
    }

    fn initial_step(&self, y: &[f64], f0: &[f64], stats: &mut Stats) -> f64 {
        let cfg = &self.opts.cfg;
        if let Some(h) = cfg.initial_step {
            return h.min(cfg.t_end);
        }
        let n = y.len();
        let sc: Vec<f64> = y.iter().map(|v| cfg.atol + cfg.rtol * v.abs()).collect();
        let norm = |v: &[f64]| -> f64 {
            (v.iter().zip(&sc).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / n as f64).sqrt()
        };
        let d0 = norm(y);
        let d1 = norm(f0);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / d1
        };
        let y1: Vec<f64> = y.iter().zip(f0).map(|(a, b)| a + h0 * b).collect();
        let mut f1 = vec![0.0; n];
        self.sys.rhs(h0, &y1, &mut f1);
        stats.rhs_evals += 1;
        let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
        let d2 = norm(&diff) / h0;
        let order = cfg.method.error_order();
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(1.0 / order)
        };
        (100.0 * h0).min(h1).min(cfg.t_end)
    }

    fn run(self) -> Result<Solution, IntegrationError> {
        let cfg = &self.opts.cfg;
        let sys = self.sys;
        let n = self.y0.len();
        let mut stats = Stats::default();

        let mut t = 0.0_f64;
        let mut y = self.y0.to_vec();
        let mut f = vec![0.0; n];
        sys.rhs(t, &y, &mut f);
        stats.rhs_evals += 1;
        if !all_finite(&y) || !all_finite(&f) {
            return Err(IntegrationError::NonFinite { t, state: y });
        }

        let mut tracker = events::Tracker::new(&self.opts.events, t, &y);
        let mut times = Vec::new();
        let mut states = Vec::new();
        let mut eval_idx = 0usize;
        match &self.opts.t_eval {
            None => {
                times.push(t);
                states.push(y.clone());
            }
            Some(te) => {
                while eval_idx < te.len() && te[eval_idx] <= t {
                    times.push(te[eval_idx]);
                    states.push(y.clone());
                    eval_idx += 1;
                }
            }
        }

        let mut segments: Vec<Segment> = Vec::new();
        let mut stepper = Stepper::new(cfg.method, n);
        let mut h = self.initial_step(&y, &f, &mut stats);
        let mut last_rejected = false;
        let mut termination = Termination::ReachedEnd;
        let order = cfg.method.error_order();

        while t < cfg.t_end {
            if stats.accepted + stats.rejected >= cfg.max_steps {
                return Err(IntegrationError::MaxSteps {
                    max_steps: cfg.max_steps,
                    t,
                    state: y,
                });
            }
            let remaining = cfg.t_end - t;
            if h >= remaining || remaining - h <= 1e-12 * cfg.t_end {
                h = remaining;
            }
            let min_h = 16.0 * f64::EPSILON * t.abs().max(1.0);
            if h < min_h {
                return Err(IntegrationError::StepUnderflow { t, h, state: y });
            }

            let outcome = stepper.step(sys, t, &y, &f, h, cfg, &mut stats);
            let accepted = match outcome {
                Some(o) if o.err.is_finite() && all_finite(&o.y_new) && all_finite(&o.f_new) => {
                    if o.err <= 1.0 {
                        Some(o)
                    } else {
                        let fac = (0.9 * o.err.powf(-1.0 / order)).clamp(0.2, 1.0);
                        h *= fac;
                        stats.rejected += 1;
                        last_rejected = true;
                        None
                    }
                }
                _ => {
                    // Non-finite trial values or a singular iteration matrix.
                    h *= 0.25;
                    stats.rejected += 1;
                    last_rejected = true;
                    if h < min_h {
                        return Err(IntegrationError::NonFinite { t, state: y });
                    }
                    None
                }
            };
            let Some(o) = accepted else { continue };

            let t_new = if h == remaining { cfg.t_end } else { t + h };
            sys.check_state(&o.y_new)
                .map_err(|reason| IntegrationError::InvalidState {
                    t: t_new,
                    reason,
                    state: o.y_new.clone(),
                })?;
            stats.accepted += 1;

            let segment = Segment {
                t0: t,
                h: t_new - t,
                y0: y.clone(),
                dense: o.dense,
            };
            tracker.advance(&segment, &o.y_new, cfg);

            match &self.opts.t_eval {
                None => {
                    times.push(t_new);
                    states.push(o.y_new.clone());
                }
                Some(te) => {
                    while eval_idx < te.len() && te[eval_idx] <= t_new {
                        let mut buf = vec![0.0; n];
                        if te[eval_idx] == t_new {
                            buf.copy_from_slice(&o.y_new);
                        } else {
                            segment.eval(te[eval_idx], &mut buf);
                        }
                        times.push(te[eval_idx]);
                        states.push(buf);
                        eval_idx += 1;
                    }
                }
            }
            segments.push(segment);

            let err = o.err;
            t = t_new;
            y = o.y_new;
            f = o.f_new;
            stepper.invalidate();

            let fired_all = tracker.all_fired();
            if fired_all && self.opts.stop_after_events && !self.opts.events.is_empty() {
                termination = Termination::EventsResolved;
                break;
            }
            if let Some(pred) = &self.opts.stop_when {
                if fired_all && pred(t, &y) {
                    termination = Termination::SteadyState;
                    break;
                }
            }

            let mut fac = if err == 0.0 {
                5.0
            } else {
                0.9 * err.powf(-1.0 / order)
            };
            fac = fac.clamp(0.2, if last_rejected { 1.0 } else { 5.0 });
            h *= fac;
            last_rejected = false;
        }

        Ok(Solution {
            times,
            states,
            events: tracker.into_records(),
            termination,
            stats,
            segments,
            t_final: t,
            y_final: y,
        })
    }
}
