//! Reaction network TG → DG → MG with DG transacylation 2 DG → TG + MG.
//!
//! All dynamics are nondimensional: `s`, `p` are scaled by the initial TG
//! level, `q` by the DG Michaelis constant, and time by `s0 / V1`.

use nalgebra::DMatrix;
use num_traits::Num;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::integrator::{EventRecord, Integrator, IntegratorConfig, OdeSystem, Solution};
use crate::qssa;

/// Raw kinetic constants and initial concentrations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimensionalParams {
    pub v1_max: f64,
    pub k1_m: f64,
    pub v2_max: f64,
    pub k2_m: f64,
    pub sigma: f64,
    pub s0: f64,
    pub q0: f64,
}

impl DimensionalParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("v1_max", self.v1_max),
            ("k1_m", self.k1_m),
            ("v2_max", self.v2_max),
            ("k2_m", self.k2_m),
            ("s0", self.s0),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(
                    name,
                    format!("must be positive and finite, got {v}"),
                ));
            }
        }
        for (name, v) in [("sigma", self.sigma), ("q0", self.q0)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(
                    name,
                    format!("must be nonnegative and finite, got {v}"),
                ));
            }
        }
        Ok(())
    }
}

/// Dimensionless parameters `K, L, V, kappa` and the scaled initial DG level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "V")]
    pub v: f64,
    pub kappa: f64,
    #[serde(default)]
    pub q0: f64,
}

impl ModelParams {
    pub fn new(k: f64, l: f64, v: f64, kappa: f64, q0: f64) -> Result<Self> {
        let p = Self { k, l, v, kappa, q0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("K", self.k), ("L", self.l), ("V", self.v)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(
                    name,
                    format!("must be positive and finite, got {v}"),
                ));
            }
        }
        for (name, v) in [("kappa", self.kappa), ("q0", self.q0)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(
                    name,
                    format!("must be nonnegative and finite, got {v}"),
                ));
            }
        }
        Ok(())
    }

    pub fn with_kappa(self, kappa: f64) -> Self {
        Self { kappa, ..self }
    }

    pub fn with_v(self, v: f64) -> Self {
        Self { v, ..self }
    }

    /// Final MG level `1 + q0 / L`.
    pub fn p_inf(&self) -> f64 {
        1.0 + self.q0 / self.l
    }

    /// Final FA level `2 + q0 / L`.
    pub fn f_inf(&self) -> f64 {
        2.0 + self.q0 / self.l
    }

    /// Total glycerol `s + q/L + p` carried by the initial data.
    pub fn glycerol_total(&self) -> f64 {
        1.0 + self.q0 / self.l
    }

    /// Total acyl chains `3s + 2q/L + p + f` carried by the initial data.
    pub fn acyl_total(&self) -> f64 {
        3.0 + 2.0 * self.q0 / self.l
    }
}

pub fn nondimensionalize(d: &DimensionalParams) -> Result<ModelParams> {
    d.validate()?;
    ModelParams::new(
        d.k1_m / d.s0,
        d.s0 / d.k2_m,
        d.v2_max / d.v1_max,
        d.sigma * d.k2_m * d.k2_m / d.v2_max,
        d.q0 / d.k2_m,
    )
}

/// Nondimensional concentrations.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State {
    pub s: f64,
    pub q: f64,
    pub p: f64,
    pub f: f64,
}

impl State {
    pub fn new(s: f64, q: f64, p: f64, f: f64) -> Self {
        Self { s, q, p, f }
    }

    /// `(s, q, p, f) = (1, q0, 0, 0)`.
    pub fn initial(params: &ModelParams) -> Self {
        Self::new(1.0, params.q0, 0.0, 0.0)
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.s, self.q, self.p, self.f]
    }

    pub fn from_slice(y: &[f64]) -> Self {
        Self::new(y[0], y[1], y[2], y[3])
    }
}

pub fn rate_m1(s: f64, k: f64) -> f64 {
    s / (k + s)
}

pub fn rate_m1_prime(s: f64, k: f64) -> f64 {
    k / ((k + s) * (k + s))
}

pub fn rate_m1_second(s: f64, k: f64) -> f64 {
    -2.0 * k / ((k + s) * (k + s) * (k + s))
}

pub fn rate_m2(q: f64) -> f64 {
    q / (1.0 + q)
}

pub fn rate_m2_prime(q: f64) -> f64 {
    1.0 / ((1.0 + q) * (1.0 + q))
}

/// Total DG consumption rate `m2(q) + 2 kappa q^2`.
pub fn rate_d(q: f64, kappa: f64) -> f64 {
    rate_m2(q) + 2.0 * kappa * q * q
}

pub fn rate_d_prime(q: f64, kappa: f64) -> f64 {
    rate_m2_prime(q) + 4.0 * kappa * q
}

/// Right-hand side over any numeric field, ordered `(s, q, p, f)`.
pub fn rhs_generic<T: Num + Copy>(x: [T; 4], k: T, l: T, v: T, kappa: T) -> [T; 4] {
    let [s, q, _, _] = x;
    let two = T::one() + T::one();
    let m1 = s / (k + s);
    let m2 = q / (T::one() + q);
    let trans = kappa * q * q;
    [
        v * trans - m1,
        l * (m1 - v * (m2 + two * trans)),
        v * (m2 + trans),
        m1 + v * m2,
    ]
}

pub fn rhs_full(x: &State, p: &ModelParams) -> State {
    let [s, q, pp, f] = rhs_generic(x.to_array(), p.k, p.l, p.v, p.kappa);
    State::new(s, q, pp, f)
}

/// Share of DG processing carried by transacylation, `2 kappa q^2 / d(q)`.
pub fn transacylation_fraction(q: f64, kappa: f64) -> f64 {
    if q <= 0.0 {
        return 0.0;
    }
    let t = 2.0 * kappa * q * q;
    t / (t + rate_m2(q))
}

/// Relative defects of the two conserved linear combinations.
pub fn conservation_residuals(x: &State, p: &ModelParams) -> [f64; 2] {
    let g = x.s + x.q / p.l + x.p;
    let a = 3.0 * x.s + 2.0 * x.q / p.l + x.p + x.f;
    [
        (g - p.glycerol_total()) / p.glycerol_total(),
        (a - p.acyl_total()) / p.acyl_total(),
    ]
}

pub fn equilibrium(p: &ModelParams) -> State {
    State::new(0.0, 0.0, p.p_inf(), p.f_inf())
}

/// Full four-species system with clamping of round-off negativity.
#[derive(Debug, Clone, Copy)]
pub struct FullModel {
    pub params: ModelParams,
    /// Negative values down to `-10 * atol` are clamped to zero before rate
    /// evaluation; anything lower is rejected.
    pub atol: f64,
}

impl FullModel {
    pub fn new(params: ModelParams, atol: f64) -> Self {
        Self { params, atol }
    }

    fn clamp(v: f64) -> f64 {
        v.max(0.0)
    }
}

impl OdeSystem for FullModel {
    fn dim(&self) -> usize {
        4
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let p = &self.params;
        let x = [Self::clamp(y[0]), Self::clamp(y[1]), y[2], y[3]];
        dy.copy_from_slice(&rhs_generic(x, p.k, p.l, p.v, p.kappa));
    }

    fn jacobian(&self, _t: f64, y: &[f64], jac: &mut DMatrix<f64>) -> bool {
        let p = &self.params;
        let s = Self::clamp(y[0]);
        let q = Self::clamp(y[1]);
        let dm1 = rate_m1_prime(s, p.k);
        let dm2 = rate_m2_prime(q);
        jac.fill(0.0);
        jac[(0, 0)] = -dm1;
        jac[(0, 1)] = 2.0 * p.v * p.kappa * q;
        jac[(1, 0)] = p.l * dm1;
        jac[(1, 1)] = -p.l * p.v * (dm2 + 4.0 * p.kappa * q);
        jac[(2, 1)] = p.v * (dm2 + 2.0 * p.kappa * q);
        jac[(3, 0)] = dm1;
        jac[(3, 1)] = p.v * dm2;
        true
    }

    fn autonomous(&self) -> bool {
        true
    }

    fn check_state(&self, y: &[f64]) -> std::result::Result<(), String> {
        let floor = -10.0 * self.atol;
        for (name, v) in ["s", "q", "p", "f"].iter().zip(y) {
            if *v < floor {
                return Err(format!("{name} = {v:e} fell below -10*atol"));
            }
        }
        Ok(())
    }
}

/// Stop predicate for the steady-state rule `s + q < 1e-10`.
pub fn is_steady(y: &[f64]) -> bool {
    y[0] + y[1] < 1e-10
}

/// Time series of the nondimensional state with located events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    pub events: Vec<EventRecord>,
}

impl Trajectory {
    pub fn from_solution(sol: &Solution) -> Self {
        Self {
            times: sol.times.clone(),
            states: sol.states.iter().map(|y| State::from_slice(y)).collect(),
            events: sol.events.clone(),
        }
    }

    pub fn event_time(&self, label: &str) -> Option<f64> {
        self.events
            .iter()
            .find(|e| e.label == label)
            .map(|e| e.time)
    }

    pub fn last(&self) -> &State {
        self.states
            .last()
            .expect("trajectory holds the initial state")
    }
}

/// Integrates the full model from `(1, q0, 0, 0)` with the given builder.
pub fn simulate_with(p: &ModelParams, integrator: &Integrator<'_>) -> Result<Solution> {
    p.validate()?;
    let model = FullModel::new(*p, integrator.config().atol);
    Ok(integrator.solve(&model, &State::initial(p).to_array())?)
}

/// Integrates the full model to `cfg.t_end` with per-step output.
pub fn simulate(p: &ModelParams, cfg: &IntegratorConfig) -> Result<Trajectory> {
    let sol = simulate_with(p, &Integrator::new(cfg.clone()))?;
    Ok(Trajectory::from_solution(&sol))
}

/// Constants of the exponential decay bound
/// `alpha L s(t) + beta q(t) <= (alpha L + beta q0) exp(-c2 t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayEnvelope {
    pub s_max: f64,
    pub q_max: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Bound on `max(s, q) / exp(-c2 t)`.
    pub c1: f64,
    pub c2: f64,
}

impl DecayEnvelope {
    /// `(alpha L + beta q0) exp(-c2 t)`.
    pub fn weighted_bound(&self, p: &ModelParams, t: f64) -> f64 {
        (self.alpha * p.l + self.beta * p.q0) * (-self.c2 * t).exp()
    }

    pub fn weighted(&self, p: &ModelParams, x: &State) -> f64 {
        self.alpha * p.l * x.s + self.beta * x.q
    }

    pub fn s_bound(&self, p: &ModelParams, t: f64) -> f64 {
        self.weighted_bound(p, t) / (self.alpha * p.l)
    }

    pub fn q_bound(&self, p: &ModelParams, t: f64) -> f64 {
        self.weighted_bound(p, t) / self.beta
    }
}

pub fn decay_envelope(p: &ModelParams) -> Result<DecayEnvelope> {
    decay_envelope_weighted(p, 1.0, 0.5)
}

pub fn decay_envelope_weighted(p: &ModelParams, alpha: f64, beta: f64) -> Result<DecayEnvelope> {
    p.validate()?;
    if !(0.0 < beta && beta < alpha && alpha <= 2.0 * beta) {
        return Err(invalid(
            "alpha/beta",
            format!("need 0 < beta < alpha <= 2 beta, got alpha = {alpha}, beta = {beta}"),
        ));
    }
    let s_max = 1.0 + 2.0 * p.q0 / (3.0 * p.l);
    let q_max = qssa::solve_qssa(s_max, p)?.q_tilde;
    if p.q0 > q_max {
        return Err(Error::EnvelopeNotCertified { q0: p.q0, q_max });
    }
    let c2 = ((alpha - beta) / (alpha * (p.k + s_max))).min(p.l * p.v / (1.0 + q_max));
    let c1 = (1.0 + beta * p.q0 / (alpha * p.l)).max(alpha * p.l / beta + p.q0);
    Ok(DecayEnvelope {
        s_max,
        q_max,
        alpha,
        beta,
        c1,
        c2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use num_rational::Ratio;
    use proptest::prelude::*;

    fn unit() -> ModelParams {
        ModelParams::new(1.0, 1.0, 1.0, 1.0, 0.0).unwrap()
    }

    #[test]
    fn nondimensionalize_examples() {
        let d = DimensionalParams {
            v1_max: 1.0,
            k1_m: 1.0,
            v2_max: 1.0,
            k2_m: 1.0,
            sigma: 1.0,
            s0: 1.0,
            q0: 0.0,
        };
        assert_eq!(nondimensionalize(&d).unwrap(), unit());

        let d = DimensionalParams {
            v1_max: 2.0,
            k1_m: 3.0,
            v2_max: 6.0,
            k2_m: 0.5,
            sigma: 8.0,
            s0: 1.5,
            q0: 0.25,
        };
        let m = nondimensionalize(&d).unwrap();
        assert_relative_eq!(m.k, 2.0);
        assert_relative_eq!(m.l, 3.0);
        assert_relative_eq!(m.v, 3.0);
        assert_relative_eq!(m.kappa, 1.0 / 3.0, max_relative = 1e-15);
        assert_relative_eq!(m.q0, 0.5);

        let m = nondimensionalize(&DimensionalParams { sigma: 0.0, ..d }).unwrap();
        assert_eq!(m.kappa, 0.0);

        let bad = DimensionalParams { k2_m: 0.0, ..d };
        assert!(matches!(
            nondimensionalize(&bad),
            Err(Error::InvalidParameter { name: "k2_m", .. })
        ));
        let bad = DimensionalParams { sigma: -1.0, ..d };
        assert!(nondimensionalize(&bad).is_err());
    }

    #[test]
    fn rate_examples() {
        assert_eq!(rate_m1(1.0, 1.0), 0.5);
        assert_eq!(rate_m1(0.0, 1.0), 0.0);
        assert_relative_eq!(rate_m1(9.0, 1.0), 0.9);
        assert_eq!(rate_m2(1.0), 0.5);
        assert_eq!(rate_d(1.0, 0.0), 0.5);
        assert_relative_eq!(rate_d(0.5, 1.0), 5.0 / 6.0, max_relative = 1e-15);
        assert_eq!(rate_d(0.0, 7.0), 0.0);
    }

    #[test]
    fn rhs_examples() {
        let p = unit();
        assert_eq!(
            rhs_full(&State::new(1.0, 0.0, 0.0, 0.0), &p),
            State::new(-0.5, 0.5, 0.0, 0.5)
        );
        assert_eq!(rhs_full(&State::default(), &p), State::default());
        let p = ModelParams::new(1.0, 1.0, 1.0, 0.5, 0.0).unwrap();
        assert_eq!(
            rhs_full(&State::new(1.0, 1.0, 0.0, 0.0), &p),
            State::new(0.0, -1.0, 1.0, 1.0)
        );
    }

    #[test]
    fn rhs_annihilates_conserved_combinations_exactly() {
        type Q = Ratio<i128>;
        let r = |n: i128, d: i128| Q::new(n, d);
        let cases = [
            (
                [r(1, 1), r(0, 1), r(0, 1), r(0, 1)],
                [r(1, 1), r(1, 1), r(1, 1), r(1, 1)],
            ),
            (
                [r(3, 7), r(2, 5), r(1, 9), r(4, 3)],
                [r(2, 3), r(5, 2), r(7, 4), r(16, 1)],
            ),
            (
                [r(1, 2), r(9, 4), r(0, 1), r(1, 1)],
                [r(1, 10), r(10, 1), r(1, 3), r(0, 1)],
            ),
        ];
        for (x, [k, l, v, kappa]) in cases {
            let [ds, dq, dp, df] = rhs_generic(x, k, l, v, kappa);
            assert_eq!(ds + dq / l + dp, Q::from_integer(0));
            assert_eq!(
                r(3, 1) * ds + r(2, 1) * dq / l + dp + df,
                Q::from_integer(0)
            );
        }
    }

    #[test]
    fn transacylation_fraction_examples() {
        assert_eq!(transacylation_fraction(0.3, 0.0), 0.0);
        assert_relative_eq!(transacylation_fraction(1.0, 0.25), 0.5);
        assert_eq!(transacylation_fraction(0.0, 5.0), 0.0);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let model = FullModel::new(ModelParams::new(0.7, 2.0, 3.0, 1.5, 0.2).unwrap(), 1e-10);
        let y = [0.6, 0.3, 0.2, 0.4];
        let mut a = DMatrix::zeros(4, 4);
        assert!(model.jacobian(0.0, &y, &mut a));
        let mut f0 = [0.0; 4];
        model.rhs(0.0, &y, &mut f0);
        let mut fd = DMatrix::zeros(4, 4);
        crate::integrator::fd_jacobian(&model, 0.0, &y, &f0, &mut fd);
        for i in 0..4 {
            for j in 0..4 {
                assert!((a[(i, j)] - fd[(i, j)]).abs() < 1e-6, "({i},{j})");
            }
        }
    }

    #[test]
    fn michaelis_menten_limit_event() {
        use crate::integrator::{Direction, EventSpec};
        let p = ModelParams::new(1.0, 1.0, 1.0, 0.0, 0.0).unwrap();
        let it = Integrator::new(IntegratorConfig::default().with_t_end(5.0)).event(
            EventSpec::new("s50", Direction::Falling, |_t, y: &[f64]| y[0] - 0.5),
        );
        let sol = simulate_with(&p, &it).unwrap();
        let t = sol.event("s50").unwrap().time;
        assert!((t - (0.5 + 2f64.ln())).abs() < 1e-5, "{t}");
    }

    #[test]
    fn trajectory_reaches_equilibrium() {
        let p = unit();
        let cfg = IntegratorConfig::default().with_t_end(60.0);
        let tr = simulate(&p, &cfg).unwrap();
        let x = tr.last();
        assert!(x.s + x.q < 1e-6);
        let eq = equilibrium(&p);
        assert!((x.p - eq.p).abs() < 1e-4 && (x.f - eq.f).abs() < 1e-4);
    }

    #[test]
    fn envelope_example() {
        let env = decay_envelope(&unit()).unwrap();
        assert_eq!(env.s_max, 1.0);
        // Root of 2q^2 + q/(1+q) = 1/2, from an independent bisection.
        assert_relative_eq!(env.q_max, 0.347_810_384_779_94, max_relative = 1e-10);
        assert_relative_eq!(env.c2, 0.25);
        assert_relative_eq!(env.c1, 2.0);
    }

    #[test]
    fn envelope_precondition() {
        let p = ModelParams::new(1.0, 1.0, 1.0, 1.0, 5.0).unwrap();
        assert!(matches!(
            decay_envelope(&p),
            Err(Error::EnvelopeNotCertified { .. })
        ));
        let p = ModelParams::new(2.0, 3.0, 0.5, 0.0, 0.0).unwrap();
        assert_eq!(decay_envelope(&p).unwrap().s_max, 1.0);
        assert!(decay_envelope_weighted(&unit(), 1.0, 0.4).is_err());
    }

    #[test]
    fn envelope_bounds_trajectory() {
        let p = unit();
        let env = decay_envelope(&p).unwrap();
        let tr = simulate(&p, &IntegratorConfig::default().with_t_end(40.0)).unwrap();
        for (t, x) in tr.times.iter().zip(&tr.states) {
            assert!(env.weighted(&p, x) <= env.weighted_bound(&p, *t) * (1.0 + 1e-9) + 1e-10);
            assert!(x.q <= env.q_max + 1e-9);
            assert!(x.s <= env.s_max + 1e-9);
        }
    }

    fn params() -> impl Strategy<Value = ModelParams> {
        (
            0.1f64..10.0,
            0.1f64..10.0,
            0.1f64..10.0,
            0.0f64..100.0,
            prop::bool::ANY,
        )
            .prop_map(|(k, l, v, kappa, half)| {
                ModelParams::new(k, l, v, kappa, if half { l / 2.0 } else { 0.0 }).unwrap()
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn rhs_conserves_linear_combinations(
            p in params(), s in 0.0f64..2.0, q in 0.0f64..5.0
        ) {
            let d = rhs_full(&State::new(s, q, 0.3, 0.1), &p);
            let scale = 1.0 + p.l * p.v * (1.0 + p.kappa) * (1.0 + q * q);
            prop_assert!((d.s + d.q / p.l + d.p).abs() < 1e-12 * scale);
            prop_assert!((3.0 * d.s + 2.0 * d.q / p.l + d.p + d.f).abs() < 1e-12 * scale);
        }

        #[test]
        fn d_is_increasing(q in 0.0f64..10.0, dq in 1e-6f64..1.0, kappa in 0.0f64..100.0) {
            prop_assert!(rate_d(q + dq, kappa) > rate_d(q, kappa));
        }

        #[test]
        fn fraction_in_unit_interval(q in 0.0f64..100.0, kappa in 0.0f64..100.0) {
            let f = transacylation_fraction(q, kappa);
            prop_assert!((0.0..=1.0).contains(&f));
        }

        #[test]
        fn trajectories_conserve_and_stay_nonnegative(p in params()) {
            let cfg = IntegratorConfig::default().with_t_end(20.0);
            let tr = simulate(&p, &cfg).unwrap();
            for w in tr.states.windows(2) {
                prop_assert!(w[1].p >= w[0].p - 1e-9 && w[1].f >= w[0].f - 1e-9);
            }
            for x in &tr.states {
                let [g, a] = conservation_residuals(x, &p);
                prop_assert!(g.abs() < 1e-6 && a.abs() < 1e-6, "{g} {a}");
                prop_assert!(x.s >= -1e-9 && x.q >= -1e-9);
            }
        }
    }
}
