//! Parametric studies over `(V, kappa)`.
//!
//! Every cell integrates the full model once with threshold events for
//! `s`, `p` and `f`, and reuses one `kappa = 0` baseline per `V` for the
//! relative changes. Percentages count material processed: threshold `y`
//! means `s <= 1 - y/100`, `p >= (y/100) p_inf` and `f >= (y/100) f_inf`.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::integrator::{Direction, EventSpec, Integrator, IntegratorConfig};
use crate::kinetics::{is_steady, simulate_with, transacylation_fraction, ModelParams, State};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    TSPct,
    TPPct,
    TFPct,
    TaFraction,
    RelChangeS,
    RelChangeP,
    RelChangeF,
}

impl Metric {
    pub const ALL: [Metric; 7] = [
        Metric::TSPct,
        Metric::TPPct,
        Metric::TFPct,
        Metric::TaFraction,
        Metric::RelChangeS,
        Metric::RelChangeP,
        Metric::RelChangeF,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::TSPct => "t_s_pct",
            Metric::TPPct => "t_p_pct",
            Metric::TFPct => "t_f_pct",
            Metric::TaFraction => "ta_fraction",
            Metric::RelChangeS => "rel_change_s",
            Metric::RelChangeP => "rel_change_p",
            Metric::RelChangeF => "rel_change_f",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == name)
    }

    fn species(self) -> Species {
        match self {
            Metric::TSPct | Metric::TaFraction | Metric::RelChangeS => Species::S,
            Metric::TPPct | Metric::RelChangeP => Species::P,
            Metric::TFPct | Metric::RelChangeF => Species::F,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Species {
    S,
    P,
    F,
}

/// Threshold crossing: `percent` of TG processed or of a final product formed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub species: Species,
    pub percent: f64,
}

impl Target {
    pub fn new(species: Species, percent: f64) -> Result<Self> {
        check_percent(percent)?;
        Ok(Self { species, percent })
    }

    pub fn label(&self) -> String {
        let c = match self.species {
            Species::S => 's',
            Species::P => 'p',
            Species::F => 'f',
        };
        format!("{c}@{}", self.percent)
    }

    pub fn level(&self, p: &ModelParams) -> f64 {
        let y = self.percent / 100.0;
        match self.species {
            Species::S => 1.0 - y,
            Species::P => y * p.p_inf(),
            Species::F => y * p.f_inf(),
        }
    }

    fn event<'a>(&self, p: &ModelParams) -> EventSpec<'a> {
        let level = self.level(p);
        match self.species {
            Species::S => EventSpec::new(self.label(), Direction::Falling, move |_t, y: &[f64]| {
                y[0] - level
            }),
            Species::P => EventSpec::new(self.label(), Direction::Rising, move |_t, y: &[f64]| {
                y[2] - level
            }),
            Species::F => EventSpec::new(self.label(), Direction::Rising, move |_t, y: &[f64]| {
                y[3] - level
            }),
        }
    }
}

fn check_percent(x: f64) -> Result<()> {
    if x > 0.0 && x < 100.0 {
        Ok(())
    } else {
        Err(invalid("percent", format!("must lie in (0, 100), got {x}")))
    }
}

/// Event time and state of the first crossing, `None` if not reached before
/// `t_end`.
pub type Crossing = Option<(f64, State)>;

/// Integrates once and locates every target.
pub fn crossings(
    p: &ModelParams,
    targets: &[Target],
    cfg: &IntegratorConfig,
) -> Result<Vec<Crossing>> {
    let events: Vec<EventSpec> = targets.iter().map(|t| t.event(p)).collect();
    let it = Integrator::new(cfg.clone())
        .events(events)
        .stop_after_events(true)
        .stop_when(|_t, y| is_steady(y));
    let sol = simulate_with(p, &it)?;
    Ok(targets
        .iter()
        .map(|t| {
            sol.event(&t.label())
                .map(|e| (e.time, State::from_slice(&e.state)))
        })
        .collect())
}

pub fn time_to_threshold(
    p: &ModelParams,
    target: Target,
    cfg: &IntegratorConfig,
) -> Result<Option<f64>> {
    Ok(crossings(p, &[target], cfg)?[0].map(|(t, _)| t))
}

/// `(t_kappa - t_0) / t_0` against the same parameters with `kappa = 0`.
pub fn relative_change(p: &ModelParams, target: Target, cfg: &IntegratorConfig) -> Result<f64> {
    let base = time_to_threshold(&p.with_kappa(0.0), target, cfg)?
        .ok_or_else(|| Error::MissingEvent(format!("baseline {} not reached", target.label())))?;
    let t = time_to_threshold(p, target, cfg)?
        .ok_or_else(|| Error::MissingEvent(format!("{} not reached", target.label())))?;
    Ok((t - base) / base)
}

/// Transacylation share of DG processing at the crossing of `target`.
pub fn fraction_at_event(p: &ModelParams, target: Target, cfg: &IntegratorConfig) -> Result<f64> {
    let (_, x) = crossings(p, &[target], cfg)?[0]
        .ok_or_else(|| Error::MissingEvent(format!("{} not reached", target.label())))?;
    Ok(transacylation_fraction(x.q, p.kappa))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub v_values: Vec<f64>,
    /// May start at 0; nonzero entries are normally log-spaced.
    pub kappa_values: Vec<f64>,
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(default)]
    pub q0: f64,
    /// Percent processed or produced, each in `(0, 100)`.
    pub thresholds: Vec<f64>,
    /// Label maps by percent of TG remaining instead of processed.
    #[serde(default)]
    pub staged: bool,
}

/// `n` points with base-10 exponents evenly spaced over `[lo, hi]`.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![10f64.powf(lo)],
        _ => (0..n)
            .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (n - 1) as f64))
            .collect(),
    }
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            v_values: log_space(-2.0, 2.0, 41),
            kappa_values: log_space(-2.0, 2.0, 41),
            k: 1.0,
            l: 1.0,
            q0: 0.0,
            thresholds: vec![50.0],
            staged: false,
        }
    }
}

/// Remaining-TG levels of the staged curves.
pub const STAGED_REMAINING: [f64; 5] = [10.0, 25.0, 50.0, 75.0, 90.0];

impl SweepGrid {
    /// Staged-percentage mode: one `kappa`, curves over `V`, thresholds set
    /// so that curve `x` is read when `x` percent of TG remains.
    pub fn staged(v_values: Vec<f64>, kappa: f64, k: f64, l: f64) -> Self {
        Self {
            v_values,
            kappa_values: vec![kappa],
            k,
            l,
            q0: 0.0,
            thresholds: STAGED_REMAINING.iter().map(|x| 100.0 - x).collect(),
            staged: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let increasing = |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]);
        if self.v_values.is_empty() || !increasing(&self.v_values) {
            return Err(invalid(
                "v_values",
                "must be nonempty and strictly increasing",
            ));
        }
        if self.kappa_values.is_empty() || !increasing(&self.kappa_values) {
            return Err(invalid(
                "kappa_values",
                "must be nonempty and strictly increasing",
            ));
        }
        if self.thresholds.is_empty() {
            return Err(invalid("thresholds", "must be nonempty"));
        }
        for &x in &self.thresholds {
            check_percent(x)?;
        }
        self.params(self.v_values[0], self.kappa_values[0])?;
        self.params(
            *self.v_values.last().unwrap(),
            *self.kappa_values.last().unwrap(),
        )?;
        Ok(())
    }

    pub fn params(&self, v: f64, kappa: f64) -> Result<ModelParams> {
        ModelParams::new(self.k, self.l, v, kappa, self.q0)
    }

    fn targets(&self) -> Vec<Target> {
        self.thresholds
            .iter()
            .flat_map(|&x| {
                [Species::S, Species::P, Species::F].map(|species| Target {
                    species,
                    percent: x,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    NotReached,
    Failed,
}

impl CellStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CellStatus::Ok => "ok",
            CellStatus::NotReached => "not_reached",
            CellStatus::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub value: f64,
    pub status: CellStatus,
}

impl Cell {
    fn ok(value: f64) -> Self {
        Self {
            value,
            status: CellStatus::Ok,
        }
    }

    fn missing(status: CellStatus) -> Self {
        Self {
            value: f64::NAN,
            status,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub v: f64,
    pub kappa: f64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMeta {
    pub rtol: f64,
    pub atol: f64,
    pub t_end: f64,
    pub method: String,
    pub failures: Vec<CellFailure>,
}

/// One metric at one threshold; `values[i][j]` belongs to `v_values[i]`
/// and `kappa_values[j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricMap {
    pub metric: Metric,
    pub threshold: f64,
    pub staged: bool,
    pub v_values: Vec<f64>,
    pub kappa_values: Vec<f64>,
    pub values: Vec<Vec<Cell>>,
    pub meta: SweepMeta,
}

impl MetricMap {
    pub fn cell(&self, v_index: usize, kappa_index: usize) -> Cell {
        self.values[v_index][kappa_index]
    }

    /// File stem: `<metric><percent processed>`, or
    /// `<metric>_rem<percent remaining>` in staged mode.
    pub fn stem(&self) -> String {
        if self.staged {
            format!(
                "{}_rem{}",
                self.metric.name(),
                fmt_threshold(100.0 - self.threshold)
            )
        } else {
            format!("{}{}", self.metric.name(), fmt_threshold(self.threshold))
        }
    }

    /// Columns `log10_V,log10_kappa,value,status`, rows ordered by `V` then
    /// `kappa`, numbers with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("log10_V,log10_kappa,value,status\n");
        for (i, &v) in self.v_values.iter().enumerate() {
            for (j, &k) in self.kappa_values.iter().enumerate() {
                let c = self.values[i][j];
                let _ = writeln!(
                    out,
                    "{},{},{},{}",
                    fmt_f64(v.log10()),
                    fmt_f64(k.log10()),
                    fmt_f64(c.value),
                    c.status.as_str()
                );
            }
        }
        out
    }

    pub fn failed_cells(&self) -> usize {
        self.values
            .iter()
            .flatten()
            .filter(|c| c.status == CellStatus::Failed)
            .count()
    }
}

fn fmt_threshold(x: f64) -> String {
    if x.fract() == 0.0 {
        format!("{x:.0}")
    } else {
        format!("{x}").replace('.', "p")
    }
}

/// Scientific notation with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.16e}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    #[default]
    Parallel,
    /// Cells in grid order on the calling thread.
    Sequential,
}

type CellResult = std::result::Result<Vec<Crossing>, String>;

fn run_cells(
    grid: &SweepGrid,
    pairs: &[(f64, f64)],
    cfg: &IntegratorConfig,
    exec: Execution,
) -> Vec<CellResult> {
    let targets = grid.targets();
    let one = |&(v, kappa): &(f64, f64)| -> CellResult {
        let p = grid.params(v, kappa).map_err(|e| e.to_string())?;
        crossings(&p, &targets, cfg).map_err(|e| e.to_string())
    };
    match exec {
        Execution::Parallel => pairs.par_iter().map(one).collect(),
        Execution::Sequential => pairs.iter().map(one).collect(),
    }
}

fn relative(t: Option<f64>, base: Option<f64>) -> Cell {
    match (t, base) {
        (Some(t), Some(b)) => Cell::ok((t - b) / b),
        _ => Cell::missing(CellStatus::NotReached),
    }
}

/// Computes the requested metrics at every threshold of the grid. Cell
/// failures are recorded in `meta.failures` and never abort the sweep.
pub fn run_sweep(
    grid: &SweepGrid,
    metrics: &[Metric],
    cfg: &IntegratorConfig,
    exec: Execution,
) -> Result<Vec<MetricMap>> {
    grid.validate()?;
    cfg.validate()?;
    let nk = grid.kappa_values.len();
    let pairs: Vec<(f64, f64)> = grid
        .v_values
        .iter()
        .flat_map(|&v| grid.kappa_values.iter().map(move |&k| (v, k)))
        .collect();
    let cells = run_cells(grid, &pairs, cfg, exec);

    let needs_base = metrics.iter().any(|m| {
        matches!(
            m,
            Metric::RelChangeS | Metric::RelChangeP | Metric::RelChangeF
        )
    });
    let base_pairs: Vec<(f64, f64)> = if needs_base {
        grid.v_values.iter().map(|&v| (v, 0.0)).collect()
    } else {
        Vec::new()
    };
    let base = run_cells(grid, &base_pairs, cfg, exec);

    let mut failures = Vec::new();
    for (&(v, kappa), r) in pairs.iter().zip(&cells).chain(base_pairs.iter().zip(&base)) {
        if let Err(message) = r {
            failures.push(CellFailure {
                v,
                kappa,
                message: message.clone(),
            });
        }
    }
    let meta = SweepMeta {
        rtol: cfg.rtol,
        atol: cfg.atol,
        t_end: cfg.t_end,
        method: format!("{:?}", cfg.method),
        failures,
    };

    let targets = grid.targets();
    let index = |species: Species, pct: f64| {
        targets
            .iter()
            .position(|t| t.species == species && t.percent == pct)
            .expect("every threshold has three targets")
    };

    let mut maps = Vec::new();
    for &pct in &grid.thresholds {
        for &metric in metrics {
            let ti = index(metric.species(), pct);
            let values = (0..grid.v_values.len())
                .map(|i| {
                    (0..nk)
                        .map(|j| {
                            let kappa = grid.kappa_values[j];
                            let Ok(cs) = &cells[i * nk + j] else {
                                return Cell::missing(CellStatus::Failed);
                            };
                            let hit = cs[ti];
                            match metric {
                                Metric::TSPct | Metric::TPPct | Metric::TFPct => hit
                                    .map_or(Cell::missing(CellStatus::NotReached), |(t, _)| {
                                        Cell::ok(t)
                                    }),
                                Metric::TaFraction => hit
                                    .map_or(Cell::missing(CellStatus::NotReached), |(_, x)| {
                                        Cell::ok(transacylation_fraction(x.q, kappa))
                                    }),
                                _ => match &base[i] {
                                    Ok(b) => relative(hit.map(|h| h.0), b[ti].map(|h| h.0)),
                                    Err(_) => Cell::missing(CellStatus::Failed),
                                },
                            }
                        })
                        .collect()
                })
                .collect();
            maps.push(MetricMap {
                metric,
                threshold: pct,
                staged: grid.staged,
                v_values: grid.v_values.clone(),
                kappa_values: grid.kappa_values.clone(),
                values,
                meta: meta.clone(),
            });
        }
    }
    Ok(maps)
}

/// Gnuplot script drawing `<stem>.csv` as a heat map, or as curves over
/// `log10 V` when the map has a single `kappa` column.
pub fn gnuplot_script(map: &MetricMap) -> String {
    let stem = map.stem();
    let mut s = String::new();
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set key autotitle columnhead");
    let _ = writeln!(s, "set xlabel 'log10 V'");
    if map.kappa_values.len() == 1 {
        let _ = writeln!(s, "set ylabel '{}'", map.metric.name());
        let _ = writeln!(
            s,
            "plot '{stem}.csv' using 1:3 with linespoints title '{stem}'"
        );
    } else {
        let _ = writeln!(s, "set ylabel 'log10 kappa'");
        let _ = writeln!(s, "set title '{stem}'");
        let _ = writeln!(s, "set view map");
        let _ = writeln!(
            s,
            "set dgrid3d {},{}",
            map.kappa_values.len(),
            map.v_values.len()
        );
        let _ = writeln!(s, "splot '{stem}.csv' using 1:2:3 with pm3d notitle");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit(v: f64, kappa: f64) -> ModelParams {
        ModelParams::new(1.0, 1.0, v, kappa, 0.0).unwrap()
    }

    fn cfg() -> IntegratorConfig {
        IntegratorConfig::default()
    }

    #[test]
    fn michaelis_menten_half_time_without_transacylation() {
        let s50 = Target::new(Species::S, 50.0).unwrap();
        for v in [0.01, 1.0, 100.0] {
            let t = time_to_threshold(&unit(v, 0.0), s50, &cfg())
                .unwrap()
                .unwrap();
            assert!((t - (0.5 + 2f64.ln())).abs() < 1e-5, "{v}: {t}");
        }
    }

    #[test]
    fn ordering_of_threshold_times() {
        for (v, kappa) in [(0.1, 10.0), (1.0, 1.0), (10.0, 0.1)] {
            let p = unit(v, kappa);
            let ts: Vec<f64> = [Species::S, Species::P, Species::F]
                .iter()
                .map(|&sp| {
                    time_to_threshold(&p, Target::new(sp, 50.0).unwrap(), &cfg())
                        .unwrap()
                        .unwrap()
                })
                .collect();
            assert!(ts[0] <= ts[1] && ts[0] <= ts[2], "{ts:?}");
        }
    }

    #[test]
    fn product_not_reached_without_hydrolysis_pathway() {
        let p50 = Target::new(Species::P, 50.0).unwrap();
        let c = cfg().with_t_end(50.0);
        assert_eq!(time_to_threshold(&unit(1e-3, 0.0), p50, &c).unwrap(), None);
        assert!(matches!(
            relative_change(&unit(1e-3, 1.0), p50, &c),
            Err(Error::MissingEvent(_))
        ));
    }

    #[test]
    fn relative_change_and_fraction_examples() {
        let s50 = Target::new(Species::S, 50.0).unwrap();
        assert_eq!(relative_change(&unit(2.0, 0.0), s50, &cfg()).unwrap(), 0.0);
        assert_eq!(
            fraction_at_event(&unit(2.0, 0.0), s50, &cfg()).unwrap(),
            0.0
        );
        let p50 = Target::new(Species::P, 50.0).unwrap();
        assert!(relative_change(&unit(0.1, 10.0), p50, &cfg()).unwrap() < -0.5);
        assert!(relative_change(&unit(10.0, 10.0), p50, &cfg()).unwrap() > 0.1);
    }

    #[test]
    fn target_levels() {
        let p = ModelParams::new(1.0, 2.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(Target::new(Species::S, 25.0).unwrap().level(&p), 0.75);
        assert_eq!(Target::new(Species::P, 50.0).unwrap().level(&p), 0.75);
        assert_eq!(Target::new(Species::F, 50.0).unwrap().level(&p), 1.25);
        assert!(Target::new(Species::S, 100.0).is_err());
        assert!(Target::new(Species::S, 0.0).is_err());
    }

    #[test]
    fn grid_validation() {
        let mut g = SweepGrid::default();
        assert!(g.validate().is_ok());
        assert_eq!(g.v_values.len(), 41);
        assert_relative_eq!(g.v_values[20], 1.0, max_relative = 1e-15);
        g.kappa_values = vec![1.0, 1.0];
        assert!(g.validate().is_err());
        g.kappa_values = vec![];
        assert!(g.validate().is_err());
        let mut g = SweepGrid::default();
        g.thresholds = vec![100.0];
        assert!(g.validate().is_err());
    }

    #[test]
    fn single_cell_at_kappa_zero() {
        let grid = SweepGrid {
            v_values: vec![1.0],
            kappa_values: vec![0.0],
            thresholds: vec![50.0],
            ..SweepGrid::default()
        };
        let maps = run_sweep(&grid, &Metric::ALL, &cfg(), Execution::Sequential).unwrap();
        assert_eq!(maps.len(), 7);
        for m in &maps {
            let c = m.cell(0, 0);
            assert_eq!(c.status, CellStatus::Ok);
            match m.metric {
                Metric::RelChangeS
                | Metric::RelChangeP
                | Metric::RelChangeF
                | Metric::TaFraction => {
                    assert_eq!(c.value, 0.0)
                }
                _ => assert!(c.value > 0.0),
            }
            assert_eq!(m.to_csv().lines().count(), 2);
        }
        let csv = maps[0].to_csv();
        assert!(csv.starts_with("log10_V,log10_kappa,value,status\n0.0000000000000000e0,-inf,"));
    }

    #[test]
    fn parallel_and_sequential_agree_bitwise() {
        let grid = SweepGrid {
            v_values: log_space(-1.0, 1.0, 3),
            kappa_values: log_space(-1.0, 1.0, 3),
            ..SweepGrid::default()
        };
        let a = run_sweep(&grid, &Metric::ALL, &cfg(), Execution::Parallel).unwrap();
        let b = run_sweep(&grid, &Metric::ALL, &cfg(), Execution::Sequential).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.to_csv(), y.to_csv());
        }
        // rel_change_s grows with kappa at small V.
        let rs = a.iter().find(|m| m.metric == Metric::RelChangeS).unwrap();
        let row: Vec<f64> = (0..3).map(|j| rs.cell(0, j).value).collect();
        assert!(
            row.windows(2).all(|w| w[0] <= w[1]) && row[0] >= 0.0,
            "{row:?}"
        );
    }

    #[test]
    fn staged_thresholds() {
        let g = SweepGrid::staged(vec![0.1, 1.0], 10.0, 1.0, 1.0);
        assert_eq!(g.thresholds, vec![90.0, 75.0, 50.0, 25.0, 10.0]);
        assert!(g.validate().is_ok());
        let maps = run_sweep(&g, &[Metric::RelChangeF], &cfg(), Execution::Sequential).unwrap();
        assert_eq!(maps.len(), 5);
        assert_eq!(maps[0].stem(), "rel_change_f_rem10");
        assert!(gnuplot_script(&maps[0]).contains("rel_change_f_rem10.csv"));
    }

    #[test]
    fn formatting() {
        assert_eq!(fmt_f64(1.0), "1.0000000000000000e0");
        assert_eq!(fmt_f64(f64::NAN), "nan");
        assert_eq!(fmt_threshold(12.5), "12p5");
        assert_eq!(Metric::parse("ta_fraction"), Some(Metric::TaFraction));
    }
}
