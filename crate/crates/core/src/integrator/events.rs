use serde::{Deserialize, Serialize};

use super::{IntegratorConfig, Segment};

/// Which sign change of the target counts as a crossing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Rising,
    Falling,
    Either,
}

impl Direction {
    fn matches(self, from: f64, to: f64) -> bool {
        match self {
            Direction::Rising => from < 0.0 && to > 0.0,
            Direction::Falling => from > 0.0 && to < 0.0,
            Direction::Either => from * to < 0.0,
        }
    }
}

/// A scalar target `g(t, y)` whose first zero crossing in `direction` is
/// located on the dense output.
pub struct EventSpec<'a> {
    pub label: String,
    pub direction: Direction,
    target: Box<dyn Fn(f64, &[f64]) -> f64 + 'a>,
}

impl<'a> EventSpec<'a> {
    pub fn new(
        label: impl Into<String>,
        direction: Direction,
        target: impl Fn(f64, &[f64]) -> f64 + 'a,
    ) -> Self {
        Self {
            label: label.into(),
            direction,
            target: Box::new(target),
        }
    }

    pub fn eval(&self, t: f64, y: &[f64]) -> f64 {
        (self.target)(t, y)
    }
}

impl std::fmt::Debug for EventSpec<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EventSpec")
            .field("label", &self.label)
            .field("direction", &self.direction)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub label: String,
    pub time: f64,
    pub state: Vec<f64>,
    /// `|g|` at the reported time.
    pub residual: f64,
}

struct Watch {
    last_value: f64,
    /// Sign of the most recent nonzero value of the target.
    last_sign: f64,
    fired: bool,
}

pub(crate) struct Tracker<'s, 'a> {
    specs: &'s [EventSpec<'a>],
    watches: Vec<Watch>,
    records: Vec<EventRecord>,
}

impl<'s, 'a> Tracker<'s, 'a> {
    pub(crate) fn new(specs: &'s [EventSpec<'a>], t0: f64, y0: &[f64]) -> Self {
        let watches = specs
            .iter()
            .map(|s| {
                let g = s.eval(t0, y0);
                Watch {
                    last_value: g,
                    last_sign: sign(g),
                    fired: false,
                }
            })
            .collect();
        Self {
            specs,
            watches,
            records: Vec::new(),
        }
    }

    pub(crate) fn all_fired(&self) -> bool {
        self.watches.iter().all(|w| w.fired)
    }

    pub(crate) fn advance(&mut self, seg: &Segment, y1: &[f64], cfg: &IntegratorConfig) {
        let t1 = seg.t1();
        let mut found = Vec::new();
        for (spec, watch) in self.specs.iter().zip(self.watches.iter_mut()) {
            if watch.fired {
                continue;
            }
            let g1 = spec.eval(t1, y1);
            let s1 = sign(g1);
            if s1 != 0.0 && watch.last_sign != 0.0 && spec.direction.matches(watch.last_sign, s1) {
                let record = if watch.last_value == 0.0 {
                    // The target touched zero exactly at the left end.
                    EventRecord {
                        label: spec.label.clone(),
                        time: seg.t0,
                        state: seg.y0.clone(),
                        residual: 0.0,
                    }
                } else {
                    locate(spec, seg, watch.last_value, g1, cfg)
                };
                watch.fired = true;
                found.push(record);
            }
            watch.last_value = g1;
            if s1 != 0.0 {
                watch.last_sign = s1;
            }
        }
        found.sort_by(|a, b| a.time.total_cmp(&b.time));
        self.records.extend(found);
    }

    pub(crate) fn into_records(self) -> Vec<EventRecord> {
        self.records
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Illinois-modified regula falsi with forced bisection every third
/// iteration, run on the dense output of one step. Iterates until the
/// bracket is narrower than `max(1e-10, atol)` and the residual is below
/// `atol`, or the bracket cannot shrink further.
fn locate(
    spec: &EventSpec<'_>,
    seg: &Segment,
    g0: f64,
    g1: f64,
    cfg: &IntegratorConfig,
) -> EventRecord {
    let n = seg.y0.len();
    let mut buf = vec![0.0; n];
    let g_at = |t: f64, buf: &mut Vec<f64>| -> f64 {
        seg.eval(t, buf);
        spec.eval(t, buf)
    };

    let time_tol = cfg.atol.max(1e-10);
    let (mut a, mut b) = (seg.t0, seg.t1());
    let (mut ga, mut gb) = (g0, g1);
    let mut side = 0i8;
    let mut best = if ga.abs() <= gb.abs() {
        (a, ga)
    } else {
        (b, gb)
    };

    for iter in 0..400 {
        let width = b - a;
        let floor = 4.0 * f64::EPSILON * a.abs().max(b.abs()).max(1.0);
        if width <= floor || (width <= time_tol && best.1.abs() < cfg.atol) {
            break;
        }
        let mut c = if iter % 3 == 2 {
            0.5 * (a + b)
        } else {
            b - gb * (b - a) / (gb - ga)
        };
        if !(c > a && c < b) {
            c = 0.5 * (a + b);
        }
        let gc = g_at(c, &mut buf);
        if gc.abs() < best.1.abs() {
            best = (c, gc);
        }
        if gc == 0.0 {
            break;
        }
        if sign(gc) == sign(ga) {
            a = c;
            ga = gc;
            if side == -1 {
                gb *= 0.5;
            }
            side = -1;
        } else {
            b = c;
            gb = gc;
            if side == 1 {
                ga *= 0.5;
            }
            side = 1;
        }
    }

    let (time, _) = best;
    seg.eval(time, &mut buf);
    let residual = spec.eval(time, &buf).abs();
    EventRecord {
        label: spec.label.clone(),
        time,
        state: buf,
        residual,
    }
}

#[cfg(test)]
mod tests {
    use super::super::{integrate, FnSystem, IntegratorConfig, Method};
    use super::*;

    #[test]
    fn locates_threshold_on_decay() {
        let sys = FnSystem::new(1, |_t, y: &[f64], dy: &mut [f64]| dy[0] = -y[0]).autonomous();
        for method in [Method::Rosenbrock23, Method::DormandPrince45] {
            let cfg = IntegratorConfig::default()
                .with_t_end(5.0)
                .with_method(method);
            let ev = EventSpec::new("half", Direction::Falling, |_t, y: &[f64]| y[0] - 0.5);
            let sol = integrate(&sys, &[1.0], &cfg, vec![ev]).unwrap();
            let rec = sol.event("half").unwrap();
            let bound = match method {
                Method::Rosenbrock23 => 5e-6,
                Method::DormandPrince45 => 1e-8,
            };
            assert!(
                (rec.time - 2f64.ln()).abs() < bound,
                "{method:?} {}",
                rec.time
            );
            assert!(rec.residual < cfg.atol);
        }
    }

    #[test]
    fn direction_filters_crossings() {
        // y = sin t crosses 0 falling at pi and rising at 2 pi.
        let sys = FnSystem::new(2, |_t, y: &[f64], dy: &mut [f64]| {
            dy[0] = y[1];
            dy[1] = -y[0];
        })
        .autonomous();
        let cfg = IntegratorConfig::default()
            .with_t_end(7.0)
            .with_method(Method::DormandPrince45);
        let events = vec![
            EventSpec::new("up", Direction::Rising, |_t, y: &[f64]| y[0]),
            EventSpec::new("down", Direction::Falling, |_t, y: &[f64]| y[0]),
        ];
        let sol = integrate(&sys, &[0.0, 1.0], &cfg, events).unwrap();
        let down = sol.event("down").unwrap().time;
        let up = sol.event("up").unwrap().time;
        assert!((down - std::f64::consts::PI).abs() < 1e-7);
        assert!((up - 2.0 * std::f64::consts::PI).abs() < 1e-7);
        // Chronological order.
        assert_eq!(sol.events[0].label, "down");
    }

    #[test]
    fn missing_crossing_leaves_no_record() {
        let sys = FnSystem::new(1, |_t, y: &[f64], dy: &mut [f64]| dy[0] = -y[0]).autonomous();
        let cfg = IntegratorConfig::default().with_t_end(1.0);
        let ev = EventSpec::new("never", Direction::Either, |_t, y: &[f64]| y[0] + 1.0);
        let sol = integrate(&sys, &[1.0], &cfg, vec![ev]).unwrap();
        assert!(sol.event("never").is_none());
    }
}
