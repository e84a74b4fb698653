//! Reference values from an independent implicit Runge-Kutta solver
//! (rtol 1e-12), frozen at 1% unless stated otherwise.

use lipolysis::integrator::{IntegratorConfig, Method};
use lipolysis::kinetics::{simulate, ModelParams};
use lipolysis::qssa::detect_layer;
use lipolysis::sensitivity::sign_discrepancy_probe;
use lipolysis::sweep::{run_sweep, Execution, Metric, SweepGrid};

fn unit(v: f64, kappa: f64) -> ModelParams {
    ModelParams::new(1.0, 1.0, v, kappa, 0.0).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

#[test]
fn layer_maximum() {
    let cfg = IntegratorConfig::default().with_t_end(10.0);
    for (v, t_m, q_m) in [
        (10.0, 0.210_792_54, 0.026_294_09),
        (2.0, 0.461_887_75, 0.070_870_65),
        (1.0, 0.628_293_43, 0.103_664_71),
        (0.1, 1.565_746_98, 0.312_731_03),
    ] {
        let layer = detect_layer(&unit(v, 16.0), &cfg).unwrap();
        assert!(rel(layer.t_m, t_m) < 1e-3, "V={v}: t_m {}", layer.t_m);
        assert!(
            rel(layer.state.q, q_m) < 1e-4,
            "V={v}: q_m {}",
            layer.state.q
        );
    }
}

#[test]
fn states_at_t5() {
    let cfg = IntegratorConfig::default()
        .with_t_end(5.0)
        .with_tolerances(1e-11, 1e-13)
        .with_method(Method::DormandPrince45);
    for ((k, l, v, kappa), expected) in [
        (
            (1.0, 1.0, 2.0, 16.0),
            [
                0.080_299_465_6,
                0.024_109_249_7,
                0.895_591_284_7,
                1.815_291_819_1,
            ],
        ),
        (
            (0.5, 3.0, 0.2, 10.0),
            [
                0.028_362_805_7,
                0.113_005_254_2,
                0.933_968_776_2,
                1.905_605_970_4,
            ],
        ),
        (
            (2.0, 0.5, 5.0, 1.0),
            [
                0.137_358_404_9,
                0.015_073_617_3,
                0.832_494_360_6,
                1.695_135_955_7,
            ],
        ),
    ] {
        let p = ModelParams::new(k, l, v, kappa, 0.0).unwrap();
        let x = simulate(&p, &cfg).unwrap().last().to_array();
        for (a, b) in x.iter().zip(expected) {
            assert!(rel(*a, b) < 1e-7, "{p:?}: {x:?}");
        }
    }
}

#[test]
fn positive_sensitivity_intervals() {
    let cfg = IntegratorConfig::default().with_t_end(10.0);
    for (v, end) in [(1.0, 1.928), (2.0, 0.865), (10.0, 0.195)] {
        let r = sign_discrepancy_probe(&unit(v, 16.0), &cfg).unwrap();
        let (_, b) = r.full_positive.unwrap();
        assert!(rel(b, end) < 0.01, "V={v}: {b}");
    }
    // At V=0.1 the full sensitivity stays positive over the whole window.
    let r = sign_discrepancy_probe(&unit(0.1, 16.0), &cfg).unwrap();
    assert_eq!(r.full_positive.unwrap().1, 10.0);
}

#[test]
fn staged_relative_changes() {
    let grid = SweepGrid::staged(vec![0.01, 0.1], 10.0, 1.0, 1.0);
    let maps = run_sweep(
        &grid,
        &[Metric::RelChangeP, Metric::RelChangeF],
        &IntegratorConfig::default(),
        Execution::Sequential,
    )
    .unwrap();
    let get = |metric: Metric, remaining: f64, vi: usize| {
        maps.iter()
            .find(|m| m.metric == metric && m.threshold == 100.0 - remaining)
            .unwrap()
            .cell(vi, 0)
            .value
    };
    // Values rounded to three decimals, so allow 1% plus rounding.
    for (metric, remaining, vi, expected) in [
        (Metric::RelChangeF, 10.0, 0, -0.842),
        (Metric::RelChangeF, 25.0, 0, -0.888),
        (Metric::RelChangeP, 10.0, 0, -0.786),
        (Metric::RelChangeP, 90.0, 0, -0.858),
        (Metric::RelChangeF, 10.0, 1, -0.639),
        (Metric::RelChangeF, 50.0, 1, -0.167),
    ] {
        let got = get(metric, remaining, vi);
        assert!(
            (got - expected).abs() <= 0.01 * expected.abs() + 5e-4,
            "{metric:?} {remaining}: {got}"
        );
    }
    // Early stages see no speed-up of fatty acid release.
    assert!(get(Metric::RelChangeF, 90.0, 0).abs() < 0.01);
}
