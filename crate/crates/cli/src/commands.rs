use std::path::PathBuf;

use lipolysis::integrator::Integrator;
use lipolysis::kinetics::{conservation_residuals, simulate, State};
use lipolysis::qssa::{
    compare_expansions, detect_layer, qssa_approx, simulate_reduced, solve_qssa,
    timescales_from_layer, vkappa_condition, Percentile, ReducedModel, Regime,
};
use lipolysis::sensitivity::{
    fd_sensitivity_oracle, max_relative_deviation, sign_discrepancy_probe,
    simulate_qssa_sensitivity, simulate_sensitivity, SensitivityState,
};
use lipolysis::sweep::{gnuplot_script, run_sweep, Execution, MetricMap};
use lipolysis::Error;
use serde_json::{json, Value};

use crate::config::{Format, RunConfig};
use crate::error::{CliError, EXIT_PARTIAL};
use crate::output::{document, pretty, write_file, Field, Report, Table};

fn state_row(t: f64, x: &State, res: [f64; 2]) -> Vec<Field> {
    vec![
        t.into(),
        x.s.into(),
        x.q.into(),
        x.p.into(),
        x.f.into(),
        res[0].into(),
        res[1].into(),
    ]
}

/// Columns `t,s,q,p,f,res_glycerol,res_acyl`; `q` is reconstructed for
/// reduced models.
pub fn simulate_cmd(cfg: &RunConfig) -> Result<Report, CliError> {
    let p = cfg.model_params()?;
    let traj = match cfg.model.reduced() {
        None => simulate(&p, &cfg.integrator)?,
        Some((regime, order)) => {
            let model = ReducedModel::new(regime, order, p)?;
            simulate_reduced(&model, &Integrator::new(cfg.integrator.clone()))?
        }
    };
    let mut table = Table::new(&["t", "s", "q", "p", "f", "res_glycerol", "res_acyl"]);
    for (t, x) in traj.times.iter().zip(&traj.states) {
        table.push(state_row(*t, x, conservation_residuals(x, &p)));
    }
    let last = traj.last();
    Ok(Report {
        command: "simulate",
        table,
        summary: json!({
            "params": p,
            "t_final": traj.times.last(),
            "final_state": last,
            "output_points": traj.times.len(),
        }),
    })
}

/// Exact root against the explicit approximation on a uniform `s` grid.
pub fn qssa_cmd(cfg: &RunConfig) -> Result<Report, CliError> {
    let p = cfg.model_params()?;
    let o = &cfg.qssa;
    if o.points < 1 || !(o.s_min >= 0.0 && o.s_max >= o.s_min) {
        return Err(CliError::config(
            "qssa grid needs points >= 1 and 0 <= s_min <= s_max",
        ));
    }
    let certified = vkappa_condition(p.v, p.kappa);
    let mut table = Table::new(&[
        "s",
        "I",
        "q_exact",
        "q_approx",
        "rel_error",
        "exact_le_half",
        "approx_valid_half",
        "within_10pct",
        "certified",
    ]);
    let (mut worst, mut all_within, mut all_half) = (0.0f64, true, true);
    for i in 0..o.points {
        let s = if o.points == 1 {
            o.s_max
        } else {
            o.s_min + (o.s_max - o.s_min) * i as f64 / (o.points - 1) as f64
        };
        let exact = match solve_qssa(s, &p) {
            Ok(pt) => Some(pt),
            Err(Error::NoRoot { .. }) => None,
            Err(e) => return Err(e.into()),
        };
        let input = lipolysis::kinetics::rate_m1(s, p.k) / p.v;
        let approx = qssa_approx(input, p.kappa).ok();
        let qe = exact.map_or(f64::NAN, |e| e.q_tilde);
        let qa = approx.map_or(f64::NAN, |a| a.q_tilde);
        let rel = if qe > 0.0 {
            (qa - qe).abs() / qe
        } else if qa == qe {
            0.0
        } else {
            f64::NAN
        };
        let within = rel <= 0.1;
        let half = exact.is_some_and(|e| e.valid_half);
        worst = worst.max(if rel.is_nan() { f64::INFINITY } else { rel });
        all_within &= within;
        all_half &= half;
        table.push(vec![
            s.into(),
            input.into(),
            qe.into(),
            qa.into(),
            rel.into(),
            half.into(),
            approx.is_some_and(|a| a.valid_half).into(),
            within.into(),
            certified.into(),
        ]);
    }
    Ok(Report {
        command: "qssa",
        table,
        summary: json!({
            "params": p,
            "vkappa_condition": certified,
            "max_rel_error": worst,
            "all_within_10pct": all_within,
            "all_exact_le_half": all_half,
        }),
    })
}

/// Full-model `q` against the expansions of the chosen regime.
pub fn asymptotics_cmd(cfg: &RunConfig) -> Result<Report, CliError> {
    let p = cfg.model_params()?;
    let o = &cfg.asymptotics;
    let regime: Regime = o.regime.into();
    let c = compare_expansions(&p, regime, &cfg.integrator, o.window_start, o.points)?;
    let tag = match regime {
        Regime::LLarge => "L",
        Regime::VLarge => "V",
        Regime::KappaLarge => "kappa",
    };
    let mut columns: Vec<String> = ["t", "s", "q_full"].iter().map(|s| s.to_string()).collect();
    columns.extend(c.orders.iter().map(|o| format!("q_{tag}{o}")));
    let mut table = Table::with_columns(columns);
    for i in 0..c.times.len() {
        let mut row: Vec<Field> = vec![c.times[i].into(), c.s[i].into(), c.q_full[i].into()];
        row.extend(c.approx.iter().map(|a| Field::from(a[i])));
        table.push(row);
    }
    Ok(Report {
        command: "asymptotics",
        table,
        summary: json!({
            "params": p,
            "regime": c.regime,
            "orders": c.orders,
            "t_m": c.t_m,
            "window": [c.window.0, c.window.1],
            "sup_errors": c.sup_errors,
        }),
    })
}

fn sens_fields(s: Option<&SensitivityState>) -> Vec<Field> {
    match s {
        Some(s) => s.to_array().iter().map(|&x| x.into()).collect(),
        None => vec![f64::NAN.into(); 4],
    }
}

/// Forward, QSSA and finite-difference sensitivities on a uniform grid, plus
/// the sign-discrepancy probe.
pub fn sensitivity_cmd(cfg: &RunConfig) -> Result<Report, CliError> {
    let p = cfg.model_params()?;
    let o = &cfg.sensitivity;
    if o.points < 2 {
        return Err(CliError::config(
            "sensitivity grid needs at least two points",
        ));
    }
    if !(o.h > 0.0 && o.h.is_finite()) {
        return Err(CliError::config(format!(
            "finite-difference step must be positive, got {}",
            o.h
        )));
    }
    let t_end = cfg.integrator.t_end;
    let grid: Vec<f64> = (0..o.points)
        .map(|i| t_end * i as f64 / (o.points - 1) as f64)
        .collect();
    let fwd = simulate_sensitivity(&p, &cfg.integrator, Some(&grid))?;

    let mut notes = Vec::new();
    let mut note = |what: &str, e: Error| -> Result<(), CliError> {
        match e {
            Error::NoRoot { .. } | Error::DegenerateStep(_) => {
                notes.push(format!("{what}: {e}"));
                Ok(())
            }
            other => Err(other.into()),
        }
    };
    let red = match simulate_qssa_sensitivity(&p, &cfg.integrator, Some(&grid)) {
        Ok(r) => Some(r),
        Err(e) => {
            note("qssa", e)?;
            None
        }
    };
    let fd = match fd_sensitivity_oracle(&p, &grid, o.h) {
        Ok(r) => Some(r),
        Err(e) => {
            note("finite differences", e)?;
            None
        }
    };
    let probe = match sign_discrepancy_probe(&p, &cfg.integrator) {
        Ok(r) => Some(r),
        Err(e) => {
            note("probe", e)?;
            None
        }
    };

    let mut table = Table::new(&[
        "t",
        "s",
        "q",
        "p",
        "f",
        "ds_dk",
        "dq_dk",
        "dp_dk",
        "df_dk",
        "qssa_s",
        "qssa_q",
        "qssa_ds_dk",
        "qssa_dq_dk",
        "qssa_dp_dk",
        "fd_ds_dk",
        "fd_dq_dk",
        "fd_dp_dk",
        "fd_df_dk",
    ]);
    for (i, t) in fwd.times.iter().enumerate() {
        let x = &fwd.states[i];
        let mut row: Vec<Field> = vec![(*t).into(), x.s.into(), x.q.into(), x.p.into(), x.f.into()];
        row.extend(sens_fields(Some(&fwd.sens[i])));
        match red.as_ref().and_then(|r| r.points.get(i)) {
            Some(pt) => row.extend([pt.s, pt.q, pt.ds_dk, pt.dq_dk, pt.dp_dk].map(Field::from)),
            None => row.extend(vec![Field::from(f64::NAN); 5]),
        }
        row.extend(sens_fields(fd.as_ref().and_then(|f| f.get(i))));
        table.push(row);
    }
    let deviation = fd
        .as_ref()
        .map(|f| max_relative_deviation(&fwd.sens, f, 1e-6));
    Ok(Report {
        command: "sensitivity",
        table,
        summary: json!({
            "params": p,
            "h": o.h,
            "max_rel_deviation_vs_fd": deviation,
            "probe": probe,
            "notes": notes,
        }),
    })
}

pub fn timescales_cmd(cfg: &RunConfig) -> Result<Report, CliError> {
    let p = cfg.model_params()?;
    let pct = Percentile::new(cfg.percentile)?;
    let layer = detect_layer(&p, &cfg.integrator)?;
    let report = timescales_from_layer(&p, &layer, pct)?;
    let value = serde_json::to_value(report).expect("report serializes");
    let mut table = Table::new(&["quantity", "value"]);
    if let Value::Object(map) = &value {
        for (k, v) in map {
            let field = match v {
                Value::Bool(b) => Field::Bool(*b),
                Value::Number(n) => Field::Num(n.as_f64().unwrap_or(f64::NAN)),
                other => Field::Text(other.to_string()),
            };
            table.push(vec![Field::Text(k.clone()), field]);
        }
    }
    Ok(Report {
        command: "timescales",
        table,
        summary: json!({"params": p, "report": value}),
    })
}

/// Runs the sweep and writes one file per map into the output directory.
/// Returns the exit code: 0, or 4 when some cells failed.
pub fn sweep_cmd(cfg: &RunConfig) -> Result<i32, CliError> {
    let grid = cfg.sweep_grid()?;
    if cfg.sweep.metrics.is_empty() {
        return Err(CliError::config("no metrics requested"));
    }
    let run = |exec| run_sweep(&grid, &cfg.sweep.metrics, &cfg.integrator, exec);
    let maps = if cfg.threads == 1 {
        run(Execution::Sequential)?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| CliError::config(format!("thread pool: {e}")))?;
        pool.install(|| run(Execution::Parallel))?
    };

    let dir = cfg
        .output
        .path
        .clone()
        .unwrap_or_else(|| PathBuf::from("sweep_out"));
    let failures = maps.first().map_or(Vec::new(), |m| m.meta.failures.clone());
    let failed_cells: usize = maps.iter().map(MetricMap::failed_cells).sum();
    let summary = json!({
        "grid": grid,
        "meta": maps.first().map(|m| &m.meta),
        "files": maps.iter().map(|m| m.stem()).collect::<Vec<_>>(),
        "failed_cells": failed_cells,
        "grid_note": "default axes bracket the described regimes; exact figure ranges are not given numerically",
    });
    match cfg.output.format {
        Format::Csv => {
            for m in &maps {
                write_file(&dir.join(format!("{}.csv", m.stem())), &m.to_csv())?;
            }
            write_file(
                &dir.join("meta.json"),
                &pretty(&document(cfg, "sweep", vec![("summary", summary)])),
            )?;
        }
        Format::Json => {
            let doc = document(
                cfg,
                "sweep",
                vec![
                    ("summary", summary),
                    ("maps", serde_json::to_value(&maps).expect("maps serialize")),
                ],
            );
            write_file(&dir.join("sweep.json"), &pretty(&doc))?;
        }
    }
    if cfg.sweep.gnuplot {
        for m in &maps {
            write_file(&dir.join(format!("{}.gp", m.stem())), &gnuplot_script(m))?;
        }
    }
    if failures.is_empty() && failed_cells == 0 {
        Ok(0)
    } else {
        eprintln!(
            "{}",
            json!({"warning": {"kind": "partial_sweep", "failed_cells": failed_cells, "failures": failures}})
        );
        Ok(EXIT_PARTIAL)
    }
}
