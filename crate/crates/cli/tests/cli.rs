use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn lipolysis(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lipolysis"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn error_json(o: &Output) -> Value {
    let text = String::from_utf8(o.stderr.clone()).unwrap();
    serde_json::from_str(text.lines().last().unwrap()).unwrap()
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

const UNIT: [&str; 8] = ["--K", "1", "--L", "1", "--V", "1", "--kappa", "1"];

#[test]
fn simulate_reaches_equilibrium() {
    let mut args = vec!["simulate"];
    args.extend(UNIT);
    args.extend(["--t-end", "20"]);
    let o = lipolysis(&args);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("t,s,q,p,f,res_glycerol,res_acyl\n"));
    let last = csv_rows(&text).pop().unwrap();
    let num = |i: usize| last[i].parse::<f64>().unwrap();
    assert_eq!(num(0), 20.0);
    assert!((num(3) - 1.0).abs() < 1e-4 && (num(4) - 2.0).abs() < 1e-4);
    assert!(num(5).abs() < 1e-6 && num(6).abs() < 1e-6);
}

#[test]
fn reduced_model_reconstructs_q() {
    let o = lipolysis(&[
        "simulate", "--K", "1", "--L", "1", "--V", "10", "--kappa", "1", "--t-end", "2", "--model",
        "qssa1-V",
    ]);
    assert!(o.status.success());
    let p = lipolysis::kinetics::ModelParams::new(1.0, 1.0, 10.0, 1.0, 0.0).unwrap();
    for row in csv_rows(&stdout(&o)) {
        let s: f64 = row[1].parse().unwrap();
        let q: f64 = row[2].parse().unwrap();
        let expected = lipolysis::qssa::expansion_q_v(s, &p, 2).unwrap();
        assert_eq!(q, expected);
    }
}

#[test]
fn missing_parameters_exit_2() {
    let o = lipolysis(&["simulate", "--K", "1"]);
    assert_eq!(o.status.code(), Some(2));
    let e = error_json(&o);
    assert_eq!(e["error"]["kind"], "config");
    assert!(e["error"]["message"]
        .as_str()
        .unwrap()
        .contains("missing parameter"));

    let o = lipolysis(&["simulate", "--format", "xml"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_json(&o)["error"]["code"], 2);
}

#[test]
fn numeric_failure_exit_3() {
    let o = lipolysis(&[
        "simulate", "--K", "1", "--L", "1", "--V", "0.4", "--kappa", "0", "--model", "qssa0-L",
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(error_json(&o)["error"]["kind"], "numeric");
}

#[test]
fn timescales_report() {
    let o = lipolysis(&[
        "timescales",
        "--K",
        "1",
        "--L",
        "1",
        "--V",
        "10",
        "--kappa",
        "16",
        "--format",
        "json",
    ]);
    assert!(o.status.success());
    let doc: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(doc["schema"], 1);
    let r = &doc["summary"]["report"];
    assert_eq!(r["condition_full"], true);
    assert!((r["t90_shorthand"].as_f64().unwrap() - 4.0 / 15.0).abs() < 1e-12);
}

#[test]
fn qssa_table_is_certified_at_v4() {
    let o = lipolysis(&[
        "qssa", "--K", "1", "--L", "1", "--V", "4", "--kappa", "0", "--points", "50",
    ]);
    assert!(o.status.success());
    let rows = csv_rows(&stdout(&o));
    assert_eq!(rows.len(), 50);
    for r in rows {
        assert_eq!(&r[5..], ["true", "true", "true", "true"]);
    }
}

#[test]
fn sensitivity_outputs_all_series() {
    let mut args = vec![
        "sensitivity",
        "--K",
        "1",
        "--L",
        "1",
        "--V",
        "2",
        "--kappa",
        "16",
    ];
    args.extend(["--t-end", "5", "--points", "11", "--format", "json"]);
    let o = lipolysis(&args);
    assert!(o.status.success());
    let doc: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(doc["table"]["columns"].as_array().unwrap().len(), 18);
    assert_eq!(doc["table"]["rows"].as_array().unwrap().len(), 11);
    assert!(doc["summary"]["max_rel_deviation_vs_fd"].as_f64().unwrap() < 1e-3);
    assert!(doc["summary"]["probe"]["duration"].as_f64().unwrap() > 0.0);
}

#[test]
fn asymptotics_errors_by_order() {
    let mut args = vec![
        "asymptotics",
        "--K",
        "1",
        "--L",
        "1",
        "--V",
        "10",
        "--kappa",
        "1",
    ];
    args.extend(["--t-end", "10", "--regime", "V", "--format", "json"]);
    let o = lipolysis(&args);
    assert!(o.status.success());
    let doc: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let e: Vec<f64> = doc["summary"]["sup_errors"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    assert!(e[0] > e[1] && e[1] > e[2], "{e:?}");
}

#[test]
fn single_cell_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    let o = lipolysis(&[
        "sweep",
        "--v-n",
        "1",
        "--kappa-n",
        "1",
        "--v-min",
        "0",
        "--kappa-min",
        "-1",
        "--metrics",
        "t_s_pct,rel_change_p",
        "--gnuplot",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("t_s_pct50.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("0.0000000000000000e0,-1.0000000000000000e0,"));
    assert!(out.join("rel_change_p50.gp").exists());
    let meta: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta["summary"]["failed_cells"], 0);
    assert!(meta.get("created_unix").is_none());
}

#[test]
fn failed_cells_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"integrator": {"max_steps": 3}}"#).unwrap();
    let out = dir.path().join("s");
    let o = lipolysis(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--v-n",
        "2",
        "--kappa-n",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(4));
    let csv = std::fs::read_to_string(out.join("t_s_pct50.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",nan,failed")));
}

fn run_to(dir: &Path, name: &str, extra: &[&str]) -> Vec<u8> {
    let out = dir.join(name);
    let mut args = vec!["simulate", "--t-end", "3", "--out", out.to_str().unwrap()];
    args.extend(extra);
    let o = lipolysis(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    std::fs::read(&out).unwrap()
}

#[test]
fn dumped_config_reproduces_output() {
    let dir = tempfile::tempdir().unwrap();
    let mut flags = UNIT.to_vec();
    flags.extend(["--format", "json"]);
    let direct = run_to(dir.path(), "out.json", &flags);

    let mut args = vec!["simulate", "--t-end", "3", "--dump-config", "--out"];
    let out = dir.path().join("out.json");
    args.push(out.to_str().unwrap());
    args.extend(&flags);
    let dumped = lipolysis(&args);
    assert!(dumped.status.success());
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, &dumped.stdout).unwrap();
    std::fs::remove_file(&out).unwrap();

    let o = lipolysis(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(std::fs::read(&out).unwrap(), direct);
}

#[test]
fn csv_output_gets_meta_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    run_to(dir.path(), "run.csv", &UNIT);
    let meta: Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("run.csv.meta.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(meta["config"]["params"]["kappa"], 1.0);
    assert_eq!(meta["command"], "simulate");
}

#[test]
fn dimensional_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("dim.json");
    std::fs::write(
        &file,
        r#"{"v1_max": 2.0, "k1_m": 0.5, "v2_max": 4.0, "k2_m": 0.25, "sigma": 8.0, "s0": 0.5, "q0": 0.0}"#,
    )
    .unwrap();
    let o = lipolysis(&[
        "timescales",
        "--dimensional-file",
        file.to_str().unwrap(),
        "--dump-config",
    ]);
    assert!(o.status.success());
    let cfg: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(cfg["dimensional"]["sigma"], 8.0);

    let o = lipolysis(&[
        "timescales",
        "--dimensional-file",
        file.to_str().unwrap(),
        "--V",
        "3",
    ]);
    assert_eq!(o.status.code(), Some(2));
}
