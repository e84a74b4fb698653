//! `lipolysis`: simulation, QSSA analysis, sensitivities and sweeps.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lipolysis::integrator::Method;
use lipolysis::sweep::Metric;

use config::{Format, ModelKind, ParamBlock, RegimeArg, RunConfig};
use error::CliError;

#[derive(Parser)]
#[command(
    name = "lipolysis",
    version,
    about = "Kinetics of TG lipolysis with DG transacylation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the full or a reduced model; writes t,s,q,p,f and conservation residuals.
    Simulate(Common),
    /// Tabulate the exact QSSA root against the explicit approximation.
    Qssa {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        s_min: Option<f64>,
        #[arg(long)]
        s_max: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
    },
    /// Compare full-model q with the expansions of one regime.
    Asymptotics {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        regime: Option<RegimeArg>,
        /// Start of the comparison window (default 3 t_m).
        #[arg(long)]
        window_start: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
    },
    /// Forward, QSSA and finite-difference sensitivities with respect to kappa.
    Sensitivity {
        #[command(flatten)]
        common: Common,
        /// Relative finite-difference step.
        #[arg(long)]
        h: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
    },
    /// Timescale estimates and validity conditions.
    Timescales {
        #[command(flatten)]
        common: Common,
        /// Percent of substrate remaining at the reference time.
        #[arg(long)]
        percentile: Option<f64>,
    },
    /// Threshold-time, fraction and relative-change maps over (V, kappa).
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sweep: SweepArgs,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long = "K")]
    k: Option<f64>,
    #[arg(long = "L")]
    l: Option<f64>,
    #[arg(long = "V")]
    v: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    q0: Option<f64>,
    /// JSON file with v1_max, k1_m, v2_max, k2_m, sigma, s0, q0.
    #[arg(long)]
    dimensional_file: Option<PathBuf>,
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    model: Option<ModelKind>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    rtol: Option<f64>,
    #[arg(long)]
    atol: Option<f64>,
    #[arg(long, value_parser = parse_method)]
    method: Option<Method>,
    /// Output file (directory for sweeps).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    threads: Option<usize>,
    /// Record the creation time in output meta.
    #[arg(long)]
    timestamp: bool,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    dump_config: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, allow_hyphen_values = true)]
    v_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    v_max: Option<f64>,
    #[arg(long)]
    v_n: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    kappa_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    kappa_max: Option<f64>,
    #[arg(long)]
    kappa_n: Option<usize>,
    /// Add a kappa = 0 column.
    #[arg(long)]
    kappa_zero: bool,
    /// Percent processed, comma separated.
    #[arg(long, value_delimiter = ',')]
    thresholds: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', value_parser = parse_metric)]
    metrics: Option<Vec<Metric>>,
    /// Staged curves over V at a single kappa.
    #[arg(long)]
    staged: bool,
    #[arg(long)]
    staged_kappa: Option<f64>,
    /// Also write gnuplot scripts.
    #[arg(long)]
    gnuplot: bool,
}

fn parse_method(s: &str) -> Result<Method, String> {
    match s {
        "rosenbrock23" => Ok(Method::Rosenbrock23),
        "dormand-prince45" => Ok(Method::DormandPrince45),
        _ => Err(format!(
            "unknown method `{s}` (rosenbrock23 | dormand-prince45)"
        )),
    }
}

fn parse_metric(s: &str) -> Result<Metric, String> {
    Metric::parse(s).ok_or_else(|| {
        let names: Vec<&str> = Metric::ALL.iter().map(|m| m.name()).collect();
        format!("unknown metric `{s}` ({})", names.join(" | "))
    })
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl Common {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        cfg.overlay_params(&ParamBlock {
            k: self.k,
            l: self.l,
            v: self.v,
            kappa: self.kappa,
            q0: self.q0,
        });
        if let Some(path) = &self.dimensional_file {
            cfg.set_dimensional_file(path)?;
        }
        set(&mut cfg.model, self.model);
        set(&mut cfg.integrator.t_end, self.t_end);
        set(&mut cfg.integrator.rtol, self.rtol);
        set(&mut cfg.integrator.atol, self.atol);
        set(&mut cfg.integrator.method, self.method);
        if self.out.is_some() {
            cfg.output.path = self.out.clone();
        }
        set(&mut cfg.output.format, self.format);
        cfg.output.timestamp |= self.timestamp;
        set(&mut cfg.threads, self.threads);
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let (common, name) = match &cli.command {
        Command::Simulate(c) => (c, "simulate"),
        Command::Qssa { common, .. } => (common, "qssa"),
        Command::Asymptotics { common, .. } => (common, "asymptotics"),
        Command::Sensitivity { common, .. } => (common, "sensitivity"),
        Command::Timescales { common, .. } => (common, "timescales"),
        Command::Sweep { common, .. } => (common, "sweep"),
    };
    let mut cfg = common.resolve()?;
    match &cli.command {
        Command::Qssa {
            s_min,
            s_max,
            points,
            ..
        } => {
            set(&mut cfg.qssa.s_min, *s_min);
            set(&mut cfg.qssa.s_max, *s_max);
            set(&mut cfg.qssa.points, *points);
        }
        Command::Asymptotics {
            regime,
            window_start,
            points,
            ..
        } => {
            set(&mut cfg.asymptotics.regime, *regime);
            if window_start.is_some() {
                cfg.asymptotics.window_start = *window_start;
            }
            set(&mut cfg.asymptotics.points, *points);
        }
        Command::Sensitivity { h, points, .. } => {
            set(&mut cfg.sensitivity.h, *h);
            set(&mut cfg.sensitivity.points, *points);
        }
        Command::Timescales { percentile, .. } => set(&mut cfg.percentile, *percentile),
        Command::Sweep { sweep: a, .. } => {
            let o = &mut cfg.sweep;
            set(&mut o.v.log10_min, a.v_min);
            set(&mut o.v.log10_max, a.v_max);
            set(&mut o.v.n, a.v_n);
            set(&mut o.kappa.log10_min, a.kappa_min);
            set(&mut o.kappa.log10_max, a.kappa_max);
            set(&mut o.kappa.n, a.kappa_n);
            o.kappa_zero |= a.kappa_zero;
            set(&mut o.thresholds, a.thresholds.clone());
            set(&mut o.metrics, a.metrics.clone());
            o.staged |= a.staged;
            set(&mut o.staged_kappa, a.staged_kappa);
            o.gnuplot |= a.gnuplot;
        }
        Command::Simulate(_) => {}
    }
    cfg.validate()?;
    if name == "sweep" {
        cfg.sweep_grid()?;
    } else {
        cfg.model_params()?;
    }

    if common.dump_config {
        print!(
            "{}",
            output::pretty(&serde_json::to_value(&cfg).expect("config serializes"))
        );
        return Ok(0);
    }

    let report = match name {
        "simulate" => commands::simulate_cmd(&cfg)?,
        "qssa" => commands::qssa_cmd(&cfg)?,
        "asymptotics" => commands::asymptotics_cmd(&cfg)?,
        "sensitivity" => commands::sensitivity_cmd(&cfg)?,
        "timescales" => commands::timescales_cmd(&cfg)?,
        _ => return commands::sweep_cmd(&cfg),
    };
    output::emit(&cfg, &report)?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", CliError::config(e.to_string().trim_end()).to_json());
            return ExitCode::from(error::EXIT_CONFIG as u8);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.code as u8)
        }
    }
}
