//! Run configuration: defaults, optional JSON file, then command-line flags.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use lipolysis::integrator::IntegratorConfig;
use lipolysis::kinetics::{nondimensionalize, DimensionalParams, ModelParams};
use lipolysis::qssa::Regime;
use lipolysis::sweep::{log_space, Metric, SweepGrid};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
pub enum ModelKind {
    #[default]
    #[serde(rename = "full")]
    #[value(name = "full")]
    Full,
    #[serde(rename = "qssa0-L")]
    #[value(name = "qssa0-L")]
    Qssa0L,
    #[serde(rename = "qssa1-L")]
    #[value(name = "qssa1-L")]
    Qssa1L,
    #[serde(rename = "qssa1-V")]
    #[value(name = "qssa1-V")]
    Qssa1V,
    #[serde(rename = "qssa1-kappa")]
    #[value(name = "qssa1-kappa")]
    Qssa1Kappa,
}

impl ModelKind {
    /// Regime and order of a reduced model, `None` for the full model.
    pub fn reduced(self) -> Option<(Regime, u8)> {
        match self {
            ModelKind::Full => None,
            ModelKind::Qssa0L => Some((Regime::LLarge, 0)),
            ModelKind::Qssa1L => Some((Regime::LLarge, 1)),
            ModelKind::Qssa1V => Some((Regime::VLarge, 1)),
            ModelKind::Qssa1Kappa => Some((Regime::KappaLarge, 1)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
pub enum RegimeArg {
    #[serde(rename = "L")]
    #[value(name = "L")]
    L,
    #[serde(rename = "V")]
    #[value(name = "V")]
    V,
    #[serde(rename = "kappa")]
    #[value(name = "kappa")]
    Kappa,
}

impl From<RegimeArg> for Regime {
    fn from(r: RegimeArg) -> Self {
        match r {
            RegimeArg::L => Regime::LLarge,
            RegimeArg::V => Regime::VLarge,
            RegimeArg::Kappa => Regime::KappaLarge,
        }
    }
}

/// Nondimensional parameters, possibly incomplete before resolution.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamBlock {
    #[serde(rename = "K", skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(rename = "L", skip_serializing_if = "Option::is_none")]
    pub l: Option<f64>,
    #[serde(rename = "V", skip_serializing_if = "Option::is_none")]
    pub v: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q0: Option<f64>,
}

impl ParamBlock {
    fn is_empty(&self) -> bool {
        *self == Self::default()
    }

    fn overlay(&mut self, other: &ParamBlock) {
        self.k = other.k.or(self.k);
        self.l = other.l.or(self.l);
        self.v = other.v.or(self.v);
        self.kappa = other.kappa.or(self.kappa);
        self.q0 = other.q0.or(self.q0);
    }

    fn require(&self) -> Result<ModelParams, CliError> {
        let need = |name: &str, v: Option<f64>| {
            v.ok_or_else(|| CliError::config(format!("missing parameter `{name}`")))
        };
        let p = ModelParams::new(
            need("K", self.k)?,
            need("L", self.l)?,
            need("V", self.v)?,
            need("kappa", self.kappa)?,
            self.q0.unwrap_or(0.0),
        )?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// File for single-table commands, directory for sweeps; stdout when
    /// absent (sweeps default to `sweep_out`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub format: Format,
    /// Adds the wall-clock creation time to output meta.
    pub timestamp: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QssaOptions {
    pub s_min: f64,
    pub s_max: f64,
    pub points: usize,
}

impl Default for QssaOptions {
    fn default() -> Self {
        Self {
            s_min: 0.01,
            s_max: 1.0,
            points: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AsymptoticsOptions {
    pub regime: RegimeArg,
    /// Window start; `3 t_m` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window_start: Option<f64>,
    pub points: usize,
}

impl Default for AsymptoticsOptions {
    fn default() -> Self {
        Self {
            regime: RegimeArg::V,
            window_start: None,
            points: 1001,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensitivityOptions {
    pub h: f64,
    pub points: usize,
}

impl Default for SensitivityOptions {
    fn default() -> Self {
        Self {
            h: 1e-4,
            points: 201,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub log10_min: f64,
    pub log10_max: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepOptions {
    pub v: Axis,
    pub kappa: Axis,
    /// Prepends a `kappa = 0` column.
    pub kappa_zero: bool,
    pub thresholds: Vec<f64>,
    pub metrics: Vec<Metric>,
    /// Staged-percentage curves at a single `kappa`.
    pub staged: bool,
    pub staged_kappa: f64,
    pub gnuplot: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        let g = SweepGrid::default();
        let axis = |v: &[f64]| Axis {
            log10_min: v[0].log10(),
            log10_max: v[v.len() - 1].log10(),
            n: v.len(),
        };
        Self {
            v: axis(&g.v_values),
            kappa: axis(&g.kappa_values),
            kappa_zero: false,
            thresholds: g.thresholds,
            metrics: Metric::ALL.to_vec(),
            staged: false,
            staged_kappa: 10.0,
            gnuplot: false,
        }
    }
}

fn default_schema() -> u32 {
    SCHEMA
}

fn default_percentile() -> f64 {
    90.0
}

fn default_threads() -> usize {
    0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_schema")]
    pub schema: u32,
    #[serde(default)]
    pub model: ModelKind,
    #[serde(default, skip_serializing_if = "ParamBlock::is_empty")]
    pub params: ParamBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimensional: Option<DimensionalParams>,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub output: OutputConfig,
    /// Worker threads for sweeps; 0 uses every core, 1 runs sequentially.
    #[serde(default = "default_threads")]
    pub threads: usize,
    #[serde(default = "default_percentile")]
    pub percentile: f64,
    #[serde(default)]
    pub qssa: QssaOptions,
    #[serde(default)]
    pub asymptotics: AsymptoticsOptions,
    #[serde(default)]
    pub sensitivity: SensitivityOptions,
    #[serde(default)]
    pub sweep: SweepOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("every field has a default")
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        if cfg.schema != SCHEMA {
            return Err(CliError::config(format!(
                "unsupported schema {} (expected {SCHEMA})",
                cfg.schema
            )));
        }
        Ok(cfg)
    }

    pub fn overlay_params(&mut self, flags: &ParamBlock) {
        self.params.overlay(flags);
    }

    pub fn set_dimensional_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        let d: DimensionalParams = serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        self.dimensional = Some(d);
        Ok(())
    }

    /// Model parameters; exactly one parameter block must be present.
    pub fn model_params(&self) -> Result<ModelParams, CliError> {
        match (&self.dimensional, self.params.is_empty()) {
            (Some(_), false) => Err(CliError::config(
                "give either nondimensional parameters or a dimensional block, not both",
            )),
            (Some(d), true) => Ok(nondimensionalize(d)?),
            (None, false) => self.params.require(),
            (None, true) => Err(CliError::config(
                "missing parameters: pass --K --L --V --kappa or --dimensional-file",
            )),
        }
    }

    /// `K`, `L`, `q0` for sweeps, defaulting to `1, 1, 0`.
    pub fn sweep_grid(&self) -> Result<SweepGrid, CliError> {
        let (k, l, q0) = match &self.dimensional {
            Some(d) if self.params.is_empty() => {
                let p = nondimensionalize(d)?;
                (p.k, p.l, p.q0)
            }
            Some(_) => {
                return Err(CliError::config(
                    "give either nondimensional parameters or a dimensional block, not both",
                ))
            }
            None => (
                self.params.k.unwrap_or(1.0),
                self.params.l.unwrap_or(1.0),
                self.params.q0.unwrap_or(0.0),
            ),
        };
        let o = &self.sweep;
        let axis = |a: &Axis| log_space(a.log10_min, a.log10_max, a.n);
        let mut grid = if o.staged {
            SweepGrid::staged(axis(&o.v), o.staged_kappa, k, l)
        } else {
            let mut kappa_values = axis(&o.kappa);
            if o.kappa_zero {
                kappa_values.insert(0, 0.0);
            }
            SweepGrid {
                v_values: axis(&o.v),
                kappa_values,
                k,
                l,
                q0,
                thresholds: o.thresholds.clone(),
                staged: false,
            }
        };
        grid.q0 = q0;
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.integrator
            .validate()
            .map_err(|e| CliError::config(e.to_string()))?;
        Ok(())
    }
}
