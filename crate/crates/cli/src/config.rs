//! Run configuration with layered resolution: built-in defaults, then a
//! named preset, then a key=value config file, then command-line flags.
//! Later layers override earlier ones key by key.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use qjump_core::jc::JCParams;
use qjump_core::master::TclOrder;

use crate::error::CliError;

/// Coefficient order for the model functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OrderArg {
    Tcl2,
    Tcl4,
    Exact,
}

impl OrderArg {
    pub fn to_core(self) -> TclOrder {
        match self {
            OrderArg::Tcl2 => TclOrder::Tcl2,
            OrderArg::Tcl4 => TclOrder::Tcl4,
            OrderArg::Exact => TclOrder::Exact,
        }
    }
}

impl fmt::Display for OrderArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OrderArg::Tcl2 => "tcl2",
            OrderArg::Tcl4 => "tcl4",
            OrderArg::Exact => "exact",
        })
    }
}

/// How to produce the population curve: stochastic unraveling (standard or
/// doubled), direct ODE integration, or the exact density matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Standard,
    Doubled,
    Ode,
    ExactDensity,
}

impl fmt::Display for ModeArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModeArg::Standard => "standard",
            ModeArg::Doubled => "doubled",
            ModeArg::Ode => "ode",
            ModeArg::ExactDensity => "exact-density",
        })
    }
}

/// Boolean-valued flag spelled on/off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OnOff {
    On,
    Off,
}

impl OnOff {
    pub fn as_bool(self) -> bool {
        matches!(self, OnOff::On)
    }
}

/// Named parameter bundles reproducing the four reference data sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Resonant (Δ=0, λ=5γ₀) rate curves, scaled units.
    Fig1,
    /// Resonant decay: standard unraveling, 10⁵ trajectories, scaled units.
    Fig2,
    /// Detuned (γ₀=65, λ=19.5, Δ=156) rate curves, raw units.
    Fig3,
    /// Detuned decay: doubled-space unraveling, 10⁵ trajectories, raw units.
    Fig4,
}

/// Command-line overrides shared by the table-producing subcommands.
/// Every field is optional; unset fields fall through to the config file,
/// the preset, and finally the defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Apply a named parameter bundle before other overrides.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Read key=value settings from a file ('#' starts a comment).
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Bare decay rate γ₀ of the Markov limit.
    #[arg(long)]
    pub gamma0: Option<f64>,
    /// Reservoir spectral half-width λ (inverse correlation time).
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Detuning Δ between the system and the reservoir center frequency.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Coefficient order: tcl2, tcl4, or exact.
    #[arg(long, value_enum)]
    pub order: Option<OrderArg>,
    /// Computation mode: standard, doubled, ode, or exact-density.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// End of the time grid (the grid always starts at 0).
    #[arg(long)]
    pub tmax: Option<f64>,
    /// Number of grid points, endpoints included.
    #[arg(long)]
    pub points: Option<usize>,
    /// Number of stochastic trajectories.
    #[arg(long)]
    pub ntraj: Option<u64>,
    /// Master seed; trajectory k runs on stream k of this seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Integration substeps per grid interval.
    #[arg(long)]
    pub substeps: Option<usize>,
    /// Worker threads for the ensemble (default: all cores).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output file (stdout when omitted).
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Report times in units of 1/γ₀ and rates in units of γ₀.
    #[arg(long, num_args(0..=1), default_missing_value = "true", value_name = "BOOL")]
    pub scaled: Option<bool>,
    /// Include the Lamb-shift coefficient in the generator.
    #[arg(long, value_enum, value_name = "on|off")]
    pub include_shift: Option<OnOff>,
    /// Fix the reduction order so results are bit-identical across
    /// worker counts.
    #[arg(long, value_enum, value_name = "on|off")]
    pub deterministic_reduction: Option<OnOff>,
}

/// Fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub gamma0: f64,
    pub lambda: f64,
    pub delta: f64,
    pub order: OrderArg,
    pub mode: ModeArg,
    pub tmax: f64,
    pub points: usize,
    pub ntraj: u64,
    pub seed: u64,
    pub substeps: usize,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub scaled: bool,
    pub include_shift: bool,
    pub deterministic_reduction: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            gamma0: 1.0,
            lambda: 5.0,
            delta: 0.0,
            order: OrderArg::Tcl4,
            mode: ModeArg::Ode,
            tmax: 3.0,
            points: 301,
            ntraj: 10_000,
            seed: 2024,
            substeps: 10,
            workers: None,
            out: None,
            scaled: false,
            include_shift: true,
            deterministic_reduction: true,
        }
    }
}

impl RunConfig {
    fn apply_preset(&mut self, preset: Preset) {
        match preset {
            Preset::Fig1 => {
                self.gamma0 = 1.0;
                self.lambda = 5.0;
                self.delta = 0.0;
                self.order = OrderArg::Tcl4;
                self.tmax = 3.0;
                self.points = 301;
                self.scaled = true;
            }
            Preset::Fig2 => {
                self.gamma0 = 1.0;
                self.lambda = 5.0;
                self.delta = 0.0;
                self.order = OrderArg::Tcl4;
                self.mode = ModeArg::Standard;
                self.tmax = 3.0;
                self.points = 61;
                self.ntraj = 100_000;
                self.substeps = 10;
                self.scaled = true;
            }
            Preset::Fig3 => {
                self.gamma0 = 65.0;
                self.lambda = 19.5;
                self.delta = 156.0;
                self.order = OrderArg::Tcl4;
                self.tmax = 0.5;
                self.points = 251;
                self.scaled = false;
            }
            Preset::Fig4 => {
                self.gamma0 = 65.0;
                self.lambda = 19.5;
                self.delta = 156.0;
                self.order = OrderArg::Tcl4;
                self.mode = ModeArg::Doubled;
                self.tmax = 0.5;
                self.points = 51;
                self.ntraj = 100_000;
                self.substeps = 40;
                self.scaled = false;
            }
        }
    }

    fn apply_flags(&mut self, args: &RunArgs) {
        if let Some(v) = args.gamma0 {
            self.gamma0 = v;
        }
        if let Some(v) = args.lambda {
            self.lambda = v;
        }
        if let Some(v) = args.delta {
            self.delta = v;
        }
        if let Some(v) = args.order {
            self.order = v;
        }
        if let Some(v) = args.mode {
            self.mode = v;
        }
        if let Some(v) = args.tmax {
            self.tmax = v;
        }
        if let Some(v) = args.points {
            self.points = v;
        }
        if let Some(v) = args.ntraj {
            self.ntraj = v;
        }
        if let Some(v) = args.seed {
            self.seed = v;
        }
        if let Some(v) = args.substeps {
            self.substeps = v;
        }
        if let Some(v) = args.workers {
            self.workers = Some(v);
        }
        if let Some(v) = &args.out {
            self.out = Some(v.clone());
        }
        if let Some(v) = args.scaled {
            self.scaled = v;
        }
        if let Some(v) = args.include_shift {
            self.include_shift = v.as_bool();
        }
        if let Some(v) = args.deterministic_reduction {
            self.deterministic_reduction = v.as_bool();
        }
    }

    /// Check ranges and build the model parameters.
    pub fn validate(&self) -> Result<JCParams, CliError> {
        let p = JCParams::new(self.gamma0, self.lambda, self.delta)
            .map_err(|e| CliError::usage(e.to_string()))?;
        if self.points < 2 {
            return Err(CliError::usage(format!(
                "points must be at least 2 (got {})",
                self.points
            )));
        }
        if !(self.tmax > 0.0) || !self.tmax.is_finite() {
            return Err(CliError::usage(format!(
                "tmax must be positive and finite (got {})",
                self.tmax
            )));
        }
        if self.ntraj < 1 {
            return Err(CliError::usage("ntraj must be at least 1"));
        }
        if self.substeps < 1 {
            return Err(CliError::usage("substeps must be at least 1"));
        }
        if self.workers == Some(0) {
            return Err(CliError::usage("workers must be at least 1"));
        }
        Ok(p)
    }

    /// Uniform time grid [0, tmax] with `points` entries.
    pub fn grid(&self) -> Vec<f64> {
        let n = self.points;
        (0..n).map(|k| self.tmax * k as f64 / (n - 1) as f64).collect()
    }

    /// Multiplier applied to output times (γ₀ when scaled: t ↦ γ₀t).
    pub fn time_scale(&self) -> f64 {
        if self.scaled {
            self.gamma0
        } else {
            1.0
        }
    }

    /// Multiplier applied to output rates (1/γ₀ when scaled: γ ↦ γ/γ₀).
    pub fn rate_scale(&self) -> f64 {
        if self.scaled {
            1.0 / self.gamma0
        } else {
            1.0
        }
    }
}

/// Resolve the layered configuration: defaults → `--preset` → config file
/// (its own `preset=` line first, then its other keys) → explicit flags.
pub fn resolve(args: &RunArgs) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(p) = args.preset {
        cfg.apply_preset(p);
    }
    if let Some(path) = &args.config {
        apply_config_file(&mut cfg, path)?;
    }
    cfg.apply_flags(args);
    Ok(cfg)
}

fn parse_value<T: std::str::FromStr>(
    key: &str,
    value: &str,
    line: usize,
) -> Result<T, CliError> {
    value.parse().map_err(|_| {
        CliError::usage(format!(
            "config line {line}: invalid value for {key}: {value:?}"
        ))
    })
}

fn parse_on_off(key: &str, value: &str, line: usize) -> Result<bool, CliError> {
    match value {
        "on" => Ok(true),
        "off" => Ok(false),
        _ => Err(CliError::usage(format!(
            "config line {line}: {key} must be on or off (got {value:?})"
        ))),
    }
}

fn apply_config_file(cfg: &mut RunConfig, path: &Path) -> Result<(), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::usage(format!("cannot read config file {}: {e}", path.display()))
    })?;

    // A preset named in the file is a whole-bundle default for the file's
    // other keys, so apply it first regardless of line order.
    let mut keyed: Vec<(usize, String, String)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let stripped = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if stripped.is_empty() {
            continue;
        }
        let Some((key, value)) = stripped.split_once('=') else {
            return Err(CliError::usage(format!(
                "config line {line}: expected key=value, got {stripped:?}"
            )));
        };
        keyed.push((line, key.trim().to_string(), value.trim().to_string()));
    }

    for (line, key, value) in &keyed {
        if key == "preset" {
            let preset = match value.as_str() {
                "fig1" => Preset::Fig1,
                "fig2" => Preset::Fig2,
                "fig3" => Preset::Fig3,
                "fig4" => Preset::Fig4,
                _ => {
                    return Err(CliError::usage(format!(
                        "config line {line}: unknown preset {value:?}"
                    )))
                }
            };
            cfg.apply_preset(preset);
        }
    }

    for (line, key, value) in &keyed {
        let line = *line;
        match key.as_str() {
            "preset" => {}
            "gamma0" => cfg.gamma0 = parse_value(key, value, line)?,
            "lambda" => cfg.lambda = parse_value(key, value, line)?,
            "delta" => cfg.delta = parse_value(key, value, line)?,
            "order" => {
                cfg.order = match value.as_str() {
                    "tcl2" => OrderArg::Tcl2,
                    "tcl4" => OrderArg::Tcl4,
                    "exact" => OrderArg::Exact,
                    _ => {
                        return Err(CliError::usage(format!(
                            "config line {line}: order must be tcl2, tcl4, or exact (got {value:?})"
                        )))
                    }
                }
            }
            "mode" => {
                cfg.mode = match value.as_str() {
                    "standard" => ModeArg::Standard,
                    "doubled" => ModeArg::Doubled,
                    "ode" => ModeArg::Ode,
                    "exact-density" => ModeArg::ExactDensity,
                    _ => {
                        return Err(CliError::usage(format!(
                            "config line {line}: mode must be standard, doubled, ode, or exact-density (got {value:?})"
                        )))
                    }
                }
            }
            "tmax" => cfg.tmax = parse_value(key, value, line)?,
            "points" => cfg.points = parse_value(key, value, line)?,
            "ntraj" => cfg.ntraj = parse_value(key, value, line)?,
            "seed" => cfg.seed = parse_value(key, value, line)?,
            "substeps" => cfg.substeps = parse_value(key, value, line)?,
            "workers" => cfg.workers = Some(parse_value(key, value, line)?),
            "out" => cfg.out = Some(PathBuf::from(value)),
            "scaled" => cfg.scaled = parse_value(key, value, line)?,
            "include_shift" => cfg.include_shift = parse_on_off(key, value, line)?,
            "deterministic_reduction" => {
                cfg.deterministic_reduction = parse_on_off(key, value, line)?
            }
            _ => {
                return Err(CliError::usage(format!(
                    "config line {line}: unknown key {key:?}"
                )))
            }
        }
    }
    Ok(())
}
