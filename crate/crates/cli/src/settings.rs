//! Run settings: command-line flag, then config file, then built-in default.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use roguewalk::ensemble::{Outputs, RunConfig, StepsRule, FIXED_STEPS};
use roguewalk::stats::histogram::BinSpec;
use roguewalk::sweep::{log_grid, SweepConfig, DEFAULT_EPSILON, DEFAULT_GRID_POINTS};

pub const OUT_DIR_ENV: &str = "ROGUEWALK_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "out";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Evolve,
    Ensemble,
    Sweep,
}

/// A bad setting, reported with the flag that controls it.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub flag: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(flag: &str, message: impl Into<String>) -> Self {
        Self {
            flag: flag.trim_start_matches("--").replace('_', "-"),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "--{}: {}", self.flag, self.message)
    }
}

impl std::error::Error for ConfigError {}

const FLAGS: [&str; 16] = [
    "sites",
    "steps",
    "disorder",
    "realizations",
    "seed",
    "multiplier",
    "top-fraction",
    "bins",
    "w-grid",
    "sizes",
    "epsilon",
    "levels",
    "out-dir",
    "workers",
    "dump-records",
    "events",
];

/// Core parameter errors that name a flag become config errors.
pub fn from_core(e: roguewalk::Error) -> Result<ConfigError, roguewalk::Error> {
    match e {
        roguewalk::Error::InvalidParameter { name, reason } if FLAGS.contains(&name) => Ok(ConfigError::new(name, reason)),
        other => Err(other),
    }
}

#[derive(Args, Debug, Clone, Default)]
pub struct RunFlags {
    /// TOML or JSON settings file (a manifest.json from an earlier run works too)
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Ring size N
    #[arg(long)]
    pub sites: Option<usize>,
    /// Time steps T (default 10000; 10 N for sweeps)
    #[arg(long)]
    pub steps: Option<usize>,
    /// Disorder width W, phases 2 pi nu with nu in [-W, W]
    #[arg(long, allow_negative_numbers = true)]
    pub disorder: Option<f64>,
    #[arg(long)]
    pub realizations: Option<usize>,
    /// Master seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Event multiplier m, events are P > m p_th
    #[arg(long, allow_negative_numbers = true)]
    pub multiplier: Option<f64>,
    /// Fraction of largest cells averaged into p_th
    #[arg(long, allow_negative_numbers = true)]
    pub top_fraction: Option<f64>,
    /// Histogram bins
    #[arg(long)]
    pub bins: Option<usize>,
    /// Log-spaced disorder grid as lo:hi:points
    #[arg(long, value_name = "LO:HI:POINTS", allow_hyphen_values = true)]
    pub w_grid: Option<String>,
    /// Ring sizes for a finite-size sweep, comma separated
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    /// Event-fraction level that defines W_c
    #[arg(long, allow_negative_numbers = true)]
    pub epsilon: Option<f64>,
    /// Further multipliers counted alongside m, comma separated
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub levels: Option<Vec<f64>>,
    /// Output directory (default $ROGUEWALK_OUT_DIR, else ./out)
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    /// Worker threads; results do not depend on it
    #[arg(long)]
    pub workers: Option<usize>,
    /// Realization indices whose full records are written
    #[arg(long, value_delimiter = ',')]
    pub dump_records: Option<Vec<usize>>,
    /// Write every rogue event of an ensemble
    #[arg(long)]
    pub events: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridValue {
    Text(String),
    List(Vec<f64>),
}

/// Settings file contents. Keys match the long flag names with `_`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileSettings {
    pub sites: Option<usize>,
    pub steps: Option<usize>,
    pub disorder: Option<f64>,
    pub realizations: Option<usize>,
    pub seed: Option<u64>,
    pub multiplier: Option<f64>,
    pub top_fraction: Option<f64>,
    pub bins: Option<usize>,
    pub w_grid: Option<GridValue>,
    pub sizes: Option<Vec<usize>>,
    pub epsilon: Option<f64>,
    pub levels: Option<Vec<f64>>,
    pub out_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    pub dump_records: Option<Vec<usize>>,
    pub events: Option<bool>,
}

impl FileSettings {
    /// Reads TOML (`.toml`) or JSON. A run manifest contributes its `config`.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("config", format!("cannot read {}: {e}", path.display())))?;
        let bad = |e: &dyn fmt::Display| ConfigError::new("config", format!("{}: {e}", path.display()));
        if path.extension().is_some_and(|x| x == "toml") {
            return toml::from_str(&text).map_err(|e| bad(&e));
        }
        let mut value: serde_json::Value = serde_json::from_str(&text).map_err(|e| bad(&e))?;
        if value.get("artifact").is_some() {
            if let Some(inner) = value.get_mut("config") {
                value = inner.take();
            }
        }
        serde_json::from_value(value).map_err(|e| bad(&e))
    }
}

/// Fully resolved settings. Serializes to a valid settings file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub sites: usize,
    /// `None` means 10000 steps, or 10 N for sweeps.
    pub steps: Option<usize>,
    pub disorder: f64,
    pub realizations: usize,
    pub seed: u64,
    pub multiplier: f64,
    pub top_fraction: f64,
    pub bins: usize,
    pub w_grid: Vec<f64>,
    pub sizes: Option<Vec<usize>>,
    pub epsilon: f64,
    pub levels: Vec<f64>,
    pub out_dir: PathBuf,
    pub workers: Option<usize>,
    pub dump_records: Vec<usize>,
    pub events: bool,
}

pub fn parse_grid(text: &str) -> Result<Vec<f64>, ConfigError> {
    let parts: Vec<&str> = text.split(':').collect();
    let usage = || ConfigError::new("w-grid", format!("expected lo:hi:points, got {text:?}"));
    if parts.len() != 3 {
        return Err(usage());
    }
    let lo: f64 = parts[0].trim().parse().map_err(|_| usage())?;
    let hi: f64 = parts[1].trim().parse().map_err(|_| usage())?;
    let points: usize = parts[2].trim().parse().map_err(|_| usage())?;
    log_grid(lo, hi, points).map_err(|e| ConfigError::new("w-grid", core_reason(e)))
}

fn core_reason(e: roguewalk::Error) -> String {
    match e {
        roguewalk::Error::InvalidParameter { reason, .. } => reason,
        other => other.to_string(),
    }
}

impl Settings {
    pub fn resolve(flags: &RunFlags, mode: Mode) -> Result<Self, ConfigError> {
        Self::resolve_with_env(flags, mode, std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
    }

    pub fn resolve_with_env(flags: &RunFlags, mode: Mode, env_out: Option<PathBuf>) -> Result<Self, ConfigError> {
        let file = match &flags.config {
            Some(p) => FileSettings::load(p)?,
            None => FileSettings::default(),
        };
        let w_grid = match (&flags.w_grid, file.w_grid) {
            (Some(text), _) => parse_grid(text)?,
            (None, Some(GridValue::Text(text))) => parse_grid(&text)?,
            (None, Some(GridValue::List(list))) => list,
            (None, None) => log_grid(1e-3, 1.0, DEFAULT_GRID_POINTS).unwrap(),
        };
        let settings = Settings {
            sites: flags.sites.or(file.sites).unwrap_or(100),
            steps: flags.steps.or(file.steps),
            disorder: flags.disorder.or(file.disorder).unwrap_or(0.1),
            realizations: flags
                .realizations
                .or(file.realizations)
                .unwrap_or(if mode == Mode::Evolve { 1 } else { 100 }),
            seed: flags.seed.or(file.seed).unwrap_or(0),
            multiplier: flags.multiplier.or(file.multiplier).unwrap_or(2.0),
            top_fraction: flags.top_fraction.or(file.top_fraction).unwrap_or(1.0 / 3.0),
            bins: flags.bins.or(file.bins).unwrap_or(200),
            w_grid,
            sizes: flags.sizes.clone().or(file.sizes),
            epsilon: flags.epsilon.or(file.epsilon).unwrap_or(DEFAULT_EPSILON),
            levels: flags.levels.clone().or(file.levels).unwrap_or_else(|| vec![2.5, 3.0]),
            out_dir: flags
                .out_dir
                .clone()
                .or(file.out_dir)
                .or(env_out)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR)),
            workers: flags.workers.or(file.workers),
            dump_records: flags.dump_records.clone().or(file.dump_records).unwrap_or_default(),
            events: flags.events || file.events.unwrap_or(false),
        };
        settings.validate(mode)?;
        Ok(settings)
    }

    fn validate(&self, mode: Mode) -> Result<(), ConfigError> {
        if self.sites < 2 {
            return Err(ConfigError::new("sites", format!("expected N >= 2, got {}", self.sites)));
        }
        if self.steps == Some(0) {
            return Err(ConfigError::new("steps", "expected T >= 1, got 0"));
        }
        if !(self.disorder >= 0.0 && self.disorder.is_finite()) {
            return Err(ConfigError::new(
                "disorder",
                format!("expected a finite W >= 0, got {}", self.disorder),
            ));
        }
        if self.realizations < 1 {
            return Err(ConfigError::new("realizations", "expected R >= 1, got 0"));
        }
        if !(self.multiplier >= 1.0 && self.multiplier.is_finite()) {
            return Err(ConfigError::new("multiplier", format!("expected m >= 1, got {}", self.multiplier)));
        }
        if let Some(m) = self.levels.iter().find(|m| !(**m >= 1.0 && m.is_finite())) {
            return Err(ConfigError::new("levels", format!("expected multipliers >= 1, got {m}")));
        }
        if !(self.top_fraction > 0.0 && self.top_fraction < 1.0) {
            return Err(ConfigError::new(
                "top-fraction",
                format!("expected a value in (0, 1), got {}", self.top_fraction),
            ));
        }
        if self.bins < 1 {
            return Err(ConfigError::new("bins", "expected at least 1 bin"));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(ConfigError::new("epsilon", format!("expected a value in (0, 1), got {}", self.epsilon)));
        }
        if self.workers == Some(0) {
            return Err(ConfigError::new("workers", "expected at least 1 worker"));
        }
        if self.w_grid.is_empty() || self.w_grid.windows(2).any(|p| !(p[0] < p[1])) || self.w_grid.iter().any(|w| !(*w >= 0.0)) {
            return Err(ConfigError::new("w-grid", "expected a strictly ascending grid of W >= 0"));
        }
        if let Some(sizes) = &self.sizes {
            if sizes.len() < 3 {
                return Err(ConfigError::new(
                    "sizes",
                    format!("a finite-size sweep needs at least 3 sizes, got {}", sizes.len()),
                ));
            }
            if let Some(n) = sizes.iter().find(|&&n| n < 2) {
                return Err(ConfigError::new("sizes", format!("expected sizes >= 2, got {n}")));
            }
        }
        match mode {
            Mode::Evolve => {
                if self.dump_records.iter().any(|&i| i != 0) {
                    return Err(ConfigError::new("dump-records", "evolve runs a single realization, index 0"));
                }
            }
            Mode::Ensemble => {
                self.run_config(mode).validate().map_err(|e| from_core(e).unwrap_or_else(|e| ConfigError::new("config", e.to_string())))?;
            }
            Mode::Sweep => {}
        }
        Ok(())
    }

    pub fn steps_rule(&self, mode: Mode) -> StepsRule {
        match (self.steps, mode) {
            (Some(t), _) => StepsRule::Fixed(t),
            (None, Mode::Sweep) => StepsRule::TenTimesSites,
            (None, _) => StepsRule::Fixed(FIXED_STEPS),
        }
    }

    pub fn run_config(&self, mode: Mode) -> RunConfig {
        let realizations = if mode == Mode::Evolve { 1 } else { self.realizations };
        let mut cfg = RunConfig::new(self.sites, self.disorder, realizations, self.seed).with_steps(self.steps_rule(mode));
        cfg.multiplier = self.multiplier;
        cfg.extra_multipliers = self.levels.clone();
        cfg.top_fraction = self.top_fraction;
        cfg.outputs = Outputs {
            histogram: mode == Mode::Ensemble,
            events: self.events || mode == Mode::Evolve,
            block_maxima: true,
            record_dump: if mode == Mode::Evolve { vec![0] } else { self.dump_records.clone() },
        };
        if self.bins != roguewalk::ensemble::DEFAULT_BINS {
            let defaults = RunConfig::new(self.sites, 0.0, 1, 0);
            cfg.histogram_bins = Some(with_bins(defaults.raw_bins(), self.bins));
            cfg.scaled_histogram_bins = Some(with_bins(defaults.scaled_bins(), self.bins));
        }
        cfg
    }

    pub fn sweep_config(&self) -> SweepConfig {
        SweepConfig {
            sizes: self.sizes.clone().unwrap_or_else(|| vec![self.sites]),
            w_grid: self.w_grid.clone(),
            realizations: self.realizations,
            steps: self.steps_rule(Mode::Sweep),
            master_seed: self.seed,
            multiplier: self.multiplier,
            top_fraction: self.top_fraction,
            epsilon: self.epsilon,
            wc_levels: std::iter::once(self.multiplier)
                .chain(self.levels.iter().copied().filter(|&m| m != self.multiplier))
                .collect(),
        }
    }
}

fn with_bins(spec: BinSpec, bins: usize) -> BinSpec {
    match spec {
        BinSpec::Uniform { lo, hi, .. } => BinSpec::Uniform { bins, lo, hi },
        other => other,
    }
}
