use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use iets_core::filters::{FilterParams, DEFAULT_TAU_US};

/// Optional TOML file; every key may also be given as a flag, and flags win.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub input: Option<PathBuf>,
    pub input_format: Option<String>,
    pub tau_minus_us: Option<u64>,
    pub tau_plus_us: Option<u64>,
    pub aggregator: Option<String>,
    pub variants: Option<Vec<String>>,
    pub output_format: Option<String>,
    pub out_dir: Option<PathBuf>,
    pub window_us: Option<u64>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// Threshold flags shared by several commands.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct TauArgs {
    /// Sets both thresholds, in microseconds.
    #[arg(long, value_name = "US")]
    pub tau: Option<u64>,
    /// Quiet period required before an event, in microseconds.
    #[arg(long, value_name = "US")]
    pub tau_minus: Option<u64>,
    /// Maximum gap to the next event, in microseconds.
    #[arg(long, value_name = "US")]
    pub tau_plus: Option<u64>,
}

impl TauArgs {
    pub fn resolve(&self, file: &FileConfig) -> Result<FilterParams> {
        let minus = self.tau_minus.or(self.tau).or(file.tau_minus_us).unwrap_or(DEFAULT_TAU_US);
        let plus = self.tau_plus.or(self.tau).or(file.tau_plus_us).unwrap_or(DEFAULT_TAU_US);
        Ok(FilterParams::new(minus, plus)?)
    }
}

pub fn pick<T: Clone>(flag: Option<T>, file: &Option<T>, default: impl FnOnce() -> T) -> T {
    flag.or_else(|| file.clone()).unwrap_or_else(default)
}

/// Input path from the flag, the config file or `IETS_DATASET_ROOT`.
pub fn input_path(flag: Option<PathBuf>, file: &FileConfig) -> Result<PathBuf> {
    match flag.or_else(|| file.input.clone()) {
        Some(p) => Ok(p),
        None => bail!("no input given; pass a path, set `input` in the config file or set IETS_DATASET_ROOT"),
    }
}
