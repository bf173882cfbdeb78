//! Flags shared by every subcommand, and the optional JSON config file that
//! supplies their defaults.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use serde::Deserialize;

use slonn_core::bench::ArrivalProcess;
use slonn_core::confidence::KGrid;

use crate::UsageError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Full,
    Fixed,
    Random,
    Aclo,
    Lcao,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatArg {
    Median,
    P95,
}

/// Options every subcommand understands. Anything left unset falls back to
/// the `--config` file, then to the documented default.
#[derive(Args, Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Opts {
    /// JSON file with defaults for any of these options (keys are the long
    /// flag names with `-` replaced by `_`).
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// Model file (.slnn).
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,

    /// Labeled dataset (.slds).
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,

    /// Activator file (.slac).
    #[arg(long, global = true)]
    pub activator: Option<PathBuf>,

    /// Calibration curve CSV; defaults to calibration.csv next to the activator.
    #[arg(long, global = true)]
    pub calibration: Option<PathBuf>,

    /// Latency profile CSV.
    #[arg(long, global = true)]
    pub profile: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Hash bits per table [default: 6].
    #[arg(long = "K", global = true)]
    #[serde(rename = "K")]
    pub hash_bits: Option<usize>,

    /// Hash tables per layer [default: 4].
    #[arg(long = "L", global = true)]
    #[serde(rename = "L")]
    pub tables: Option<usize>,

    /// Comma-separated k percentages [default: 0.5,1,2,5,10,20,35,50,75,100].
    #[arg(long, global = true)]
    pub k_grid: Option<String>,

    /// Seed for every random choice [default: 0].
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Inference mode [default: full].
    #[arg(long, global = true, value_enum)]
    pub mode: Option<ModeArg>,

    /// k percentage for the fixed and random modes.
    #[arg(long, global = true)]
    pub k: Option<f64>,

    /// Accuracy target in (0, 1] for ACLO.
    #[arg(long, global = true)]
    pub accuracy_target: Option<f64>,

    /// Latency target in microseconds for LCAO.
    #[arg(long, global = true)]
    pub latency_target_us: Option<f64>,

    /// Co-location scenario in effect: isolated or colo<N> [default: isolated].
    #[arg(long, global = true)]
    pub scenario: Option<String>,

    /// Profile statistic LCAO compares against the budget [default: p95].
    #[arg(long, global = true, value_enum)]
    pub stat: Option<StatArg>,

    /// closed:N, poisson:RATE[:SEED] or burst:BASE:BURST:PERIOD_MS:DUTY[:SEED]
    /// [default: closed:1].
    #[arg(long, global = true)]
    pub arrival: Option<String>,

    /// Number of queries or samples.
    #[arg(long, global = true)]
    pub n: Option<usize>,

    /// Run length in seconds, for duration-bounded benches.
    #[arg(long, global = true)]
    pub duration_s: Option<f64>,
}

macro_rules! fill {
    ($dst:ident, $src:ident, $($f:ident),*) => {
        $( if $dst.$f.is_none() { $dst.$f = $src.$f; } )*
    };
}

impl Opts {
    /// Fills unset options from the `--config` file, if one was given.
    pub fn resolve(mut self) -> Result<Self> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let text = fs::read_to_string(&path).with_context(|| format!("reading config {}", path.display()))?;
        let file: Opts = serde_json::from_str(&text)
            .map_err(|e| UsageError(format!("config {}: {e}", path.display())))?;
        fill!(
            self, file, model, data, activator, calibration, profile, out, hash_bits, tables, k_grid,
            seed, mode, k, accuracy_target, latency_target_us, scenario, stat, arrival, n, duration_s
        );
        Ok(self)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn hash_bits(&self) -> usize {
        self.hash_bits.unwrap_or(6)
    }

    pub fn tables(&self) -> usize {
        self.tables.unwrap_or(4)
    }

    pub fn scenario(&self) -> String {
        self.scenario.clone().unwrap_or_else(|| "isolated".into())
    }

    pub fn grid(&self) -> Result<KGrid> {
        match &self.k_grid {
            None => Ok(KGrid::default()),
            Some(s) => {
                let values = parse_list(s, "--k-grid")?;
                KGrid::new(values).map_err(|e| UsageError(format!("--k-grid: {e}")).into())
            }
        }
    }

    pub fn arrival(&self) -> Result<ArrivalProcess> {
        match &self.arrival {
            None => Ok(ArrivalProcess::ClosedLoop { concurrency: 1 }),
            Some(s) => s.parse().map_err(|e| UsageError(format!("--arrival: {e}")).into()),
        }
    }

    /// The calibration curve path: explicit, or beside the activator.
    pub fn calibration_path(&self) -> Option<PathBuf> {
        self.calibration.clone().or_else(|| {
            self.activator
                .as_ref()
                .map(|a| a.with_file_name("calibration.csv"))
        })
    }

    /// Output directory, created on demand.
    pub fn out_dir(&self) -> Result<PathBuf> {
        let dir = self.out.clone().unwrap_or_else(|| PathBuf::from("."));
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(dir)
    }
}

/// Comma-separated numbers.
pub fn parse_list(s: &str, flag: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| UsageError(format!("{flag}: {p:?} is not a number")).into())
        })
        .collect()
}

pub fn display(p: &Path) -> String {
    p.display().to_string()
}
