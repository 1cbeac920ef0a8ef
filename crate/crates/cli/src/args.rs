//! Command-line arguments. Each subcommand can also read its options from a
//! JSON file (`--config`) whose keys are the flag names; flags win.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "clv", version, about = "Survival-based customer lifetime value")]
pub struct Cli {
    /// Worker threads for parallel stages (1 runs serially).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the baseline hazard by tenure from a calibration snapshot.
    Baseline(BaselineArgs),
    /// Project ERT and CLV for every customer in a scoring file.
    Score(ScoreArgs),
    /// Emit the baseline and scaled hazard curves for one customer.
    Curve(CurveArgs),
    /// Fit the proportional-odds covariate model.
    FitOdds(FitOddsArgs),
    /// Generate a synthetic cohort with known ground truth.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SmoothingArg {
    None,
    Jeffreys,
}

impl From<SmoothingArg> for clv_core::Smoothing {
    fn from(s: SmoothingArg) -> Self {
        match s {
            SmoothingArg::None => clv_core::Smoothing::None,
            SmoothingArg::Jeffreys => clv_core::Smoothing::Jeffreys,
        }
    }
}

/// Fill unset flags from the config file; boolean switches are or-ed.
macro_rules! merge_options {
    ($ty:ident { $($opt:ident),* $(,)? } switches { $($flag:ident),* $(,)? }) => {
        impl $ty {
            fn merge(self, file: $ty) -> $ty {
                $ty {
                    config: self.config,
                    $($opt: self.$opt.or(file.$opt),)*
                    $($flag: self.$flag || file.$flag,)*
                }
            }

            /// Flags merged over the `--config` file, if one was given.
            pub fn resolve(self) -> Result<$ty, CliError> {
                match &self.config {
                    Some(path) => {
                        let file: $ty = read_config(path)?;
                        Ok(self.merge(file))
                    }
                    None => Ok(self),
                }
            }
        }
    };
}

fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct BaselineArgs {
    /// JSON file with defaults for any of these flags.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    /// Output JSON; competing mode writes `<stem>_v` and `<stem>_inv` files.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub smoothing: Option<SmoothingArg>,
    /// First tenure of the flat tail.
    #[arg(long, conflicts_with = "auto_tail")]
    pub tail_start: Option<usize>,
    /// Detect the tail start from the data (the default).
    #[arg(long)]
    #[serde(default)]
    pub auto_tail: bool,
    /// Pool neighbouring tenures until this many events are covered.
    #[arg(long)]
    pub min_events: Option<u64>,
    /// Calibration file carries a cause column (V or I).
    #[arg(long)]
    #[serde(default)]
    pub competing: bool,
}

merge_options!(BaselineArgs { calibration, out, smoothing, tail_start, min_events } switches { auto_tail, competing });

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ScoreArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Baseline JSON (the voluntary baseline in competing mode).
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    #[arg(long)]
    pub scoring: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Stop summing survival once it falls below this value.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Longest projection in months.
    #[arg(long)]
    pub max_horizon: Option<usize>,
    #[arg(long, conflicts_with = "discount_monthly")]
    pub discount_annual: Option<f64>,
    #[arg(long)]
    pub discount_monthly: Option<f64>,
    /// Scoring file carries score_v and score_inv.
    #[arg(long)]
    #[serde(default)]
    pub competing: bool,
    /// Involuntary baseline JSON, required with --competing.
    #[arg(long)]
    pub baseline_inv: Option<PathBuf>,
}

merge_options!(ScoreArgs { baseline, scoring, out, eps, max_horizon, discount_annual, discount_monthly, baseline_inv } switches { competing });

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct CurveArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub t0: Option<usize>,
    /// Number of months to emit, starting at t0.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Output CSV; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

merge_options!(CurveArgs { baseline, alpha, t0, horizon, out } switches {});

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FitOddsArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Calibration CSV with covariate columns after `churned`.
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub ridge: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
}

merge_options!(FitOddsArgs { calibration, baseline, out, ridge, tol, max_iter } switches {});

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct SimulateArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Simulation spec JSON.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Overrides the seed in the simulation file.
    #[arg(long)]
    pub seed: Option<u64>,
}

merge_options!(SimulateArgs { spec, out_dir, seed } switches {});

/// Unwraps a required option or reports it as a usage error.
pub fn required<T>(value: Option<T>, flag: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Usage(format!("missing required option --{flag}")))
}
