//! Run configuration.
//!
//! Every knob resolves in the same order: command-line flag, then (for the
//! seed only) the `DRIFTCAL_SEED` environment variable, then the TOML file
//! passed with `--config`, then the built-in default.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use driftcal::{ClassifierConfig, ClipBounds, DscpConfig, EvalConfig, LambdaPolicy, ScoreKind};
use serde::Deserialize;

use crate::CliError;

pub const DEFAULT_SEED: u64 = 0;

/// Contents of a `--config` file. Every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub alpha: Option<f64>,
    pub score: Option<ScoreKind>,
    pub lambda: Option<String>,
    pub seed: Option<u64>,
    pub parallelism: Option<usize>,
    pub l2: Option<f64>,
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
    pub clip_lo: Option<f64>,
    pub clip_hi: Option<f64>,
    pub holdout_fraction: Option<f64>,
    pub methods: Option<Vec<String>>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}

/// Calibration knobs shared by `calibrate` and `sweep`.
#[derive(Debug, Clone, Default, Args)]
pub struct CalibrationArgs {
    /// TOML file with default values for these options.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Target miscoverage level.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Nonconformity score: lac or aps.
    #[arg(long)]
    pub score: Option<ScoreKind>,
    /// Mass at +inf: a number, `fixed:v`, `max` or `quantile:q`.
    #[arg(long)]
    pub lambda: Option<LambdaPolicy>,
    /// L2 penalty of the domain classifier.
    #[arg(long)]
    pub l2: Option<f64>,
    /// Gradient steps of the domain classifier.
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Gradient-norm stopping tolerance of the domain classifier.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Lower clip on density ratios.
    #[arg(long)]
    pub clip_lo: Option<f64>,
    /// Upper clip on density ratios.
    #[arg(long)]
    pub clip_hi: Option<f64>,
}

impl CalibrationArgs {
    pub fn resolve(&self, file: &FileConfig) -> Result<DscpConfig, CliError> {
        let defaults = DscpConfig::default();
        let alpha = self.alpha.or(file.alpha).unwrap_or(defaults.alpha);
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(CliError::Usage(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        let lambda_policy = match (self.lambda, &file.lambda) {
            (Some(p), _) => p,
            (None, Some(s)) => s.parse().map_err(|e: driftcal::Error| CliError::Usage(e.to_string()))?,
            (None, None) => defaults.lambda_policy,
        };
        let classifier = ClassifierConfig {
            l2: self.l2.or(file.l2).unwrap_or(defaults.classifier.l2),
            max_iters: self.max_iters.or(file.max_iters).unwrap_or(defaults.classifier.max_iters),
            tol: self.tol.or(file.tol).unwrap_or(defaults.classifier.tol),
        };
        if !(classifier.l2 >= 0.0 && classifier.l2.is_finite()) || !(classifier.tol >= 0.0) {
            return Err(CliError::Usage("l2 and tol must be non-negative".into()));
        }
        let clip = ClipBounds::new(
            self.clip_lo.or(file.clip_lo).unwrap_or(defaults.clip.lo),
            self.clip_hi.or(file.clip_hi).unwrap_or(defaults.clip.hi),
        )
        .map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(DscpConfig {
            alpha,
            score_kind: self.score.or(file.score).unwrap_or(defaults.score_kind),
            lambda_policy,
            classifier,
            clip,
        })
    }
}

pub fn eval_config(dscp: &DscpConfig, holdout_fraction: Option<f64>, uniform_weights: bool) -> EvalConfig {
    EvalConfig {
        alpha: dscp.alpha,
        score_kind: dscp.score_kind,
        lambda_policy: dscp.lambda_policy,
        classifier: dscp.classifier,
        clip: dscp.clip,
        holdout_fraction,
        uniform_weights,
    }
}

/// Flag, then `DRIFTCAL_SEED` (folded into the flag by clap), then file, then default.
pub fn resolve_seed(flag_or_env: Option<u64>, file: &FileConfig) -> u64 {
    flag_or_env.or(file.seed).unwrap_or(DEFAULT_SEED)
}
