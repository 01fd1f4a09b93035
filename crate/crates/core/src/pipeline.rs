//! Domain-shift-aware calibration end to end.
//!
//! 1. embeddings arrive precomputed in the sample files;
//! 2. a domain classifier separates calibration (`W = 0`) from test (`W = 1`) prompts;
//! 3. each calibration point gets weight `w_i = r(z_i)` and the policy picks `lambda`;
//! 4. the scores form `sum_i w_i/(W + lambda) delta_{S_i} + lambda/(W + lambda) delta_inf`
//!    with `W = sum_j w_j`;
//! 5. a label is in the set when its score is at most the `1 - alpha` quantile.
//!
//! Step 4 depends only on calibration data, so one [`DscpCalibration`] serves
//! every prompt of the test domain.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::classifier::{ClassifierConfig, ProbabilisticClassifier};
use crate::conformal::{
    build_distribution, check_alpha, prediction_set, threshold_at, ExtendedScore, PredictionSet,
    Threshold, WeightedScoreDistribution,
};
use crate::density_ratio::{ClipBounds, DensityRatioModel};
use crate::error::{Error, Result};
use crate::scores::{softmax_slice, NonconformityScore, ScoreKind};

/// How the mass on `+inf` is chosen from the calibration weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", content = "value", rename_all = "snake_case")]
pub enum LambdaPolicy {
    Fixed(f64),
    /// `max_i w_i`, the regime the coverage bounds assume.
    MaxWeight,
    /// Empirical `q`-quantile of the weights.
    WeightQuantile(f64),
}

impl Default for LambdaPolicy {
    fn default() -> Self {
        LambdaPolicy::Fixed(1.0)
    }
}

impl LambdaPolicy {
    pub fn validate(self) -> Result<Self> {
        match self {
            LambdaPolicy::Fixed(v) if !(v >= 0.0 && v.is_finite()) => Err(Error::InvalidConfig(
                format!("fixed lambda must be a finite value >= 0, got {v}"),
            )),
            LambdaPolicy::WeightQuantile(q) if !(q > 0.0 && q <= 1.0) => Err(Error::InvalidConfig(
                format!("weight quantile must lie in (0, 1], got {q}"),
            )),
            other => Ok(other),
        }
    }
}

impl fmt::Display for LambdaPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LambdaPolicy::Fixed(v) => write!(f, "fixed:{v}"),
            LambdaPolicy::MaxWeight => f.write_str("max"),
            LambdaPolicy::WeightQuantile(q) => write!(f, "quantile:{q}"),
        }
    }
}

/// Parses `max`, `quantile:<q>`, `fixed:<v>` or a bare number.
impl FromStr for LambdaPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidConfig(format!("cannot parse lambda policy '{s}'"));
        let policy = if s.eq_ignore_ascii_case("max") {
            LambdaPolicy::MaxWeight
        } else if let Some(q) = s.strip_prefix("quantile:") {
            LambdaPolicy::WeightQuantile(q.parse().map_err(|_| bad())?)
        } else if let Some(v) = s.strip_prefix("fixed:") {
            LambdaPolicy::Fixed(v.parse().map_err(|_| bad())?)
        } else {
            LambdaPolicy::Fixed(s.parse().map_err(|_| bad())?)
        };
        policy.validate()
    }
}

/// Free-form identifiers recorded alongside a calibration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default)]
    pub calibration_data: String,
    #[serde(default)]
    pub test_data: String,
    /// Where the weights came from: `classifier`, `uniform`, `external:<path>`, ...
    #[serde(default)]
    pub weights_source: String,
    #[serde(default)]
    pub model: String,
}

/// Frozen calibration: everything needed to build prediction sets later.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DscpCalibration {
    pub alpha: f64,
    pub lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_policy: Option<LambdaPolicy>,
    pub score_kind: ScoreKind,
    pub threshold: ExtendedScore,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_classes: Option<usize>,
    pub weights: Vec<f64>,
    #[serde(default)]
    pub provenance: Provenance,
}

impl DscpCalibration {
    pub fn threshold(&self) -> Threshold {
        Threshold {
            q: self.threshold,
            level: 1.0 - self.alpha,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut json = serde_json::to_string_pretty(self).expect("calibration serializes");
        json.push('\n');
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cal: DscpCalibration = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        cal.validate().map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: e.to_string(),
        })?;
        Ok(cal)
    }

    fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!("lambda {} is invalid", self.lambda)));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidWeight("artifact holds a negative or non-finite weight".into()));
        }
        Ok(())
    }
}

/// `w_i = r(z_i)` for every calibration embedding.
pub fn compute_weights<C: ProbabilisticClassifier, E: AsRef<[f64]>>(
    model: &DensityRatioModel<C>,
    cal_embeds: &[E],
) -> Result<Vec<f64>> {
    cal_embeds.iter().map(|z| model.ratio(z.as_ref())).collect()
}

pub fn resolve_lambda(policy: LambdaPolicy, weights: &[f64]) -> Result<f64> {
    let policy = policy.validate()?;
    if let LambdaPolicy::Fixed(v) = policy {
        return Ok(v);
    }
    if weights.is_empty() {
        return Err(Error::EmptyCalibration);
    }
    match policy {
        LambdaPolicy::MaxWeight => Ok(weights.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
        LambdaPolicy::WeightQuantile(q) => {
            let mut sorted = weights.to_vec();
            sorted.sort_by(f64::total_cmp);
            // smallest weight whose empirical CDF reaches q
            let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
            Ok(sorted[rank - 1])
        }
        LambdaPolicy::Fixed(_) => unreachable!(),
    }
}

/// The score distribution with `lambda` on `+inf`.
pub fn calibration_distribution(
    cal_scores: &[NonconformityScore],
    weights: &[f64],
    lambda: f64,
) -> Result<WeightedScoreDistribution> {
    build_distribution(cal_scores, weights, lambda)
}

pub fn calibrate(
    cal_scores: &[NonconformityScore],
    weights: &[f64],
    lambda: f64,
    alpha: f64,
    kind: ScoreKind,
) -> Result<DscpCalibration> {
    check_alpha(alpha)?;
    if cal_scores.is_empty() {
        return Err(Error::EmptyCalibration);
    }
    let dist = calibration_distribution(cal_scores, weights, lambda)?;
    let threshold = threshold_at(&dist, alpha)?;
    Ok(DscpCalibration {
        alpha,
        lambda,
        lambda_policy: None,
        score_kind: kind,
        threshold: threshold.q,
        num_classes: None,
        weights: weights.to_vec(),
        provenance: Provenance::default(),
    })
}

pub fn predict(cal: &DscpCalibration, test_logits: &[f64]) -> Result<PredictionSet> {
    if let Some(k) = cal.num_classes {
        if test_logits.len() != k {
            return Err(Error::ShapeError(format!(
                "calibration expects {k} choices, got {}",
                test_logits.len()
            )));
        }
    }
    let probs = softmax_slice(test_logits)?;
    Ok(prediction_set(&probs, cal.threshold(), cal.score_kind))
}

/// Knobs for a full calibration run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DscpConfig {
    pub alpha: f64,
    pub score_kind: ScoreKind,
    pub lambda_policy: LambdaPolicy,
    pub classifier: ClassifierConfig,
    pub clip: ClipBounds,
}

impl Default for DscpConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            score_kind: ScoreKind::Lac,
            lambda_policy: LambdaPolicy::default(),
            classifier: ClassifierConfig::default(),
            clip: ClipBounds::default(),
        }
    }
}

/// Trains the ratio model on both embedding pools, weights the calibration
/// scores and freezes the threshold.
pub fn fit_and_calibrate<E: AsRef<[f64]>>(
    cal_embeds: &[E],
    cal_scores: &[NonconformityScore],
    test_embeds: &[E],
    config: &DscpConfig,
) -> Result<(DscpCalibration, DensityRatioModel)> {
    if cal_embeds.len() != cal_scores.len() {
        return Err(Error::ShapeError(format!(
            "{} calibration embeddings but {} scores",
            cal_embeds.len(),
            cal_scores.len()
        )));
    }
    let model = DensityRatioModel::fit(cal_embeds, test_embeds, &config.classifier, config.clip)?;
    let weights = compute_weights(&model, cal_embeds)?;
    let mut cal = calibrate_with_policy(cal_scores, &weights, config)?;
    cal.provenance.weights_source = "classifier".into();
    Ok((cal, model))
}

/// Resolves `lambda` from the policy, then calibrates.
pub fn calibrate_with_policy(
    cal_scores: &[NonconformityScore],
    weights: &[f64],
    config: &DscpConfig,
) -> Result<DscpCalibration> {
    let lambda = resolve_lambda(config.lambda_policy, weights)?;
    let mut cal = calibrate(cal_scores, weights, lambda, config.alpha, config.score_kind)?;
    cal.lambda_policy = Some(config.lambda_policy);
    Ok(cal)
}
