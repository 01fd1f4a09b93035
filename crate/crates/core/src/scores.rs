//! Logits to choice probabilities, and the two nonconformity scores.
//!
//! * LAC: `1 - p[y]`
//! * APS: total probability mass on labels that are *strictly* more probable
//!   than `y`. The label's own mass is not included and ties contribute
//!   nothing, so the top label always scores exactly zero.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A nonconformity score. Lower means the label conforms better.
pub type NonconformityScore = f64;

/// Unnormalized per-choice model scores.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitVector(Vec<f64>);

impl LogitVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidLogits(format!(
                "need at least 2 choices, got {}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidLogits(format!("non-finite value {v}")));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn num_classes(&self) -> usize {
        self.0.len()
    }
}

/// A probability vector over the answer choices.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceProbabilities(Vec<f64>);

impl ChoiceProbabilities {
    /// Wraps an existing probability vector, checking that it lies on the simplex.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::InvalidLogits(format!(
                "need at least 2 choices, got {}",
                probs.len()
            )));
        }
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidLogits("probability outside [0, 1]".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidLogits(format!(
                "probabilities sum to {total}"
            )));
        }
        Ok(Self(probs))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn num_classes(&self) -> usize {
        self.0.len()
    }

    pub fn argmax(&self) -> usize {
        self.0
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &p)| {
                if p > best.1 {
                    (i, p)
                } else {
                    best
                }
            })
            .0
    }

    fn check_label(&self, label: usize) -> Result<()> {
        if label >= self.0.len() {
            return Err(Error::InvalidLabel {
                label,
                num_classes: self.0.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreKind {
    #[default]
    Lac,
    Aps,
}

impl ScoreKind {
    pub fn score(self, probs: &ChoiceProbabilities, label: usize) -> Result<NonconformityScore> {
        match self {
            ScoreKind::Lac => lac_score(probs, label),
            ScoreKind::Aps => aps_score(probs, label),
        }
    }

    /// Scores every label of `probs` at once.
    pub fn score_all(self, probs: &ChoiceProbabilities) -> Vec<NonconformityScore> {
        (0..probs.num_classes())
            .map(|y| self.score(probs, y).expect("label in range"))
            .collect()
    }
}

impl fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScoreKind::Lac => "lac",
            ScoreKind::Aps => "aps",
        })
    }
}

impl FromStr for ScoreKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lac" => Ok(ScoreKind::Lac),
            "aps" => Ok(ScoreKind::Aps),
            other => Err(Error::InvalidConfig(format!("unknown score kind '{other}'"))),
        }
    }
}

/// Max-subtracted softmax.
pub fn softmax(logits: &LogitVector) -> ChoiceProbabilities {
    let values = logits.as_slice();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    ChoiceProbabilities(exps.into_iter().map(|e| e / total).collect())
}

/// Softmax straight from a raw slice, validating it first.
pub fn softmax_slice(logits: &[f64]) -> Result<ChoiceProbabilities> {
    Ok(softmax(&LogitVector::new(logits.to_vec())?))
}

pub fn lac_score(probs: &ChoiceProbabilities, label: usize) -> Result<NonconformityScore> {
    probs.check_label(label)?;
    Ok(1.0 - probs.0[label])
}

pub fn aps_score(probs: &ChoiceProbabilities, label: usize) -> Result<NonconformityScore> {
    probs.check_label(label)?;
    let own = probs.0[label];
    Ok(probs.0.iter().filter(|&&p| p > own).sum())
}

/// Softmax plus score for every row. Rows and labels must line up.
pub fn score_batch(
    logit_rows: &[LogitVector],
    labels: &[usize],
    kind: ScoreKind,
) -> Result<Vec<NonconformityScore>> {
    if logit_rows.len() != labels.len() {
        return Err(Error::ShapeError(format!(
            "{} logit rows but {} labels",
            logit_rows.len(),
            labels.len()
        )));
    }
    logit_rows
        .iter()
        .zip(labels)
        .map(|(row, &y)| kind.score(&softmax(row), y))
        .collect()
}
