//! Weighted empirical score distributions and the conformal thresholds built on them.
//!
//! Every conformal variant here reduces to the same object: a finite set of
//! point masses on calibration scores plus one point mass at `+inf`. The
//! variants differ only in how the masses are chosen:
//!
//! | variant          | calibration mass `i`          | mass at `+inf`            |
//! |------------------|-------------------------------|---------------------------|
//! | standard         | `1 / (n + 1)`                 | `1 / (n + 1)`             |
//! | weighted         | `r_i / (sum r + r_test)`      | `r_test / (sum r + r_test)` |
//! | nonexchangeable  | `w_i / (sum w + 1)`           | `1 / (sum w + 1)`         |
//! | domain-shift     | `w_i / (sum w + lambda)`      | `lambda / (sum w + lambda)` |
//!
//! The threshold is the `1 - alpha` quantile of that distribution, and a label
//! enters the prediction set when its score is `<=` the threshold.

use std::cmp::Ordering;
use std::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::scores::{ChoiceProbabilities, NonconformityScore, ScoreKind};

/// Slack allowed when comparing a cumulative mass against the quantile level.
///
/// Masses are stored normalized, so `k` masses of `1/(n+1)` rarely sum to
/// exactly `k/(n+1)` in floating point.
pub const QUANTILE_TOLERANCE: f64 = 1e-12;

/// A score that may be the `+inf` support point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtendedScore {
    Finite(f64),
    Infinity,
}

impl ExtendedScore {
    pub fn is_infinite(self) -> bool {
        matches!(self, ExtendedScore::Infinity)
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtendedScore::Finite(v) => Some(v),
            ExtendedScore::Infinity => None,
        }
    }

    /// `score <= self`, with `+inf` admitting everything.
    pub fn admits(self, score: f64) -> bool {
        match self {
            ExtendedScore::Finite(q) => score <= q,
            ExtendedScore::Infinity => true,
        }
    }
}

impl Eq for ExtendedScore {}

impl Ord for ExtendedScore {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (ExtendedScore::Finite(a), ExtendedScore::Finite(b)) => a.total_cmp(b),
            (ExtendedScore::Finite(_), ExtendedScore::Infinity) => Ordering::Less,
            (ExtendedScore::Infinity, ExtendedScore::Finite(_)) => Ordering::Greater,
            (ExtendedScore::Infinity, ExtendedScore::Infinity) => Ordering::Equal,
        }
    }
}

impl PartialOrd for ExtendedScore {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for ExtendedScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtendedScore::Finite(v) => match f.precision() {
                Some(p) => write!(f, "{v:.p$}"),
                None => write!(f, "{v}"),
            },
            ExtendedScore::Infinity => f.write_str("inf"),
        }
    }
}

impl std::str::FromStr for ExtendedScore {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("+inf") {
            return Ok(ExtendedScore::Infinity);
        }
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(ExtendedScore::Finite(v)),
            _ => Err(Error::InvalidConfig(format!("not a score: '{s}'"))),
        }
    }
}

// Finite scores serialize as plain numbers, infinity as the string "inf".
impl Serialize for ExtendedScore {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ExtendedScore::Finite(v) => serializer.serialize_f64(*v),
            ExtendedScore::Infinity => serializer.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for ExtendedScore {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct ScoreVisitor;

        impl Visitor<'_> for ScoreVisitor {
            type Value = ExtendedScore;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a finite number or \"inf\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Self::Value, E> {
                if v.is_finite() {
                    Ok(ExtendedScore::Finite(v))
                } else {
                    Err(E::custom("non-finite score"))
                }
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Self::Value, E> {
                Ok(ExtendedScore::Finite(v as f64))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Self::Value, E> {
                Ok(ExtendedScore::Finite(v as f64))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Self::Value, E> {
                v.parse().map_err(|_| E::invalid_value(de::Unexpected::Str(v), &self))
            }
        }

        deserializer.deserialize_any(ScoreVisitor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub score: f64,
    pub mass: f64,
}

/// Normalized point masses on finite scores plus one mass at `+inf`.
///
/// Atoms are sorted ascending with equal scores merged; zero-mass atoms are
/// dropped since they are not part of the support.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedScoreDistribution {
    atoms: Vec<Atom>,
    infinity_mass: f64,
}

impl WeightedScoreDistribution {
    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn infinity_mass(&self) -> f64 {
        self.infinity_mass
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).sum::<f64>() + self.infinity_mass
    }
}

/// The quantile used to build prediction sets, with the level it was taken at.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub q: ExtendedScore,
    pub level: f64,
}

impl Threshold {
    pub fn admits(&self, score: f64) -> bool {
        self.q.admits(score)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    /// Ascending label indices.
    pub members: Vec<usize>,
    pub threshold_used: Threshold,
}

impl PredictionSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, label: usize) -> bool {
        self.members.binary_search(&label).is_ok()
    }
}

pub fn build_distribution(
    scores: &[NonconformityScore],
    weights: &[f64],
    infinity_weight: f64,
) -> Result<WeightedScoreDistribution> {
    if scores.len() != weights.len() {
        return Err(Error::ShapeError(format!(
            "{} scores but {} weights",
            scores.len(),
            weights.len()
        )));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::InvalidWeight(format!("non-finite score {s}")));
    }
    for &w in weights.iter().chain(std::iter::once(&infinity_weight)) {
        if !w.is_finite() || w < 0.0 {
            return Err(Error::InvalidWeight(format!(
                "weights must be finite and non-negative, got {w}"
            )));
        }
    }
    let total = weights.iter().sum::<f64>() + infinity_weight;
    if total <= 0.0 {
        return Err(Error::DegenerateDistribution);
    }

    let mut pairs: Vec<(f64, f64)> = scores
        .iter()
        .copied()
        .zip(weights.iter().copied())
        .filter(|&(_, w)| w > 0.0)
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(pairs.len());
    for (s, w) in pairs {
        match merged.last_mut() {
            Some(last) if last.0 == s => last.1 += w,
            _ => merged.push((s, w)),
        }
    }

    Ok(WeightedScoreDistribution {
        atoms: merged
            .into_iter()
            .map(|(score, w)| Atom {
                score,
                mass: w / total,
            })
            .collect(),
        infinity_mass: infinity_weight / total,
    })
}

/// Smallest support point whose cumulative mass reaches `q`.
pub fn quantile(dist: &WeightedScoreDistribution, q: f64) -> Result<ExtendedScore> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidQuantileLevel(q));
    }
    let mut cumulative = 0.0;
    for atom in &dist.atoms {
        cumulative += atom.mass;
        if cumulative >= q - QUANTILE_TOLERANCE {
            return Ok(ExtendedScore::Finite(atom.score));
        }
    }
    match dist.atoms.last() {
        // All the mass is on finite atoms; rounding kept the scan just short of 1.
        Some(last) if dist.infinity_mass == 0.0 => Ok(ExtendedScore::Finite(last.score)),
        _ => Ok(ExtendedScore::Infinity),
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidAlpha(alpha))
    }
}

/// The `1 - alpha` quantile of `dist`, packaged as a threshold.
pub fn threshold_at(dist: &WeightedScoreDistribution, alpha: f64) -> Result<Threshold> {
    check_alpha(alpha)?;
    let level = 1.0 - alpha;
    Ok(Threshold {
        q: quantile(dist, level)?,
        level,
    })
}

/// Labels whose score is at most the threshold.
pub fn prediction_set(
    test_probs: &ChoiceProbabilities,
    threshold: Threshold,
    kind: ScoreKind,
) -> PredictionSet {
    let members = if threshold.q.is_infinite() {
        (0..test_probs.num_classes()).collect()
    } else {
        kind.score_all(test_probs)
            .into_iter()
            .enumerate()
            .filter(|&(_, s)| threshold.admits(s))
            .map(|(y, _)| y)
            .collect()
    };
    PredictionSet {
        members,
        threshold_used: threshold,
    }
}

/// Split conformal: unit mass on each calibration score and on `+inf`.
pub fn standard_cp_threshold(cal_scores: &[NonconformityScore], alpha: f64) -> Result<Threshold> {
    if cal_scores.is_empty() {
        return Err(Error::EmptyCalibration);
    }
    check_alpha(alpha)?;
    let ones = vec![1.0; cal_scores.len()];
    threshold_at(&build_distribution(cal_scores, &ones, 1.0)?, alpha)
}

/// Weighted conformal with the test point's own likelihood ratio on `+inf`.
///
/// Unlike the other variants this threshold changes with every test point.
pub fn weighted_cp_threshold(
    cal_scores: &[NonconformityScore],
    cal_ratios: &[f64],
    test_ratio: f64,
    alpha: f64,
) -> Result<Threshold> {
    check_alpha(alpha)?;
    threshold_at(&build_distribution(cal_scores, cal_ratios, test_ratio)?, alpha)
}

/// Nonexchangeable conformal with fixed weights in `[0, 1]` and unit mass on `+inf`.
pub fn nonexch_cp_threshold(
    cal_scores: &[NonconformityScore],
    fixed_weights: &[f64],
    alpha: f64,
) -> Result<Threshold> {
    check_alpha(alpha)?;
    if let Some(w) = fixed_weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
        return Err(Error::InvalidWeight(format!(
            "nonexchangeable weights must lie in [0, 1], got {w}"
        )));
    }
    threshold_at(&build_distribution(cal_scores, fixed_weights, 1.0)?, alpha)
}
