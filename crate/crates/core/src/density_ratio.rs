//! Embedding-space density ratios from a domain classifier.
//!
//! By Bayes' rule the ratio of test to calibration densities at `z` is the
//! classifier odds `p / (1 - p)` times the class-prior odds `n0 / n1`. Ratios
//! are clipped to `[lo, hi]` so a single confident prediction cannot swamp
//! the weighted score distribution.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifier::{train_domain_classifier, ClassifierConfig, ClassifierModel, ProbabilisticClassifier};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipBounds {
    pub lo: f64,
    pub hi: f64,
}

impl ClipBounds {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "clip bounds need 0 < lo <= hi < inf, got [{lo}, {hi}]"
            )));
        }
        Ok(Self { lo, hi })
    }
}

impl Default for ClipBounds {
    fn default() -> Self {
        Self { lo: 1e-3, hi: 1e3 }
    }
}

/// A trained domain classifier plus the prior odds needed to turn its
/// posterior into a density ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityRatioModel<C = ClassifierModel> {
    pub classifier: C,
    /// `P(W = 0) / P(W = 1)`, estimated as `n0 / n1`.
    pub prior_ratio: f64,
    pub clip: ClipBounds,
}

impl<C: ProbabilisticClassifier> DensityRatioModel<C> {
    pub fn new(classifier: C, prior_ratio: f64, clip: ClipBounds) -> Result<Self> {
        if !(prior_ratio > 0.0 && prior_ratio.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "prior ratio must be positive, got {prior_ratio}"
            )));
        }
        Ok(Self {
            classifier,
            prior_ratio,
            clip,
        })
    }

    pub fn ratio(&self, z: &[f64]) -> Result<f64> {
        density_ratio(self.classifier.predict_prob(z)?, self.prior_ratio, self.clip)
    }
}

impl DensityRatioModel<ClassifierModel> {
    /// Trains the logistic discriminator on both pools and records `n0 / n1`.
    pub fn fit<E: AsRef<[f64]>>(
        cal_embeds: &[E],
        test_embeds: &[E],
        config: &ClassifierConfig,
        clip: ClipBounds,
    ) -> Result<Self> {
        let classifier = train_domain_classifier(cal_embeds, test_embeds, config)?;
        let prior = cal_embeds.len() as f64 / test_embeds.len() as f64;
        Self::new(classifier, prior, clip)
    }
}

/// `clip(p / (1 - p) * prior_ratio, lo, hi)`.
pub fn density_ratio(p: f64, prior_ratio: f64, clip: ClipBounds) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidProbability(p));
    }
    if !(prior_ratio > 0.0 && prior_ratio.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "prior ratio must be positive, got {prior_ratio}"
        )));
    }
    Ok((p / (1.0 - p) * prior_ratio).clamp(clip.lo, clip.hi))
}

/// Reads externally computed calibration weights: one non-negative decimal per line.
///
/// Blank lines are ignored. The count must equal `expected_len`.
pub fn import_external_weights(path: &Path, expected_len: usize) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    })?;
    let mut weights = Vec::with_capacity(expected_len);
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let value: f64 = line.parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message: format!("not a number: '{line}'"),
        })?;
        if !value.is_finite() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                message: format!("non-finite weight '{line}'"),
            });
        }
        if value < 0.0 {
            return Err(Error::NegativeWeight {
                path: path.to_path_buf(),
                line: idx + 1,
                value,
            });
        }
        weights.push(value);
    }
    if weights.len() != expected_len {
        return Err(Error::LengthMismatch {
            path: path.to_path_buf(),
            expected: expected_len,
            found: weights.len(),
        });
    }
    Ok(weights)
}

/// Writes weights in the format [`import_external_weights`] reads.
pub fn export_weights(path: &Path, weights: &[f64]) -> Result<()> {
    let mut out = String::with_capacity(weights.len() * 20);
    for w in weights {
        out.push_str(&w.to_string());
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn odds_arithmetic() {
        let clip = ClipBounds::default();
        assert_eq!(density_ratio(0.5, 1.0, clip).unwrap(), 1.0);
        assert!((density_ratio(0.8, 1.0, clip).unwrap() - 4.0).abs() < 1e-12);
        assert!((density_ratio(0.8, 0.5, clip).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn ratio_is_clipped() {
        let clip = ClipBounds::new(0.1, 10.0).unwrap();
        assert_eq!(density_ratio(0.999, 1.0, clip).unwrap(), 10.0);
        assert_eq!(density_ratio(0.001, 1.0, clip).unwrap(), 0.1);
    }

    #[test]
    fn rejects_out_of_range_probability() {
        let clip = ClipBounds::default();
        for p in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(density_ratio(p, 1.0, clip), Err(Error::InvalidProbability(_))));
        }
        assert!(ClipBounds::new(0.0, 1.0).is_err());
        assert!(ClipBounds::new(2.0, 1.0).is_err());
    }

    #[test]
    fn strictly_increasing_in_probability() {
        let wide = ClipBounds::new(1e-300, 1e300).unwrap();
        let mut prev = 0.0;
        for i in 1..1000 {
            let r = density_ratio(i as f64 / 1000.0, 0.7, wide).unwrap();
            assert!(r > prev);
            prev = r;
        }
    }

    #[test]
    fn zero_classifier_gives_prior_ratio() {
        let model = DensityRatioModel::new(ClassifierModel::zero(2), 0.25, ClipBounds::default()).unwrap();
        assert_eq!(model.ratio(&[3.0, -1.0]).unwrap(), 0.25);
    }

    #[test]
    fn external_weights_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.txt");
        export_weights(&path, &[1.0; 5]).unwrap();
        assert_eq!(import_external_weights(&path, 5).unwrap(), vec![1.0; 5]);
        let odd = [0.1, 2.5e-7, 3.0, 123456.789];
        export_weights(&path, &odd).unwrap();
        assert_eq!(import_external_weights(&path, 4).unwrap(), odd.to_vec());
    }

    #[test]
    fn external_weights_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            import_external_weights(&dir.path().join("missing.txt"), 1),
            Err(Error::Parse { .. })
        ));

        let path = dir.path().join("w.txt");
        let mut f = fs::File::create(&path).unwrap();
        writeln!(f, "1.0\n-0.5\n2.0").unwrap();
        assert!(matches!(
            import_external_weights(&path, 3),
            Err(Error::NegativeWeight { line: 2, .. })
        ));

        fs::write(&path, "1.0\n2.0\n").unwrap();
        assert!(matches!(
            import_external_weights(&path, 3),
            Err(Error::LengthMismatch { expected: 3, found: 2, .. })
        ));

        fs::write(&path, "1.0\nabc\n").unwrap();
        assert!(matches!(
            import_external_weights(&path, 2),
            Err(Error::Parse { line: 2, .. })
        ));
    }
}
