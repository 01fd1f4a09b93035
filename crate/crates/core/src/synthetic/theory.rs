//! Coverage-bound diagnostics.
//!
//! With normalized calibration masses `m_i = w_i / (sum w + lambda)` and
//! `+inf` mass `m_inf = lambda / (sum w + lambda)`, the coverage of a
//! domain-shift calibration with `lambda >= max w_i` lies in
//!
//! ```text
//! [1 - alpha - 2 sum_i m_i TV_i,  1 - alpha + m_inf + 2 sum_i m_i TV_i)
//! ```
//!
//! where `TV_i` is the total-variation distance between the score laws of
//! calibration point `i` and the test point. The bounds are stated with
//! essential suprema over the data; here the masses are the realized ones,
//! and [`GapEnvelope`] reports the mean and max across replications.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scores::{softmax_slice, ScoreKind};
use crate::synthetic::ShiftSpec;

/// Error function.
pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

fn normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let u = (x - mean) / sd;
    (-0.5 * u * u).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
}

/// Total variation between `N(mean1, sigma^2)` and `N(mean2, sigma^2)`:
/// `2 Phi(|mean1 - mean2| / (2 sigma)) - 1`.
pub fn tv_univariate_gaussian(mean1: f64, mean2: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidSpec(format!("sigma must be positive, got {sigma}")));
    }
    let gap = (mean1 - mean2).abs() / (2.0 * sigma);
    Ok(erf(gap / std::f64::consts::SQRT_2))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoryGapReport {
    /// `2 sum_i m_i TV_i`.
    pub lower_gap: f64,
    /// `lambda / (sum w + lambda)`.
    pub upper_slack: f64,
    pub per_i_masses: Vec<f64>,
}

impl TheoryGapReport {
    pub fn lower_bound(&self, alpha: f64) -> f64 {
        1.0 - alpha - self.lower_gap
    }

    pub fn upper_bound(&self, alpha: f64) -> f64 {
        1.0 - alpha + self.upper_slack + self.lower_gap
    }
}

pub fn theory_gap(weights: &[f64], lambda: f64, tv_per_i: &[f64]) -> Result<TheoryGapReport> {
    if weights.len() != tv_per_i.len() {
        return Err(Error::ShapeError(format!(
            "{} weights but {} TV terms",
            weights.len(),
            tv_per_i.len()
        )));
    }
    if let Some(tv) = tv_per_i.iter().find(|tv| !(0.0..=1.0).contains(*tv)) {
        return Err(Error::InvalidTv(*tv));
    }
    if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) || !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidWeight("weights and lambda must be finite and >= 0".into()));
    }
    let denom = weights.iter().sum::<f64>() + lambda;
    if denom <= 0.0 {
        return Err(Error::DegenerateDistribution);
    }
    let per_i_masses: Vec<f64> = weights.iter().map(|w| w / denom).collect();
    let lower_gap = 2.0 * per_i_masses.iter().zip(tv_per_i).map(|(m, tv)| m * tv).sum::<f64>();
    Ok(TheoryGapReport {
        lower_gap,
        upper_slack: lambda / denom,
        per_i_masses,
    })
}

/// Mean and max of the diagnostic terms over replications.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapEnvelope {
    pub replications: usize,
    pub mean_lower_gap: f64,
    pub max_lower_gap: f64,
    pub mean_upper_slack: f64,
    pub max_upper_slack: f64,
}

pub fn summarize_gaps(reports: &[TheoryGapReport]) -> GapEnvelope {
    let n = reports.len().max(1) as f64;
    GapEnvelope {
        replications: reports.len(),
        mean_lower_gap: reports.iter().map(|r| r.lower_gap).sum::<f64>() / n,
        max_lower_gap: reports.iter().map(|r| r.lower_gap).fold(0.0, f64::max),
        mean_upper_slack: reports.iter().map(|r| r.upper_slack).sum::<f64>() / n,
        max_upper_slack: reports.iter().map(|r| r.upper_slack).fold(0.0, f64::max),
    }
}

/// Total variation between the calibration and test laws of the score
/// `S = score(Z, Y)` under a Gaussian shift spec.
///
/// The label model only sees `t = <w, z>`, which is normal in both domains,
/// so the score laws are integrated over a uniform `t` grid spanning ten
/// standard deviations past either mean. Score mass is accumulated into
/// `bins` equal-width bins on `[0, 1]` and the TV of the binned laws is returned.
pub fn score_tv_quadrature(spec: &ShiftSpec, kind: ScoreKind, grid: usize, bins: usize) -> Result<f64> {
    spec.validate()?;
    if grid < 2 || bins == 0 {
        return Err(Error::InvalidConfig("grid needs >= 2 points and >= 1 bin".into()));
    }
    let w = &spec.label_model.weight_vector;
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    let sd = spec.shared_stddev * norm;
    let m_cal: f64 = w.iter().zip(&spec.cal_mean).map(|(a, b)| a * b).sum();
    let m_test: f64 = w.iter().zip(&spec.test_mean).map(|(a, b)| a * b).sum();
    if sd == 0.0 {
        // t is deterministic in both domains
        return Ok(if m_cal == m_test { 0.0 } else { score_point_tv(spec, kind, m_cal, m_test, bins)? });
    }

    let lo = m_cal.min(m_test) - 10.0 * sd;
    let hi = m_cal.max(m_test) + 10.0 * sd;
    let dt = (hi - lo) / grid as f64;
    let mut cal_bins = vec![0.0; bins];
    let mut test_bins = vec![0.0; bins];
    for i in 0..grid {
        let t = lo + (i as f64 + 0.5) * dt;
        let wc = normal_pdf(t, m_cal, sd) * dt;
        let wt = normal_pdf(t, m_test, sd) * dt;
        let probs = softmax_slice(&spec.label_model.logits_for_projection(t))?;
        for (y, s) in kind.score_all(&probs).into_iter().enumerate() {
            let b = bin_index(s, bins);
            let py = probs.as_slice()[y];
            cal_bins[b] += wc * py;
            test_bins[b] += wt * py;
        }
    }
    Ok(0.5 * cal_bins.iter().zip(&test_bins).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

fn bin_index(score: f64, bins: usize) -> usize {
    ((score.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1)
}

fn score_point_tv(spec: &ShiftSpec, kind: ScoreKind, t_cal: f64, t_test: f64, bins: usize) -> Result<f64> {
    let mut cal_bins = vec![0.0; bins];
    let mut test_bins = vec![0.0; bins];
    for (t, target) in [(t_cal, &mut cal_bins), (t_test, &mut test_bins)] {
        let probs = softmax_slice(&spec.label_model.logits_for_projection(t))?;
        for (y, s) in kind.score_all(&probs).into_iter().enumerate() {
            target[bin_index(s, bins)] += probs.as_slice()[y];
        }
    }
    Ok(0.5 * cal_bins.iter().zip(&test_bins).map(|(a, b)| (a - b).abs()).sum::<f64>())
}
