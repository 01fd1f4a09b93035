//! Synthetic domains with known ground truth.
//!
//! Embeddings are isotropic Gaussians, `z ~ N(mean, sigma^2 I)`, and labels
//! follow one shared softmax model in every domain, so any shift between
//! domains is a pure covariate shift and the density ratio has a closed form.
//!
//! The label model projects onto `t = <w, z>` and gives class `k` the logit
//! `a_k t / temp` with affinities `a_k` evenly spaced on `[-1, 1]`. Prompts
//! near `t = 0` are ambiguous and prompts with large `|t|` are easy, so moving
//! a domain along `w` changes how hard it is. The generated logits are the
//! label model's own, which makes the "model" perfectly calibrated in every
//! domain.

pub mod theory;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::SampleRecord;
use crate::error::{Error, Result};

pub use theory::{
    erf, normal_cdf, score_tv_quadrature, summarize_gaps, theory_gap, tv_univariate_gaussian,
    GapEnvelope, TheoryGapReport,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelModel {
    #[serde(rename = "K")]
    pub num_classes: usize,
    pub weight_vector: Vec<f64>,
    pub noise_temp: f64,
}

impl LabelModel {
    pub fn affinity(&self, class: usize) -> f64 {
        -1.0 + 2.0 * class as f64 / (self.num_classes - 1) as f64
    }

    pub fn projection(&self, z: &[f64]) -> f64 {
        self.weight_vector.iter().zip(z).map(|(w, v)| w * v).sum()
    }

    pub fn logits_for_projection(&self, t: f64) -> Vec<f64> {
        (0..self.num_classes)
            .map(|k| self.affinity(k) * t / self.noise_temp)
            .collect()
    }

    pub fn logits(&self, z: &[f64]) -> Vec<f64> {
        self.logits_for_projection(self.projection(z))
    }

    /// Class probabilities at `z`.
    pub fn probabilities(&self, z: &[f64]) -> Vec<f64> {
        let logits = self.logits(z);
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / total).collect()
    }

    fn validate(&self, d: usize) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::InvalidSpec("label model needs K >= 2".into()));
        }
        if self.weight_vector.len() != d {
            return Err(Error::InvalidSpec(format!(
                "weight_vector has {} entries, d = {d}",
                self.weight_vector.len()
            )));
        }
        if self.weight_vector.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidSpec("weight_vector must be finite".into()));
        }
        if !(self.noise_temp > 0.0 && self.noise_temp.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "noise_temp must be positive, got {}",
                self.noise_temp
            )));
        }
        Ok(())
    }
}

/// A calibration/test pair of Gaussian domains sharing one label model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSpec {
    pub d: usize,
    pub cal_mean: Vec<f64>,
    pub test_mean: Vec<f64>,
    pub shared_stddev: f64,
    pub label_model: LabelModel,
}

impl ShiftSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::InvalidSpec("d must be >= 1".into()));
        }
        if self.cal_mean.len() != self.d || self.test_mean.len() != self.d {
            return Err(Error::InvalidSpec(format!(
                "means must have d = {} entries",
                self.d
            )));
        }
        if self.cal_mean.iter().chain(&self.test_mean).any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec("means must be finite".into()));
        }
        if !(self.shared_stddev > 0.0 && self.shared_stddev.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "shared_stddev must be positive, got {}",
                self.shared_stddev
            )));
        }
        self.label_model.validate(self.d)
    }

    /// Distance between the two means in units of `shared_stddev`.
    pub fn shift_in_sd(&self) -> f64 {
        squared_distance(&self.cal_mean, &self.test_mean).sqrt() / self.shared_stddev
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub calibration: Vec<SampleRecord>,
    pub test: Vec<SampleRecord>,
}

impl SyntheticDataset {
    pub fn cal_embeddings(&self) -> Vec<&[f64]> {
        self.calibration.iter().map(|r| r.embedding.as_slice()).collect()
    }

    pub fn test_embeddings(&self) -> Vec<&[f64]> {
        self.test.iter().map(|r| r.embedding.as_slice()).collect()
    }
}

/// Calibration and test rows drawn i.i.d. from one law. The means must match.
pub fn gen_exchangeable(n_cal: usize, n_test: usize, spec: &ShiftSpec, seed: u64) -> Result<SyntheticDataset> {
    spec.validate()?;
    if spec.cal_mean != spec.test_mean {
        return Err(Error::InvalidSpec(
            "exchangeable data needs cal_mean == test_mean".into(),
        ));
    }
    gen_covariate_shift(n_cal, n_test, spec, seed)
}

/// Calibration rows around `cal_mean`, test rows around `test_mean`, same label law.
pub fn gen_covariate_shift(n_cal: usize, n_test: usize, spec: &ShiftSpec, seed: u64) -> Result<SyntheticDataset> {
    spec.validate()?;
    if n_cal == 0 || n_test == 0 {
        return Err(Error::InvalidSpec(format!(
            "need at least one row per domain, got n_cal={n_cal} n_test={n_test}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let calibration = sample_domain(&mut rng, n_cal, &spec.cal_mean, spec.shared_stddev, &spec.label_model, "cal");
    let test = sample_domain(&mut rng, n_test, &spec.test_mean, spec.shared_stddev, &spec.label_model, "test");
    Ok(SyntheticDataset { calibration, test })
}

fn sample_domain<R: Rng>(
    rng: &mut R,
    n: usize,
    mean: &[f64],
    sd: f64,
    model: &LabelModel,
    domain: &str,
) -> Vec<SampleRecord> {
    (0..n)
        .map(|i| {
            let embedding: Vec<f64> = mean
                .iter()
                .map(|m| {
                    let e: f64 = StandardNormal.sample(rng);
                    m + sd * e
                })
                .collect();
            let logits = model.logits(&embedding);
            let label = sample_label(rng, &model.probabilities(&embedding));
            SampleRecord {
                id: format!("{domain}-{i:06}"),
                domain: domain.to_string(),
                embedding,
                logits,
                label: Some(label),
                text: None,
            }
        })
        .collect()
}

fn sample_label<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut cumulative = 0.0;
    for (k, p) in probs.iter().enumerate() {
        cumulative += p;
        if u < cumulative {
            return k;
        }
    }
    probs.len() - 1
}

/// Exact Gaussian density ratio `test(z) / cal(z)`.
pub fn oracle_ratio(z: &[f64], spec: &ShiftSpec) -> f64 {
    let to_cal = squared_distance(z, &spec.cal_mean);
    let to_test = squared_distance(z, &spec.test_mean);
    ((to_cal - to_test) / (2.0 * spec.shared_stddev * spec.shared_stddev)).exp()
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub name: String,
    pub mean: Vec<f64>,
}

/// Several Gaussian domains sharing one label model, for pairwise sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSpec {
    pub d: usize,
    pub n_per_domain: usize,
    pub shared_stddev: f64,
    pub label_model: LabelModel,
    pub domains: Vec<DomainSpec>,
}

impl SuiteSpec {
    /// `count` domains whose means sit `spacing` standard deviations apart
    /// along the first axis, starting at `start`.
    pub fn evenly_spaced(
        count: usize,
        start: f64,
        spacing: f64,
        n_per_domain: usize,
        label_model: LabelModel,
    ) -> Self {
        let d = label_model.weight_vector.len();
        let domains = (0..count)
            .map(|i| {
                let mut mean = vec![0.0; d];
                mean[0] = start + spacing * i as f64;
                DomainSpec {
                    name: format!("domain-{i:02}"),
                    mean,
                }
            })
            .collect();
        Self {
            d,
            n_per_domain,
            shared_stddev: 1.0,
            label_model,
            domains,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.domains.is_empty() || self.n_per_domain == 0 {
            return Err(Error::InvalidSpec("suite needs domains and rows".into()));
        }
        let mut names: Vec<&str> = self.domains.iter().map(|d| d.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidSpec("domain names must be unique".into()));
        }
        for domain in &self.domains {
            self.pair(domain, domain).validate()?;
        }
        Ok(())
    }

    /// The two-domain spec for calibrating on `cal` and testing on `test`.
    pub fn pair(&self, cal: &DomainSpec, test: &DomainSpec) -> ShiftSpec {
        ShiftSpec {
            d: self.d,
            cal_mean: cal.mean.clone(),
            test_mean: test.mean.clone(),
            shared_stddev: self.shared_stddev,
            label_model: self.label_model.clone(),
        }
    }
}

/// Samples every domain of the suite. Domain `i` uses its own stream derived
/// from `(seed, i)`, so adding a domain does not perturb the others.
pub fn gen_domain_suite(suite: &SuiteSpec, seed: u64) -> Result<Vec<Vec<SampleRecord>>> {
    suite.validate()?;
    Ok(suite
        .domains
        .iter()
        .enumerate()
        .map(|(i, domain)| {
            let mut rng = ChaCha8Rng::seed_from_u64(replication_seed(seed, i as u64));
            sample_domain(
                &mut rng,
                suite.n_per_domain,
                &domain.mean,
                suite.shared_stddev,
                &suite.label_model,
                &domain.name,
            )
        })
        .collect())
}

/// Derives an independent seed for replication `index` (SplitMix64 finalizer).
pub fn replication_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs `f(seed_r)` for every replication in parallel and returns the results
/// in replication order.
pub fn replicate<T, F>(replications: usize, seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync,
{
    (0..replications as u64)
        .into_par_iter()
        .map(|r| f(replication_seed(seed, r)))
        .collect()
}
