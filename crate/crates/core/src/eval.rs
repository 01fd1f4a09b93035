//! Cross-domain evaluation: calibrate on one domain, test on another, for
//! every ordered pair of domains and every method.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::ClassifierConfig;
use crate::conformal::{nonexch_cp_threshold, standard_cp_threshold, weighted_cp_threshold, ExtendedScore};
use crate::data::SampleRecord;
use crate::density_ratio::{ClipBounds, DensityRatioModel};
use crate::error::{Error, Result};
use crate::pipeline::{calibrate, compute_weights, resolve_lambda, LambdaPolicy};
use crate::scores::{softmax_slice, ScoreKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Cp,
    Dscp,
    WeightedCp,
    NonexchCp,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Cp, Method::Dscp, Method::WeightedCp, Method::NonexchCp];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Cp => "cp",
            Method::Dscp => "dscp",
            Method::WeightedCp => "weighted_cp",
            Method::NonexchCp => "nonexch_cp",
        }
    }

    fn needs_ratio_model(self) -> bool {
        matches!(self, Method::Dscp | Method::WeightedCp)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "cp" | "standard" => Ok(Method::Cp),
            "dscp" | "ds_cp" => Ok(Method::Dscp),
            "weighted_cp" | "wcp" | "weighted" => Ok(Method::WeightedCp),
            "nonexch_cp" | "nexcp" | "nonexch" => Ok(Method::NonexchCp),
            other => Err(Error::InvalidConfig(format!("unknown method '{other}'"))),
        }
    }
}

/// All labeled samples of one domain.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainDataset {
    pub domain_id: String,
    pub samples: Vec<SampleRecord>,
}

impl DomainDataset {
    pub fn new(domain_id: impl Into<String>, samples: Vec<SampleRecord>) -> Result<Self> {
        let domain_id = domain_id.into();
        let first = samples.first().ok_or_else(|| {
            Error::IncompatibleDatasets(format!("domain '{domain_id}' has no samples"))
        })?;
        let (d, k) = (first.embedding.len(), first.logits.len());
        for s in &samples {
            if s.embedding.len() != d || s.logits.len() != k {
                return Err(Error::IncompatibleDatasets(format!(
                    "domain '{domain_id}': sample '{}' has inconsistent dimensions",
                    s.id
                )));
            }
            match s.label {
                Some(y) if y < k => {}
                _ => {
                    return Err(Error::IncompatibleDatasets(format!(
                        "domain '{domain_id}': sample '{}' lacks a valid label",
                        s.id
                    )))
                }
            }
        }
        Ok(Self { domain_id, samples })
    }

    pub fn dim(&self) -> usize {
        self.samples[0].embedding.len()
    }

    pub fn num_classes(&self) -> usize {
        self.samples[0].logits.len()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Splits records by their `domain` field, ordered by domain id.
pub fn group_by_domain(records: Vec<SampleRecord>) -> Result<Vec<DomainDataset>> {
    let mut groups: BTreeMap<String, Vec<SampleRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.domain.clone()).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(id, samples)| DomainDataset::new(id, samples))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub alpha: f64,
    pub score_kind: ScoreKind,
    pub lambda_policy: LambdaPolicy,
    pub classifier: ClassifierConfig,
    pub clip: ClipBounds,
    /// When set, this leading fraction of each test domain only trains the
    /// domain classifier and the rest is scored. Otherwise the whole test
    /// pool does both.
    pub holdout_fraction: Option<f64>,
    /// Replace estimated ratios with ones (a reduction check against CP).
    pub uniform_weights: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            score_kind: ScoreKind::Lac,
            lambda_policy: LambdaPolicy::default(),
            classifier: ClassifierConfig::default(),
            clip: ClipBounds::default(),
            holdout_fraction: None,
            uniform_weights: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    pub cal_domain: String,
    pub test_domain: String,
    pub method: Method,
    pub coverage: f64,
    pub avg_set_size: f64,
    pub n_test: usize,
    /// The calibration threshold. Weighted CP has one per test point; the
    /// median of those is reported.
    pub threshold: ExtendedScore,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub rows: Vec<PairResult>,
    pub config: EvalConfig,
}

impl SweepReport {
    pub fn methods(&self) -> Vec<Method> {
        let mut m: Vec<Method> = self.rows.iter().map(|r| r.method).collect();
        m.sort();
        m.dedup();
        m
    }

    /// Keeps only rows whose method is listed.
    pub fn filter(&self, methods: &[Method]) -> SweepReport {
        SweepReport {
            rows: self
                .rows
                .iter()
                .filter(|r| methods.contains(&r.method))
                .cloned()
                .collect(),
            config: self.config,
        }
    }
}

/// Per-domain arrays shared by every method.
struct Prepared<'a> {
    cal_embeds: Vec<&'a [f64]>,
    cal_scores: Vec<f64>,
    train_test_embeds: Vec<&'a [f64]>,
    eval_embeds: Vec<&'a [f64]>,
    /// Per test row, the score of every label.
    eval_label_scores: Vec<Vec<f64>>,
    eval_labels: Vec<usize>,
}

fn prepare<'a>(cal: &'a DomainDataset, test: &'a DomainDataset, config: &EvalConfig) -> Result<Prepared<'a>> {
    if cal.dim() != test.dim() || cal.num_classes() != test.num_classes() {
        return Err(Error::IncompatibleDatasets(format!(
            "'{}' is d={} K={}, '{}' is d={} K={}",
            cal.domain_id,
            cal.dim(),
            cal.num_classes(),
            test.domain_id,
            test.dim(),
            test.num_classes()
        )));
    }
    let kind = config.score_kind;
    let cal_scores = cal
        .samples
        .iter()
        .map(|s| kind.score(&softmax_slice(&s.logits)?, s.label.expect("validated")))
        .collect::<Result<Vec<f64>>>()?;

    let split = match config.holdout_fraction {
        None => 0,
        Some(f) if (0.0..1.0).contains(&f) => {
            let k = (f * test.len() as f64).floor() as usize;
            if k == 0 || k >= test.len() {
                return Err(Error::InvalidConfig(format!(
                    "holdout fraction {f} leaves no rows on one side of {} test samples",
                    test.len()
                )));
            }
            k
        }
        Some(f) => return Err(Error::InvalidConfig(format!("holdout fraction {f} outside [0, 1)"))),
    };
    let (train_rows, eval_rows) = if split == 0 {
        (&test.samples[..], &test.samples[..])
    } else {
        test.samples.split_at(split)
    };

    let eval_label_scores = eval_rows
        .iter()
        .map(|s| Ok(kind.score_all(&softmax_slice(&s.logits)?)))
        .collect::<Result<Vec<_>>>()?;

    Ok(Prepared {
        cal_embeds: cal.samples.iter().map(|s| s.embedding.as_slice()).collect(),
        cal_scores,
        train_test_embeds: train_rows.iter().map(|s| s.embedding.as_slice()).collect(),
        eval_embeds: eval_rows.iter().map(|s| s.embedding.as_slice()).collect(),
        eval_label_scores,
        eval_labels: eval_rows.iter().map(|s| s.label.expect("validated")).collect(),
    })
}

/// Runs one method on one ordered pair.
pub fn evaluate_pair(
    cal: &DomainDataset,
    test: &DomainDataset,
    method: Method,
    config: &EvalConfig,
) -> Result<PairResult> {
    Ok(evaluate_pair_methods(cal, test, &[method], config)?.remove(0))
}

/// Runs several methods on one ordered pair, training the domain classifier
/// at most once. Results follow the order of `methods`.
pub fn evaluate_pair_methods(
    cal: &DomainDataset,
    test: &DomainDataset,
    methods: &[Method],
    config: &EvalConfig,
) -> Result<Vec<PairResult>> {
    let prep = prepare(cal, test, config)?;
    let n_cal = prep.cal_scores.len();

    let ratio_model = if !config.uniform_weights && methods.iter().any(|m| m.needs_ratio_model()) {
        Some(DensityRatioModel::fit(
            &prep.cal_embeds,
            &prep.train_test_embeds,
            &config.classifier,
            config.clip,
        )?)
    } else {
        None
    };
    let weights = match &ratio_model {
        Some(model) => compute_weights(model, &prep.cal_embeds)?,
        None => vec![1.0; n_cal],
    };

    methods
        .iter()
        .map(|&method| {
            let (threshold, outcome) = match method {
                Method::Cp => {
                    let t = standard_cp_threshold(&prep.cal_scores, config.alpha)?;
                    (t.q, score_sets(&prep, |_| Ok(t.q))?)
                }
                Method::Dscp => {
                    let lambda = resolve_lambda(config.lambda_policy, &weights)?;
                    let cal = calibrate(&prep.cal_scores, &weights, lambda, config.alpha, config.score_kind)?;
                    (cal.threshold, score_sets(&prep, |_| Ok(cal.threshold))?)
                }
                Method::WeightedCp => {
                    let mut per_point = Vec::with_capacity(prep.eval_embeds.len());
                    let outcome = score_sets(&prep, |i| {
                        let test_ratio = match &ratio_model {
                            Some(model) => model.ratio(prep.eval_embeds[i])?,
                            None => 1.0,
                        };
                        let q = weighted_cp_threshold(&prep.cal_scores, &weights, test_ratio, config.alpha)?.q;
                        per_point.push(q);
                        Ok(q)
                    })?;
                    per_point.sort();
                    (per_point[(per_point.len() - 1) / 2], outcome)
                }
                Method::NonexchCp => {
                    let fixed = if config.uniform_weights {
                        vec![1.0; n_cal]
                    } else {
                        similarity_weights(&prep.cal_embeds, &prep.train_test_embeds)
                    };
                    let t = nonexch_cp_threshold(&prep.cal_scores, &fixed, config.alpha)?;
                    (t.q, score_sets(&prep, |_| Ok(t.q))?)
                }
            };
            let n_test = prep.eval_labels.len();
            Ok(PairResult {
                cal_domain: cal.domain_id.clone(),
                test_domain: test.domain_id.clone(),
                method,
                coverage: outcome.covered as f64 / n_test as f64,
                avg_set_size: outcome.total_size as f64 / n_test as f64,
                n_test,
                threshold,
            })
        })
        .collect()
}

struct SetOutcome {
    covered: usize,
    total_size: usize,
}

fn score_sets<F>(prep: &Prepared<'_>, mut threshold_for: F) -> Result<SetOutcome>
where
    F: FnMut(usize) -> Result<ExtendedScore>,
{
    let mut covered = 0;
    let mut total_size = 0;
    for (i, scores) in prep.eval_label_scores.iter().enumerate() {
        let q = threshold_for(i)?;
        total_size += scores.iter().filter(|&&s| q.admits(s)).count();
        if q.admits(scores[prep.eval_labels[i]]) {
            covered += 1;
        }
    }
    Ok(SetOutcome { covered, total_size })
}

/// Fixed nonexchangeable weights: a Gaussian kernel on the distance to the
/// test-pool centroid, with the median squared distance as bandwidth.
pub fn similarity_weights(cal_embeds: &[&[f64]], test_embeds: &[&[f64]]) -> Vec<f64> {
    let d = cal_embeds.first().map_or(0, |z| z.len());
    let mut centroid = vec![0.0; d];
    for z in test_embeds {
        for (c, v) in centroid.iter_mut().zip(z.iter()) {
            *c += v;
        }
    }
    let n = test_embeds.len().max(1) as f64;
    centroid.iter_mut().for_each(|c| *c /= n);

    let sq: Vec<f64> = cal_embeds
        .iter()
        .map(|z| z.iter().zip(&centroid).map(|(a, b)| (a - b).powi(2)).sum())
        .collect();
    let mut sorted = sq.clone();
    sorted.sort_by(f64::total_cmp);
    let mut bandwidth = sorted.get(sorted.len() / 2).copied().unwrap_or(1.0);
    if bandwidth <= 0.0 {
        bandwidth = 1.0;
    }
    sq.into_iter().map(|s| (-s / (2.0 * bandwidth)).exp()).collect()
}

/// Evaluates every ordered pair `(cal, test)` with `cal != test`.
///
/// Rows are ordered by calibration domain, then test domain, then method, and
/// the output is the same for any `parallelism` (0 means all cores).
pub fn sweep_all_pairs(
    datasets: &[DomainDataset],
    methods: &[Method],
    config: &EvalConfig,
    parallelism: usize,
) -> Result<SweepReport> {
    if datasets.len() < 2 {
        return Err(Error::IncompatibleDatasets(format!(
            "a sweep needs at least 2 domains, found {}",
            datasets.len()
        )));
    }
    let mut methods = methods.to_vec();
    methods.sort();
    methods.dedup();

    let mut order: Vec<&DomainDataset> = datasets.iter().collect();
    order.sort_by(|a, b| a.domain_id.cmp(&b.domain_id));
    let pairs: Vec<(&DomainDataset, &DomainDataset)> = order
        .iter()
        .flat_map(|&c| order.iter().filter(move |t| t.domain_id != c.domain_id).map(move |&t| (c, t)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let chunks: Vec<Vec<PairResult>> = pool.install(|| {
        pairs
            .par_iter()
            .map(|(c, t)| evaluate_pair_methods(c, t, &methods, config))
            .collect::<Result<Vec<_>>>()
    })?;

    Ok(SweepReport {
        rows: chunks.into_iter().flatten().collect(),
        config: *config,
    })
}

/// One point of a paired coverage scatter.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairedPoint {
    pub cal_domain: String,
    pub test_domain: String,
    pub baseline_coverage: f64,
    pub treatment_coverage: f64,
    /// The baseline misses the `1 - alpha` target.
    pub under_covered: bool,
}

pub fn paired_comparison(
    report: &SweepReport,
    baseline: Method,
    treatment: Method,
) -> Result<Vec<PairedPoint>> {
    let target = 1.0 - report.config.alpha;
    let mut by_pair: BTreeMap<(&str, &str), (Option<f64>, Option<f64>)> = BTreeMap::new();
    let mut order: Vec<(&str, &str)> = Vec::new();
    for row in &report.rows {
        let key = (row.cal_domain.as_str(), row.test_domain.as_str());
        let entry = by_pair.entry(key).or_insert_with(|| {
            order.push(key);
            (None, None)
        });
        if row.method == baseline {
            entry.0 = Some(row.coverage);
        }
        if row.method == treatment {
            entry.1 = Some(row.coverage);
        }
    }
    order
        .into_iter()
        .map(|key| {
            let (b, t) = by_pair[&key];
            let missing = |m: Method| Error::MissingMethod(format!("{m} for pair {} -> {}", key.0, key.1));
            let baseline_coverage = b.ok_or_else(|| missing(baseline))?;
            let treatment_coverage = t.ok_or_else(|| missing(treatment))?;
            Ok(PairedPoint {
                cal_domain: key.0.to_string(),
                test_domain: key.1.to_string(),
                baseline_coverage,
                treatment_coverage,
                under_covered: baseline_coverage < target,
            })
        })
        .collect()
}
