//! L2-regularized logistic regression used as the domain discriminator.
//!
//! Fit by full-batch gradient descent on standardized features with a fixed
//! step of `1/L`, where `L = max_i(|x_i|^2 + 1) / 4 + l2` bounds the Lipschitz
//! constant of the gradient. That step guarantees the objective never
//! increases, and the whole fit is a deterministic function of the inputs.
//! The learned coefficients are folded back into the original coordinates,
//! so prediction needs no preprocessing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower and upper clamp applied to every predicted probability.
pub const PROB_FLOOR: f64 = 1e-6;

/// Anything that estimates `P(W = 1 | z)` for a domain indicator `W`.
pub trait ProbabilisticClassifier {
    fn dim(&self) -> usize;
    fn predict_prob(&self, z: &[f64]) -> Result<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub l2: f64,
    pub max_iters: usize,
    /// Stop once the gradient norm drops below this.
    pub tol: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            l2: 1e-3,
            max_iters: 2000,
            tol: 1e-7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub iterations: usize,
    pub final_loss: f64,
    pub l2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub meta: TrainingMeta,
}

impl ClassifierModel {
    /// The all-zero model, which predicts 0.5 everywhere.
    pub fn zero(dim: usize) -> Self {
        Self {
            coefficients: vec![0.0; dim],
            intercept: 0.0,
            meta: TrainingMeta {
                iterations: 0,
                final_loss: std::f64::consts::LN_2,
                l2: 0.0,
            },
        }
    }

    pub fn logit(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.coefficients.len() {
            return Err(Error::ShapeError(format!(
                "embedding has {} dims, model expects {}",
                z.len(),
                self.coefficients.len()
            )));
        }
        Ok(dot(&self.coefficients, z) + self.intercept)
    }
}

impl ProbabilisticClassifier for ClassifierModel {
    fn dim(&self) -> usize {
        self.coefficients.len()
    }

    fn predict_prob(&self, z: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.logit(z)?).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR))
    }
}

/// Trains on calibration rows labelled `W = 0` and test rows labelled `W = 1`.
pub fn train_domain_classifier<E: AsRef<[f64]>>(
    cal_embeds: &[E],
    test_embeds: &[E],
    config: &ClassifierConfig,
) -> Result<ClassifierModel> {
    Ok(fit(cal_embeds, test_embeds, config, false)?.0)
}

/// Like [`train_domain_classifier`], also returning the objective at every iterate.
pub fn train_domain_classifier_traced<E: AsRef<[f64]>>(
    cal_embeds: &[E],
    test_embeds: &[E],
    config: &ClassifierConfig,
) -> Result<(ClassifierModel, Vec<f64>)> {
    fit(cal_embeds, test_embeds, config, true)
}

fn fit<E: AsRef<[f64]>>(
    cal_embeds: &[E],
    test_embeds: &[E],
    config: &ClassifierConfig,
    trace: bool,
) -> Result<(ClassifierModel, Vec<f64>)> {
    if cal_embeds.is_empty() || test_embeds.is_empty() {
        return Err(Error::DegenerateTraining(format!(
            "need both domains, got {} calibration and {} test rows",
            cal_embeds.len(),
            test_embeds.len()
        )));
    }
    if !(config.l2 >= 0.0 && config.l2.is_finite()) {
        return Err(Error::InvalidConfig(format!("l2 must be >= 0, got {}", config.l2)));
    }
    let dim = cal_embeds[0].as_ref().len();
    let rows: Vec<(&[f64], f64)> = cal_embeds
        .iter()
        .map(|z| (z.as_ref(), 0.0))
        .chain(test_embeds.iter().map(|z| (z.as_ref(), 1.0)))
        .collect();
    for (z, _) in &rows {
        if z.len() != dim {
            return Err(Error::ShapeError(format!(
                "embedding has {} dims, expected {dim}",
                z.len()
            )));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateTraining("non-finite embedding".into()));
        }
    }

    let n = rows.len() as f64;
    let mut mean = vec![0.0; dim];
    for (z, _) in &rows {
        for (m, v) in mean.iter_mut().zip(*z) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut scale = vec![0.0; dim];
    for (z, _) in &rows {
        for j in 0..dim {
            scale[j] += (z[j] - mean[j]).powi(2);
        }
    }
    for s in scale.iter_mut() {
        *s = (*s / n).sqrt();
        if *s < 1e-12 {
            *s = 1.0;
        }
    }
    let features: Vec<Vec<f64>> = rows
        .iter()
        .map(|(z, _)| (0..dim).map(|j| (z[j] - mean[j]) / scale[j]).collect())
        .collect();
    let targets: Vec<f64> = rows.iter().map(|&(_, y)| y).collect();

    let max_sq_norm = features
        .iter()
        .map(|x| dot(x, x) + 1.0)
        .fold(0.0, f64::max);
    let step = 1.0 / (0.25 * max_sq_norm + config.l2);

    let mut beta = vec![0.0; dim];
    let mut bias = 0.0;
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut grad = vec![0.0; dim];

    loop {
        let (loss, grad_bias) = objective_and_gradient(&features, &targets, &beta, bias, config.l2, &mut grad);
        if trace {
            history.push(loss);
        }
        let grad_norm = (dot(&grad, &grad) + grad_bias * grad_bias).sqrt();
        if iterations >= config.max_iters || grad_norm < config.tol {
            let (coefficients, intercept) = unstandardize(&beta, bias, &mean, &scale);
            let model = ClassifierModel {
                coefficients,
                intercept,
                meta: TrainingMeta {
                    iterations,
                    final_loss: loss,
                    l2: config.l2,
                },
            };
            return Ok((model, history));
        }
        for (b, g) in beta.iter_mut().zip(&grad) {
            *b -= step * g;
        }
        bias -= step * grad_bias;
        iterations += 1;
    }
}

/// Mean log-loss plus `l2/2 |beta|^2`; writes the coefficient gradient into
/// `grad` and returns `(loss, intercept gradient)`.
fn objective_and_gradient(
    features: &[Vec<f64>],
    targets: &[f64],
    beta: &[f64],
    bias: f64,
    l2: f64,
    grad: &mut [f64],
) -> (f64, f64) {
    let n = features.len() as f64;
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut loss = 0.0;
    let mut grad_bias = 0.0;
    for (x, &y) in features.iter().zip(targets) {
        let eta = dot(beta, x) + bias;
        loss += softplus(eta) - y * eta;
        let residual = sigmoid(eta) - y;
        for (g, v) in grad.iter_mut().zip(x) {
            *g += residual * v;
        }
        grad_bias += residual;
    }
    for (g, b) in grad.iter_mut().zip(beta) {
        *g = *g / n + l2 * b;
    }
    let penalty = 0.5 * l2 * dot(beta, beta);
    (loss / n + penalty, grad_bias / n)
}

fn unstandardize(beta: &[f64], bias: f64, mean: &[f64], scale: &[f64]) -> (Vec<f64>, f64) {
    let coefficients: Vec<f64> = beta.iter().zip(scale).map(|(b, s)| b / s).collect();
    let intercept = bias - dot(&coefficients, mean);
    (coefficients, intercept)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn cluster(center: &[f64], sd: f64, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, sd).unwrap();
        (0..n)
            .map(|_| center.iter().map(|c| c + noise.sample(&mut rng)).collect())
            .collect()
    }

    #[test]
    fn zero_model_predicts_half() {
        let m = ClassifierModel::zero(3);
        assert_eq!(m.predict_prob(&[1.0, -2.0, 3.0]).unwrap(), 0.5);
    }

    #[test]
    fn clamps_extreme_logits() {
        let m = ClassifierModel {
            coefficients: vec![1.0],
            intercept: 0.0,
            meta: ClassifierModel::zero(1).meta,
        };
        assert_eq!(m.predict_prob(&[1e4]).unwrap(), 1.0 - PROB_FLOOR);
        assert_eq!(m.predict_prob(&[-1e4]).unwrap(), PROB_FLOOR);
        assert!((m.predict_prob(&[4f64.ln()]).unwrap() - 0.8).abs() < 1e-12);
        assert!(matches!(m.predict_prob(&[1.0, 2.0]), Err(Error::ShapeError(_))));
    }

    #[test]
    fn identical_domains_are_indistinguishable() {
        let data = cluster(&[0.3, -1.0], 1.0, 300, 3);
        let m = train_domain_classifier(&data, &data, &ClassifierConfig::default()).unwrap();
        for z in &data {
            assert!((m.predict_prob(z).unwrap() - 0.5).abs() < 0.05);
        }
    }

    #[test]
    fn separable_clusters_are_learned() {
        let left = cluster(&[-5.0, 0.0], 0.5, 200, 1);
        let right = cluster(&[5.0, 0.0], 0.5, 200, 2);
        let m = train_domain_classifier(&left, &right, &ClassifierConfig::default()).unwrap();
        let correct = left.iter().filter(|z| m.predict_prob(z).unwrap() < 0.5).count()
            + right.iter().filter(|z| m.predict_prob(z).unwrap() > 0.5).count();
        assert!(correct as f64 / 400.0 >= 0.99);
    }

    #[test]
    fn max_iters_zero_gives_zero_model() {
        let a = cluster(&[0.0], 1.0, 10, 4);
        let b = cluster(&[3.0], 1.0, 10, 5);
        let cfg = ClassifierConfig {
            max_iters: 0,
            ..Default::default()
        };
        let m = train_domain_classifier(&a, &b, &cfg).unwrap();
        assert_eq!(m.predict_prob(&[2.5]).unwrap(), 0.5);
        assert_eq!(m.meta.iterations, 0);
    }

    #[test]
    fn loss_never_increases_and_training_is_deterministic() {
        let a = cluster(&[0.0, 1.0, 2.0], 1.3, 150, 6);
        let b = cluster(&[0.8, 0.2, 2.5], 0.9, 90, 7);
        let cfg = ClassifierConfig {
            max_iters: 400,
            tol: 0.0,
            l2: 0.01,
        };
        let (m1, history) = train_domain_classifier_traced(&a, &b, &cfg).unwrap();
        assert_eq!(history.len(), 401);
        for w in history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
        }
        let m2 = train_domain_classifier(&a, &b, &cfg).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(m1.meta.final_loss.to_bits(), m2.meta.final_loss.to_bits());
    }

    #[test]
    fn training_errors() {
        let a = cluster(&[0.0, 0.0], 1.0, 5, 8);
        let empty: Vec<Vec<f64>> = Vec::new();
        assert!(matches!(
            train_domain_classifier(&a, &empty, &ClassifierConfig::default()),
            Err(Error::DegenerateTraining(_))
        ));
        let wrong = vec![vec![1.0, 2.0, 3.0]];
        assert!(matches!(
            train_domain_classifier(&a, &wrong, &ClassifierConfig::default()),
            Err(Error::ShapeError(_))
        ));
    }
}
