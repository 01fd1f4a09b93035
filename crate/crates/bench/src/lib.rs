//! Fixtures shared by the benchmarks.

use driftcal::synthetic::{gen_covariate_shift, LabelModel, ShiftSpec, SyntheticDataset};
use driftcal::DomainDataset;

/// A shifted pair in `d` dimensions with six choices.
pub fn shift_spec(d: usize) -> ShiftSpec {
    let mut cal_mean = vec![0.0; d];
    let mut test_mean = vec![0.0; d];
    let mut weight_vector = vec![0.0; d];
    cal_mean[0] = 2.0;
    test_mean[0] = 1.0;
    weight_vector[0] = 1.0;
    ShiftSpec {
        d,
        cal_mean,
        test_mean,
        shared_stddev: 1.0,
        label_model: LabelModel {
            num_classes: 6,
            weight_vector,
            noise_temp: 0.5,
        },
    }
}

pub fn shifted_pair(n: usize, d: usize, seed: u64) -> SyntheticDataset {
    gen_covariate_shift(n, n, &shift_spec(d), seed).expect("valid spec")
}

pub fn domain_pair(n: usize, d: usize, seed: u64) -> (DomainDataset, DomainDataset) {
    let data = shifted_pair(n, d, seed);
    (
        DomainDataset::new("cal", data.calibration).expect("non-empty"),
        DomainDataset::new("test", data.test).expect("non-empty"),
    )
}

/// Deterministic scores in [0, 1) and weights in [0.1, 10).
pub fn scores_and_weights(n: usize) -> (Vec<f64>, Vec<f64>) {
    let scores = (0..n).map(|i| ((i * 7919) % n) as f64 / n as f64).collect();
    let weights = (0..n).map(|i| 0.1 * 100f64.powf(((i * 104_729) % n) as f64 / n as f64)).collect();
    (scores, weights)
}
