//! End-to-end acceptance checks, one line of output per criterion.
//!
//! Runs without the libtest harness so the lines are always shown. The process
//! exits non-zero if any criterion fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use driftcal::conformal::{build_distribution, prediction_set, quantile, standard_cp_threshold, ExtendedScore};
use driftcal::data::{apply_mmlu_profile, load_directory, load_samples, write_samples, MMLU_EXCLUDED_POSITIONS};
use driftcal::eval::{evaluate_pair_methods, paired_comparison};
use driftcal::pipeline::{calibrate, resolve_lambda};
use driftcal::report::{median, read_sweep_csv};
use driftcal::scores::{aps_score, lac_score, softmax_slice};
use driftcal::synthetic::{gen_covariate_shift, gen_exchangeable, oracle_ratio, replicate, theory_gap, LabelModel, ShiftSpec};
use driftcal::{
    ChoiceProbabilities, DatasetManifest, DomainDataset, EvalConfig, LambdaPolicy, Method, Profile, SampleRecord,
    ScoreKind,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ALPHA: f64 = 0.1;
/// Fixed before the suite was first run; see the decisions log.
const SUITE_SEED: u64 = 2024;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn main() {
    let work = tempfile::tempdir().expect("tempdir");
    let criteria: Vec<(&str, Box<dyn Fn(&Path) -> Outcome>)> = vec![
        ("reduction-identity", Box::new(reduction_identity)),
        ("quantile-oracle", Box::new(quantile_oracle)),
        ("exchangeable-coverage", Box::new(exchangeable_coverage)),
        ("oracle-weight-shift", Box::new(oracle_weight_shift)),
        ("estimated-weight-suite", Box::new(estimated_weight_suite)),
        ("score-table", Box::new(score_table)),
        ("theory-diagnostics", Box::new(theory_diagnostics)),
        ("data-round-trip", Box::new(data_round_trip)),
        ("sweep-determinism", Box::new(sweep_determinism)),
    ];
    let mut failed = Vec::new();
    for (name, check) in &criteria {
        let dir = work.path().join(name);
        fs::create_dir_all(&dir).expect("criterion dir");
        let result = check(&dir);
        println!("{} {name}: {}", if result.pass { "PASS" } else { "FAIL" }, result.detail);
        if !result.pass {
            failed.push(*name);
        }
    }
    println!(
        "acceptance: {}/{} criteria passed",
        criteria.len() - failed.len(),
        criteria.len()
    );
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_driftcal")
}

fn run_cli(args: &[&str]) -> std::process::Output {
    let out = Command::new(bin()).args(args).output().expect("spawn driftcal");
    assert!(
        out.status.success(),
        "driftcal {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn workspace_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn random_spec(rng: &mut ChaCha8Rng) -> (ShiftSpec, usize, usize) {
    let d = rng.random_range(1..=4);
    let k = rng.random_range(2..=8);
    let cal_mean: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
    let test_mean: Vec<f64> = cal_mean.iter().map(|m| m + rng.random_range(-1.5..1.5)).collect();
    let spec = ShiftSpec {
        d,
        cal_mean,
        test_mean,
        shared_stddev: rng.random_range(0.5..2.0),
        label_model: LabelModel {
            num_classes: k,
            weight_vector: (0..d).map(|_| rng.random_range(-1.0..1.0)).collect(),
            noise_temp: rng.random_range(0.2..2.0),
        },
    };
    (spec, rng.random_range(5..300), rng.random_range(5..100))
}

fn label_scores(rows: &[SampleRecord], kind: ScoreKind) -> Vec<f64> {
    rows.iter()
        .map(|r| kind.score(&softmax_slice(&r.logits).unwrap(), r.label.unwrap()).unwrap())
        .collect()
}

fn reduction_identity(_: &Path) -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = 0;
    let mut sets = 0;
    for i in 0..50u64 {
        let (spec, n_cal, n_test) = random_spec(&mut rng);
        let data = gen_covariate_shift(n_cal, n_test, &spec, i).unwrap();
        let kind = if i % 2 == 0 { ScoreKind::Lac } else { ScoreKind::Aps };
        let alpha = [0.05, 0.1, 0.2][i as usize % 3];
        let scores = label_scores(&data.calibration, kind);

        let cp = standard_cp_threshold(&scores, alpha).unwrap();
        let ds = calibrate(&scores, &vec![1.0; scores.len()], 1.0, alpha, kind).unwrap().threshold();
        let same = |a: ExtendedScore, b: ExtendedScore| match (a, b) {
            (ExtendedScore::Finite(x), ExtendedScore::Finite(y)) => x.to_bits() == y.to_bits(),
            (a, b) => a == b,
        };
        if !same(cp.q, ds.q) {
            mismatches += 1;
        }
        for row in &data.test {
            let probs = softmax_slice(&row.logits).unwrap();
            sets += 1;
            if prediction_set(&probs, cp, kind).members != prediction_set(&probs, ds, kind).members {
                mismatches += 1;
            }
        }

        // the sweep path with forced unit weights agrees as well
        if i < 5 {
            let cal = DomainDataset::new("a", data.calibration.clone()).unwrap();
            let test = DomainDataset::new("b", data.test.clone()).unwrap();
            let config = EvalConfig {
                alpha,
                score_kind: kind,
                uniform_weights: true,
                ..Default::default()
            };
            let rows = evaluate_pair_methods(&cal, &test, &[Method::Cp, Method::Dscp], &config).unwrap();
            let (a, b) = (&rows[0], &rows[1]);
            if (a.coverage, a.avg_set_size, a.threshold) != (b.coverage, b.avg_set_size, b.threshold) {
                mismatches += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        mismatches == 0 && secs < 5.0,
        format!("50 datasets, {sets} prediction sets, {mismatches} mismatches, {secs:.2} s (limit 5 s)"),
    )
}

/// Smallest support point `s` with `P(S <= s) >= q`, by direct summation.
fn brute_force_quantile(scores: &[f64], weights: &[f64], lambda: f64, q: f64) -> ExtendedScore {
    let total: f64 = weights.iter().sum::<f64>() + lambda;
    let mut support: Vec<f64> = scores
        .iter()
        .zip(weights)
        .filter(|(_, w)| **w > 0.0)
        .map(|(s, _)| *s)
        .collect();
    support.sort_by(f64::total_cmp);
    support.dedup();
    for &s in &support {
        let below: f64 = scores.iter().zip(weights).filter(|(x, _)| **x <= s).map(|(_, w)| w).sum();
        if below / total >= q - 1e-12 {
            return ExtendedScore::Finite(s);
        }
    }
    match support.last() {
        Some(&s) if lambda == 0.0 => ExtendedScore::Finite(s),
        _ => ExtendedScore::Infinity,
    }
}

fn quantile_oracle(_: &Path) -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut mismatches = 0;
    let mut infinite = 0;
    for i in 0..1000 {
        let n = rng.random_range(1..=60);
        // a coarse grid forces ties on half the cases
        let scores: Vec<f64> = (0..n)
            .map(|_| {
                if i % 2 == 0 {
                    rng.random_range(0..8) as f64 / 8.0
                } else {
                    rng.random::<f64>()
                }
            })
            .collect();
        let weights: Vec<f64> = (0..n)
            .map(|_| if rng.random_bool(0.15) { 0.0 } else { rng.random_range(0.0..5.0) })
            .collect();
        let mut lambda = match i % 3 {
            0 => 0.0,
            1 => 1.0,
            _ => rng.random_range(0.0..10.0),
        };
        if weights.iter().all(|w| *w == 0.0) && lambda == 0.0 {
            lambda = 1.0;
        }
        let q = if i % 4 == 0 {
            1.0 - [0.05, 0.1, 0.2][i % 3]
        } else {
            rng.random_range(0.001..0.999)
        };
        let got = quantile(&build_distribution(&scores, &weights, lambda).unwrap(), q).unwrap();
        let want = brute_force_quantile(&scores, &weights, lambda, q);
        infinite += usize::from(want.is_infinite());
        if got != want {
            mismatches += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        mismatches == 0 && secs < 2.0,
        format!("1000 distributions ({infinite} at +inf), {mismatches} mismatches, {secs:.2} s (limit 2 s)"),
    )
}

fn coverage_of(threshold: &driftcal::Threshold, test_scores: &[f64]) -> f64 {
    test_scores.iter().filter(|s| threshold.admits(**s)).count() as f64 / test_scores.len() as f64
}

fn exchangeable_coverage(_: &Path) -> Outcome {
    let start = Instant::now();
    let spec = ShiftSpec {
        d: 2,
        cal_mean: vec![0.8, -0.3],
        test_mean: vec![0.8, -0.3],
        shared_stddev: 1.0,
        label_model: LabelModel {
            num_classes: 6,
            weight_vector: vec![1.0, 0.5],
            noise_temp: 0.5,
        },
    };
    let runs = replicate(2000, 3, |seed| {
        let data = gen_exchangeable(200, 200, &spec, seed).unwrap();
        let cal = label_scores(&data.calibration, ScoreKind::Lac);
        let test = label_scores(&data.test, ScoreKind::Lac);
        let cp = standard_cp_threshold(&cal, ALPHA).unwrap();
        let ds = calibrate(&cal, &vec![1.0; cal.len()], 1.0, ALPHA, ScoreKind::Lac).unwrap().threshold();
        (coverage_of(&cp, &test), coverage_of(&ds, &test))
    });
    let n = runs.len() as f64;
    let cp = runs.iter().map(|r| r.0).sum::<f64>() / n;
    let ds = runs.iter().map(|r| r.1).sum::<f64>() / n;
    let secs = start.elapsed().as_secs_f64();
    let band = 0.885..=0.920;
    outcome(
        band.contains(&cp) && band.contains(&ds) && secs < 120.0,
        format!("mean coverage cp {cp:.4}, dscp {ds:.4} (band [0.885, 0.920]), {secs:.1} s (limit 120 s)"),
    )
}

fn oracle_weight_shift(_: &Path) -> Outcome {
    let start = Instant::now();
    // the test domain sits nearer the ambiguous region, so it is harder
    let spec = ShiftSpec {
        d: 1,
        cal_mean: vec![2.0],
        test_mean: vec![1.0],
        shared_stddev: 1.0,
        label_model: LabelModel {
            num_classes: 6,
            weight_vector: vec![1.0],
            noise_temp: 0.5,
        },
    };
    let runs = replicate(2000, 4, |seed| {
        let data = gen_covariate_shift(200, 200, &spec, seed).unwrap();
        let cal = label_scores(&data.calibration, ScoreKind::Lac);
        let test = label_scores(&data.test, ScoreKind::Lac);
        let weights: Vec<f64> = data.calibration.iter().map(|r| oracle_ratio(&r.embedding, &spec)).collect();
        let lambda = resolve_lambda(LambdaPolicy::MaxWeight, &weights).unwrap();
        let ds = calibrate(&cal, &weights, lambda, ALPHA, ScoreKind::Lac).unwrap().threshold();
        let cp = standard_cp_threshold(&cal, ALPHA).unwrap();
        (coverage_of(&cp, &test), coverage_of(&ds, &test))
    });
    let n = runs.len() as f64;
    let cp = runs.iter().map(|r| r.0).sum::<f64>() / n;
    let ds = runs.iter().map(|r| r.1).sum::<f64>() / n;
    let secs = start.elapsed().as_secs_f64();
    outcome(
        ds >= 0.88 && cp < ds && secs < 180.0,
        format!("mean coverage dscp {ds:.4} (>= 0.88), cp {cp:.4} (< dscp), {secs:.1} s (limit 180 s)"),
    )
}

struct SuiteStats {
    median_cp: f64,
    median_dscp: f64,
    under: usize,
    improved: usize,
    mean_size_increase: f64,
}

fn suite_stats(sweep_csv: &Path) -> SuiteStats {
    let rows = read_sweep_csv(fs::File::open(sweep_csv).unwrap(), sweep_csv).unwrap();
    let report = driftcal::SweepReport {
        rows,
        config: EvalConfig::default(),
    };
    let coverages = |m: Method| -> Vec<f64> {
        report.rows.iter().filter(|r| r.method == m).map(|r| r.coverage).collect()
    };
    let sizes = |m: Method| -> Vec<f64> {
        report.rows.iter().filter(|r| r.method == m).map(|r| r.avg_set_size).collect()
    };
    let points = paired_comparison(&report, Method::Cp, Method::Dscp).unwrap();
    let under: Vec<_> = points.iter().filter(|p| p.baseline_coverage < 1.0 - ALPHA).collect();
    let (cp_sizes, ds_sizes) = (sizes(Method::Cp), sizes(Method::Dscp));
    SuiteStats {
        median_cp: median(&coverages(Method::Cp)),
        median_dscp: median(&coverages(Method::Dscp)),
        under: under.len(),
        improved: under.iter().filter(|p| p.treatment_coverage > p.baseline_coverage).count(),
        mean_size_increase: ds_sizes.iter().zip(&cp_sizes).map(|(d, c)| d - c).sum::<f64>() / cp_sizes.len() as f64,
    }
}

fn synth_suite(dir: &Path) -> PathBuf {
    let data = dir.join("suite");
    let spec = workspace_file("specs/suite6.json");
    let seed = SUITE_SEED.to_string();
    run_cli(&["synth", "--spec", spec.to_str().unwrap(), "--out-dir", data.to_str().unwrap(), "--seed", &seed]);
    data
}

fn estimated_weight_suite(dir: &Path) -> Outcome {
    let start = Instant::now();
    let data = synth_suite(dir);
    let out = dir.join("sweep");
    run_cli(&["sweep", data.to_str().unwrap(), "--out-dir", out.to_str().unwrap(), "--methods", "cp,dscp"]);
    let secs = start.elapsed().as_secs_f64();
    let s = suite_stats(&out.join("sweep.csv"));
    let k = 6.0;

    // the same data under lambda = max weight, for reference only
    let max_out = dir.join("sweep-max");
    run_cli(&["sweep", data.to_str().unwrap(), "--out-dir", max_out.to_str().unwrap(), "--lambda", "max"]);
    let m = suite_stats(&max_out.join("sweep.csv"));

    let median_ok = s.median_dscp >= s.median_cp;
    let improved_ok = s.under == 0 || s.improved as f64 >= 0.8 * s.under as f64;
    let size_ok = s.mean_size_increase <= 0.25 * k;
    outcome(
        median_ok && improved_ok && size_ok && secs < 300.0,
        format!(
            "30 pairs, lambda=1: median coverage dscp {:.4} vs cp {:.4} [{}]; improved {}/{} under-covered pairs [{}]; \
             mean set-size increase {:.3} <= {:.2} [{}]; {secs:.1} s (limit 300 s) \
             | reference lambda=max: median dscp {:.4}, improved {}/{}, size increase {:.3}",
            s.median_dscp,
            s.median_cp,
            ok(median_ok),
            s.improved,
            s.under,
            ok(improved_ok),
            s.mean_size_increase,
            0.25 * k,
            ok(size_ok),
            m.median_dscp,
            m.improved,
            m.under,
            m.mean_size_increase,
        ),
    )
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "fails"
    }
}

fn score_table(_: &Path) -> Outcome {
    enum Input {
        Probs(&'static [f64]),
        Logits(Vec<f64>),
    }
    use Input::*;
    let ln = f64::ln;
    // (input, label, LAC, APS) with APS summing the probabilities strictly above the label's
    let cases: Vec<(Input, usize, f64, f64)> = vec![
        (Probs(&[0.5, 0.3, 0.2]), 0, 0.5, 0.0),
        (Probs(&[0.5, 0.3, 0.2]), 1, 0.7, 0.5),
        (Probs(&[0.5, 0.3, 0.2]), 2, 0.8, 0.8),
        (Probs(&[0.25, 0.25, 0.25, 0.25]), 2, 0.75, 0.0),
        (Probs(&[0.4, 0.4, 0.2]), 1, 0.6, 0.0),
        (Probs(&[0.4, 0.4, 0.2]), 2, 0.8, 0.8),
        (Probs(&[0.1, 0.2, 0.3, 0.4]), 0, 0.9, 0.9),
        (Probs(&[0.1, 0.2, 0.3, 0.4]), 1, 0.8, 0.7),
        (Probs(&[0.1, 0.2, 0.3, 0.4]), 3, 0.6, 0.0),
        (Probs(&[1.0, 0.0]), 0, 0.0, 0.0),
        (Probs(&[1.0, 0.0]), 1, 1.0, 1.0),
        (Probs(&[0.3, 0.3, 0.2, 0.2]), 3, 0.8, 0.6),
        (Probs(&[0.05, 0.1, 0.15, 0.2, 0.25, 0.25]), 4, 0.75, 0.0),
        (Probs(&[0.05, 0.1, 0.15, 0.2, 0.25, 0.25]), 0, 0.95, 0.95),
        (Probs(&[0.05, 0.1, 0.15, 0.2, 0.25, 0.25]), 2, 0.85, 0.7),
        (Logits(vec![0.0, 0.0]), 1, 0.5, 0.0),
        (Logits(vec![ln(3.0), 0.0]), 1, 0.75, 0.75),
        (Logits(vec![ln(2.0), 0.0, 0.0]), 0, 0.5, 0.0),
        (Logits(vec![ln(2.0) + 50.0, 50.0, 50.0]), 2, 0.75, 0.5),
        (Logits(vec![1000.0, 0.0, -1000.0]), 1, 1.0, 1.0),
    ];
    let mut worst: f64 = 0.0;
    for (input, y, lac, aps) in &cases {
        let p = match input {
            Probs(p) => ChoiceProbabilities::new(p.to_vec()).unwrap(),
            Logits(l) => softmax_slice(l).unwrap(),
        };
        worst = worst
            .max((lac_score(&p, *y).unwrap() - lac).abs())
            .max((aps_score(&p, *y).unwrap() - aps).abs());
    }
    outcome(
        worst <= 1e-12 && cases.len() == 20,
        format!("{} cases, worst deviation {worst:.2e} (limit 1e-12)", cases.len()),
    )
}

fn theory_diagnostics(_: &Path) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut exact_zero = true;
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let n = rng.random_range(1..=200);
        let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..20.0)).collect();
        let lambda = if case % 2 == 0 { 1.0 } else { rng.random_range(0.0..50.0) };

        let zero = theory_gap(&weights, lambda, &vec![0.0; n]).unwrap();
        let mut sum_w = 0.0;
        for w in &weights {
            sum_w += w;
        }
        let total = sum_w + lambda;
        exact_zero &= zero.lower_gap == 0.0 && zero.upper_slack == lambda / total;
        worst = worst.max((zero.upper_slack - lambda / total).abs());

        let tv: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let report = theory_gap(&weights, lambda, &tv).unwrap();
        let mut gap = 0.0;
        for i in 0..n {
            gap += 2.0 * weights[i] * tv[i] / total;
        }
        worst = worst
            .max((report.lower_gap - gap).abs())
            .max((report.upper_slack - lambda / total).abs());
    }
    outcome(
        exact_zero && worst <= 1e-12,
        format!("TV = 0 gives lower_gap 0 and upper_slack lambda/(sum w + lambda): {exact_zero}; 100 random vectors, worst deviation {worst:.2e}"),
    )
}

fn random_record(rng: &mut ChaCha8Rng, i: usize) -> SampleRecord {
    let mag = |rng: &mut ChaCha8Rng| -> f64 {
        let e = rng.random_range(-30..30);
        let sign = if rng.random_bool(0.5) { -1.0 } else { 1.0 };
        sign * rng.random::<f64>() * 10f64.powi(e)
    };
    SampleRecord {
        id: format!("q-{i:04}-\u{e9}\"{}", i % 7),
        domain: ["algebra", "anatomy", "virology"][i % 3].to_string(),
        embedding: (0..16).map(|_| mag(rng)).collect(),
        logits: (0..6).map(|_| rng.random_range(-40.0..40.0)).collect(),
        label: if i % 10 == 9 { None } else { Some(rng.random_range(0..6)) },
        text: if i % 4 == 0 { Some(format!("line one\nline {i}, \"quoted\"")) } else { None },
    }
}

fn data_round_trip(dir: &Path) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let records: Vec<SampleRecord> = (0..1000).map(|i| random_record(&mut rng, i)).collect();
    let path = dir.join("records.jsonl");
    write_samples(&records, &path).unwrap();
    let back = load_samples(&path, Some(16), Some(6)).unwrap();
    let mut worst: f64 = 0.0;
    let mut structural = back.len() == records.len();
    for (a, b) in records.iter().zip(&back) {
        structural &= a.id == b.id && a.domain == b.domain && a.label == b.label && a.text == b.text;
        for (x, y) in a.embedding.iter().chain(&a.logits).zip(b.embedding.iter().chain(&b.logits)) {
            worst = worst.max((x - y).abs());
        }
    }

    // the profile drops positions 1, 3, 5, 7, 9 of every file
    let ten: Vec<SampleRecord> = records[..10].to_vec();
    let kept: Vec<String> = apply_mmlu_profile(ten.clone()).into_iter().map(|r| r.id).collect();
    let expected: Vec<String> = (0..10)
        .filter(|i| !MMLU_EXCLUDED_POSITIONS.contains(i))
        .map(|i| ten[i].id.clone())
        .collect();
    let profile_ok = MMLU_EXCLUDED_POSITIONS == [1, 3, 5, 7, 9] && kept == expected && kept.len() == 5;

    let mmlu_dir = dir.join("mmlu");
    fs::create_dir_all(&mmlu_dir).unwrap();
    let mut entries = Vec::new();
    for (name, chunk) in [("a", &records[..12]), ("b", &records[12..20])] {
        let file = mmlu_dir.join(format!("{name}.jsonl"));
        write_samples(chunk, &file).unwrap();
        entries.push(driftcal::data::ManifestEntry {
            path: format!("{name}.jsonl").into(),
            domain: name.into(),
            sha256: driftcal::data::sha256_file(&file).unwrap(),
        });
    }
    DatasetManifest {
        files: entries,
        d: 16,
        k: 6,
        profile: Profile::Mmlu,
    }
    .save(&mmlu_dir.join("manifest.json"))
    .unwrap();
    let loaded = load_directory(&mmlu_dir, None).unwrap();
    let dir_ok = loaded.len() == 7 + 4;

    outcome(
        structural && worst <= 1e-12 && profile_ok && dir_ok,
        format!(
            "1000 records, worst numeric deviation {worst:.2e} (limit 1e-12), fields intact: {structural}; \
             profile keeps {kept_n}/10 per file, directory load {n} rows",
            kept_n = kept.len(),
            n = loaded.len()
        ),
    )
}

fn sweep_determinism(dir: &Path) -> Outcome {
    let data = synth_suite(dir);
    let again = dir.join("suite-again");
    let spec = workspace_file("specs/suite6.json");
    let seed = SUITE_SEED.to_string();
    run_cli(&["synth", "--spec", spec.to_str().unwrap(), "--out-dir", again.to_str().unwrap(), "--seed", &seed]);
    let same_data = ["domain-00.jsonl", "domain-05.jsonl", "manifest.json"]
        .iter()
        .all(|f| fs::read(data.join(f)).unwrap() == fs::read(again.join(f)).unwrap());

    let mut outputs = Vec::new();
    for p in ["1", "4", "max"] {
        let out = dir.join(format!("p-{p}"));
        let mut args = vec!["sweep", data.to_str().unwrap(), "--out-dir", out.to_str().unwrap()];
        if p != "max" {
            args.extend(["--parallelism", p]);
        }
        run_cli(&args);
        let files: Vec<Vec<u8>> = ["sweep.csv", "summary.txt", "paired.csv", "config.json"]
            .iter()
            .map(|f| fs::read(out.join(f)).unwrap())
            .collect();
        outputs.push(files);
    }
    let identical = outputs.windows(2).all(|w| w[0] == w[1]);
    let rows = String::from_utf8_lossy(&outputs[0][0]).lines().count() - 1;
    outcome(
        identical && same_data && rows == 60,
        format!("parallelism 1, 4 and all cores: byte-identical = {identical}; {rows} rows; re-synthesized data identical = {same_data}"),
    )
}
