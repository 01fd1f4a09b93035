//! `driftcal` command-line tool.
//!
//! Exit status is 0 on success, 2 for usage and validation problems (bad
//! flags, missing or malformed inputs, a sweep with a single domain) and 1
//! for failures while running.

mod config;
mod spec;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use driftcal::data::{load_directory, load_samples};
use driftcal::density_ratio::{export_weights, import_external_weights};
use driftcal::eval::{group_by_domain, sweep_all_pairs};
use driftcal::pipeline::{calibrate_with_policy, compute_weights, predict};
use driftcal::report::{emit_report, median, read_sweep_csv, ReportFormat};
use driftcal::scores::softmax_slice;
use driftcal::{DensityRatioModel, DscpCalibration, Error, Method, Profile, SweepReport};

use crate::config::{eval_config, resolve_seed, CalibrationArgs, FileConfig};
use crate::spec::{write_dataset, SynthSpec};

#[derive(Debug)]
pub enum CliError {
    /// Bad invocation or invalid input; exit status 2.
    Usage(String),
    /// Something failed while running; exit status 1.
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Io { .. } | Error::DegenerateTraining(_) | Error::DegenerateDistribution => {
                CliError::Runtime(e.to_string())
            }
            _ => CliError::Usage(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "driftcal", version, about = "Domain-shift-aware conformal prediction sets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a synthetic dataset from a JSON spec.
    Synth {
        /// Spec file (`kind` = pair, suite or evenly_spaced).
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, env = "DRIFTCAL_SEED")]
        seed: Option<u64>,
        /// TOML file; only its `seed` is used here.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Weight a labeled calibration file toward a test file and freeze a threshold.
    Calibrate {
        #[arg(long)]
        cal: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Where to write the calibration artifact (JSON).
        #[arg(long)]
        out: PathBuf,
        /// Use weight 1 for every calibration row.
        #[arg(long, conflicts_with = "weights_file")]
        uniform_weights: bool,
        /// One externally computed weight per line, in calibration-file order.
        #[arg(long)]
        weights_file: Option<PathBuf>,
        /// Also write the weights, one per line.
        #[arg(long)]
        export_weights: Option<PathBuf>,
        #[command(flatten)]
        opts: CalibrationArgs,
    },
    /// Build prediction sets for a sample file from a calibration artifact.
    Predict {
        #[arg(long)]
        calibration: PathBuf,
        #[arg(long)]
        samples: PathBuf,
        /// Output CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate every ordered pair of domains in a dataset directory.
    Sweep {
        dataset_dir: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Comma-separated: cp, dscp, weighted_cp, nonexch_cp.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<Method>>,
        /// Concurrent pair evaluations; 0 means all cores.
        #[arg(long)]
        parallelism: Option<usize>,
        /// Row filter applied per file: generic or mmlu.
        #[arg(long)]
        profile: Option<Profile>,
        /// Train the domain classifier on this leading fraction of each test
        /// domain and score only the rest.
        #[arg(long)]
        holdout_fraction: Option<f64>,
        /// Use weight 1 for every calibration row.
        #[arg(long)]
        uniform_weights: bool,
        #[command(flatten)]
        opts: CalibrationArgs,
    },
    /// Rebuild the summary and paired data from an existing sweep CSV.
    Report {
        sweep_csv: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Miscoverage level the sweep used.
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Synth {
            spec,
            out_dir,
            seed,
            config,
        } => cmd_synth(&spec, &out_dir, seed, config.as_deref()),
        Command::Calibrate {
            cal,
            test,
            out,
            uniform_weights,
            weights_file,
            export_weights,
            opts,
        } => cmd_calibrate(CalibrateArgs {
            cal: &cal,
            test: &test,
            out: &out,
            uniform_weights,
            weights_file: weights_file.as_deref(),
            export: export_weights.as_deref(),
            opts: &opts,
        }),
        Command::Predict {
            calibration,
            samples,
            out,
        } => cmd_predict(&calibration, &samples, &out),
        Command::Sweep {
            dataset_dir,
            out_dir,
            methods,
            parallelism,
            profile,
            holdout_fraction,
            uniform_weights,
            opts,
        } => {
            let file = FileConfig::load(opts.config.as_deref())?;
            let methods = match methods {
                Some(m) => m,
                None => match &file.methods {
                    Some(names) => names
                        .iter()
                        .map(|n| n.parse())
                        .collect::<driftcal::Result<Vec<Method>>>()?,
                    None => vec![Method::Cp, Method::Dscp],
                },
            };
            let dscp = opts.resolve(&file)?;
            let eval = eval_config(&dscp, holdout_fraction.or(file.holdout_fraction), uniform_weights);
            let parallelism = parallelism.or(file.parallelism).unwrap_or(0);
            cmd_sweep(&dataset_dir, &out_dir, &methods, parallelism, profile, eval)
        }
        Command::Report {
            sweep_csv,
            out_dir,
            alpha,
        } => cmd_report(&sweep_csv, &out_dir, alpha),
    }
}

fn require_file(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("input file {} not found", path.display())))
    }
}

fn cmd_synth(spec_path: &Path, out_dir: &Path, seed: Option<u64>, config: Option<&Path>) -> Result<(), CliError> {
    require_file(spec_path)?;
    let file = FileConfig::load(config)?;
    let seed = resolve_seed(seed, &file);
    let spec = SynthSpec::load(spec_path)?;
    let groups = spec.generate(seed)?;
    let written = write_dataset(out_dir, &groups)?;
    for (domain, records) in &groups {
        println!("{domain}: {} rows", records.len());
    }
    println!("wrote {} files to {} (seed {seed})", written.len(), out_dir.display());
    Ok(())
}

struct CalibrateArgs<'a> {
    cal: &'a Path,
    test: &'a Path,
    out: &'a Path,
    uniform_weights: bool,
    weights_file: Option<&'a Path>,
    export: Option<&'a Path>,
    opts: &'a CalibrationArgs,
}

fn cmd_calibrate(args: CalibrateArgs<'_>) -> Result<(), CliError> {
    require_file(args.cal)?;
    require_file(args.test)?;
    if let Some(w) = args.weights_file {
        require_file(w)?;
    }
    let file = FileConfig::load(args.opts.config.as_deref())?;
    let config = args.opts.resolve(&file)?;

    let cal_rows = load_samples(args.cal, None, None)?;
    let first = cal_rows.first().ok_or(Error::EmptyCalibration)?;
    let (d, k) = (first.embedding.len(), first.logits.len());
    let test_rows = load_samples(args.test, Some(d), Some(k))?;

    let scores = cal_rows
        .iter()
        .map(|r| {
            let label = r.label.ok_or_else(|| Error::RecordError {
                id: r.id.clone(),
                message: "calibration rows need a label".into(),
            })?;
            config.score_kind.score(&softmax_slice(&r.logits)?, label)
        })
        .collect::<driftcal::Result<Vec<f64>>>()?;
    let cal_embeds: Vec<&[f64]> = cal_rows.iter().map(|r| r.embedding.as_slice()).collect();

    let (weights, source, model) = if args.uniform_weights {
        (vec![1.0; cal_rows.len()], "uniform".to_string(), String::new())
    } else if let Some(path) = args.weights_file {
        let w = import_external_weights(path, cal_rows.len())?;
        (w, format!("external:{}", path.display()), String::new())
    } else {
        let test_embeds: Vec<&[f64]> = test_rows.iter().map(|r| r.embedding.as_slice()).collect();
        let ratio = DensityRatioModel::fit(&cal_embeds, &test_embeds, &config.classifier, config.clip)?;
        let w = compute_weights(&ratio, &cal_embeds)?;
        let c = &config.classifier;
        let model = format!(
            "logistic(l2={}, max_iters={}, tol={}, iterations={})",
            c.l2, c.max_iters, c.tol, ratio.classifier.meta.iterations
        );
        (w, "classifier".to_string(), model)
    };

    let mut artifact: DscpCalibration = calibrate_with_policy(&scores, &weights, &config)?;
    artifact.num_classes = Some(k);
    artifact.provenance.calibration_data = args.cal.display().to_string();
    artifact.provenance.test_data = args.test.display().to_string();
    artifact.provenance.weights_source = source;
    artifact.provenance.model = model;
    artifact.save(args.out)?;
    if let Some(path) = args.export {
        export_weights(path, &artifact.weights)?;
    }

    let (lo, hi) = weights
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &w| (lo.min(w), hi.max(w)));
    println!("threshold: {}", artifact.threshold);
    println!("lambda: {} ({})", artifact.lambda, config.lambda_policy);
    println!("weights: n={} min={lo:.6} median={:.6} max={hi:.6}", weights.len(), median(&weights));
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_predict(artifact_path: &Path, samples: &Path, out: &Path) -> Result<(), CliError> {
    require_file(artifact_path)?;
    require_file(samples)?;
    let artifact = DscpCalibration::load(artifact_path)?;
    let rows = load_samples(samples, None, artifact.num_classes)?;

    let mut csv = String::from("id,set_members,set_size,covered\n");
    let (mut labeled, mut covered) = (0usize, 0usize);
    for row in &rows {
        let set = predict(&artifact, &row.logits)?;
        let members: Vec<String> = set.members.iter().map(|m| m.to_string()).collect();
        let hit = row.label.map(|y| set.contains(y));
        if let Some(h) = hit {
            labeled += 1;
            covered += usize::from(h);
        }
        let hit = hit.map_or(String::new(), |h| u8::from(h).to_string());
        writeln!(csv, "{},{},{},{hit}", quote(&row.id), members.join(";"), set.len()).expect("string write");
    }
    fs::write(out, csv).map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))?;

    println!("rows: {}", rows.len());
    if labeled > 0 {
        println!("coverage: {:.6} ({covered}/{labeled})", covered as f64 / labeled as f64);
    }
    println!("wrote {}", out.display());
    Ok(())
}

/// CSV-quotes a field when it needs it.
fn quote(field: &str) -> String {
    if field.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

fn cmd_sweep(
    dir: &Path,
    out_dir: &Path,
    methods: &[Method],
    parallelism: usize,
    profile: Option<Profile>,
    config: driftcal::EvalConfig,
) -> Result<(), CliError> {
    if !dir.is_dir() {
        return Err(CliError::Usage(format!("dataset directory {} not found", dir.display())));
    }
    if methods.is_empty() {
        return Err(CliError::Usage("no methods selected".into()));
    }
    let datasets = group_by_domain(load_directory(dir, profile)?)?;
    if datasets.len() < 2 {
        return Err(CliError::Usage(format!(
            "a sweep needs at least 2 domains, {} has {}",
            dir.display(),
            datasets.len()
        )));
    }
    let report = sweep_all_pairs(&datasets, methods, &config, parallelism)?;
    write_config_snapshot(out_dir, &report)?;
    let written = emit_report(
        &report,
        out_dir,
        &[ReportFormat::Csv, ReportFormat::SummaryText, ReportFormat::PlotData],
    )?;
    println!("{} domains, {} rows", datasets.len(), report.rows.len());
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn write_config_snapshot(out_dir: &Path, report: &SweepReport) -> Result<(), CliError> {
    fs::create_dir_all(out_dir).map_err(|e| CliError::Runtime(format!("{}: {e}", out_dir.display())))?;
    let path = out_dir.join("config.json");
    let mut json = serde_json::to_string_pretty(&report.config).expect("config serializes");
    json.push('\n');
    fs::write(&path, json).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn cmd_report(sweep_csv: &Path, out_dir: &Path, alpha: f64) -> Result<(), CliError> {
    require_file(sweep_csv)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CliError::Usage(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let file = fs::File::open(sweep_csv).map_err(|e| CliError::Runtime(format!("{}: {e}", sweep_csv.display())))?;
    let rows = read_sweep_csv(file, sweep_csv)?;
    let report = SweepReport {
        rows,
        config: driftcal::EvalConfig {
            alpha,
            ..Default::default()
        },
    };
    let written = emit_report(&report, out_dir, &[ReportFormat::SummaryText, ReportFormat::PlotData])?;
    print!("{}", driftcal::report::summary_text(&report.rows, alpha));
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}
