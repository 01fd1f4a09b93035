//! Sweep report files.
//!
//! * `sweep.csv`: `cal_domain,test_domain,method,coverage,avg_set_size,n_test,threshold`,
//!   decimals with 6 fractional digits and an infinite threshold written as `inf`.
//! * `summary.txt`: one block per method with pair count, median and mean
//!   coverage, fraction of pairs under `1 - alpha` and set-size statistics.
//! * `paired.csv`: `cal_domain,test_domain,baseline_coverage,treatment_coverage,under_covered`
//!   for a coverage scatter of two methods.

use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::conformal::ExtendedScore;
use crate::error::{Error, Result};
use crate::eval::{paired_comparison, Method, PairResult, PairedPoint, SweepReport};

pub const SWEEP_HEADER: [&str; 7] = [
    "cal_domain",
    "test_domain",
    "method",
    "coverage",
    "avg_set_size",
    "n_test",
    "threshold",
];

pub const PAIRED_HEADER: [&str; 5] = [
    "cal_domain",
    "test_domain",
    "baseline_coverage",
    "treatment_coverage",
    "under_covered",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    SummaryText,
    PlotData,
}

fn csv_error(path: &Path, err: csv::Error) -> Error {
    let line = err.position().map_or(0, |p| p.line() as usize);
    match err.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("{other:?}"),
        },
    }
}

pub fn write_sweep_csv<W: Write>(rows: &[PairResult], out: W) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        w.write_record([
            r.cal_domain.as_str(),
            r.test_domain.as_str(),
            r.method.as_str(),
            &format!("{:.6}", r.coverage),
            &format!("{:.6}", r.avg_set_size),
            &r.n_test.to_string(),
            &format!("{:.6}", r.threshold),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a `sweep.csv`. `source` names the input in error messages.
pub fn read_sweep_csv<R: Read>(input: R, source: &Path) -> Result<Vec<PairResult>> {
    let mut reader = csv::Reader::from_reader(input);
    let header = reader.headers().map_err(|e| csv_error(source, e))?.clone();
    if header.iter().ne(SWEEP_HEADER) {
        return Err(Error::Parse {
            path: source.to_path_buf(),
            line: 1,
            message: format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()),
        });
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(source, e))?;
        let line = i + 2;
        let bad = |field: &str| Error::Parse {
            path: source.to_path_buf(),
            line,
            message: format!("invalid {field}"),
        };
        let num = |idx: usize, field: &str| record[idx].parse::<f64>().map_err(|_| bad(field));
        rows.push(PairResult {
            cal_domain: record[0].to_string(),
            test_domain: record[1].to_string(),
            method: record[2].parse().map_err(|_| bad("method"))?,
            coverage: num(3, "coverage")?,
            avg_set_size: num(4, "avg_set_size")?,
            n_test: record[5].parse().map_err(|_| bad("n_test"))?,
            threshold: record[6].parse::<ExtendedScore>().map_err(|_| bad("threshold"))?,
        });
    }
    Ok(rows)
}

pub fn write_paired_csv<W: Write>(points: &[PairedPoint], out: W) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PAIRED_HEADER)?;
    for p in points {
        w.write_record([
            p.cal_domain.as_str(),
            p.test_domain.as_str(),
            &format!("{:.6}", p.baseline_coverage),
            &format!("{:.6}", p.treatment_coverage),
            if p.under_covered { "true" } else { "false" },
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Median of a non-empty slice; the mean of the two middle values for even lengths.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: Method,
    pub pairs: usize,
    pub median_coverage: f64,
    pub mean_coverage: f64,
    pub min_coverage: f64,
    pub fraction_under_target: f64,
    pub median_set_size: f64,
    pub mean_set_size: f64,
}

pub fn summarize(rows: &[PairResult], alpha: f64) -> Vec<MethodSummary> {
    let mut methods: Vec<Method> = rows.iter().map(|r| r.method).collect();
    methods.sort();
    methods.dedup();
    methods
        .into_iter()
        .map(|method| {
            let mine: Vec<&PairResult> = rows.iter().filter(|r| r.method == method).collect();
            let cov: Vec<f64> = mine.iter().map(|r| r.coverage).collect();
            let size: Vec<f64> = mine.iter().map(|r| r.avg_set_size).collect();
            let n = mine.len() as f64;
            MethodSummary {
                method,
                pairs: mine.len(),
                median_coverage: median(&cov),
                mean_coverage: cov.iter().sum::<f64>() / n,
                min_coverage: cov.iter().copied().fold(f64::INFINITY, f64::min),
                fraction_under_target: cov.iter().filter(|&&c| c < 1.0 - alpha).count() as f64 / n,
                median_set_size: median(&size),
                mean_set_size: size.iter().sum::<f64>() / n,
            }
        })
        .collect()
}

pub fn summary_text(rows: &[PairResult], alpha: f64) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "target coverage: {:.6} (alpha = {alpha})", 1.0 - alpha);
    for s in summarize(rows, alpha) {
        let _ = writeln!(out);
        let _ = writeln!(out, "method: {}", s.method);
        let _ = writeln!(out, "  pairs: {}", s.pairs);
        let _ = writeln!(out, "  median_coverage: {:.6}", s.median_coverage);
        let _ = writeln!(out, "  mean_coverage: {:.6}", s.mean_coverage);
        let _ = writeln!(out, "  min_coverage: {:.6}", s.min_coverage);
        let _ = writeln!(out, "  fraction_under_target: {:.6}", s.fraction_under_target);
        let _ = writeln!(out, "  median_set_size: {:.6}", s.median_set_size);
        let _ = writeln!(out, "  mean_set_size: {:.6}", s.mean_set_size);
    }
    out
}

/// Writes the requested report files into `dir` and returns their paths.
///
/// Plot data compares `cp` against `dscp` and is skipped unless both are present.
pub fn emit_report(report: &SweepReport, dir: &Path, formats: &[ReportFormat]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for format in formats {
        match format {
            ReportFormat::Csv => {
                let path = dir.join("sweep.csv");
                let mut buf = Vec::new();
                write_sweep_csv(&report.rows, &mut buf).map_err(|e| csv_error(&path, e))?;
                fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;
                written.push(path);
            }
            ReportFormat::SummaryText => {
                let path = dir.join("summary.txt");
                fs::write(&path, summary_text(&report.rows, report.config.alpha))
                    .map_err(|e| Error::io(&path, e))?;
                written.push(path);
            }
            ReportFormat::PlotData => {
                let methods = report.methods();
                if !(methods.contains(&Method::Cp) && methods.contains(&Method::Dscp)) {
                    continue;
                }
                let path = dir.join("paired.csv");
                let points = paired_comparison(report, Method::Cp, Method::Dscp)?;
                let mut buf = Vec::new();
                write_paired_csv(&points, &mut buf).map_err(|e| csv_error(&path, e))?;
                fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;
                written.push(path);
            }
        }
    }
    Ok(written)
}
