//! Synthetic dataset spec files and the files `synth` writes from them.

use std::fs;
use std::path::{Path, PathBuf};

use driftcal::data::{sha256_file, write_samples, ManifestEntry, MANIFEST_FILE};
use driftcal::synthetic::{gen_covariate_shift, gen_domain_suite, LabelModel, ShiftSpec, SuiteSpec};
use driftcal::{DatasetManifest, Profile, SampleRecord};
use serde::Deserialize;

use crate::CliError;

/// A JSON spec, selected by its `kind` field.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SynthSpec {
    /// One calibration domain and one test domain.
    Pair(PairSpec),
    /// Named domains with explicit means.
    Suite(SuiteSpec),
    /// `count` domains spaced along the first axis.
    EvenlySpaced(EvenlySpacedSpec),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct PairSpec {
    pub n_cal: usize,
    pub n_test: usize,
    #[serde(flatten)]
    pub shift: ShiftSpec,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct EvenlySpacedSpec {
    pub count: usize,
    pub start: f64,
    pub spacing: f64,
    pub n_per_domain: usize,
    pub label_model: LabelModel,
}

impl SynthSpec {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read spec {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}:{}: bad spec: {e}", path.display(), e.line())))
    }

    /// Samples the data, grouped into `(domain, records)` files in output order.
    pub fn generate(&self, seed: u64) -> driftcal::Result<Vec<(String, Vec<SampleRecord>)>> {
        match self {
            SynthSpec::Pair(p) => {
                let data = gen_covariate_shift(p.n_cal, p.n_test, &p.shift, seed)?;
                Ok(vec![("cal".into(), data.calibration), ("test".into(), data.test)])
            }
            SynthSpec::Suite(s) => suite_files(s, seed),
            SynthSpec::EvenlySpaced(e) => {
                let suite = SuiteSpec::evenly_spaced(
                    e.count,
                    e.start,
                    e.spacing,
                    e.n_per_domain,
                    e.label_model.clone(),
                );
                suite_files(&suite, seed)
            }
        }
    }
}

fn suite_files(suite: &SuiteSpec, seed: u64) -> driftcal::Result<Vec<(String, Vec<SampleRecord>)>> {
    let domains = gen_domain_suite(suite, seed)?;
    Ok(suite.domains.iter().map(|d| d.name.clone()).zip(domains).collect())
}

/// Writes one `<domain>.jsonl` per group plus a manifest with their hashes.
pub fn write_dataset(dir: &Path, groups: &[(String, Vec<SampleRecord>)]) -> driftcal::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| driftcal::Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let mut entries = Vec::with_capacity(groups.len());
    let mut written = Vec::with_capacity(groups.len() + 1);
    for (domain, records) in groups {
        let file = PathBuf::from(format!("{domain}.jsonl"));
        let path = dir.join(&file);
        write_samples(records, &path)?;
        entries.push(ManifestEntry {
            path: file,
            domain: domain.clone(),
            sha256: sha256_file(&path)?,
        });
        written.push(path);
    }
    let first = groups.iter().flat_map(|(_, r)| r.first()).next();
    let manifest = DatasetManifest {
        files: entries,
        d: first.map_or(0, |r| r.embedding.len()),
        k: first.map_or(0, |r| r.logits.len()),
        profile: Profile::Generic,
    };
    let path = dir.join(MANIFEST_FILE);
    manifest.save(&path)?;
    written.push(path);
    Ok(written)
}
