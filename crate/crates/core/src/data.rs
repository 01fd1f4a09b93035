//! On-disk sample records and dataset manifests.
//!
//! A sample file is JSON Lines, one record per line:
//!
//! ```text
//! {"id":"q-0001","domain":"anatomy","embedding":[0.12,-0.5],"logits":[1.5,0.2,-0.3],"label":0}
//! ```
//!
//! `label` may be omitted for unlabeled prompts and `text` is optional.
//! Every record in a file shares one embedding width `d` and one choice
//! count `K`. Numbers are written in shortest round-trip form, so
//! `load(write(x)) == x` bit for bit.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Item positions dropped from every file under the MMLU profile.
pub const MMLU_EXCLUDED_POSITIONS: [usize; 5] = [1, 3, 5, 7, 9];

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub domain: String,
    pub embedding: Vec<f64>,
    pub logits: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

impl SampleRecord {
    pub fn num_classes(&self) -> usize {
        self.logits.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    #[default]
    Generic,
    Mmlu,
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "generic" => Ok(Profile::Generic),
            "mmlu" => Ok(Profile::Mmlu),
            other => Err(Error::InvalidConfig(format!("unknown profile '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative to the manifest's directory.
    pub path: PathBuf,
    pub domain: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub files: Vec<ManifestEntry>,
    pub d: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(default)]
    pub profile: Profile,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut json = serde_json::to_string_pretty(self).expect("manifest serializes");
        json.push('\n');
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    /// Checks every listed file's hash; stops at the first mismatch.
    pub fn verify(&self, base: &Path) -> Result<()> {
        for entry in &self.files {
            let path = base.join(&entry.path);
            let actual = sha256_file(&path)?;
            if !actual.eq_ignore_ascii_case(&entry.sha256) {
                return Err(Error::HashMismatch {
                    path,
                    expected: entry.sha256.clone(),
                    actual,
                });
            }
        }
        Ok(())
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Parses and validates a sample file.
///
/// `expected_d` / `expected_k` pin the dimensions; when `None` they are taken
/// from the first record. Errors carry the 1-based line number.
pub fn load_samples(
    path: &Path,
    expected_d: Option<usize>,
    expected_k: Option<usize>,
) -> Result<Vec<SampleRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    let mut d = expected_d;
    let mut k = expected_k;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: SampleRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        let mismatch = |message: String| Error::DimensionMismatch {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        match d {
            Some(d) if record.embedding.len() != d => {
                return Err(mismatch(format!(
                    "embedding has {} dims, expected {d}",
                    record.embedding.len()
                )))
            }
            None => d = Some(record.embedding.len()),
            _ => {}
        }
        match k {
            Some(k) if record.logits.len() != k => {
                return Err(mismatch(format!(
                    "{} logits, expected {k}",
                    record.logits.len()
                )))
            }
            None => k = Some(record.logits.len()),
            _ => {}
        }
        if record.logits.len() < 2 {
            return Err(mismatch("need at least 2 logits".into()));
        }
        if let Some(label) = record.label {
            if label >= record.logits.len() {
                return Err(Error::LabelOutOfRange {
                    path: path.to_path_buf(),
                    line: line_no,
                    label,
                    num_classes: record.logits.len(),
                });
            }
        }
        records.push(record);
    }
    Ok(records)
}

/// Writes one JSON record per line. Refuses non-finite values and mixed dimensions.
pub fn write_samples(records: &[SampleRecord], path: &Path) -> Result<()> {
    if let Some(first) = records.first() {
        for r in records {
            let reject = |message: String| Error::RecordError {
                id: r.id.clone(),
                message,
            };
            if r.embedding.len() != first.embedding.len() || r.logits.len() != first.logits.len() {
                return Err(reject("dimensions differ from the first record".into()));
            }
            if r.embedding.iter().chain(&r.logits).any(|v| !v.is_finite()) {
                return Err(reject("non-finite value".into()));
            }
            if matches!(r.label, Some(y) if y >= r.logits.len()) {
                return Err(reject("label out of range".into()));
            }
        }
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut out, r).expect("record serializes");
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Drops the records at positions 1, 3, 5, 7 and 9.
pub fn apply_mmlu_profile(records: Vec<SampleRecord>) -> Vec<SampleRecord> {
    records
        .into_iter()
        .enumerate()
        .filter(|(i, _)| !MMLU_EXCLUDED_POSITIONS.contains(i))
        .map(|(_, r)| r)
        .collect()
}

/// Loads every sample in a dataset directory.
///
/// With a `manifest.json` present, hashes are verified before anything is
/// parsed, the listed files are read in manifest order and the manifest's
/// profile applies unless `profile` overrides it. Without one, every
/// `*.jsonl` file is read in file-name order. The profile is applied per file.
pub fn load_directory(dir: &Path, profile: Option<Profile>) -> Result<Vec<SampleRecord>> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let (files, d, k, manifest_profile) = if manifest_path.exists() {
        let manifest = DatasetManifest::load(&manifest_path)?;
        manifest.verify(dir)?;
        let files = manifest.files.iter().map(|e| dir.join(&e.path)).collect();
        (files, Some(manifest.d), Some(manifest.k), manifest.profile)
    } else {
        let mut files: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|ext| ext == "jsonl"))
            .collect();
        files.sort();
        (files, None, None, Profile::Generic)
    };

    let profile = profile.unwrap_or(manifest_profile);
    let mut all = Vec::new();
    let (mut d, mut k) = (d, k);
    for path in files {
        let mut records = load_samples(&path, d, k)?;
        if let Some(first) = records.first() {
            d = Some(first.embedding.len());
            k = Some(first.logits.len());
        }
        if profile == Profile::Mmlu {
            records = apply_mmlu_profile(records);
        }
        all.extend(records);
    }
    Ok(all)
}
