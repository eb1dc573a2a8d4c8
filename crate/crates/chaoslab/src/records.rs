//! Metric records and their on-disk artifacts: one CSV per metric and a
//! JSON manifest with the plan, versions, seed and file hashes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};
use crate::plan::ExperimentPlan;
use crate::plot;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub metric: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub t: f64,
    pub repetitions: usize,
    pub value: f64,
    pub ci_half_width: f64,
    pub seed: u64,
    pub plan_hash: String,
}

pub const CSV_HEADER: &str = "metric,N,t,repetitions,value,ci_half_width,seed,plan_hash";
pub const MANIFEST: &str = "manifest.json";

/// Serializes records (already in output order) as CSV with an LF-terminated header.
pub fn to_csv(records: &[MetricRecord]) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .has_headers(false)
        .from_writer(Vec::new());
    w.write_record(CSV_HEADER.split(',')).expect("in-memory write");
    for r in records {
        w.serialize(r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory write")
}

pub fn from_csv(bytes: &[u8]) -> Result<Vec<MetricRecord>> {
    let mut r = csv::Reader::from_reader(bytes);
    r.deserialize()
        .map(|row| row.map_err(|e| HarnessError::Format(e.to_string())))
        .collect()
}

/// Groups records by metric, each group sorted by `(N, t)`.
pub fn by_metric(records: &[MetricRecord]) -> BTreeMap<String, Vec<MetricRecord>> {
    let mut out: BTreeMap<String, Vec<MetricRecord>> = BTreeMap::new();
    for r in records {
        out.entry(r.metric.clone()).or_default().push(r.clone());
    }
    for v in out.values_mut() {
        v.sort_by(|a, b| a.n.cmp(&b.n).then(a.t.total_cmp(&b.t)));
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub plan: ExperimentPlan,
    pub plan_hash: String,
    pub seed: u64,
    pub versions: BTreeMap<String, String>,
    pub files: Vec<FileEntry>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Format(e.to_string()))
    }

    pub fn file(&self, name: &str) -> Option<&FileEntry> {
        self.files.iter().find(|f| f.name == name)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}

/// Creates `dir` and proves it is writable by writing and removing a probe file.
pub fn ensure_writable(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let probe = dir.join(".write-probe");
    write_file(&probe, b"")?;
    std::fs::remove_file(&probe).map_err(|e| HarnessError::io(&probe, e))
}

/// Writes `<metric>.csv` and `<metric>.svg` per metric plus `manifest.json`.
/// Returns the paths written, manifest last.
pub fn emit_outputs(records: &[MetricRecord], plan: &ExperimentPlan, dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_writable(dir)?;
    let mut files = Vec::new();
    let mut written = Vec::new();
    for (metric, rows) in by_metric(records) {
        let csv = to_csv(&rows);
        let svg = plot::render_svg(&metric, &rows);
        for (name, bytes) in [(format!("{metric}.csv"), csv), (format!("{metric}.svg"), svg.into_bytes())] {
            let path = dir.join(&name);
            write_file(&path, &bytes)?;
            files.push(FileEntry {
                name,
                sha256: sha256_hex(&bytes),
                bytes: bytes.len() as u64,
            });
            written.push(path);
        }
    }
    let mut plan = plan.clone();
    plan.out_dir = None;
    let versions = BTreeMap::from([
        ("chaoslab".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ("chaoslab-core".to_string(), chaoslab_core::VERSION.to_string()),
    ]);
    let manifest = Manifest {
        plan_hash: plan.hash(),
        seed: plan.seed,
        plan,
        versions,
        files,
    };
    let path = dir.join(MANIFEST);
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    write_file(&path, text.as_bytes())?;
    written.push(path);
    Ok(written)
}
