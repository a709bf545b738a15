//! CSV tables and the run manifest.
//!
//! Floats are written in the shortest decimal form that parses back to the
//! same `f64`, so identical runs produce byte-identical files.
//!
//! `metrics.csv` columns, one row per training episode:
//!
//! | column                 | meaning                                              |
//! |------------------------|------------------------------------------------------|
//! | `episode`              | zero-based episode index                             |
//! | `mean_device_energy_j` | training-episode energy per device and frame         |
//! | `completion_fraction`  | fraction of task bits finished by frame end          |
//! | `collision_events`     | slots with a UAV pair closer than the separation     |
//! | `actor_loss`           | mean `-Q` over the episode's updates (empty if none) |
//! | `critic_loss`          | mean TD loss over the episode's updates              |
//! | `eval_energy_mean_j`   | noise-free evaluation energy per device and frame    |
//! | `eval_energy_std_j`    | its standard deviation over evaluation seeds         |
//! | `eval_completion`      | mean evaluation completion fraction                  |
//! | `eval_collisions`      | mean evaluation collision events                     |
//!
//! The evaluation columns are empty between evaluation points. Wall-clock
//! time goes to `timing.csv` so that `metrics.csv` stays reproducible.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use uavmec_core::rng::PRNG_ALGORITHM;
use uavmec_core::schemes::{EpisodeStats, SchemeId, TrainReport};

use crate::config::ExperimentConfig;
use crate::error::{BenchError, Result};

pub const METRICS_COLUMNS: [&str; 10] = [
    "episode",
    "mean_device_energy_j",
    "completion_fraction",
    "collision_events",
    "actor_loss",
    "critic_loss",
    "eval_energy_mean_j",
    "eval_energy_std_j",
    "eval_completion",
    "eval_collisions",
];

pub fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| BenchError::Csv(e.into_error().into()))
}

pub fn metrics_csv(report: &TrainReport) -> Result<Vec<u8>> {
    csv_bytes(
        &METRICS_COLUMNS,
        report.records.iter().map(|r| {
            let e = r.eval.as_ref();
            vec![
                r.episode.to_string(),
                num(r.mean_device_energy_j),
                num(r.completion_fraction),
                r.collision_events.to_string(),
                opt(r.actor_loss),
                opt(r.critic_loss),
                opt(e.map(|e| e.mean_device_energy.mean)),
                opt(e.map(|e| e.mean_device_energy.std)),
                opt(e.map(|e| e.completion_fraction.mean)),
                opt(e.map(|e| e.collision_events.mean)),
            ]
        }),
    )
}

pub fn timing_csv(report: &TrainReport) -> Result<Vec<u8>> {
    csv_bytes(
        &["episode", "wallclock_s"],
        report.records.iter().map(|r| vec![r.episode.to_string(), num(r.wallclock_s)]),
    )
}

pub fn eval_csv(per_seed: &[(u64, EpisodeStats)]) -> Result<Vec<u8>> {
    csv_bytes(
        &[
            "seed",
            "total_energy_j",
            "mean_device_energy_j",
            "completion_fraction",
            "collision_events",
        ],
        per_seed.iter().map(|(seed, s)| {
            vec![
                seed.to_string(),
                num(s.total_energy),
                num(s.mean_device_energy),
                num(s.completion_fraction),
                s.collision_events.to_string(),
            ]
        }),
    )
}

/// One row of `comparison.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct CurvePoint {
    pub scheme: SchemeId,
    pub seed: u64,
    pub episode: usize,
    pub energy_j: f64,
    pub completion: f64,
}

pub fn comparison_csv(points: &[CurvePoint]) -> Result<Vec<u8>> {
    csv_bytes(
        &["scheme", "seed", "episode", "eval_energy_mean_j", "eval_completion"],
        points.iter().map(|p| {
            vec![
                p.scheme.to_string(),
                p.seed.to_string(),
                p.episode.to_string(),
                num(p.energy_j),
                num(p.completion),
            ]
        }),
    )
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(BenchError::io(parent))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(BenchError::io(&tmp))?;
    fs::rename(&tmp, path).map_err(BenchError::io(path))
}

pub fn timestamp() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputEntry {
    /// Relative to the run directory, `/`-separated.
    pub path: String,
    pub sha256: String,
}

/// Provenance of one run directory, written last.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: ExperimentConfig,
    pub scheme: Option<SchemeId>,
    pub seed: Option<u64>,
    pub code_version: String,
    pub prng: String,
    pub started_at: String,
    pub finished_at: String,
    pub outputs: Vec<OutputEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Collects the files of a run directory as they are written.
#[derive(Debug)]
pub struct RunWriter {
    dir: PathBuf,
    started_at: String,
    outputs: Vec<OutputEntry>,
}

impl RunWriter {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(BenchError::io(dir))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            started_at: timestamp(),
            outputs: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, relative: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(relative);
        write_atomic(&path, bytes)?;
        self.outputs.retain(|o| o.path != relative);
        self.outputs.push(OutputEntry {
            path: relative.to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(path)
    }

    pub fn finish(self, command: &str, config: &ExperimentConfig, scheme: Option<SchemeId>, seed: Option<u64>) -> Result<RunManifest> {
        let manifest = RunManifest {
            command: command.to_string(),
            config: config.clone(),
            scheme,
            seed,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            prng: PRNG_ALGORITHM.to_string(),
            started_at: self.started_at,
            finished_at: timestamp(),
            outputs: self.outputs,
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        write_atomic(&self.dir.join(MANIFEST_FILE), text.as_bytes())?;
        Ok(manifest)
    }
}

impl RunManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(BenchError::io(&path))?;
        serde_json::from_str(&text).map_err(|e| BenchError::Manifest(format!("{}: {e}", path.display())))
    }

    /// Checks that every listed file exists with the recorded digest.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        for o in &self.outputs {
            let path = dir.join(&o.path);
            let bytes = fs::read(&path).map_err(BenchError::io(&path))?;
            if sha256_hex(&bytes) != o.sha256 {
                return Err(BenchError::Manifest(format!("digest mismatch for {}", o.path)));
            }
        }
        Ok(())
    }

    pub fn digest_of(&self, relative: &str) -> Option<&str> {
        self.outputs.iter().find(|o| o.path == relative).map(|o| o.sha256.as_str())
    }
}
