//! Strength sweeps: generate `n` samples per strength, score each against the
//! seed, keep the per-strength minimum. Runs persist as JSON lines.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, GenerationRequest, Generator};
use crate::manifest::{DatasetManifest, Group, ImageRecord, ManifestError, StrengthSchedule};
use crate::metric::{MetricError, MetricKind, PerceptualMetric};
use crate::raster::RasterImage;
use crate::rng::sample_seed;

pub const RUN_VERSION: u32 = 1;
pub const DEFAULT_CONCURRENCY: usize = 4;

#[derive(Debug, Clone)]
pub struct ProbeConfig {
    pub schedule: StrengthSchedule,
    pub samples_per_strength: usize,
    pub master_seed: u64,
    /// Worker threads for generation and scoring.
    pub concurrency: usize,
    /// Skip failed records instead of failing the run.
    pub lenient: bool,
}

impl ProbeConfig {
    pub fn new(schedule: StrengthSchedule, samples_per_strength: usize, master_seed: u64) -> Self {
        Self { schedule, samples_per_strength, master_seed, concurrency: DEFAULT_CONCURRENCY, lenient: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub record_id: String,
    pub group: Group,
    pub strengths: Vec<f64>,
    /// `distances_full[i][j]`: sample `j` at strength index `i`.
    pub distances_full: Vec<Vec<f64>>,
    pub distance_vector: Vec<f64>,
}

impl ProbeRecord {
    pub fn from_distances(record: &ImageRecord, strengths: &[f64], distances_full: Vec<Vec<f64>>) -> Self {
        let distance_vector = distances_full
            .iter()
            .map(|row| row.iter().copied().fold(f64::INFINITY, f64::min))
            .collect();
        Self {
            record_id: record.id.clone(),
            group: record.group,
            strengths: strengths.to_vec(),
            distances_full,
            distance_vector,
        }
    }

    /// Checks shape, range and min-retention.
    pub fn validate(&self) -> Result<(), String> {
        let m = self.strengths.len();
        if self.distance_vector.len() != m || self.distances_full.len() != m {
            return Err(format!("{}: expected {m} strengths", self.record_id));
        }
        for (i, row) in self.distances_full.iter().enumerate() {
            if row.is_empty() {
                return Err(format!("{}: no samples at strength index {i}", self.record_id));
            }
            if row.iter().any(|d| !(0.0..=1.0).contains(d)) {
                return Err(format!("{}: distance outside [0,1] at strength index {i}", self.record_id));
            }
            let min = self.distance_vector[i];
            if row.iter().any(|&d| d < min) || !row.contains(&min) {
                return Err(format!("{}: distance_vector[{i}] is not the row minimum", self.record_id));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SampleError {
    #[error("generation failed: {0}")]
    Backend(#[from] BackendError),
    #[error("metric failed: {0}")]
    Metric(MetricError),
}

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("record {record_id} (strength index {strength_index}, sample {sample_index}): {source}")]
    Sample {
        record_id: String,
        strength_index: usize,
        sample_index: usize,
        source: SampleError,
    },
    #[error("record {0}: {1}")]
    Image(String, ManifestError),
    #[error("invalid probe configuration: {0}")]
    Config(String),
    #[error("{} record(s) failed; first: {}", .0.len(), .0[0])]
    RecordsFailed(Vec<ProbeError>),
}

impl ProbeError {
    /// True when the failure came from a backend or metric call.
    pub fn is_remote_failure(&self) -> bool {
        match self {
            ProbeError::Sample { source, .. } => {
                matches!(source, SampleError::Metric(_) | SampleError::Backend(BackendError::Remote(_)))
            }
            ProbeError::RecordsFailed(errs) => errs.iter().any(ProbeError::is_remote_failure),
            _ => false,
        }
    }
}

fn check_config(cfg: &ProbeConfig) -> Result<(), ProbeError> {
    if cfg.samples_per_strength == 0 {
        return Err(ProbeError::Config("samples_per_strength must be at least 1".into()));
    }
    if cfg.concurrency == 0 {
        return Err(ProbeError::Config("concurrency must be at least 1".into()));
    }
    Ok(())
}

fn probe_loaded(
    backend: &dyn Generator,
    metric: &dyn PerceptualMetric,
    record: &ImageRecord,
    seed: &RasterImage,
    cfg: &ProbeConfig,
) -> Result<ProbeRecord, ProbeError> {
    let strengths = cfg.schedule.strengths();
    let n = cfg.samples_per_strength;
    let tasks: Vec<(usize, usize)> = (0..strengths.len()).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let flat: Vec<f64> = tasks
        .par_iter()
        .map(|&(i, j)| {
            let fail = |source| ProbeError::Sample {
                record_id: record.id.clone(),
                strength_index: i,
                sample_index: j,
                source,
            };
            let req = GenerationRequest {
                seed_image: seed,
                caption: &record.caption,
                strength: strengths[i],
                sample_seed: sample_seed(cfg.master_seed, &record.id, i, j),
            };
            let generated = backend.generate(&req).map_err(|e| fail(SampleError::Backend(e)))?;
            metric.distance(seed, &generated).map_err(|e| fail(SampleError::Metric(e)))
        })
        .collect::<Result<_, _>>()?;
    let full = flat.chunks(n).map(<[f64]>::to_vec).collect();
    Ok(ProbeRecord::from_distances(record, strengths, full))
}

fn pool(concurrency: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(concurrency)
        .build()
        .expect("thread pool")
}

/// Probes one seed image. Any failed sample aborts the record.
pub fn probe_image(
    backend: &dyn Generator,
    metric: &dyn PerceptualMetric,
    record: &ImageRecord,
    seed: &RasterImage,
    cfg: &ProbeConfig,
) -> Result<ProbeRecord, ProbeError> {
    check_config(cfg)?;
    backend
        .check_schedule(&cfg.schedule)
        .map_err(|e| ProbeError::Config(e.to_string()))?;
    pool(cfg.concurrency).install(|| probe_loaded(backend, metric, record, seed, cfg))
}

/// Result of a dataset probe. `records` is in manifest order.
#[derive(Debug)]
pub struct ProbeRun {
    pub header: RunHeader,
    pub records: Vec<ProbeRecord>,
    /// Records dropped in lenient mode, with the reason.
    pub skipped: Vec<ProbeError>,
}

/// Probes every manifest record. Output order follows the manifest, not
/// completion order; sample seeds depend only on logical indices, so results
/// do not depend on `concurrency`.
pub fn probe_dataset(
    backend: &dyn Generator,
    metric: &dyn PerceptualMetric,
    manifest: &DatasetManifest,
    cfg: &ProbeConfig,
    progress: Option<&(dyn Fn(&str) + Sync)>,
) -> Result<ProbeRun, ProbeError> {
    check_config(cfg)?;
    backend
        .check_schedule(&cfg.schedule)
        .map_err(|e| ProbeError::Config(e.to_string()))?;
    let results: Vec<Result<ProbeRecord, ProbeError>> = pool(cfg.concurrency).install(|| {
        manifest
            .records
            .par_iter()
            .map(|record| {
                let seed = manifest
                    .load_image(record)
                    .map_err(|e| ProbeError::Image(record.id.clone(), e))?;
                let out = probe_loaded(backend, metric, record, &seed, cfg);
                if let Some(report) = progress {
                    report(&record.id);
                }
                out
            })
            .collect()
    });

    let mut records = Vec::with_capacity(results.len());
    let mut failed = Vec::new();
    for r in results {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) => failed.push(e),
        }
    }
    if !failed.is_empty() && !cfg.lenient {
        return Err(ProbeError::RecordsFailed(failed));
    }
    Ok(ProbeRun {
        header: RunHeader {
            run_version: RUN_VERSION,
            schedule_label: cfg.schedule.label().to_owned(),
            metric_kind: metric.kind(),
            n: cfg.samples_per_strength,
            master_seed: cfg.master_seed,
        },
        records,
        skipped: failed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub run_version: u32,
    pub schedule_label: String,
    pub metric_kind: MetricKind,
    pub n: usize,
    pub master_seed: u64,
}

#[derive(Debug, Error)]
pub enum RunFileError {
    #[error("i/o error on {path:?}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("run file line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("run file has no header")]
    Empty,
}

/// Serializes a run to JSON lines: header first, then one record per line.
pub fn run_to_jsonl(header: &RunHeader, records: &[ProbeRecord]) -> String {
    let mut out = serde_json::to_string(header).expect("header serializes");
    out.push('\n');
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn write_run(path: &Path, header: &RunHeader, records: &[ProbeRecord]) -> Result<(), RunFileError> {
    let io = |source| RunFileError::Io { path: path.to_path_buf(), source };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(run_to_jsonl(header, records).as_bytes()).map_err(io)?;
    f.sync_all().map_err(io)
}

/// Reads and validates a run file: header version, per-record invariants and
/// a single shared strength list.
pub fn read_run(path: &Path) -> Result<(RunHeader, Vec<ProbeRecord>), RunFileError> {
    let io = |source| RunFileError::Io { path: path.to_path_buf(), source };
    let reader = BufReader::new(fs::File::open(path).map_err(io)?);
    let mut lines = reader.lines().enumerate().filter(|(_, l)| l.as_ref().map_or(true, |s| !s.trim().is_empty()));
    let (_, first) = lines.next().ok_or(RunFileError::Empty)?;
    let header: RunHeader = serde_json::from_str(&first.map_err(io)?)
        .map_err(|e| RunFileError::Parse { line: 1, reason: e.to_string() })?;
    if header.run_version != RUN_VERSION {
        return Err(RunFileError::Parse { line: 1, reason: format!("unsupported run_version {}", header.run_version) });
    }
    let mut records: Vec<ProbeRecord> = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let rec: ProbeRecord = serde_json::from_str(&line.map_err(io)?)
            .map_err(|e| RunFileError::Parse { line: line_no, reason: e.to_string() })?;
        rec.validate().map_err(|reason| RunFileError::Parse { line: line_no, reason })?;
        if rec.distances_full.iter().any(|row| row.len() != header.n) {
            return Err(RunFileError::Parse { line: line_no, reason: format!("expected n={} samples per strength", header.n) });
        }
        if let Some(first) = records.first() {
            if first.strengths != rec.strengths {
                return Err(RunFileError::Parse { line: line_no, reason: "mixed strength schedules in one run".into() });
            }
        }
        records.push(rec);
    }
    Ok((header, records))
}
