//! Plain-text persistence: one JSON document per run, CSV tables per scan.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::run::{CellTask, RunRecord};
use crate::scan::{BandwidthRow, CurvePoint, NoiseRow, PatternRow};

pub const RECORDS_DIR: &str = "records";

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

pub fn write_record(dir: &Path, record: &RunRecord) -> Result<PathBuf> {
    create_dir(dir)?;
    let path = dir.join(format!("{}.json", record.file_stem()));
    let text = serde_json::to_string_pretty(record).expect("record serialises");
    fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))?;
    Ok(path)
}

pub fn write_records(dir: &Path, records: &[RunRecord]) -> Result<Vec<PathBuf>> {
    records.iter().map(|r| write_record(dir, r)).collect()
}

pub fn read_record(path: &Path) -> Result<RunRecord> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::parse(path, e))
}

/// Every `*.json` record in `dir`, sorted by file name.
pub fn read_records(dir: &Path) -> Result<Vec<RunRecord>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| HarnessError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths.iter().map(|p| read_record(p)).collect()
}

pub fn write_table<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            create_dir(parent)?;
        }
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn read_table<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| csv_err(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> HarnessError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => HarnessError::io(path, io),
        other => HarnessError::parse(path, format!("{other:?}")),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthCsv {
    pub nu: f64,
    pub mask_seed_base: u64,
    pub successes: usize,
    pub trials: usize,
}

impl From<&BandwidthRow> for BandwidthCsv {
    fn from(r: &BandwidthRow) -> Self {
        BandwidthCsv {
            nu: r.nu,
            mask_seed_base: r.mask_seed_base,
            successes: r.successes,
            trials: r.trials,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseCsv {
    pub sigma: f64,
    #[serde(rename = "max_L")]
    pub max_l: usize,
    #[serde(rename = "trials_per_L")]
    pub trials_per_l: usize,
    pub lengths_tried: usize,
    pub rerun: bool,
}

impl From<&NoiseRow> for NoiseCsv {
    fn from(r: &NoiseRow) -> Self {
        NoiseCsv {
            sigma: r.sigma,
            max_l: r.max_l,
            trials_per_l: r.trials_per_l,
            lengths_tried: r.lengths_tried,
            rerun: r.rerun,
        }
    }
}

/// One flat row per run record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunCsv {
    pub scan: String,
    pub cell: String,
    pub task: String,
    pub nu: Option<f64>,
    pub length: Option<usize>,
    pub alpha: f64,
    pub beta: f64,
    pub sigma: f64,
    pub lambda: Option<f64>,
    pub mask_seed: u64,
    pub noise_seed: u64,
    pub pattern_seed: Option<u64>,
    pub success: bool,
    pub diverged: bool,
    pub error_value: Option<f64>,
    pub train_nmse: Option<f64>,
    pub frequency_estimate: Option<f64>,
    pub amplitude: Option<f64>,
    pub whole_run_nmse: Option<f64>,
    pub steps: Option<usize>,
    pub duration_secs: f64,
}

impl From<&RunRecord> for RunCsv {
    fn from(r: &RunRecord) -> Self {
        let (task, nu, length) = match &r.spec.task {
            CellTask::Frequency(t) => ("frequency", Some(t.nu), None),
            CellTask::Pattern(t) => ("pattern", None, Some(t.len())),
        };
        let m = r.metrics.as_ref();
        let cell: Vec<String> = r.cell.iter().map(|i| i.to_string()).collect();
        RunCsv {
            scan: r.scan.clone(),
            cell: cell.join("-"),
            task: task.into(),
            nu,
            length,
            alpha: r.spec.reservoir.alpha,
            beta: r.spec.reservoir.beta,
            sigma: r.spec.hardware.noise_sigma,
            lambda: m.map(|m| m.lambda),
            mask_seed: r.seeds.mask,
            noise_seed: r.seeds.noise,
            pattern_seed: r.seeds.pattern,
            success: r.outcome.success,
            diverged: r.outcome.diverged,
            error_value: r.outcome.error_value.is_finite().then_some(r.outcome.error_value),
            train_nmse: m.map(|m| m.train_nmse),
            frequency_estimate: m.and_then(|m| m.frequency_estimate),
            amplitude: m.and_then(|m| m.amplitude),
            whole_run_nmse: m.and_then(|m| m.whole_run_nmse),
            steps: m.map(|m| m.steps),
            duration_secs: r.duration_secs,
        }
    }
}

pub fn write_bandwidth(path: &Path, rows: &[BandwidthRow]) -> Result<()> {
    write_table(path, &rows.iter().map(BandwidthCsv::from).collect::<Vec<_>>())
}

pub fn write_noise(path: &Path, rows: &[NoiseRow]) -> Result<()> {
    write_table(path, &rows.iter().map(NoiseCsv::from).collect::<Vec<_>>())
}

pub fn write_patterns(path: &Path, rows: &[PatternRow]) -> Result<()> {
    write_table(path, rows)
}

pub fn write_curves(path: &Path, points: &[CurvePoint]) -> Result<()> {
    write_table(path, points)
}

pub fn write_runs(path: &Path, records: &[RunRecord]) -> Result<()> {
    write_table(path, &records.iter().map(RunCsv::from).collect::<Vec<_>>())
}
