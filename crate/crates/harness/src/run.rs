//! One experiment cell: train on the teacher, close the loop, score.

use std::time::Instant;

use ringrc::hardware::HardwareModel;
use ringrc::reservoir::{autonomous_run, AutonomousOptions, ReservoirConfig};
use ringrc::tasks::{
    estimate_frequency, evaluate_frequency_run, evaluate_pattern_run, periodic_teacher,
    sine_amplitude, sine_teacher, FrequencyTask, PatternTask, TaskOutcome,
};
use ringrc::{harvest, ridge_solve, HardwareChannel};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::seed::series_digest;

/// Noise stream used while harvesting training states.
pub const TRAIN_STREAM: u64 = 0;
/// Noise stream used during warmup and generation.
pub const GENERATE_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CellTask {
    Frequency(FrequencyTask),
    Pattern(PatternTask),
}

/// Everything a run depends on apart from the noise seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub reservoir: ReservoirConfig,
    pub hardware: HardwareModel,
    pub task: CellTask,
    pub train_length: usize,
    pub warmup_length: usize,
    pub autonomous_length: usize,
    pub washout: usize,
    pub lambda: f64,
    pub lambda_grid: Vec<f64>,
    pub blowup_bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub mask: u64,
    pub noise: u64,
    pub pattern: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub lambda: f64,
    pub train_nmse: f64,
    pub rank_deficient: bool,
    pub frequency_estimate: Option<f64>,
    pub amplitude: Option<f64>,
    pub whole_run_nmse: Option<f64>,
    pub steps: usize,
    pub clipped_weights: usize,
    /// SHA-256 over the bit patterns of the autonomous outputs.
    pub output_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scan: String,
    /// Position of the cell inside its scan.
    pub cell: Vec<usize>,
    pub spec: RunSpec,
    pub seeds: Seeds,
    pub outcome: TaskOutcome,
    pub metrics: Option<Metrics>,
    /// Set when the cell could not be run at all.
    pub error: Option<String>,
    pub outputs: Option<Vec<f64>>,
    pub duration_secs: f64,
}

impl RunRecord {
    pub fn file_stem(&self) -> String {
        let idx: Vec<String> = self.cell.iter().map(|i| i.to_string()).collect();
        format!("{}-{}", self.scan, idx.join("-"))
    }
}

/// Raw result of executing a spec.
#[derive(Debug, Clone)]
pub struct Execution {
    pub outputs: Vec<f64>,
    pub outcome: TaskOutcome,
    pub metrics: Metrics,
    /// Running windowed NMSE for pattern tasks, empty otherwise.
    pub nmse_series: Vec<f64>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn teacher(task: &CellTask, len: usize) -> Result<Vec<f64>> {
    Ok(match task {
        CellTask::Frequency(t) => sine_teacher(t.nu, len)?,
        CellTask::Pattern(t) => periodic_teacher(&t.pattern, len),
    })
}

pub fn execute(spec: &RunSpec, noise_seed: u64) -> Result<Execution> {
    let train = teacher(&spec.task, spec.train_length)?;
    let warmup = teacher(&spec.task, spec.warmup_length)?;
    let mut ch = HardwareChannel::with_stream(&spec.hardware, noise_seed, TRAIN_STREAM)?;
    let set = harvest(&spec.reservoir, Some(&mut ch), &train, spec.washout)?;

    let lambdas = if spec.lambda_grid.is_empty() {
        vec![spec.lambda]
    } else {
        spec.lambda_grid.clone()
    };
    let options = AutonomousOptions {
        blowup_bound: spec.blowup_bound,
        record_states: false,
    };
    let mut best: Option<(f64, Execution)> = None;
    for lambda in lambdas {
        let sol = ridge_solve(&set, lambda)?;
        let mut gen = HardwareChannel::with_stream(&spec.hardware, noise_seed, GENERATE_STREAM)?;
        let run = autonomous_run(
            &spec.reservoir,
            Some(&mut gen),
            &sol.weights,
            &warmup,
            spec.autonomous_length,
            options,
        )?;
        let mut metrics = Metrics {
            lambda,
            train_nmse: sol.train_nmse,
            rank_deficient: sol.rank_deficient,
            frequency_estimate: None,
            amplitude: None,
            whole_run_nmse: None,
            steps: run.outputs.len(),
            clipped_weights: run.clipped_weights,
            output_digest: series_digest(&run.outputs),
        };
        let (outcome, nmse_series, score) = match &spec.task {
            CellTask::Frequency(t) => {
                let o = evaluate_frequency_run(&run.outputs, t, run.diverged);
                metrics.frequency_estimate = estimate_frequency(&run.outputs).ok();
                metrics.amplitude = Some(sine_amplitude(&run.outputs));
                (o, Vec::new(), o.error_value)
            }
            CellTask::Pattern(t) => {
                let rep = evaluate_pattern_run(
                    &run.outputs,
                    t,
                    t.evaluation(spec.warmup_length),
                    run.diverged,
                );
                metrics.whole_run_nmse = finite(rep.whole_run_nmse);
                let score = metrics.whole_run_nmse.unwrap_or(f64::INFINITY);
                (rep.outcome, rep.nmse_series, score)
            }
        };
        let score = if outcome.diverged { f64::INFINITY } else { score };
        if best.as_ref().is_none_or(|(s, _)| score < *s) {
            best = Some((
                score,
                Execution {
                    outputs: run.outputs,
                    outcome,
                    metrics,
                    nmse_series,
                },
            ));
        }
    }
    Ok(best.expect("at least one lambda").1)
}

/// Runs a cell and wraps the result in a record; model errors become a
/// failed record rather than aborting.
pub fn run_cell(
    scan: &str,
    cell: Vec<usize>,
    spec: RunSpec,
    seeds: Seeds,
    store_outputs: bool,
) -> (RunRecord, Vec<f64>) {
    let start = Instant::now();
    let result = execute(&spec, seeds.noise);
    let duration_secs = start.elapsed().as_secs_f64();
    match result {
        Ok(ex) => (
            RunRecord {
                scan: scan.to_string(),
                cell,
                spec,
                seeds,
                outcome: ex.outcome,
                metrics: Some(ex.metrics),
                error: None,
                outputs: store_outputs.then_some(ex.outputs),
                duration_secs,
            },
            ex.nmse_series,
        ),
        Err(e) => (
            RunRecord {
                scan: scan.to_string(),
                cell,
                spec,
                seeds,
                outcome: TaskOutcome {
                    success: false,
                    error_value: f64::INFINITY,
                    diverged: false,
                },
                metrics: None,
                error: Some(e.to_string()),
                outputs: None,
                duration_secs,
            },
            Vec::new(),
        ),
    }
}

/// Re-executes a record and checks that outputs and metrics match bit for bit.
pub fn replay(record: &RunRecord) -> Result<Execution> {
    let ex = execute(&record.spec, record.seeds.noise)?;
    let Some(expected) = &record.metrics else {
        return Err(HarnessError::Replay("record holds no metrics".into()));
    };
    if ex.metrics != *expected {
        return Err(HarnessError::Replay(format!(
            "metrics differ: recorded {expected:?}, replayed {:?}",
            ex.metrics
        )));
    }
    if let Some(stored) = &record.outputs {
        let same = stored.len() == ex.outputs.len()
            && stored.iter().zip(&ex.outputs).all(|(a, b)| a.to_bits() == b.to_bits());
        if !same {
            return Err(HarnessError::Replay("stored outputs differ".into()));
        }
    }
    if ex.outcome != record.outcome {
        return Err(HarnessError::Replay(format!(
            "outcome differs: recorded {:?}, replayed {:?}",
            record.outcome, ex.outcome
        )));
    }
    Ok(ex)
}
