//! The three studies plus the noise-floor measurement. Cells run on a rayon
//! pool and are merged back in grid order.

use rayon::prelude::*;
use ringrc::reservoir::{drive, ReservoirConfig, ReservoirState};
use ringrc::tasks::{random_pattern, sine_teacher, FrequencyTask};
use ringrc::HardwareChannel;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::run::{run_cell, CellTask, RunRecord, RunSpec, Seeds};
use crate::seed::derive_seed;

pub const BANDWIDTH: &str = "bandwidth";
pub const PATTERNS: &str = "patterns";
pub const NOISE: &str = "noise";
pub const SINGLE: &str = "run";

/// Seed of mask 0; mask `m` uses `base + m`, so the same mask index means
/// the same mask in every scan of one master seed.
pub fn mask_seed_base(config: &ExperimentConfig) -> u64 {
    derive_seed(config.master_seed, "mask", &[])
}

pub fn mask_seed(config: &ExperimentConfig, mask: usize) -> u64 {
    mask_seed_base(config).wrapping_add(mask as u64)
}

pub fn pattern_seed(config: &ExperimentConfig, length: usize, mask: usize, pattern: usize) -> u64 {
    derive_seed(
        config.master_seed,
        "pattern",
        &[length as u64, mask as u64, pattern as u64],
    )
}

pub(crate) fn pool(config: &ExperimentConfig) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| HarnessError::Config(format!("worker pool: {e}")))
}

fn spec(config: &ExperimentConfig, mask: u64, task: CellTask, sigma: f64) -> Result<RunSpec> {
    let r = &config.reservoir;
    let mut reservoir =
        ReservoirConfig::with_random_mask(r.n_neurons, r.alpha, r.beta, r.latency_prefix, mask)?;
    reservoir.roundtrip_time = r.roundtrip_time;
    let mut hardware = config.hardware.model();
    hardware.noise_sigma = sigma;
    Ok(RunSpec {
        reservoir,
        hardware,
        task,
        train_length: config.train_length,
        warmup_length: config.warmup_length,
        autonomous_length: config.autonomous_length,
        washout: config.washout,
        lambda: config.lambda,
        lambda_grid: config.lambda_grid.clone(),
        blowup_bound: config.blowup_bound,
    })
}

fn frequency_task(config: &ExperimentConfig, nu: f64) -> Result<FrequencyTask> {
    let mut t = FrequencyTask::new(nu)?;
    t.threshold = config.task.threshold;
    t.amplitude_tol = config.task.amplitude_tol;
    Ok(t)
}

/// Frequency cell: mask `mask` at relative frequency `nu`.
pub fn frequency_cell(
    config: &ExperimentConfig,
    scan: &str,
    cell: Vec<usize>,
    nu: f64,
    mask: usize,
) -> Result<(RunRecord, Vec<f64>)> {
    let sigma = config.hardware.noise_sigma;
    let seeds = Seeds {
        mask: mask_seed(config, mask),
        noise: derive_seed(
            config.master_seed,
            "noise/frequency",
            &[nu.to_bits(), mask as u64, sigma.to_bits()],
        ),
        pattern: None,
    };
    let task = CellTask::Frequency(frequency_task(config, nu)?);
    let spec = spec(config, seeds.mask, task, sigma)?;
    Ok(run_cell(scan, cell, spec, seeds, config.store_outputs))
}

/// Pattern cell: pattern `pattern` of length `length` on mask `mask`.
/// `replicate` > 0 draws fresh noise for a repeated measurement.
#[allow(clippy::too_many_arguments)]
pub fn pattern_cell(
    config: &ExperimentConfig,
    scan: &str,
    cell: Vec<usize>,
    length: usize,
    mask: usize,
    pattern: usize,
    sigma: f64,
    replicate: u64,
) -> Result<(RunRecord, Vec<f64>)> {
    let p_seed = pattern_seed(config, length, mask, pattern);
    let seeds = Seeds {
        mask: mask_seed(config, mask),
        noise: derive_seed(
            config.master_seed,
            "noise/pattern",
            &[length as u64, mask as u64, pattern as u64, sigma.to_bits(), replicate],
        ),
        pattern: Some(p_seed),
    };
    let mut task = random_pattern(p_seed, length)?;
    task.threshold = config.task.threshold;
    let spec = spec(config, seeds.mask, CellTask::Pattern(task), sigma)?;
    Ok(run_cell(scan, cell, spec, seeds, config.store_outputs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthRow {
    pub nu: f64,
    pub mask_seed_base: u64,
    pub successes: usize,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthScan {
    pub rows: Vec<BandwidthRow>,
    pub records: Vec<RunRecord>,
}

pub fn bandwidth_scan(config: &ExperimentConfig) -> Result<BandwidthScan> {
    config.validate()?;
    let cells: Vec<(usize, usize)> = (0..config.task.nus.len())
        .flat_map(|i| (0..config.masks).map(move |m| (i, m)))
        .collect();
    let records: Vec<RunRecord> = pool(config)?.install(|| {
        cells
            .par_iter()
            .map(|&(i, m)| {
                frequency_cell(config, BANDWIDTH, vec![i, m], config.task.nus[i], m).map(|r| r.0)
            })
            .collect::<Result<_>>()
    })?;
    let rows = config
        .task
        .nus
        .iter()
        .enumerate()
        .map(|(i, &nu)| BandwidthRow {
            nu,
            mask_seed_base: mask_seed_base(config),
            successes: records
                .iter()
                .filter(|r| r.cell[0] == i && r.outcome.success)
                .count(),
            trials: config.masks,
        })
        .collect();
    Ok(BandwidthScan { rows, records })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternRow {
    pub length: usize,
    pub cells: usize,
    pub successes: usize,
    pub success_fraction: f64,
    pub diverged: usize,
    /// Median over cells of the largest windowed NMSE.
    pub median_max_nmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub length: usize,
    pub step: usize,
    /// Mean over cells of the windowed NMSE at `step`; cells that diverged
    /// before `step` or have no score there are left out.
    pub mean_nmse: Option<f64>,
    pub cells: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatternScan {
    pub rows: Vec<PatternRow>,
    pub curves: Vec<CurvePoint>,
    pub records: Vec<RunRecord>,
}

impl PatternScan {
    /// Largest length such that it and every shorter scanned length succeeded
    /// in all cells; 0 if the shortest already fails.
    pub fn max_all_success_length(&self) -> usize {
        let mut rows: Vec<&PatternRow> = self.rows.iter().collect();
        rows.sort_by_key(|r| r.length);
        rows.iter()
            .take_while(|r| r.successes == r.cells)
            .last()
            .map_or(0, |r| r.length)
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn pattern_length_scan(config: &ExperimentConfig) -> Result<PatternScan> {
    config.validate()?;
    let sigma = config.hardware.noise_sigma;
    let cells: Vec<(usize, usize, usize)> = (0..config.task.lengths.len())
        .flat_map(|i| {
            (0..config.masks).flat_map(move |m| (0..config.patterns).map(move |p| (i, m, p)))
        })
        .collect();
    let results: Vec<(RunRecord, Vec<f64>)> = pool(config)?.install(|| {
        cells
            .par_iter()
            .map(|&(i, m, p)| {
                let length = config.task.lengths[i];
                let (rec, series) =
                    pattern_cell(config, PATTERNS, vec![i, m, p], length, m, p, sigma, 0)?;
                let stride = config.curve_stride;
                let sampled: Vec<f64> = series.iter().step_by(stride).copied().collect();
                Ok((rec, sampled))
            })
            .collect::<Result<_>>()
    })?;

    let mut rows = Vec::new();
    let mut curves = Vec::new();
    for (i, &length) in config.task.lengths.iter().enumerate() {
        let group: Vec<&(RunRecord, Vec<f64>)> =
            results.iter().filter(|(r, _)| r.cell[0] == i).collect();
        let successes = group.iter().filter(|(r, _)| r.outcome.success).count();
        rows.push(PatternRow {
            length,
            cells: group.len(),
            successes,
            success_fraction: successes as f64 / group.len() as f64,
            diverged: group.iter().filter(|(r, _)| r.outcome.diverged).count(),
            median_max_nmse: median(group.iter().map(|(r, _)| r.outcome.error_value).collect()),
        });
        let points = config.autonomous_length.div_ceil(config.curve_stride);
        for k in 0..points {
            let vals: Vec<f64> = group
                .iter()
                .filter_map(|(_, s)| s.get(k).copied())
                .filter(|v| v.is_finite())
                .collect();
            curves.push(CurvePoint {
                length,
                step: k * config.curve_stride,
                mean_nmse: (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64),
                cells: vals.len(),
            });
        }
    }
    Ok(PatternScan {
        rows,
        curves,
        records: results.into_iter().map(|(r, _)| r).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseRow {
    pub sigma: f64,
    pub max_l: usize,
    pub trials_per_l: usize,
    /// Lengths evaluated before the search stopped.
    pub lengths_tried: usize,
    /// Set when this row was re-measured after breaking monotonicity.
    pub rerun: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSweep {
    pub rows: Vec<NoiseRow>,
    pub records: Vec<RunRecord>,
    /// max_L is non-increasing in sigma after the re-run.
    pub monotone: bool,
}

/// Pass/fail of every length in `lengths` at noise `sigma`, all evaluated.
pub fn length_outcomes(
    config: &ExperimentConfig,
    sigma: f64,
    lengths: &[usize],
    replicate: u64,
) -> Result<Vec<(usize, bool)>> {
    lengths
        .iter()
        .map(|&l| {
            let (ok, _) = all_patterns_pass(config, sigma, l, replicate, 0)?;
            Ok((l, ok))
        })
        .collect()
}

/// Runs the sweep's `patterns` trials at one length; pattern `p` uses mask `p`.
fn all_patterns_pass(
    config: &ExperimentConfig,
    sigma: f64,
    length: usize,
    replicate: u64,
    sigma_index: usize,
) -> Result<(bool, Vec<RunRecord>)> {
    let records: Vec<RunRecord> = (0..config.patterns)
        .into_par_iter()
        .map(|p| {
            pattern_cell(
                config,
                NOISE,
                vec![sigma_index, length, p, replicate as usize],
                length,
                p,
                p,
                sigma,
                replicate,
            )
            .map(|r| r.0)
        })
        .collect::<Result<_>>()?;
    Ok((records.iter().all(|r| r.outcome.success), records))
}

/// Largest L with every length 2..=L passing, searching upward and stopping
/// at the first failure.
fn max_length(
    config: &ExperimentConfig,
    sigma: f64,
    replicate: u64,
    sigma_index: usize,
) -> Result<(usize, usize, Vec<RunRecord>)> {
    let top = config.task.max_length.min(config.reservoir.n_neurons);
    let mut best = 0;
    let mut tried = 0;
    let mut records = Vec::new();
    for l in 2..=top {
        tried += 1;
        let (ok, mut recs) = all_patterns_pass(config, sigma, l, replicate, sigma_index)?;
        records.append(&mut recs);
        if !ok {
            break;
        }
        best = l;
    }
    Ok((best, tried, records))
}

pub fn noise_sweep(config: &ExperimentConfig) -> Result<NoiseSweep> {
    config.validate()?;
    let pool = pool(config)?;
    pool.install(|| {
        let mut rows = Vec::new();
        let mut records = Vec::new();
        for (i, &sigma) in config.task.sigmas.iter().enumerate() {
            let (max_l, tried, mut recs) = max_length(config, sigma, 0, i)?;
            records.append(&mut recs);
            rows.push(NoiseRow {
                sigma,
                max_l,
                trials_per_l: config.patterns,
                lengths_tried: tried,
                rerun: false,
            });
        }

        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.sort_by(|&a, &b| rows[a].sigma.total_cmp(&rows[b].sigma));
        for w in 1..order.len() {
            let (prev, cur) = (order[w - 1], order[w]);
            if rows[cur].max_l > rows[prev].max_l {
                let (max_l, tried, mut recs) = max_length(config, rows[cur].sigma, 1, cur)?;
                records.append(&mut recs);
                rows[cur].max_l = max_l;
                rows[cur].lengths_tried = tried;
                rows[cur].rerun = true;
            }
        }
        let monotone = order
            .windows(2)
            .all(|w| rows[w[1]].max_l <= rows[w[0]].max_l);
        Ok(NoiseSweep {
            rows,
            records,
            monotone,
        })
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseFloor {
    pub sigma: f64,
    /// Standard deviation of the recorded states with zero input.
    pub zero_input_std: f64,
    /// Standard deviation of the recorded states under a sine drive.
    pub driven_std: f64,
}

/// Records the time-multiplexed states with `I(n) = 0` and under the
/// sine teacher at `nu`, both on mask 0 at noise `sigma`. States are
/// reported before the digital gain, as seen by the photodiode.
pub fn noise_floor(
    config: &ExperimentConfig,
    sigma: f64,
    nu: f64,
    steps: usize,
) -> Result<NoiseFloor> {
    config.validate()?;
    let r = &config.reservoir;
    let reservoir = ReservoirConfig::with_random_mask(
        r.n_neurons,
        r.alpha,
        r.beta,
        r.latency_prefix,
        mask_seed(config, 0),
    )?;
    let mut model = config.hardware.model();
    model.noise_sigma = sigma;
    let gain = model.state_gain.unwrap_or(1.0);
    let noise_seed = derive_seed(config.master_seed, "noise/floor", &[sigma.to_bits()]);
    let skip = config.washout.min(steps / 2);
    let measure = |inputs: &[f64], stream: u64| -> Result<f64> {
        let mut ch = HardwareChannel::with_stream(&model, noise_seed, stream)?;
        let mut state = ReservoirState::zeros(r.n_neurons);
        let traj = drive(&reservoir, Some(&mut ch), &mut state, inputs)?;
        let v: Vec<f64> = traj.as_flat()[skip * r.n_neurons..]
            .iter()
            .map(|x| x / gain)
            .collect();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        Ok((v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt())
    };
    Ok(NoiseFloor {
        sigma,
        zero_input_std: measure(&vec![0.0; steps], 0)?,
        driven_std: measure(&sine_teacher(nu, steps)?, 1)?,
    })
}
