use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ringrc_harness::export::{self, RECORDS_DIR};
use ringrc_harness::scan::{self, SINGLE};
use ringrc_harness::{ExperimentConfig, Preset};

#[derive(Parser)]
#[command(name = "ringrc", version, about = "Ring reservoir computer with output feedback: experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and run a single cell.
    Run {
        #[arg(value_enum)]
        task: TaskKind,
        /// Relative frequency for the frequency task.
        #[arg(long, default_value_t = 0.1)]
        nu: f64,
        /// Pattern length for the pattern task.
        #[arg(long, default_value_t = 10)]
        length: usize,
        /// Mask index.
        #[arg(long, default_value_t = 0)]
        mask: usize,
        /// Pattern index.
        #[arg(long, default_value_t = 0)]
        pattern: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Frequency-task success counts over the `nus` grid.
    ScanBandwidth {
        #[command(flatten)]
        common: Common,
    },
    /// Pattern-task success and mean NMSE curves over the `lengths` grid.
    ScanPatterns {
        #[command(flatten)]
        common: Common,
    },
    /// Largest generable pattern length for each noise level in `sigmas`.
    SweepNoise {
        #[command(flatten)]
        common: Common,
    },
    /// State standard deviation with zero input and under a sine drive.
    NoiseFloor {
        /// Frequency of the reference drive.
        #[arg(long, default_value_t = 0.1)]
        nu: f64,
        #[arg(long, default_value_t = 2000)]
        steps: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Re-execute a stored run record and verify it bit for bit.
    Replay { record: PathBuf },
    /// Flatten a directory of run records into one CSV table.
    Export {
        records: PathBuf,
        #[arg(long, default_value = "runs.csv")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskKind {
    Frequency,
    Pattern,
}

#[derive(Args)]
struct Common {
    /// TOML or JSON experiment document laid over the command's defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[command(flatten)]
    set: Overrides,
}

/// One flag per configuration field. Lists are comma separated; integer
/// lists also accept `a..=b`; `none` empties a list.
#[derive(Args, Default)]
struct Overrides {
    #[arg(long)]
    n_neurons: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    beta: Option<f64>,
    #[arg(long)]
    latency_prefix: Option<usize>,
    #[arg(long)]
    roundtrip_time: Option<f64>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    #[arg(long)]
    adc: Option<bool>,
    #[arg(long)]
    adc_bits: Option<u32>,
    #[arg(long)]
    dac: Option<bool>,
    #[arg(long)]
    dac_bits: Option<u32>,
    #[arg(long)]
    weights: Option<bool>,
    #[arg(long)]
    weight_bits: Option<u32>,
    #[arg(long)]
    gain: Option<bool>,
    #[arg(long)]
    state_gain: Option<f64>,
    #[arg(long)]
    highpass: Option<bool>,
    #[arg(long)]
    highpass_cutoff: Option<f64>,
    #[arg(long)]
    nus: Option<String>,
    #[arg(long)]
    lengths: Option<String>,
    #[arg(long)]
    sigmas: Option<String>,
    #[arg(long)]
    max_length: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    amplitude_tol: Option<f64>,
    #[arg(long)]
    masks: Option<usize>,
    #[arg(long)]
    patterns: Option<usize>,
    #[arg(long)]
    train_length: Option<usize>,
    #[arg(long)]
    warmup_length: Option<usize>,
    #[arg(long)]
    autonomous_length: Option<usize>,
    #[arg(long)]
    washout: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    lambda_grid: Option<String>,
    #[arg(long)]
    blowup_bound: Option<f64>,
    #[arg(long)]
    master_seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    store_outputs: Option<bool>,
    #[arg(long)]
    curve_stride: Option<usize>,
}

fn float_list(s: &str) -> Result<Vec<f64>> {
    if s.trim() == "none" {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|v| v.trim().parse::<f64>().with_context(|| format!("bad number {v:?}")))
        .collect()
}

fn int_list(s: &str) -> Result<Vec<usize>> {
    if s.trim() == "none" {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for part in s.split(',') {
        let part = part.trim();
        if let Some((a, b)) = part.split_once("..=") {
            out.extend(a.parse::<usize>()?..=b.parse::<usize>()?);
        } else {
            out.push(part.parse::<usize>().with_context(|| format!("bad integer {part:?}"))?);
        }
    }
    Ok(out)
}

macro_rules! apply {
    ($src:expr, $($field:ident => $dst:expr),* $(,)?) => {
        $(if let Some(v) = $src.$field { $dst = v; })*
    };
}

impl Overrides {
    fn apply(self, c: &mut ExperimentConfig) -> Result<()> {
        apply!(self,
            n_neurons => c.reservoir.n_neurons,
            alpha => c.reservoir.alpha,
            beta => c.reservoir.beta,
            latency_prefix => c.reservoir.latency_prefix,
            roundtrip_time => c.reservoir.roundtrip_time,
            noise_sigma => c.hardware.noise_sigma,
            adc => c.hardware.adc,
            adc_bits => c.hardware.adc_bits,
            dac => c.hardware.dac,
            dac_bits => c.hardware.dac_bits,
            weights => c.hardware.weights,
            weight_bits => c.hardware.weight_bits,
            gain => c.hardware.gain,
            state_gain => c.hardware.state_gain,
            highpass => c.hardware.highpass,
            highpass_cutoff => c.hardware.highpass_cutoff,
            max_length => c.task.max_length,
            threshold => c.task.threshold,
            amplitude_tol => c.task.amplitude_tol,
            masks => c.masks,
            patterns => c.patterns,
            train_length => c.train_length,
            warmup_length => c.warmup_length,
            autonomous_length => c.autonomous_length,
            washout => c.washout,
            lambda => c.lambda,
            blowup_bound => c.blowup_bound,
            master_seed => c.master_seed,
            workers => c.workers,
            store_outputs => c.store_outputs,
            curve_stride => c.curve_stride,
        );
        if let Some(s) = self.nus {
            c.task.nus = float_list(&s)?;
        }
        if let Some(s) = self.lengths {
            c.task.lengths = int_list(&s)?;
        }
        if let Some(s) = self.sigmas {
            c.task.sigmas = float_list(&s)?;
        }
        if let Some(s) = self.lambda_grid {
            c.lambda_grid = float_list(&s)?;
        }
        Ok(())
    }
}

impl Common {
    fn resolve(self, preset: Preset) -> Result<(ExperimentConfig, PathBuf)> {
        let mut config = match &self.config {
            Some(p) => ExperimentConfig::load(p, preset)?,
            None => ExperimentConfig::preset(preset),
        };
        self.set.apply(&mut config)?;
        config.validate()?;
        std::fs::create_dir_all(&self.out)
            .with_context(|| format!("creating {}", self.out.display()))?;
        let cfg_path = self.out.join("config.toml");
        std::fs::write(&cfg_path, config.to_toml())
            .with_context(|| format!("writing {}", cfg_path.display()))?;
        Ok((config, self.out))
    }
}

fn records_dir(out: &Path) -> PathBuf {
    out.join(RECORDS_DIR)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            task,
            nu,
            length,
            mask,
            pattern,
            mut common,
        } => {
            if common.set.store_outputs.is_none() {
                common.set.store_outputs = Some(true);
            }
            let preset = match task {
                TaskKind::Frequency => Preset::Frequency,
                TaskKind::Pattern => Preset::Pattern,
            };
            let (config, out) = common.resolve(preset)?;
            let (record, _) = match task {
                TaskKind::Frequency => {
                    scan::frequency_cell(&config, SINGLE, vec![mask], nu, mask)?
                }
                TaskKind::Pattern => scan::pattern_cell(
                    &config,
                    SINGLE,
                    vec![length, mask, pattern],
                    length,
                    mask,
                    pattern,
                    config.hardware.noise_sigma,
                    0,
                )?,
            };
            let path = export::write_record(&records_dir(&out), &record)?;
            if let Some(err) = &record.error {
                println!("run failed to execute: {err}");
            }
            let m = record.metrics.as_ref();
            println!(
                "success={} error_value={:e} diverged={} train_nmse={} record={}",
                record.outcome.success,
                record.outcome.error_value,
                record.outcome.diverged,
                m.map_or("-".into(), |m| format!("{:e}", m.train_nmse)),
                path.display()
            );
        }
        Command::ScanBandwidth { common } => {
            let (config, out) = common.resolve(Preset::Frequency)?;
            let res = scan::bandwidth_scan(&config)?;
            export::write_bandwidth(&out.join("bandwidth.csv"), &res.rows)?;
            export::write_records(&records_dir(&out), &res.records)?;
            println!("nu\tsuccesses/trials");
            for r in &res.rows {
                println!("{}\t{}/{}", r.nu, r.successes, r.trials);
            }
        }
        Command::ScanPatterns { common } => {
            let (config, out) = common.resolve(Preset::Pattern)?;
            let res = scan::pattern_length_scan(&config)?;
            export::write_patterns(&out.join("patterns.csv"), &res.rows)?;
            export::write_curves(&out.join("pattern_curves.csv"), &res.curves)?;
            export::write_records(&records_dir(&out), &res.records)?;
            println!("L\tsuccesses/cells\tmedian max NMSE");
            for r in &res.rows {
                println!("{}\t{}/{}\t{:e}", r.length, r.successes, r.cells, r.median_max_nmse);
            }
            println!("max all-success L: {}", res.max_all_success_length());
        }
        Command::SweepNoise { common } => {
            let (config, out) = common.resolve(Preset::NoiseSweep)?;
            let res = scan::noise_sweep(&config)?;
            export::write_noise(&out.join("noise_sweep.csv"), &res.rows)?;
            export::write_records(&records_dir(&out), &res.records)?;
            println!("sigma\tmax_L");
            for r in &res.rows {
                println!("{:e}\t{}{}", r.sigma, r.max_l, if r.rerun { " (re-run)" } else { "" });
            }
            if !res.monotone {
                println!("warning: max_L increases with sigma after one re-run");
            }
        }
        Command::NoiseFloor { nu, steps, common } => {
            let (config, out) = common.resolve(Preset::Frequency)?;
            let floor = scan::noise_floor(&config, config.hardware.noise_sigma, nu, steps)?;
            export::write_table(&out.join("noise_floor.csv"), &[floor])?;
            println!(
                "sigma={:e} zero-input std={:e} driven std={:e}",
                floor.sigma, floor.zero_input_std, floor.driven_std
            );
        }
        Command::Replay { record } => {
            let rec = export::read_record(&record)?;
            let ex = ringrc_harness::replay(&rec)?;
            println!(
                "replayed {} steps, digest {} matches",
                ex.outputs.len(),
                ex.metrics.output_digest
            );
        }
        Command::Export { records, out } => {
            let recs = export::read_records(&records)?;
            if recs.is_empty() {
                bail!("no records in {}", records.display());
            }
            export::write_runs(&out, &recs)?;
            println!("wrote {} rows to {}", recs.len(), out.display());
        }
    }
    Ok(())
}
