use std::f64::consts::PI;
use std::path::Path;

use ringrc::hardware::HardwareModel;
use ringrc::reservoir::{DEFAULT_BLOWUP_BOUND, DEFAULT_WARMUP, LATENCY_PREFIX, ROUNDTRIP_TIME};
use ringrc::trainer::{DEFAULT_LAMBDA, DEFAULT_WASHOUT};
use ringrc::tasks::{DEFAULT_AMPLITUDE_TOL, DEFAULT_THRESHOLD};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{HarnessError, Result};

/// Static reservoir parameters; the mask itself is drawn per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReservoirSettings {
    pub n_neurons: usize,
    pub alpha: f64,
    pub beta: f64,
    pub latency_prefix: usize,
    pub roundtrip_time: f64,
}

/// Hardware effects with an explicit on/off flag each, so a plain-text
/// config can switch an effect off without losing its parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareSettings {
    pub noise_sigma: f64,
    pub adc: bool,
    pub adc_bits: u32,
    pub dac: bool,
    pub dac_bits: u32,
    pub weights: bool,
    pub weight_bits: u32,
    pub gain: bool,
    pub state_gain: f64,
    pub highpass: bool,
    pub highpass_cutoff: f64,
}

impl HardwareSettings {
    pub fn experimental(noise_sigma: f64) -> Self {
        HardwareSettings {
            noise_sigma,
            adc: true,
            adc_bits: HardwareModel::ADC_BITS,
            dac: true,
            dac_bits: HardwareModel::DAC_BITS,
            weights: true,
            weight_bits: HardwareModel::WEIGHT_BITS,
            gain: true,
            state_gain: HardwareModel::STATE_GAIN,
            highpass: true,
            highpass_cutoff: HardwareModel::HIGHPASS_CUTOFF,
        }
    }

    pub fn ideal() -> Self {
        HardwareSettings {
            noise_sigma: 0.0,
            adc: false,
            dac: false,
            weights: false,
            gain: false,
            highpass: false,
            ..Self::experimental(0.0)
        }
    }

    pub fn model(&self) -> HardwareModel {
        HardwareModel {
            noise_sigma: self.noise_sigma,
            adc_bits: self.adc.then_some(self.adc_bits),
            dac_bits: self.dac.then_some(self.dac_bits),
            weight_bits: self.weights.then_some(self.weight_bits),
            state_gain: self.gain.then_some(self.state_gain),
            highpass_cutoff: self.highpass.then_some(self.highpass_cutoff),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskGrid {
    /// Relative frequencies for the bandwidth scan.
    pub nus: Vec<f64>,
    /// Pattern lengths for the length scan.
    pub lengths: Vec<usize>,
    /// Noise levels for the noise sweep.
    pub sigmas: Vec<f64>,
    /// Longest pattern the noise sweep tries (capped at `n_neurons`).
    pub max_length: usize,
    pub threshold: f64,
    pub amplitude_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub reservoir: ReservoirSettings,
    pub hardware: HardwareSettings,
    pub task: TaskGrid,
    /// Input masks per grid point.
    pub masks: usize,
    /// Patterns per mask in the length scan; patterns per length in the
    /// noise sweep.
    pub patterns: usize,
    pub train_length: usize,
    pub warmup_length: usize,
    pub autonomous_length: usize,
    pub washout: usize,
    pub lambda: f64,
    /// When non-empty, each cell picks its ridge parameter from this grid by
    /// autonomous performance and `lambda` is ignored.
    pub lambda_grid: Vec<f64>,
    pub blowup_bound: f64,
    pub master_seed: u64,
    /// Worker threads; 0 uses one per core.
    pub workers: usize,
    /// Keep autonomous output series inside run records.
    pub store_outputs: bool,
    /// Step between samples of the exported NMSE curves.
    pub curve_stride: usize,
}

/// Which preset a command starts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Frequency,
    Pattern,
    NoiseSweep,
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        match preset {
            Preset::Frequency => Self::frequency(),
            Preset::Pattern => Self::pattern(),
            Preset::NoiseSweep => Self::noise_sweep(),
        }
    }

    /// Bandwidth scan at the experimental noise level.
    pub fn frequency() -> Self {
        ExperimentConfig {
            reservoir: ReservoirSettings {
                n_neurons: 100,
                alpha: 0.95,
                beta: 0.5,
                latency_prefix: LATENCY_PREFIX,
                roundtrip_time: ROUNDTRIP_TIME,
            },
            hardware: HardwareSettings::experimental(1e-3),
            task: TaskGrid {
                nus: vec![
                    0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08, 0.09, 0.1, 0.2, 0.5, 1.0,
                    2.0, 3.0, PI,
                ],
                lengths: (2..=20).collect(),
                sigmas: vec![1e-8, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2],
                max_length: 100,
                threshold: DEFAULT_THRESHOLD,
                amplitude_tol: DEFAULT_AMPLITUDE_TOL,
            },
            masks: 10,
            patterns: 1,
            train_length: 1000,
            warmup_length: DEFAULT_WARMUP,
            autonomous_length: 10_000,
            washout: DEFAULT_WASHOUT,
            lambda: DEFAULT_LAMBDA,
            lambda_grid: Vec::new(),
            blowup_bound: DEFAULT_BLOWUP_BOUND,
            master_seed: 1,
            workers: 0,
            store_outputs: false,
            curve_stride: 10,
        }
    }

    /// Pattern-length scan: 5 masks x 20 patterns per length.
    pub fn pattern() -> Self {
        let mut c = Self::frequency();
        c.reservoir.alpha = 1.3;
        c.reservoir.beta = 4.0;
        c.masks = 5;
        c.patterns = 20;
        c
    }

    /// Noise sweep: 10 patterns per length, amplifier filter off.
    pub fn noise_sweep() -> Self {
        let mut c = Self::pattern();
        c.hardware.highpass = false;
        c.masks = 1;
        c.patterns = 10;
        c
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Config(m));
        let r = &self.reservoir;
        if r.n_neurons < 2 {
            return bad(format!("n_neurons must be >= 2, got {}", r.n_neurons));
        }
        if r.latency_prefix >= r.n_neurons {
            return bad("latency_prefix must be < n_neurons".into());
        }
        if !(r.alpha.is_finite() && r.beta.is_finite()) {
            return bad("alpha and beta must be finite".into());
        }
        if !(r.roundtrip_time > 0.0) {
            return bad("roundtrip_time must be > 0".into());
        }
        self.hardware.model().validate()?;
        for (name, v) in [
            ("masks", self.masks),
            ("patterns", self.patterns),
            ("warmup_length", self.warmup_length),
            ("autonomous_length", self.autonomous_length),
            ("curve_stride", self.curve_stride),
        ] {
            if v == 0 {
                return bad(format!("{name} must be >= 1"));
            }
        }
        if self.train_length < self.washout + 2 {
            return bad(format!(
                "train_length {} leaves no usable rows after washout {}",
                self.train_length, self.washout
            ));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if self.lambda_grid.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return bad("lambda_grid entries must be >= 0".into());
        }
        if !(self.blowup_bound > 0.0) {
            return bad("blowup_bound must be > 0".into());
        }
        let t = &self.task;
        if let Some(nu) = t.nus.iter().find(|nu| !(**nu > 0.0 && **nu <= PI)) {
            return bad(format!("frequency {nu} outside (0, pi]"));
        }
        if t.lengths.iter().any(|&l| l < 2) {
            return bad("pattern lengths must be >= 2".into());
        }
        if t.sigmas.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return bad("sigmas must be >= 0".into());
        }
        if t.max_length < 2 {
            return bad("max_length must be >= 2".into());
        }
        if !(t.threshold > 0.0 && t.amplitude_tol >= 0.0) {
            return bad("threshold must be > 0 and amplitude_tol >= 0".into());
        }
        Ok(())
    }

    /// Reads a TOML or JSON document (by extension) and lays it over the
    /// preset; fields missing from the document keep their preset value.
    pub fn load(path: &Path, preset: Preset) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let doc: Value = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text).map_err(|e| HarnessError::parse(path, e))?,
            _ => {
                let t: toml::Value = toml::from_str(&text).map_err(|e| HarnessError::parse(path, e))?;
                serde_json::to_value(t).map_err(|e| HarnessError::parse(path, e))?
            }
        };
        let mut base = serde_json::to_value(Self::preset(preset)).expect("config serialises");
        merge(&mut base, doc);
        let cfg: Self = serde_json::from_value(base).map_err(|e| HarnessError::parse(path, e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises to toml")
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
