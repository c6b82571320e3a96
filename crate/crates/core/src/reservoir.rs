//! Discrete-time ring reservoir with a sine nonlinearity and a linear readout.
//!
//! Node `i >= 1` is driven by its predecessor from the previous step; node 0
//! closes the ring through `x_{N-1}(n-1)`, one step further back. Serialised
//! in neuron order this is a delay line of `N + 1` samples, which is what the
//! high-pass filter of the hardware model sees.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hardware::HardwareChannel;

/// Roundtrip time of the physical delay loop, seconds.
pub const ROUNDTRIP_TIME: f64 = 7.93e-6;
/// Leading mask entries that never see the input because of readout latency.
pub const LATENCY_PREFIX: usize = 23;
pub const DEFAULT_WARMUP: usize = 128;
pub const DEFAULT_BLOWUP_BOUND: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReservoirConfig {
    pub n_neurons: usize,
    pub alpha: f64,
    pub beta: f64,
    pub mask: Vec<f64>,
    pub latency_prefix: usize,
    pub roundtrip_time: f64,
}

impl ReservoirConfig {
    pub fn new(alpha: f64, beta: f64, mask: Vec<f64>, latency_prefix: usize) -> Result<Self> {
        let cfg = ReservoirConfig {
            n_neurons: mask.len(),
            alpha,
            beta,
            mask,
            latency_prefix,
            roundtrip_time: ROUNDTRIP_TIME,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Config with a freshly drawn mask, see [`make_mask`].
    pub fn with_random_mask(
        n_neurons: usize,
        alpha: f64,
        beta: f64,
        latency_prefix: usize,
        mask_seed: u64,
    ) -> Result<Self> {
        let mask = make_mask(mask_seed, n_neurons, latency_prefix)?;
        Self::new(alpha, beta, mask, latency_prefix)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_neurons < 2 {
            return Err(Error::Config(format!(
                "need at least 2 neurons, got {}",
                self.n_neurons
            )));
        }
        if self.mask.len() != self.n_neurons {
            return Err(Error::Dimension {
                expected: self.n_neurons,
                actual: self.mask.len(),
            });
        }
        if self.latency_prefix >= self.n_neurons {
            return Err(Error::Config(format!(
                "latency prefix {} must be below neuron count {}",
                self.latency_prefix, self.n_neurons
            )));
        }
        if !self.alpha.is_finite() || !self.beta.is_finite() {
            return Err(Error::Config("alpha and beta must be finite".into()));
        }
        if !(self.roundtrip_time > 0.0) {
            return Err(Error::Config("roundtrip time must be positive".into()));
        }
        if self.mask.iter().any(|m| !(-1.0..=1.0).contains(m)) {
            return Err(Error::Config("mask entries must lie in [-1, 1]".into()));
        }
        if self.mask[..self.latency_prefix].iter().any(|&m| m != 0.0) {
            return Err(Error::Config(
                "mask entries inside the latency prefix must be zero".into(),
            ));
        }
        Ok(())
    }
}

/// `n` values uniform on [-1, 1] with the first `latency_prefix` zeroed.
pub fn make_mask(seed: u64, n: usize, latency_prefix: usize) -> Result<Vec<f64>> {
    if latency_prefix >= n {
        return Err(Error::Config(format!(
            "latency prefix {latency_prefix} must be below neuron count {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mask: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
    mask[..latency_prefix].fill(0.0);
    Ok(mask)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReservoirState {
    pub x: Vec<f64>,
    /// `x_{N-1}(n-1)`, feeds node 0 at the next step.
    pub x_last_prev: f64,
}

impl ReservoirState {
    pub fn zeros(n: usize) -> Self {
        ReservoirState {
            x: vec![0.0; n],
            x_last_prev: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadoutWeights(Vec<f64>);

impl ReadoutWeights {
    pub fn new(w: Vec<f64>) -> Self {
        ReadoutWeights(w)
    }

    pub fn zeros(n: usize) -> Self {
        ReadoutWeights(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        ReadoutWeights(self.0.iter().map(|w| w * factor).collect())
    }
}

/// Row `n` holds the observed state right after input `inputs[n]` was applied.
/// With a hardware channel the rows are what the acquisition path delivers
/// (quantized and amplified), otherwise the raw neuron values.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StateTrajectory {
    n_neurons: usize,
    states: Vec<f64>,
    inputs: Vec<f64>,
}

impl StateTrajectory {
    pub fn new(n_neurons: usize) -> Self {
        StateTrajectory {
            n_neurons,
            states: Vec::new(),
            inputs: Vec::new(),
        }
    }

    fn with_capacity(n_neurons: usize, rows: usize) -> Self {
        StateTrajectory {
            n_neurons,
            states: Vec::with_capacity(n_neurons * rows),
            inputs: Vec::with_capacity(rows),
        }
    }

    fn push(&mut self, row: &[f64], input: f64) {
        debug_assert_eq!(row.len(), self.n_neurons);
        self.states.extend_from_slice(row);
        self.inputs.push(input);
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn n_neurons(&self) -> usize {
        self.n_neurons
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.states[n * self.n_neurons..(n + 1) * self.n_neurons]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.states.chunks_exact(self.n_neurons.max(1))
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    /// All states in row-major order.
    pub fn as_flat(&self) -> &[f64] {
        &self.states
    }
}

fn check_state(state: &ReservoirState, config: &ReservoirConfig) -> Result<()> {
    if state.x.len() != config.n_neurons {
        return Err(Error::Dimension {
            expected: config.n_neurons,
            actual: state.x.len(),
        });
    }
    Ok(())
}

/// One step of the ring, in place. `scratch` must have length N.
fn advance(
    state: &mut ReservoirState,
    input: f64,
    config: &ReservoirConfig,
    hw: Option<&mut HardwareChannel>,
    scratch: &mut [f64],
) {
    let n = config.n_neurons;
    let (alpha, beta) = (config.alpha, config.beta);
    let x = &state.x;
    match hw {
        None => {
            scratch[0] = (alpha * state.x_last_prev + beta * (config.mask[0] * input)).sin();
            for i in 1..n {
                scratch[i] = (alpha * x[i - 1] + beta * (config.mask[i] * input)).sin();
            }
        }
        Some(ch) => {
            for i in 0..n {
                let prev = if i == 0 { state.x_last_prev } else { x[i - 1] };
                let feedback = ch.feedback(alpha * prev);
                let drive = beta * ch.dac(config.mask[i] * input);
                scratch[i] = ch.perturb((feedback + drive).sin());
            }
        }
    }
    state.x_last_prev = state.x[n - 1];
    state.x.copy_from_slice(scratch);
}

/// Computes the next state from `state` and the input `I(n)`.
pub fn step(
    state: &ReservoirState,
    input: f64,
    config: &ReservoirConfig,
    hw: Option<&mut HardwareChannel>,
) -> Result<ReservoirState> {
    check_state(state, config)?;
    if !input.is_finite() {
        return Err(Error::NonFiniteInput(input));
    }
    let mut next = state.clone();
    let mut scratch = vec![0.0; config.n_neurons];
    advance(&mut next, input, config, hw, &mut scratch);
    Ok(next)
}

fn observe(state: &ReservoirState, hw: Option<&HardwareChannel>, out: &mut [f64]) {
    match hw {
        Some(ch) => ch.acquire(&state.x, out),
        None => out.copy_from_slice(&state.x),
    }
}

/// Teacher-forced drive: applies one step per input and records the
/// observed state after each. `state` is left at the final state.
pub fn drive(
    config: &ReservoirConfig,
    mut hw: Option<&mut HardwareChannel>,
    state: &mut ReservoirState,
    inputs: &[f64],
) -> Result<StateTrajectory> {
    check_state(state, config)?;
    if let Some(&bad) = inputs.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput(bad));
    }
    let n = config.n_neurons;
    let mut traj = StateTrajectory::with_capacity(n, inputs.len());
    let mut scratch = vec![0.0; n];
    let mut observed = vec![0.0; n];
    for &u in inputs {
        advance(state, u, config, hw.as_deref_mut(), &mut scratch);
        observe(state, hw.as_deref(), &mut observed);
        traj.push(&observed, u);
    }
    Ok(traj)
}

/// `sum_i w_i x_i`.
pub fn readout(states: &[f64], weights: &ReadoutWeights) -> Result<f64> {
    if states.len() != weights.len() {
        return Err(Error::Dimension {
            expected: weights.len(),
            actual: states.len(),
        });
    }
    Ok(dot(states, weights.as_slice()))
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, w)| x * w).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AutonomousOptions {
    pub blowup_bound: f64,
    /// Keep the full state trajectory of the generation phase.
    pub record_states: bool,
}

impl Default for AutonomousOptions {
    fn default() -> Self {
        AutonomousOptions {
            blowup_bound: DEFAULT_BLOWUP_BOUND,
            record_states: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutonomousRun {
    /// `outputs[k]` is the prediction of the teacher value at index `warmup_len + k`.
    pub outputs: Vec<f64>,
    /// Row `k` is the state after `outputs[k]` was fed back.
    pub trajectory: StateTrajectory,
    pub diverged: bool,
    /// Weights clipped by fixed-point conversion.
    pub clipped_weights: usize,
}

/// Teacher-forced warmup from the zero state, then closed-loop generation
/// where each output is fed back as the next input.
pub fn autonomous_run(
    config: &ReservoirConfig,
    mut hw: Option<&mut HardwareChannel>,
    weights: &ReadoutWeights,
    warmup: &[f64],
    n_steps: usize,
    options: AutonomousOptions,
) -> Result<AutonomousRun> {
    config.validate()?;
    if warmup.is_empty() {
        return Err(Error::Config("warmup series must not be empty".into()));
    }
    if weights.len() != config.n_neurons {
        return Err(Error::Dimension {
            expected: config.n_neurons,
            actual: weights.len(),
        });
    }
    let n = config.n_neurons;
    let (weights, clipped_weights) = match hw.as_deref() {
        Some(ch) => ch.model().effective_weights(weights),
        None => (weights.clone(), 0),
    };

    let mut state = ReservoirState::zeros(n);
    drive(config, hw.as_deref_mut(), &mut state, warmup)?;

    let mut outputs = Vec::with_capacity(n_steps);
    let mut trajectory = if options.record_states {
        StateTrajectory::with_capacity(n, n_steps)
    } else {
        StateTrajectory::new(n)
    };
    let mut scratch = vec![0.0; n];
    let mut observed = vec![0.0; n];
    let mut diverged = false;
    for _ in 0..n_steps {
        observe(&state, hw.as_deref(), &mut observed);
        let y = dot(&observed, weights.as_slice());
        if !y.is_finite() || y.abs() > options.blowup_bound {
            diverged = true;
            break;
        }
        outputs.push(y);
        advance(&mut state, y, config, hw.as_deref_mut(), &mut scratch);
        if options.record_states {
            observe(&state, hw.as_deref(), &mut observed);
            trajectory.push(&observed, y);
        }
    }
    Ok(AutonomousRun {
        outputs,
        trajectory,
        diverged,
        clipped_weights,
    })
}
