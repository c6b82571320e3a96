//! Imperfections of the opto-electronic loop and its digital readout.
//!
//! Inside one reservoir step the effects are applied in a fixed order:
//! high-pass on the feedback term, sine nonlinearity, additive Gaussian
//! noise. The acquisition path then applies ADC quantization followed by
//! the digital state gain, and the masked drive signal `M_i * I(n)` passes
//! through the DAC before entering the loop. Every effect can be switched
//! off on its own; with all of them off the channel reproduces the ideal
//! reservoir bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reservoir::ReadoutWeights;

/// Full-scale range of both converters, aligned with the state normalisation.
pub const CONVERTER_RANGE: (f64, f64) = (-1.0, 1.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardwareModel {
    /// Standard deviation of the additive state noise; 0 disables it.
    pub noise_sigma: f64,
    pub adc_bits: Option<u32>,
    pub dac_bits: Option<u32>,
    /// Readout weight width including the sign bit.
    pub weight_bits: Option<u32>,
    pub state_gain: Option<f64>,
    /// Cutoff of the AC-coupled amplifier in cycles per neuron sample.
    pub highpass_cutoff: Option<f64>,
}

impl Default for HardwareModel {
    fn default() -> Self {
        Self::ideal()
    }
}

impl HardwareModel {
    pub const ADC_BITS: u32 = 14;
    pub const DAC_BITS: u32 = 16;
    pub const WEIGHT_BITS: u32 = 25;
    pub const STATE_GAIN: f64 = 8.0;
    pub const HIGHPASS_CUTOFF: f64 = 1e-4;

    /// Every effect disabled.
    pub fn ideal() -> Self {
        HardwareModel {
            noise_sigma: 0.0,
            adc_bits: None,
            dac_bits: None,
            weight_bits: None,
            state_gain: None,
            highpass_cutoff: None,
        }
    }

    /// The experimental setup: 14-bit ADC, 16-bit DAC, 25-bit weights,
    /// x8 state gain and the amplifier high-pass, with the given noise level.
    pub fn experimental(noise_sigma: f64) -> Self {
        HardwareModel {
            noise_sigma,
            adc_bits: Some(Self::ADC_BITS),
            dac_bits: Some(Self::DAC_BITS),
            weight_bits: Some(Self::WEIGHT_BITS),
            state_gain: Some(Self::STATE_GAIN),
            highpass_cutoff: Some(Self::HIGHPASS_CUTOFF),
        }
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise_sigma = sigma;
        self
    }

    pub fn without_highpass(mut self) -> Self {
        self.highpass_cutoff = None;
        self
    }

    pub fn is_ideal(&self) -> bool {
        *self == Self::ideal()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!(
                "noise_sigma must be finite and >= 0, got {}",
                self.noise_sigma
            )));
        }
        for (name, bits) in [
            ("adc_bits", self.adc_bits),
            ("dac_bits", self.dac_bits),
            ("weight_bits", self.weight_bits),
        ] {
            if let Some(b) = bits {
                if !(2..=52).contains(&b) {
                    return Err(Error::Config(format!("{name} must lie in 2..=52, got {b}")));
                }
            }
        }
        if let Some(g) = self.state_gain {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::Config(format!("state_gain must be > 0, got {g}")));
            }
        }
        if let Some(fc) = self.highpass_cutoff {
            if !(0.0..0.5).contains(&fc) {
                return Err(Error::Config(format!(
                    "highpass_cutoff must lie in [0, 0.5), got {fc}"
                )));
            }
        }
        Ok(())
    }

    /// Weights as the readout actually applies them: fixed point when
    /// `weight_bits` is set, unchanged otherwise.
    pub fn effective_weights(&self, w: &ReadoutWeights) -> (ReadoutWeights, usize) {
        match self.weight_bits {
            Some(bits) => {
                let (fixed, clipped) = quantize_weights(w, bits);
                (fixed.to_weights(), clipped)
            }
            None => (w.clone(), 0),
        }
    }
}

/// Rounds `value` to the nearest of `2^bits` evenly spaced levels starting at
/// `range.0` with spacing `(range.1 - range.0) / 2^bits`. Out-of-range values
/// saturate to the first or last level.
pub fn quantize(value: f64, bits: u32, range: (f64, f64)) -> f64 {
    let (lo, hi) = range;
    let levels = (1u64 << bits) as f64;
    let step = (hi - lo) / levels;
    let idx = ((value - lo) / step).round().clamp(0.0, levels - 1.0);
    lo + idx * step
}

/// Readout weights as signed fixed-point integers, `value = q * scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointWeights {
    pub q: Vec<i64>,
    pub scale: f64,
}

impl FixedPointWeights {
    pub fn to_weights(&self) -> ReadoutWeights {
        ReadoutWeights::new(self.q.iter().map(|&q| q as f64 * self.scale).collect())
    }
}

/// Rounds each weight to the nearest multiple of `2^-(bits-1)`, keeping every
/// value strictly inside ]-1, 1[. Returns the number of clipped weights.
pub fn quantize_weights(w: &ReadoutWeights, bits: u32) -> (FixedPointWeights, usize) {
    let frac_bits = bits - 1;
    let scale = (-(frac_bits as f64)).exp2();
    let max_q = (1i64 << frac_bits) - 1;
    let mut clipped = 0;
    let q = w
        .as_slice()
        .iter()
        .map(|&v| {
            let r = (v / scale).round();
            if r > max_q as f64 {
                clipped += 1;
                max_q
            } else if r < -(max_q as f64) {
                clipped += 1;
                -max_q
            } else {
                r as i64
            }
        })
        .collect();
    (FixedPointWeights { q, scale }, clipped)
}

pub fn apply_state_gain(state: &mut [f64], gain: f64) {
    for v in state.iter_mut() {
        *v *= gain;
    }
}

pub fn add_state_noise<R: rand::Rng>(state: &mut [f64], sigma: f64, rng: &mut R) {
    if sigma == 0.0 {
        return;
    }
    for v in state.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *v += sigma * z;
    }
}

/// Single-pole AC-coupling filter, `y_k = a (y_{k-1} + u_k - u_{k-1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct HighPass {
    a: f64,
    prev_in: f64,
    prev_out: f64,
}

impl HighPass {
    pub fn new(cutoff: f64) -> Self {
        HighPass {
            a: (-2.0 * std::f64::consts::PI * cutoff).exp(),
            prev_in: 0.0,
            prev_out: 0.0,
        }
    }

    pub fn coefficient(&self) -> f64 {
        self.a
    }

    pub fn reset(&mut self) {
        self.prev_in = 0.0;
        self.prev_out = 0.0;
    }

    pub fn process(&mut self, u: f64) -> f64 {
        let y = self.a * (self.prev_out + u - self.prev_in);
        self.prev_in = u;
        self.prev_out = y;
        y
    }

    pub fn filter(&mut self, stream: &[f64]) -> Vec<f64> {
        stream.iter().map(|&u| self.process(u)).collect()
    }
}

/// Per-run instance of a [`HardwareModel`]: owns the filter state and the
/// seeded noise generator. Not shared between runs.
#[derive(Debug, Clone)]
pub struct HardwareChannel {
    model: HardwareModel,
    highpass: Option<HighPass>,
    rng: ChaCha8Rng,
}

impl HardwareChannel {
    pub fn new(model: &HardwareModel, noise_seed: u64) -> Result<Self> {
        Self::with_stream(model, noise_seed, 0)
    }

    /// Independent noise streams from one seed, e.g. training vs. generation.
    pub fn with_stream(model: &HardwareModel, noise_seed: u64, stream: u64) -> Result<Self> {
        model.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
        rng.set_stream(stream);
        Ok(HardwareChannel {
            model: model.clone(),
            highpass: model.highpass_cutoff.map(HighPass::new),
            rng,
        })
    }

    pub fn model(&self) -> &HardwareModel {
        &self.model
    }

    pub fn reset_filter(&mut self) {
        if let Some(hp) = self.highpass.as_mut() {
            hp.reset();
        }
    }

    #[inline]
    pub(crate) fn feedback(&mut self, v: f64) -> f64 {
        match self.highpass.as_mut() {
            Some(hp) => hp.process(v),
            None => v,
        }
    }

    #[inline]
    pub(crate) fn dac(&self, masked_input: f64) -> f64 {
        match self.model.dac_bits {
            Some(bits) => quantize(masked_input, bits, CONVERTER_RANGE),
            None => masked_input,
        }
    }

    #[inline]
    pub(crate) fn perturb(&mut self, v: f64) -> f64 {
        if self.model.noise_sigma > 0.0 {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            v + self.model.noise_sigma * z
        } else {
            v
        }
    }

    /// ADC quantization followed by the digital state gain.
    pub fn acquire(&self, physical: &[f64], out: &mut [f64]) {
        out.copy_from_slice(physical);
        if let Some(bits) = self.model.adc_bits {
            for v in out.iter_mut() {
                *v = quantize(*v, bits, CONVERTER_RANGE);
            }
        }
        if let Some(g) = self.model.state_gain {
            apply_state_gain(out, g);
        }
    }
}
