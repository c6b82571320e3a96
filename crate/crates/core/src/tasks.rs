//! Generation tasks: teacher construction and success criteria.

use std::f64::consts::{PI, SQRT_2};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trainer::nmse;

pub const DEFAULT_THRESHOLD: f64 = 1e-3;
pub const DEFAULT_AMPLITUDE_TOL: f64 = 0.1;
pub const MIN_SPECTRUM_LEN: usize = 64;
pub const PATTERN_RANGE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyTask {
    /// Relative angular frequency, radians per step.
    pub nu: f64,
    pub threshold: f64,
    pub amplitude_tol: f64,
}

impl FrequencyTask {
    pub fn new(nu: f64) -> Result<Self> {
        check_nu(nu)?;
        Ok(FrequencyTask {
            nu,
            threshold: DEFAULT_THRESHOLD,
            amplitude_tol: DEFAULT_AMPLITUDE_TOL,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternTask {
    pub pattern: Vec<f64>,
    pub threshold: f64,
}

impl PatternTask {
    pub fn new(pattern: Vec<f64>) -> Result<Self> {
        if pattern.is_empty() {
            return Err(Error::Task("pattern must have at least one element".into()));
        }
        if pattern.iter().any(|v| !(-PATTERN_RANGE..=PATTERN_RANGE).contains(v)) {
            return Err(Error::Task("pattern values must lie in [-0.5, 0.5]".into()));
        }
        Ok(PatternTask {
            pattern,
            threshold: DEFAULT_THRESHOLD,
        })
    }

    pub fn len(&self) -> usize {
        self.pattern.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pattern.is_empty()
    }

    /// Default evaluation for a run whose teacher-forced warmup had `warmup_len` steps.
    pub fn evaluation(&self, warmup_len: usize) -> PatternEvaluation {
        PatternEvaluation::for_length(self.len(), warmup_len)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskOutcome {
    pub success: bool,
    /// Frequency error, or the largest windowed NMSE. Infinite when the run
    /// produced too little output to be scored.
    #[serde(with = "nonfinite_as_null")]
    pub error_value: f64,
    pub diverged: bool,
}

impl TaskOutcome {
    fn judge(error_value: f64, threshold: f64, diverged: bool, extra_ok: bool) -> Self {
        TaskOutcome {
            success: !diverged && extra_ok && error_value < threshold,
            error_value,
            diverged,
        }
    }
}

fn check_nu(nu: f64) -> Result<()> {
    if !(nu > 0.0 && nu <= PI) {
        return Err(Error::Task(format!("frequency {nu} outside (0, pi]")));
    }
    Ok(())
}

/// `u(n) = sin(nu n)`.
pub fn sine_teacher(nu: f64, length: usize) -> Result<Vec<f64>> {
    check_nu(nu)?;
    Ok((0..length).map(|n| (nu * n as f64).sin()).collect())
}

/// Physical frequency in hertz of relative frequency `nu` at roundtrip `roundtrip_time`.
pub fn physical_frequency(nu: f64, roundtrip_time: f64) -> f64 {
    nu / (2.0 * PI * roundtrip_time)
}

/// `length` values drawn uniformly from [-0.5, 0.5].
pub fn random_pattern(seed: u64, length: usize) -> Result<PatternTask> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pattern = (0..length)
        .map(|_| rng.random_range(-PATTERN_RANGE..=PATTERN_RANGE))
        .collect();
    PatternTask::new(pattern)
}

pub fn periodic_teacher(pattern: &[f64], length: usize) -> Vec<f64> {
    if pattern.is_empty() {
        return Vec::new();
    }
    (0..length).map(|n| pattern[n % pattern.len()]).collect()
}

/// Angular frequency (radians per step) of the strongest spectral peak,
/// refined by a parabola through the magnitudes of the peak bin and its
/// two neighbours. Rectangular window over the whole series.
pub fn estimate_frequency(series: &[f64]) -> Result<f64> {
    let n = series.len();
    if n < MIN_SPECTRUM_LEN {
        return Err(Error::SeriesTooShort {
            length: n,
            required: MIN_SPECTRUM_LEN,
        });
    }
    if series.iter().all(|&v| v == 0.0) {
        return Err(Error::NoDominantFrequency);
    }
    let mut buf: Vec<Complex<f64>> = series.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let half = n / 2;
    let mag: Vec<f64> = buf[..=half].iter().map(|c| c.norm()).collect();

    let (peak, _) = mag
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (k, &m)| {
            if m > best.1 {
                (k, m)
            } else {
                best
            }
        });
    // Neighbours mirror at DC and Nyquist, which pins the estimate to the bin.
    let left = if peak == 0 { mag[1] } else { mag[peak - 1] };
    let right = if peak == half {
        if n.is_multiple_of(2) {
            mag[half - 1]
        } else {
            mag[half]
        }
    } else {
        mag[peak + 1]
    };
    let centre = mag[peak];
    let denom = left - 2.0 * centre + right;
    let offset = if denom.abs() > 0.0 {
        (0.5 * (left - right) / denom).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    let nu = 2.0 * PI * (peak as f64 + offset) / n as f64;
    Ok(nu.clamp(0.0, PI))
}

/// `sqrt(2) * rms`, the amplitude of a pure sine.
pub fn sine_amplitude(series: &[f64]) -> f64 {
    if series.is_empty() {
        return 0.0;
    }
    let ms = series.iter().map(|v| v * v).sum::<f64>() / series.len() as f64;
    SQRT_2 * ms.sqrt()
}

pub fn evaluate_frequency_run(outputs: &[f64], task: &FrequencyTask, diverged: bool) -> TaskOutcome {
    let error_value = match estimate_frequency(outputs) {
        Ok(nu) => (nu - task.nu).abs(),
        Err(_) => f64::INFINITY,
    };
    let amplitude_ok = (sine_amplitude(outputs) - 1.0).abs() <= task.amplitude_tol;
    TaskOutcome::judge(error_value, task.threshold, diverged, amplitude_ok)
}

/// How autonomous pattern output is compared against the periodic target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatternEvaluation {
    /// Sliding window length for the running NMSE.
    pub window: usize,
    /// Leading autonomous steps excluded from the success decision.
    pub skip: usize,
    /// Pattern index of the target at autonomous step 0.
    pub phase: usize,
}

impl PatternEvaluation {
    pub fn for_length(pattern_len: usize, warmup_len: usize) -> Self {
        PatternEvaluation {
            window: (3 * pattern_len).max(60),
            skip: 2 * pattern_len,
            phase: warmup_len % pattern_len.max(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatternReport {
    /// NMSE over the causal window ending at each autonomous step. The window
    /// grows from the start of the run until it reaches full length; steps
    /// where the target window has no variance hold NaN.
    pub nmse_series: Vec<f64>,
    /// NMSE over everything after the skipped transient.
    pub whole_run_nmse: f64,
    pub outcome: TaskOutcome,
}

pub fn evaluate_pattern_run(
    outputs: &[f64],
    task: &PatternTask,
    eval: PatternEvaluation,
    diverged: bool,
) -> PatternReport {
    let l = task.len();
    let target: Vec<f64> = (0..outputs.len())
        .map(|k| task.pattern[(eval.phase + k) % l])
        .collect();
    let window = eval.window.max(2);
    let nmse_series: Vec<f64> = (0..outputs.len())
        .map(|k| {
            let start = (k + 1).saturating_sub(window);
            nmse(&outputs[start..=k], &target[start..=k]).unwrap_or(f64::NAN)
        })
        .collect();

    let first_scored = eval.skip + window - 1;
    let mut worst = f64::NEG_INFINITY;
    for &v in nmse_series.iter().skip(first_scored) {
        // NaN marks an unscoreable window and counts as failure.
        worst = if v.is_nan() { f64::INFINITY } else { worst.max(v) };
    }
    if worst == f64::NEG_INFINITY {
        worst = f64::INFINITY;
    }
    let whole_run_nmse = if outputs.len() > eval.skip + 1 {
        nmse(&outputs[eval.skip..], &target[eval.skip..]).unwrap_or(f64::NAN)
    } else {
        f64::NAN
    };
    PatternReport {
        nmse_series,
        whole_run_nmse,
        outcome: TaskOutcome::judge(worst, task.threshold, diverged, true),
    }
}

mod nonfinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn sine_teacher_values() {
        let u = sine_teacher(0.37, 10).unwrap();
        assert_eq!(u[0], 0.0);
        assert_eq!(u[3], (0.37f64 * 3.0).sin());
        assert!(sine_teacher(0.0, 10).is_err());
        assert!(sine_teacher(3.2, 10).is_err());
        let nyquist = sine_teacher(PI, 50).unwrap();
        assert!(nyquist.iter().all(|v| v.abs() < 1e-13));
        let below = sine_teacher(PI - 0.01, 50).unwrap();
        assert!(below[1] > 0.0 && below[2] < 0.0 && below[3] > 0.0);
    }

    #[test]
    fn sine_period_autocorrelation_peak_near_63() {
        let u = sine_teacher(0.1, 2000).unwrap();
        let ac = |lag: usize| -> f64 {
            (0..1000).map(|n| u[n] * u[n + lag]).sum::<f64>()
        };
        let best = (40..90).max_by(|&a, &b| ac(a).total_cmp(&ac(b))).unwrap();
        assert_eq!(best, 63);
    }

    #[test]
    fn physical_frequency_values() {
        assert_abs_diff_eq!(physical_frequency(PI, 7.93e-6), 63_051.7, epsilon = 1.0);
        let f = physical_frequency(0.08, 7.93e-6);
        assert!((1.5e3..1.7e3).contains(&f), "{f}");
        assert_eq!(physical_frequency(0.0, 7.93e-6), 0.0);
    }

    #[test]
    fn pattern_generation() {
        let p = random_pattern(7, 40).unwrap();
        assert_eq!(p.len(), 40);
        assert!(p.pattern.iter().all(|v| v.abs() <= 0.5));
        assert_eq!(p, random_pattern(7, 40).unwrap());
        assert_ne!(p, random_pattern(8, 40).unwrap());
        assert!(random_pattern(7, 0).is_err());
        assert!(PatternTask::new(vec![0.6]).is_err());
    }

    #[test]
    fn periodic_teacher_cases() {
        assert_eq!(
            periodic_teacher(&[0.5, -0.5], 5),
            vec![0.5, -0.5, 0.5, -0.5, 0.5]
        );
        assert_eq!(periodic_teacher(&[0.2], 4), vec![0.2; 4]);
        let p = [0.1, 0.2, 0.3];
        assert_eq!(periodic_teacher(&p, 9), [p, p, p].concat());
    }

    #[test]
    fn frequency_of_pure_sine() {
        let s = sine_teacher(0.1, 10_000).unwrap();
        let nu = estimate_frequency(&s).unwrap();
        assert!((nu - 0.1).abs() < 2.0 * PI / 10_000.0, "{nu}");
    }

    #[test]
    fn frequency_on_grid_is_exact() {
        let n = 4096;
        let nu = 2.0 * PI * 137.0 / n as f64;
        let s = sine_teacher(nu, n).unwrap();
        assert_abs_diff_eq!(estimate_frequency(&s).unwrap(), nu, epsilon = 1e-4);
    }

    #[test]
    fn frequency_of_constant_is_dc() {
        assert_eq!(estimate_frequency(&[0.3; 128]).unwrap(), 0.0);
    }

    #[test]
    fn dominant_peak_wins() {
        let s: Vec<f64> = (0..10_000)
            .map(|n| (0.1 * n as f64).sin() + 0.01 * (2.0 * n as f64).sin())
            .collect();
        assert!((estimate_frequency(&s).unwrap() - 0.1).abs() < 2.0 * PI / 10_000.0);
    }

    #[test]
    fn frequency_errors() {
        assert_eq!(estimate_frequency(&[0.0; 100]), Err(Error::NoDominantFrequency));
        assert!(matches!(
            estimate_frequency(&[1.0; 10]),
            Err(Error::SeriesTooShort { .. })
        ));
    }

    #[test]
    fn frequency_outcomes() {
        let task = FrequencyTask::new(0.5).unwrap();
        let n = 8192;
        let on_grid = 2.0 * PI * (0.5 * n as f64 / (2.0 * PI)).round() / n as f64;
        let task_grid = FrequencyTask::new(on_grid).unwrap();
        let perfect = sine_teacher(on_grid, n).unwrap();
        let o = evaluate_frequency_run(&perfect, &task_grid, false);
        assert!(o.success);
        assert!(o.error_value < 1e-9);

        let off = sine_teacher(0.51, n).unwrap();
        let o = evaluate_frequency_run(&off, &task, false);
        assert!(!o.success);
        assert!(o.error_value > task.threshold);

        let small: Vec<f64> = perfect.iter().map(|v| 0.5 * v).collect();
        assert!(!evaluate_frequency_run(&small, &task_grid, false).success);
        assert!(!evaluate_frequency_run(&perfect, &task_grid, true).success);
        assert!(!evaluate_frequency_run(&perfect[..10], &task_grid, false).success);
    }

    #[test]
    fn pattern_perfect_and_mismatched() {
        let task = random_pattern(1, 10).unwrap();
        let eval = task.evaluation(128);
        let outputs: Vec<f64> = (0..1000).map(|k| task.pattern[(eval.phase + k) % 10]).collect();
        let rep = evaluate_pattern_run(&outputs, &task, eval, false);
        assert!(rep.outcome.success);
        assert_eq!(rep.outcome.error_value, 0.0);
        assert!(rep.nmse_series.iter().skip(1).all(|&v| v == 0.0));

        let other = random_pattern(2, 10).unwrap();
        let wrong: Vec<f64> = (0..1000).map(|k| other.pattern[(eval.phase + k) % 10]).collect();
        let rep = evaluate_pattern_run(&wrong, &task, eval, false);
        assert!(!rep.outcome.success);
        assert!(rep.outcome.error_value > 0.1);
    }

    #[test]
    fn pattern_threshold_boundary() {
        let task = PatternTask::new(vec![0.5, -0.5]).unwrap();
        let eval = PatternEvaluation {
            window: 60,
            skip: 0,
            phase: 0,
        };
        // Constant offset c: MSE = c^2, target variance 0.25.
        let at = |c: f64| {
            let out: Vec<f64> = (0..200).map(|k| task.pattern[k % 2] + c).collect();
            evaluate_pattern_run(&out, &task, eval, false).outcome
        };
        let c_edge = (task.threshold * 0.25f64).sqrt();
        assert!(at(c_edge * 0.999).success);
        assert!(!at(c_edge * 1.001).success);
    }
}
