//! Offline readout training: harvest teacher-forced states, fit the readout
//! by Tikhonov-regularised least squares, score with NMSE.

use nalgebra::{DMatrix, DVector, Dyn, SVD};

use crate::error::{Error, Result};
use crate::hardware::HardwareChannel;
use crate::reservoir::{drive, ReadoutWeights, ReservoirConfig, ReservoirState};

pub const DEFAULT_LAMBDA: f64 = 1e-6;
pub const DEFAULT_WASHOUT: usize = 100;

/// Design matrix and next-step targets. Rows before `washout` are kept
/// but excluded from the fit.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub design: DMatrix<f64>,
    pub targets: DVector<f64>,
    pub washout: usize,
}

impl TrainingSet {
    pub fn new(design: DMatrix<f64>, targets: DVector<f64>, washout: usize) -> Result<Self> {
        if design.nrows() != targets.len() {
            return Err(Error::LengthMismatch(design.nrows(), targets.len()));
        }
        if washout >= design.nrows() {
            return Err(Error::TeacherTooShort {
                length: design.nrows() + 1,
                washout,
            });
        }
        Ok(TrainingSet {
            design,
            targets,
            washout,
        })
    }

    pub fn usable_rows(&self) -> usize {
        self.design.nrows() - self.washout
    }

    pub fn usable_design(&self) -> DMatrix<f64> {
        self.design.rows(self.washout, self.usable_rows()).into_owned()
    }

    pub fn usable_targets(&self) -> DVector<f64> {
        self.targets.rows(self.washout, self.usable_rows()).into_owned()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeSolution {
    pub weights: ReadoutWeights,
    pub lambda: f64,
    pub train_nmse: f64,
    /// Set when `lambda == 0` and the design was rank deficient; the
    /// returned weights are then the minimum-norm least-squares solution.
    pub rank_deficient: bool,
}

/// Drives the reservoir from the zero state with `teacher` and pairs the
/// state after input `u(n)` with the target `u(n+1)`.
pub fn harvest(
    config: &ReservoirConfig,
    hw: Option<&mut HardwareChannel>,
    teacher: &[f64],
    washout: usize,
) -> Result<TrainingSet> {
    if teacher.len() < washout + 2 {
        return Err(Error::TeacherTooShort {
            length: teacher.len(),
            washout,
        });
    }
    let mut state = ReservoirState::zeros(config.n_neurons);
    let traj = drive(config, hw, &mut state, teacher)?;
    let rows = teacher.len() - 1;
    let design = DMatrix::from_row_slice(
        rows,
        config.n_neurons,
        &traj.as_flat()[..rows * config.n_neurons],
    );
    let targets = DVector::from_column_slice(&teacher[1..]);
    TrainingSet::new(design, targets, washout)
}

/// Thin SVD of `a` whose reconstruction is verified. nalgebra's iteration
/// occasionally settles on a wrong deflation for one convergence tolerance
/// and not another, so a failed check retries with the next tolerance.
fn checked_svd(a: &DMatrix<f64>) -> Result<SVD<f64, Dyn, Dyn>> {
    // Far above rounding (~1e-14 relative), far below the failures seen (~1e-6).
    let bound = 1e-10 * (a.norm() + f64::MIN_POSITIVE);
    for eps in [f64::EPSILON, 1e-14, 1e-13, 1e-12] {
        let Some(svd) = a.clone().try_svd(true, true, eps, 100_000) else {
            continue;
        };
        let err = svd
            .clone()
            .recompose()
            .map(|r| (r - a).norm())
            .unwrap_or(f64::INFINITY);
        if err <= bound {
            return Ok(svd);
        }
    }
    Err(Error::Numerical("singular value decomposition did not converge".into()))
}

/// Minimises `|Xw - d|^2 + lambda |w|^2` over the non-washout rows.
///
/// Solved through the SVD of `X`, `w = V diag(s / (s^2 + lambda)) U^T d`.
pub fn ridge_solve(set: &TrainingSet, lambda: f64) -> Result<RidgeSolution> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Config(format!("lambda must be >= 0, got {lambda}")));
    }
    let x = set.usable_design();
    let d = set.usable_targets();
    let n = x.ncols();

    let svd = checked_svd(&x)?;
    let u = svd.u.as_ref().expect("requested U");
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let s_max = svd.singular_values.max();
    let tol = s_max * (x.nrows().max(n) as f64) * f64::EPSILON;

    let mut w = DVector::zeros(n);
    let mut rank_deficient = false;
    for (k, &s) in svd.singular_values.iter().enumerate() {
        let gain = if lambda == 0.0 {
            if s <= tol {
                rank_deficient = true;
                continue;
            }
            1.0 / s
        } else {
            s / (s * s + lambda)
        };
        let coeff = u.column(k).dot(&d) * gain;
        w += v_t.row(k).transpose() * coeff;
    }
    // nalgebra's thin SVD returns min(m, n) singular values; a wide design
    // is rank deficient by construction.
    if lambda == 0.0 && x.nrows() < n {
        rank_deficient = true;
    }

    let fitted = &x * &w;
    let train_nmse = nmse(fitted.as_slice(), d.as_slice())?;
    Ok(RidgeSolution {
        weights: ReadoutWeights::new(w.as_slice().to_vec()),
        lambda,
        train_nmse,
        rank_deficient,
    })
}

/// `<(y - d)^2> / <(d - <d>)^2>`.
pub fn nmse(y: &[f64], d: &[f64]) -> Result<f64> {
    if y.len() != d.len() {
        return Err(Error::LengthMismatch(y.len(), d.len()));
    }
    if d.len() < 2 {
        return Err(Error::SeriesTooShort {
            length: d.len(),
            required: 2,
        });
    }
    let len = d.len() as f64;
    let mean = d.iter().sum::<f64>() / len;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / len;
    if var == 0.0 {
        return Err(Error::ConstantTarget);
    }
    let mse = y
        .iter()
        .zip(d)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / len;
    Ok(mse / var)
}

pub fn train(
    config: &ReservoirConfig,
    hw: Option<&mut HardwareChannel>,
    teacher: &[f64],
    lambda: f64,
    washout: usize,
) -> Result<RidgeSolution> {
    let set = harvest(config, hw, teacher, washout)?;
    ridge_solve(&set, lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn set_from(rows: usize, cols: usize, x: &[f64], d: &[f64]) -> TrainingSet {
        TrainingSet::new(
            DMatrix::from_row_slice(rows, cols, x),
            DVector::from_column_slice(d),
            0,
        )
        .unwrap()
    }

    #[test]
    fn identity_design() {
        let set = set_from(2, 2, &[1.0, 0.0, 0.0, 1.0], &[1.0, 2.0]);
        let sol = ridge_solve(&set, 0.0).unwrap();
        assert_abs_diff_eq!(sol.weights.as_slice()[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(sol.weights.as_slice()[1], 2.0, epsilon = 1e-14);
        assert!(!sol.rank_deficient);
        assert_abs_diff_eq!(sol.train_nmse, 0.0, epsilon = 1e-24);
    }

    #[test]
    fn large_lambda_shrinks_weights_monotonically() {
        let set = set_from(
            4,
            2,
            &[1.0, 0.3, -0.2, 0.9, 0.5, 0.5, 0.1, -0.7],
            &[0.4, -0.1, 0.8, 0.2],
        );
        let mut last = f64::INFINITY;
        for lambda in [0.0, 1e-3, 1e-1, 1.0, 10.0, 1e3, 1e6] {
            let norm = ridge_solve(&set, lambda).unwrap().weights.norm();
            assert!(norm <= last);
            last = norm;
        }
        assert!(last < 1e-5);
    }

    #[test]
    fn singular_design_gives_minimum_norm() {
        // Two identical columns: min-norm solution splits the weight evenly.
        let set = set_from(3, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0], &[2.0, 4.0, 6.0]);
        let sol = ridge_solve(&set, 0.0).unwrap();
        assert!(sol.rank_deficient);
        assert_abs_diff_eq!(sol.weights.as_slice()[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.weights.as_slice()[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn negative_lambda_rejected() {
        let set = set_from(2, 1, &[1.0, 2.0], &[1.0, 0.0]);
        assert!(ridge_solve(&set, -1.0).is_err());
    }

    #[test]
    fn nmse_cases() {
        let d = [0.3, -0.1, 0.7, 0.2];
        assert_eq!(nmse(&d, &d).unwrap(), 0.0);
        let mean = d.iter().sum::<f64>() / 4.0;
        assert_abs_diff_eq!(nmse(&[mean; 4], &d).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(nmse(&[0.0, 1.0], &[1.0, 0.0]).unwrap(), 4.0, epsilon = 1e-12);
        assert_eq!(nmse(&[1.0, 1.0], &[2.0, 2.0]), Err(Error::ConstantTarget));
        assert!(matches!(nmse(&[1.0], &[2.0]), Err(Error::SeriesTooShort { .. })));
        assert!(matches!(nmse(&[1.0, 2.0], &[2.0]), Err(Error::LengthMismatch(..))));
    }

    #[test]
    fn harvest_pairs_next_value() {
        let cfg = ReservoirConfig::with_random_mask(5, 0.7, 0.5, 1, 3).unwrap();
        let teacher: Vec<f64> = (0..1000).map(|n| (0.1 * n as f64).sin()).collect();
        let set = harvest(&cfg, None, &teacher, 100).unwrap();
        assert_eq!(set.design.nrows(), 999);
        assert_eq!(set.usable_rows(), 899);
        assert_eq!(set.targets[0], teacher[1]);
        assert_eq!(set.targets[998], teacher[999]);
    }

    #[test]
    fn harvest_too_short() {
        let cfg = ReservoirConfig::with_random_mask(5, 0.7, 0.5, 1, 3).unwrap();
        let teacher = vec![0.1, 0.2, 0.3, 0.4];
        assert!(matches!(
            harvest(&cfg, None, &teacher, 3),
            Err(Error::TeacherTooShort { .. })
        ));
        assert!(harvest(&cfg, None, &teacher, 2).is_ok());
    }

    #[test]
    fn zero_teacher_rejected() {
        let cfg = ReservoirConfig::with_random_mask(5, 0.7, 0.5, 1, 3).unwrap();
        let r = train(&cfg, None, &[0.0; 300], 1e-6, 10);
        assert_eq!(r, Err(Error::ConstantTarget));
    }
}
