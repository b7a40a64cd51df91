//! Stabilized application of G⁻¹.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, SymMatrix};
use crate::metrics::{Metric, MetricMatrix};
use crate::models::ParamVector;

pub const DEFAULT_EPSILON: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InverseMode {
    /// Cholesky solve of G·x = ∇J.
    Exact,
    /// Solve (G + λI)·x = ∇J.
    Ridge,
    /// Multiply by (GᵀG + εI)⁻¹Gᵀ.
    Robust,
}

impl std::str::FromStr for InverseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Self::Exact),
            "ridge" => Ok(Self::Ridge),
            "robust" => Ok(Self::Robust),
            other => Err(Error::InvalidConfig(format!("unknown inverse mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizationConfig {
    /// ε of the robust inverse; also the floor for diagonal metrics.
    pub epsilon: f64,
    pub ridge_lambda: f64,
    pub mode: InverseMode,
    /// In exact mode, retry with the robust inverse when G is numerically singular.
    pub fallback_to_robust: bool,
}

impl Default for RegularizationConfig {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            ridge_lambda: 0.0,
            mode: InverseMode::Exact,
            fallback_to_robust: true,
        }
    }
}

impl RegularizationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "epsilon must be a finite value >= 0, got {}",
                self.epsilon
            )));
        }
        if !(self.ridge_lambda >= 0.0) || !self.ridge_lambda.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "ridge_lambda must be a finite value >= 0, got {}",
                self.ridge_lambda
            )));
        }
        Ok(())
    }
}

/// (GᵀG + εI)⁻¹Gᵀ. Each eigenvalue s of G maps to s/(s² + ε).
pub fn robust_inverse(g: &SymMatrix, epsilon: f64) -> Result<Matrix> {
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "epsilon must be >= 0, got {epsilon}"
        )));
    }
    let gm = g.to_matrix();
    let gt = gm.transpose();
    let normal = SymMatrix::symmetrize(&gt.matmul(&gm)?)?.shifted(epsilon);
    linalg::solve_spd_matrix(&normal, &gt)
}

/// Solves (G + λI)·x = rhs.
pub fn ridge_solve(g: &SymMatrix, rhs: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "ridge lambda must be >= 0, got {lambda}"
        )));
    }
    linalg::solve_spd(&g.shifted(lambda), rhs)
}

/// The natural direction G⁻¹∇J, regularized according to `config`.
///
/// Diagonal metrics are divided elementwise with each entry floored at
/// `config.epsilon`, whatever the mode.
pub fn apply_inverse_metric(
    metric: &Metric,
    grad: &[f64],
    config: &RegularizationConfig,
) -> Result<ParamVector> {
    if grad.len() != metric.dim() {
        return Err(Error::DimensionMismatch {
            expected: metric.dim(),
            found: grad.len(),
        });
    }
    match metric.matrix() {
        MetricMatrix::Diagonal(d) => {
            let mut out = Vec::with_capacity(d.len());
            for (&di, &gi) in d.iter().zip(grad) {
                let denom = di.max(config.epsilon);
                if denom <= 0.0 {
                    return Err(Error::Singular(format!(
                        "diagonal entry {di:e} with epsilon {:e}",
                        config.epsilon
                    )));
                }
                out.push(gi / denom);
            }
            Ok(out.into())
        }
        MetricMatrix::Dense(g) => {
            let x = match config.mode {
                InverseMode::Exact => match linalg::solve_spd(g, grad) {
                    Ok(x) => x,
                    Err(Error::Singular(_)) if config.fallback_to_robust && config.epsilon > 0.0 => {
                        robust_inverse(g, config.epsilon)?.matvec(grad)?
                    }
                    Err(e) => return Err(e),
                },
                InverseMode::Ridge => ridge_solve(g, grad, config.ridge_lambda)?,
                InverseMode::Robust => robust_inverse(g, config.epsilon)?.matvec(grad)?,
            };
            Ok(x.into())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::fisher_analytic_gauss2d;

    #[test]
    fn robust_inverse_of_identity() {
        let r = robust_inverse(&SymMatrix::identity(2), 0.01).unwrap();
        let expected = 1.0 / 1.01;
        assert!((r.get(0, 0) - expected).abs() < 1e-15);
        assert!((r.get(1, 1) - expected).abs() < 1e-15);
        assert_eq!(r.get(0, 1), 0.0);
    }

    #[test]
    fn robust_inverse_tames_tiny_eigenvalue() {
        let r = robust_inverse(&SymMatrix::diag(&[2.0, 1e-9]), 0.01).unwrap();
        let expected = 1e-9 / (1e-18 + 0.01);
        assert!((r.get(1, 1) - expected).abs() < 1e-20, "{}", r.get(1, 1));
        assert!((r.get(0, 0) - 2.0 / 4.01).abs() < 1e-15);
    }

    #[test]
    fn robust_inverse_errors_when_singular_and_unregularized() {
        let g = SymMatrix::diag(&[1.0, 0.0]);
        assert!(matches!(robust_inverse(&g, 0.0), Err(Error::Singular(_))));
        assert!(robust_inverse(&g, -1.0).is_err());
    }

    #[test]
    fn ridge_examples() {
        let b = [1.5, -2.0];
        assert_eq!(ridge_solve(&SymMatrix::identity(2), &b, 0.0).unwrap(), b.to_vec());
        assert_eq!(ridge_solve(&SymMatrix::diag(&[4.0]), &[8.0], 0.0).unwrap(), vec![2.0]);
        let g = SymMatrix::from_rows(&[vec![3.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let lambda = 1e6;
        let x = ridge_solve(&g, &b, lambda).unwrap();
        for (xi, bi) in x.iter().zip(&b) {
            let limit = bi / lambda;
            assert!(((xi - limit) / limit).abs() < 1e-4);
        }
        assert!(ridge_solve(&SymMatrix::diag(&[1.0, 0.0]), &b, 0.0).is_err());
    }

    #[test]
    fn apply_examples() {
        let cfg = RegularizationConfig::default();
        let g = [0.3, -0.4];
        let x = apply_inverse_metric(&Metric::identity(2), &g, &cfg).unwrap();
        assert_eq!(x.as_slice(), &g);

        let x = apply_inverse_metric(&fisher_analytic_gauss2d(), &[73.0 / 9.0, 8.0 / 9.0], &cfg).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] + 1.0).abs() < 1e-12);

        let d = Metric::diagonal(vec![4.0, 0.25], ParamVector::zeros(2)).unwrap();
        let x = apply_inverse_metric(&d, &[4.0, 1.0], &cfg).unwrap();
        assert_eq!(x.as_slice(), &[1.0, 4.0]);
    }

    #[test]
    fn diagonal_floor_applies() {
        let d = Metric::diagonal(vec![0.0, 1.0], ParamVector::zeros(2)).unwrap();
        let x = apply_inverse_metric(&d, &[1.0, 1.0], &RegularizationConfig::default()).unwrap();
        assert_eq!(x.as_slice(), &[100.0, 1.0]);
        let strict = RegularizationConfig {
            epsilon: 0.0,
            ..Default::default()
        };
        assert!(apply_inverse_metric(&d, &[1.0, 1.0], &strict).is_err());
    }

    #[test]
    fn exact_mode_fallback() {
        let singular = Metric::dense(SymMatrix::diag(&[1.0, 0.0]), ParamVector::zeros(2)).unwrap();
        let fallback = RegularizationConfig::default();
        let x = apply_inverse_metric(&singular, &[1.0, 1.0], &fallback).unwrap();
        assert!((x[0] - 1.0 / 1.01).abs() < 1e-14 && x[1] == 0.0);

        let strict = RegularizationConfig {
            fallback_to_robust: false,
            ..Default::default()
        };
        assert!(matches!(
            apply_inverse_metric(&singular, &[1.0, 1.0], &strict),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn dimension_mismatch() {
        assert!(apply_inverse_metric(&Metric::identity(2), &[1.0], &Default::default()).is_err());
    }
}
