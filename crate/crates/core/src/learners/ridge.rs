//! Closed-form ridge and kernel ridge regression.
//!
//! Minimizes `(1/n) Σ (y_i − g(x_i))² + λ ‖g‖²_κ`. For the linear kernel the
//! solution is `θ = (X'X + nλI)⁻¹ X'y`; for a general kernel it is
//! `g = Σ α_i κ(x_i, ·)` with `α = (K + nλI)⁻¹ y`.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{FeatureMatrix, LearnerKind, Model, Predictor, TrainingData};
use crate::error::{bail, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kernel {
    Linear,
    /// `κ(x, x') = exp(−‖x − x'‖² / (2 h²))`.
    Gaussian {
        bandwidth: f64,
    },
}

impl Kernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Kernel::Linear => linalg::dot(a, b),
            Kernel::Gaussian { bandwidth } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                libm::exp(-d2 / (2.0 * bandwidth * bandwidth))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeKernelConfig {
    pub lambda: f64,
    pub kernel: Kernel,
    /// `C_κ = sup_x √κ(x, x)` over the feature domain. Always 1 for the
    /// Gaussian kernel; for the linear kernel it is the radius of the
    /// feature domain and must be supplied.
    pub kernel_bound: Option<f64>,
}

impl RidgeKernelConfig {
    pub fn linear(lambda: f64) -> Self {
        RidgeKernelConfig {
            lambda,
            kernel: Kernel::Linear,
            kernel_bound: None,
        }
    }

    pub fn gaussian(lambda: f64, bandwidth: f64) -> Self {
        RidgeKernelConfig {
            lambda,
            kernel: Kernel::Gaussian { bandwidth },
            kernel_bound: Some(1.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            bail!(
                Config,
                "ridge penalty must be positive, got {}",
                self.lambda
            );
        }
        if let Kernel::Gaussian { bandwidth } = self.kernel {
            if !(bandwidth > 0.0) {
                bail!(Config, "gaussian bandwidth must be positive");
            }
        }
        Ok(())
    }

    /// `C_κ`, if known.
    pub fn c_kappa(&self) -> Option<f64> {
        match self.kernel {
            Kernel::Gaussian { .. } => Some(1.0),
            Kernel::Linear => self.kernel_bound,
        }
    }
}

/// `x ↦ Σ α_i κ(x_i, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelModel {
    pub kernel: Kernel,
    pub centers: FeatureMatrix,
    pub alpha: Vec<f64>,
}

impl KernelModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.alpha
            .iter()
            .enumerate()
            .map(|(i, a)| a * self.kernel.eval(self.centers.row(i), x))
            .sum()
    }
}

pub fn fit_ridge_closed(data: &TrainingData, config: &RidgeKernelConfig) -> Result<Predictor> {
    config.validate()?;
    let n = data.len();
    if n == 0 {
        bail!(Data, "cannot fit ridge on an empty training set");
    }
    let nl = n as f64 * config.lambda;
    let model = match config.kernel {
        Kernel::Linear => {
            let d = data.features.n_cols();
            let mut a = vec![0.0; d * d];
            let mut b = vec![0.0; d];
            for i in 0..n {
                let x = data.features.row(i);
                for p in 0..d {
                    b[p] += x[p] * data.targets[i];
                    for q in 0..d {
                        a[p * d + q] += x[p] * x[q];
                    }
                }
            }
            for p in 0..d {
                a[p * d + p] += nl;
            }
            Model::Linear(linalg::cholesky_solve(&a, &b, d)?)
        }
        kernel => {
            let mut k = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..=i {
                    let v = kernel.eval(data.features.row(i), data.features.row(j));
                    k[i * n + j] = v;
                    k[j * n + i] = v;
                }
                k[i * n + i] += nl;
            }
            let alpha = linalg::cholesky_solve(&k, &data.targets, n)?;
            Model::Kernel(KernelModel {
                kernel,
                centers: data.features.clone(),
                alpha,
            })
        }
    };
    Ok(Predictor {
        model,
        kind: LearnerKind::Ridge,
        n_train: n,
    })
}
