//! Two-step method-of-moments estimation.
//!
//! Nuisances are trained first; the target then solves the empirical moment
//! equation `Σ ψ_i θ + Σ ν_i = 0` exactly, `θ̂ = −(Σ ψ_i)⁻¹ Σ ν_i`.
//!
//! In full-sample mode the nuisances are trained on every unit (per treatment
//! arm for outcome regressions) and the moments are evaluated on the same
//! units. In cross-fitting mode each fold is evaluated with nuisances trained
//! on the units at distance at least `d*` from the fold, and the per-fold
//! estimates are averaged with equal weights.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dgp::Dataset;
use crate::error::{bail, Error, Result};
use crate::linalg;
use crate::moments::MomentModel;
use crate::rng;

mod folds;
mod nuisance;

pub use folds::{audit_exclusion, make_neighborhood_folds, FoldAssignment};
pub use nuisance::{
    fallback_nuisance, features, fit_nuisance, refit_nuisance, supports_fit, FittedNuisance,
    NuisanceSpec, PropensityFeatures,
};

/// Largest condition number of `Σψ` accepted by the solver.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorMode {
    FullSample,
    NeighborhoodCrossfit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub mode: EstimatorMode,
    #[serde(default = "default_folds")]
    pub folds: usize,
    /// `d*`; 3 excludes neighbors and neighbors of neighbors on a graph.
    #[serde(default = "default_exclusion")]
    pub exclusion_distance: f64,
    pub moment: MomentModel,
    pub nuisance: NuisanceSpec,
    #[serde(default)]
    pub seed: u64,
}

fn default_folds() -> usize {
    5
}

fn default_exclusion() -> f64 {
    3.0
}

impl EstimatorConfig {
    pub fn full_sample(moment: MomentModel, nuisance: NuisanceSpec, seed: u64) -> Self {
        EstimatorConfig {
            mode: EstimatorMode::FullSample,
            folds: 5,
            exclusion_distance: 3.0,
            moment,
            nuisance,
            seed,
        }
    }

    pub fn crossfit(
        moment: MomentModel,
        nuisance: NuisanceSpec,
        folds: usize,
        exclusion_distance: f64,
        seed: u64,
    ) -> Self {
        EstimatorConfig {
            mode: EstimatorMode::NeighborhoodCrossfit,
            folds,
            exclusion_distance,
            moment,
            nuisance,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.moment.validate()?;
        if self.mode == EstimatorMode::NeighborhoodCrossfit {
            if self.folds < 2 {
                bail!(
                    Config,
                    "folds must be >= 2 for cross-fitting, got {}",
                    self.folds
                );
            }
            if !(self.exclusion_distance >= 0.0) {
                bail!(
                    Config,
                    "exclusion distance must be >= 0, got {}",
                    self.exclusion_distance
                );
            }
        }
        Ok(())
    }
}

/// Summary of one evaluation set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub size: usize,
    pub training_size: usize,
    pub theta_hat: f64,
    /// `|Σ m(Z_i; θ̂, ĝ)|` relative to `|Σψ||θ̂| + |Σν|`.
    pub moment_residual: f64,
    /// Nuisances fell back to pooled means.
    pub degenerate: bool,
    /// Mean squared error of the outcome regression (or `ℓ_Y`) on the
    /// evaluation units.
    pub outcome_mse: f64,
    /// Brier score of the propensity (or mean squared error of `ℓ_W`) on the
    /// evaluation units.
    pub treatment_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub mode: EstimatorMode,
    pub theta_hat: f64,
    /// Largest relative moment residual over evaluation sets.
    pub moment_residual: f64,
    /// One entry in full-sample mode, one per fold otherwise.
    pub folds: Vec<FoldReport>,
}

impl FitResult {
    pub fn fold_training_sizes(&self) -> Vec<usize> {
        self.folds.iter().map(|f| f.training_size).collect()
    }

    pub fn degenerate_folds(&self) -> usize {
        self.folds.iter().filter(|f| f.degenerate).count()
    }
}

/// Solves `A θ + b = 0` for `p × p` row-major `A`.
pub fn solve_affine(psi_sum: &[f64], nu_sum: &[f64]) -> Result<Vec<f64>> {
    let p = nu_sum.len();
    if psi_sum.len() != p * p || p == 0 {
        bail!(
            Argument,
            "solve_affine: {} coefficients for dimension {p}",
            psi_sum.len()
        );
    }
    let singular = |cond: Option<f64>| Error::Estimation {
        message: String::from("sum of psi is singular"),
        condition_number: cond,
    };
    let inv = linalg::invert(psi_sum, p).ok_or_else(|| singular(Some(f64::INFINITY)))?;
    let cond = linalg::one_norm(psi_sum, p) * linalg::one_norm(&inv, p);
    if !(cond <= MAX_CONDITION) {
        return Err(singular(Some(cond)));
    }
    Ok((0..p)
        .map(|r| -(0..p).map(|c| inv[r * p + c] * nu_sum[c]).sum::<f64>())
        .collect())
}

fn evaluate(
    data: &Dataset,
    units: &[usize],
    g: &FittedNuisance,
    config: &EstimatorConfig,
    training_size: usize,
    degenerate: bool,
) -> Result<FoldReport> {
    use crate::moments::NuisanceValues;
    let (mut sp, mut sn) = (0.0, 0.0);
    let (mut out_se, mut out_n, mut trt_se) = (0.0, 0usize, 0.0);
    let mut terms = Vec::with_capacity(units.len());
    for &i in units {
        let o = &data.observations[i];
        let v = g.values(i, o);
        let (psi, nu) = config.moment.evaluate(o, &v)?;
        sp += psi;
        sn += nu;
        terms.push((psi, nu));
        match v {
            NuisanceValues::DrAte {
                mu_w, e_w, mu_c, ..
            } => {
                let (w, wc) = config.moment.levels;
                let ind = if o.w == w { 1.0 } else { 0.0 };
                trt_se += (ind - e_w) * (ind - e_w);
                if o.w == w {
                    out_se += (o.y - mu_w) * (o.y - mu_w);
                    out_n += 1;
                } else if o.w == wc {
                    out_se += (o.y - mu_c) * (o.y - mu_c);
                    out_n += 1;
                }
            }
            NuisanceValues::Pliv { l_y, l_w, .. } => {
                out_se += (o.y - l_y) * (o.y - l_y);
                out_n += 1;
                trt_se += (o.w - l_w) * (o.w - l_w);
            }
        }
    }
    let theta = solve_affine(&[sp], &[sn])?[0];
    // recompute Σ m with the solved θ term by term
    let resid: f64 = terms.iter().map(|(p, n)| p * theta + n).sum();
    let scale = sp.abs() * theta.abs() + sn.abs();
    let moment_residual = if scale > 0.0 {
        resid.abs() / scale
    } else {
        resid.abs()
    };
    Ok(FoldReport {
        size: units.len(),
        training_size,
        theta_hat: theta,
        moment_residual,
        degenerate,
        outcome_mse: if out_n > 0 {
            out_se / out_n as f64
        } else {
            f64::NAN
        },
        treatment_mse: trt_se / units.len() as f64,
    })
}

/// Trains on every unit and evaluates on every unit.
pub fn fit_full_sample(data: &Dataset, config: &EstimatorConfig) -> Result<FitResult> {
    config.validate()?;
    if data.is_empty() {
        bail!(Data, "empty dataset");
    }
    let all: Vec<usize> = (0..data.len()).collect();
    let g = fit_nuisance(data, &all, &config.moment, &config.nuisance, config.seed, 0)?;
    let report = evaluate(data, &all, &g, config, all.len(), false)?;
    Ok(FitResult {
        mode: EstimatorMode::FullSample,
        theta_hat: report.theta_hat,
        moment_residual: report.moment_residual,
        folds: alloc::vec![report],
    })
}

/// K-fold cross-fitting with neighborhood-excluded training sets. Folds whose
/// training set cannot support the learners use constant nuisances from the
/// units outside the fold and are flagged.
pub fn fit_crossfit(data: &Dataset, config: &EstimatorConfig) -> Result<FitResult> {
    config.validate()?;
    if config.mode != EstimatorMode::NeighborhoodCrossfit {
        bail!(Config, "fit_crossfit called with mode {:?}", config.mode);
    }
    if data.is_empty() {
        bail!(Data, "empty dataset");
    }
    let assignment = make_neighborhood_folds(
        &data.space,
        config.folds,
        config.exclusion_distance,
        rng::derive_seed(config.seed, rng::tag::FOLDS, 0),
    )?;
    fit_with_folds(data, config, &assignment)
}

/// Cross-fitting with a given fold assignment.
pub fn fit_with_folds(
    data: &Dataset,
    config: &EstimatorConfig,
    assignment: &FoldAssignment,
) -> Result<FitResult> {
    let mut reports = Vec::with_capacity(assignment.k());
    for (k, (members, training)) in assignment
        .folds
        .iter()
        .zip(&assignment.training)
        .enumerate()
    {
        let usable = supports_fit(data, training, &config.moment, &config.nuisance);
        let g = if usable {
            fit_nuisance(
                data,
                training,
                &config.moment,
                &config.nuisance,
                config.seed,
                k + 1,
            )?
        } else {
            let pool: Vec<usize> = (0..data.len())
                .filter(|&i| assignment.fold_of[i] != k)
                .collect();
            fallback_nuisance(data, &pool, &config.moment)?
        };
        reports.push(evaluate(
            data,
            members,
            &g,
            config,
            training.len(),
            !usable,
        )?);
    }
    if reports.iter().all(|r| r.degenerate) && !matches!(config.nuisance, NuisanceSpec::Oracle) {
        return Err(Error::Estimation {
            message: String::from("every fold is degenerate"),
            condition_number: None,
        });
    }
    let theta_hat = reports.iter().map(|r| r.theta_hat).sum::<f64>() / reports.len() as f64;
    let moment_residual = reports
        .iter()
        .map(|r| r.moment_residual)
        .fold(0.0, f64::max);
    Ok(FitResult {
        mode: EstimatorMode::NeighborhoodCrossfit,
        theta_hat,
        moment_residual,
        folds: reports,
    })
}

/// Dispatches on `config.mode`.
pub fn fit(data: &Dataset, config: &EstimatorConfig) -> Result<FitResult> {
    match config.mode {
        EstimatorMode::FullSample => fit_full_sample(data, config),
        EstimatorMode::NeighborhoodCrossfit => fit_crossfit(data, config),
    }
}
