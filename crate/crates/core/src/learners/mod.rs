//! Nuisance learners.
//!
//! Every learner is a pure function of its configuration (including its
//! seed) and the training data, so retraining on perturbed data with the same
//! configuration shares all learner randomness with the original fit.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};

mod forest;
mod ridge;
mod sgd;
mod tree;

pub use forest::{fit_forest, Criterion, Forest, ForestConfig, Resampling, SubsampleRule};
pub use ridge::{fit_ridge_closed, Kernel, KernelModel, RidgeKernelConfig};
pub use sgd::{fit_sgd_ridge, sgd_ridge_path, SgdConfig};
pub use tree::{fit_tree, Tree, TreeParams};

/// Dense row-major feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(n_rows: usize, n_cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_rows * n_cols {
            bail!(
                Argument,
                "feature buffer of length {} is not {n_rows}x{n_cols}",
                data.len()
            );
        }
        Ok(FeatureMatrix {
            n_rows,
            n_cols,
            data,
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * n_cols);
        for r in rows {
            if r.as_ref().len() != n_cols {
                bail!(Argument, "ragged feature rows");
            }
            data.extend_from_slice(r.as_ref());
        }
        Ok(FeatureMatrix {
            n_rows: rows.len(),
            n_cols,
            data,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols + j]
    }

    fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }
}

/// Features, targets, and the unit id of every row. Unit ids key the
/// subsample draws of forests, so that a perturbation of unit `k` can only
/// affect the trees whose subsample contains `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingData {
    pub features: FeatureMatrix,
    pub targets: Vec<f64>,
    pub unit_ids: Vec<usize>,
}

impl TrainingData {
    /// Rows get unit ids `0..n`.
    pub fn new(features: FeatureMatrix, targets: Vec<f64>) -> Result<Self> {
        let ids = (0..targets.len()).collect();
        Self::with_ids(features, targets, ids)
    }

    pub fn with_ids(
        features: FeatureMatrix,
        targets: Vec<f64>,
        unit_ids: Vec<usize>,
    ) -> Result<Self> {
        if features.n_rows() != targets.len() || unit_ids.len() != targets.len() {
            bail!(
                Argument,
                "{} feature rows, {} targets, {} ids",
                features.n_rows(),
                targets.len(),
                unit_ids.len()
            );
        }
        if targets.iter().any(|t| !t.is_finite()) {
            bail!(Data, "non-finite target");
        }
        Ok(TrainingData {
            features,
            targets,
            unit_ids,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Copy with the listed rows replaced.
    pub fn replaced(&self, replacements: &[Replacement]) -> Result<TrainingData> {
        let mut out = self.clone();
        for r in replacements {
            if r.row >= out.len() {
                bail!(Argument, "replacement row {} out of range", r.row);
            }
            if r.features.len() != out.features.n_cols() {
                bail!(
                    Argument,
                    "replacement row has {} features",
                    r.features.len()
                );
            }
            out.features.row_mut(r.row).copy_from_slice(&r.features);
            out.targets[r.row] = r.target;
        }
        Ok(out)
    }
}

/// A replacement `(features, target)` for one training row.
#[derive(Debug, Clone, PartialEq)]
pub struct Replacement {
    pub row: usize,
    pub features: Vec<f64>,
    pub target: f64,
}

/// Training procedure and hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearnerSpec {
    Forest(ForestConfig),
    SgdRidge(SgdConfig),
    Ridge(RidgeKernelConfig),
    /// Ignores the data.
    Constant(f64),
    /// Mean of the targets.
    Mean,
}

impl LearnerSpec {
    /// Smallest training set the learner is meant for.
    pub fn min_training_size(&self) -> usize {
        match self {
            LearnerSpec::Forest(c) => c.min_leaf,
            LearnerSpec::Constant(_) => 0,
            _ => 1,
        }
    }

    /// The same learner with its seed replaced (no-op for deterministic
    /// learners).
    pub fn with_seed(&self, seed: u64) -> LearnerSpec {
        match self {
            LearnerSpec::Forest(c) => LearnerSpec::Forest(ForestConfig { seed, ..c.clone() }),
            other => other.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearnerKind {
    Forest,
    SgdRidge,
    Ridge,
    Constant,
    Mean,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Forest(Forest),
    /// `x ↦ x'θ`.
    Linear(Vec<f64>),
    Kernel(KernelModel),
    Constant(f64),
}

/// A fitted function from a feature vector to `R`.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictor {
    pub model: Model,
    pub kind: LearnerKind,
    /// Training size `ñ`.
    pub n_train: usize,
}

impl Predictor {
    pub fn constant(value: f64, kind: LearnerKind, n_train: usize) -> Self {
        Predictor {
            model: Model::Constant(value),
            kind,
            n_train,
        }
    }

    pub fn predict(&self, features: &[f64]) -> f64 {
        match &self.model {
            Model::Forest(f) => f.predict(features),
            Model::Linear(theta) => crate::linalg::dot(theta, features),
            Model::Kernel(k) => k.predict(features),
            Model::Constant(c) => *c,
        }
    }

    /// Linear coefficients, if the model is linear.
    pub fn coefficients(&self) -> Option<&[f64]> {
        match &self.model {
            Model::Linear(t) => Some(t),
            _ => None,
        }
    }
}

/// Trains `spec` on `data`.
pub fn fit(spec: &LearnerSpec, data: &TrainingData) -> Result<Predictor> {
    match spec {
        LearnerSpec::Forest(c) => fit_forest(data, c),
        LearnerSpec::SgdRidge(c) => fit_sgd_ridge(data, c),
        LearnerSpec::Ridge(c) => fit_ridge_closed(data, c),
        LearnerSpec::Constant(v) => Ok(Predictor::constant(*v, LearnerKind::Constant, data.len())),
        LearnerSpec::Mean => {
            if data.is_empty() {
                bail!(Data, "mean of an empty training set");
            }
            let m = data.targets.iter().sum::<f64>() / data.len() as f64;
            Ok(Predictor::constant(m, LearnerKind::Mean, data.len()))
        }
    }
}

/// Trains `spec` on `data` with the listed rows replaced. Learner randomness
/// is shared with `fit(spec, data)`.
pub fn retrain_on_perturbed(
    spec: &LearnerSpec,
    data: &TrainingData,
    replacements: &[Replacement],
) -> Result<Predictor> {
    if replacements.is_empty() {
        return fit(spec, data);
    }
    fit(spec, &data.replaced(replacements)?)
}

/// Retrains `spec` on `data`, where `data` differs from the data behind
/// `previous` only in the units listed in `changed_units` (which may also have
/// entered or left the training set). Forests reuse every tree whose resample
/// avoids the changed units; the result equals `fit(spec, data)`.
pub fn refit(
    spec: &LearnerSpec,
    previous: &Predictor,
    data: &TrainingData,
    changed_units: &[usize],
) -> Result<Predictor> {
    match (spec, &previous.model) {
        (LearnerSpec::Forest(c), Model::Forest(f)) if f.trees().len() == c.n_trees => {
            Ok(Predictor {
                model: Model::Forest(f.refit(data, c, changed_units)?),
                kind: LearnerKind::Forest,
                n_train: data.len(),
            })
        }
        _ => fit(spec, data),
    }
}
