//! Training and evaluating the nuisance functions of a moment.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dgp::{Dataset, GroundTruth, Observation};
use crate::error::{bail, Result};
use crate::learners::{self, FeatureMatrix, LearnerSpec, Predictor, TrainingData};
use crate::moments::{MomentKind, MomentModel, NuisanceValues};
use crate::rng;

/// How nuisances are obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NuisanceSpec {
    /// Learned from data. The ATE moment uses `outcome` for the per-arm
    /// regressions of `Y` and `propensity` for `P(W = w | X, C)`; the PLIV
    /// moment uses `outcome` for all three regressions.
    Learned {
        outcome: LearnerSpec,
        propensity: LearnerSpec,
        #[serde(default)]
        propensity_features: PropensityFeatures,
    },
    /// The true nuisances retained by the generator.
    Oracle,
}

impl NuisanceSpec {
    /// Learned nuisances with the default `(X, C)` propensity covariates.
    pub fn learned(outcome: LearnerSpec, propensity: LearnerSpec) -> Self {
        NuisanceSpec::Learned {
            outcome,
            propensity,
            propensity_features: PropensityFeatures::default(),
        }
    }
}

/// Covariates of the propensity model. Outcome regressions always use
/// `(X, C)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PropensityFeatures {
    #[default]
    #[serde(rename = "xc")]
    XC,
    #[serde(rename = "c")]
    COnly,
}

impl PropensityFeatures {
    fn of(self, o: &Observation) -> ([f64; 2], usize) {
        match self {
            PropensityFeatures::XC => (features(o), 2),
            PropensityFeatures::COnly => ([o.c, 0.0], 1),
        }
    }
}

/// Covariates fed to every learner: `(X, C)`.
pub fn features(o: &Observation) -> [f64; 2] {
    [o.x, o.c]
}

/// Fitted nuisances, evaluable at any observation.
#[derive(Debug, Clone, PartialEq)]
pub enum FittedNuisance {
    DrAte {
        mu_w: Predictor,
        mu_c: Predictor,
        /// `P(W = w | ·)`; `P(W = w' | ·) = 1 − e` for binary treatments.
        e_w: Predictor,
        e_features: PropensityFeatures,
    },
    Pliv {
        l_y: Predictor,
        l_w: Predictor,
        l_v: Predictor,
    },
    /// True values per unit.
    Oracle(Vec<NuisanceValues>),
}

impl FittedNuisance {
    /// Nuisance values at `obs`, which sits at position `unit`. Learned
    /// nuisances ignore `unit`.
    pub fn values(&self, unit: usize, obs: &Observation) -> NuisanceValues {
        let x = features(obs);
        match self {
            FittedNuisance::DrAte {
                mu_w,
                mu_c,
                e_w,
                e_features,
            } => {
                let (z, d) = e_features.of(obs);
                let e = e_w.predict(&z[..d]);
                NuisanceValues::DrAte {
                    mu_w: mu_w.predict(&x),
                    e_w: e,
                    mu_c: mu_c.predict(&x),
                    e_c: 1.0 - e,
                }
            }
            FittedNuisance::Pliv { l_y, l_w, l_v } => NuisanceValues::Pliv {
                l_y: l_y.predict(&x),
                l_w: l_w.predict(&x),
                l_v: l_v.predict(&x),
            },
            FittedNuisance::Oracle(v) => v[unit],
        }
    }
}

fn training_data(
    data: &Dataset,
    units: &[usize],
    target: impl Fn(&Observation) -> f64,
) -> Result<TrainingData> {
    let rows: Vec<[f64; 2]> = units
        .iter()
        .map(|&i| features(&data.observations[i]))
        .collect();
    let y = units
        .iter()
        .map(|&i| target(&data.observations[i]))
        .collect();
    TrainingData::with_ids(FeatureMatrix::from_rows(&rows)?, y, units.to_vec())
}

fn propensity_data(
    data: &Dataset,
    units: &[usize],
    level: f64,
    which: PropensityFeatures,
) -> Result<TrainingData> {
    let rows: Vec<([f64; 2], usize)> = units
        .iter()
        .map(|&i| which.of(&data.observations[i]))
        .collect();
    let rows: Vec<&[f64]> = rows.iter().map(|(z, d)| &z[..*d]).collect();
    let y = units
        .iter()
        .map(|&i| {
            if data.observations[i].w == level {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    TrainingData::with_ids(FeatureMatrix::from_rows(&rows)?, y, units.to_vec())
}

/// Seed of nuisance component `component` in fit `slot` (fold index, or 0
/// for the full sample).
fn component_seed(seed: u64, slot: usize, component: u64) -> u64 {
    rng::derive_seed(seed, rng::tag::LEARNER, slot as u64 * 4 + component)
}

/// Whether `units` can support the learners: every training set the moment
/// needs is at least as large as the learner's minimum.
pub fn supports_fit(
    data: &Dataset,
    units: &[usize],
    moment: &MomentModel,
    spec: &NuisanceSpec,
) -> bool {
    let NuisanceSpec::Learned {
        outcome,
        propensity,
        ..
    } = spec
    else {
        return true;
    };
    match moment.kind {
        MomentKind::DrAte => {
            let (w, wc) = moment.levels;
            let n_w = units
                .iter()
                .filter(|&&i| data.observations[i].w == w)
                .count();
            let n_c = units
                .iter()
                .filter(|&&i| data.observations[i].w == wc)
                .count();
            let need = outcome.min_training_size().max(1);
            n_w >= need && n_c >= need && units.len() >= propensity.min_training_size().max(1)
        }
        MomentKind::Pliv => units.len() >= outcome.min_training_size().max(1),
    }
}

/// Trains the nuisances of `moment` on `units`. `slot` separates the learner
/// seeds of different folds.
pub fn fit_nuisance(
    data: &Dataset,
    units: &[usize],
    moment: &MomentModel,
    spec: &NuisanceSpec,
    seed: u64,
    slot: usize,
) -> Result<FittedNuisance> {
    let (outcome, propensity, e_features) = match spec {
        NuisanceSpec::Oracle => return oracle(data, moment),
        NuisanceSpec::Learned {
            outcome,
            propensity,
            propensity_features,
        } => (outcome, propensity, *propensity_features),
    };
    match moment.kind {
        MomentKind::DrAte => {
            let (w, wc) = moment.levels;
            let arm = |level: f64| -> Vec<usize> {
                units
                    .iter()
                    .copied()
                    .filter(|&i| data.observations[i].w == level)
                    .collect()
            };
            let (treated, control) = (arm(w), arm(wc));
            if treated.is_empty() || control.is_empty() {
                bail!(
                    Data,
                    "a treatment arm is empty ({} treated, {} control)",
                    treated.len(),
                    control.len()
                );
            }
            let mu_w = learners::fit(
                &outcome.with_seed(component_seed(seed, slot, 0)),
                &training_data(data, &treated, |o| o.y)?,
            )?;
            let mu_c = learners::fit(
                &outcome.with_seed(component_seed(seed, slot, 1)),
                &training_data(data, &control, |o| o.y)?,
            )?;
            let e_w = learners::fit(
                &propensity.with_seed(component_seed(seed, slot, 2)),
                &propensity_data(data, units, w, e_features)?,
            )?;
            Ok(FittedNuisance::DrAte {
                mu_w,
                mu_c,
                e_w,
                e_features,
            })
        }
        MomentKind::Pliv => {
            if units.is_empty() {
                bail!(Data, "empty training set");
            }
            if units.iter().any(|&i| data.observations[i].v.is_none()) {
                bail!(Argument, "PLIV nuisances need an instrument for every unit");
            }
            let l_y = learners::fit(
                &outcome.with_seed(component_seed(seed, slot, 0)),
                &training_data(data, units, |o| o.y)?,
            )?;
            let l_w = learners::fit(
                &outcome.with_seed(component_seed(seed, slot, 1)),
                &training_data(data, units, |o| o.w)?,
            )?;
            let l_v = learners::fit(
                &outcome.with_seed(component_seed(seed, slot, 2)),
                &training_data(data, units, |o| o.v.unwrap_or(0.0))?,
            )?;
            Ok(FittedNuisance::Pliv { l_y, l_w, l_v })
        }
    }
}

/// Refits learned nuisances after the units in `changed_units` were
/// replaced, reusing unaffected forest trees. Equal to
/// `fit_nuisance(data, units, ..)`.
pub fn refit_nuisance(
    previous: &FittedNuisance,
    data: &Dataset,
    units: &[usize],
    moment: &MomentModel,
    spec: &NuisanceSpec,
    seed: u64,
    slot: usize,
    changed_units: &[usize],
) -> Result<FittedNuisance> {
    let (
        NuisanceSpec::Learned {
            outcome,
            propensity,
            propensity_features,
        },
        FittedNuisance::DrAte {
            mu_w, mu_c, e_w, ..
        },
    ) = (spec, previous)
    else {
        return fit_nuisance(data, units, moment, spec, seed, slot);
    };
    if moment.kind != MomentKind::DrAte {
        return fit_nuisance(data, units, moment, spec, seed, slot);
    }
    let (w, wc) = moment.levels;
    let arm = |level: f64| -> Vec<usize> {
        units
            .iter()
            .copied()
            .filter(|&i| data.observations[i].w == level)
            .collect()
    };
    let (treated, control) = (arm(w), arm(wc));
    if treated.is_empty() || control.is_empty() {
        bail!(
            Data,
            "a treatment arm is empty ({} treated, {} control)",
            treated.len(),
            control.len()
        );
    }
    Ok(FittedNuisance::DrAte {
        mu_w: learners::refit(
            &outcome.with_seed(component_seed(seed, slot, 0)),
            mu_w,
            &training_data(data, &treated, |o| o.y)?,
            changed_units,
        )?,
        mu_c: learners::refit(
            &outcome.with_seed(component_seed(seed, slot, 1)),
            mu_c,
            &training_data(data, &control, |o| o.y)?,
            changed_units,
        )?,
        e_w: learners::refit(
            &propensity.with_seed(component_seed(seed, slot, 2)),
            e_w,
            &propensity_data(data, units, w, *propensity_features)?,
            changed_units,
        )?,
        e_features: *propensity_features,
    })
}

/// Constant nuisances equal to the means over `pool`.
pub fn fallback_nuisance(
    data: &Dataset,
    pool: &[usize],
    moment: &MomentModel,
) -> Result<FittedNuisance> {
    if pool.is_empty() {
        bail!(Data, "fallback pool is empty");
    }
    let mean = |units: &[usize], f: &dyn Fn(&Observation) -> f64| -> f64 {
        units.iter().map(|&i| f(&data.observations[i])).sum::<f64>() / units.len() as f64
    };
    let constant = |v: f64, kind| Predictor::constant(v, kind, pool.len());
    match moment.kind {
        MomentKind::DrAte => {
            let (w, wc) = moment.levels;
            let treated: Vec<usize> = pool
                .iter()
                .copied()
                .filter(|&i| data.observations[i].w == w)
                .collect();
            let control: Vec<usize> = pool
                .iter()
                .copied()
                .filter(|&i| data.observations[i].w == wc)
                .collect();
            if treated.is_empty() || control.is_empty() {
                bail!(Data, "a treatment arm is empty in the fallback pool");
            }
            Ok(FittedNuisance::DrAte {
                mu_w: constant(mean(&treated, &|o| o.y), learners::LearnerKind::Mean),
                mu_c: constant(mean(&control, &|o| o.y), learners::LearnerKind::Mean),
                e_w: constant(
                    treated.len() as f64 / pool.len() as f64,
                    learners::LearnerKind::Mean,
                ),
                e_features: PropensityFeatures::XC,
            })
        }
        MomentKind::Pliv => Ok(FittedNuisance::Pliv {
            l_y: constant(mean(pool, &|o| o.y), learners::LearnerKind::Mean),
            l_w: constant(mean(pool, &|o| o.w), learners::LearnerKind::Mean),
            l_v: constant(
                mean(pool, &|o| o.v.unwrap_or(0.0)),
                learners::LearnerKind::Mean,
            ),
        }),
    }
}

fn oracle(data: &Dataset, moment: &MomentModel) -> Result<FittedNuisance> {
    let values = match (&data.truth, moment.kind) {
        (Some(GroundTruth::Interference(t)), MomentKind::DrAte) => {
            if moment.levels != (1.0, 0.0) {
                bail!(
                    Argument,
                    "oracle ATE nuisances exist only for levels (1, 0)"
                );
            }
            (0..data.len())
                .map(|i| NuisanceValues::DrAte {
                    mu_w: t.g1[i],
                    e_w: t.propensity[i],
                    mu_c: t.g0[i],
                    e_c: 1.0 - t.propensity[i],
                })
                .collect()
        }
        (Some(GroundTruth::Pliv(t)), MomentKind::Pliv) => (0..data.len())
            .map(|i| NuisanceValues::Pliv {
                l_y: t.l_y[i],
                l_w: t.l_w[i],
                l_v: t.l_v[i],
            })
            .collect(),
        (None, _) => bail!(
            Argument,
            "oracle nuisances need a dataset generated with retained truth"
        ),
        _ => bail!(
            Argument,
            "retained truth does not match the {:?} moment",
            moment.kind
        ),
    };
    Ok(FittedNuisance::Oracle(values))
}
