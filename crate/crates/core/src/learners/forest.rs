//! Bagged and subsampled tree ensembles.
//!
//! Tree `b` is fit on its own resample of the training rows and the forest
//! predicts the average of its trees. Resample draws depend only on the
//! forest seed, `b` and the unit ids of the training rows (never on feature
//! or target values):
//!
//! * bootstrap draws `ñ` row positions with replacement from the `b`-th
//!   stream;
//! * subsampling keeps the `m` units with the smallest hashed key
//!   `key(seed, b, unit_id)`, which is a uniform draw without replacement
//!   whose membership only changes where units enter or leave the training
//!   set.
//!
//! Consequently a forest retrained after replacing some units differs from
//! the original only in trees whose resample contains a replaced unit, and
//! [`Forest::refit`] reuses every other tree.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tree::{fit_tree, Tree, TreeParams};
use super::{LearnerKind, Model, Predictor, TrainingData};
use crate::error::{bail, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Criterion {
    /// Binary targets; leaves predict the fraction of ones.
    Gini,
    Mse,
}

/// `m = min(⌈factor · ñ^exponent⌉, ñ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsampleRule {
    pub factor: f64,
    pub exponent: f64,
}

impl SubsampleRule {
    /// `m = min(⌈10 ñ^{1/3}⌉, ñ)`.
    pub const TEN_CUBE_ROOT: SubsampleRule = SubsampleRule {
        factor: 10.0,
        exponent: 1.0 / 3.0,
    };
    /// `m = ñ`: every tree sees the whole training set once.
    pub const ALL: SubsampleRule = SubsampleRule {
        factor: 1.0,
        exponent: 1.0,
    };

    pub fn size(&self, n_train: usize) -> usize {
        if n_train == 0 {
            return 0;
        }
        let m = libm::ceil(self.factor * libm::pow(n_train as f64, self.exponent));
        // guard against 10 * 1000^{1/3} = 100.00000000000001 style rounding
        let m = if libm::fabs(m - 1.0 - self.factor * libm::pow(n_train as f64, self.exponent))
            < 1e-9
        {
            m - 1.0
        } else {
            m
        };
        (m.max(1.0) as usize).min(n_train)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Resampling {
    /// `ñ` draws with replacement.
    Bootstrap,
    /// Draws without replacement, size given by the rule.
    Subsample(SubsampleRule),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
    pub criterion: Criterion,
    pub resampling: Resampling,
    pub seed: u64,
}

impl ForestConfig {
    /// Bootstrap regression forest, unlimited depth.
    pub fn regression(n_trees: usize, min_leaf: usize, seed: u64) -> Self {
        ForestConfig {
            n_trees,
            min_leaf,
            max_depth: None,
            criterion: Criterion::Mse,
            resampling: Resampling::Bootstrap,
            seed,
        }
    }

    /// Bootstrap Gini classification forest of depth-2 trees.
    pub fn propensity(n_trees: usize, min_leaf: usize, seed: u64) -> Self {
        ForestConfig {
            n_trees,
            min_leaf,
            max_depth: Some(2),
            criterion: Criterion::Gini,
            resampling: Resampling::Bootstrap,
            seed,
        }
    }

    pub fn with_resampling(mut self, resampling: Resampling) -> Self {
        self.resampling = resampling;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            bail!(Config, "forest needs at least one tree");
        }
        if self.min_leaf == 0 {
            bail!(Config, "minimum leaf size must be at least 1");
        }
        if let Resampling::Subsample(rule) = self.resampling {
            if !(rule.factor > 0.0) || !(rule.exponent >= 0.0) {
                bail!(Config, "subsample rule needs factor > 0 and exponent >= 0");
            }
        }
        Ok(())
    }

    fn tree_params(&self) -> TreeParams {
        TreeParams {
            min_leaf: self.min_leaf,
            max_depth: self.max_depth,
            criterion: self.criterion,
        }
    }

    /// Resample size for a training set of `n_train` rows.
    pub fn resample_size(&self, n_train: usize) -> usize {
        match self.resampling {
            Resampling::Bootstrap => n_train,
            Resampling::Subsample(rule) => rule.size(n_train),
        }
    }
}

/// A fitted ensemble together with the unit ids each tree was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    trees: Vec<Tree>,
    draws: Vec<Vec<usize>>,
}

impl Forest {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let s: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        s / self.trees.len() as f64
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    /// Unit ids in tree `b`'s resample, in draw order.
    pub fn draw(&self, b: usize) -> &[usize] {
        &self.draws[b]
    }

    /// Refits on `data`, reusing every tree whose resample is unchanged and
    /// contains no unit listed in `changed_units`. The result is identical
    /// to fitting `data` from scratch.
    pub fn refit(
        &self,
        data: &TrainingData,
        config: &ForestConfig,
        changed_units: &[usize],
    ) -> Result<Forest> {
        check(data, config)?;
        if self.trees.len() != config.n_trees {
            bail!(
                Argument,
                "forest has {} trees, config {}",
                self.trees.len(),
                config.n_trees
            );
        }
        let universe = data
            .unit_ids
            .iter()
            .chain(changed_units)
            .copied()
            .max()
            .map_or(0, |m| m + 1);
        let mut changed = vec![false; universe];
        for &u in changed_units {
            changed[u] = true;
        }
        let params = config.tree_params();
        let mut keys = Vec::new();
        let mut trees = Vec::with_capacity(config.n_trees);
        let mut draws = Vec::with_capacity(config.n_trees);
        for b in 0..config.n_trees {
            let rows = draw_rows(data, config, b, &mut keys);
            let ids: Vec<usize> = rows.iter().map(|&r| data.unit_ids[r]).collect();
            let reusable = ids == self.draws[b] && !ids.iter().any(|&u| changed[u]);
            if reusable {
                trees.push(self.trees[b].clone());
            } else {
                trees.push(fit_tree(&data.features, &data.targets, &rows, &params));
            }
            draws.push(ids);
        }
        Ok(Forest { trees, draws })
    }
}

fn check(data: &TrainingData, config: &ForestConfig) -> Result<()> {
    config.validate()?;
    if data.is_empty() {
        bail!(Data, "cannot fit a forest on an empty training set");
    }
    if config.criterion == Criterion::Gini && data.targets.iter().any(|&t| t != 0.0 && t != 1.0) {
        bail!(Data, "gini criterion requires binary 0/1 targets");
    }
    Ok(())
}

/// Row positions of tree `b`'s resample.
fn draw_rows(
    data: &TrainingData,
    config: &ForestConfig,
    b: usize,
    keys: &mut Vec<(u64, usize)>,
) -> Vec<usize> {
    let n = data.len();
    let tree_seed = rng::derive_seed(config.seed, rng::tag::TREE, b as u64);
    match config.resampling {
        Resampling::Bootstrap => {
            let mut s = rng::rng_from_seed(tree_seed);
            (0..n).map(|_| s.gen_range(0..n)).collect()
        }
        Resampling::Subsample(rule) => {
            let m = rule.size(n);
            if m == n {
                return (0..n).collect();
            }
            keys.clear();
            keys.extend(
                data.unit_ids.iter().enumerate().map(|(pos, &id)| {
                    (rng::splitmix64(tree_seed ^ rng::splitmix64(id as u64)), pos)
                }),
            );
            keys.select_nth_unstable(m - 1);
            keys.truncate(m);
            keys.sort_unstable();
            keys.iter().map(|&(_, pos)| pos).collect()
        }
    }
}

/// Fits a forest and wraps it as a predictor.
pub fn fit_forest(data: &TrainingData, config: &ForestConfig) -> Result<Predictor> {
    let forest = Forest::fit(data, config)?;
    Ok(Predictor {
        model: Model::Forest(forest),
        kind: LearnerKind::Forest,
        n_train: data.len(),
    })
}

impl Forest {
    pub fn fit(data: &TrainingData, config: &ForestConfig) -> Result<Forest> {
        check(data, config)?;
        let params = config.tree_params();
        let mut keys = Vec::new();
        let mut trees = Vec::with_capacity(config.n_trees);
        let mut draws = Vec::with_capacity(config.n_trees);
        for b in 0..config.n_trees {
            let rows = draw_rows(data, config, b, &mut keys);
            trees.push(fit_tree(&data.features, &data.targets, &rows, &params));
            draws.push(rows.iter().map(|&r| data.unit_ids[r]).collect());
        }
        Ok(Forest { trees, draws })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{retrain_on_perturbed, FeatureMatrix, Replacement};
    use alloc::collections::BTreeSet;
    use proptest::prelude::*;

    fn sample(n: usize, seed: u64) -> TrainingData {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let a = rng::hashed_unit(seed, 1, i as u64);
            let c = rng::hashed_unit(seed, 2, i as u64);
            rows.push([a, c]);
            y.push(if a + c > 1.0 { 2.0 } else { 0.0 } + rng::hashed_unit(seed, 3, i as u64));
        }
        TrainingData::new(FeatureMatrix::from_rows(&rows).unwrap(), y).unwrap()
    }

    #[test]
    fn subsample_sizes() {
        let r = SubsampleRule::TEN_CUBE_ROOT;
        assert_eq!(r.size(1000), 100);
        assert_eq!(r.size(500), 80);
        assert_eq!(r.size(250), 63);
        assert_eq!(r.size(37), 34);
        assert_eq!(r.size(30), 30);
        assert_eq!(r.size(0), 0);
        assert_eq!(SubsampleRule::ALL.size(17), 17);
    }

    #[test]
    fn constant_target_predicts_constant() {
        let mut d = sample(60, 1);
        d.targets.iter_mut().for_each(|t| *t = 3.25);
        for res in [
            Resampling::Bootstrap,
            Resampling::Subsample(SubsampleRule::TEN_CUBE_ROOT),
        ] {
            let p =
                fit_forest(&d, &ForestConfig::regression(20, 5, 1).with_resampling(res)).unwrap();
            assert_eq!(p.predict(&[0.3, 0.9]), 3.25);
        }
    }

    #[test]
    fn prediction_is_mean_of_trees() {
        let d = sample(200, 2);
        let f = Forest::fit(&d, &ForestConfig::regression(17, 5, 4)).unwrap();
        for q in [[0.1, 0.1], [0.5, 0.7], [0.95, 0.2]] {
            let mean = f.trees().iter().map(|t| t.predict(&q)).sum::<f64>() / 17.0;
            assert_eq!(f.predict(&q), mean);
        }
    }

    #[test]
    fn depth_two_gini_recovers_step_propensity() {
        // P(W=1|C) is a three-level step function
        let n = 10_000;
        let mut rows = Vec::new();
        let mut w = Vec::new();
        for i in 0..n {
            let c = rng::hashed_unit(5, 1, i);
            let x = rng::hashed_unit(5, 2, i);
            let u = rng::hashed_unit(5, 3, i);
            rows.push([x, c]);
            w.push(if u < crate::dgp::propensity(c) {
                1.0
            } else {
                0.0
            });
        }
        let d = TrainingData::new(FeatureMatrix::from_rows(&rows).unwrap(), w).unwrap();
        let p = fit_forest(&d, &ForestConfig::propensity(50, 5, 3)).unwrap();
        for (c, target) in [
            (0.1, 0.15),
            (0.2, 0.15),
            (0.45, 0.5),
            (0.55, 0.5),
            (0.75, 0.85),
            (0.95, 0.85),
        ] {
            for x in [0.1, 0.5, 0.9] {
                let e = p.predict(&[x, c]);
                assert!((e - target).abs() < 0.03, "c={c} x={x} -> {e}");
                assert!((0.0..=1.0).contains(&e));
            }
        }
    }

    #[test]
    fn gini_rejects_non_binary_targets() {
        let d = sample(20, 1);
        assert!(fit_forest(&d, &ForestConfig::propensity(3, 1, 1)).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let d = sample(120, 9);
        let c = ForestConfig::regression(10, 5, 77);
        assert_eq!(Forest::fit(&d, &c).unwrap(), Forest::fit(&d, &c).unwrap());
        let c2 = ForestConfig::regression(10, 5, 78);
        assert_ne!(Forest::fit(&d, &c).unwrap(), Forest::fit(&d, &c2).unwrap());
    }

    #[test]
    fn subsample_draws_are_without_replacement() {
        let d = sample(500, 3);
        let c = ForestConfig::regression(30, 5, 1)
            .with_resampling(Resampling::Subsample(SubsampleRule::TEN_CUBE_ROOT));
        let f = Forest::fit(&d, &c).unwrap();
        for b in 0..30 {
            let set: BTreeSet<_> = f.draw(b).iter().collect();
            assert_eq!(set.len(), 80);
        }
    }

    #[test]
    fn unit_outside_every_subsample_is_irrelevant() {
        let d = sample(400, 4);
        let c = ForestConfig::regression(25, 5, 12)
            .with_resampling(Resampling::Subsample(SubsampleRule::TEN_CUBE_ROOT));
        let f = Forest::fit(&d, &c).unwrap();
        let used: BTreeSet<usize> = (0..25).flat_map(|b| f.draw(b).iter().copied()).collect();
        let unused = (0..400)
            .find(|u| !used.contains(u))
            .expect("some unit unused");
        let spec = crate::learners::LearnerSpec::Forest(c.clone());
        let p = retrain_on_perturbed(
            &spec,
            &d,
            &[Replacement {
                row: unused,
                features: vec![0.5, 0.5],
                target: 100.0,
            }],
        )
        .unwrap();
        let base = fit_forest(&d, &c).unwrap();
        for i in 0..400 {
            assert_eq!(
                p.predict(d.features.row(i)),
                base.predict(d.features.row(i))
            );
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn refit_matches_scratch_fit(seed in 0u64..1000, k in 1usize..6, bootstrap in any::<bool>(), drop in any::<bool>()) {
            let d = sample(150, seed);
            let res = if bootstrap { Resampling::Bootstrap } else { Resampling::Subsample(SubsampleRule::TEN_CUBE_ROOT) };
            let c = ForestConfig::regression(12, 5, seed).with_resampling(res);
            let f = Forest::fit(&d, &c).unwrap();
            let changed: Vec<usize> = (0..k).map(|j| (seed as usize * 7 + j * 31) % 150).collect();
            let mut d2 = d.replaced(&changed.iter().map(|&row| Replacement {
                row, features: vec![0.25, 0.75], target: -3.0,
            }).collect::<Vec<_>>()).unwrap();
            if drop {
                // a unit leaves the training set, as when treatment arms change
                let gone = changed[0];
                let keep: Vec<usize> = (0..150).filter(|&r| r != gone).collect();
                let rows: Vec<Vec<f64>> = keep.iter().map(|&r| d2.features.row(r).to_vec()).collect();
                d2 = TrainingData::with_ids(
                    FeatureMatrix::from_rows(&rows).unwrap(),
                    keep.iter().map(|&r| d2.targets[r]).collect(),
                    keep.iter().map(|&r| d2.unit_ids[r]).collect(),
                ).unwrap();
            }
            let scratch = Forest::fit(&d2, &c).unwrap();
            let refit = f.refit(&d2, &c, &changed).unwrap();
            prop_assert_eq!(scratch, refit);
        }
    }
}
