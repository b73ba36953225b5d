//! Random K-fold partitions with neighborhood-excluded training sets.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::metric_space::{MetricSpace, DEFAULT_ALL_PAIRS_CAP};
use crate::rng;

/// Fold membership and per-fold training sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldAssignment {
    /// `fold_of[i]` is the fold containing unit `i`.
    pub fold_of: Vec<usize>,
    /// Units of each fold, ascending.
    pub folds: Vec<Vec<usize>>,
    /// Training units of each fold, ascending: units outside the fold at
    /// distance at least `d*` from every unit in it.
    pub training: Vec<Vec<usize>>,
}

impl FoldAssignment {
    pub fn k(&self) -> usize {
        self.folds.len()
    }

    pub fn training_sizes(&self) -> Vec<usize> {
        self.training.iter().map(Vec::len).collect()
    }

    pub fn mean_training_size(&self) -> f64 {
        self.training.iter().map(Vec::len).sum::<usize>() as f64 / self.k() as f64
    }
}

/// Shuffles `[n]` and deals the permutation round-robin into `k` folds, so
/// fold sizes differ by at most one. With `d* = 3` on a graph the training
/// set of a fold excludes its members, their neighbors and every unit
/// sharing a neighbor with a member.
pub fn make_neighborhood_folds(
    space: &MetricSpace,
    k: usize,
    d_star: f64,
    seed: u64,
) -> Result<FoldAssignment> {
    let n = space.len();
    if k < 2 {
        bail!(Argument, "cross-fitting needs at least 2 folds, got {k}");
    }
    if k > n {
        bail!(Argument, "{k} folds for {n} units");
    }
    if !(d_star >= 0.0) {
        bail!(
            Argument,
            "exclusion distance must be nonnegative, got {d_star}"
        );
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng::rng_from_seed(seed));
    let mut fold_of = vec![0; n];
    let mut folds = vec![Vec::with_capacity(n / k + 1); k];
    for (pos, &unit) in perm.iter().enumerate() {
        fold_of[unit] = pos % k;
    }
    for (unit, &f) in fold_of.iter().enumerate() {
        folds[f].push(unit);
    }
    let mut training = Vec::with_capacity(k);
    for (f, members) in folds.iter().enumerate() {
        let near = space.closer_than(members, d_star)?;
        training.push((0..n).filter(|&i| fold_of[i] != f && !near[i]).collect());
    }
    Ok(FoldAssignment {
        fold_of,
        folds,
        training,
    })
}

/// Counts (training unit, evaluation unit) pairs closer than `d*`, checking
/// every pair against all-pairs distances. Also fails if the folds do not
/// partition the units.
pub fn audit_exclusion(space: &MetricSpace, folds: &FoldAssignment, d_star: f64) -> Result<usize> {
    let n = space.len();
    let mut seen = vec![false; n];
    for f in &folds.folds {
        for &i in f {
            if i >= n || seen[i] {
                bail!(Data, "folds do not partition the units");
            }
            seen[i] = true;
        }
    }
    if seen.iter().any(|s| !s) {
        bail!(Data, "folds do not cover every unit");
    }
    let dist: alloc::boxed::Box<dyn Fn(usize, usize) -> f64> = match space {
        MetricSpace::Graph(_) => {
            let hops = space.hop_matrix(DEFAULT_ALL_PAIRS_CAP)?;
            alloc::boxed::Box::new(move |i, j| hops.get(i, j))
        }
        MetricSpace::Euclidean(_) => {
            alloc::boxed::Box::new(|i, j| space.distance(i, j).unwrap_or(0.0))
        }
    };
    let mut violations = 0;
    for (f, train) in folds.training.iter().enumerate() {
        for &i in train {
            if folds.fold_of[i] == f {
                violations += 1;
                continue;
            }
            violations += folds.folds[f]
                .iter()
                .filter(|&&j| dist(i, j) < d_star)
                .count();
        }
    }
    Ok(violations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::gen_er_network;
    use crate::metric_space::{Graph, PointCloud};
    use proptest::prelude::*;

    #[test]
    fn empty_graph_keeps_all_other_folds() {
        let space = MetricSpace::Graph(Graph::empty(500));
        let f = make_neighborhood_folds(&space, 5, 3.0, 1).unwrap();
        assert!(f.training.iter().all(|t| t.len() == 400));
    }

    #[test]
    fn path_graph_exclusion() {
        // 0-1-2-3-4-5-6 with fold {0}: units at distance >= 3 are 3..=6
        let g = Graph::from_edges(7, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 6)]).unwrap();
        let space = MetricSpace::Graph(g);
        let folds = FoldAssignment {
            fold_of: vec![0, 1, 1, 1, 1, 1, 1],
            folds: vec![vec![0], vec![1, 2, 3, 4, 5, 6]],
            training: vec![vec![3, 4, 5, 6], vec![]],
        };
        assert_eq!(audit_exclusion(&space, &folds, 3.0).unwrap(), 0);
        let mut bad = folds.clone();
        bad.training[0] = vec![2, 3];
        assert_eq!(audit_exclusion(&space, &bad, 3.0).unwrap(), 1);
    }

    #[test]
    fn rejects_bad_arguments() {
        let space = MetricSpace::Graph(Graph::empty(10));
        assert!(make_neighborhood_folds(&space, 1, 3.0, 0).is_err());
        assert!(make_neighborhood_folds(&space, 11, 3.0, 0).is_err());
        assert!(make_neighborhood_folds(&space, 2, -1.0, 0).is_err());
    }

    #[test]
    fn euclidean_exclusion_is_strict() {
        let p = PointCloud::new(1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let space = MetricSpace::Euclidean(p);
        for seed in 0..10 {
            let f = make_neighborhood_folds(&space, 2, 1.0, seed).unwrap();
            assert_eq!(audit_exclusion(&space, &f, 1.0).unwrap(), 0);
            // distance exactly 1 is allowed
            for (k, t) in f.training.iter().enumerate() {
                let expect: Vec<usize> = (0..4).filter(|&i| f.fold_of[i] != k).collect();
                assert_eq!(t, &expect);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn partition_and_exclusion(n in 5usize..300, k in 2usize..6, delta in 0.0f64..6.0, d_star in 0u32..5, seed in any::<u64>()) {
            prop_assume!(k <= n);
            let space = gen_er_network(n, delta.min(n as f64), seed).unwrap();
            let f = make_neighborhood_folds(&space, k, d_star as f64, seed ^ 1).unwrap();
            let sizes: Vec<usize> = f.folds.iter().map(Vec::len).collect();
            prop_assert_eq!(sizes.iter().sum::<usize>(), n);
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            prop_assert_eq!(audit_exclusion(&space, &f, d_star as f64).unwrap(), 0);
            // maximality: every excluded outside unit is within d* of the fold
            let hops = space.hop_matrix(1000).unwrap();
            for (fi, train) in f.training.iter().enumerate() {
                for i in 0..n {
                    if f.fold_of[i] == fi || train.binary_search(&i).is_ok() { continue; }
                    prop_assert!(f.folds[fi].iter().any(|&j| hops.get(i, j) < d_star as f64));
                }
            }
        }
    }
}
