//! Monte Carlo orchestration of the three experiments.
//!
//! Replication `r` draws everything from `derive_seed(master_seed,
//! REPLICATION, r)`: the network from its `NETWORK` child at index `n`, the
//! unit draws from its `DATA` child and the learners from its `LEARNER`
//! child. Replications run through an [`Executor`] and are aggregated in
//! index order, so results do not depend on the worker count.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use netdml_core::dgp::{gen_er_network, gen_interference_data, true_ate, TrueAte};
use netdml_core::estimator::{self, make_neighborhood_folds, NuisanceSpec};
use netdml_core::learners::{LearnerSpec, Resampling, SubsampleRule};
use netdml_core::rng::{derive_seed, tag};
use netdml_core::stability::{
    measure_neighborhood_stability, InterferenceGenerator, StabilityReport,
};
use netdml_core::Executor;
use serde::{Deserialize, Serialize};

use crate::config::{Experiment, Method, SimConfig};
use crate::error::{HarnessError, Result};

/// Summary of one `(n, method)` cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodRecord {
    pub n: usize,
    pub method: Method,
    /// `|mean(θ̂) − θ_0|`.
    pub bias: f64,
    /// Sample standard deviation of `θ̂` (0 for a single replication).
    pub std: f64,
    pub mean_treated: f64,
    pub theta0: f64,
    /// Training-set size averaged over folds and replications.
    pub mean_training_size: f64,
    /// Folds that fell back to pooled means, summed over replications.
    pub degenerate_folds: usize,
    pub max_moment_residual: f64,
    pub reps: usize,
    /// Estimation time summed over replications, in seconds. Not part of
    /// equality.
    pub wall_time_s: f64,
}

impl PartialEq for MethodRecord {
    fn eq(&self, o: &Self) -> bool {
        self.n == o.n
            && self.method == o.method
            && self.bias == o.bias
            && self.std == o.std
            && self.mean_treated == o.mean_treated
            && self.theta0 == o.theta0
            && self.mean_training_size == o.mean_training_size
            && self.degenerate_folds == o.degenerate_folds
            && self.max_moment_residual == o.max_moment_residual
            && self.reps == o.reps
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTheta {
    pub n: usize,
    pub method: Method,
    pub rep: usize,
    pub theta_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSizeRecord {
    pub n: usize,
    pub delta: f64,
    pub folds: usize,
    pub mean_training_size: f64,
    pub std_training_size: f64,
    pub reps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub n: usize,
    pub delta: f64,
    pub theta0: f64,
    pub std_error: Option<f64>,
    pub networks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityOutcome {
    pub learner: String,
    pub report: StabilityReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub experiment: Experiment,
    pub master_seed: u64,
    pub records: Vec<MethodRecord>,
    pub raw: Vec<RawTheta>,
    pub fold_sizes: Vec<FoldSizeRecord>,
    pub truths: Vec<TruthRecord>,
    pub stability: Vec<StabilityOutcome>,
}

impl SimResult {
    pub fn empty(experiment: Experiment, master_seed: u64) -> Self {
        SimResult {
            experiment,
            master_seed,
            records: Vec::new(),
            raw: Vec::new(),
            fold_sizes: Vec::new(),
            truths: Vec::new(),
            stability: Vec::new(),
        }
    }

    pub fn record(&self, n: usize, method: Method) -> Option<&MethodRecord> {
        self.records.iter().find(|r| r.n == n && r.method == method)
    }

    pub fn fold_size(&self, n: usize, delta: f64, folds: usize) -> Option<&FoldSizeRecord> {
        self.fold_sizes
            .iter()
            .find(|r| r.n == n && r.delta == delta && r.folds == folds)
    }

    pub fn stability_of(&self, learner: &str) -> Option<&StabilityReport> {
        self.stability
            .iter()
            .find(|s| s.learner == learner)
            .map(|s| &s.report)
    }

    /// Raw estimates of one cell in replication order.
    pub fn thetas(&self, n: usize, method: Method) -> Vec<f64> {
        self.raw
            .iter()
            .filter(|r| r.n == n && r.method == method)
            .map(|r| r.theta_hat)
            .collect()
    }
}

/// `(|mean − θ_0|, sample std)`; the std of a single value is 0.
pub fn summarize(values: &[f64], theta0: f64) -> (f64, f64) {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1.0)).sqrt()
    } else {
        0.0
    };
    ((mean - theta0).abs(), std)
}

/// Seed of replication `r`.
pub fn rep_seed(master: u64, r: usize) -> u64 {
    derive_seed(master, tag::REPLICATION, r as u64)
}

/// `θ_0` at `(n, Δ)` from `config.truth.networks` fresh networks.
pub fn theta0<E: Executor>(config: &SimConfig, n: usize, delta: f64, exec: &E) -> Result<TrueAte> {
    let dgp = config.dgp(
        n,
        delta,
        derive_seed(config.master_seed, tag::TRUTH, n as u64),
    );
    Ok(true_ate(&dgp, config.truth.networks, exec)?)
}

/// Runs the configured experiment. The configuration is validated before any
/// computation.
pub fn run_experiment<E: Executor>(config: &SimConfig, exec: &E) -> Result<SimResult> {
    config.validate()?;
    match config.experiment {
        Experiment::Table1 | Experiment::Custom => run_estimation(config, exec),
        Experiment::Table2 => run_fold_sizes(config, exec),
        Experiment::Stability => run_stability(config, exec),
    }
}

struct FitSummary {
    theta: f64,
    training: f64,
    degenerate: usize,
    residual: f64,
    secs: f64,
}

struct RepOutcome {
    treated: usize,
    fits: Vec<FitSummary>,
}

fn one_replication(config: &SimConfig, n: usize, r: usize) -> netdml_core::Result<RepOutcome> {
    let s = rep_seed(config.master_seed, r);
    let space = Arc::new(gen_er_network(
        n,
        config.delta,
        derive_seed(s, tag::NETWORK, n as u64),
    )?);
    let data = gen_interference_data(
        &config.dgp(n, config.delta, derive_seed(s, tag::DATA, n as u64)),
        space,
    )?;
    let learner_seed = derive_seed(s, tag::LEARNER, n as u64);
    let mut fits = Vec::with_capacity(config.methods.len());
    for &m in &config.methods {
        let t = Instant::now();
        let fit = estimator::fit(&data, &config.estimator(m, learner_seed))?;
        let sizes = fit.fold_training_sizes();
        fits.push(FitSummary {
            theta: fit.theta_hat,
            training: sizes.iter().sum::<usize>() as f64 / sizes.len() as f64,
            degenerate: fit.degenerate_folds(),
            residual: fit.moment_residual,
            secs: t.elapsed().as_secs_f64(),
        });
    }
    Ok(RepOutcome {
        treated: data.treated_count(),
        fits,
    })
}

fn collect<T>(n: usize, outcomes: Vec<netdml_core::Result<T>>) -> Result<Vec<T>> {
    outcomes
        .into_iter()
        .enumerate()
        .map(|(rep, o)| o.map_err(|source| HarnessError::Replication { n, rep, source }))
        .collect()
}

fn run_estimation<E: Executor>(config: &SimConfig, exec: &E) -> Result<SimResult> {
    let mut result = SimResult::empty(config.experiment, config.master_seed);
    let mut cache: BTreeMap<usize, TrueAte> = BTreeMap::new();
    for &n in &config.n_grid {
        if !cache.contains_key(&n) {
            cache.insert(n, theta0(config, n, config.delta, exec)?);
        }
        let truth = cache[&n];
        result.truths.push(TruthRecord {
            n,
            delta: config.delta,
            theta0: truth.theta0,
            std_error: truth.std_error.is_finite().then_some(truth.std_error),
            networks: truth.reps,
        });
        let reps = collect(
            n,
            exec.map_indexed(config.reps, |r| one_replication(config, n, r)),
        )?;
        let mean_treated = reps.iter().map(|o| o.treated as f64).sum::<f64>() / reps.len() as f64;
        for (k, &method) in config.methods.iter().enumerate() {
            let thetas: Vec<f64> = reps.iter().map(|o| o.fits[k].theta).collect();
            let (bias, std) = summarize(&thetas, truth.theta0);
            result.records.push(MethodRecord {
                n,
                method,
                bias,
                std,
                mean_treated,
                theta0: truth.theta0,
                mean_training_size: reps.iter().map(|o| o.fits[k].training).sum::<f64>()
                    / reps.len() as f64,
                degenerate_folds: reps.iter().map(|o| o.fits[k].degenerate).sum(),
                max_moment_residual: reps.iter().map(|o| o.fits[k].residual).fold(0.0, f64::max),
                reps: reps.len(),
                wall_time_s: reps.iter().map(|o| o.fits[k].secs).sum(),
            });
            result
                .raw
                .extend(thetas.iter().enumerate().map(|(rep, &theta_hat)| RawTheta {
                    n,
                    method,
                    rep,
                    theta_hat,
                }));
        }
    }
    Ok(result)
}

fn run_fold_sizes<E: Executor>(config: &SimConfig, exec: &E) -> Result<SimResult> {
    let mut result = SimResult::empty(config.experiment, config.master_seed);
    for cell in &config.table2.cells {
        for &n in &config.n_grid {
            let sizes = collect(
                n,
                exec.map_indexed(config.reps, |r| {
                    let s = rep_seed(config.master_seed, r);
                    let space =
                        gen_er_network(n, cell.delta, derive_seed(s, tag::NETWORK, n as u64))?;
                    let folds = make_neighborhood_folds(
                        &space,
                        cell.folds,
                        config.estimator.exclusion_distance,
                        derive_seed(s, tag::FOLDS, n as u64),
                    )?;
                    Ok(folds.mean_training_size())
                }),
            )?;
            let (mean, std) = summarize(&sizes, 0.0);
            result.fold_sizes.push(FoldSizeRecord {
                n,
                delta: cell.delta,
                folds: cell.folds,
                mean_training_size: mean,
                std_training_size: std,
                reps: sizes.len(),
            });
        }
    }
    Ok(result)
}

pub const SUBSAMPLED_FOREST: &str = "subsampled-forest";
pub const FULL_SAMPLE_TREE: &str = "full-sample-tree";
pub const CONSTANT: &str = "constant";

/// Learners probed by the stability experiment: the subsampled forests, a
/// single tree grown on the whole training set (a learner that is not
/// expected to be neighborhood-stable), and constants.
pub fn stability_learners(config: &SimConfig) -> Vec<(&'static str, NuisanceSpec)> {
    let (mut outcome, mut propensity) = config.forests(Resampling::Subsample(SubsampleRule::ALL));
    for f in [&mut outcome, &mut propensity] {
        f.n_trees = 1;
        f.min_leaf = config.stability.control_min_leaf;
    }
    vec![
        (SUBSAMPLED_FOREST, config.nuisance(Method::SubsampleFull)),
        (
            FULL_SAMPLE_TREE,
            NuisanceSpec::Learned {
                outcome: LearnerSpec::Forest(outcome),
                propensity: LearnerSpec::Forest(propensity),
                propensity_features: config.learner.propensity_features,
            },
        ),
        (
            CONSTANT,
            NuisanceSpec::learned(LearnerSpec::Constant(0.5), LearnerSpec::Constant(0.5)),
        ),
    ]
}

fn run_stability<E: Executor>(config: &SimConfig, exec: &E) -> Result<SimResult> {
    let mut result = SimResult::empty(config.experiment, config.master_seed);
    let generator = InterferenceGenerator {
        delta: config.delta,
        feature_map: config.feature_map,
    };
    for (name, spec) in stability_learners(config) {
        let report = measure_neighborhood_stability(
            &generator,
            &config.stability_config(spec),
            &config.n_grid,
            exec,
        )?;
        result.stability.push(StabilityOutcome {
            learner: name.to_string(),
            report,
        });
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::RayonExecutor;
    use netdml_core::Sequential;

    fn small(experiment: Experiment) -> SimConfig {
        let mut c = SimConfig::from_toml_str(
            "experiment = \"table1\"\nn_grid = [120, 200]\nreps = 3\n",
            "t",
        )
        .unwrap();
        c.experiment = experiment;
        c.learner.trees = 5;
        c.truth.networks = 20;
        c.master_seed = 11;
        c
    }

    #[test]
    fn summarize_by_hand() {
        let (bias, std) = summarize(&[1.0, 2.0, 3.0], 1.5);
        assert_eq!(bias, 0.5);
        assert_eq!(std, 1.0);
        assert_eq!(summarize(&[4.0], 4.0), (0.0, 0.0));
    }

    #[test]
    fn one_record_per_size_and_method() {
        let c = small(Experiment::Table1);
        let r = run_experiment(&c, &Sequential).unwrap();
        assert_eq!(r.records.len(), c.n_grid.len() * c.methods.len());
        assert_eq!(r.raw.len(), r.records.len() * c.reps);
        for rec in &r.records {
            assert!(rec.bias >= 0.0 && rec.std >= 0.0);
            assert!(rec.max_moment_residual <= 1e-10);
            let (bias, std) = summarize(&r.thetas(rec.n, rec.method), rec.theta0);
            assert_eq!((bias, std), (rec.bias, rec.std));
            if rec.method.crossfit() {
                assert!(rec.mean_training_size < rec.n as f64);
            } else {
                assert_eq!(rec.mean_training_size, rec.n as f64);
            }
        }
    }

    #[test]
    fn single_replication_is_reproducible() {
        let mut c = small(Experiment::Table1);
        c.reps = 1;
        let a = run_experiment(&c, &Sequential).unwrap();
        let b = run_experiment(&c, &Sequential).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.records[0].std, 0.0);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let c = small(Experiment::Table1);
        assert_eq!(
            run_experiment(&c, &Sequential).unwrap(),
            run_experiment(&c, &RayonExecutor::new(3)).unwrap()
        );
        let t = small(Experiment::Table2);
        assert_eq!(
            run_experiment(&t, &Sequential).unwrap(),
            run_experiment(&t, &RayonExecutor::new(2)).unwrap()
        );
    }

    #[test]
    fn invalid_config_fails_before_compute() {
        let mut c = small(Experiment::Table1);
        c.folds = 1;
        c.reps = 0;
        match run_experiment(&c, &Sequential) {
            Err(HarnessError::Invalid(errs)) => assert_eq!(errs.len(), 2, "{errs:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn fold_sizes_without_links_keep_other_folds() {
        let mut c = small(Experiment::Table2);
        c.table2.cells = vec![crate::config::FoldCell {
            delta: 0.0,
            folds: 4,
        }];
        let r = run_experiment(&c, &Sequential).unwrap();
        assert_eq!(r.fold_sizes.len(), 2);
        assert_eq!(r.fold_sizes[0].mean_training_size, 90.0);
        assert_eq!(r.fold_sizes[1].mean_training_size, 150.0);
        assert_eq!(r.fold_sizes[0].std_training_size, 0.0);
    }

    #[test]
    fn stability_probes_three_learners() {
        let mut c = small(Experiment::Stability);
        c.n_grid = vec![60, 120];
        c.reps = 2;
        c.stability.diagonal_pairs = 2;
        c.stability.off_diagonal_pairs = 1;
        let r = run_experiment(&c, &Sequential).unwrap();
        assert_eq!(r.stability.len(), 3);
        assert!(r.stability_of(CONSTANT).unwrap().all_zero());
        assert!(!r.stability_of(FULL_SAMPLE_TREE).unwrap().all_zero());
    }
}
