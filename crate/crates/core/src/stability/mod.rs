//! Neighborhood stability of trained nuisances.
//!
//! For a pair `(i, j)` and radius `r`, the observations in
//! `S = N(i, r) ∪ N(j, r)` are replaced by those of an independent copy `Z̃`
//! drawn on the same space, the nuisances are retrained with the same learner
//! randomness, and the moment components `ψ` and `ν` are compared at `Z_i`
//! and at a fresh draw `Z*_i`. Root mean squares over independent
//! `(Z, Z̃, Z*)` replications, maximized over the probed pairs, should decay
//! faster than `n^{−1/2}`; [`measure_neighborhood_stability`] fits the
//! log-log slope across sizes.

use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dgp::{
    gen_er_network, gen_interference_data, Dataset, FeatureMap, InterferenceDgpConfig,
};
use crate::error::{bail, Result};
use crate::estimator::{fit_nuisance, refit_nuisance, NuisanceSpec};
use crate::exec::Executor;
use crate::metric_space::{BfsScratch, MetricSpace, NeighborhoodStats};
use crate::moments::MomentModel;
use crate::rng;

mod bounds;

pub use bounds::{
    check_growth_mixing_tradeoff, check_prop2_bound, check_prop3_bound, check_prop4_rates,
    prop2_sigma, BRule, GrowthRecord, GrowthReport, MixingRegime, Prop2Check, Prop3Check,
    Prop4Inputs, Prop4Record, Prop4Report,
};

/// Source of spaces and independent datasets on a given space.
pub trait CoupledGenerator: Sync {
    fn space(&self, n: usize, seed: u64) -> Result<Arc<MetricSpace>>;
    /// A dataset on `space`; distinct seeds give independent draws.
    fn draw(&self, space: &Arc<MetricSpace>, seed: u64) -> Result<Dataset>;
}

/// The network-interference design on Erdős–Rényi graphs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterferenceGenerator {
    pub delta: f64,
    #[serde(default)]
    pub feature_map: FeatureMap,
}

impl InterferenceGenerator {
    pub fn new(delta: f64) -> Self {
        InterferenceGenerator {
            delta,
            feature_map: FeatureMap::Literal,
        }
    }
}

impl CoupledGenerator for InterferenceGenerator {
    fn space(&self, n: usize, seed: u64) -> Result<Arc<MetricSpace>> {
        Ok(Arc::new(gen_er_network(n, self.delta, seed)?))
    }

    fn draw(&self, space: &Arc<MetricSpace>, seed: u64) -> Result<Dataset> {
        let mut c = InterferenceDgpConfig::new(space.len(), self.delta, seed);
        c.feature_map = self.feature_map;
        gen_interference_data(&c, Arc::clone(space))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityConfig {
    /// Neighborhood radius `r_n`.
    pub r_n: f64,
    /// Number of diagonal pairs `(i, i)` probed; `None` probes every unit.
    pub diagonal_pairs: Option<usize>,
    /// Number of random off-diagonal pairs `(i, j)`.
    pub off_diagonal_pairs: usize,
    /// Independent `(Z, Z̃, Z*)` replications per size.
    pub mc_reps: usize,
    pub moment: MomentModel,
    pub nuisance: NuisanceSpec,
    pub seed: u64,
    /// Maximal log-log slope accepted as `o(n^{−1/2})`.
    #[serde(default = "default_threshold")]
    pub slope_threshold: f64,
    #[serde(default = "default_tolerance")]
    pub slope_tolerance: f64,
}

fn default_threshold() -> f64 {
    -0.5
}

fn default_tolerance() -> f64 {
    0.05
}

impl StabilityConfig {
    /// Radius 3, every diagonal pair plus 100 off-diagonal pairs, 50
    /// replications.
    pub fn new(moment: MomentModel, nuisance: NuisanceSpec, seed: u64) -> Self {
        StabilityConfig {
            r_n: 3.0,
            diagonal_pairs: None,
            off_diagonal_pairs: 100,
            mc_reps: 50,
            moment,
            nuisance,
            seed,
            slope_threshold: default_threshold(),
            slope_tolerance: default_tolerance(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.moment.validate()?;
        if !(self.r_n >= 0.0) {
            bail!(Config, "neighborhood radius must be >= 0, got {}", self.r_n);
        }
        if self.mc_reps == 0 {
            bail!(Config, "mc_reps must be >= 1");
        }
        if matches!(self.nuisance, NuisanceSpec::Oracle) {
            bail!(Config, "stability is measured for learned nuisances");
        }
        Ok(())
    }
}

/// Results for one sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRecord {
    pub n: usize,
    pub pairs: usize,
    pub mc_reps: usize,
    /// `max_{i,j} E[(f(Z_i, ĝ) − f(Z_i, ĝ^{(−i,−j)}))²]^{1/2}`, maximized
    /// over the moment components as well.
    pub max_rms_in_sample: f64,
    /// The same at a fresh draw `Z*_i`.
    pub max_rms_fresh: f64,
    pub sqrt_n_in_sample: f64,
    pub sqrt_n_fresh: f64,
    /// Mean size of the swapped sets.
    pub mean_swap_size: f64,
    pub neighborhoods: NeighborhoodStats,
    /// Some radius covers the whole space.
    pub swap_covers_space: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub records: Vec<StabilityRecord>,
    /// Log-log slope of `max_rms_in_sample` against `n`; `None` when some
    /// maximum is zero.
    pub slope_in_sample: Option<f64>,
    pub slope_fresh: Option<f64>,
    pub slope_threshold: f64,
    pub slope_tolerance: f64,
}

impl StabilityReport {
    /// Every maximum is exactly zero.
    pub fn all_zero(&self) -> bool {
        self.records
            .iter()
            .all(|r| r.max_rms_in_sample == 0.0 && r.max_rms_fresh == 0.0)
    }

    /// Both slopes lie below `threshold + tolerance`, or every perturbation
    /// is zero.
    pub fn decays_faster_than_root_n(&self) -> bool {
        if self.all_zero() {
            return true;
        }
        let cut = self.slope_threshold + self.slope_tolerance;
        matches!((self.slope_in_sample, self.slope_fresh), (Some(a), Some(b)) if a <= cut && b <= cut)
    }
}

/// Least-squares slope of `log y` on `log x`; `None` for fewer than two
/// points or a nonpositive value.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 || x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| libm::log(*v)).collect();
    let ly: Vec<f64> = y.iter().map(|v| libm::log(*v)).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

/// Pairs probed at size `n`: diagonal pairs first, then off-diagonal ones.
pub fn probe_pairs(n: usize, config: &StabilityConfig) -> Vec<(usize, usize)> {
    let mut s = rng::rng_from_seed(rng::derive_seed(config.seed, rng::tag::PAIRS, n as u64));
    let mut pairs: Vec<(usize, usize)> = match config.diagonal_pairs {
        None => (0..n).map(|i| (i, i)).collect(),
        Some(k) if k >= n => (0..n).map(|i| (i, i)).collect(),
        Some(k) => rand::seq::index::sample(&mut s, n, k)
            .into_iter()
            .map(|i| (i, i))
            .collect(),
    };
    if n >= 2 {
        for _ in 0..config.off_diagonal_pairs {
            let i = s.gen_range(0..n);
            let mut j = s.gen_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            pairs.push((i, j));
        }
    }
    pairs
}

/// Squared differences of `(ψ, ν)` at `Z_i` and at `Z*_i`, per pair, for
/// one replication.
fn replicate<G: CoupledGenerator>(
    generator: &G,
    space: &Arc<MetricSpace>,
    swaps: &[Vec<usize>],
    pairs: &[(usize, usize)],
    config: &StabilityConfig,
    n: usize,
    rep: usize,
) -> Result<Vec<[f64; 4]>> {
    let key = (n as u64) << 32 | rep as u64;
    let z = generator.draw(space, rng::derive_seed(config.seed, rng::tag::DATA, key))?;
    let z_tilde = generator.draw(space, rng::derive_seed(config.seed, rng::tag::COPY, key))?;
    let z_star = generator.draw(space, rng::derive_seed(config.seed, rng::tag::FRESH, key))?;
    let learner_seed = rng::derive_seed(config.seed, rng::tag::LEARNER, key);
    let all: Vec<usize> = (0..n).collect();
    let base = fit_nuisance(&z, &all, &config.moment, &config.nuisance, learner_seed, 0)?;
    let eval =
        |g: &crate::estimator::FittedNuisance, data: &Dataset, i: usize| -> Result<(f64, f64)> {
            let o = &data.observations[i];
            config.moment.evaluate(o, &g.values(i, o))
        };
    let mut out = Vec::with_capacity(pairs.len());
    for (&(i, _), swap) in pairs.iter().zip(swaps) {
        let perturbed = z.with_units_from(&z_tilde, swap)?;
        let g = refit_nuisance(
            &base,
            &perturbed,
            &all,
            &config.moment,
            &config.nuisance,
            learner_seed,
            0,
            swap,
        )?;
        let (p0, n0) = eval(&base, &z, i)?;
        let (p1, n1) = eval(&g, &z, i)?;
        let (q0, m0) = eval(&base, &z_star, i)?;
        let (q1, m1) = eval(&g, &z_star, i)?;
        let sq = |a: f64, b: f64| (a - b) * (a - b);
        out.push([sq(p0, p1), sq(n0, n1), sq(q0, q1), sq(m0, m1)]);
    }
    Ok(out)
}

/// Perturb-retrain measurement over `n_grid`. Size `n` uses network seed
/// `derive_seed(seed, NETWORK, n)`; replications run through `exec` and the
/// report does not depend on how they are scheduled.
pub fn measure_neighborhood_stability<G: CoupledGenerator, E: Executor>(
    generator: &G,
    config: &StabilityConfig,
    n_grid: &[usize],
    exec: &E,
) -> Result<StabilityReport> {
    config.validate()?;
    if n_grid.is_empty() {
        bail!(Argument, "empty size grid");
    }
    let mut records = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        if n < 2 {
            bail!(Argument, "stability needs n >= 2, got {n}");
        }
        let space = generator.space(
            n,
            rng::derive_seed(config.seed, rng::tag::NETWORK, n as u64),
        )?;
        let pairs = probe_pairs(n, config);
        let mut scratch = BfsScratch::new();
        let swaps = pairs
            .iter()
            .map(|&(i, j)| space.neighborhood_union(i, j, config.r_n, &mut scratch))
            .collect::<Result<Vec<_>>>()?;
        let per_rep = exec.map_indexed(config.mc_reps, |rep| {
            replicate(generator, &space, &swaps, &pairs, config, n, rep)
        });
        let mut sums = alloc::vec![[0.0f64; 4]; pairs.len()];
        for rep in per_rep {
            for (acc, v) in sums.iter_mut().zip(rep?) {
                for c in 0..4 {
                    acc[c] += v[c];
                }
            }
        }
        let reps = config.mc_reps as f64;
        let rms = |c: usize| {
            sums.iter()
                .map(|s| libm::sqrt(s[c] / reps))
                .fold(0.0, f64::max)
        };
        let max_in = rms(0).max(rms(1));
        let max_fresh = rms(2).max(rms(3));
        let root_n = libm::sqrt(n as f64);
        records.push(StabilityRecord {
            n,
            pairs: pairs.len(),
            mc_reps: config.mc_reps,
            max_rms_in_sample: max_in,
            max_rms_fresh: max_fresh,
            sqrt_n_in_sample: root_n * max_in,
            sqrt_n_fresh: root_n * max_fresh,
            mean_swap_size: swaps.iter().map(Vec::len).sum::<usize>() as f64 / swaps.len() as f64,
            neighborhoods: space.neighborhood_stats(config.r_n)?,
            swap_covers_space: swaps.iter().any(|s| s.len() == n),
        });
    }
    let ns: Vec<f64> = records.iter().map(|r| r.n as f64).collect();
    let ins: Vec<f64> = records.iter().map(|r| r.max_rms_in_sample).collect();
    let fresh: Vec<f64> = records.iter().map(|r| r.max_rms_fresh).collect();
    Ok(StabilityReport {
        slope_in_sample: log_log_slope(&ns, &ins),
        slope_fresh: log_log_slope(&ns, &fresh),
        records,
        slope_threshold: config.slope_threshold,
        slope_tolerance: config.slope_tolerance,
    })
}
