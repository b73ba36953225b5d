//! Network-interference design with X-spillovers on an Erdős–Rényi graph.
//!
//! Each unit draws `C ~ U[0,1]`, `ε ~ U[-√0.12/2, √0.12/2]` and
//! `W ~ Bernoulli(p(C))` from its own random stream. The network feature
//! `X_i` averages `(W_j + (1 - W_j)) C_j` over the direct neighbors of `i`
//! (0 for isolated units), and `Y = W g1(X, C) + (1 - W) g0(X, C) + ε`.

use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{gen_er_network, Dataset, GroundTruth, Observation};
use crate::error::{bail, Result};
use crate::exec::Executor;
use crate::metric_space::MetricSpace;
use crate::rng;

/// Half-width of the uniform noise, `√0.12 / 2` (variance 0.01).
pub const NOISE_HALF_WIDTH: f64 = 0.173_205_080_756_887_72;

/// How neighbors' variables enter `X_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureMap {
    /// `(W_j + (1 - W_j)) C_j`, as written in the design (the `W` terms cancel).
    #[default]
    Literal,
    /// Fraction of treated neighbors.
    TreatedFraction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterferenceDgpConfig {
    pub n: usize,
    /// Expected degree; links form with probability `delta / n`.
    pub delta: f64,
    pub seed: u64,
    pub retain_truth: bool,
    #[serde(default)]
    pub feature_map: FeatureMap,
}

impl InterferenceDgpConfig {
    pub fn new(n: usize, delta: f64, seed: u64) -> Self {
        InterferenceDgpConfig {
            n,
            delta,
            seed,
            retain_truth: false,
            feature_map: FeatureMap::Literal,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            bail!(Config, "sample size must be positive");
        }
        let p = self.delta / self.n as f64;
        if !(0.0..=1.0).contains(&p) {
            bail!(Config, "delta/n = {p} must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Per-unit structural values behind a generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceTruth {
    pub g1: Vec<f64>,
    pub g0: Vec<f64>,
    pub eps: Vec<f64>,
    pub propensity: Vec<f64>,
}

/// `P(W = 1 | C)`.
pub fn propensity(c: f64) -> f64 {
    if c < 0.33 {
        0.15
    } else if c < 0.66 {
        0.5
    } else {
        0.85
    }
}

/// Treated potential-outcome regression.
pub fn g1(x: f64, c: f64) -> f64 {
    let hi = c >= -0.2;
    let mut v = 0.0;
    if (0.5..0.7).contains(&x) && hi {
        v += 1.5;
    }
    if x >= 0.7 && hi {
        v += 4.0;
    }
    if x >= 0.5 && !hi {
        v += 0.5;
    }
    if x < 0.5 && hi {
        v += 3.5;
    }
    if x < 0.5 && !hi {
        v += 2.5;
    }
    v
}

/// Control potential-outcome regression.
pub fn g0(x: f64, c: f64) -> f64 {
    let hi = c >= 0.2;
    let mut v = 0.0;
    if x >= 0.4 && hi {
        v += 0.5;
    }
    if x >= 0.4 && !hi {
        v -= 0.75;
    }
    if x < 0.4 && hi {
        v += 0.25;
    }
    if x < 0.4 && !hi {
        v -= 0.5;
    }
    v
}

struct UnitDraw {
    c: f64,
    eps: f64,
    w: f64,
}

fn draw_unit(seed: u64, unit: usize) -> UnitDraw {
    let mut s = rng::unit_stream(seed, unit as u64);
    let c: f64 = s.gen();
    let eps = (2.0 * s.gen::<f64>() - 1.0) * NOISE_HALF_WIDTH;
    let w = if s.gen::<f64>() < propensity(c) {
        1.0
    } else {
        0.0
    };
    UnitDraw { c, eps, w }
}

/// Draws one dataset on `space`.
pub fn gen_interference_data(
    config: &InterferenceDgpConfig,
    space: Arc<MetricSpace>,
) -> Result<Dataset> {
    config.validate()?;
    if space.len() != config.n {
        bail!(
            Argument,
            "space has {} units, config expects {}",
            space.len(),
            config.n
        );
    }
    let graph = match space.as_graph() {
        Some(g) => g,
        None => bail!(Argument, "the interference design requires a graph space"),
    };
    let draws: Vec<UnitDraw> = (0..config.n).map(|i| draw_unit(config.seed, i)).collect();
    let mut observations = Vec::with_capacity(config.n);
    let mut truth = config.retain_truth.then(|| InterferenceTruth {
        g1: Vec::with_capacity(config.n),
        g0: Vec::with_capacity(config.n),
        eps: Vec::with_capacity(config.n),
        propensity: Vec::with_capacity(config.n),
    });
    for (i, d) in draws.iter().enumerate() {
        let nbrs = graph.neighbors(i);
        let x = if nbrs.is_empty() {
            0.0
        } else {
            let sum: f64 = nbrs
                .iter()
                .map(|&j| {
                    let dj = &draws[j as usize];
                    match config.feature_map {
                        FeatureMap::Literal => (dj.w + (1.0 - dj.w)) * dj.c,
                        FeatureMap::TreatedFraction => dj.w,
                    }
                })
                .sum();
            sum / nbrs.len() as f64
        };
        let (m1, m0) = (g1(x, d.c), g0(x, d.c));
        let y = d.w * m1 + (1.0 - d.w) * m0 + d.eps;
        observations.push(Observation {
            y,
            w: d.w,
            x,
            c: d.c,
            v: None,
        });
        if let Some(t) = truth.as_mut() {
            t.g1.push(m1);
            t.g0.push(m0);
            t.eps.push(d.eps);
            t.propensity.push(propensity(d.c));
        }
    }
    let mut data = Dataset::new(observations, space)?;
    data.truth = truth.map(GroundTruth::Interference);
    Ok(data)
}

/// Monte Carlo estimate of `θ_0 = n^{-1} Σ E[g1(X_i, C_i) - g0(X_i, C_i)]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueAte {
    pub theta0: f64,
    pub std_error: f64,
    pub reps: usize,
}

/// Averages `g1 - g0` over `reps` fresh networks and covariate draws.
/// Replication `r` uses network seed `derive_seed(seed, NETWORK, r)` and
/// data seed `derive_seed(seed, DATA, r)`.
pub fn true_ate<E: Executor>(
    config: &InterferenceDgpConfig,
    reps: usize,
    exec: &E,
) -> Result<TrueAte> {
    config.validate()?;
    if reps == 0 {
        bail!(Argument, "true_ate needs at least one replication");
    }
    let per_rep: Vec<Result<f64>> = exec.map_indexed(reps, |r| {
        let r = r as u64;
        let space = Arc::new(gen_er_network(
            config.n,
            config.delta,
            rng::derive_seed(config.seed, rng::tag::NETWORK, r),
        )?);
        let cfg = InterferenceDgpConfig {
            seed: rng::derive_seed(config.seed, rng::tag::DATA, r),
            retain_truth: false,
            ..config.clone()
        };
        let data = gen_interference_data(&cfg, space)?;
        let s: f64 = data
            .observations
            .iter()
            .map(|o| g1(o.x, o.c) - g0(o.x, o.c))
            .sum();
        Ok(s / data.len() as f64)
    });
    let values = per_rep.into_iter().collect::<Result<Vec<f64>>>()?;
    let mean = values.iter().sum::<f64>() / reps as f64;
    let std_error = if reps > 1 {
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (reps - 1) as f64;
        libm::sqrt(var / reps as f64)
    } else {
        f64::NAN
    };
    Ok(TrueAte {
        theta0: mean,
        std_error,
        reps,
    })
}
