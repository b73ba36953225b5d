//! Synthetic data: Erdős–Rényi networks, the network-interference design and
//! a partially linear IV design.

use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::metric_space::{Graph, MetricSpace};
use crate::rng;

mod interference;
mod pliv;

pub use interference::{
    g0, g1, gen_interference_data, propensity, true_ate, FeatureMap, InterferenceDgpConfig,
    InterferenceTruth, TrueAte,
};
pub use pliv::{gen_pliv_data, PlivParams, PlivTruth};

/// One unit `Z_i = (Y_i, W_i, X_i, C_i[, V_i])`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub y: f64,
    pub w: f64,
    pub x: f64,
    pub c: f64,
    pub v: Option<f64>,
}

impl Observation {
    pub fn is_treated(&self) -> bool {
        self.w == 1.0
    }
}

/// Ground truth kept alongside generated data for oracle checks.
#[derive(Debug, Clone, PartialEq)]
pub enum GroundTruth {
    Interference(InterferenceTruth),
    Pliv(PlivTruth),
}

/// Observations together with the space they live in.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub observations: Vec<Observation>,
    pub space: Arc<MetricSpace>,
    pub truth: Option<GroundTruth>,
}

impl Dataset {
    pub fn new(observations: Vec<Observation>, space: Arc<MetricSpace>) -> Result<Self> {
        if observations.len() != space.len() {
            bail!(
                Argument,
                "{} observations for a space of {} units",
                observations.len(),
                space.len()
            );
        }
        Ok(Dataset {
            observations,
            space,
            truth: None,
        })
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn treated_count(&self) -> usize {
        self.observations.iter().filter(|o| o.is_treated()).count()
    }

    /// Copy of `self` whose units in `units` are taken from `donor`.
    /// The result carries no ground truth.
    pub fn with_units_from(&self, donor: &Dataset, units: &[usize]) -> Result<Dataset> {
        if donor.len() != self.len() {
            bail!(
                Argument,
                "donor has {} units, expected {}",
                donor.len(),
                self.len()
            );
        }
        let mut observations = self.observations.clone();
        for &k in units {
            if k >= observations.len() {
                bail!(Argument, "unit {k} out of range");
            }
            observations[k] = donor.observations[k];
        }
        Ok(Dataset {
            observations,
            space: Arc::clone(&self.space),
            truth: None,
        })
    }
}

/// Erdős–Rényi graph: each of the `n(n-1)/2` pairs is linked independently
/// with probability `delta / n`.
///
/// Pairs are visited in lexicographic order with geometric skips, so the
/// cost is proportional to the number of edges.
pub fn gen_er_network(n: usize, delta: f64, seed: u64) -> Result<MetricSpace> {
    if n == 0 {
        return Ok(MetricSpace::Graph(Graph::empty(0)));
    }
    let p = delta / n as f64;
    if !(0.0..=1.0).contains(&p) {
        bail!(Argument, "linking probability delta/n = {p} outside [0, 1]");
    }
    let mut edges = Vec::new();
    if p > 0.0 {
        let mut rng = rng::rng_from_seed(seed);
        let log_q = libm::log1p(-p);
        // linear position within the current row, rows are i = 0..n-1 with
        // n-1-i candidate partners each
        let mut i = 0usize;
        let mut offset: i64 = -1;
        loop {
            let skip = if p >= 1.0 {
                0
            } else {
                let u: f64 = 1.0 - rng.gen::<f64>();
                let s = libm::floor(libm::log(u) / log_q);
                if s >= 1e15 {
                    break;
                }
                s as i64
            };
            offset += skip + 1;
            while i < n && offset >= (n - 1 - i) as i64 {
                offset -= (n - 1 - i) as i64;
                i += 1;
            }
            if i + 1 >= n {
                break;
            }
            edges.push((i, i + 1 + offset as usize));
        }
    }
    Ok(MetricSpace::Graph(Graph::from_edges(n, &edges)?))
}
