//! Checkers for the closed-form stability bounds and rate conditions.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::log_log_slope;
use crate::error::{bail, Result};
use crate::learners::{
    fit_ridge_closed, fit_sgd_ridge, Replacement, RidgeKernelConfig, SgdConfig, SubsampleRule,
    TrainingData,
};
use crate::linalg;
use crate::metric_space::{BfsScratch, MetricSpace};

/// Lipschitz constant of the squared loss on the range reachable by the
/// regularized solution: `σ = 2 (B_y + C_κ B_y / √λ)`, using
/// `‖ĝ‖_κ ≤ B_y / √λ` and `sup |ĝ| ≤ C_κ ‖ĝ‖_κ`.
pub fn prop2_sigma(c_kappa: f64, y_bound: f64, lambda: f64) -> f64 {
    2.0 * (y_bound + c_kappa * y_bound / libm::sqrt(lambda))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prop2Check {
    pub measured_sup: f64,
    /// `C_κ² σ k / (2 λ n)`.
    pub bound: f64,
    pub holds: bool,
}

/// Regular grid over `[−R, R]^d` restricted to the ball of radius `R`,
/// plus the `2d` points `±R e_j`.
fn ball_grid(dim: usize, radius: f64, per_axis: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let per_axis = per_axis.max(2);
    let mut idx = alloc::vec![0usize; dim];
    loop {
        let p: Vec<f64> = idx
            .iter()
            .map(|&k| -radius + 2.0 * radius * k as f64 / (per_axis - 1) as f64)
            .collect();
        if linalg::norm(&p) <= radius * (1.0 + 1e-12) {
            out.push(p);
        }
        let mut d = 0;
        while d < dim {
            idx[d] += 1;
            if idx[d] < per_axis {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
        if d == dim {
            break;
        }
    }
    for j in 0..dim {
        for s in [-radius, radius] {
            let mut p = alloc::vec![0.0; dim];
            p[j] = s;
            out.push(p);
        }
    }
    out
}

/// Fits closed-form ridge on `data` and on `data` with `replacements`
/// applied, and compares the largest prediction gap over a grid of the
/// feature ball to `C_κ² σ k / (2 λ n)`, where `k` counts distinct replaced
/// rows. All features must lie in the ball of radius `C_κ` (linear kernel)
/// and all targets in `[−y_bound, y_bound]`.
pub fn check_prop2_bound(
    data: &TrainingData,
    replacements: &[Replacement],
    config: &RidgeKernelConfig,
    y_bound: f64,
    grid_per_axis: usize,
) -> Result<Prop2Check> {
    config.validate()?;
    let Some(c_kappa) = config.c_kappa() else {
        bail!(
            Config,
            "the kernel bound is undefined without a bounded feature domain"
        );
    };
    if !c_kappa.is_finite() || !(y_bound >= 0.0) {
        bail!(Config, "kernel bound and target bound must be finite");
    }
    let perturbed = data.replaced(replacements)?;
    let linear = matches!(config.kernel, crate::learners::Kernel::Linear);
    for d in [data, &perturbed] {
        for i in 0..d.len() {
            if linear && linalg::norm(d.features.row(i)) > c_kappa * (1.0 + 1e-12) {
                bail!(
                    Data,
                    "row {i} lies outside the feature ball of radius {c_kappa}"
                );
            }
            if d.targets[i].abs() > y_bound {
                bail!(Data, "target of row {i} exceeds the bound {y_bound}");
            }
        }
    }
    let mut rows: Vec<usize> = replacements.iter().map(|r| r.row).collect();
    rows.sort_unstable();
    rows.dedup();
    let n = data.len();
    let a = fit_ridge_closed(data, config)?;
    let b = fit_ridge_closed(&perturbed, config)?;
    let radius = if linear { c_kappa } else { 1.0 };
    let measured_sup = ball_grid(data.features.n_cols(), radius, grid_per_axis)
        .iter()
        .map(|p| (a.predict(p) - b.predict(p)).abs())
        .fold(0.0, f64::max);
    let sigma = prop2_sigma(c_kappa, y_bound, config.lambda);
    let bound = c_kappa * c_kappa * sigma * rows.len() as f64 / (2.0 * config.lambda * n as f64);
    Ok(Prop2Check {
        measured_sup,
        bound,
        holds: measured_sup <= bound,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prop3Check {
    /// `‖θ̂ − θ̂^{(−i,−j)}‖`.
    pub measured: f64,
    /// `(2L/β) n^{−a} |N(i, r) ∪ N(j, r)|`.
    pub bound: f64,
    pub holds: bool,
    pub swap_size: usize,
    /// `γ/β` and the learning-rate requirement it must dominate.
    pub side_lhs: f64,
    pub side_rhs: f64,
    /// The side condition fails, so the bound is outside the theorem's scope.
    pub outside_scope: bool,
}

/// Runs SGD ridge on `data` and on `data` with the rows of
/// `N(i, r) ∪ N(j, r)` taken from `copy`, and compares the parameter gap to
/// the bound. Row `k` of both datasets belongs to unit `k` of `space`.
pub fn check_prop3_bound(
    data: &TrainingData,
    copy: &TrainingData,
    space: &MetricSpace,
    i: usize,
    j: usize,
    r: f64,
    config: &SgdConfig,
) -> Result<Prop3Check> {
    if data.len() != space.len() || copy.len() != data.len() {
        bail!(Argument, "data, copy and space sizes differ");
    }
    let swap = space.neighborhood_union(i, j, r, &mut BfsScratch::new())?;
    let replacements: Vec<Replacement> = swap
        .iter()
        .map(|&k| Replacement {
            row: k,
            features: copy.features.row(k).to_vec(),
            target: copy.targets[k],
        })
        .collect();
    let a = fit_sgd_ridge(data, config)?;
    let b = fit_sgd_ridge(&data.replaced(&replacements)?, config)?;
    let (ta, tb) = (
        a.coefficients().unwrap_or(&[]),
        b.coefficients().unwrap_or(&[]),
    );
    let diff: Vec<f64> = ta.iter().zip(tb).map(|(x, y)| x - y).collect();
    let measured = linalg::norm(&diff);
    let n = data.len();
    let bound = config.replacement_bound(n, swap.len());
    let (side_lhs, side_rhs) = config.side_condition(n);
    Ok(Prop3Check {
        measured,
        bound,
        holds: measured <= bound,
        swap_size: swap.len(),
        side_lhs,
        side_rhs,
        outside_scope: side_lhs < side_rhs,
    })
}

/// Number of base learners as a function of `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BRule {
    Fixed(usize),
    /// `B = n`.
    Linear,
}

/// Inputs of the bagging rate conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prop4Inputs {
    /// Subsample size rule applied to `n`; `SubsampleRule::ALL` is `m = n`.
    pub m_rule: SubsampleRule,
    pub b_rule: BRule,
    pub r: f64,
    pub s: f64,
    pub k: f64,
}

impl Prop4Inputs {
    pub fn validate(&self) -> Result<()> {
        if !(self.s >= 2.0 * self.r && self.k >= 2.0 * self.r) {
            bail!(Config, "need s, k >= 2r");
        }
        let gap = 1.0 / self.s + 1.0 / self.k - 1.0 / (2.0 * self.r);
        if !(libm::fabs(gap) <= 1e-12) {
            bail!(Config, "exponents violate 1/s + 1/k = 1/(2r) (gap {gap:e})");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prop4Record {
    pub n: usize,
    pub m: usize,
    pub b: usize,
    pub n_star: f64,
    /// `m N* / √n`, which must vanish.
    pub first: f64,
    /// `B^{−1} (m N*)^{2/k} n^{1−2/k}`, which must vanish.
    pub second: f64,
    /// `N* / √n`, which must decay polynomially.
    pub strengthened: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prop4Report {
    pub records: Vec<Prop4Record>,
    pub first_slope: Option<f64>,
    pub second_slope: Option<f64>,
    pub strengthened_slope: Option<f64>,
    /// Both sequences decrease across the grid with negative log-log slope.
    pub holds: bool,
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

/// Evaluates the bagging rate sequences on `n_grid`. `n_star[g]` is
/// `N*(r_n)` at `n_grid[g]`; a single value is used for every size.
pub fn check_prop4_rates(
    inputs: &Prop4Inputs,
    n_grid: &[usize],
    n_star: &[f64],
) -> Result<Prop4Report> {
    inputs.validate()?;
    if n_grid.is_empty() || !(n_star.len() == 1 || n_star.len() == n_grid.len()) {
        bail!(Argument, "need one N* value or one per grid size");
    }
    let records: Vec<Prop4Record> = n_grid
        .iter()
        .enumerate()
        .map(|(g, &n)| {
            let ns = if n_star.len() == 1 {
                n_star[0]
            } else {
                n_star[g]
            };
            let m = inputs.m_rule.size(n);
            let b = match inputs.b_rule {
                BRule::Fixed(b) => b,
                BRule::Linear => n,
            };
            let nf = n as f64;
            let mn = m as f64 * ns;
            Prop4Record {
                n,
                m,
                b,
                n_star: ns,
                first: mn / libm::sqrt(nf),
                second: libm::pow(mn, 2.0 / inputs.k) * libm::pow(nf, 1.0 - 2.0 / inputs.k)
                    / b as f64,
                strengthened: ns / libm::sqrt(nf),
            }
        })
        .collect();
    let ns: Vec<f64> = records.iter().map(|r| r.n as f64).collect();
    let col = |f: fn(&Prop4Record) -> f64| records.iter().map(f).collect::<Vec<f64>>();
    let (first, second, strong) = (col(|r| r.first), col(|r| r.second), col(|r| r.strengthened));
    let first_slope = log_log_slope(&ns, &first);
    let second_slope = log_log_slope(&ns, &second);
    let holds = strictly_decreasing(&first)
        && strictly_decreasing(&second)
        && first_slope.is_some_and(|s| s < 0.0)
        && second_slope.is_some_and(|s| s < 0.0);
    Ok(Prop4Report {
        first_slope,
        second_slope,
        strengthened_slope: log_log_slope(&ns, &strong),
        records,
        holds,
    })
}

/// Dependence regimes pairing a mixing rate with a neighborhood radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MixingRegime {
    /// `β(r) ≤ C e^{−α r}` with neighborhoods growing like `e^{δ r}`;
    /// `r_n = a log n / α`.
    Exponential {
        c: f64,
        alpha: f64,
        a: f64,
        delta: f64,
    },
    /// `β(r) ≤ C r^{−α}` in dimension `d`; `r_n = n^{a/α}`.
    Polynomial { c: f64, alpha: f64, a: f64, d: f64 },
    /// Independence beyond distance `m`; `r_n = m`.
    MDependent { m: f64 },
}

impl MixingRegime {
    pub fn radius(&self, n: usize) -> f64 {
        let nf = n as f64;
        match *self {
            MixingRegime::Exponential { alpha, a, .. } => a * libm::log(nf) / alpha,
            MixingRegime::Polynomial { alpha, a, .. } => libm::pow(nf, a / alpha),
            MixingRegime::MDependent { m } => m,
        }
    }

    /// The neighborhood growth exponent is at most `1/2`:
    /// `a δ / α ≤ 1/2` or `a d / α ≤ 1/2`; always true for m-dependence.
    pub fn analytic_condition(&self) -> (f64, bool) {
        match *self {
            MixingRegime::Exponential {
                alpha, a, delta, ..
            } => {
                let v = a * delta / alpha;
                (v, v <= 0.5)
            }
            MixingRegime::Polynomial { alpha, a, d, .. } => {
                let v = a * d / alpha;
                (v, v <= 0.5)
            }
            MixingRegime::MDependent { .. } => (0.0, true),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthRecord {
    pub n: usize,
    pub r_n: f64,
    pub avg_neighborhood: f64,
    /// `N̄_n(r_n) / √n`.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub records: Vec<GrowthRecord>,
    /// Exponent compared against `1/2`.
    pub analytic_value: f64,
    pub analytic_holds: bool,
    /// `N̄_n(r_n)/√n` never increases across the grid.
    pub measured_bounded: bool,
    pub ratio_slope: Option<f64>,
}

/// Measures `N̄_n(r_n)/√n` on the given spaces (ordered by size) and checks
/// the regime's analytic growth condition.
pub fn check_growth_mixing_tradeoff(
    regime: &MixingRegime,
    spaces: &[&MetricSpace],
) -> Result<GrowthReport> {
    let mut records = Vec::with_capacity(spaces.len());
    for space in spaces {
        let n = space.len();
        let r_n = regime.radius(n);
        let stats = space.neighborhood_stats(r_n)?;
        records.push(GrowthRecord {
            n,
            r_n,
            avg_neighborhood: stats.avg_size,
            ratio: stats.ratio_sqrt_n,
        });
    }
    let (analytic_value, analytic_holds) = regime.analytic_condition();
    let ratios: Vec<f64> = records.iter().map(|r| r.ratio).collect();
    let ns: Vec<f64> = records.iter().map(|r| r.n as f64).collect();
    Ok(GrowthReport {
        measured_bounded: ratios.windows(2).all(|w| w[1] <= w[0]),
        ratio_slope: log_log_slope(&ns, &ratios),
        records,
        analytic_value,
        analytic_holds,
    })
}

/// Features on the unit disc and bounded targets, for bound checks.
#[cfg(test)]
pub(crate) fn disc_sample(n: usize, seed: u64, y_bound: f64) -> TrainingData {
    use crate::rng::hashed_unit;
    let rows: Vec<[f64; 2]> = (0..n)
        .map(|i| {
            let r = libm::sqrt(hashed_unit(seed, 1, i as u64));
            let t = 2.0 * core::f64::consts::PI * hashed_unit(seed, 2, i as u64);
            [r * libm::cos(t), r * libm::sin(t)]
        })
        .collect();
    let y = rows
        .iter()
        .enumerate()
        .map(|(i, x)| {
            (0.6 * x[0] - 0.3 * x[1] + 0.5 * (hashed_unit(seed, 3, i as u64) - 0.5))
                .clamp(-y_bound, y_bound)
        })
        .collect();
    TrainingData::new(crate::learners::FeatureMatrix::from_rows(&rows).unwrap(), y).unwrap()
}
