//! Moment functions affine in the target parameter,
//! `m(Z; θ, g) = ψ(Z; g) θ + ν(Z; g)`.
//!
//! Two built-ins with `p = 1`:
//!
//! * the doubly robust ATE moment, `ψ = −1` and
//!   `ν = 1{W=w}(Y − μ_w)/e_w + μ_w − 1{W=w'}(Y − μ_{w'})/e_{w'} − μ_{w'}`;
//! * the Robinson partially linear IV moment, `ψ = −(W − ℓ_W)(V − ℓ_V)` and
//!   `ν = (Y − ℓ_Y)(V − ℓ_V)`.

use serde::{Deserialize, Serialize};

use crate::dgp::Observation;
use crate::error::{bail, Result};

pub const DEFAULT_TRIM: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MomentKind {
    DrAte,
    Pliv,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentModel {
    pub kind: MomentKind,
    /// Propensity trimming bound `η ∈ (0, 0.5)`; unused by the PLIV moment.
    #[serde(default = "default_trim")]
    pub trim: f64,
    /// Treatment levels `(w, w')` contrasted by the ATE moment.
    #[serde(default = "default_levels")]
    pub levels: (f64, f64),
}

fn default_trim() -> f64 {
    DEFAULT_TRIM
}

fn default_levels() -> (f64, f64) {
    (1.0, 0.0)
}

impl MomentModel {
    pub fn dr_ate() -> Self {
        MomentModel {
            kind: MomentKind::DrAte,
            trim: DEFAULT_TRIM,
            levels: (1.0, 0.0),
        }
    }

    pub fn pliv() -> Self {
        MomentModel {
            kind: MomentKind::Pliv,
            trim: DEFAULT_TRIM,
            levels: (1.0, 0.0),
        }
    }

    pub fn with_trim(mut self, trim: f64) -> Self {
        self.trim = trim;
        self
    }

    /// Parameter dimension.
    pub fn dim(&self) -> usize {
        1
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == MomentKind::DrAte && !(self.trim > 0.0 && self.trim < 0.5) {
            bail!(
                Config,
                "trimming bound must lie in (0, 0.5), got {}",
                self.trim
            );
        }
        if self.levels.0 == self.levels.1 {
            bail!(Config, "treatment levels must differ");
        }
        Ok(())
    }

    /// Trims propensities as needed and evaluates `(ψ, ν)`.
    pub fn evaluate(&self, obs: &Observation, g: &NuisanceValues) -> Result<(f64, f64)> {
        match (self.kind, g) {
            (
                MomentKind::DrAte,
                NuisanceValues::DrAte {
                    mu_w,
                    e_w,
                    mu_c,
                    e_c,
                },
            ) => {
                let trimmed = NuisanceValues::DrAte {
                    mu_w: *mu_w,
                    e_w: trim_propensity(*e_w, self.trim),
                    mu_c: *mu_c,
                    e_c: trim_propensity(*e_c, self.trim),
                };
                eval_dr_ate_at(obs, &trimmed, self.levels)
            }
            (MomentKind::Pliv, NuisanceValues::Pliv { .. }) => eval_pliv(obs, g),
            _ => bail!(
                Argument,
                "nuisance values do not match the {:?} moment",
                self.kind
            ),
        }
    }

    /// `m(Z; θ, g)`.
    pub fn value(&self, obs: &Observation, g: &NuisanceValues, theta: f64) -> Result<f64> {
        let (psi, nu) = self.evaluate(obs, g)?;
        Ok(psi * theta + nu)
    }
}

/// Nuisance evaluations at one observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NuisanceValues {
    /// Outcome regression and propensity at the treated level `w` and the
    /// control level `w'`.
    DrAte {
        mu_w: f64,
        e_w: f64,
        mu_c: f64,
        e_c: f64,
    },
    /// `E[Y|X]`, `E[W|X]`, `E[V|X]`.
    Pliv { l_y: f64, l_w: f64, l_v: f64 },
}

/// `clamp(e, η, 1 − η)`.
pub fn trim_propensity(e: f64, eta: f64) -> f64 {
    e.clamp(eta, 1.0 - eta)
}

/// Doubly robust ATE moment for `(w, w') = (1, 0)`. Propensities must
/// already be trimmed.
pub fn eval_dr_ate(obs: &Observation, g: &NuisanceValues) -> Result<(f64, f64)> {
    eval_dr_ate_at(obs, g, (1.0, 0.0))
}

fn eval_dr_ate_at(
    obs: &Observation,
    g: &NuisanceValues,
    (w, wc): (f64, f64),
) -> Result<(f64, f64)> {
    let NuisanceValues::DrAte {
        mu_w,
        e_w,
        mu_c,
        e_c,
    } = *g
    else {
        bail!(
            Argument,
            "DR-ATE moment needs outcome and propensity nuisances"
        );
    };
    for e in [e_w, e_c] {
        if !(e > 0.0 && e < 1.0) {
            bail!(
                Contract,
                "propensity {e} must be trimmed into (0, 1) before evaluation"
            );
        }
    }
    let mut nu = mu_w - mu_c;
    if obs.w == w {
        nu += (obs.y - mu_w) / e_w;
    }
    if obs.w == wc {
        nu -= (obs.y - mu_c) / e_c;
    }
    debug_assert!(
        nu.abs()
            <= dr_ate_nu_bound(obs.y.abs().max(mu_w.abs()).max(mu_c.abs()), e_w.min(e_c))
                * (1.0 + 1e-12)
    );
    Ok((-1.0, nu))
}

/// Bound on `|ν|` for the DR-ATE moment when `|Y|, |μ| ≤ b` and trimmed
/// propensities are at least `η`: one residual term of size `2b/η` plus
/// `|μ_w − μ_{w'}| ≤ 2b`.
pub fn dr_ate_nu_bound(b: f64, eta: f64) -> f64 {
    2.0 * b / eta + 2.0 * b
}

/// Robinson partially linear IV moment.
pub fn eval_pliv(obs: &Observation, g: &NuisanceValues) -> Result<(f64, f64)> {
    let NuisanceValues::Pliv { l_y, l_w, l_v } = *g else {
        bail!(Argument, "PLIV moment needs (l_Y, l_W, l_V) nuisances");
    };
    let Some(v) = obs.v else {
        bail!(Argument, "PLIV moment needs an instrument");
    };
    let rv = v - l_v;
    Ok((-(obs.w - l_w) * rv, (obs.y - l_y) * rv))
}
