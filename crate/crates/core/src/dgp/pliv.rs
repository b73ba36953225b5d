//! Partially linear IV design with i.i.d. units.
//!
//! ```text
//! X ~ U[0,1],  ζ, u, η ~ U[-1,1] independent
//! V = X² + ζ                       (or V = W when the instrument is the treatment)
//! W = cos(2πX)/2 + π_V ζ + u
//! Y = θ_0 W + sin(2πX) + κ u + η
//! ```
//!
//! `κ` controls endogeneity. The nuisances are `ℓ_V(x) = x²`,
//! `ℓ_W(x) = cos(2πx)/2` and `ℓ_Y(x) = θ_0 ℓ_W(x) + sin(2πx)`.

use alloc::sync::Arc;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, GroundTruth, Observation};
use crate::error::{bail, Result};
use crate::metric_space::{Graph, MetricSpace};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlivParams {
    pub theta0: f64,
    /// Coefficient of the instrument shock in `W`.
    pub instrument_strength: f64,
    /// Loading of the treatment shock `u` on the outcome noise.
    pub endogeneity: f64,
    /// Use `V = W` (only valid without endogeneity).
    pub instrument_is_treatment: bool,
}

impl Default for PlivParams {
    fn default() -> Self {
        PlivParams {
            theta0: 0.5,
            instrument_strength: 1.0,
            endogeneity: 0.5,
            instrument_is_treatment: false,
        }
    }
}

impl PlivParams {
    /// `θ_0 = 0`, `V = W`, exogenous treatment.
    pub fn exogenous_null() -> Self {
        PlivParams {
            theta0: 0.0,
            instrument_strength: 1.0,
            endogeneity: 0.0,
            instrument_is_treatment: true,
        }
    }

    pub fn l_w(&self, x: f64) -> f64 {
        0.5 * libm::cos(2.0 * PI * x)
    }

    pub fn h0(&self, x: f64) -> f64 {
        libm::sin(2.0 * PI * x)
    }

    pub fn l_y(&self, x: f64) -> f64 {
        self.theta0 * self.l_w(x) + self.h0(x)
    }

    pub fn l_v(&self, x: f64) -> f64 {
        if self.instrument_is_treatment {
            self.l_w(x)
        } else {
            x * x
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlivTruth {
    pub params: PlivParams,
    pub l_y: Vec<f64>,
    pub l_w: Vec<f64>,
    pub l_v: Vec<f64>,
}

/// Draws `n` i.i.d. units. The space is an edgeless graph, so every
/// neighborhood is a singleton.
pub fn gen_pliv_data(n: usize, seed: u64, params: &PlivParams) -> Result<Dataset> {
    if n == 0 {
        bail!(Argument, "PLIV design needs n >= 1");
    }
    if params.instrument_is_treatment && params.endogeneity != 0.0 {
        bail!(
            Config,
            "V = W is only a valid instrument without endogeneity"
        );
    }
    let mut observations = Vec::with_capacity(n);
    let mut truth = PlivTruth {
        params: *params,
        l_y: Vec::with_capacity(n),
        l_w: Vec::with_capacity(n),
        l_v: Vec::with_capacity(n),
    };
    for i in 0..n {
        let mut s = rng::unit_stream(seed, i as u64);
        let x: f64 = s.gen();
        let zeta = 2.0 * s.gen::<f64>() - 1.0;
        let u = 2.0 * s.gen::<f64>() - 1.0;
        let eta = 2.0 * s.gen::<f64>() - 1.0;
        let w = params.l_w(x) + params.instrument_strength * zeta + u;
        let y = params.theta0 * w + params.h0(x) + params.endogeneity * u + eta;
        let v = if params.instrument_is_treatment {
            w
        } else {
            x * x + zeta
        };
        observations.push(Observation {
            y,
            w,
            x,
            c: 0.0,
            v: Some(v),
        });
        truth.l_y.push(params.l_y(x));
        truth.l_w.push(params.l_w(x));
        truth.l_v.push(params.l_v(x));
    }
    let space = Arc::new(MetricSpace::Graph(Graph::empty(n)));
    let mut data = Dataset::new(observations, space)?;
    data.truth = Some(GroundTruth::Pliv(truth));
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moment_identity_holds_in_large_samples() {
        // E[(Y - l_Y)(V - l_V)] / E[(W - l_W)(V - l_V)] = θ_0
        let p = PlivParams::default();
        let d = gen_pliv_data(100_000, 17, &p).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        for o in &d.observations {
            let rv = o.v.unwrap() - p.l_v(o.x);
            num += (o.y - p.l_y(o.x)) * rv;
            den += (o.w - p.l_w(o.x)) * rv;
        }
        let est = num / den;
        assert!((est - p.theta0).abs() < 0.03, "ratio {est}");
    }

    #[test]
    fn instrument_equal_to_treatment_requires_exogeneity() {
        let mut p = PlivParams::exogenous_null();
        assert!(gen_pliv_data(10, 1, &p).is_ok());
        p.endogeneity = 0.3;
        assert!(gen_pliv_data(10, 1, &p).is_err());
    }

    #[test]
    fn edgeless_space() {
        let d = gen_pliv_data(20, 1, &PlivParams::default()).unwrap();
        assert_eq!(d.space.neighborhood(3, 5.0).unwrap(), alloc::vec![3]);
    }
}
