//! Ridge regression fit by one projected SGD pass.
//!
//! Loss `ψ(θ; z) = ½ (y − x'θ)² + (λ/2) ‖θ‖²`, step `α_t = t^{−a} / β`,
//! iterates projected onto `‖θ‖ ≤ R_θ`, `θ_0 = 0`. The update
//! `θ_t = Π(θ_{t−1} − α_t ∇ψ(θ_{t−1}; z_t))` visits observations in index
//! order and the returned estimate is `θ_{n−1}`, so the last observation is
//! not used.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{LearnerKind, Model, Predictor, TrainingData};
use crate::error::{bail, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    /// Learning-rate exponent in `(0, 1)`.
    pub a: f64,
    /// Smoothness constant.
    pub beta: f64,
    /// Lipschitz constant of the loss on the constraint set.
    pub lip: f64,
    /// Strong-convexity constant.
    pub gamma: f64,
    pub lambda: f64,
    pub theta_radius: f64,
    /// Bound on `‖x‖` and `|y|`.
    pub feature_radius: f64,
}

impl SgdConfig {
    /// Ridge constants `γ = λ`, `L = R_z²(1 + R_θ) + λR_θ`, `β = R_z² + λ`.
    pub fn ridge(a: f64, lambda: f64, theta_radius: f64, feature_radius: f64) -> Self {
        let rz2 = feature_radius * feature_radius;
        SgdConfig {
            a,
            beta: rz2 + lambda,
            lip: rz2 * (1.0 + theta_radius) + lambda * theta_radius,
            gamma: lambda,
            lambda,
            theta_radius,
            feature_radius,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a < 1.0) {
            bail!(
                Config,
                "learning-rate exponent must lie in (0, 1), got {}",
                self.a
            );
        }
        if !(self.beta > 0.0) || !(self.theta_radius > 0.0) || !(self.lambda >= 0.0) {
            bail!(
                Config,
                "SGD needs beta > 0, theta_radius > 0 and lambda >= 0"
            );
        }
        Ok(())
    }

    /// Step size `α_t = t^{−a} / β`.
    pub fn step(&self, t: usize) -> f64 {
        libm::pow(t as f64, -self.a) / self.beta
    }

    /// `(γ/β, a(1−a)/(1−2^{−(1−a)}) · log n / n^{1−a})`; the stability bound
    /// is guaranteed when the first is at least the second.
    pub fn side_condition(&self, n: usize) -> (f64, f64) {
        let a = self.a;
        let nf = n as f64;
        let rhs = a * (1.0 - a) / (1.0 - libm::pow(2.0, -(1.0 - a))) * libm::log(nf)
            / libm::pow(nf, 1.0 - a);
        (self.gamma / self.beta, rhs)
    }

    pub fn side_condition_holds(&self, n: usize) -> bool {
        let (lhs, rhs) = self.side_condition(n);
        lhs >= rhs
    }

    /// `(2L/β) n^{−a} k`.
    pub fn replacement_bound(&self, n: usize, k: usize) -> f64 {
        2.0 * self.lip / self.beta * libm::pow(n as f64, -self.a) * k as f64
    }
}

fn check_domain(data: &TrainingData, config: &SgdConfig) -> Result<()> {
    config.validate()?;
    if data.is_empty() {
        bail!(Data, "cannot run SGD on an empty training set");
    }
    let r = config.feature_radius * (1.0 + 1e-12);
    for i in 0..data.len() {
        if linalg::norm(data.features.row(i)) > r || data.targets[i].abs() > r {
            bail!(
                Data,
                "observation {i} lies outside the feature radius {}",
                config.feature_radius
            );
        }
    }
    Ok(())
}

fn project(theta: &mut [f64], radius: f64) {
    let nrm = linalg::norm(theta);
    if nrm > radius {
        let s = radius / nrm;
        theta.iter_mut().for_each(|t| *t *= s);
    }
}

/// All iterates `θ_0, …, θ_{n−1}`.
pub fn sgd_ridge_path(data: &TrainingData, config: &SgdConfig) -> Result<Vec<Vec<f64>>> {
    check_domain(data, config)?;
    let d = data.features.n_cols();
    let mut theta = vec![0.0; d];
    let mut path = Vec::with_capacity(data.len());
    path.push(theta.clone());
    for t in 1..data.len() {
        let x = data.features.row(t - 1);
        let resid = data.targets[t - 1] - linalg::dot(x, &theta);
        let step = config.step(t);
        for p in 0..d {
            theta[p] -= step * (-x[p] * resid + config.lambda * theta[p]);
        }
        project(&mut theta, config.theta_radius);
        path.push(theta.clone());
    }
    Ok(path)
}

pub fn fit_sgd_ridge(data: &TrainingData, config: &SgdConfig) -> Result<Predictor> {
    check_domain(data, config)?;
    let d = data.features.n_cols();
    let mut theta = vec![0.0; d];
    for t in 1..data.len() {
        let x = data.features.row(t - 1);
        let resid = data.targets[t - 1] - linalg::dot(x, &theta);
        let step = config.step(t);
        for p in 0..d {
            theta[p] -= step * (-x[p] * resid + config.lambda * theta[p]);
        }
        project(&mut theta, config.theta_radius);
    }
    Ok(Predictor {
        model: Model::Linear(theta),
        kind: LearnerKind::SgdRidge,
        n_train: data.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{
        fit_ridge_closed, retrain_on_perturbed, FeatureMatrix, LearnerSpec, Replacement,
        RidgeKernelConfig,
    };
    use crate::rng;
    use proptest::prelude::*;

    /// Features in the disc of radius 1/√2 scaled into the unit ball,
    /// targets `y = clamp(x'θ* + noise)`.
    fn sample(n: usize, seed: u64, theta: [f64; 2], noise: f64) -> TrainingData {
        let mut rows = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let a = rng::hashed_unit(seed, 1, i as u64) - 0.5;
            let b = rng::hashed_unit(seed, 2, i as u64) - 0.5;
            let e = noise * (rng::hashed_unit(seed, 3, i as u64) - 0.5);
            rows.push([a, b]);
            y.push((a * theta[0] + b * theta[1] + e).clamp(-1.0, 1.0));
        }
        TrainingData::new(FeatureMatrix::from_rows(&rows).unwrap(), y).unwrap()
    }

    #[test]
    fn exponent_outside_unit_interval_is_config_error() {
        let d = sample(10, 1, [0.5, 0.5], 0.0);
        for a in [0.0, 1.0, -0.2, 1.5] {
            let c = SgdConfig::ridge(a, 1.0, 1.0, 1.0);
            assert!(matches!(
                fit_sgd_ridge(&d, &c),
                Err(crate::Error::Config(_))
            ));
        }
    }

    #[test]
    fn zero_targets_stay_at_zero() {
        let mut d = sample(200, 2, [0.0, 0.0], 0.0);
        d.targets.iter_mut().for_each(|t| *t = 0.0);
        let p = fit_sgd_ridge(&d, &SgdConfig::ridge(0.6, 0.1, 1.0, 1.0)).unwrap();
        assert_eq!(p.coefficients().unwrap(), &[0.0, 0.0]);
    }

    #[test]
    fn constants_follow_ridge_example() {
        let c = SgdConfig::ridge(0.7, 2.0, 3.0, 0.5);
        assert_eq!(c.gamma, 2.0);
        assert_eq!(c.beta, 0.25 + 2.0);
        assert_eq!(c.lip, 0.25 * 4.0 + 6.0);
    }

    #[test]
    fn side_condition_value() {
        // n = 1000, a = 0.7: a(1-a)/(1-2^{-0.3}) * ln(1000)/1000^{0.3}
        let c = SgdConfig::ridge(0.7, 40.0, 1.0, 1.0);
        let (lhs, rhs) = c.side_condition(1000);
        let expect = 0.21 / (1.0 - 2f64.powf(-0.3)) * 1000f64.ln() / 1000f64.powf(0.3);
        assert!((rhs - expect).abs() < 1e-12);
        assert!((rhs - 0.972).abs() < 0.01);
        assert!((lhs - 40.0 / 41.0).abs() < 1e-15);
        assert!(c.side_condition_holds(1000));
        assert!(!SgdConfig::ridge(0.7, 1.0, 1.0, 1.0).side_condition_holds(1000));
    }

    #[test]
    fn approaches_closed_form_ridge() {
        // large n and moderate λ: the averaged objective is strongly convex
        // and SGD converges to the ridge solution of the same objective
        let n = 200_000;
        let lambda = 0.05;
        let d = sample(n, 3, [0.8, -0.6], 0.0);
        let sgd = fit_sgd_ridge(&d, &SgdConfig::ridge(0.6, lambda, 2.0, 1.0)).unwrap();
        let closed = fit_ridge_closed(&d, &RidgeKernelConfig::linear(lambda)).unwrap();
        let a = sgd.coefficients().unwrap();
        let b = closed.coefficients().unwrap();
        let dist = libm::sqrt((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2));
        assert!(dist < 0.02, "{a:?} vs {b:?}");
    }

    #[test]
    fn path_matches_fit_and_stays_in_ball() {
        let d = sample(300, 4, [3.0, 3.0], 0.3);
        let c = SgdConfig::ridge(0.55, 0.01, 0.5, 1.0);
        let path = sgd_ridge_path(&d, &c).unwrap();
        assert_eq!(path.len(), 300);
        assert!(path.iter().all(|t| linalg::norm(t) <= 0.5 + 1e-12));
        assert_eq!(
            path.last().unwrap().as_slice(),
            fit_sgd_ridge(&d, &c).unwrap().coefficients().unwrap()
        );
    }

    #[test]
    fn rejects_data_outside_radius() {
        let x = FeatureMatrix::from_rows(&[[2.0, 0.0], [0.0, 0.0]]).unwrap();
        let d = TrainingData::new(x, vec![0.0, 0.0]).unwrap();
        assert!(matches!(
            fit_sgd_ridge(&d, &SgdConfig::ridge(0.5, 1.0, 1.0, 1.0)),
            Err(crate::Error::Data(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn replacement_bound_holds(seed in 0u64..10_000, k in 1usize..8, a in 0.55f64..0.9) {
            let n = 1000;
            let c = SgdConfig::ridge(a, 40.0, 1.0, 1.0);
            let d = sample(n, seed, [0.9, -0.4], 0.5);
            let base = fit_sgd_ridge(&d, &c).unwrap();
            let reps: Vec<Replacement> = (0..k).map(|j| {
                let row = (seed as usize * 13 + j * 97) % n;
                let u = rng::hashed_unit(seed, 50, j as u64) - 0.5;
                Replacement { row, features: vec![u, -u], target: (2.0 * u).clamp(-1.0, 1.0) }
            }).collect();
            let mut distinct: Vec<usize> = reps.iter().map(|r| r.row).collect();
            distinct.sort_unstable();
            distinct.dedup();
            let pert = retrain_on_perturbed(&LearnerSpec::SgdRidge(c), &d, &reps).unwrap();
            let ta = base.coefficients().unwrap();
            let tb = pert.coefficients().unwrap();
            let diff = libm::sqrt((ta[0] - tb[0]).powi(2) + (ta[1] - tb[1]).powi(2));
            prop_assert!(diff <= c.replacement_bound(n, distinct.len()), "{diff}");
        }
    }
}
