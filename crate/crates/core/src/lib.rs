//! Debiased machine learning without cross-fitting for dependent data.
//!
//! Observations live in a semi-metric space (a network with shortest-path
//! distance, or points in Euclidean space). The crate provides
//!
//! * [`metric_space`]: distances, `r`-neighborhoods and neighborhood growth
//!   statistics;
//! * [`dgp`]: the Erdős–Rényi network-interference design and a partially
//!   linear IV design;
//! * [`learners`]: bagged/subsampled CART forests, closed-form (kernel) ridge
//!   and projected SGD ridge, all retrainable on perturbed data with coupled
//!   randomness;
//! * [`moments`]: the doubly robust ATE moment and the Robinson partially
//!   linear IV moment;
//! * [`estimator`]: the two-step method-of-moments estimator, full-sample or
//!   with neighborhood-excluded cross-fitting;
//! * [`stability`]: perturb-retrain measurement of neighborhood stability and
//!   checkers for the regularized-M, SGD and bagging stability bounds.
//!
//! The crate is `no_std` and only needs `alloc`. Parallelism is injected
//! through the [`exec::Executor`] trait.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod dgp;
pub mod error;
pub mod estimator;
pub mod exec;
pub mod learners;
pub mod linalg;
pub mod metric_space;
pub mod moments;
pub mod rng;
pub mod stability;

pub use error::{Error, Result};
pub use exec::{Executor, Sequential};
pub use metric_space::{MetricSpace, NeighborhoodStats};
