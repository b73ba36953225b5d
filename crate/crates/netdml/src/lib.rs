//! Monte Carlo harness, configuration, file formats and executors for
//! [`netdml_core`].
//!
//! [`harness::run_experiment`] runs one of three experiments described by a
//! [`config::SimConfig`]: the bias/std comparison of full-sample and
//! cross-fitted estimators, the cross-fitting training-set sizes, and the
//! neighborhood-stability scaling of forest learners. [`emit`] writes the
//! results as CSV, JSON and text tables.

pub mod config;
pub mod emit;
pub mod error;
pub mod exec;
pub mod harness;
pub mod io;
pub mod presets;

pub use config::{validate_config, SimConfig};
pub use error::{HarnessError, Result};
pub use exec::RayonExecutor;
pub use harness::{run_experiment, SimResult};
