//! Experiment configuration, stored as TOML.
//!
//! Every field except `experiment`, `n_grid` and `reps` has a default, so a
//! minimal file is
//!
//! ```toml
//! experiment = "table1"
//! n_grid = [500]
//! reps = 100
//! ```
//!
//! See `presets/*.toml` for fully spelled-out files.

use std::path::{Path, PathBuf};

use netdml_core::dgp::{FeatureMap, InterferenceDgpConfig};
use netdml_core::estimator::{EstimatorConfig, NuisanceSpec, PropensityFeatures};
use netdml_core::learners::{ForestConfig, LearnerSpec, Resampling, SubsampleRule};
use netdml_core::moments::{MomentKind, MomentModel, DEFAULT_TRIM};
use netdml_core::stability::StabilityConfig;
use serde::{Deserialize, Serialize};

use crate::error::{io_at, HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    /// Bias and std of the estimator for every method and sample size.
    Table1,
    /// Mean cross-fitting training-set sizes.
    Table2,
    /// Neighborhood-stability scaling of the forest learners.
    Stability,
    /// Same computation as `table1` with user-chosen settings.
    Custom,
}

/// Resampling scheme of the forests crossed with the fitting mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    BootstrapFull,
    BootstrapCrossfit,
    SubsampleFull,
    SubsampleCrossfit,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::BootstrapFull,
        Method::BootstrapCrossfit,
        Method::SubsampleFull,
        Method::SubsampleCrossfit,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::BootstrapFull => "bootstrap-full",
            Method::BootstrapCrossfit => "bootstrap-crossfit",
            Method::SubsampleFull => "subsample-full",
            Method::SubsampleCrossfit => "subsample-crossfit",
        }
    }

    pub fn from_label(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.label() == s)
    }

    pub fn crossfit(self) -> bool {
        matches!(self, Method::BootstrapCrossfit | Method::SubsampleCrossfit)
    }

    pub fn subsampled(self) -> bool {
        matches!(self, Method::SubsampleFull | Method::SubsampleCrossfit)
    }
}

/// Subsample size `m = min(⌈factor · ñ^exponent⌉, ñ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsampleSection {
    pub factor: f64,
    pub exponent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnerSection {
    pub trees: usize,
    pub min_leaf: usize,
    /// `None` grows outcome trees until leaves reach `min_leaf`.
    pub outcome_max_depth: Option<usize>,
    pub propensity_max_depth: usize,
    pub propensity_features: PropensityFeatures,
    /// Required by the subsampling methods; defaults to `10 ñ^{1/3}` when
    /// absent.
    pub subsample: Option<SubsampleSection>,
}

impl Default for LearnerSection {
    fn default() -> Self {
        LearnerSection {
            trees: 100,
            min_leaf: 5,
            outcome_max_depth: None,
            propensity_max_depth: 2,
            propensity_features: PropensityFeatures::XC,
            subsample: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MomentSection {
    pub kind: MomentKind,
    pub trim: f64,
}

impl Default for MomentSection {
    fn default() -> Self {
        MomentSection {
            kind: MomentKind::DrAte,
            trim: DEFAULT_TRIM,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorSection {
    /// `d*`: training units sit at distance at least this from the fold.
    pub exclusion_distance: f64,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        EstimatorSection {
            exclusion_distance: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TruthSection {
    /// Networks averaged by the `θ_0` oracle at each `(n, Δ)`.
    pub networks: usize,
}

impl Default for TruthSection {
    fn default() -> Self {
        TruthSection { networks: 10_000 }
    }
}

/// One `(Δ, K)` column group of the training-size table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FoldCell {
    pub delta: f64,
    pub folds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Table2Section {
    pub cells: Vec<FoldCell>,
}

impl Default for Table2Section {
    fn default() -> Self {
        Table2Section {
            cells: vec![
                FoldCell {
                    delta: 3.0,
                    folds: 5,
                },
                FoldCell {
                    delta: 8.0,
                    folds: 5,
                },
                FoldCell {
                    delta: 5.0,
                    folds: 2,
                },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilitySection {
    pub r_n: f64,
    /// Diagonal pairs `(i, i)` probed per size, ignored with `all_diagonal`.
    pub diagonal_pairs: usize,
    /// Probe `(i, i)` for every unit.
    pub all_diagonal: bool,
    pub off_diagonal_pairs: usize,
    /// Minimum leaf size of the single full-sample tree used as a negative
    /// control.
    pub control_min_leaf: usize,
}

impl Default for StabilitySection {
    fn default() -> Self {
        StabilitySection {
            r_n: 3.0,
            diagonal_pairs: 5,
            all_diagonal: false,
            off_diagonal_pairs: 5,
            control_min_leaf: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub experiment: Experiment,
    pub n_grid: Vec<usize>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_folds")]
    pub folds: usize,
    /// Replications; for the stability experiment, `(Z, Z̃, Z*)` draws per
    /// sample size.
    pub reps: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub parallelism: usize,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub feature_map: FeatureMap,
    #[serde(default)]
    pub learner: LearnerSection,
    #[serde(default)]
    pub moment: MomentSection,
    #[serde(default)]
    pub estimator: EstimatorSection,
    #[serde(default)]
    pub truth: TruthSection,
    #[serde(default)]
    pub table2: Table2Section,
    #[serde(default)]
    pub stability: StabilitySection,
}

fn default_delta() -> f64 {
    3.0
}

fn default_folds() -> usize {
    5
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

impl SimConfig {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<SimConfig> {
        toml::from_str(text).map_err(|e| HarnessError::Syntax {
            path: origin.to_string(),
            message: e.to_string(),
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }

    pub fn moment_model(&self) -> MomentModel {
        let m = match self.moment.kind {
            MomentKind::DrAte => MomentModel::dr_ate(),
            MomentKind::Pliv => MomentModel::pliv(),
        };
        m.with_trim(self.moment.trim)
    }

    pub fn subsample_rule(&self) -> SubsampleRule {
        match self.learner.subsample {
            Some(s) => SubsampleRule {
                factor: s.factor,
                exponent: s.exponent,
            },
            None => SubsampleRule::TEN_CUBE_ROOT,
        }
    }

    /// Outcome and propensity forests for a resampling scheme.
    pub fn forests(&self, resampling: Resampling) -> (ForestConfig, ForestConfig) {
        let l = &self.learner;
        let mut outcome =
            ForestConfig::regression(l.trees, l.min_leaf, 0).with_resampling(resampling);
        outcome.max_depth = l.outcome_max_depth;
        let mut propensity =
            ForestConfig::propensity(l.trees, l.min_leaf, 0).with_resampling(resampling);
        propensity.max_depth = Some(l.propensity_max_depth);
        (outcome, propensity)
    }

    pub fn nuisance(&self, method: Method) -> NuisanceSpec {
        let resampling = if method.subsampled() {
            Resampling::Subsample(self.subsample_rule())
        } else {
            Resampling::Bootstrap
        };
        let (outcome, propensity) = self.forests(resampling);
        NuisanceSpec::Learned {
            outcome: LearnerSpec::Forest(outcome),
            propensity: LearnerSpec::Forest(propensity),
            propensity_features: self.learner.propensity_features,
        }
    }

    pub fn estimator(&self, method: Method, seed: u64) -> EstimatorConfig {
        let nuisance = self.nuisance(method);
        if method.crossfit() {
            EstimatorConfig::crossfit(
                self.moment_model(),
                nuisance,
                self.folds,
                self.estimator.exclusion_distance,
                seed,
            )
        } else {
            EstimatorConfig::full_sample(self.moment_model(), nuisance, seed)
        }
    }

    pub fn dgp(&self, n: usize, delta: f64, seed: u64) -> InterferenceDgpConfig {
        let mut c = InterferenceDgpConfig::new(n, delta, seed);
        c.feature_map = self.feature_map;
        c
    }

    /// Stability settings shared by every probed learner; the nuisance is
    /// filled in per learner.
    pub fn stability_config(&self, nuisance: NuisanceSpec) -> StabilityConfig {
        let mut c = StabilityConfig::new(self.moment_model(), nuisance, self.master_seed);
        c.r_n = self.stability.r_n;
        c.diagonal_pairs = (!self.stability.all_diagonal).then_some(self.stability.diagonal_pairs);
        c.off_diagonal_pairs = self.stability.off_diagonal_pairs;
        c.mc_reps = self.reps;
        c
    }

    /// Every violation of the configuration, in a stable order. Empty when
    /// the configuration is valid.
    pub fn violations(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let mut check = |r: netdml_core::Result<()>| {
            if let Err(e) = r {
                let msg = e.to_string();
                if !errs.contains(&msg) {
                    errs.push(msg);
                }
            }
        };
        if self.reps == 0 {
            check(Err(netdml_core::Error::Config("reps must be >= 1".into())));
        }
        if self.n_grid.is_empty() {
            check(Err(netdml_core::Error::Config(
                "n_grid must not be empty".into(),
            )));
        }
        if self.moment.kind != MomentKind::DrAte {
            check(Err(netdml_core::Error::Config(
                "the interference design has no instrument; moment.kind must be \"dr-ate\"".into(),
            )));
        }
        check(self.moment_model().validate());
        match self.experiment {
            Experiment::Table1 | Experiment::Custom => {
                if self.methods.is_empty() {
                    check(Err(netdml_core::Error::Config(
                        "methods must not be empty".into(),
                    )));
                }
                for &n in &self.n_grid {
                    check(self.dgp(n, self.delta, 0).validate());
                    if self.methods.iter().any(|m| m.crossfit()) && self.folds > n {
                        check(Err(netdml_core::Error::Config(format!(
                            "{} folds for n = {n}",
                            self.folds
                        ))));
                    }
                }
                if self.methods.iter().any(|m| m.crossfit()) && self.folds < 2 {
                    check(Err(netdml_core::Error::Config(format!(
                        "folds must be >= 2 for cross-fitting, got {}",
                        self.folds
                    ))));
                }
                for &m in &self.methods {
                    check(self.estimator(m, 0).validate());
                    if let NuisanceSpec::Learned {
                        outcome,
                        propensity,
                        ..
                    } = self.nuisance(m)
                    {
                        for spec in [outcome, propensity] {
                            if let LearnerSpec::Forest(f) = spec {
                                check(f.validate());
                            }
                        }
                    }
                }
                if self.learner.subsample.is_some() && !self.methods.iter().any(|m| m.subsampled())
                {
                    check(Err(netdml_core::Error::Config(
                        "learner.subsample is set but no method uses subsampling".into(),
                    )));
                }
                if self.truth.networks == 0 {
                    check(Err(netdml_core::Error::Config(
                        "truth.networks must be >= 1".into(),
                    )));
                }
            }
            Experiment::Table2 => {
                if self.table2.cells.is_empty() {
                    check(Err(netdml_core::Error::Config(
                        "table2.cells must not be empty".into(),
                    )));
                }
                for cell in &self.table2.cells {
                    if cell.folds < 2 {
                        check(Err(netdml_core::Error::Config(format!(
                            "folds must be >= 2 for cross-fitting, got {}",
                            cell.folds
                        ))));
                    }
                    for &n in &self.n_grid {
                        check(self.dgp(n, cell.delta, 0).validate());
                        if cell.folds > n {
                            check(Err(netdml_core::Error::Config(format!(
                                "{} folds for n = {n}",
                                cell.folds
                            ))));
                        }
                    }
                }
                if !(self.estimator.exclusion_distance >= 0.0) {
                    check(Err(netdml_core::Error::Config(
                        "exclusion distance must be >= 0".into(),
                    )));
                }
            }
            Experiment::Stability => {
                if self.n_grid.len() < 2 {
                    check(Err(netdml_core::Error::Config(
                        "a stability slope needs at least two sample sizes".into(),
                    )));
                }
                for &n in &self.n_grid {
                    check(self.dgp(n, self.delta, 0).validate());
                }
                let (outcome, propensity) =
                    self.forests(Resampling::Subsample(self.subsample_rule()));
                check(outcome.validate());
                check(propensity.validate());
                check(
                    self.stability_config(self.nuisance(Method::SubsampleFull))
                        .validate(),
                );
                if self.stability.control_min_leaf == 0 {
                    check(Err(netdml_core::Error::Config(
                        "stability.control_min_leaf must be >= 1".into(),
                    )));
                }
            }
        }
        errs
    }

    pub fn validate(&self) -> Result<()> {
        let errs = self.violations();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(HarnessError::Invalid(errs))
        }
    }
}

/// Reads, parses and validates a configuration file, reporting every
/// violation at once.
pub fn validate_config(path: &Path) -> Result<SimConfig> {
    let text = std::fs::read_to_string(path).map_err(io_at(path))?;
    let config = SimConfig::from_toml_str(&text, &path.display().to_string())?;
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> SimConfig {
        SimConfig::from_toml_str(
            "experiment = \"table1\"\nn_grid = [500]\nreps = 10\n",
            "inline",
        )
        .unwrap()
    }

    #[test]
    fn defaults_fill_in() {
        let c = minimal();
        assert_eq!(c.delta, 3.0);
        assert_eq!(c.folds, 5);
        assert_eq!(c.methods, Method::ALL.to_vec());
        assert_eq!(c.learner.trees, 100);
        assert_eq!(c.truth.networks, 10_000);
        assert!(c.violations().is_empty());
    }

    #[test]
    fn one_fold_with_crossfit_is_rejected() {
        let mut c = minimal();
        c.folds = 1;
        let errs = c.violations();
        assert!(
            errs.iter().any(|e| e.contains("folds must be >= 2")),
            "{errs:?}"
        );
        c.methods = vec![Method::BootstrapFull, Method::SubsampleFull];
        assert!(c.violations().is_empty());
    }

    #[test]
    fn dense_link_probability_is_rejected_by_the_generator() {
        let mut c = minimal();
        c.delta = 600.0;
        let errs = c.violations();
        assert!(errs.iter().any(|e| e.contains("delta/n")), "{errs:?}");
    }

    #[test]
    fn all_violations_are_reported() {
        let mut c = minimal();
        c.reps = 0;
        c.folds = 1;
        c.learner.trees = 0;
        c.moment.trim = 0.7;
        let errs = c.violations();
        assert_eq!(errs.len(), 4, "{errs:?}");
    }

    #[test]
    fn subsample_rule_needs_a_subsampling_method() {
        let mut c = minimal();
        c.learner.subsample = Some(SubsampleSection {
            factor: 10.0,
            exponent: 0.5,
        });
        assert!(c.violations().is_empty());
        c.methods = vec![Method::BootstrapFull];
        assert!(c.violations()[0].contains("no method uses subsampling"));
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let err = SimConfig::from_toml_str(
            "experiment = \"table1\"\nn_grid = [500\nreps = 1\n",
            "x.toml",
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("x.toml") && msg.contains("line"), "{msg}");
        let err = SimConfig::from_toml_str(
            "experiment = \"table1\"\nn_grid = [5]\nreps = 1\nrepz = 2\n",
            "y.toml",
        )
        .unwrap_err();
        assert!(err.to_string().contains("repz"));
    }

    #[test]
    fn toml_round_trip() {
        let mut c = minimal();
        c.learner.subsample = Some(SubsampleSection {
            factor: 10.0,
            exponent: 1.0 / 3.0,
        });
        c.stability.all_diagonal = true;
        let back = SimConfig::from_toml_str(&c.to_toml_string(), "rt").unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn validate_config_reads_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "experiment = \"table2\"\nn_grid = [100]\nreps = 3\n[table2]\ncells = [{ delta = 3.0, folds = 1 }]\n")
            .unwrap();
        match validate_config(&p) {
            Err(HarnessError::Invalid(errs)) => assert!(errs[0].contains("folds must be >= 2")),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            validate_config(&dir.path().join("missing.toml")),
            Err(HarnessError::Io { .. })
        ));
    }
}
