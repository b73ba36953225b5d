//! Named configurations. Each ships as a TOML file under `presets/`, and a
//! test checks that the file parses to the configuration built here.

use std::path::PathBuf;

use netdml_core::dgp::FeatureMap;
use serde::{Deserialize, Serialize};

use crate::config::{
    EstimatorSection, Experiment, LearnerSection, Method, MomentSection, SimConfig,
    StabilitySection, SubsampleSection, Table2Section, TruthSection,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Bias/std table at full scale: 5000 replications, 500 trees.
    Table1,
    /// Bias/std table with 1000 replications and 100 trees.
    Table1Desk,
    Table2,
    Stability,
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::Table1,
        Preset::Table1Desk,
        Preset::Table2,
        Preset::Stability,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Table1 => "table1",
            Preset::Table1Desk => "table1-desk",
            Preset::Table2 => "table2",
            Preset::Stability => "stability",
        }
    }

    pub fn from_name(name: &str) -> Option<Preset> {
        Preset::ALL.into_iter().find(|p| p.name() == name)
    }

    pub fn toml(self) -> &'static str {
        match self {
            Preset::Table1 => include_str!("../presets/table1.toml"),
            Preset::Table1Desk => include_str!("../presets/table1-desk.toml"),
            Preset::Table2 => include_str!("../presets/table2.toml"),
            Preset::Stability => include_str!("../presets/stability.toml"),
        }
    }

    pub fn config(self) -> SimConfig {
        let subsampled = LearnerSection {
            subsample: Some(SubsampleSection {
                factor: 10.0,
                exponent: 1.0 / 3.0,
            }),
            ..LearnerSection::default()
        };
        let base = SimConfig {
            experiment: Experiment::Table1,
            n_grid: vec![500, 1000, 2000],
            delta: 3.0,
            folds: 5,
            reps: 5000,
            master_seed: 1,
            output_dir: PathBuf::from("results/table1"),
            parallelism: 0,
            methods: Method::ALL.to_vec(),
            feature_map: FeatureMap::Literal,
            learner: LearnerSection {
                trees: 500,
                ..subsampled.clone()
            },
            moment: MomentSection::default(),
            estimator: EstimatorSection::default(),
            truth: TruthSection::default(),
            table2: Table2Section::default(),
            stability: StabilitySection::default(),
        };
        match self {
            Preset::Table1 => base,
            Preset::Table1Desk => SimConfig {
                reps: 1000,
                output_dir: PathBuf::from("results/table1-desk"),
                learner: subsampled,
                ..base
            },
            Preset::Table2 => SimConfig {
                experiment: Experiment::Table2,
                reps: 500,
                master_seed: 2,
                output_dir: PathBuf::from("results/table2"),
                learner: LearnerSection::default(),
                ..base
            },
            Preset::Stability => SimConfig {
                experiment: Experiment::Stability,
                n_grid: vec![250, 500, 1000],
                reps: 200,
                master_seed: 3,
                output_dir: PathBuf::from("results/stability"),
                learner: subsampled,
                ..base
            },
        }
    }
}
