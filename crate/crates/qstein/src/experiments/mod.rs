//! Desk-scale experiments: gradient-variance study, radius curve and toy
//! optimizer comparison.

pub mod logreg;
pub mod optim;
pub mod radius;
pub mod report;
pub mod toy;

use std::fmt;

pub use logreg::{run_logreg_variance, LogRegConfig, LogRegResult};
pub use optim::{Optimizer, OptimizerConfig, Rule, StepInfo};
pub use radius::{run_radius_curve, RadiusConfig, RadiusTable};
pub use report::{run_experiments, ExperimentConfig, ExperimentReport, CSV_SCHEMA_VERSION};
pub use toy::{run_toy_training, Dataset, TrainingConfig, TrainingResult};

/// Invalid experiment configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl ConfigError {
    pub fn new(msg: impl Into<String>) -> Self {
        ConfigError(msg.into())
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}
