//! TOML run configuration for `negsamp experiment`.
//!
//! ```toml
//! master_seed = 42
//! output_dir = "out/mse_sweep"
//!
//! [experiment]
//! kind = "mse_sweep"
//! replications = 200
//!
//! [experiment.design]
//! covariate = "normal"
//! n = 500000
//! ```

use std::path::PathBuf;

use negsamp::experiments::{FloorConfig, MisspecConfig, SweepConfig, Table1Config};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub master_seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub experiment: ExperimentSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExperimentSpec {
    MseSweep(SweepConfig),
    Table1(Table1Config),
    Floor(FloorConfig),
    Misspec(MisspecConfig),
}

impl ExperimentSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            ExperimentSpec::MseSweep(_) => "mse_sweep",
            ExperimentSpec::Table1(_) => "table1",
            ExperimentSpec::Floor(_) => "floor",
            ExperimentSpec::Misspec(_) => "misspec",
        }
    }

    pub fn set_replications(&mut self, r: usize) {
        match self {
            ExperimentSpec::MseSweep(c) => c.replications = r,
            ExperimentSpec::Table1(c) => c.replications = r,
            ExperimentSpec::Floor(c) => c.sweep.replications = r,
            ExperimentSpec::Misspec(c) => c.sweep.replications = r,
        }
    }
}

pub fn parse(text: &str) -> Result<RunConfig, String> {
    toml::from_str(text).map_err(|e| e.to_string())
}
