//! Replicated simulation studies.
//!
//! Every study is a pure function of its configuration and a master seed:
//! replication `r` draws all of its randomness from streams keyed by
//! `derive(derive(seed, REPLICATION), r)`, replications run on the rayon
//! pool and are reduced in index order.

mod design;
mod floor;
mod metrics;
mod misspec;
mod report;
mod sweep;
mod table1;

pub use design::{
    bisect_intercept, calibrate_alpha, generate, generate_population, Covariate, Design, Generator,
    Population, PROBE_ROWS,
};
pub use floor::{run_floor_sensitivity, FloorConfig, FloorReport};
pub use metrics::auc;
pub use misspec::{run_model_misspec, MisspecConfig, MisspecReport};
pub use report::{write_outputs, Manifest, MANIFEST_SCHEMA_VERSION};
pub use sweep::{
    run_cells, run_mse_sweep, CellSpec, CellStats, ExperimentReport, Method, SweepConfig,
    INVALID_FAILURE_SHARE, DEFAULT_RHO_GRID,
};
pub use table1::{run_table1, Table1Config, Table1Model, Table1Report, Table1Row, TABLE1_PAIRS};

use crate::rng;

/// Seed of replication `r` under `master`.
pub fn replication_seed(master: u64, r: usize) -> u64 {
    rng::derive(rng::derive(master, rng::label::REPLICATION), r as u64)
}
