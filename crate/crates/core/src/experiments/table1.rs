//! Scaling of the full-data MLE variance with the number of positives.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::design::{generate_population, Covariate, Design};
use super::replication_seed;
use super::sweep::INVALID_FAILURE_SHARE;
use crate::error::{Error, Result};
use crate::estimators::{fit_mle, FitSpec};
use crate::model::Theta;
use crate::rng;
use crate::variance::empirical_covariance;

/// `(N, expected N₁)` rows; the last is only run on request.
pub const TABLE1_PAIRS: [(usize, usize); 4] = [
    (1_000, 32),
    (10_000, 64),
    (100_000, 128),
    (1_000_000, 256),
];

fn default_replications() -> usize {
    100
}

fn default_d() -> usize {
    2
}

/// Column of the scaling table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Table1Model {
    /// Standard normal covariates.
    Correct,
    /// Log-normal covariates.
    Misspecified,
}

impl Table1Model {
    pub fn as_str(self) -> &'static str {
        match self {
            Table1Model::Correct => "correct",
            Table1Model::Misspecified => "misspecified",
        }
    }
}

fn default_models() -> Vec<Table1Model> {
    vec![Table1Model::Correct, Table1Model::Misspecified]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Table1Config {
    #[serde(default = "default_models")]
    pub models: Vec<Table1Model>,
    /// Adds the `N = 10⁶` row.
    #[serde(default)]
    pub include_largest: bool,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_d")]
    pub d: usize,
}

impl Default for Table1Config {
    fn default() -> Self {
        Table1Config {
            models: default_models(),
            include_largest: false,
            replications: default_replications(),
            d: default_d(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table1Row {
    pub n: usize,
    pub n1_target: usize,
    pub alpha: f64,
    /// Trace of the empirical covariance of the replicated MLEs.
    pub trace: f64,
    pub n1_trace: f64,
    pub n_trace: f64,
    pub completed: usize,
    pub failures: usize,
    pub valid: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Table1Report {
    pub model: Table1Model,
    pub master_seed: u64,
    pub rows: Vec<Table1Row>,
    pub runtime_secs: f64,
}

impl Table1Report {
    pub const CSV_HEADER: &'static str =
        "model,n,n1_target,alpha,trace,n1_trace,n_trace,completed,failures,valid";

    pub fn csv_rows(&self) -> Vec<String> {
        let model = self.model.as_str();
        self.rows
            .iter()
            .map(|r| {
                format!(
                    "{model},{},{},{},{},{},{},{},{},{}",
                    r.n, r.n1_target, r.alpha, r.trace, r.n1_trace, r.n_trace, r.completed,
                    r.failures, r.valid
                )
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for row in self.csv_rows() {
            s.push_str(&row);
            s.push('\n');
        }
        s
    }
}

/// One column of the scaling table. `cfg.models` is not consulted.
pub fn run_table1(cfg: &Table1Config, model: Table1Model, seed: u64) -> Result<Table1Report> {
    if cfg.replications < 2 {
        return Err(Error::Config("table1 needs at least 2 replications".into()));
    }
    let start = Instant::now();
    let covariate = match model {
        Table1Model::Correct => Covariate::Normal,
        Table1Model::Misspecified => Covariate::LogNormal,
    };
    let pairs = if cfg.include_largest {
        &TABLE1_PAIRS[..]
    } else {
        &TABLE1_PAIRS[..3]
    };
    let mut rows = Vec::with_capacity(pairs.len());
    for (k, &(n, n1)) in pairs.iter().enumerate() {
        let row_seed = rng::derive(seed, k as u64);
        let mut design = Design::new(covariate, n);
        design.d = cfg.d;
        design.target_ratio = n1 as f64 / (n - n1) as f64;
        let pop = design.resolve(row_seed)?;
        let fits: Vec<Option<Theta>> = (0..cfg.replications)
            .into_par_iter()
            .map(|r| -> Result<Option<Theta>> {
                let (data, _) = generate_population(&pop, replication_seed(row_seed, r))?;
                Ok(match fit_mle(&data, &FitSpec::default()) {
                    Ok(f) if f.converged => Some(f.theta_hat),
                    _ => None,
                })
            })
            .collect::<Result<_>>()?;
        let ok: Vec<Theta> = fits.into_iter().flatten().collect();
        let failures = cfg.replications - ok.len();
        let trace = if ok.len() >= 2 {
            empirical_covariance(&ok)?.trace()
        } else {
            f64::NAN
        };
        rows.push(Table1Row {
            n,
            n1_target: n1,
            alpha: pop.alpha,
            trace,
            n1_trace: n1 as f64 * trace,
            n_trace: n as f64 * trace,
            completed: ok.len(),
            failures,
            valid: ok.len() >= 2
                && failures as f64 <= INVALID_FAILURE_SHARE * cfg.replications as f64,
        });
    }
    Ok(Table1Report {
        model,
        master_seed: seed,
        rows,
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_and_products() {
        let cfg = Table1Config {
            replications: 4,
            ..Table1Config::default()
        };
        let rep = run_table1(&cfg, Table1Model::Correct, 1).unwrap();
        assert_eq!(rep.rows.len(), 3);
        for r in &rep.rows {
            assert_eq!(r.n1_trace, r.n1_target as f64 * r.trace);
            assert_eq!(r.n_trace, r.n as f64 * r.trace);
        }
        assert_eq!(rep.to_csv().lines().count(), 4);
    }

    #[test]
    fn too_few_replications() {
        let cfg = Table1Config {
            replications: 1,
            ..Table1Config::default()
        };
        assert!(run_table1(&cfg, Table1Model::Correct, 1).is_err());
    }
}
