//! Sensitivity of the nonuniform estimators to the probability floor ϱ.

use serde::{Deserialize, Serialize};

use super::sweep::{run_cells, CellSpec, ExperimentReport, Method, SweepConfig};
use crate::error::{Error, Result};

fn default_floor_grid() -> Vec<f64> {
    vec![1e-6, 1e-4, 1e-3, 1e-2, 0.1, 0.5]
}

fn default_rho() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FloorConfig {
    /// Design, replications and pilot settings; `rho_grid`, `methods` and
    /// `floor` are ignored.
    pub sweep: SweepConfig,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_floor_grid")]
    pub floor_grid: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FloorReport {
    pub report: ExperimentReport,
    pub largest_floor: f64,
    /// `|MSE(optW at the largest floor) − MSE(uniW at that rate)|` is within
    /// three Monte Carlo standard errors.
    pub largest_matches_uniform: bool,
}

impl FloorConfig {
    pub fn validate(&self) -> Result<()> {
        self.sweep.validate()?;
        if self.floor_grid.is_empty() {
            return Err(Error::Config("floor grid must be non-empty".into()));
        }
        if self.floor_grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config("floor grid must be strictly ascending".into()));
        }
        if !(self.floor_grid[0] > 0.0 && *self.floor_grid.last().unwrap() < 1.0) {
            return Err(Error::Config("floors must lie in (0, 1)".into()));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::Config(format!("rho {} outside (0, 1]", self.rho)));
        }
        Ok(())
    }
}

/// MSE of optW and optLik per floor, plus uniW at the largest floor as a
/// sampling rate for comparison.
pub fn run_floor_sensitivity(cfg: &FloorConfig, seed: u64) -> Result<FloorReport> {
    cfg.validate()?;
    let pop = cfg.sweep.design.resolve(seed)?;
    let largest = *cfg.floor_grid.last().expect("validated non-empty");
    let mut cells = Vec::new();
    for method in [Method::OptW, Method::OptLik] {
        for &floor in &cfg.floor_grid {
            cells.push(CellSpec {
                method,
                rho: cfg.rho,
                floor,
            });
        }
    }
    cells.push(CellSpec {
        method: Method::UniW,
        rho: largest,
        floor: largest,
    });
    let report = run_cells(&pop, &cells, &cfg.sweep, seed)?;
    let opt = &report.cells[cfg.floor_grid.len() - 1];
    let uni = report.cells.last().expect("uniform cell present");
    let tol = 3.0 * (opt.se * opt.se + uni.se * uni.se).sqrt();
    let largest_matches_uniform = (opt.mse - uni.mse).abs() <= tol;
    Ok(FloorReport {
        report,
        largest_floor: largest,
        largest_matches_uniform,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{Covariate, Design};

    fn cfg(grid: Vec<f64>) -> FloorConfig {
        let mut design = Design::new(Covariate::Normal, 20_000);
        design.d = 2;
        design.target_ratio = 1.0 / 50.0;
        let mut sweep = SweepConfig::new(design);
        sweep.replications = 8;
        FloorConfig {
            sweep,
            rho: 0.05,
            floor_grid: grid,
        }
    }

    #[test]
    fn single_floor_grid() {
        let rep = run_floor_sensitivity(&cfg(vec![1e-3]), 4).unwrap();
        // optW, optLik and the uniform reference
        assert_eq!(rep.report.cells.len(), 3);
    }

    #[test]
    fn descending_grid_rejected() {
        assert!(cfg(vec![0.1, 0.01]).validate().is_err());
        assert!(cfg(vec![1e-3, 1.0]).validate().is_err());
    }

    #[test]
    fn large_floor_approaches_uniform() {
        let rep = run_floor_sensitivity(&cfg(vec![1e-6, 0.9]), 6).unwrap();
        assert!(rep.largest_matches_uniform, "{}", rep.report.to_csv());
    }
}
