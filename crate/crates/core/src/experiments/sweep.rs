//! The ρ-sweep: MSE of each estimator against the truth over replications.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::design::{generate_population, Design, Population};
use super::replication_seed;
use crate::error::{Error, Result};
use crate::estimators::{fit_ipw, fit_lik, fit_mle, FitResult, FitSpec, SolverOptions};
use crate::model::{Dataset, Theta};
use crate::pilot::{bundle_from_fit, draw_pilot, fit_pilot, perturb_pilot, PilotConfig};
use crate::sampling::{
    draw_with_probabilities, solve_truncation, SamplingPlan, Scheme, Subsample, DEFAULT_FLOOR,
};

pub const DEFAULT_RHO_GRID: [f64; 5] = [0.002, 0.004, 0.006, 0.01, 0.02];

/// Cells with a larger share of failed replications are flagged invalid.
pub const INVALID_FAILURE_SHARE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "full")]
    Full,
    #[serde(rename = "uni_w")]
    UniW,
    #[serde(rename = "uni_lik")]
    UniLik,
    #[serde(rename = "opt_w")]
    OptW,
    #[serde(rename = "opt_lik")]
    OptLik,
    #[serde(rename = "lcc")]
    Lcc,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Full,
        Method::UniW,
        Method::UniLik,
        Method::OptW,
        Method::OptLik,
        Method::Lcc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Full => "Full",
            Method::UniW => "uniW",
            Method::UniLik => "uniLik",
            Method::OptW => "optW",
            Method::OptLik => "optLik",
            Method::Lcc => "LCC",
        }
    }

    fn needs_pilot(self) -> bool {
        matches!(self, Method::OptW | Method::OptLik | Method::Lcc)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s) || s == serde_name(*m))
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

fn serde_name(m: Method) -> &'static str {
    match m {
        Method::Full => "full",
        Method::UniW => "uni_w",
        Method::UniLik => "uni_lik",
        Method::OptW => "opt_w",
        Method::OptLik => "opt_lik",
        Method::Lcc => "lcc",
    }
}

fn default_rho_grid() -> Vec<f64> {
    DEFAULT_RHO_GRID.to_vec()
}

fn default_methods() -> Vec<Method> {
    vec![
        Method::Full,
        Method::UniW,
        Method::UniLik,
        Method::OptW,
        Method::OptLik,
    ]
}

fn default_replications() -> usize {
    200
}

fn default_opt_scheme() -> Scheme {
    Scheme::OptA
}

fn default_floor() -> f64 {
    DEFAULT_FLOOR
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub design: Design,
    #[serde(default = "default_rho_grid")]
    pub rho_grid: Vec<f64>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub pilot: PilotConfig,
    /// Scheme behind optW and optLik.
    #[serde(default = "default_opt_scheme")]
    pub opt_scheme: Scheme,
    #[serde(default = "default_floor")]
    pub floor: f64,
    /// Solve for the truncation level `T` per ρ instead of `T = ∞`.
    #[serde(default)]
    pub truncate: bool,
}

impl SweepConfig {
    pub fn new(design: Design) -> Self {
        SweepConfig {
            design,
            rho_grid: default_rho_grid(),
            methods: default_methods(),
            replications: default_replications(),
            pilot: PilotConfig::default(),
            opt_scheme: default_opt_scheme(),
            floor: default_floor(),
            truncate: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.design.validate()?;
        if self.rho_grid.is_empty() || self.methods.is_empty() {
            return Err(Error::Config("rho grid and method list must be non-empty".into()));
        }
        if let Some(r) = self.rho_grid.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
            return Err(Error::Config(format!("rho {r} outside (0, 1]")));
        }
        if self.replications == 0 {
            return Err(Error::Config("replications must be positive".into()));
        }
        if matches!(self.opt_scheme, Scheme::Uniform | Scheme::Lcc) {
            return Err(Error::Config(format!(
                "opt_scheme must be one of opt-a, opt-l, opt-p, got {}",
                self.opt_scheme.as_str()
            )));
        }
        self.pilot.validate(self.design.d)?;
        Ok(())
    }

    fn cells(&self) -> Vec<CellSpec> {
        let mut cells = Vec::new();
        for &method in &self.methods {
            for &rho in &self.rho_grid {
                cells.push(CellSpec {
                    method,
                    rho,
                    floor: self.floor,
                });
            }
        }
        cells
    }
}

/// One column of a study: an estimator at a sampling rate and floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub method: Method,
    pub rho: f64,
    pub floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellStats {
    pub method: Method,
    pub rho: f64,
    pub floor: f64,
    /// Mean of `‖θ̂ − θ*‖²` over completed replications.
    pub mse: f64,
    /// Standard error of `mse`.
    pub se: f64,
    pub completed: usize,
    pub failures: usize,
    pub valid: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub master_seed: u64,
    pub replications: usize,
    pub alpha: f64,
    pub cells: Vec<CellStats>,
    pub runtime_secs: f64,
    /// `errors[c][r]`: squared error of cell `c` in replication `r`, `None`
    /// when the fit failed.
    #[serde(skip)]
    pub errors: Vec<Vec<Option<f64>>>,
}

impl ExperimentReport {
    pub const CSV_HEADER: &'static str = "method,rho,floor,mse,se,completed,failures,valid";

    pub fn index(&self, method: Method, rho: f64) -> Option<usize> {
        self.cells
            .iter()
            .position(|c| c.method == method && c.rho == rho)
    }

    pub fn cell(&self, method: Method, rho: f64) -> Option<&CellStats> {
        self.index(method, rho).map(|i| &self.cells[i])
    }

    /// Mean and standard error of the per-replication difference
    /// `err(a) − err(b)` over replications where both fits completed.
    pub fn paired_difference(&self, a: usize, b: usize) -> (f64, f64) {
        let diffs: Vec<f64> = self.errors[a]
            .iter()
            .zip(&self.errors[b])
            .filter_map(|(x, y)| Some((*x)? - (*y)?))
            .collect();
        mean_and_se(&diffs)
    }

    pub fn flagged(&self) -> Vec<String> {
        self.cells
            .iter()
            .filter(|c| !c.valid)
            .map(|c| format!("{} rho={} floor={}", c.method, c.rho, c.floor))
            .collect()
    }

    pub fn csv_rows(&self) -> Vec<String> {
        self.cells
            .iter()
            .map(|c| {
                format!(
                    "{},{},{},{},{},{},{},{}",
                    c.method, c.rho, c.floor, c.mse, c.se, c.completed, c.failures, c.valid
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

pub(crate) fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, f64::NAN);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Runs the ρ-sweep described by `cfg`.
pub fn run_mse_sweep(cfg: &SweepConfig, seed: u64) -> Result<ExperimentReport> {
    cfg.validate()?;
    let pop = cfg.design.resolve(seed)?;
    run_cells(&pop, &cfg.cells(), cfg, seed)
}

/// Evaluates arbitrary cells on populations drawn from `pop`. Only the
/// pilot, scheme and truncation settings of `cfg` are read.
pub fn run_cells(
    pop: &Population,
    cells: &[CellSpec],
    cfg: &SweepConfig,
    seed: u64,
) -> Result<ExperimentReport> {
    let start = Instant::now();
    let per_rep: Vec<Vec<Option<f64>>> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| replicate(pop, cells, cfg, replication_seed(seed, r)))
        .collect::<Result<_>>()?;

    let mut errors = vec![Vec::with_capacity(cfg.replications); cells.len()];
    for rep in &per_rep {
        for (c, e) in rep.iter().enumerate() {
            errors[c].push(*e);
        }
    }
    let stats = cells
        .iter()
        .zip(&errors)
        .map(|(spec, errs)| {
            let ok: Vec<f64> = errs.iter().flatten().copied().collect();
            let failures = errs.len() - ok.len();
            let (mse, se) = mean_and_se(&ok);
            CellStats {
                method: spec.method,
                rho: spec.rho,
                floor: spec.floor,
                mse,
                se,
                completed: ok.len(),
                failures,
                valid: !ok.is_empty()
                    && failures as f64 <= INVALID_FAILURE_SHARE * errs.len() as f64,
            }
        })
        .collect();
    let report = ExperimentReport {
        master_seed: seed,
        replications: cfg.replications,
        alpha: pop.alpha,
        cells: stats,
        runtime_secs: start.elapsed().as_secs_f64(),
        errors,
    };
    for f in report.flagged() {
        log::warn!("cell flagged invalid: {f}");
    }
    Ok(report)
}

struct Pilot {
    /// Unperturbed pilot fit: the solver's starting point.
    start: Theta,
    /// Possibly perturbed pilot with a case-control corrected intercept.
    lcc_theta: Theta,
    opt_scores: Vec<f64>,
    opt_omega: f64,
    lcc_scores: Vec<f64>,
    lcc_omega: f64,
}

#[derive(Clone, Copy, PartialEq)]
enum Draw {
    Uniform(f64),
    Opt(f64, f64),
    Lcc(f64, f64),
}

fn draw_for(method: Method, rho: f64, floor: f64) -> Option<Draw> {
    match method {
        Method::Full => None,
        Method::UniW | Method::UniLik => Some(Draw::Uniform(rho)),
        Method::OptW | Method::OptLik => Some(Draw::Opt(rho, floor)),
        Method::Lcc => Some(Draw::Lcc(rho, floor)),
    }
}

/// One replication. Fit failures become `None`; only configuration errors
/// propagate.
fn replicate(
    pop: &Population,
    cells: &[CellSpec],
    cfg: &SweepConfig,
    rep_seed: u64,
) -> Result<Vec<Option<f64>>> {
    let (data, truth) = generate_population(pop, rep_seed)?;
    let pilot = if cells.iter().any(|c| c.method.needs_pilot()) {
        match build_replication_pilot(&data, cfg, rep_seed) {
            Ok(p) => Some(p),
            Err(e) if e.is_numerical() || matches!(e, Error::Estimability(_)) => {
                log::debug!("pilot failed: {e}");
                None
            }
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    let options = pilot
        .as_ref()
        .map_or_else(SolverOptions::default, |p| SolverOptions::starting_at(&p.start));

    let full_err = cells
        .iter()
        .any(|c| c.method == Method::Full)
        .then(|| fit_error(fit_mle(&data, &FitSpec::default()), &truth));

    let mut drawn: Vec<(Draw, Option<Subsample>)> = Vec::new();
    let mut out = Vec::with_capacity(cells.len());
    for cell in cells {
        let Some(kind) = draw_for(cell.method, cell.rho, cell.floor) else {
            out.push(full_err.flatten());
            continue;
        };
        if cell.method.needs_pilot() && pilot.is_none() {
            out.push(None);
            continue;
        }
        let pos = match drawn.iter().position(|(k, _)| *k == kind) {
            Some(p) => p,
            None => {
                let sub = draw(&data, kind, pilot.as_ref(), cfg, rep_seed)?;
                drawn.push((kind, sub));
                drawn.len() - 1
            }
        };
        let Some(sub) = drawn[pos].1.as_ref() else {
            out.push(None);
            continue;
        };
        let err = match cell.method {
            Method::UniW | Method::OptW => fit_error(fit_ipw(sub, &options), &truth),
            Method::UniLik | Method::OptLik => fit_error(fit_lik(sub, &options), &truth),
            Method::Lcc => {
                let p = pilot.as_ref().expect("checked above");
                lcc_estimate(sub, p, cell.rho, &options).map(|t| t.squared_distance(&truth))
            }
            Method::Full => unreachable!(),
        };
        out.push(err);
    }
    Ok(out)
}

fn build_replication_pilot(data: &Dataset, cfg: &SweepConfig, seed: u64) -> Result<Pilot> {
    let sample = draw_pilot(data, &cfg.pilot, seed)?;
    let fit = fit_pilot(&sample)?;
    let counts = (data.n1(), data.n0());
    let theta = perturb_pilot(&fit.theta, cfg.pilot.perturb, counts, seed);
    let scores_for = |scheme: Scheme, theta: &Theta| -> Result<(Vec<f64>, f64)> {
        let bundle = bundle_from_fit(
            counts.0,
            counts.1,
            &sample,
            theta.clone(),
            fit.m_inv.clone(),
            scheme,
        )?;
        let plan = SamplingPlan::new(scheme, 1.0, 0.0, Some(bundle))?;
        let scores = data
            .rows()
            .map(|(x, _)| plan.score(x))
            .collect::<Result<Vec<_>>>()?;
        Ok((scores, plan.pilot.as_ref().map_or(1.0, |b| b.omega_tilde)))
    };
    let (opt_scores, opt_omega) = scores_for(cfg.opt_scheme, &theta)?;
    // LCC needs calibrated probabilities: undo the class-balanced pilot's
    // intercept shift log(r₁/r₀), with rᵢ the realized pilot sampling rates
    let mut lcc_theta = theta.clone();
    lcc_theta.alpha -= ((sample.n1() as f64 / counts.0 as f64)
        / (sample.n0() as f64 / counts.1 as f64))
        .ln();
    let (lcc_scores, lcc_omega) = scores_for(Scheme::Lcc, &lcc_theta)?;
    Ok(Pilot {
        start: fit.theta,
        lcc_theta,
        opt_scores,
        opt_omega,
        lcc_scores,
        lcc_omega,
    })
}

/// Draws the subsample for `kind`. Every kind uses the same per-record
/// uniforms, so subsamples within a replication are coupled.
fn draw(
    data: &Dataset,
    kind: Draw,
    pilot: Option<&Pilot>,
    cfg: &SweepConfig,
    seed: u64,
) -> Result<Option<Subsample>> {
    let pi: Vec<f64> = match kind {
        Draw::Uniform(rho) => vec![rho; data.len()],
        Draw::Opt(rho, floor) | Draw::Lcc(rho, floor) => {
            let p = pilot.expect("pilot present for pilot-based draws");
            let (scores, omega) = match kind {
                Draw::Opt(..) => (&p.opt_scores, p.opt_omega),
                _ => (&p.lcc_scores, p.lcc_omega),
            };
            let t = if cfg.truncate {
                let neg: Vec<f64> = scores
                    .iter()
                    .zip(data.labels())
                    .filter(|(_, y)| **y == 0)
                    .map(|(s, _)| *s)
                    .collect();
                solve_truncation(&neg, rho)?
            } else {
                f64::INFINITY
            };
            scores
                .iter()
                .map(|s| (rho * s.min(t) / omega).max(floor).min(1.0))
                .collect()
        }
    };
    let sub = draw_with_probabilities(data, &pi, seed)?;
    // a subsample without negatives cannot be fitted
    Ok((sub.negatives() > 0).then_some(sub))
}

fn fit_error(fit: Result<FitResult>, truth: &Theta) -> Option<f64> {
    match fit {
        Ok(f) if f.converged => Some(f.theta_hat.squared_distance(truth)),
        Ok(_) => None,
        Err(e) => {
            log::debug!("fit failed: {e}");
            None
        }
    }
}

/// Local case-control estimate: an unweighted fit on the subsample, shifted
/// back by the pilot and the log acceptance scale.
fn lcc_estimate(
    sub: &Subsample,
    pilot: &Pilot,
    rho: f64,
    options: &SolverOptions,
) -> Option<Theta> {
    let spec = FitSpec {
        options: SolverOptions {
            init: None,
            ..options.clone()
        },
        ..FitSpec::default()
    };
    let fit = fit_mle(&sub.data, &spec).ok().filter(|f| f.converged)?;
    let mut theta = fit.theta_hat;
    theta.alpha += pilot.lcc_theta.alpha + (rho / pilot.lcc_omega).ln();
    for (b, t) in theta.beta.iter_mut().zip(&pilot.lcc_theta.beta) {
        *b += t;
    }
    Some(theta)
}
