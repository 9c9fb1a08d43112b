//! Simulation designs: covariate families, intercept calibration and data
//! generation.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{sigmoid, Dataset, LogOddsModel, Theta};
use crate::rng;

/// Rows in the probe sample used for intercept calibration.
pub const PROBE_ROWS: usize = 1_000_000;
const MAX_REGENERATIONS: u64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariate {
    /// iid standard normal coordinates.
    Normal,
    /// Elementwise `exp` of standard normals.
    #[serde(rename = "lognormal")]
    LogNormal,
    /// iid Student t with 3 degrees of freedom.
    T3,
    /// iid rate-1 exponential.
    Exponential,
}

impl Covariate {
    pub fn as_str(self) -> &'static str {
        match self {
            Covariate::Normal => "normal",
            Covariate::LogNormal => "lognormal",
            Covariate::T3 => "t3",
            Covariate::Exponential => "exponential",
        }
    }

    fn fill<R: Rng>(self, rng: &mut R, out: &mut [f64]) {
        match self {
            Covariate::Normal => out.iter_mut().for_each(|v| *v = rng.sample(StandardNormal)),
            Covariate::LogNormal => out.iter_mut().for_each(|v| {
                let z: f64 = rng.sample(StandardNormal);
                *v = z.exp();
            }),
            Covariate::T3 => {
                let t = StudentT::new(3.0).expect("valid degrees of freedom");
                out.iter_mut().for_each(|v| *v = t.sample(rng));
            }
            Covariate::Exponential => out.iter_mut().for_each(|v| *v = rng.sample(Exp1)),
        }
    }
}

/// Log-odds generator for the simulated responses.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    #[default]
    Linear,
    /// `α + (1/ξ)·tanh(ξ·xᵀW)β` with `W = I + ξ_w·(standard normal
    /// off-diagonal entries)`.
    Tanh { xi: f64, xi_w: f64 },
}

fn default_d() -> usize {
    6
}

fn default_ratio() -> f64 {
    1.0 / 400.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Design {
    pub covariate: Covariate,
    #[serde(default = "default_d")]
    pub d: usize,
    /// Defaults to a vector of ones.
    #[serde(default)]
    pub beta_true: Option<Vec<f64>>,
    /// Calibrated to `target_ratio` when absent.
    #[serde(default)]
    pub alpha_true: Option<f64>,
    pub n: usize,
    /// Target `N₁ : N₀`.
    #[serde(default = "default_ratio")]
    pub target_ratio: f64,
    #[serde(default)]
    pub generator: Generator,
}

impl Design {
    /// `n` rows of iid covariates of the given family, `d = 6`, `β = 1`,
    /// 1:400 target imbalance and a calibrated intercept.
    pub fn new(covariate: Covariate, n: usize) -> Self {
        Design {
            covariate,
            d: default_d(),
            beta_true: None,
            alpha_true: None,
            n,
            target_ratio: default_ratio(),
            generator: Generator::Linear,
        }
    }

    pub fn beta(&self) -> Vec<f64> {
        self.beta_true.clone().unwrap_or_else(|| vec![1.0; self.d])
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1000 {
            return Err(Error::Config(format!("population size {} is below 1000", self.n)));
        }
        if self.d == 0 {
            return Err(Error::Config("dimension must be positive".into()));
        }
        if self.beta().len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: self.beta().len(),
            });
        }
        if !(self.target_ratio > 0.0 && self.target_ratio < 1.0) && self.alpha_true.is_none() {
            return Err(Error::Config(format!(
                "target ratio must be in (0, 1), got {}",
                self.target_ratio
            )));
        }
        if let Generator::Tanh { xi, xi_w } = self.generator {
            if !(xi > 0.0) || !(xi_w >= 0.0) {
                return Err(Error::Config("tanh generator needs xi > 0 and xi_w >= 0".into()));
            }
        }
        Ok(())
    }

    /// Fixes the intercept (calibrating if needed) and the generator's
    /// mixing matrix for this seed.
    pub fn resolve(&self, seed: u64) -> Result<Population> {
        self.validate()?;
        let model = match self.generator {
            Generator::Linear => LogOddsModel::Linear,
            Generator::Tanh { xi, xi_w } => {
                let mut r = rng::stream(seed, rng::label::MIXING);
                let mut w = DMatrix::identity(self.d, self.d);
                for i in 0..self.d {
                    for j in 0..self.d {
                        if i != j {
                            let z: f64 = r.sample(StandardNormal);
                            w[(i, j)] = xi_w * z;
                        }
                    }
                }
                LogOddsModel::tanh_two_layer(xi, w)?
            }
        };
        let mut pop = Population {
            design: self.clone(),
            model,
            alpha: self.alpha_true.unwrap_or(0.0),
        };
        if self.alpha_true.is_none() {
            pop.alpha = pop.calibrate(seed)?;
        }
        Ok(pop)
    }
}

/// A design with its intercept and generator fixed.
#[derive(Debug, Clone)]
pub struct Population {
    pub design: Design,
    pub model: LogOddsModel,
    pub alpha: f64,
}

impl Population {
    pub fn truth(&self) -> Theta {
        Theta {
            alpha: self.alpha,
            beta: self.design.beta(),
        }
    }

    /// Intercept such that the mean positive probability over a probe
    /// sample equals `r/(1+r)`.
    fn calibrate(&self, seed: u64) -> Result<f64> {
        let d = self.design.d;
        let mut r = rng::stream(seed, rng::label::PROBE);
        let zero = Theta {
            alpha: 0.0,
            beta: self.design.beta(),
        };
        let mut row = vec![0.0; d];
        let f: Vec<f64> = (0..PROBE_ROWS)
            .map(|_| {
                self.design.covariate.fill(&mut r, &mut row);
                self.model.log_odds(&zero, &row).expect("dimension fixed by design")
            })
            .collect();
        let ratio = self.design.target_ratio;
        bisect_intercept(&f, ratio / (1.0 + ratio))
    }
}

/// Solves `mean(σ(α + fᵢ)) = target` for `α ∈ [−50, 10]`.
pub fn bisect_intercept(f: &[f64], target: f64) -> Result<f64> {
    let mean_p = |a: f64| f.iter().map(|v| sigmoid(a + v)).sum::<f64>() / f.len() as f64;
    let (mut lo, mut hi) = (-50.0, 10.0);
    if !(mean_p(lo) <= target && mean_p(hi) >= target) {
        return Err(Error::Config(format!(
            "positive rate {target} not bracketed by intercepts in [-50, 10]"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_p(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Intercept that makes the design hit its target imbalance.
pub fn calibrate_alpha(design: &Design, seed: u64) -> Result<f64> {
    let mut free = design.clone();
    free.alpha_true = None;
    Ok(free.resolve(seed)?.alpha)
}

/// Draws a population of `n` records and returns it with the truth.
/// Regenerates with the next seed (at most ten times) if no positive
/// record appears.
pub fn generate_population(pop: &Population, seed: u64) -> Result<(Dataset, Theta)> {
    let truth = pop.truth();
    let d = pop.design.d;
    let n = pop.design.n;
    for attempt in 0..MAX_REGENERATIONS {
        let mut r = rng::stream(seed.wrapping_add(attempt), rng::label::DATA);
        let mut x = vec![0.0; n * d];
        let mut y = vec![0u8; n];
        for i in 0..n {
            let row = &mut x[i * d..(i + 1) * d];
            pop.design.covariate.fill(&mut r, row);
            let p = pop
                .model
                .probability(&truth, row)
                .expect("dimension fixed by design");
            y[i] = (r.random::<f64>() < p) as u8;
        }
        if y.contains(&1) {
            return Ok((Dataset::new(x, y, d)?, truth));
        }
        log::debug!("no positives for seed {seed} attempt {attempt}; regenerating");
    }
    Err(Error::Degenerate(format!(
        "no positive records after {MAX_REGENERATIONS} generation attempts"
    )))
}

/// Resolves `design` under `seed` and draws one population.
pub fn generate(design: &Design, seed: u64) -> Result<(Dataset, Theta)> {
    generate_population(&design.resolve(seed)?, seed)
}
