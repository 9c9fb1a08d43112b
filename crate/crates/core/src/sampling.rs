//! Single-pass negative sampling.
//!
//! Every positive record is kept with inclusion probability one. A negative
//! record `x` is kept iff `u ≤ π(x)` where `u` is a per-record uniform and
//!
//! ```text
//! π(x) = min(max(ρ · min(t(x), T) / ω̃, ϱ), 1)
//! ```
//!
//! with `t` the scheme's score, `ω̃` the pilot normalizer, `ϱ` the floor and
//! `T` the truncation constant. The uniform scheme uses `π ≡ ρ`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{sigmoid, Dataset, Theta};
use crate::rng;

/// Default lower clamp on negative inclusion probabilities.
pub const DEFAULT_FLOOR: f64 = 1e-6;

const PARALLEL_MIN_RECORDS: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Uniform,
    /// Local case-control style comparator: score is the pilot probability.
    Lcc,
    /// A-optimal: `p(x;θ̃)·‖M̃⁻¹ġ(x;θ̃)‖`.
    OptA,
    /// L-optimal: `p(x;θ̃)·‖ġ(x;θ̃)‖`.
    OptL,
    /// Probability only: `p(x;θ̃)`.
    OptP,
}

impl Scheme {
    pub fn needs_pilot(self) -> bool {
        !matches!(self, Scheme::Uniform)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Uniform => "uniform",
            Scheme::Lcc => "lcc",
            Scheme::OptA => "opt-a",
            Scheme::OptL => "opt-l",
            Scheme::OptP => "opt-p",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "uniform" => Scheme::Uniform,
            "lcc" => Scheme::Lcc,
            "opt-a" => Scheme::OptA,
            "opt-l" => Scheme::OptL,
            "opt-p" => Scheme::OptP,
            other => return Err(Error::Config(format!("unknown scheme `{other}`"))),
        })
    }
}

/// Pilot parameter, moment normalizer and (optionally) the inverse pilot
/// Hessian used by the A-optimal score.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotBundle {
    pub theta_tilde: Theta,
    pub omega_tilde: f64,
    pub m_tilde_inv: Option<DMatrix<f64>>,
}

impl PilotBundle {
    pub fn validate(&self) -> Result<()> {
        self.theta_tilde.validate()?;
        if !(self.omega_tilde > 0.0 && self.omega_tilde.is_finite()) {
            return Err(Error::Config(format!(
                "pilot normalizer must be positive, got {}",
                self.omega_tilde
            )));
        }
        if let Some(m) = &self.m_tilde_inv {
            let k = self.theta_tilde.dim() + 1;
            if m.nrows() != k || m.ncols() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    got: m.nrows(),
                });
            }
            let scale = m.amax().max(1.0);
            if (m - m.transpose()).amax() > 1e-8 * scale {
                return Err(Error::Config("pilot inverse Hessian is not symmetric".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingPlan {
    pub scheme: Scheme,
    pub rho: f64,
    pub floor: f64,
    pub pilot: Option<PilotBundle>,
    /// `f64::INFINITY` disables truncation.
    pub truncation_t: f64,
}

impl SamplingPlan {
    pub fn new(scheme: Scheme, rho: f64, floor: f64, pilot: Option<PilotBundle>) -> Result<Self> {
        let plan = SamplingPlan {
            scheme,
            rho,
            floor,
            pilot,
            truncation_t: f64::INFINITY,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn uniform(rho: f64) -> Result<Self> {
        Self::new(Scheme::Uniform, rho, 0.0, None)
    }

    pub fn with_truncation(mut self, t: f64) -> Result<Self> {
        self.truncation_t = t;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::Config(format!("rho must be in (0, 1], got {}", self.rho)));
        }
        if !(self.floor >= 0.0 && self.floor < 1.0) {
            return Err(Error::Config(format!("floor must be in [0, 1), got {}", self.floor)));
        }
        // A floor at or above rho is allowed: the floor sweep pushes it up
        // until the scheme degenerates to uniform sampling at rate ϱ.
        if !(self.truncation_t > 0.0) {
            return Err(Error::Config("truncation constant must be positive".into()));
        }
        match (&self.pilot, self.scheme.needs_pilot()) {
            (None, true) => {
                return Err(Error::Config(format!(
                    "scheme {} requires a pilot",
                    self.scheme.as_str()
                )))
            }
            (Some(p), _) => {
                p.validate()?;
                if self.scheme == Scheme::OptA && p.m_tilde_inv.is_none() {
                    return Err(Error::Config(
                        "scheme opt-a requires the pilot inverse Hessian".into(),
                    ));
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn pilot(&self) -> Result<&PilotBundle> {
        self.pilot.as_ref().ok_or_else(|| {
            Error::Config(format!("scheme {} requires a pilot", self.scheme.as_str()))
        })
    }

    /// Sampling score `t(x)` for this plan's scheme.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        if self.scheme == Scheme::Uniform {
            return Ok(1.0);
        }
        let pilot = self.pilot()?;
        let theta = &pilot.theta_tilde;
        if theta.dim() != x.len() {
            return Err(Error::DimensionMismatch {
                expected: theta.dim(),
                got: x.len(),
            });
        }
        let p = sigmoid(theta.linear(x));
        Ok(match self.scheme {
            Scheme::Uniform => unreachable!(),
            Scheme::Lcc | Scheme::OptP => p,
            Scheme::OptL => p * (1.0 + x.iter().map(|v| v * v).sum::<f64>()).sqrt(),
            Scheme::OptA => {
                let m = pilot.m_tilde_inv.as_ref().ok_or_else(|| {
                    Error::Config("scheme opt-a requires the pilot inverse Hessian".into())
                })?;
                p * inv_hessian_grad_norm(m, x)
            }
        })
    }

    /// Inclusion probability for a negative record with precomputed score.
    #[inline]
    pub fn probability_from_score(&self, score: f64) -> f64 {
        if self.scheme == Scheme::Uniform {
            return self.rho;
        }
        // pilot presence is checked by validate()
        let omega = self.pilot.as_ref().map_or(1.0, |p| p.omega_tilde);
        let scaled = self.rho * score.min(self.truncation_t) / omega;
        scaled.max(self.floor).min(1.0)
    }

    /// Inclusion probability `π(x)` of a negative record.
    pub fn probability(&self, x: &[f64]) -> Result<f64> {
        Ok(self.probability_from_score(self.score(x)?))
    }
}

/// `‖M⁻¹ (1, xᵀ)ᵀ‖₂` without allocating.
#[inline]
pub(crate) fn inv_hessian_grad_norm(m: &DMatrix<f64>, x: &[f64]) -> f64 {
    let k = m.nrows();
    let mut acc = 0.0;
    for r in 0..k {
        let mut v = m[(r, 0)];
        for (j, xj) in x.iter().enumerate() {
            v += m[(r, j + 1)] * xj;
        }
        acc += v * v;
    }
    acc.sqrt()
}

/// Free-function form of [`SamplingPlan::score`].
pub fn score_t(plan: &SamplingPlan, x: &[f64]) -> Result<f64> {
    plan.score(x)
}

/// Free-function form of [`SamplingPlan::probability`].
pub fn sampling_probability(plan: &SamplingPlan, x: &[f64]) -> Result<f64> {
    plan.probability(x)
}

/// Largest `T` with `ρ·min(sᵢ, T) ≤ mean(min(s, T))` for every `i`.
///
/// Returns `f64::INFINITY` when `ρ·max(s) ≤ mean(s)`, in which case no
/// truncation is needed.
pub fn solve_truncation(scores: &[f64], rho: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Degenerate("no scores to truncate".into()));
    }
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::Config(format!("rho must be in (0, 1], got {rho}")));
    }
    if let Some(bad) = scores.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
        return Err(Error::Contract(format!("score {bad} is not a finite nonnegative value")));
    }
    let n = scores.len() as f64;
    let max = scores.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return Err(Error::Degenerate("all scores are zero".into()));
    }
    let mean = scores.iter().sum::<f64>() / n;
    if rho * max <= mean {
        return Ok(f64::INFINITY);
    }
    // slack(T) = mean(min(s, T)) - ρT is concave with slack(0) = 0, so the
    // feasible set is an interval [0, T*].
    let slack = |t: f64| scores.iter().map(|s| s.min(t)).sum::<f64>() / n - rho * t;
    let mut lo = if slack(mean) >= 0.0 { mean } else { 0.0 };
    let mut hi = max;
    while hi - lo > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        if slack(mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if lo <= 0.0 {
        return Err(Error::Degenerate(
            "fraction of positive scores is below rho; no positive truncation exists".into(),
        ));
    }
    Ok(lo)
}

/// Records retained by negative sampling.
///
/// `pi` is each record's inclusion probability (1 for positives).
/// `neg_rate` is the negative-class sampling rate `π(x)` at the record's
/// covariates; it equals `pi` on negatives and supplies the likelihood
/// offset `−log π(x)` on positives.
#[derive(Debug, Clone, PartialEq)]
pub struct Subsample {
    pub data: Dataset,
    pub pi: Vec<f64>,
    pub neg_rate: Vec<f64>,
}

impl Subsample {
    pub fn new(data: Dataset, pi: Vec<f64>, neg_rate: Vec<f64>) -> Result<Self> {
        for v in [&pi, &neg_rate] {
            if v.len() != data.len() {
                return Err(Error::DimensionMismatch {
                    expected: data.len(),
                    got: v.len(),
                });
            }
        }
        for (i, ((&p, &q), &y)) in pi.iter().zip(&neg_rate).zip(data.labels()).enumerate() {
            if !(p > 0.0 && p <= 1.0) || !(q > 0.0 && q <= 1.0) {
                return Err(Error::Contract(format!(
                    "record {i}: probabilities ({p}, {q}) outside (0, 1]"
                )));
            }
            if y == 1 && p != 1.0 {
                return Err(Error::Contract(format!(
                    "record {i}: positive record with inclusion probability {p}"
                )));
            }
            if y == 0 && p != q {
                return Err(Error::Contract(format!(
                    "record {i}: negative record with inclusion probability {p} but rate {q}"
                )));
            }
        }
        Ok(Subsample { data, pi, neg_rate })
    }

    /// Builds a subsample from inclusion probabilities alone. The rate at
    /// positive records is only recoverable when every negative shares one
    /// rate (uniform sampling).
    pub fn from_inclusion(data: Dataset, pi: Vec<f64>) -> Result<Self> {
        if pi.len() != data.len() {
            return Err(Error::DimensionMismatch {
                expected: data.len(),
                got: pi.len(),
            });
        }
        let mut neg = pi.iter().zip(data.labels()).filter(|(_, y)| **y == 0).map(|(p, _)| *p);
        let common = match neg.next() {
            None => 1.0,
            Some(first) => {
                if neg.any(|p| p != first) {
                    return Err(Error::Config(
                        "negative inclusion probabilities vary; the negative-class rate at \
                         positive records must be given"
                            .into(),
                    ));
                }
                first
            }
        };
        let neg_rate = pi
            .iter()
            .zip(data.labels())
            .map(|(p, y)| if *y == 1 { common } else { *p })
            .collect();
        Subsample::new(data, pi, neg_rate)
    }

    /// The whole dataset, every record kept with certainty.
    pub fn full(data: Dataset) -> Self {
        let pi = vec![1.0; data.len()];
        Subsample {
            data,
            neg_rate: pi.clone(),
            pi,
        }
    }

    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }

    pub fn negatives(&self) -> usize {
        self.data.n0()
    }
}

/// One pass of negative sampling over `data` under `plan`.
pub fn draw_subsample(data: &Dataset, plan: &SamplingPlan, seed: u64) -> Result<Subsample> {
    plan.validate()?;
    if plan.scheme.needs_pilot() {
        let d = plan.pilot()?.theta_tilde.dim();
        if d != data.dim() {
            return Err(Error::DimensionMismatch {
                expected: data.dim(),
                got: d,
            });
        }
    }
    let key = subsample_key(seed);
    let keep = |i: usize| -> Option<(usize, f64)> {
        // dimension checked above, so score() cannot fail here
        let rate = plan.probability(data.row(i)).expect("validated plan");
        (data.label(i) == 1 || rng::uniform_at(key, i as u64) <= rate).then_some((i, rate))
    };
    Ok(collect_kept(data, keep))
}

/// Negative sampling with an externally computed rate `π(xᵢ)` per record.
/// Uses the same per-record uniforms as [`draw_subsample`], so runs with
/// equal seeds share their random numbers.
pub fn draw_with_probabilities(data: &Dataset, neg_pi: &[f64], seed: u64) -> Result<Subsample> {
    if neg_pi.len() != data.len() {
        return Err(Error::DimensionMismatch {
            expected: data.len(),
            got: neg_pi.len(),
        });
    }
    let key = subsample_key(seed);
    if let Some(bad) = neg_pi.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
        return Err(Error::Contract(format!("sampling rate {bad} outside (0, 1]")));
    }
    let keep = |i: usize| -> Option<(usize, f64)> {
        let rate = neg_pi[i];
        (data.label(i) == 1 || rng::uniform_at(key, i as u64) <= rate).then_some((i, rate))
    };
    Ok(collect_kept(data, keep))
}

fn subsample_key(seed: u64) -> u64 {
    rng::derive(seed, rng::label::SUBSAMPLE)
}

fn collect_kept<F>(data: &Dataset, keep: F) -> Subsample
where
    F: Fn(usize) -> Option<(usize, f64)> + Sync,
{
    let kept: Vec<(usize, f64)> = if data.len() >= PARALLEL_MIN_RECORDS {
        (0..data.len()).into_par_iter().filter_map(&keep).collect()
    } else {
        (0..data.len()).filter_map(&keep).collect()
    };
    let idx: Vec<usize> = kept.iter().map(|k| k.0).collect();
    let neg_rate: Vec<f64> = kept.iter().map(|k| k.1).collect();
    let pi = idx
        .iter()
        .zip(&neg_rate)
        .map(|(&i, &q)| if data.label(i) == 1 { 1.0 } else { q })
        .collect();
    Subsample {
        data: data.select(&idx),
        pi,
        neg_rate,
    }
}
