//! Pilot estimation: a class-balanced uniform pilot sample, its unweighted
//! fit, the moment normalizer ω̃ and optional deliberate perturbations.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{fit_mle, FitResult, FitSpec};
use crate::model::{Dataset, Theta};
use crate::rng;
use crate::sampling::{PilotBundle, SamplingPlan, Scheme};

/// Condition number above which the pilot information is pseudo-inverted.
pub const PSEUDO_INVERSE_COND: f64 = 1e12;

/// Deliberate pilot misspecification.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Perturbation {
    #[default]
    None,
    /// Adds an independent `U(0, scale)` draw to every coordinate.
    AddUniform { scale: f64 },
    /// `α̃ += ξ·U(0,1)·log(N₀/N₁)`.
    InterceptShift { xi: f64 },
    /// `β̃ += ξ·N(0, I)`.
    BetaNoise { xi: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PilotConfig {
    /// Expected number of pilot draws from each class.
    pub per_class_size: usize,
    #[serde(default)]
    pub perturb: Perturbation,
}

impl Default for PilotConfig {
    fn default() -> Self {
        PilotConfig {
            per_class_size: 100,
            perturb: Perturbation::None,
        }
    }
}

impl PilotConfig {
    pub fn validate(&self, d: usize) -> Result<()> {
        if self.per_class_size < d + 1 {
            return Err(Error::Config(format!(
                "pilot size per class {} is below d + 1 = {}",
                self.per_class_size,
                d + 1
            )));
        }
        Ok(())
    }
}

/// Poisson draw of about `per_class_size` records from each class.
pub fn draw_pilot(data: &Dataset, cfg: &PilotConfig, seed: u64) -> Result<Dataset> {
    cfg.validate(data.dim())?;
    if data.n1() == 0 || data.n0() == 0 {
        return Err(Error::Degenerate(
            "pilot needs records from both classes".into(),
        ));
    }
    let k = cfg.per_class_size as f64;
    let p1 = (k / data.n1() as f64).min(1.0);
    let p0 = (k / data.n0() as f64).min(1.0);
    let key = rng::derive(seed, rng::label::PILOT_DRAW);
    let idx: Vec<usize> = (0..data.len())
        .filter(|&i| {
            let p = if data.label(i) == 1 { p1 } else { p0 };
            rng::uniform_at(key, i as u64) <= p
        })
        .collect();
    Ok(data.select(&idx))
}

#[derive(Debug, Clone)]
pub struct PilotFit {
    pub theta: Theta,
    /// Inverse observed information of the pilot objective.
    pub m_inv: DMatrix<f64>,
    pub fit: FitResult,
}

/// Unweighted logistic MLE on the pilot sample.
pub fn fit_pilot(pilot: &Dataset) -> Result<PilotFit> {
    let fit = fit_mle(pilot, &FitSpec::default())?;
    if !fit.converged {
        return Err(Error::Estimability(format!(
            "pilot fit did not converge after {} iterations (gradient {:.3e})",
            fit.iterations, fit.grad_norm
        )));
    }
    let m_inv = symmetric_inverse(&fit.neg_hessian)?;
    Ok(PilotFit {
        theta: fit.theta_hat.clone(),
        m_inv,
        fit,
    })
}

/// Inverse of a symmetric positive semidefinite matrix, falling back to the
/// pseudo-inverse when it is nearly singular.
pub fn symmetric_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = m.clone().symmetric_eigen();
    let max = eig.eigenvalues.amax();
    let min = eig.eigenvalues.min();
    if !(max > 0.0) {
        return Err(Error::RankDeficient("information matrix is zero".into()));
    }
    let cond = if min > 0.0 { max / min } else { f64::INFINITY };
    let mut inv = if cond <= PSEUDO_INVERSE_COND {
        m.clone()
            .cholesky()
            .map(|c| c.inverse())
            .ok_or_else(|| Error::RankDeficient("information matrix not positive definite".into()))?
    } else {
        log::warn!("pilot information has condition number {cond:.3e}; using pseudo-inverse");
        let cutoff = max / PSEUDO_INVERSE_COND;
        let mut d = eig.eigenvalues.clone();
        for v in d.iter_mut() {
            *v = if *v > cutoff { 1.0 / *v } else { 0.0 };
        }
        &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
    };
    // exact symmetry
    let t = inv.transpose();
    inv = (inv + t) * 0.5;
    Ok(inv)
}

/// Moment normalizer `ω̃ = (N₁/N)·mean_{ỹ=1} t̃ + (N₀/N)·mean_{ỹ=0} t̃`.
///
/// On a pilot with `ñ/2` records per class this is
/// `2N₁/(ñN)·Σ_{ỹ=1} t̃ + 2N₀/(ñN)·Σ_{ỹ=0} t̃`. Using the realized class
/// counts keeps it unbiased when a small class is taken whole.
pub fn compute_omega(n1: usize, n0: usize, pilot_labels: &[u8], scores: &[f64]) -> Result<f64> {
    if pilot_labels.len() != scores.len() {
        return Err(Error::DimensionMismatch {
            expected: pilot_labels.len(),
            got: scores.len(),
        });
    }
    let (mut s1, mut s0, mut c1, mut c0) = (0.0, 0.0, 0usize, 0usize);
    for (&y, &t) in pilot_labels.iter().zip(scores) {
        if y == 1 {
            s1 += t;
            c1 += 1;
        } else {
            s0 += t;
            c0 += 1;
        }
    }
    if c1 == 0 || c0 == 0 {
        return Err(Error::Degenerate("pilot lacks one of the classes".into()));
    }
    let n = (n1 + n0) as f64;
    let omega = n1 as f64 / n * (s1 / c1 as f64) + n0 as f64 / n * (s0 / c0 as f64);
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::Degenerate(format!("normalizer {omega} is not positive")));
    }
    Ok(omega)
}

/// Applies a misspecification to the pilot parameter. `class_counts` are
/// the full-data `(N₁, N₀)`.
pub fn perturb_pilot(
    theta: &Theta,
    mode: Perturbation,
    class_counts: (usize, usize),
    seed: u64,
) -> Theta {
    let mut rng = rng::stream(seed, rng::label::PERTURB);
    let mut out = theta.clone();
    match mode {
        Perturbation::None => {}
        Perturbation::AddUniform { scale } => {
            out.alpha += scale * rng.random::<f64>();
            for b in &mut out.beta {
                *b += scale * rng.random::<f64>();
            }
        }
        Perturbation::InterceptShift { xi } => {
            let (n1, n0) = class_counts;
            let log_ratio = (n0 as f64 / n1.max(1) as f64).ln();
            out.alpha += xi * rng.random::<f64>() * log_ratio;
        }
        Perturbation::BetaNoise { xi } => {
            for b in &mut out.beta {
                let z: f64 = rng.sample(StandardNormal);
                *b += xi * z;
            }
        }
    }
    out
}

/// Draws, fits and perturbs a pilot, then normalizes the scheme's scores.
pub fn build_pilot(
    data: &Dataset,
    cfg: &PilotConfig,
    scheme: Scheme,
    seed: u64,
) -> Result<PilotBundle> {
    let sample = draw_pilot(data, cfg, seed)?;
    let fit = fit_pilot(&sample)?;
    let theta = perturb_pilot(&fit.theta, cfg.perturb, (data.n1(), data.n0()), seed);
    bundle_from_fit(data.n1(), data.n0(), &sample, theta, fit.m_inv, scheme)
}

/// Completes a pilot bundle by computing ω̃ for `scheme` on the pilot records.
pub fn bundle_from_fit(
    n1: usize,
    n0: usize,
    sample: &Dataset,
    theta: Theta,
    m_inv: DMatrix<f64>,
    scheme: Scheme,
) -> Result<PilotBundle> {
    let mut bundle = PilotBundle {
        theta_tilde: theta,
        omega_tilde: 1.0,
        m_tilde_inv: Some(m_inv),
    };
    if scheme == Scheme::Uniform {
        return Ok(bundle);
    }
    let plan = SamplingPlan::new(scheme, 1.0, 0.0, Some(bundle.clone()))?;
    let scores = sample
        .rows()
        .map(|(x, _)| plan.score(x))
        .collect::<Result<Vec<_>>>()?;
    bundle.omega_tilde = compute_omega(n1, n0, sample.labels(), &scores)?;
    Ok(bundle)
}
