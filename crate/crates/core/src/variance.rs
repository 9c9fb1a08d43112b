//! Plug-in asymptotic variances of the full-data, IPW and corrected
//! likelihood estimators, with expectations over `x` replaced by means over
//! a realized dataset.
//!
//! With `ĉ = e^α/ρ`, `E_f = mean(e^f)` and `φ` the negative sampling function
//! (unit mean):
//!
//! ```text
//! M_f   = mean(e^f ġġᵀ)
//! V_f   = E_f M_f⁻¹
//! V_w   = V_f + ĉ E_f M_f⁻¹ mean(φ⁻¹ e^{2f} ġġᵀ) M_f⁻¹
//! Λ_lik = mean(e^f ġġᵀ / (1 + ĉ φ⁻¹ e^f))
//! V_lik = E_f Λ_lik⁻¹
//! ```

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{sigmoid, Dataset, Theta};
use crate::sampling::{inv_hessian_grad_norm, solve_truncation, SamplingPlan};

/// Above this condition number a plug-in matrix is treated as singular.
pub const MAX_CONDITION: f64 = 1e14;

/// Whether `theta` was the simulation truth or a full-data estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaSource {
    Truth,
    FullDataEstimate,
}

#[derive(Debug, Clone, Serialize)]
pub struct VarianceReport {
    #[serde(serialize_with = "ser_matrix")]
    pub v_f: DMatrix<f64>,
    #[serde(serialize_with = "ser_matrix")]
    pub v_w: DMatrix<f64>,
    #[serde(serialize_with = "ser_matrix")]
    pub v_lik: DMatrix<f64>,
    #[serde(serialize_with = "ser_matrix")]
    pub m_f: DMatrix<f64>,
    #[serde(serialize_with = "ser_matrix")]
    pub lambda_lik: DMatrix<f64>,
    pub trace_f: f64,
    pub trace_w: f64,
    pub trace_lik: f64,
    pub c_hat: f64,
    pub theta_source: ThetaSource,
}

impl VarianceReport {
    /// `trace_f,trace_w,trace_lik,c_hat` for plotting.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{}",
            self.trace_f, self.trace_w, self.trace_lik, self.c_hat
        )
    }

    pub const CSV_HEADER: &'static str = "trace_f,trace_w,trace_lik,c_hat";
}

pub(crate) fn ser_matrix<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(m.nrows()))?;
    for r in 0..m.nrows() {
        let row: Vec<f64> = m.row(r).iter().copied().collect();
        seq.serialize_element(&row)?;
    }
    seq.end()
}

/// Accumulates `Σ cᵢ ġᵢġᵢᵀ / n` for per-record coefficients `cᵢ`.
fn weighted_outer<F>(data: &Dataset, coef: F) -> DMatrix<f64>
where
    F: Fn(usize, &[f64]) -> f64,
{
    let k = data.dim() + 1;
    let mut m = DMatrix::zeros(k, k);
    let mut g = vec![0.0; k];
    g[0] = 1.0;
    for i in 0..data.len() {
        let x = data.row(i);
        let c = coef(i, x);
        if c == 0.0 {
            continue;
        }
        g[1..].copy_from_slice(x);
        for a in 0..k {
            let ca = c * g[a];
            for b in a..k {
                m[(a, b)] += ca * g[b];
            }
        }
    }
    let n = data.len() as f64;
    for a in 0..k {
        for b in a..k {
            let v = m[(a, b)] / n;
            m[(a, b)] = v;
            m[(b, a)] = v;
        }
    }
    m
}

/// `M_f = mean(e^{xᵀβ} ġġᵀ)`.
pub fn plugin_mf(data: &Dataset, theta: &Theta) -> Result<DMatrix<f64>> {
    check(data, theta)?;
    Ok(weighted_outer(data, |_, x| theta.slope_part(x).exp()))
}

fn check(data: &Dataset, theta: &Theta) -> Result<()> {
    theta.validate()?;
    if theta.dim() != data.dim() {
        return Err(Error::DimensionMismatch {
            expected: data.dim(),
            got: theta.dim(),
        });
    }
    if data.is_empty() {
        return Err(Error::Degenerate("empty dataset".into()));
    }
    Ok(())
}

fn invert(m: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    let eig = m.clone().symmetric_eigen();
    let max = eig.eigenvalues.amax();
    let min = eig.eigenvalues.min();
    let cond = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(cond <= MAX_CONDITION) {
        return Err(Error::Conditioning { what, cond });
    }
    let inv = m
        .clone()
        .cholesky()
        .ok_or(Error::Conditioning { what, cond })?
        .inverse();
    Ok(symmetrize(inv))
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

/// Plug-in variances for a sampling function given per record. `phi[i]`
/// must be positive; `c_hat` is usually `e^α/ρ`.
pub fn plugin_variances_phi(
    data: &Dataset,
    theta: &Theta,
    c_hat: f64,
    phi: &[f64],
    source: ThetaSource,
) -> Result<VarianceReport> {
    check(data, theta)?;
    if phi.len() != data.len() {
        return Err(Error::DimensionMismatch {
            expected: data.len(),
            got: phi.len(),
        });
    }
    if let Some(bad) = phi.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::Contract(format!("sampling function value {bad} is not positive")));
    }
    if !(c_hat >= 0.0 && c_hat.is_finite()) {
        return Err(Error::Contract(format!("c_hat {c_hat} must be finite and nonnegative")));
    }
    let ef: Vec<f64> = (0..data.len())
        .map(|i| theta.slope_part(data.row(i)).exp())
        .collect();
    let mean_ef = ef.iter().sum::<f64>() / data.len() as f64;
    let m_f = weighted_outer(data, |i, _| ef[i]);
    let m_inv = invert(&m_f, "M_f")?;
    let v_f = symmetrize(&m_inv * mean_ef);

    let lambda_sub = weighted_outer(data, |i, _| ef[i] * ef[i] / phi[i]);
    let v_sub = symmetrize(&m_inv * lambda_sub * &m_inv * (c_hat * mean_ef));
    let v_w = &v_f + v_sub;

    let lambda_lik = weighted_outer(data, |i, _| ef[i] / (1.0 + c_hat * ef[i] / phi[i]));
    let v_lik = symmetrize(invert(&lambda_lik, "Lambda_lik")? * mean_ef);

    Ok(VarianceReport {
        trace_f: v_f.trace(),
        trace_w: v_w.trace(),
        trace_lik: v_lik.trace(),
        v_f,
        v_w,
        v_lik,
        m_f,
        lambda_lik,
        c_hat,
        theta_source: source,
    })
}

/// Plug-in variances with `φ(x) = π(x)/ρ` taken from a sampling plan and
/// `ĉ = e^α/ρ`.
pub fn plugin_variances(
    data: &Dataset,
    theta: &Theta,
    plan: &SamplingPlan,
    source: ThetaSource,
) -> Result<VarianceReport> {
    plan.validate()?;
    let phi = (0..data.len())
        .map(|i| plan.probability(data.row(i)).map(|p| p / plan.rho))
        .collect::<Result<Vec<_>>>()?;
    plugin_variances_phi(data, theta, theta.alpha.exp() / plan.rho, &phi, source)
}

/// Mean squared Euclidean distance of estimates from the truth.
pub fn mse(estimates: &[Theta], truth: &Theta) -> Result<f64> {
    if estimates.is_empty() {
        return Err(Error::Degenerate("no estimates".into()));
    }
    let mut acc = 0.0;
    for e in estimates {
        if e.dim() != truth.dim() {
            return Err(Error::DimensionMismatch {
                expected: truth.dim(),
                got: e.dim(),
            });
        }
        acc += e.squared_distance(truth);
    }
    Ok(acc / estimates.len() as f64)
}

/// Sample covariance (divisor `R − 1`) of replicated estimates.
pub fn empirical_covariance(estimates: &[Theta]) -> Result<DMatrix<f64>> {
    if estimates.len() < 2 {
        return Err(Error::Degenerate("need at least two estimates".into()));
    }
    let k = estimates[0].dim() + 1;
    let vs: Vec<_> = estimates.iter().map(Theta::to_vector).collect();
    let mean = vs.iter().fold(nalgebra::DVector::zeros(k), |a, v| a + v) / vs.len() as f64;
    let mut cov = DMatrix::zeros(k, k);
    for v in &vs {
        let d = v - &mean;
        cov += &d * d.transpose();
    }
    Ok(cov / (vs.len() - 1) as f64)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigen().eigenvalues.min()
}

/// A-optimal score `t(x;θ) = p(x;θ)·‖M_f⁻¹ġ(x;θ)‖` at the plug-in `M_f`.
pub fn optimal_scores(data: &Dataset, theta: &Theta) -> Result<Vec<f64>> {
    let m_inv = invert(&plugin_mf(data, theta)?, "M_f")?;
    Ok(data
        .rows()
        .map(|(x, _)| sigmoid(theta.linear(x)) * inv_hessian_grad_norm(&m_inv, x))
        .collect())
}

/// Unit-mean sampling function `min(s, T)/mean(min(s, T))` with `T` the
/// feasibility truncation at rate `rho`.
pub fn normalized_phi(scores: &[f64], rho: f64) -> Result<Vec<f64>> {
    let t = solve_truncation(scores, rho)?;
    let capped: Vec<f64> = scores.iter().map(|s| s.min(t)).collect();
    let mean = capped.iter().sum::<f64>() / capped.len() as f64;
    Ok(capped.into_iter().map(|s| s / mean).collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct OptPhiReport {
    pub exponents: Vec<f64>,
    pub trace_w: Vec<f64>,
    pub argmin_exponent: f64,
    /// Whether exponent 1 (the optimal function) is within the relative slack
    /// of the smallest trace.
    pub optimal_attains_min: bool,
}

pub const OPT_PHI_SLACK: f64 = 1e-6;

/// Compares `tr(V_w)` across sampling functions `φ ∝ t(x;θ)^a`.
pub fn verify_opt_phi(
    data: &Dataset,
    theta: &Theta,
    rho: f64,
    exponents: &[f64],
) -> Result<OptPhiReport> {
    if exponents.is_empty() {
        return Err(Error::Config("no candidate exponents".into()));
    }
    let base = optimal_scores(data, theta)?;
    let c_hat = theta.alpha.exp() / rho;
    let mut traces = Vec::with_capacity(exponents.len());
    for &a in exponents {
        let scores: Vec<f64> = base.iter().map(|s| s.powf(a)).collect();
        let phi = normalized_phi(&scores, rho)?;
        let rep = plugin_variances_phi(data, theta, c_hat, &phi, ThetaSource::Truth)?;
        traces.push(rep.trace_w);
    }
    let (imin, min) = traces
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
    let optimal_attains_min = exponents
        .iter()
        .position(|&a| a == 1.0)
        .map(|i| traces[i] <= min * (1.0 + OPT_PHI_SLACK))
        .unwrap_or(false);
    Ok(OptPhiReport {
        exponents: exponents.to_vec(),
        trace_w: traces,
        argmin_exponent: exponents[imin],
        optimal_attains_min,
    })
}
