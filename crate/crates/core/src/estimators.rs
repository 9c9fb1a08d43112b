//! Linear-logistic fitting with per-record weights and offsets.
//!
//! Every estimator maximizes
//!
//! ```text
//! ℓ(θ) = Σ wᵢ [ yᵢ(gᵢ + lᵢ) − log(1 + exp(gᵢ + lᵢ)) ],   gᵢ = α + xᵢᵀβ
//! ```
//!
//! * full-data MLE: `w ≡ 1`, `l ≡ 0`
//! * IPW: `wᵢ = 1/πᵢ`, `l ≡ 0`
//! * log-odds corrected likelihood: `w ≡ 1`, `lᵢ = −log πᵢ`
//!
//! For the corrected likelihood the positive-class linear term carries
//! `yᵢ·lᵢ`, which is zero because positives are kept with `π = 1`. The offset
//! form above is therefore the exact objective, not an approximation.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{log1p_exp, sigmoid, Dataset, Theta};
use crate::sampling::Subsample;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 100;
/// Divergence guard for complete or quasi-complete separation.
pub const SEPARATION_NORM: f64 = 1e3;
const MAX_HALVINGS: usize = 30;
const RIDGE_JITTER: f64 = 1e-10;
const CHUNK: usize = 8192;
/// Relative predicted gain treated as objective round-off.
const ROUNDOFF_GAIN: f64 = 1e-11;
/// Largest residual of a fit that separates the data.
const PERFECT_FIT: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Stop once the gradient sup-norm is at most this.
    pub tol: f64,
    pub max_iter: usize,
    /// Starting point; zero when absent.
    pub init: Option<Theta>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            init: None,
        }
    }
}

impl SolverOptions {
    pub fn starting_at(theta: &Theta) -> Self {
        SolverOptions {
            init: Some(theta.clone()),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct FitSpec {
    pub weights: Option<Vec<f64>>,
    pub offsets: Option<Vec<f64>>,
    pub options: SolverOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub theta_hat: Theta,
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
    /// Observed information `Σ wᵢ φᵢ ġᵢġᵢᵀ` at `theta_hat`.
    pub neg_hessian: DMatrix<f64>,
    pub objective: f64,
    /// Objective at the start of each iteration, then at the final point.
    pub objective_trace: Vec<f64>,
}

/// JSON form of a fit.
#[derive(Debug, Serialize)]
pub struct FitSummary<'a> {
    pub theta: &'a Theta,
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
}

impl FitResult {
    pub fn summary(&self) -> FitSummary<'_> {
        FitSummary {
            theta: &self.theta_hat,
            converged: self.converged,
            iterations: self.iterations,
            grad_norm: self.grad_norm,
        }
    }
}

/// Objective value plus first and second derivative pieces.
struct Eval {
    value: f64,
    grad: DVector<f64>,
    info: DMatrix<f64>,
}

#[derive(Clone, Copy)]
struct Terms<'a> {
    data: &'a Dataset,
    weights: Option<&'a [f64]>,
    offsets: Option<&'a [f64]>,
}

impl<'a> Terms<'a> {
    #[inline]
    fn w(&self, i: usize) -> f64 {
        self.weights.map_or(1.0, |w| w[i])
    }

    #[inline]
    fn l(&self, i: usize) -> f64 {
        self.offsets.map_or(0.0, |l| l[i])
    }

    fn value(&self, theta: &Theta) -> f64 {
        self.chunked(|range| {
            let mut acc = 0.0;
            for i in range {
                let eta = theta.linear(self.data.row(i)) + self.l(i);
                let y = self.data.label(i) as f64;
                acc += self.w(i) * (y * eta - log1p_exp(eta));
            }
            vec![acc]
        })[0]
    }

    fn max_residual(&self, theta: &Theta) -> f64 {
        (0..self.data.len())
            .map(|i| {
                let eta = theta.linear(self.data.row(i)) + self.l(i);
                (self.data.label(i) as f64 - sigmoid(eta)).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Value, gradient and observed information. `info` stores the packed
    /// upper triangle during accumulation and is expanded at the end.
    fn eval(&self, theta: &Theta, with_info: bool) -> Eval {
        let k = theta.dim() + 1;
        let tri = k * (k + 1) / 2;
        let sums = self.chunked(|range| {
            let mut buf = vec![0.0; 1 + k + if with_info { tri } else { 0 }];
            let mut gdot = vec![0.0; k];
            gdot[0] = 1.0;
            for i in range {
                let x = self.data.row(i);
                gdot[1..].copy_from_slice(x);
                let eta = theta.linear(x) + self.l(i);
                let w = self.w(i);
                let y = self.data.label(i) as f64;
                let p = sigmoid(eta);
                buf[0] += w * (y * eta - log1p_exp(eta));
                let r = w * (y - p);
                for a in 0..k {
                    buf[1 + a] += r * gdot[a];
                }
                if with_info {
                    let phi = w * p * (1.0 - p);
                    let mut pos = 1 + k;
                    for a in 0..k {
                        let pa = phi * gdot[a];
                        for b in a..k {
                            buf[pos] += pa * gdot[b];
                            pos += 1;
                        }
                    }
                }
            }
            buf
        });
        let grad = DVector::from_column_slice(&sums[1..1 + k]);
        let mut info = DMatrix::zeros(k, k);
        if with_info {
            let mut pos = 1 + k;
            for a in 0..k {
                for b in a..k {
                    info[(a, b)] = sums[pos];
                    info[(b, a)] = sums[pos];
                    pos += 1;
                }
            }
        }
        Eval {
            value: sums[0],
            grad,
            info,
        }
    }

    /// Applies `f` to fixed-size index chunks and sums the partial vectors
    /// in chunk order, so results do not depend on the worker count.
    fn chunked<F>(&self, f: F) -> Vec<f64>
    where
        F: Fn(std::ops::Range<usize>) -> Vec<f64> + Sync,
    {
        let n = self.data.len();
        let ranges: Vec<_> = (0..n.div_ceil(CHUNK))
            .map(|c| c * CHUNK..((c + 1) * CHUNK).min(n))
            .collect();
        let parts: Vec<Vec<f64>> = if ranges.len() > 1 {
            ranges.into_par_iter().map(&f).collect()
        } else {
            ranges.into_iter().map(&f).collect()
        };
        let mut iter = parts.into_iter();
        let mut total = iter.next().unwrap_or_else(|| f(0..0));
        for part in iter {
            for (t, v) in total.iter_mut().zip(part) {
                *t += v;
            }
        }
        total
    }
}

fn check_inputs(data: &Dataset, spec: &FitSpec) -> Result<()> {
    let n = data.len();
    if let Some(w) = &spec.weights {
        if w.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: w.len(),
            });
        }
        if let Some(bad) = w.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::Contract(format!("weight {bad} is not finite and positive")));
        }
    }
    if let Some(l) = &spec.offsets {
        if l.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: l.len(),
            });
        }
        if l.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("offsets must be finite".into()));
        }
    }
    if data.n1() == 0 || data.n0() == 0 {
        return Err(Error::Estimability(format!(
            "need both labels, got {} positives and {} negatives",
            data.n1(),
            data.n0()
        )));
    }
    if let Some(init) = &spec.options.init {
        if init.dim() != data.dim() {
            return Err(Error::DimensionMismatch {
                expected: data.dim(),
                got: init.dim(),
            });
        }
        init.validate()?;
    }
    Ok(())
}

/// Solves `info · step = grad`, adding ridge jitter if the Cholesky
/// factorization fails.
fn newton_step(info: &DMatrix<f64>, grad: &DVector<f64>) -> Result<DVector<f64>> {
    if let Some(ch) = info.clone().cholesky() {
        return Ok(ch.solve(grad));
    }
    let k = info.nrows();
    let scale = info.diagonal().amax().max(1.0);
    let mut jitter = RIDGE_JITTER;
    while jitter <= 1e-2 {
        let ridged = info + DMatrix::identity(k, k) * (jitter * scale);
        if let Some(ch) = ridged.cholesky() {
            return Ok(ch.solve(grad));
        }
        jitter *= 100.0;
    }
    Err(Error::RankDeficient(
        "observed information is not positive definite".into(),
    ))
}

/// Weighted, offset logistic maximum likelihood by damped Newton.
pub fn fit_mle(data: &Dataset, spec: &FitSpec) -> Result<FitResult> {
    check_inputs(data, spec)?;
    let terms = Terms {
        data,
        weights: spec.weights.as_deref(),
        offsets: spec.offsets.as_deref(),
    };
    let opts = &spec.options;
    let mut theta = opts
        .init
        .clone()
        .unwrap_or_else(|| Theta::zeros(data.dim()));
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut eval = terms.eval(&theta, true);
    loop {
        trace.push(eval.value);
        if eval.grad.amax() <= opts.tol || iterations >= opts.max_iter {
            break;
        }
        let step = newton_step(&eval.info, &eval.grad)?;
        let base = theta.to_vector();
        // Below this predicted gain the objective cannot resolve ascent and
        // the full Newton step is taken unchecked.
        let quadratic = eval.grad.dot(&step) <= ROUNDOFF_GAIN * (1.0 + eval.value.abs());
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let cand = Theta::from_vector(&(&base + &step * t));
            let v = terms.value(&cand);
            if v.is_finite() && (quadratic || v > eval.value) {
                accepted = Some(cand);
                break;
            }
            t *= 0.5;
        }
        iterations += 1;
        let Some(next) = accepted else {
            // no ascent along the Newton direction: numerically at the optimum
            break;
        };
        theta = next;
        if theta.norm() > SEPARATION_NORM {
            return Err(Error::Separation {
                norm: theta.norm(),
                iterations,
            });
        }
        eval = terms.eval(&theta, true);
    }
    let grad_norm = eval.grad.amax();
    if grad_norm <= opts.tol && terms.max_residual(&theta) < PERFECT_FIT {
        return Err(Error::Separation {
            norm: theta.norm(),
            iterations,
        });
    }
    if *trace.last().unwrap() != eval.value {
        trace.push(eval.value);
    }
    Ok(FitResult {
        theta_hat: theta,
        converged: grad_norm <= opts.tol,
        iterations,
        grad_norm,
        neg_hessian: eval.info,
        objective: eval.value,
        objective_trace: trace,
    })
}

fn check_pi(sub: &Subsample) -> Result<()> {
    if sub.pi.len() != sub.data.len() {
        return Err(Error::DimensionMismatch {
            expected: sub.data.len(),
            got: sub.pi.len(),
        });
    }
    if sub.neg_rate.len() != sub.data.len() {
        return Err(Error::DimensionMismatch {
            expected: sub.data.len(),
            got: sub.neg_rate.len(),
        });
    }
    if let Some(bad) = sub.pi.iter().chain(&sub.neg_rate).find(|p| !(**p > 0.0 && **p <= 1.0)) {
        return Err(Error::Contract(format!("probability {bad} outside (0, 1]")));
    }
    Ok(())
}

/// Inverse-probability-weighted subsample MLE.
pub fn fit_ipw(sub: &Subsample, options: &SolverOptions) -> Result<FitResult> {
    check_pi(sub)?;
    let spec = FitSpec {
        weights: Some(sub.pi.iter().map(|p| 1.0 / p).collect()),
        offsets: None,
        options: options.clone(),
    };
    fit_mle(&sub.data, &spec)
}

/// Log-odds corrected likelihood: unit weights and offsets `−log π(xᵢ)`,
/// the negative-class rate at every retained record including positives.
pub fn fit_lik(sub: &Subsample, options: &SolverOptions) -> Result<FitResult> {
    check_pi(sub)?;
    let spec = FitSpec {
        weights: None,
        offsets: Some(sub.neg_rate.iter().map(|p| -p.ln()).collect()),
        options: options.clone(),
    };
    fit_mle(&sub.data, &spec)
}

/// `Pr(y = 1 | x, kept)` for a record kept with probability `pi`.
pub fn corrected_probability(theta: &Theta, x: &[f64], pi: f64) -> Result<f64> {
    if !(pi > 0.0 && pi <= 1.0) {
        return Err(Error::Contract(format!("inclusion probability {pi} outside (0, 1]")));
    }
    if x.len() != theta.dim() {
        return Err(Error::DimensionMismatch {
            expected: theta.dim(),
            got: x.len(),
        });
    }
    Ok(sigmoid(theta.linear(x) - pi.ln()))
}

/// Objective value at `theta`; exposed for derivative checks.
pub fn objective(data: &Dataset, weights: Option<&[f64]>, offsets: Option<&[f64]>, theta: &Theta) -> f64 {
    Terms {
        data,
        weights,
        offsets,
    }
    .value(theta)
}

/// Analytic gradient at `theta`; exposed for derivative checks.
pub fn gradient(
    data: &Dataset,
    weights: Option<&[f64]>,
    offsets: Option<&[f64]>,
    theta: &Theta,
) -> DVector<f64> {
    Terms {
        data,
        weights,
        offsets,
    }
    .eval(theta, false)
    .grad
}

/// Observed information (negative Hessian) at `theta`.
pub fn information(
    data: &Dataset,
    weights: Option<&[f64]>,
    offsets: Option<&[f64]>,
    theta: &Theta,
) -> DMatrix<f64> {
    Terms {
        data,
        weights,
        offsets,
    }
    .eval(theta, true)
    .info
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(x: &[f64], y: &[u8], d: usize) -> Dataset {
        Dataset::new(x.to_vec(), y.to_vec(), d).unwrap()
    }

    #[test]
    fn symmetric_data_gives_zero_estimate() {
        let data = ds(&[0.0; 6], &[1, 0, 1, 0, 1, 0], 1);
        let fit = fit_mle(&data, &FitSpec::default()).unwrap();
        assert!(fit.converged);
        assert!(fit.theta_hat.alpha.abs() < 1e-12);
        assert!(fit.theta_hat.beta[0].abs() < 1e-12);
    }

    #[test]
    fn single_class_is_not_estimable() {
        let data = Dataset::new_unchecked_classes(vec![0.0, 1.0, 2.0], vec![0, 0, 0], 1).unwrap();
        assert!(matches!(fit_mle(&data, &FitSpec::default()), Err(Error::Estimability(_))));
        let data = ds(&[0.0, 1.0], &[1, 1], 1);
        assert!(matches!(fit_mle(&data, &FitSpec::default()), Err(Error::Estimability(_))));
    }

    #[test]
    fn separated_data_trips_the_guard() {
        let data = ds(&[-1.0, 1.0], &[0, 1], 1);
        assert!(matches!(
            fit_mle(&data, &FitSpec::default()),
            Err(Error::Separation { .. })
        ));
    }

    #[test]
    fn converged_fit_satisfies_score_equations() {
        let data = ds(&[1.0, 2.0, 3.0, 1.0, 2.0, 3.0], &[1, 0, 0, 0, 1, 1], 1);
        let fit = fit_mle(&data, &FitSpec::default()).unwrap();
        assert!(fit.converged);
        assert!(gradient(&data, None, None, &fit.theta_hat).amax() <= DEFAULT_TOL);
        assert!(fit.objective_trace.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn weights_equal_replication() {
        // weight 2 on a record equals duplicating it
        let x = [0.5, -1.0, 2.0, 0.3, -0.7];
        let y = [1, 0, 0, 1, 0];
        let w = vec![1.0, 2.0, 1.0, 3.0, 1.0];
        let a = fit_mle(
            &ds(&x, &y, 1),
            &FitSpec {
                weights: Some(w),
                ..Default::default()
            },
        )
        .unwrap();
        let xr = [0.5, -1.0, -1.0, 2.0, 0.3, 0.3, 0.3, -0.7];
        let yr = [1, 0, 0, 0, 1, 1, 1, 0];
        let b = fit_mle(&ds(&xr, &yr, 1), &FitSpec::default()).unwrap();
        assert!((a.theta_hat.alpha - b.theta_hat.alpha).abs() < 1e-9);
        assert!((a.theta_hat.beta[0] - b.theta_hat.beta[0]).abs() < 1e-9);
    }

    #[test]
    fn offsets_shift_intercept() {
        // constant offset c moves α̂ by −c
        let x = [0.5, -1.0, 2.0, 0.3, -0.7, 1.1];
        let y = [1, 0, 1, 0, 1, 0];
        let base = fit_mle(&ds(&x, &y, 1), &FitSpec::default()).unwrap();
        let shifted = fit_mle(
            &ds(&x, &y, 1),
            &FitSpec {
                offsets: Some(vec![0.8; 6]),
                ..Default::default()
            },
        )
        .unwrap();
        assert!((shifted.theta_hat.alpha - (base.theta_hat.alpha - 0.8)).abs() < 1e-9);
        assert!((shifted.theta_hat.beta[0] - base.theta_hat.beta[0]).abs() < 1e-9);
    }

    #[test]
    fn unit_pi_reduces_to_mle() {
        let data = ds(&[0.5, -1.0, 2.0, 0.3, -0.7, 1.1], &[1, 0, 1, 0, 1, 0], 1);
        let sub = Subsample::full(data.clone());
        let mle = fit_mle(&data, &FitSpec::default()).unwrap();
        let ipw = fit_ipw(&sub, &SolverOptions::default()).unwrap();
        let lik = fit_lik(&sub, &SolverOptions::default()).unwrap();
        assert_eq!(mle.theta_hat, ipw.theta_hat);
        assert_eq!(mle.theta_hat, lik.theta_hat);
    }

    #[test]
    fn uniform_rate_shifts_intercept_by_log_rho() {
        let data = ds(&[0.5, -1.0, 2.0, 0.3, -0.7, 1.1], &[1, 0, 1, 0, 1, 0], 1);
        let sub = Subsample::from_inclusion(data.clone(), vec![1.0, 0.25, 1.0, 0.25, 1.0, 0.25])
            .unwrap();
        let plain = fit_mle(&data, &FitSpec::default()).unwrap();
        let lik = fit_lik(&sub, &SolverOptions::default()).unwrap();
        assert!((lik.theta_hat.alpha - (plain.theta_hat.alpha + 0.25f64.ln())).abs() < 1e-9);
        assert!((lik.theta_hat.beta[0] - plain.theta_hat.beta[0]).abs() < 1e-9);
    }

    #[test]
    fn bad_pi_is_contract_violation() {
        let data = ds(&[0.5, -1.0], &[1, 0], 1);
        let sub = Subsample {
            data,
            pi: vec![1.0, 0.0],
            neg_rate: vec![1.0, 0.0],
        };
        assert!(matches!(
            fit_ipw(&sub, &SolverOptions::default()),
            Err(Error::Contract(_))
        ));
        assert!(matches!(
            fit_lik(&sub, &SolverOptions::default()),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn nonconvergence_is_reported_not_raised() {
        let data = ds(&[0.5, -1.0, 2.0, 0.3, -0.7, 1.1], &[1, 0, 1, 0, 1, 0], 1);
        let spec = FitSpec {
            options: SolverOptions {
                max_iter: 1,
                ..Default::default()
            },
            ..Default::default()
        };
        let fit = fit_mle(&data, &spec).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.iterations, 1);
    }

    #[test]
    fn corrected_probability_at_unit_pi() {
        let th = Theta::new(-2.0, vec![0.5]).unwrap();
        let p = corrected_probability(&th, &[1.0], 1.0).unwrap();
        assert_eq!(p, sigmoid(-1.5));
        assert!(corrected_probability(&th, &[1.0], 0.0).is_err());
    }

    #[test]
    fn corrected_probability_identity() {
        // p(1 − p_π) = (1 − p)·π·p_π
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(20);
        for _ in 0..10_000 {
            let th = Theta::new(rng.random_range(-10.0..2.0), vec![rng.random_range(-2.0..2.0)]).unwrap();
            let x = [rng.random_range(-3.0..3.0)];
            let pi: f64 = rng.random_range(1e-6..1.0);
            let p = sigmoid(th.linear(&x));
            let pp = corrected_probability(&th, &x, pi).unwrap();
            let lhs = p * (1.0 - pp);
            let rhs = (1.0 - p) * pi * pp;
            assert!((lhs - rhs).abs() <= 1e-12);
        }
    }

    #[test]
    fn information_is_symmetric_psd() {
        let data = ds(&[0.5, -1.0, 2.0, 0.3, -0.7, 1.1, 0.0, 0.2], &[1, 0, 1, 0], 2);
        let info = information(&data, Some(&[1.0, 2.0, 0.5, 4.0]), Some(&[0.0, 1.0, -1.0, 3.0]), &Theta::new(0.3, vec![1.0, -1.0]).unwrap());
        assert_eq!(info, info.transpose());
        let eig = info.symmetric_eigen();
        assert!(eig.eigenvalues.iter().all(|&l| l >= -1e-12));
    }
}
