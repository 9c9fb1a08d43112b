//! Binary-response log-odds models.
//!
//! The working model is linear logistic, `g(x; θ) = α + xᵀβ`. A scaled
//! two-layer tanh model exists only to synthesize misspecified data.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Intercept plus coefficient vector of a log-odds model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    pub alpha: f64,
    pub beta: Vec<f64>,
}

impl Theta {
    pub fn new(alpha: f64, beta: Vec<f64>) -> Result<Self> {
        let theta = Theta { alpha, beta };
        theta.validate()?;
        Ok(theta)
    }

    pub fn zeros(d: usize) -> Self {
        Theta {
            alpha: 0.0,
            beta: vec![0.0; d],
        }
    }

    /// Feature dimension `d` (the parameter vector has `d + 1` entries).
    pub fn dim(&self) -> usize {
        self.beta.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !self.alpha.is_finite() || self.beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::Contract("theta has non-finite entries".into()));
        }
        Ok(())
    }

    /// Stacked `(α, β₁, …, β_d)`.
    pub fn to_vector(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.dim() + 1);
        v[0] = self.alpha;
        for (j, b) in self.beta.iter().enumerate() {
            v[j + 1] = *b;
        }
        v
    }

    pub fn from_vector(v: &DVector<f64>) -> Self {
        Theta {
            alpha: v[0],
            beta: v.iter().skip(1).copied().collect(),
        }
    }

    pub fn norm(&self) -> f64 {
        (self.alpha * self.alpha + self.beta.iter().map(|b| b * b).sum::<f64>()).sqrt()
    }

    pub fn squared_distance(&self, other: &Theta) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        let da = self.alpha - other.alpha;
        da * da
            + self
                .beta
                .iter()
                .zip(&other.beta)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
    }

    /// Linear predictor `α + xᵀβ`. Caller guarantees `x.len() == d`.
    #[inline]
    pub fn linear(&self, x: &[f64]) -> f64 {
        self.alpha + dot(&self.beta, x)
    }

    /// `f(x; β) = xᵀβ`, the non-intercept part of the log odds.
    #[inline]
    pub fn slope_part(&self, x: &[f64]) -> f64 {
        dot(&self.beta, x)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

/// Log-odds model family.
#[derive(Debug, Clone, PartialEq)]
pub enum LogOddsModel {
    Linear,
    /// `α + (1/ξ)·tanh(ξ·xᵀW)β`, generation only.
    TanhTwoLayer { xi: f64, w: DMatrix<f64> },
}

impl LogOddsModel {
    pub fn tanh_two_layer(xi: f64, w: DMatrix<f64>) -> Result<Self> {
        if !(xi > 0.0 && xi.is_finite()) {
            return Err(Error::Config(format!("tanh scale must be positive, got {xi}")));
        }
        if !w.is_square() {
            return Err(Error::Config("mixing matrix must be square".into()));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("mixing matrix has non-finite entries".into()));
        }
        Ok(LogOddsModel::TanhTwoLayer { xi, w })
    }

    pub fn log_odds(&self, theta: &Theta, x: &[f64]) -> Result<f64> {
        check_dim(theta.dim(), x.len())?;
        match self {
            LogOddsModel::Linear => Ok(theta.linear(x)),
            LogOddsModel::TanhTwoLayer { xi, w } => {
                check_dim(w.nrows(), x.len())?;
                Ok(theta.alpha + tanh_part(*xi, w, &theta.beta, x))
            }
        }
    }

    pub fn probability(&self, theta: &Theta, x: &[f64]) -> Result<f64> {
        self.log_odds(theta, x).map(sigmoid)
    }

    /// Gradient of the log odds with respect to `(α, β)`.
    pub fn grad_log_odds(&self, theta: &Theta, x: &[f64]) -> Result<DVector<f64>> {
        check_dim(theta.dim(), x.len())?;
        match self {
            LogOddsModel::Linear => Ok(grad_linear(x)),
            LogOddsModel::TanhTwoLayer { .. } => Err(Error::Unsupported(
                "gradient of the tanh generator; fitting uses the linear model".into(),
            )),
        }
    }
}

fn tanh_part(xi: f64, w: &DMatrix<f64>, beta: &[f64], x: &[f64]) -> f64 {
    let d = x.len();
    let mut acc = 0.0;
    for j in 0..d {
        let mut h = 0.0;
        for (k, xk) in x.iter().enumerate() {
            h += xk * w[(k, j)];
        }
        acc += (xi * h).tanh() * beta[j];
    }
    acc / xi
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// `(1, xᵀ)ᵀ`.
#[inline]
pub fn grad_linear(x: &[f64]) -> DVector<f64> {
    let mut g = DVector::zeros(x.len() + 1);
    g[0] = 1.0;
    for (j, v) in x.iter().enumerate() {
        g[j + 1] = *v;
    }
    g
}

/// Logistic function, branch-stable for large `|g|`.
#[inline]
pub fn sigmoid(g: f64) -> f64 {
    if g >= 0.0 {
        1.0 / (1.0 + (-g).exp())
    } else {
        let e = g.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^g)` without overflow.
#[inline]
pub fn log1p_exp(g: f64) -> f64 {
    if g > 0.0 {
        g + (-g).exp().ln_1p()
    } else {
        g.exp().ln_1p()
    }
}

/// The full population: dense row-major features and binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Vec<f64>,
    y: Vec<u8>,
    d: usize,
    n1: usize,
}

impl Dataset {
    /// Builds a dataset from row-major features. Requires at least one positive.
    pub fn new(x: Vec<f64>, y: Vec<u8>, d: usize) -> Result<Self> {
        let ds = Self::new_unchecked_classes(x, y, d)?;
        if ds.n1 == 0 {
            return Err(Error::Degenerate("dataset has no positive records".into()));
        }
        Ok(ds)
    }

    /// Same as [`Dataset::new`] but allows a single class (used for raw
    /// files and subsamples that are validated later).
    pub fn new_unchecked_classes(x: Vec<f64>, y: Vec<u8>, d: usize) -> Result<Self> {
        if d == 0 && !x.is_empty() {
            return Err(Error::Config("feature dimension must be positive".into()));
        }
        if x.len() != y.len() * d {
            return Err(Error::DimensionMismatch {
                expected: y.len() * d,
                got: x.len(),
            });
        }
        if let Some(bad) = y.iter().find(|&&v| v > 1) {
            return Err(Error::Contract(format!("label {bad} is not binary")));
        }
        let n1 = y.iter().filter(|&&v| v == 1).count();
        Ok(Dataset { x, y, d, n1 })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n0(&self) -> usize {
        self.y.len() - self.n1
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    #[inline]
    pub fn label(&self, i: usize) -> u8 {
        self.y[i]
    }

    pub fn labels(&self) -> &[u8] {
        &self.y
    }

    pub fn features(&self) -> &[f64] {
        &self.x
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], u8)> + '_ {
        self.x.chunks_exact(self.d.max(1)).zip(self.y.iter().copied())
    }

    /// Records at the given indices, in order.
    pub fn select(&self, idx: &[usize]) -> Dataset {
        let mut x = Vec::with_capacity(idx.len() * self.d);
        let mut y = Vec::with_capacity(idx.len());
        for &i in idx {
            x.extend_from_slice(self.row(i));
            y.push(self.y[i]);
        }
        let n1 = y.iter().filter(|&&v| v == 1).count();
        Dataset { x, y, d: self.d, n1 }
    }
}
