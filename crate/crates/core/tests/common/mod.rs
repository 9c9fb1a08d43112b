//! Independent oracles shared by the integration targets. Nothing here calls
//! into the solver or the variance code.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// `log(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// A tiny weighted, offset logistic problem in row-major layout.
#[derive(Debug, Clone)]
pub struct Problem {
    pub x: Vec<f64>,
    pub y: Vec<u8>,
    pub d: usize,
    pub w: Vec<f64>,
    pub l: Vec<f64>,
}

impl Problem {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// `Σ wᵢ[yᵢ(gᵢ + lᵢ) − log(1 + e^{gᵢ+lᵢ})]` with `θ = (α, β)`.
    pub fn loglik(&self, theta: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n() {
            let mut g = theta[0] + self.l[i];
            for j in 0..self.d {
                g += theta[1 + j] * self.x[i * self.d + j];
            }
            s += self.w[i] * (f64::from(self.y[i]) * g - softplus(g));
        }
        s
    }
}

/// Coarse grid over `[-box, box]^k` followed by a compass search. Returns
/// `None` when the search leaves `4·box`, i.e. the maximum is not attained.
pub fn grid_polish(p: &Problem, half_width: f64, step: f64) -> Option<Vec<f64>> {
    let k = p.d + 1;
    let per_axis = (2.0 * half_width / step).round() as usize + 1;
    let mut best = vec![0.0; k];
    let mut best_v = f64::NEG_INFINITY;
    let mut idx = vec![0usize; k];
    let mut theta = vec![0.0; k];
    loop {
        for j in 0..k {
            theta[j] = -half_width + step * idx[j] as f64;
        }
        let v = p.loglik(&theta);
        if v > best_v {
            best_v = v;
            best.clone_from(&theta);
        }
        let mut j = 0;
        while j < k {
            idx[j] += 1;
            if idx[j] < per_axis {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
        if j == k {
            break;
        }
    }

    let mut h = step;
    let mut evals = 0usize;
    while h > 1e-11 && evals < 2_000_000 {
        let mut moved = false;
        for j in 0..k {
            for sign in [1.0, -1.0] {
                let mut t = best.clone();
                t[j] += sign * h;
                let v = p.loglik(&t);
                evals += 1;
                if v > best_v {
                    best_v = v;
                    best = t;
                    moved = true;
                }
            }
        }
        if best.iter().any(|b| b.abs() > 4.0 * half_width) {
            return None;
        }
        if !moved {
            h *= 0.5;
        }
    }
    Some(best)
}

/// Random non-degenerate instance with `n ≤ 8`, `d ≤ 2` and both classes.
pub fn random_problem(rng: &mut ChaCha8Rng) -> Problem {
    loop {
        let d = rng.random_range(1..=2);
        let n = rng.random_range(4..=8);
        let x: Vec<f64> = (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.5))).collect();
        if y.iter().all(|&v| v == y[0]) {
            continue;
        }
        return Problem {
            x,
            y,
            d,
            w: vec![1.0; n],
            l: vec![0.0; n],
        };
    }
}
