//! One-class support vector machine with an RBF kernel, solved by
//! sequential minimal optimisation over maximal violating pairs.
//!
//! Dual problem, with `C = 1 / (nu * n)`:
//!
//! ```text
//! min_a  0.5 * a' K a     s.t.  0 <= a_i <= C,  sum(a) = 1
//! ```
//!
//! The decision function is `f(x) = sum_i a_i k(x_i, x) - rho`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn rbf(gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneClassSvm {
    pub gamma: f64,
    pub nu: f64,
    pub rho: f64,
    pub support_vectors: Vec<Vec<f64>>,
    pub coefficients: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tolerance: 1e-4, max_iter: 1_000_000 }
    }
}

impl OneClassSvm {
    pub fn fit(points: &[Vec<f64>], nu: f64, gamma: f64, opts: SolverOptions) -> Result<Self> {
        let n = points.len();
        if !(nu > 0.0 && nu <= 1.0) {
            return Err(Error::InvalidArgument(format!("nu must lie in (0, 1], got {nu}")));
        }
        if !(gamma > 0.0) {
            return Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")));
        }
        if n == 0 {
            return Err(Error::InvalidTrainingSet("no training points".into()));
        }
        let kernel: Vec<Vec<f64>> =
            points.iter().map(|a| points.iter().map(|b| rbf(gamma, a, b)).collect()).collect();

        let c = 1.0 / (nu * n as f64);
        // Feasible start: fill the first floor(nu * n) coefficients to the box
        // bound and put the remainder on the next one.
        let mut alpha = vec![0.0; n];
        let mut left: f64 = 1.0;
        for a in alpha.iter_mut() {
            let take = left.min(c);
            *a = take;
            left -= take;
            if left <= 0.0 {
                break;
            }
        }
        let mut grad: Vec<f64> =
            (0..n).map(|i| (0..n).map(|j| kernel[i][j] * alpha[j]).sum()).collect();

        let bound_eps = 1e-12 * c;
        let at_upper = |a: f64| a >= c - bound_eps;
        let at_lower = |a: f64| a <= bound_eps;

        let mut iter = 0;
        loop {
            // i: can grow, smallest gradient. j: can shrink, largest gradient.
            let mut i_sel = None;
            let mut j_sel = None;
            for k in 0..n {
                if !at_upper(alpha[k]) && i_sel.map_or(true, |i: usize| grad[k] < grad[i]) {
                    i_sel = Some(k);
                }
                if !at_lower(alpha[k]) && j_sel.map_or(true, |j: usize| grad[k] > grad[j]) {
                    j_sel = Some(k);
                }
            }
            let (Some(i), Some(j)) = (i_sel, j_sel) else { break };
            if grad[j] - grad[i] < opts.tolerance || iter >= opts.max_iter {
                if iter >= opts.max_iter {
                    log::warn!("one-class SVM stopped at the iteration cap ({iter})");
                }
                break;
            }
            let curvature = (kernel[i][i] + kernel[j][j] - 2.0 * kernel[i][j]).max(1e-12);
            let mut delta = (grad[j] - grad[i]) / curvature;
            delta = delta.min(c - alpha[i]).min(alpha[j]);
            alpha[i] += delta;
            alpha[j] -= delta;
            for (k, g) in grad.iter_mut().enumerate() {
                *g += delta * (kernel[k][i] - kernel[k][j]);
            }
            iter += 1;
        }

        let free: Vec<f64> = (0..n)
            .filter(|&k| !at_upper(alpha[k]) && !at_lower(alpha[k]))
            .map(|k| grad[k])
            .collect();
        let rho = if !free.is_empty() {
            free.iter().sum::<f64>() / free.len() as f64
        } else {
            let lower = (0..n).filter(|&k| at_upper(alpha[k])).map(|k| grad[k]).fold(f64::NEG_INFINITY, f64::max);
            let upper = (0..n).filter(|&k| at_lower(alpha[k])).map(|k| grad[k]).fold(f64::INFINITY, f64::min);
            match (lower.is_finite(), upper.is_finite()) {
                (true, true) => 0.5 * (lower + upper),
                (true, false) => lower,
                (false, true) => upper,
                (false, false) => 0.0,
            }
        };

        let mut support_vectors = Vec::new();
        let mut coefficients = Vec::new();
        for k in 0..n {
            if alpha[k] > 0.0 {
                support_vectors.push(points[k].clone());
                coefficients.push(alpha[k]);
            }
        }
        Ok(Self { gamma, nu, rho, support_vectors, coefficients })
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.coefficients)
            .map(|(sv, a)| a * rbf(self.gamma, sv, x))
            .sum::<f64>()
            - self.rho
    }

    pub fn upper_bound(&self, n_train: usize) -> f64 {
        1.0 / (self.nu * n_train as f64)
    }
}
