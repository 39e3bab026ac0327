//! Respiration waveform extraction from triaxial IMU windows with FastICA
//! (tanh contrast, symmetric decorrelation) and respiratory-band selection.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::signal::{minmax_normalize, TriaxialWindow};
use crate::spectral::{band_power, power_spectrum};

/// Respiratory band, Hz (6 to 30 breaths per minute).
pub const RESP_BAND: (f64, f64) = (0.1, 0.5);
/// Below this in-band power fraction a selection is low-confidence.
pub const LOW_CONFIDENCE_FRACTION: f64 = 0.05;
const MAX_CONDITION: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcaOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for IcaOptions {
    fn default() -> Self {
        Self { max_iter: 200, tol: 1e-6, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcaResult {
    /// Orthogonal unmixing matrix acting on whitened data (`rank x rank`).
    pub unmixing: Vec<Vec<f64>>,
    /// Whitening matrix (`rank x 3`).
    pub whitening: Vec<Vec<f64>>,
    /// Independent components, zero-mean and unit-variance.
    pub components: Vec<Vec<f64>>,
    pub selected_index: usize,
    pub band_power_fractions: Vec<f64>,
    pub rate: f64,
    pub rank: usize,
    pub converged: bool,
    pub iterations: usize,
}

impl IcaResult {
    pub fn rank_deficient(&self) -> bool {
        self.rank < 3
    }
}

/// Fraction of non-DC power inside [`RESP_BAND`].
pub fn resp_band_fraction(xs: &[f64], rate: f64) -> f64 {
    let (f, p) = power_spectrum(xs, rate, xs.len());
    let total: f64 = p.iter().skip(1).sum();
    if total <= 0.0 {
        return 0.0;
    }
    (band_power(&f, &p, RESP_BAND.0, RESP_BAND.1) / total).clamp(0.0, 1.0)
}

fn symmetric_decorrelate(w: &DMatrix<f64>) -> DMatrix<f64> {
    let wwt = w * w.transpose();
    let eig = SymmetricEigen::new(wwt);
    let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.max(1e-300).sqrt()));
    &eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose() * w
}

pub fn fastica(window: &TriaxialWindow, opts: IcaOptions) -> Result<IcaResult> {
    let n = window.len();
    if n < 3 {
        return Err(invalid("ICA needs at least three samples per axis"));
    }
    let axes = window.axes();
    let centered: Vec<Vec<f64>> = axes
        .iter()
        .map(|a| {
            let m = a.iter().sum::<f64>() / n as f64;
            a.iter().map(|v| v - m).collect()
        })
        .collect();
    let mut cov = DMatrix::<f64>::zeros(3, 3);
    for i in 0..3 {
        for j in i..3 {
            let c = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum::<f64>() / n as f64;
            cov[(i, j)] = c;
            cov[(j, i)] = c;
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]];
    if !(top > 0.0) {
        return Err(invalid("ICA input has no variance"));
    }
    let kept: Vec<usize> = order.into_iter().filter(|&k| eig.eigenvalues[k] > top / MAX_CONDITION).collect();
    let rank = kept.len();
    if rank < 3 {
        log::warn!("ICA input covariance has rank {rank}; separating {rank} component(s)");
    }
    let whitening: Vec<Vec<f64>> = kept
        .iter()
        .map(|&k| {
            let scale = 1.0 / eig.eigenvalues[k].sqrt();
            (0..3).map(|c| eig.eigenvectors[(c, k)] * scale).collect()
        })
        .collect();
    let z: Vec<Vec<f64>> = whitening
        .iter()
        .map(|row| (0..n).map(|t| (0..3).map(|c| row[c] * centered[c][t]).sum()).collect())
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let init = DMatrix::from_fn(rank, rank, |_, _| StandardNormal.sample(&mut rng));
    let mut w = symmetric_decorrelate(&init);
    let mut converged = false;
    let mut iterations = 0;
    let mut g = vec![0.0; n];
    while iterations < opts.max_iter {
        iterations += 1;
        let mut next = DMatrix::<f64>::zeros(rank, rank);
        for i in 0..rank {
            let mut mean_dg = 0.0;
            for (t, gt) in g.iter_mut().enumerate() {
                let u: f64 = (0..rank).map(|k| w[(i, k)] * z[k][t]).sum();
                let th = u.tanh();
                *gt = th;
                mean_dg += 1.0 - th * th;
            }
            mean_dg /= n as f64;
            for k in 0..rank {
                let egz = g.iter().zip(&z[k]).map(|(a, b)| a * b).sum::<f64>() / n as f64;
                next[(i, k)] = egz - mean_dg * w[(i, k)];
            }
        }
        let next = symmetric_decorrelate(&next);
        let change = (0..rank)
            .map(|i| {
                let dot: f64 = (0..rank).map(|k| next[(i, k)] * w[(i, k)]).sum();
                (dot.abs() - 1.0).abs()
            })
            .fold(0.0, f64::max);
        w = next;
        if change < opts.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::debug!("FastICA did not converge in {} iterations", opts.max_iter);
    }

    let components: Vec<Vec<f64>> = (0..rank)
        .map(|i| (0..n).map(|t| (0..rank).map(|k| w[(i, k)] * z[k][t]).sum()).collect())
        .collect();
    let band_power_fractions: Vec<f64> = components.iter().map(|c| resp_band_fraction(c, window.rate)).collect();
    let mut selected_index = 0;
    for (i, f) in band_power_fractions.iter().enumerate() {
        if *f > band_power_fractions[selected_index] {
            selected_index = i;
        }
    }
    let unmixing = (0..rank).map(|i| (0..rank).map(|k| w[(i, k)]).collect()).collect();
    Ok(IcaResult {
        unmixing,
        whitening,
        components,
        selected_index,
        band_power_fractions,
        rate: window.rate,
        rank,
        converged,
        iterations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RespiratoryComponent {
    /// Selected component scaled to [-1, 1].
    pub samples: Vec<f64>,
    pub index: usize,
    pub band_fraction: f64,
    pub low_confidence: bool,
}

/// Picks the component with the largest respiratory-band power fraction
/// (lowest index on ties) and min-max normalizes it.
pub fn select_respiratory_component(result: &IcaResult) -> RespiratoryComponent {
    let index = result.selected_index;
    let band_fraction = result.band_power_fractions[index];
    RespiratoryComponent {
        samples: minmax_normalize(&result.components[index]),
        index,
        band_fraction,
        low_confidence: result.band_power_fractions.iter().all(|&f| f < LOW_CONFIDENCE_FRACTION),
    }
}

/// ICA followed by selection.
pub fn extract_respiration(window: &TriaxialWindow, opts: IcaOptions) -> Result<RespiratoryComponent> {
    Ok(select_respiratory_component(&fastica(window, opts)?))
}
