//! PPG window quality gate: cardiac-cycle detection, five morphological and
//! spectral descriptors, and a one-class SVM trained on clean windows.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::metrics::{quantile_sorted, sorted};
use crate::ocsvm::{OneClassSvm, SolverOptions};
use crate::signal::{minmax_normalize, resample_linear, SampledSignal};
use crate::spectral::{band_power, pearson, welch};

/// Cardiac band used for the spectral ratio, Hz.
pub const CARDIAC_BAND: (f64, f64) = (0.6, 3.0);
/// Points each cycle is resampled to before template comparison.
pub const CYCLE_POINTS: usize = 100;
/// Minimum spacing between detected beats (180 bpm).
pub const REFRACTORY_S: f64 = 0.33;
/// Distance reported when no template can be built.
pub const FALLBACK_DISTANCE: f64 = 100.0;

const ROLLING_WINDOW_S: f64 = 1.5;
pub const MIN_TRAINING_WINDOWS: usize = 50;

/// Local maxima above a rolling `mean + 0.5 * std` threshold, thinned by a
/// refractory period that keeps the taller of two close candidates.
pub fn detect_cardiac_cycles(ppg: &[f64], rate: f64) -> Result<Vec<usize>> {
    if rate < 20.0 {
        return Err(invalid(format!("beat detection needs at least 20 Hz, got {rate}")));
    }
    if (ppg.len() as f64) < 5.0 * rate {
        return Err(invalid(format!("beat detection needs at least 5 s, got {} samples", ppg.len())));
    }
    let n = ppg.len();
    let half = ((ROLLING_WINDOW_S * rate) / 2.0).round() as usize;
    let mut prefix = vec![0.0; n + 1];
    let mut prefix_sq = vec![0.0; n + 1];
    for (i, v) in ppg.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v;
        prefix_sq[i + 1] = prefix_sq[i] + v * v;
    }
    let refractory = (REFRACTORY_S * rate).round() as usize;
    let mut peaks: Vec<usize> = Vec::new();
    for i in 1..n - 1 {
        let v = ppg[i];
        if !(v > ppg[i - 1] && v >= ppg[i + 1]) {
            continue;
        }
        let lo = i.saturating_sub(half);
        let hi = (i + half + 1).min(n);
        let cnt = (hi - lo) as f64;
        let m = (prefix[hi] - prefix[lo]) / cnt;
        let var = ((prefix_sq[hi] - prefix_sq[lo]) / cnt - m * m).max(0.0);
        if v <= m + 0.5 * var.sqrt() {
            continue;
        }
        match peaks.last_mut() {
            Some(last) if i - *last < refractory => {
                if v > ppg[*last] {
                    *last = i;
                }
            }
            _ => peaks.push(i),
        }
    }
    Ok(peaks)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityFeatures {
    /// Fraction of Welch power inside the cardiac band.
    pub psd_ratio: f64,
    /// Interquartile range of the normalized window.
    pub iqr: f64,
    /// Mean per-cycle mean-square amplitude.
    pub cycle_energy: f64,
    /// Mean Pearson correlation of cycles against the template.
    pub template_corr: f64,
    /// Mean Euclidean distance of cycles against the template.
    pub template_dist: f64,
    /// Set when fewer than three beats were found.
    pub fallback: bool,
}

impl QualityFeatures {
    pub fn to_vec(&self) -> Vec<f64> {
        vec![self.psd_ratio, self.iqr, self.cycle_energy, self.template_corr, self.template_dist]
    }
}

fn resample_cycle(cycle: &[f64]) -> Vec<f64> {
    // Treat the cycle as spanning [0, 1] and place CYCLE_POINTS knots on it.
    let src = SampledSignal { samples: cycle.to_vec(), rate: (cycle.len() - 1) as f64, start_time: 0.0 };
    let out = resample_linear(&src, (CYCLE_POINTS - 1) as f64).expect("cycle has at least two samples");
    let mut s = out.samples;
    s.resize(CYCLE_POINTS, *cycle.last().unwrap());
    s
}

pub fn extract_quality_features(ppg: &[f64], rate: f64) -> Result<QualityFeatures> {
    let x = minmax_normalize(ppg);
    let (freqs, psd) = welch(&x, rate, (8.0 * rate) as usize);
    let total: f64 = psd.iter().sum();
    let psd_ratio = if total > 0.0 {
        (band_power(&freqs, &psd, CARDIAC_BAND.0, CARDIAC_BAND.1) / total).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let s = sorted(&x);
    let iqr = quantile_sorted(&s, 0.75) - quantile_sorted(&s, 0.25);

    let peaks = detect_cardiac_cycles(&x, rate)?;
    let cycles: Vec<&[f64]> = peaks.windows(2).map(|w| &x[w[0]..=w[1]]).collect();
    if peaks.len() < 3 || cycles.len() < 2 {
        return Ok(QualityFeatures {
            psd_ratio,
            iqr,
            cycle_energy: 0.0,
            template_corr: -1.0,
            template_dist: FALLBACK_DISTANCE,
            fallback: true,
        });
    }
    let cycle_energy =
        cycles.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>() / c.len() as f64).sum::<f64>() / cycles.len() as f64;
    let shaped: Vec<Vec<f64>> = cycles.iter().map(|c| resample_cycle(c)).collect();
    let mut template = vec![0.0; CYCLE_POINTS];
    for c in &shaped {
        for (t, v) in template.iter_mut().zip(c) {
            *t += v;
        }
    }
    template.iter_mut().for_each(|t| *t /= shaped.len() as f64);
    let k = shaped.len() as f64;
    let template_corr = shaped.iter().map(|c| pearson(c, &template)).sum::<f64>() / k;
    let template_dist = shaped
        .iter()
        .map(|c| c.iter().zip(&template).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
        .sum::<f64>()
        / k;
    Ok(QualityFeatures { psd_ratio, iqr, cycle_energy, template_corr, template_dist, fallback: false })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityParams {
    pub nu: f64,
    pub gamma: f64,
}

impl Default for QualityParams {
    fn default() -> Self {
        Self { nu: 0.05, gamma: 0.05 }
    }
}

/// Trained gate. Features are standardized with the stored training
/// statistics before the kernel is evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityModel {
    pub gamma: f64,
    pub nu: f64,
    pub rho: f64,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    pub support_vectors: Vec<Vec<f64>>,
    pub coefficients: Vec<f64>,
    pub n_train: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub accept: bool,
    pub score: f64,
}

pub fn train_quality_model(features: &[QualityFeatures], params: QualityParams) -> Result<QualityModel> {
    let rows: Vec<Vec<f64>> = features.iter().map(QualityFeatures::to_vec).collect();
    if rows.len() < MIN_TRAINING_WINDOWS {
        return Err(Error::InvalidTrainingSet(format!(
            "need at least {MIN_TRAINING_WINDOWS} windows, got {}",
            rows.len()
        )));
    }
    if rows.iter().any(|r| r.iter().any(|v| !v.is_finite())) {
        return Err(Error::InvalidTrainingSet("non-finite feature values".into()));
    }
    let n = rows.len() as f64;
    let dims = rows[0].len();
    let means: Vec<f64> = (0..dims).map(|d| rows.iter().map(|r| r[d]).sum::<f64>() / n).collect();
    let sds: Vec<f64> = (0..dims)
        .map(|d| (rows.iter().map(|r| (r[d] - means[d]).powi(2)).sum::<f64>() / n).sqrt())
        .collect();
    if sds.iter().all(|&s| s <= 1e-12) {
        return Err(Error::InvalidTrainingSet("all training windows have identical features".into()));
    }
    let scales: Vec<f64> = sds.iter().map(|&s| if s > 1e-12 { s } else { 1.0 }).collect();
    let standardized: Vec<Vec<f64>> = rows.iter().map(|r| standardize_with(r, &means, &scales)).collect();
    let svm = OneClassSvm::fit(&standardized, params.nu, params.gamma, SolverOptions::default())?;
    Ok(QualityModel {
        gamma: svm.gamma,
        nu: svm.nu,
        rho: svm.rho,
        means,
        scales,
        support_vectors: svm.support_vectors,
        coefficients: svm.coefficients,
        n_train: rows.len(),
    })
}

fn standardize_with(row: &[f64], means: &[f64], scales: &[f64]) -> Vec<f64> {
    row.iter().zip(means).zip(scales).map(|((v, m), s)| (v - m) / s).collect()
}

impl QualityModel {
    pub fn standardize(&self, features: &QualityFeatures) -> Vec<f64> {
        standardize_with(&features.to_vec(), &self.means, &self.scales)
    }

    /// Decision value for an already standardized feature vector.
    pub fn score_standardized(&self, z: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.coefficients)
            .map(|(sv, a)| a * crate::ocsvm::rbf(self.gamma, sv, z))
            .sum::<f64>()
            - self.rho
    }

    pub fn assess(&self, features: &QualityFeatures) -> Verdict {
        let score = self.score_standardized(&self.standardize(features));
        Verdict { accept: score >= 0.0, score }
    }
}
