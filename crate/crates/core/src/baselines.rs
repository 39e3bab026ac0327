//! Classical comparator: PPG modulation-derived rate and wrist ACC
//! principal-axis rate, fused by spectral confidence.
//!
//! Within a 32 s window there is no breath history to run a time-domain
//! interval estimator on, so the PPG side takes spectral peaks of the three
//! modulation waveforms instead.

use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::groundtruth::{rr_fft_axis, AxisEstimate};
use crate::quality::detect_cardiac_cycles;
use crate::respir::RESP_BAND;
use crate::signal::TriaxialWindow;
use crate::spectral::{bandpass_zero_phase, detrend_linear};

pub const MIN_BEATS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineParams {
    /// Uniform rate of the modulation waveforms, Hz.
    pub modulation_rate: f64,
    /// Sides below this confidence are discarded.
    pub confidence_threshold: f64,
}

impl Default for BaselineParams {
    fn default() -> Self {
        Self { modulation_rate: 4.0, confidence_threshold: 0.3 }
    }
}

/// Beat-indexed respiratory surrogates, raw and as uniform detrended
/// waveforms.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulationSet {
    pub beat_times: Vec<f64>,
    pub am_beats: Vec<f64>,
    pub bw_beats: Vec<f64>,
    pub fm_beats: Vec<f64>,
    pub rate: f64,
    pub am: Vec<f64>,
    pub bw: Vec<f64>,
    pub fm: Vec<f64>,
}

/// Linear interpolation of `(times, values)` onto a uniform grid starting at
/// the first time.
fn resample_irregular(times: &[f64], values: &[f64], rate: f64) -> Vec<f64> {
    let (t0, t1) = (times[0], times[times.len() - 1]);
    let n = ((t1 - t0) * rate).floor() as usize + 1;
    let mut j = 0;
    (0..n)
        .map(|i| {
            let t = t0 + i as f64 / rate;
            while j + 2 < times.len() && times[j + 1] < t {
                j += 1;
            }
            let (ta, tb) = (times[j], times[j + 1]);
            let frac = if tb > ta { ((t - ta) / (tb - ta)).clamp(0.0, 1.0) } else { 0.0 };
            values[j] + (values[j + 1] - values[j]) * frac
        })
        .collect()
}

/// Per beat: amplitude (peak minus preceding trough), baseline intensity
/// (their mean) and the inter-beat interval. `None` below [`MIN_BEATS`].
pub fn extract_modulations(ppg: &[f64], rate: f64, params: BaselineParams) -> Option<ModulationSet> {
    let peaks = detect_cardiac_cycles(ppg, rate).ok()?;
    if peaks.len() < MIN_BEATS {
        return None;
    }
    let mut beat_times = Vec::with_capacity(peaks.len() - 1);
    let mut am = Vec::with_capacity(peaks.len() - 1);
    let mut bw = Vec::with_capacity(peaks.len() - 1);
    let mut fm = Vec::with_capacity(peaks.len() - 1);
    for w in peaks.windows(2) {
        let (prev, cur) = (w[0], w[1]);
        let trough = ppg[prev..=cur].iter().copied().fold(f64::INFINITY, f64::min);
        let peak = ppg[cur];
        beat_times.push(cur as f64 / rate);
        am.push(peak - trough);
        bw.push(0.5 * (peak + trough));
        fm.push((cur - prev) as f64 / rate);
    }
    if beat_times.len() < 2 || beat_times[beat_times.len() - 1] <= beat_times[0] {
        return None;
    }
    let r = params.modulation_rate;
    let wave = |v: &[f64]| detrend_linear(&resample_irregular(&beat_times, v, r));
    Some(ModulationSet {
        am: wave(&am),
        bw: wave(&bw),
        fm: wave(&fm),
        beat_times,
        am_beats: am,
        bw_beats: bw,
        fm_beats: fm,
        rate: r,
    })
}

/// Projection onto the top eigenvector of the channel covariance, signed so
/// that the largest-magnitude sample is positive. Falls back to the raw axis
/// with the largest variance when the leading direction is undefined (no
/// variance, or a tie between the two largest eigenvalues).
pub fn first_principal_axis(window: &TriaxialWindow) -> Vec<f64> {
    let n = window.len() as f64;
    let centered: Vec<Vec<f64>> = window
        .axes()
        .iter()
        .map(|a| {
            let m = a.iter().sum::<f64>() / n;
            a.iter().map(|v| v - m).collect()
        })
        .collect();
    let cov = Matrix3::from_fn(|i, j| centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum::<f64>() / n);
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let (l1, l2) = (eig.eigenvalues[order[0]], eig.eigenvalues[order[1]]);
    let projection: Vec<f64> = if l1 > 0.0 && (l1 - l2) > 1e-9 * l1 {
        let v = eig.eigenvectors.column(order[0]);
        (0..centered[0].len()).map(|t| (0..3).map(|c| v[c] * centered[c][t]).sum()).collect()
    } else {
        log::warn!("principal axis undefined; using the highest-variance raw axis");
        let best = (0..3).max_by(|&a, &b| cov[(a, a)].total_cmp(&cov[(b, b)])).unwrap_or(0);
        centered[best].clone()
    };
    let extreme = projection.iter().copied().fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
    if extreme < 0.0 {
        projection.into_iter().map(|v| -v).collect()
    } else {
        projection
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SideEstimate {
    pub rr: f64,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineEstimate {
    /// Fused rate, `None` when every side was low quality.
    pub rr: Option<f64>,
    pub quality: f64,
    pub ppg: Option<SideEstimate>,
    pub acc: SideEstimate,
}

fn median3(mut v: [f64; 3]) -> f64 {
    v.sort_by(f64::total_cmp);
    v[1]
}

pub fn ppg_side(ppg: &[f64], rate: f64, params: BaselineParams) -> Option<SideEstimate> {
    let m = extract_modulations(ppg, rate, params)?;
    let est: Vec<AxisEstimate> = [&m.am, &m.bw, &m.fm].iter().map(|w| rr_fft_axis(w, m.rate)).collect();
    Some(SideEstimate {
        rr: median3([est[0].rr, est[1].rr, est[2].rr]),
        confidence: est.iter().map(|e| e.confidence).sum::<f64>() / 3.0,
    })
}

pub fn acc_side(acc: &TriaxialWindow) -> SideEstimate {
    let axis = first_principal_axis(acc);
    let pre = bandpass_zero_phase(&axis, acc.rate, RESP_BAND.0, RESP_BAND.1);
    let e = rr_fft_axis(&pre, acc.rate);
    SideEstimate { rr: e.rr, confidence: e.confidence }
}

/// Confidence-weighted fusion of the sides that pass the threshold.
pub fn fuse(ppg: Option<SideEstimate>, acc: SideEstimate, params: BaselineParams) -> BaselineEstimate {
    let kept: Vec<SideEstimate> = ppg
        .into_iter()
        .chain(std::iter::once(acc))
        .filter(|s| s.confidence >= params.confidence_threshold && s.confidence > 0.0)
        .collect();
    let wsum: f64 = kept.iter().map(|s| s.confidence).sum();
    let (rr, quality) = if kept.is_empty() {
        (None, 0.0)
    } else {
        (
            Some(kept.iter().map(|s| s.confidence * s.rr).sum::<f64>() / wsum),
            kept.iter().map(|s| s.confidence * s.confidence).sum::<f64>() / wsum,
        )
    };
    BaselineEstimate { rr, quality, ppg, acc }
}

pub fn baseline_rr(ppg: &[f64], acc: &TriaxialWindow, params: BaselineParams) -> BaselineEstimate {
    fuse(ppg_side(ppg, acc.rate, params), acc_side(acc), params)
}
