//! Reference respiratory rate from a chest accelerometer: band-pass
//! preprocessing, per-axis spectral peak, and scalar Kalman fusion across
//! axes and windows.

use serde::{Deserialize, Serialize};

use crate::respir::RESP_BAND;
use crate::signal::TriaxialWindow;
use crate::spectral::{band_peak, bandpass_zero_phase, hann, power_spectrum, remove_mean};

/// Zero-padding factor applied before the peak search.
pub const PAD_FACTOR: usize = 8;
/// Rate reported by an axis with no usable spectrum, brpm.
pub const SENTINEL_RR: f64 = 17.0;
const CONFIDENCE_EPS: f64 = 1e-3;

/// Mean removal followed by a zero-phase 0.1-0.5 Hz band-pass on every axis.
pub fn preprocess_chest(window: &TriaxialWindow) -> TriaxialWindow {
    window.map_axes(|a| bandpass_zero_phase(&remove_mean(a), window.rate, RESP_BAND.0, RESP_BAND.1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisEstimate {
    /// Breaths per minute.
    pub rr: f64,
    /// Share of in-band power within the main lobe (two native bins either
    /// side) of the peak.
    pub confidence: f64,
    /// Set when the in-band spectrum was empty.
    pub flagged: bool,
}

/// Spectral-peak rate of one preprocessed axis.
pub fn rr_fft_axis(axis: &[f64], rate: f64) -> AxisEstimate {
    let unusable = AxisEstimate { rr: SENTINEL_RR, confidence: 0.0, flagged: true };
    if axis.len() < 2 {
        return unusable;
    }
    // The taper keeps band-pass start-up transients at the window edges from
    // pulling the peak towards the low cutoff.
    let tapered: Vec<f64> = axis.iter().zip(hann(axis.len())).map(|(v, w)| v * w).collect();
    let nfft = (axis.len() * PAD_FACTOR).next_power_of_two();
    let (freqs, power) = power_spectrum(&tapered, rate, nfft);
    let Some(peak) = band_peak(&freqs, &power, RESP_BAND.0, RESP_BAND.1) else {
        return unusable;
    };
    let native_bin = rate / axis.len() as f64;
    let mut in_band = 0.0;
    let mut lobe = 0.0;
    for (f, p) in freqs.iter().zip(&power) {
        if *f < RESP_BAND.0 || *f > RESP_BAND.1 {
            continue;
        }
        in_band += p;
        if (f - freqs[peak.bin]).abs() <= 2.0 * native_bin {
            lobe += p;
        }
    }
    if !(in_band > 0.0) {
        return unusable;
    }
    let rr = (60.0 * peak.freq).clamp(4.0, 60.0);
    AxisEstimate { rr, confidence: (lobe / in_band).clamp(0.0, 1.0), flagged: false }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KalmanParams {
    /// Process noise, brpm^2 per window.
    pub q: f64,
    /// Base measurement noise, brpm^2, divided by axis confidence.
    pub r0: f64,
}

impl Default for KalmanParams {
    fn default() -> Self {
        Self { q: 0.25, r0: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KalmanState {
    pub rr_mean: f64,
    pub rr_var: f64,
    pub q: f64,
    pub r0: f64,
    pub initialized: bool,
}

impl KalmanState {
    pub fn new(params: KalmanParams) -> Self {
        Self { rr_mean: f64::NAN, rr_var: f64::INFINITY, q: params.q, r0: params.r0, initialized: false }
    }

    /// In-band noise-to-peak power ratio scaled by `r0`: a frequency
    /// estimate's variance grows with the inverse SNR.
    fn measurement_noise(&self, confidence: f64) -> f64 {
        self.r0 * (1.0 - confidence + CONFIDENCE_EPS) / (confidence + CONFIDENCE_EPS)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fused {
    pub state: KalmanState,
    /// Posterior mean, or `None` when no window has carried information yet.
    pub rr: Option<f64>,
}

/// One window of fusion: random-walk predict, then a sequential update per
/// axis. An uninitialized filter starts from the precision-weighted mean of
/// the axes with the combined measurement variance.
pub fn kalman_fuse(state: KalmanState, estimates: &[AxisEstimate; 3]) -> Fused {
    let usable: Vec<&AxisEstimate> = estimates.iter().filter(|e| e.confidence > 0.0 && !e.flagged).collect();
    if usable.is_empty() {
        let rr = state.initialized.then_some(state.rr_mean);
        return Fused { state, rr };
    }
    let mut s = state;
    if !s.initialized {
        let precision: f64 = usable.iter().map(|e| 1.0 / s.measurement_noise(e.confidence)).sum();
        s.rr_mean = usable.iter().map(|e| e.rr / s.measurement_noise(e.confidence)).sum::<f64>() / precision;
        s.rr_var = 1.0 / precision;
        s.initialized = true;
        return Fused { state: s, rr: Some(s.rr_mean) };
    }
    s.rr_var += s.q;
    for e in usable {
        let r = s.measurement_noise(e.confidence);
        let gain = s.rr_var / (s.rr_var + r);
        s.rr_mean += gain * (e.rr - s.rr_mean);
        s.rr_var *= 1.0 - gain;
    }
    Fused { state: s, rr: Some(s.rr_mean) }
}

/// Per-window axis estimates and fused label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowLabel {
    pub axes: [AxisEstimate; 3],
    pub rr: Option<f64>,
    /// Mean axis confidence.
    pub confidence: f64,
}

/// Per-axis estimates of one chest window.
pub fn window_axes(w: &TriaxialWindow) -> [AxisEstimate; 3] {
    let pre = preprocess_chest(w);
    [rr_fft_axis(&pre.x, w.rate), rr_fft_axis(&pre.y, w.rate), rr_fft_axis(&pre.z, w.rate)]
}

/// Fuses per-window axis estimates of one recording in chronological order.
pub fn fuse_recording(axes: &[[AxisEstimate; 3]], params: KalmanParams) -> Vec<WindowLabel> {
    let mut state = KalmanState::new(params);
    axes.iter()
        .map(|axes| {
            let fused = kalman_fuse(state, axes);
            state = fused.state;
            let confidence = axes.iter().map(|a| a.confidence).sum::<f64>() / 3.0;
            WindowLabel { axes: *axes, rr: fused.rr, confidence }
        })
        .collect()
}

/// Runs the extractor over consecutive windows of one recording.
pub fn label_recording(windows: &[TriaxialWindow], params: KalmanParams) -> Vec<WindowLabel> {
    let axes: Vec<_> = windows.iter().map(window_axes).collect();
    fuse_recording(&axes, params)
}
