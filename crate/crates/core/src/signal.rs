//! Uniform signal containers, linear resampling, fixed-length windowing and
//! min-max normalization.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Model input rate in Hz.
pub const MODEL_RATE: f64 = 100.0;
/// Window length in seconds.
pub const WINDOW_SECONDS: f64 = 32.0;
/// Samples per channel in one model window.
pub const WINDOW_LEN: usize = 3200;

/// A uniformly sampled real-valued channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledSignal {
    pub samples: Vec<f64>,
    /// Samples per second.
    pub rate: f64,
    /// Offset of the first sample in seconds.
    #[serde(default)]
    pub start_time: f64,
}

impl SampledSignal {
    pub fn new(samples: Vec<f64>, rate: f64) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(invalid(format!("sample rate must be positive, got {rate}")));
        }
        Ok(Self { samples, rate, start_time: 0.0 })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Time span between the first and last sample.
    pub fn duration(&self) -> f64 {
        self.samples.len().saturating_sub(1) as f64 / self.rate
    }
}

/// Three aligned axes of an inertial sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct TriaxialWindow {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub rate: f64,
}

impl TriaxialWindow {
    pub fn new(x: Vec<f64>, y: Vec<f64>, z: Vec<f64>, rate: f64) -> Result<Self> {
        if x.len() != y.len() || x.len() != z.len() {
            return Err(invalid(format!(
                "axis lengths differ: {} / {} / {}",
                x.len(),
                y.len(),
                z.len()
            )));
        }
        if x.is_empty() {
            return Err(invalid("empty triaxial window"));
        }
        if !(rate > 0.0) {
            return Err(invalid(format!("sample rate must be positive, got {rate}")));
        }
        if x.iter().chain(&y).chain(&z).any(|v| !v.is_finite()) {
            return Err(invalid("triaxial window contains non-finite samples"));
        }
        Ok(Self { x, y, z, rate })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn axes(&self) -> [&[f64]; 3] {
        [&self.x, &self.y, &self.z]
    }

    pub fn map_axes(&self, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Self {
        Self { x: f(&self.x), y: f(&self.y), z: f(&self.z), rate: self.rate }
    }
}

/// One model example: PPG plus the two IMU respiration waveforms, all at
/// [`MODEL_RATE`] and normalized to [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentBundle {
    pub subject_id: String,
    pub segment_id: String,
    pub ppg: Vec<f32>,
    pub resp_acc: Vec<f32>,
    pub resp_gyr: Vec<f32>,
    /// Reference rate in breaths per minute, when known.
    pub label_rr: Option<f32>,
}

impl SegmentBundle {
    pub fn channels(&self) -> [&[f32]; 3] {
        [&self.ppg, &self.resp_acc, &self.resp_gyr]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, ch) in ["ppg", "resp_acc", "resp_gyr"].iter().zip(self.channels()) {
            if ch.len() != WINDOW_LEN {
                return Err(invalid(format!(
                    "segment {}: channel {name} has {} samples, expected {WINDOW_LEN}",
                    self.segment_id,
                    ch.len()
                )));
            }
            if ch.iter().any(|v| !v.is_finite() || v.abs() > 1.0 + 1e-6) {
                return Err(invalid(format!(
                    "segment {}: channel {name} is not normalized to [-1, 1]",
                    self.segment_id
                )));
            }
        }
        if let Some(rr) = self.label_rr {
            if !(4.0..=60.0).contains(&rr) {
                return Err(invalid(format!(
                    "segment {}: label {rr} brpm outside [4, 60]",
                    self.segment_id
                )));
            }
        }
        Ok(())
    }
}

/// Linear-interpolation resampling with samples treated as knots at
/// `t = i / rate`. The output has `round((n - 1) * target / rate) + 1`
/// samples.
pub fn resample_linear(signal: &SampledSignal, target_rate: f64) -> Result<SampledSignal> {
    if !(target_rate > 0.0 && target_rate.is_finite()) {
        return Err(invalid(format!("target rate must be positive, got {target_rate}")));
    }
    if !(signal.rate > 0.0) {
        return Err(invalid(format!("source rate must be positive, got {}", signal.rate)));
    }
    let n = signal.samples.len();
    if n < 2 {
        return Err(invalid(format!("resampling needs at least 2 samples, got {n}")));
    }
    let out_len = ((n - 1) as f64 * target_rate / signal.rate).round() as usize + 1;
    let xs = &signal.samples;
    let step = signal.rate / target_rate;
    let samples = (0..out_len)
        .map(|i| {
            let pos = i as f64 * step;
            let j = pos.floor() as usize;
            if j >= n - 1 {
                return xs[n - 1];
            }
            let frac = pos - j as f64;
            if frac == 0.0 {
                xs[j]
            } else {
                xs[j] + (xs[j + 1] - xs[j]) * frac
            }
        })
        .collect();
    Ok(SampledSignal { samples, rate: target_rate, start_time: signal.start_time })
}

/// Crop or edge-pad `samples` to exactly `len` values.
pub fn fit_length(samples: &[f64], len: usize) -> Vec<f64> {
    let mut out: Vec<f64> = samples.iter().copied().take(len).collect();
    let last = samples.last().copied().unwrap_or(0.0);
    out.resize(len, last);
    out
}

/// An aligned slice of every input channel.
#[derive(Debug, Clone, PartialEq)]
pub struct RawWindow {
    /// Index of the first sample in the source channels.
    pub offset: usize,
    pub channels: BTreeMap<String, Vec<f64>>,
}

fn common_layout(signals: &BTreeMap<String, SampledSignal>) -> Result<Option<(f64, usize)>> {
    let mut iter = signals.iter();
    let Some((_, first)) = iter.next() else {
        return Ok(None);
    };
    for (name, s) in iter {
        if s.rate != first.rate || s.len() != first.len() {
            return Err(invalid(format!(
                "channel {name} is not aligned ({} samples @ {} Hz vs {} @ {} Hz)",
                s.len(),
                s.rate,
                first.len(),
                first.rate
            )));
        }
    }
    Ok(Some((first.rate, first.len())))
}

fn samples_for(seconds: f64, rate: f64, what: &str) -> Result<usize> {
    let n = seconds * rate;
    if !(n >= 1.0) || (n - n.round()).abs() > 1e-9 {
        return Err(invalid(format!("{what} of {seconds} s is not a whole number of samples at {rate} Hz")));
    }
    Ok(n.round() as usize)
}

fn cut(signals: &BTreeMap<String, SampledSignal>, offset: usize, win: usize) -> RawWindow {
    let channels = signals
        .iter()
        .map(|(k, s)| (k.clone(), s.samples[offset..offset + win].to_vec()))
        .collect();
    RawWindow { offset, channels }
}

/// Fixed-stride windowing. Windows never extend past the end; recordings
/// shorter than one window yield nothing.
pub fn segment(
    signals: &BTreeMap<String, SampledSignal>,
    window_s: f64,
    stride_s: f64,
) -> Result<Vec<RawWindow>> {
    let Some((rate, len)) = common_layout(signals)? else {
        return Ok(Vec::new());
    };
    let win = samples_for(window_s, rate, "window")?;
    let stride = samples_for(stride_s, rate, "stride")?;
    if len < win {
        return Ok(Vec::new());
    }
    let count = (len - win) / stride + 1;
    Ok((0..count).map(|i| cut(signals, i * stride, win)).collect())
}

/// Draws `count` distinct window offsets uniformly from all valid positions,
/// returned in ascending order.
pub fn segment_random(
    signals: &BTreeMap<String, SampledSignal>,
    window_s: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<RawWindow>> {
    let Some((rate, len)) = common_layout(signals)? else {
        return Ok(Vec::new());
    };
    let win = samples_for(window_s, rate, "window")?;
    if len < win {
        return Ok(Vec::new());
    }
    let positions = len - win + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut offsets = index::sample(&mut rng, positions, count.min(positions)).into_vec();
    offsets.sort_unstable();
    Ok(offsets.into_iter().map(|o| cut(signals, o, win)).collect())
}

/// Maps the window onto [-1, 1]: min goes to -1 and max to +1. A flat
/// window becomes all zeros.
pub fn minmax_normalize(window: &[f64]) -> Vec<f64> {
    let (lo, hi) = window
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if window.is_empty() || !(hi > lo) {
        return vec![0.0; window.len()];
    }
    let span = hi - lo;
    window.iter().map(|&v| 2.0 * (v - lo) / span - 1.0).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sig(samples: Vec<f64>, rate: f64) -> SampledSignal {
        SampledSignal::new(samples, rate).unwrap()
    }

    #[test]
    fn resample_midpoint() {
        let out = resample_linear(&sig(vec![0.0, 2.0], 1.0), 2.0).unwrap();
        assert_eq!(out.samples, vec![0.0, 1.0, 2.0]);
        assert_eq!(out.rate, 2.0);
    }

    #[test]
    fn resample_wrist_window_length() {
        let s = sig(vec![0.5; 640], 20.0);
        let out = resample_linear(&s, 100.0).unwrap();
        assert_eq!(out.len(), 3196);
        assert!(out.samples.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn resample_rejects_bad_input() {
        assert!(resample_linear(&sig(vec![1.0], 10.0), 20.0).is_err());
        assert!(resample_linear(&sig(vec![1.0, 2.0], 10.0), 0.0).is_err());
        assert!(resample_linear(&sig(vec![1.0, 2.0], 10.0), -3.0).is_err());
        assert!(SampledSignal::new(vec![1.0, 2.0], 0.0).is_err());
    }

    #[test]
    fn resample_round_trip_low_frequency_sine() {
        let r1 = 100.0;
        let f = 1.0; // well under r1 / 8
        let xs: Vec<f64> = (0..3200).map(|i| (2.0 * std::f64::consts::PI * f * i as f64 / r1).sin()).collect();
        let s = sig(xs.clone(), r1);
        let back = resample_linear(&resample_linear(&s, 512.0).unwrap(), r1).unwrap();
        assert_eq!(back.len(), xs.len());
        let err = xs.iter().zip(&back.samples).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 0.01, "max error {err}");
    }

    fn channels(len: usize, rate: f64) -> BTreeMap<String, SampledSignal> {
        let mut m = BTreeMap::new();
        m.insert("a".to_string(), sig((0..len).map(|i| i as f64).collect(), rate));
        m.insert("b".to_string(), sig(vec![1.0; len], rate));
        m
    }

    #[test]
    fn segment_counts() {
        assert_eq!(segment(&channels(12000, 100.0), 32.0, 32.0).unwrap().len(), 3);
        assert_eq!(segment(&channels(3200, 100.0), 32.0, 32.0).unwrap().len(), 1);
        assert_eq!(segment(&channels(3100, 100.0), 32.0, 32.0).unwrap().len(), 0);
        let w = segment(&channels(12000, 100.0), 32.0, 32.0).unwrap();
        assert!(w.iter().all(|w| w.channels["a"].len() == 3200));
        assert_eq!(w[2].channels["a"][0], 6400.0);
    }

    #[test]
    fn segment_rejects_misaligned_channels() {
        let mut m = channels(4000, 100.0);
        m.insert("c".to_string(), sig(vec![0.0; 3999], 100.0));
        assert!(segment(&m, 32.0, 32.0).is_err());
        assert!(segment(&channels(4000, 100.0), 32.005, 32.0).is_err());
    }

    #[test]
    fn random_offsets_are_seeded_and_valid() {
        let m = channels(10_000, 100.0);
        let a = segment_random(&m, 32.0, 5, 7).unwrap();
        let b = segment_random(&m, 32.0, 5, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 5);
        assert!(a.iter().all(|w| w.offset + 3200 <= 10_000));
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(minmax_normalize(&[0.0, 5.0, 10.0]), vec![-1.0, 0.0, 1.0]);
        assert_eq!(minmax_normalize(&[-3.0, -3.0, -3.0]), vec![0.0, 0.0, 0.0]);
        assert_eq!(minmax_normalize(&[1.0, 2.0]), vec![-1.0, 1.0]);
    }

    #[test]
    fn fit_length_pads_and_crops() {
        assert_eq!(fit_length(&[1.0, 2.0], 4), vec![1.0, 2.0, 2.0, 2.0]);
        assert_eq!(fit_length(&[1.0, 2.0, 3.0], 2), vec![1.0, 2.0]);
    }

    proptest! {
        #[test]
        fn resample_identity(xs in prop::collection::vec(-1e3f64..1e3, 2..200), rate in 1.0f64..600.0) {
            let s = sig(xs.clone(), rate);
            let out = resample_linear(&s, rate).unwrap();
            prop_assert_eq!(out.samples.len(), xs.len());
            for (a, b) in xs.iter().zip(&out.samples) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn resample_stays_between_knots(xs in prop::collection::vec(-10f64..10.0, 2..100), r2 in 1.0f64..50.0) {
            let s = sig(xs.clone(), 7.0);
            let out = resample_linear(&s, r2).unwrap();
            prop_assert_eq!(out.len(), ((xs.len() - 1) as f64 * r2 / 7.0).round() as usize + 1);
            for (i, v) in out.samples.iter().enumerate() {
                let pos = (i as f64 * 7.0 / r2).min((xs.len() - 1) as f64);
                let j = (pos.floor() as usize).min(xs.len() - 2);
                let (lo, hi) = if xs[j] < xs[j + 1] { (xs[j], xs[j + 1]) } else { (xs[j + 1], xs[j]) };
                prop_assert!(*v >= lo - 1e-12 && *v <= hi + 1e-12);
            }
        }

        #[test]
        fn normalize_idempotent(xs in prop::collection::vec(-1e4f64..1e4, 1..300)) {
            let once = minmax_normalize(&xs);
            let twice = minmax_normalize(&once);
            prop_assert!(once.iter().all(|v| (-1.0..=1.0).contains(v)));
            for (a, b) in once.iter().zip(&twice) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn windows_disjoint_and_within_input(len in 0usize..20_000) {
            let w = segment(&channels(len, 100.0), 32.0, 32.0).unwrap();
            let expected = if len < 3200 { 0 } else { (len - 3200) / 3200 + 1 };
            prop_assert_eq!(w.len(), expected);
            for pair in w.windows(2) {
                prop_assert!(pair[0].offset + 3200 <= pair[1].offset);
            }
            if let Some(last) = w.last() {
                prop_assert!(last.offset + 3200 <= len);
            }
        }
    }
}
