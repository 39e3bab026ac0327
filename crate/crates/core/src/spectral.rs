//! Shared DSP helpers: moments, FFT power spectra, band peaks, Welch PSD and
//! zero-phase Butterworth filtering.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population variance.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / xs.len() as f64
}

pub fn std_dev(xs: &[f64]) -> f64 {
    variance(xs).sqrt()
}

/// Pearson correlation; 0 when either side is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    if n == 0 {
        return 0.0;
    }
    let (a, b) = (&a[..n], &b[..n]);
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return 0.0;
    }
    (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
}

pub fn remove_mean(xs: &[f64]) -> Vec<f64> {
    let m = mean(xs);
    xs.iter().map(|v| v - m).collect()
}

/// Least-squares line removal.
pub fn detrend_linear(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let tm = (n - 1) as f64 / 2.0;
    let ym = mean(xs);
    let mut stt = 0.0;
    let mut sty = 0.0;
    for (i, y) in xs.iter().enumerate() {
        let dt = i as f64 - tm;
        stt += dt * dt;
        sty += dt * (y - ym);
    }
    let slope = sty / stt;
    xs.iter().enumerate().map(|(i, y)| y - ym - slope * (i as f64 - tm)).collect()
}

pub fn hann(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos()).collect()
}

/// One-sided power spectrum of `xs` zero-padded to `nfft` points.
/// Returns `(frequencies, power)` for bins `0..=nfft/2`.
pub fn power_spectrum(xs: &[f64], rate: f64, nfft: usize) -> (Vec<f64>, Vec<f64>) {
    let nfft = nfft.max(xs.len()).max(2);
    let mut buf: Vec<Complex<f64>> = xs.iter().map(|&v| Complex::new(v, 0.0)).collect();
    buf.resize(nfft, Complex::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(nfft).process(&mut buf);
    let half = nfft / 2;
    let freqs = (0..=half).map(|k| k as f64 * rate / nfft as f64).collect();
    let power = buf[..=half].iter().map(|c| c.norm_sqr()).collect();
    (freqs, power)
}

/// Welch PSD with a Hann window, 50% overlap and per-segment mean removal.
pub fn welch(xs: &[f64], rate: f64, nperseg: usize) -> (Vec<f64>, Vec<f64>) {
    let nperseg = nperseg.min(xs.len()).max(2);
    let step = (nperseg / 2).max(1);
    let win = hann(nperseg);
    let wss: f64 = win.iter().map(|w| w * w).sum();
    let half = nperseg / 2;
    let mut acc = vec![0.0; half + 1];
    let mut count = 0usize;
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(nperseg);
    let mut start = 0;
    while start + nperseg <= xs.len() {
        let seg = &xs[start..start + nperseg];
        let m = mean(seg);
        let mut buf: Vec<Complex<f64>> =
            seg.iter().zip(&win).map(|(v, w)| Complex::new((v - m) * w, 0.0)).collect();
        fft.process(&mut buf);
        for (a, c) in acc.iter_mut().zip(&buf[..=half]) {
            *a += c.norm_sqr();
        }
        count += 1;
        start += step;
    }
    let scale = 1.0 / (rate * wss * count.max(1) as f64);
    for (k, a) in acc.iter_mut().enumerate() {
        *a *= scale;
        if k != 0 && !(nperseg % 2 == 0 && k == half) {
            *a *= 2.0;
        }
    }
    let freqs = (0..=half).map(|k| k as f64 * rate / nperseg as f64).collect();
    (freqs, acc)
}

/// Sum of `power` over bins with `lo <= f <= hi`.
pub fn band_power(freqs: &[f64], power: &[f64], lo: f64, hi: f64) -> f64 {
    freqs.iter().zip(power).filter(|(f, _)| **f >= lo && **f <= hi).map(|(_, p)| p).sum()
}

/// Strongest bin of a band, refined by a parabola through its neighbours.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandPeak {
    pub bin: usize,
    /// Refined frequency in Hz.
    pub freq: f64,
    pub power: f64,
}

pub fn band_peak(freqs: &[f64], power: &[f64], lo: f64, hi: f64) -> Option<BandPeak> {
    let mut best: Option<usize> = None;
    for (k, (&f, &p)) in freqs.iter().zip(power).enumerate() {
        if f < lo || f > hi {
            continue;
        }
        // ties resolved towards the lower bin
        if best.map_or(true, |b| p > power[b]) {
            best = Some(k);
        }
    }
    let k = best?;
    if !(power[k] > 0.0) {
        return None;
    }
    let df = if freqs.len() > 1 { freqs[1] - freqs[0] } else { 0.0 };
    let mut offset = 0.0;
    if k > 0 && k + 1 < power.len() {
        let (a, b, c) = (power[k - 1], power[k], power[k + 1]);
        let denom = a - 2.0 * b + c;
        if denom < 0.0 {
            offset = (0.5 * (a - c) / denom).clamp(-0.5, 0.5);
        }
    }
    Some(BandPeak { bin: k, freq: freqs[k] + offset * df, power: power[k] })
}

/// Direct-form II transposed second-order section.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    /// `a[0]` is implicitly 1.
    pub a: [f64; 2],
}

impl Biquad {
    pub fn butter_lowpass(cutoff: f64, rate: f64) -> Self {
        let k = (PI * cutoff / rate).tan();
        let q = std::f64::consts::FRAC_1_SQRT_2;
        let norm = 1.0 / (1.0 + k / q + k * k);
        let b0 = k * k * norm;
        Self { b: [b0, 2.0 * b0, b0], a: [2.0 * (k * k - 1.0) * norm, (1.0 - k / q + k * k) * norm] }
    }

    pub fn butter_highpass(cutoff: f64, rate: f64) -> Self {
        let k = (PI * cutoff / rate).tan();
        let q = std::f64::consts::FRAC_1_SQRT_2;
        let norm = 1.0 / (1.0 + k / q + k * k);
        Self { b: [norm, -2.0 * norm, norm], a: [2.0 * (k * k - 1.0) * norm, (1.0 - k / q + k * k) * norm] }
    }

    pub fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// Filters in place, starting from the steady state for a constant input
    /// equal to the first sample.
    fn run(&self, xs: &mut [f64]) {
        let Some(&x0) = xs.first() else { return };
        let g = self.dc_gain();
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        let mut z2 = (b2 - a2 * g) * x0;
        let mut z1 = (b1 - a1 * g) * x0 + z2;
        for v in xs.iter_mut() {
            let x = *v;
            let y = b0 * x + z1;
            z1 = b1 * x - a1 * y + z2;
            z2 = b2 * x - a2 * y;
            *v = y;
        }
    }
}

/// Zero-phase (forward-backward) filtering through a cascade of sections,
/// with odd reflection padding of `pad` samples on each side.
pub fn filtfilt(sections: &[Biquad], xs: &[f64], pad: usize) -> Vec<f64> {
    let n = xs.len();
    if n == 0 {
        return Vec::new();
    }
    let pad = pad.min(n - 1);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * xs[0] - xs[i]));
    ext.extend_from_slice(xs);
    ext.extend((1..=pad).map(|i| 2.0 * xs[n - 1] - xs[n - 1 - i]));
    for s in sections {
        s.run(&mut ext);
    }
    ext.reverse();
    for s in sections {
        s.run(&mut ext);
    }
    ext.reverse();
    ext[pad..pad + n].to_vec()
}

/// Second-order Butterworth high-pass at `lo` followed by a second-order
/// low-pass at `hi`, applied forward and backward.
pub fn bandpass_zero_phase(xs: &[f64], rate: f64, lo: f64, hi: f64) -> Vec<f64> {
    let sections = [Biquad::butter_highpass(lo, rate), Biquad::butter_lowpass(hi, rate)];
    let pad = (3.0 * rate / lo).round() as usize;
    filtfilt(&sections, xs, pad)
}

/// Tone helper used by tests and the generator.
pub fn tone(freq: f64, rate: f64, n: usize, phase: f64) -> Vec<f64> {
    (0..n).map(|i| (2.0 * PI * freq * i as f64 / rate + phase).sin()).collect()
}
