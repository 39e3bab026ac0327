//! Seeded generator of wrist PPG/ACC/GYR and chest ACC recordings with known
//! respiratory rate, heart rate, modulation depths and motion corruption.
//!
//! PPG is a train of two-Gaussian pulses whose instantaneous rate, amplitude
//! and baseline are modulated by the breathing tone. The IMU channels are
//! per-axis mixtures of the breathing tone, a ballistocardiographic pulse
//! component, white noise and optional 3-8 Hz motion chirps. The chest
//! accelerometer carries the breathing tone dominantly on one axis.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Native wrist sampling rate, Hz.
pub const WRIST_RATE: f64 = 20.0;
/// Native chest sampling rate, Hz.
pub const CHEST_RATE: f64 = 512.0;

const SLOT_S: f64 = 4.0;
const TRUTH_WINDOW_S: f64 = 32.0;

fn default_duration() -> f64 {
    34.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    /// Breaths per minute, in [6, 30].
    pub rr: f64,
    /// Beats per minute, in [40, 180].
    pub hr: f64,
    pub am_depth: f64,
    pub bw_depth: f64,
    pub fm_depth: f64,
    pub noise_std: f64,
    /// Per 4-second slot probability of a motion burst.
    pub motion_burst_prob: f64,
    pub imu_resp_gain: f64,
    pub seed: u64,
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    /// Relative slow wander of the breathing rate within a segment.
    #[serde(default)]
    pub rr_jitter: f64,
    /// Amplitude of the ~0.1 Hz vasomotor oscillation in the PPG baseline.
    #[serde(default)]
    pub mayer_amp: f64,
    /// Amplitude of low-frequency postural drift on each IMU axis.
    #[serde(default)]
    pub drift_std: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            rr: 15.0,
            hr: 72.0,
            am_depth: 0.2,
            bw_depth: 0.1,
            fm_depth: 0.05,
            noise_std: 0.05,
            motion_burst_prob: 0.0,
            imu_resp_gain: 1.0,
            seed: 0,
            duration_s: default_duration(),
            rr_jitter: 0.0,
            mayer_amp: 0.0,
            drift_std: 0.0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, what: &str| if ok { Ok(()) } else { Err(invalid(format!("synth spec: {what}"))) };
        check((6.0..=30.0).contains(&self.rr), "rr must lie in [6, 30] brpm")?;
        check((40.0..=180.0).contains(&self.hr), "hr must lie in [40, 180] bpm")?;
        for (v, name) in [(self.am_depth, "am_depth"), (self.bw_depth, "bw_depth"), (self.fm_depth, "fm_depth")] {
            check((0.0..=0.5).contains(&v), &format!("{name} must lie in [0, 0.5]"))?;
        }
        check(self.noise_std >= 0.0, "noise_std must be non-negative")?;
        check((0.0..=1.0).contains(&self.motion_burst_prob), "motion_burst_prob must lie in [0, 1]")?;
        check(self.imu_resp_gain >= 0.0, "imu_resp_gain must be non-negative")?;
        check(self.duration_s >= 5.0 && self.duration_s <= 3600.0, "duration_s must lie in [5, 3600]")?;
        check((0.0..=0.3).contains(&self.rr_jitter), "rr_jitter must lie in [0, 0.3]")?;
        check(self.mayer_amp >= 0.0, "mayer_amp must be non-negative")?;
        check(self.drift_std >= 0.0, "drift_std must be non-negative")?;
        Ok(())
    }
}

/// Wrist streams at [`WRIST_RATE`].
#[derive(Debug, Clone, PartialEq)]
pub struct WristChannels {
    pub ppg: Vec<f64>,
    pub acc: [Vec<f64>; 3],
    pub gyr: [Vec<f64>; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSegment {
    pub wrist: WristChannels,
    /// Chest accelerometer at [`CHEST_RATE`].
    pub chest: [Vec<f64>; 3],
    /// Injected nominal rate, brpm.
    pub rr_truth: f64,
    /// Mean instantaneous rate over the first model window, brpm. Equals
    /// `rr_truth` up to rounding when the rate does not wander.
    pub rr_window_mean: f64,
    /// Systolic peak times, seconds.
    pub beat_times: Vec<f64>,
    /// Motion burst intervals, seconds.
    pub bursts: Vec<(f64, f64)>,
}

impl SynthSegment {
    pub fn corrupted(&self) -> bool {
        !self.bursts.is_empty()
    }
}

struct Pulse {
    onset: f64,
    period: f64,
}

const SYSTOLIC_AT: f64 = 0.2;

fn pulse_shape(u: f64) -> f64 {
    let sys = (-(u - SYSTOLIC_AT).powi(2) / (2.0 * 0.07 * 0.07)).exp();
    let dia = 0.4 * (-(u - 0.45).powi(2) / (2.0 * 0.1 * 0.1)).exp();
    sys + dia
}

fn unit_vector(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [StandardNormal.sample(rng), StandardNormal.sample(rng), StandardNormal.sample(rng)];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-6 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

/// Sum of three unit-variance sinusoids with random slow frequencies.
struct Wander {
    freqs: [f64; 3],
    phases: [f64; 3],
}

const WANDER_AMP: f64 = 0.816_496_580_927_726; // sqrt(2/3)

impl Wander {
    fn new(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Self {
        Self {
            freqs: std::array::from_fn(|_| rng.random_range(lo..hi)),
            phases: std::array::from_fn(|_| rng.random_range(0.0..2.0 * PI)),
        }
    }

    fn value(&self, t: f64) -> f64 {
        (0..3).map(|k| WANDER_AMP * (2.0 * PI * self.freqs[k] * t + self.phases[k]).sin()).sum()
    }

    /// Integral of [`Self::value`] from 0 to `t`.
    fn integral(&self, t: f64) -> f64 {
        (0..3)
            .map(|k| {
                let w = 2.0 * PI * self.freqs[k];
                WANDER_AMP * (self.phases[k].cos() - (w * t + self.phases[k]).cos()) / w
            })
            .sum()
    }
}

/// Breathing phase with a slowly wandering instantaneous rate.
struct Breathing {
    f_r: f64,
    phase0: f64,
    jitter: f64,
    wander: Wander,
}

impl Breathing {
    fn phase(&self, t: f64) -> f64 {
        self.phase0 + 2.0 * PI * self.f_r * (t + self.jitter * self.wander.integral(t))
    }

    fn value(&self, t: f64) -> f64 {
        self.phase(t).sin()
    }

    /// Mean rate over `[t0, t1]`, brpm.
    fn mean_rate(&self, t0: f64, t1: f64) -> f64 {
        60.0 * (self.phase(t1) - self.phase(t0)) / (2.0 * PI * (t1 - t0))
    }
}

const ONSET_STEP: f64 = 1e-3;

/// Onsets of heart beats under the breathing-modulated instantaneous rate,
/// found by integrating the rate on a fine grid.
fn beat_onsets(spec: &SynthSpec, breathing: &Breathing, theta0: f64) -> Vec<Pulse> {
    let hz = spec.hr / 60.0;
    let inst_rate = |t: f64| hz * (1.0 + spec.fm_depth * breathing.value(t));
    let (t_start, t_end) = (-3.0, spec.duration_s + 2.0);
    let steps = ((t_end - t_start) / ONSET_STEP).ceil() as usize;
    let mut out = Vec::new();
    let mut theta = theta0;
    let mut prev_rate = inst_rate(t_start);
    for i in 0..steps {
        let t = t_start + i as f64 * ONSET_STEP;
        let rate = inst_rate(t + ONSET_STEP);
        let next = theta + 0.5 * (prev_rate + rate) * ONSET_STEP;
        if next.floor() > theta.floor() {
            let frac = (next.floor() - theta) / (next - theta);
            let onset = t + frac * ONSET_STEP;
            out.push(Pulse { onset, period: 1.0 / inst_rate(onset) });
        }
        theta = next;
        prev_rate = rate;
    }
    out
}

fn pulse_train(pulses: &[Pulse], times: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut start = 0;
    times
        .map(|t| {
            while start < pulses.len() && pulses[start].onset + 1.5 * pulses[start].period < t {
                start += 1;
            }
            pulses[start..]
                .iter()
                .take_while(|p| p.onset - 0.5 * p.period <= t)
                .map(|p| pulse_shape((t - p.onset) / p.period))
                .sum()
        })
        .collect()
}

fn chirp(t: f64, start: f64, dur: f64) -> f64 {
    let u = t - start;
    if u < 0.0 || u > dur {
        return 0.0;
    }
    let (f0, f1) = (3.0, 8.0);
    let env = 0.5 - 0.5 * (2.0 * PI * u / dur).cos();
    env * (2.0 * PI * (f0 * u + (f1 - f0) * u * u / (2.0 * dur))).sin()
}

pub fn gen_segment(spec: &SynthSpec) -> Result<SynthSegment> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let breathing = Breathing {
        f_r: spec.rr / 60.0,
        phase0: rng.random_range(0.0..2.0 * PI),
        jitter: spec.rr_jitter,
        wander: Wander::new(&mut rng, 0.01, 0.05),
    };
    let theta0 = rng.random_range(0.0..1.0);
    let pulses = beat_onsets(spec, &breathing, theta0);
    let beat_times: Vec<f64> = pulses
        .iter()
        .map(|p| p.onset + SYSTOLIC_AT * p.period)
        .filter(|&t| t >= 0.0 && t <= spec.duration_s)
        .collect();

    // Motion bursts: at most one per slot, placed inside the slot.
    let slots = (spec.duration_s / SLOT_S).floor() as usize;
    let mut bursts = Vec::new();
    for s in 0..slots {
        let hit = rng.random::<f64>() < spec.motion_burst_prob;
        let offset = rng.random_range(0.0..1.0);
        let dur = rng.random_range(2.0..3.0);
        if hit {
            bursts.push((s as f64 * SLOT_S + offset, dur));
        }
    }
    if spec.motion_burst_prob > 0.0 && bursts.is_empty() && slots > 0 {
        let s = rng.random_range(0..slots);
        bursts.push((s as f64 * SLOT_S + 0.5, 2.5));
    }
    let burst_amp_ppg: Vec<f64> = bursts.iter().map(|_| rng.random_range(1.0..2.0)).collect();
    let burst_amp_imu: Vec<f64> = bursts.iter().map(|_| rng.random_range(2.0..4.0)).collect();
    let burst_dirs: Vec<[f64; 3]> = bursts.iter().map(|_| unit_vector(&mut rng)).collect();
    let burst_shift: Vec<f64> = bursts.iter().map(|_| rng.random_range(-1.0..1.0)).collect();

    let n_wrist = (spec.duration_s * WRIST_RATE).round() as usize;
    let wrist_t: Vec<f64> = (0..n_wrist).map(|i| i as f64 / WRIST_RATE).collect();
    let resp = |t: f64| breathing.value(t);
    let mayer_freq = rng.random_range(0.08..0.12);
    let mayer_phase = rng.random_range(0.0..2.0 * PI);
    let train = pulse_train(&pulses, wrist_t.iter().copied());
    let train_mean = train.iter().sum::<f64>() / train.len().max(1) as f64;

    let noise = Normal::new(0.0, spec.noise_std.max(0.0)).map_err(|e| invalid(e.to_string()))?;
    let burst_sum = |t: f64, amps: &[f64], weight: &dyn Fn(usize) -> f64| -> f64 {
        bursts.iter().enumerate().map(|(b, &(s, d))| amps[b] * weight(b) * chirp(t, s, d)).sum()
    };

    let ppg: Vec<f64> = wrist_t
        .iter()
        .zip(&train)
        .map(|(&t, &p)| {
            let r = resp(t);
            let mut v = p * (1.0 + spec.am_depth * r) + spec.bw_depth * r;
            v += spec.mayer_amp * (2.0 * PI * mayer_freq * t + mayer_phase).sin();
            v += burst_sum(t, &burst_amp_ppg, &|_| 1.0);
            // Motion also shifts the sensor baseline while it lasts.
            v += bursts
                .iter()
                .enumerate()
                .filter(|(_, &(s, d))| t >= s && t <= s + d)
                .map(|(b, _)| burst_shift[b])
                .sum::<f64>();
            v + noise.sample(&mut rng)
        })
        .collect();

    let mut imu = |gain: f64, cardiac_gain: f64, offset_scale: f64| -> [Vec<f64>; 3] {
        let resp_dir = unit_vector(&mut rng);
        let card_dir = unit_vector(&mut rng);
        let offset = unit_vector(&mut rng);
        let drift: [Wander; 3] = std::array::from_fn(|_| Wander::new(&mut rng, 0.02, 0.2));
        std::array::from_fn(|a| {
            wrist_t
                .iter()
                .zip(&train)
                .map(|(&t, &p)| {
                    offset_scale * offset[a]
                        + gain * resp_dir[a] * resp(t)
                        + spec.drift_std * drift[a].value(t)
                        + cardiac_gain * card_dir[a] * (p - train_mean)
                        + burst_sum(t, &burst_amp_imu, &|b| burst_dirs[b][a])
                        + noise.sample(&mut rng)
                })
                .collect()
        })
    };
    let acc = imu(spec.imu_resp_gain, 0.3 * spec.imu_resp_gain, 1.0);
    let gyr = imu(0.7 * spec.imu_resp_gain, 0.2 * spec.imu_resp_gain, 0.0);

    let n_chest = (spec.duration_s * CHEST_RATE).round() as usize;
    let dominant = rng.random_range(0..3);
    let loads: [f64; 3] = std::array::from_fn(|a| if a == dominant { 1.0 } else { rng.random_range(0.1..0.4) });
    let signs: [f64; 3] = std::array::from_fn(|_| if rng.random::<bool>() { 1.0 } else { -1.0 });
    let gravity = unit_vector(&mut rng);
    let chest_noise = Normal::new(0.0, 0.005).expect("constant std");
    let chest: [Vec<f64>; 3] = std::array::from_fn(|a| {
        (0..n_chest)
            .map(|i| {
                let t = i as f64 / CHEST_RATE;
                gravity[a] + 0.05 * loads[a] * signs[a] * resp(t) + chest_noise.sample(&mut rng)
            })
            .collect()
    });

    Ok(SynthSegment {
        wrist: WristChannels { ppg, acc, gyr },
        chest,
        rr_truth: spec.rr,
        rr_window_mean: breathing.mean_rate(0.0, TRUTH_WINDOW_S.min(spec.duration_s)),
        beat_times,
        bursts,
    })
}

/// Corpus-level generation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub n_subjects: usize,
    pub segments_per_subject: usize,
    pub rr_range: (f64, f64),
    pub corruption_fraction: f64,
    pub seed: u64,
    #[serde(default = "CorpusSpec::default_noise")]
    pub noise_std: f64,
    #[serde(default = "CorpusSpec::default_gain")]
    pub imu_resp_gain: f64,
    /// Per-slot burst probability used for corrupted segments.
    #[serde(default = "CorpusSpec::default_burst")]
    pub corrupted_burst_prob: f64,
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    /// Standard deviation of the per-segment rate step, brpm.
    #[serde(default = "CorpusSpec::default_rr_step")]
    pub rr_step_sd: f64,
    #[serde(default = "CorpusSpec::default_jitter")]
    pub rr_jitter: f64,
    /// Typical vasomotor amplitude; each subject scales it by 0.5-1.5.
    #[serde(default = "CorpusSpec::default_mayer")]
    pub mayer_amp: f64,
    /// Typical IMU drift amplitude; each subject scales it by 0.5-1.5.
    #[serde(default = "CorpusSpec::default_drift")]
    pub drift_std: f64,
}

impl CorpusSpec {
    fn default_rr_step() -> f64 {
        1.0
    }
    fn default_jitter() -> f64 {
        0.08
    }
    fn default_mayer() -> f64 {
        0.15
    }
    fn default_drift() -> f64 {
        0.3
    }

    fn default_noise() -> f64 {
        0.05
    }
    fn default_gain() -> f64 {
        1.0
    }
    fn default_burst() -> f64 {
        0.6
    }

    pub fn new(n_subjects: usize, segments_per_subject: usize, rr_range: (f64, f64), corruption_fraction: f64, seed: u64) -> Self {
        Self {
            n_subjects,
            segments_per_subject,
            rr_range,
            corruption_fraction,
            seed,
            noise_std: Self::default_noise(),
            imu_resp_gain: Self::default_gain(),
            corrupted_burst_prob: Self::default_burst(),
            duration_s: default_duration(),
            rr_step_sd: Self::default_rr_step(),
            rr_jitter: Self::default_jitter(),
            mayer_amp: Self::default_mayer(),
            drift_std: Self::default_drift(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_subjects < 2 {
            return Err(invalid("corpus needs at least two subjects"));
        }
        if self.segments_per_subject == 0 {
            return Err(invalid("segments_per_subject must be positive"));
        }
        let (lo, hi) = self.rr_range;
        if !(6.0..=30.0).contains(&lo) || !(6.0..=30.0).contains(&hi) || lo > hi {
            return Err(invalid("rr_range must be an ordered pair inside [6, 30]"));
        }
        if !(0.0..=1.0).contains(&self.corruption_fraction) {
            return Err(invalid("corruption_fraction must lie in [0, 1]"));
        }
        if !(self.rr_step_sd >= 0.0 && self.rr_step_sd.is_finite()) {
            return Err(invalid("rr_step_sd must be non-negative"));
        }
        if !(0.0..=0.3).contains(&self.rr_jitter) {
            return Err(invalid("rr_jitter must lie in [0, 0.3]"));
        }
        if !(self.mayer_amp >= 0.0 && self.drift_std >= 0.0) {
            return Err(invalid("mayer_amp and drift_std must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.corrupted_burst_prob) || self.corrupted_burst_prob == 0.0 && self.corruption_fraction > 0.0 {
            return Err(invalid("corrupted_burst_prob must lie in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub subject: String,
    pub segment: String,
    pub rr_truth: f64,
    pub corrupted: bool,
    pub spec: SynthSpec,
}

pub fn subject_name(i: usize) -> String {
    format!("s{i:03}")
}

pub fn segment_name(subject: usize, j: usize) -> String {
    format!("s{subject:03}_{j:04}")
}

/// Reflects `x` into `[lo, hi]`.
fn reflect(mut x: f64, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return lo;
    }
    let span = hi - lo;
    x = (x - lo).rem_euclid(2.0 * span);
    lo + if x > span { 2.0 * span - x } else { x }
}

/// Per-segment specifications of a corpus. A subject's segments are
/// consecutive windows of one recording: the rate follows a random walk
/// reflected into `rr_range` (whose stationary law is uniform on the range),
/// and subject traits (heart rate, modulation depths, IMU coupling) are
/// shared. Exactly `round(corruption_fraction * total)` segments carry bursts.
pub fn plan_corpus(spec: &CorpusSpec) -> Result<Vec<ManifestRow>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let total = spec.n_subjects * spec.segments_per_subject;
    let n_bad = (spec.corruption_fraction * total as f64).round() as usize;
    let mut flags: Vec<bool> = (0..total).map(|i| i < n_bad).collect();
    flags.shuffle(&mut rng);
    let (lo, hi) = spec.rr_range;
    let mut rows = Vec::with_capacity(total);
    for s in 0..spec.n_subjects {
        let hr_base = rng.random_range(60.0..85.0);
        let am = rng.random_range(0.1..0.3);
        let bw = rng.random_range(0.05..0.2);
        let fm = rng.random_range(0.02..0.08);
        let gain = spec.imu_resp_gain * rng.random_range(0.6..1.4);
        let mayer = spec.mayer_amp * rng.random_range(0.5..1.5);
        let drift = spec.drift_std * rng.random_range(0.5..1.5);
        let step = Normal::new(0.0, spec.rr_step_sd).map_err(|e| invalid(format!("rr_step_sd: {e}")))?;
        let mut rr = if hi > lo { rng.random_range(lo..hi) } else { lo };
        for j in 0..spec.segments_per_subject {
            let idx = s * spec.segments_per_subject + j;
            if j > 0 {
                rr = reflect(rr + step.sample(&mut rng), lo, hi);
            }
            let hr: f64 = hr_base + rng.random_range(-8.0..8.0);
            let seg = SynthSpec {
                rr,
                hr,
                am_depth: am,
                bw_depth: bw,
                fm_depth: fm,
                noise_std: spec.noise_std,
                motion_burst_prob: if flags[idx] { spec.corrupted_burst_prob } else { 0.0 },
                imu_resp_gain: gain,
                seed: rng.random(),
                duration_s: spec.duration_s,
                rr_jitter: spec.rr_jitter,
                mayer_amp: mayer,
                drift_std: drift,
            };
            rows.push(ManifestRow {
                subject: subject_name(s),
                segment: segment_name(s, j),
                rr_truth: rr,
                corrupted: flags[idx],
                spec: seg,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{band_power, power_spectrum};

    #[test]
    fn reflection_stays_in_range() {
        assert_eq!(reflect(9.0, 8.0, 25.0), 9.0);
        assert!((reflect(26.0, 8.0, 25.0) - 24.0).abs() < 1e-12);
        assert!((reflect(7.0, 8.0, 25.0) - 9.0).abs() < 1e-12);
        assert!((reflect(60.0, 8.0, 25.0) - 24.0).abs() < 1e-12);
    }

    #[test]
    fn determinism() {
        let spec = SynthSpec { seed: 5, motion_burst_prob: 0.3, ..Default::default() };
        assert_eq!(gen_segment(&spec).unwrap(), gen_segment(&spec).unwrap());
        let other = SynthSpec { seed: 6, ..spec };
        assert_ne!(gen_segment(&spec).unwrap().wrist.ppg, gen_segment(&other).unwrap().wrist.ppg);
    }

    #[test]
    fn rates_and_lengths() {
        let seg = gen_segment(&SynthSpec::default()).unwrap();
        assert_eq!(seg.wrist.ppg.len(), 680);
        assert_eq!(seg.chest[0].len(), (34.0 * 512.0) as usize);
        assert_eq!(seg.rr_truth, 15.0);
        assert!((seg.rr_window_mean - 15.0).abs() < 1e-9);
        let jittered = gen_segment(&SynthSpec { rr_jitter: 0.1, ..Default::default() }).unwrap();
        assert_eq!(jittered.rr_truth, 15.0);
        assert!((jittered.rr_window_mean - 15.0).abs() < 15.0 * 0.1 * 2.5);
        assert!(!seg.corrupted());
    }

    #[test]
    fn beat_count_matches_heart_rate() {
        let seg = gen_segment(&SynthSpec { hr: 72.0, duration_s: 32.0, ..Default::default() }).unwrap();
        let n = seg.beat_times.len() as f64;
        assert!((n - 38.4).abs() <= 1.5, "{n}");
    }

    #[test]
    fn wrist_breathing_concentrated_at_rate() {
        let spec = SynthSpec { noise_std: 0.0, imu_resp_gain: 1.0, rr: 13.0, seed: 2, ..Default::default() };
        let seg = gen_segment(&spec).unwrap();
        let f_r = spec.rr / 60.0;
        for axis in &seg.wrist.acc {
            let m = axis.iter().sum::<f64>() / axis.len() as f64;
            let x: Vec<f64> = axis.iter().map(|v| v - m).collect();
            let (f, p) = power_spectrum(&x, WRIST_RATE, 8 * x.len());
            let band = band_power(&f, &p, 0.1, 0.5);
            let near = band_power(&f, &p, f_r - 0.02, f_r + 0.02);
            assert!(near >= 0.6 * band, "{near} / {band}");
        }
    }

    #[test]
    fn invalid_spec_rejected() {
        assert!(gen_segment(&SynthSpec { rr: 3.0, ..Default::default() }).is_err());
        assert!(gen_segment(&SynthSpec { am_depth: 0.8, ..Default::default() }).is_err());
    }

    #[test]
    fn corpus_plan_counts() {
        let rows = plan_corpus(&CorpusSpec::new(12, 200, (8.0, 25.0), 0.3, 1)).unwrap();
        assert_eq!(rows.len(), 2400);
        let bad = rows.iter().filter(|r| r.corrupted).count() as f64 / 2400.0;
        assert!((bad - 0.3).abs() <= 0.02);
        assert!(rows.iter().all(|r| r.rr_truth == r.spec.rr && (8.0..=25.0).contains(&r.rr_truth)));
        assert!(plan_corpus(&CorpusSpec::new(1, 10, (8.0, 25.0), 0.0, 1)).is_err());
    }
}
