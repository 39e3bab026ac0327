//! Window preparation shared by the command-line tools and experiments:
//! native-rate recordings become aligned 100 Hz windows, which then yield
//! quality features, IMU respiration waveforms, chest labels and model
//! bundles.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::groundtruth::{label_recording, KalmanParams, WindowLabel};
use crate::io::{ChestRecording, WristRecording};
use crate::quality::{extract_quality_features, train_quality_model, QualityFeatures, QualityModel, QualityParams};
use crate::respir::{extract_respiration, IcaOptions, RespiratoryComponent};
use crate::signal::{
    minmax_normalize, resample_linear, segment, segment_random, SampledSignal, SegmentBundle, TriaxialWindow, MODEL_RATE,
    WINDOW_SECONDS,
};
use crate::synth::{gen_segment, plan_corpus, CorpusSpec, WRIST_RATE};

/// One aligned 32 s window of every channel at the model rate.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    pub offset: usize,
    pub ppg: Vec<f64>,
    pub acc: TriaxialWindow,
    pub gyr: TriaxialWindow,
    pub chest: Option<TriaxialWindow>,
}

fn to_model_rate(samples: &[f64], rate: f64) -> Result<Vec<f64>> {
    Ok(resample_linear(&SampledSignal::new(samples.to_vec(), rate)?, MODEL_RATE)?.samples)
}

/// How windows are cut from a recording.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Windowing {
    /// Consecutive non-overlapping windows.
    #[default]
    Fixed,
    /// Up to `count` windows at seeded random offsets.
    Random { count: usize, seed: u64 },
}

/// Resamples every channel to the model rate, trims them to a common length
/// and cuts windows.
pub fn recording_windows(wrist: &WristRecording, chest: Option<&ChestRecording>, windowing: Windowing) -> Result<Vec<WindowSet>> {
    let mut channels: Vec<(String, Vec<f64>)> = vec![("ppg".into(), to_model_rate(&wrist.ppg, wrist.rate)?)];
    for (a, name) in ["x", "y", "z"].iter().enumerate() {
        channels.push((format!("acc_{name}"), to_model_rate(&wrist.acc[a], wrist.rate)?));
        channels.push((format!("gyr_{name}"), to_model_rate(&wrist.gyr[a], wrist.rate)?));
        if let Some(c) = chest {
            channels.push((format!("chest_{name}"), to_model_rate(&c.acc[a], c.rate)?));
        }
    }
    let len = channels.iter().map(|(_, v)| v.len()).min().unwrap_or(0);
    let mut signals = BTreeMap::new();
    for (name, mut v) in channels {
        v.truncate(len);
        signals.insert(name, SampledSignal::new(v, MODEL_RATE)?);
    }
    let windows = match windowing {
        Windowing::Fixed => segment(&signals, WINDOW_SECONDS, WINDOW_SECONDS)?,
        Windowing::Random { count, seed } => segment_random(&signals, WINDOW_SECONDS, count, seed)?,
    };
    windows
        .into_iter()
        .map(|mut w| {
            let mut take = |k: &str| w.channels.remove(k).unwrap_or_default();
            let ppg = take("ppg");
            let acc = TriaxialWindow::new(take("acc_x"), take("acc_y"), take("acc_z"), MODEL_RATE)?;
            let gyr = TriaxialWindow::new(take("gyr_x"), take("gyr_y"), take("gyr_z"), MODEL_RATE)?;
            let chest = match chest {
                Some(_) => Some(TriaxialWindow::new(take("chest_x"), take("chest_y"), take("chest_z"), MODEL_RATE)?),
                None => None,
            };
            Ok(WindowSet { offset: w.offset, ppg, acc, gyr, chest })
        })
        .collect()
}

/// IMU respiration waveforms extracted from one window.
#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub acc: RespiratoryComponent,
    pub gyr: RespiratoryComponent,
}

pub fn extract_imu(w: &WindowSet, ica: IcaOptions) -> Result<Extraction> {
    Ok(Extraction { acc: extract_respiration(&w.acc, ica)?, gyr: extract_respiration(&w.gyr, ica)? })
}

fn to_f32(xs: &[f64]) -> Vec<f32> {
    xs.iter().map(|&v| (v as f32).clamp(-1.0, 1.0)).collect()
}

/// Normalized model input for one window.
pub fn make_bundle(subject: &str, segment: &str, w: &WindowSet, ex: &Extraction, label: Option<f64>) -> Result<SegmentBundle> {
    let b = SegmentBundle {
        subject_id: subject.to_string(),
        segment_id: segment.to_string(),
        ppg: to_f32(&minmax_normalize(&w.ppg)),
        resp_acc: to_f32(&ex.acc.samples),
        resp_gyr: to_f32(&ex.gyr.samples),
        label_rr: label.map(|v| v as f32),
    };
    b.validate()?;
    Ok(b)
}

/// Chest labels of one recording's windows, in chronological order.
pub fn chest_labels(windows: &[TriaxialWindow], params: KalmanParams) -> Vec<WindowLabel> {
    label_recording(windows, params)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceGate {
    pub segments: usize,
    pub seed: u64,
}

impl Default for ReferenceGate {
    fn default() -> Self {
        Self { segments: 1000, seed: 7 }
    }
}

/// Quality features of the PPG of every window of a synthetic corpus.
pub fn synth_quality_features(spec: &CorpusSpec) -> Result<Vec<(bool, QualityFeatures)>> {
    let mut out = Vec::new();
    for row in plan_corpus(spec)? {
        let seg = gen_segment(&row.spec)?;
        let wrist = WristRecording { rate: WRIST_RATE, ppg: seg.wrist.ppg, acc: seg.wrist.acc, gyr: seg.wrist.gyr };
        for w in recording_windows(&wrist, None, Windowing::Fixed)? {
            out.push((row.corrupted, extract_quality_features(&w.ppg, MODEL_RATE)?));
        }
    }
    Ok(out)
}

/// Gate fitted on clean synthetic recordings, used when no trained gate is
/// supplied.
pub fn reference_quality_model(gate: ReferenceGate, params: QualityParams) -> Result<QualityModel> {
    if gate.segments < 2 {
        return Err(invalid("reference gate needs at least two segments"));
    }
    // Many subjects with few segments each cover the trait distribution
    // better than a few long recordings.
    let subjects = (gate.segments / 2).max(2);
    let per = gate.segments.div_ceil(subjects);
    let spec = CorpusSpec::new(subjects, per, (8.0, 25.0), 0.0, gate.seed);
    let feats: Vec<QualityFeatures> = synth_quality_features(&spec)?.into_iter().map(|(_, f)| f).collect();
    train_quality_model(&feats, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{SynthSpec, CHEST_RATE};

    fn recordings(spec: &SynthSpec) -> (WristRecording, ChestRecording) {
        let seg = gen_segment(spec).unwrap();
        (
            WristRecording { rate: WRIST_RATE, ppg: seg.wrist.ppg, acc: seg.wrist.acc, gyr: seg.wrist.gyr },
            ChestRecording { rate: CHEST_RATE, acc: seg.chest },
        )
    }

    #[test]
    fn one_window_per_synthetic_segment() {
        let (w, c) = recordings(&SynthSpec::default());
        let ws = recording_windows(&w, Some(&c), Windowing::Fixed).unwrap();
        assert_eq!(ws.len(), 1);
        assert_eq!(ws[0].ppg.len(), 3200);
        assert_eq!(ws[0].chest.as_ref().unwrap().len(), 3200);
    }

    #[test]
    fn bundle_is_normalized_and_labelled() {
        let (w, c) = recordings(&SynthSpec { rr: 18.0, seed: 4, ..Default::default() });
        let ws = recording_windows(&w, Some(&c), Windowing::Fixed).unwrap();
        let ex = extract_imu(&ws[0], IcaOptions::default()).unwrap();
        let labels = chest_labels(&[ws[0].chest.clone().unwrap()], KalmanParams::default());
        let rr = labels[0].rr.unwrap();
        assert!((rr - 18.0).abs() < 0.5, "{rr}");
        let b = make_bundle("s000", "s000_0000", &ws[0], &ex, Some(rr)).unwrap();
        assert!(b.channels().iter().all(|c| c.iter().all(|v| v.abs() <= 1.0)));
    }
}
