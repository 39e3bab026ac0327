//! Window processing shared by `prepare`, `filter`, `gt-extract` and
//! `estimate`: gating, IMU respiration extraction, bundling, chest labels
//! and the classical baseline.

use std::collections::BTreeMap;

use anyhow::{bail, Result};
use rayon::prelude::*;
use rrforge_core::baselines::{baseline_rr, BaselineEstimate};
use rrforge_core::groundtruth::{fuse_recording, window_axes, AxisEstimate, WindowLabel};
use rrforge_core::pipeline::{extract_imu, make_bundle, recording_windows, Extraction};
use rrforge_core::quality::{extract_quality_features, QualityModel, Verdict};
use rrforge_core::signal::{SegmentBundle, MODEL_RATE};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::corpus::{window_id, Recording};

/// What to compute for each window.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Stages {
    pub gate: bool,
    pub bundles: bool,
    pub chest: bool,
    pub baseline: bool,
    pub respiration: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowOutcome {
    pub subject: String,
    pub id: String,
    pub offset: usize,
    pub verdict: Option<Verdict>,
    pub bundle: Option<SegmentBundle>,
    pub chest_axes: Option<[AxisEstimate; 3]>,
    pub baseline: Option<BaselineEstimate>,
    pub respiration: Option<Extraction>,
    pub label: Option<WindowLabel>,
}

impl WindowOutcome {
    pub fn accepted(&self) -> bool {
        self.verdict.is_none_or(|v| v.accept)
    }
}

/// Processes every window of one recording. Bundles and respiration
/// waveforms are only produced for accepted windows.
pub fn process_recording(rec: &Recording, cfg: &RunConfig, gate: Option<&QualityModel>, stages: Stages) -> Result<Vec<WindowOutcome>> {
    let windows = recording_windows(&rec.wrist, rec.chest.as_ref(), cfg.windowing)?;
    let n = windows.len();
    let mut out = Vec::with_capacity(n);
    for (k, w) in windows.iter().enumerate() {
        let id = window_id(&rec.subject, &rec.segment, k, n);
        let verdict = match (stages.gate, gate) {
            (true, Some(g)) => Some(g.assess(&extract_quality_features(&w.ppg, MODEL_RATE)?)),
            _ => None,
        };
        let accepted = verdict.is_none_or(|v| v.accept);
        let extraction = if accepted && (stages.bundles || stages.respiration) { Some(extract_imu(w, cfg.ica)?) } else { None };
        let bundle = match (&extraction, stages.bundles) {
            (Some(ex), true) => Some(make_bundle(&rec.subject, &id, w, ex, None)?),
            _ => None,
        };
        let chest_axes = if stages.chest { w.chest.as_ref().map(window_axes) } else { None };
        let baseline = if stages.baseline && accepted { Some(baseline_rr(&w.ppg, &w.acc, cfg.baseline)) } else { None };
        out.push(WindowOutcome {
            subject: rec.subject.clone(),
            id,
            offset: w.offset,
            verdict,
            bundle,
            chest_axes,
            baseline,
            respiration: if stages.respiration { extraction } else { None },
            label: None,
        });
    }
    Ok(out)
}

/// Processes `n` recordings in parallel, preserving order, then fuses the
/// chest estimates of each subject's windows in chronological order and
/// attaches the labels.
pub fn process_corpus<F>(n: usize, load: F, cfg: &RunConfig, gate: Option<&QualityModel>, stages: Stages) -> Result<Vec<WindowOutcome>>
where
    F: Fn(usize) -> Result<Recording> + Sync,
{
    let per: Vec<Vec<WindowOutcome>> = (0..n)
        .into_par_iter()
        .map(|i| process_recording(&load(i)?, cfg, gate, stages))
        .collect::<Result<_>>()?;
    let mut windows: Vec<WindowOutcome> = per.into_iter().flatten().collect();
    if stages.chest {
        attach_labels(&mut windows, cfg);
    }
    Ok(windows)
}

fn attach_labels(windows: &mut [WindowOutcome], cfg: &RunConfig) {
    let mut by_subject: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, w) in windows.iter().enumerate() {
        if w.chest_axes.is_some() {
            by_subject.entry(w.subject.clone()).or_default().push(i);
        }
    }
    for idx in by_subject.values() {
        let axes: Vec<[AxisEstimate; 3]> = idx.iter().map(|&i| windows[i].chest_axes.expect("filtered")).collect();
        for (&i, label) in idx.iter().zip(fuse_recording(&axes, cfg.kalman)) {
            let w = &mut windows[i];
            if let (Some(b), Some(rr)) = (w.bundle.as_mut(), label.rr) {
                if (4.0..=60.0).contains(&rr) {
                    b.label_rr = Some(rr as f32);
                }
            }
            w.label = Some(label);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepareStats {
    pub config_hash: String,
    pub seed: u64,
    pub recordings: usize,
    pub windows: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub acceptance_rate: f64,
    pub labelled: usize,
    pub label_min: Option<f64>,
    pub label_max: Option<f64>,
    pub label_mean: Option<f64>,
    pub label_sd: Option<f64>,
}

pub fn prepare_stats(cfg: &RunConfig, recordings: usize, windows: &[WindowOutcome]) -> Result<PrepareStats> {
    if windows.is_empty() {
        bail!("corpus yields no 32 s windows");
    }
    let accepted = windows.iter().filter(|w| w.accepted()).count();
    let labels: Vec<f64> = windows.iter().filter_map(|w| w.bundle.as_ref()?.label_rr).map(f64::from).collect();
    let n = labels.len() as f64;
    let mean = (!labels.is_empty()).then(|| labels.iter().sum::<f64>() / n);
    let sd = mean.filter(|_| labels.len() > 1).map(|m| (labels.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    Ok(PrepareStats {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        recordings,
        windows: windows.len(),
        accepted,
        rejected: windows.len() - accepted,
        acceptance_rate: accepted as f64 / windows.len() as f64,
        labelled: labels.len(),
        label_min: labels.iter().copied().reduce(f64::min),
        label_max: labels.iter().copied().reduce(f64::max),
        label_mean: mean,
        label_sd: sd,
    })
}
