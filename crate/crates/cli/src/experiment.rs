//! The whole pipeline on an in-memory synthetic corpus: generate, gate,
//! extract, label, train on a subject-disjoint split and score the network
//! and the classical baseline on the held-out subjects.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use anyhow::{bail, Result};
use rrforge_core::pipeline::reference_quality_model;
use rrforge_core::signal::SegmentBundle;
use rrforge_core::synth::{plan_corpus, CorpusSpec};
use rrforge_nn::train::EpochRecord;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::corpus::synth_recording;
use crate::evaluate::{evaluate, EstimateRow, LabelRow, MethodReport};
use crate::prepare::{prepare_stats, process_corpus, PrepareStats, Stages, WindowOutcome};
use crate::split::{labelled_subjects, plan_split, train_split, ModelMeta};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutcome {
    pub stats: PrepareStats,
    pub model: ModelMeta,
    pub history: Vec<EpochRecord>,
    pub reports: Vec<MethodReport>,
    pub prepare_seconds: f64,
    pub train_seconds: f64,
}

impl ExperimentOutcome {
    pub fn report(&self, method: &str) -> Option<&MethodReport> {
        self.reports.iter().find(|r| r.metrics.method == method)
    }
}

pub fn labels_of(windows: &[WindowOutcome]) -> Vec<LabelRow> {
    windows
        .iter()
        .filter_map(|w| {
            let l = w.label.as_ref()?;
            Some(LabelRow { segment_id: w.id.clone(), rr_ref: l.rr?, confidence: l.confidence })
        })
        .collect()
}

pub fn baseline_rows(windows: &[WindowOutcome]) -> Vec<EstimateRow> {
    windows
        .iter()
        .filter_map(|w| {
            let b = w.baseline?;
            Some(EstimateRow { segment_id: w.id.clone(), rr_est: b.rr, quality: b.quality, method: "baseline".into() })
        })
        .collect()
}

pub fn run_experiment(corpus: &CorpusSpec, cfg: &RunConfig, test_subjects: &[String]) -> Result<ExperimentOutcome> {
    let started = Instant::now();
    let rows = plan_corpus(corpus)?;
    let gate = reference_quality_model(cfg.reference_gate, cfg.quality)?;
    let stages = Stages { gate: true, bundles: true, chest: true, baseline: true, respiration: false };
    let windows = process_corpus(rows.len(), |i| synth_recording(&rows[i]), cfg, Some(&gate), stages)?;
    let stats = prepare_stats(cfg, rows.len(), &windows)?;
    let prepare_seconds = started.elapsed().as_secs_f64();
    log::info!("prepared {} windows ({} accepted) in {prepare_seconds:.0} s", stats.windows, stats.accepted);

    let bundles: Vec<SegmentBundle> = windows.iter().filter_map(|w| w.bundle.clone()).collect();
    let split = plan_split(&labelled_subjects(&bundles), None, None, test_subjects)?;
    let started = Instant::now();
    let (model, outcome, meta) = train_split(&bundles, &split, cfg)?;
    let train_seconds = started.elapsed().as_secs_f64();

    let test: BTreeSet<&str> = split.test.iter().map(String::as_str).collect();
    let test_bundles: Vec<&SegmentBundle> = bundles.iter().filter(|b| test.contains(b.subject_id.as_str())).collect();
    if test_bundles.is_empty() {
        bail!("no accepted windows from the test subjects");
    }
    let inputs: Vec<Vec<f32>> = test_bundles.iter().map(|b| b.channels().concat()).collect();
    let refs: Vec<&[f32]> = inputs.iter().map(Vec::as_slice).collect();
    let preds = model.predict(&refs, cfg.train.batch_size)?;
    let quality: BTreeMap<&str, f64> = windows.iter().filter_map(|w| Some((w.id.as_str(), w.verdict?.score))).collect();
    let mut estimates: Vec<EstimateRow> = test_bundles
        .iter()
        .zip(preds)
        .map(|(b, p)| EstimateRow {
            segment_id: b.segment_id.clone(),
            rr_est: Some(p),
            quality: quality.get(b.segment_id.as_str()).copied().unwrap_or(f64::NAN),
            method: "cnn".into(),
        })
        .collect();
    let test_ids: BTreeSet<&str> = test_bundles.iter().map(|b| b.segment_id.as_str()).collect();
    estimates.extend(baseline_rows(&windows).into_iter().filter(|r| test_ids.contains(r.segment_id.as_str())));
    let counts = BTreeMap::from([("cnn".to_string(), meta.param_count)]);
    let reports = evaluate(&estimates, &labels_of(&windows), &counts)?;
    Ok(ExperimentOutcome { stats, model: meta, history: outcome.history, reports, prepare_seconds, train_seconds })
}
