//! Subject-disjoint partitions and model training on prepared bundles.

use std::collections::BTreeSet;
use std::fmt;

use anyhow::{bail, Result};
use rrforge_core::signal::SegmentBundle;
use rrforge_nn::train::{train, Example, TrainOutcome};
use rrforge_nn::{ModelConfig, RrModel};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

/// A request that breaks a pipeline invariant, such as a split sharing
/// subjects. Reported with exit code 3.
#[derive(Debug)]
pub struct ContractViolation(pub String);

impl fmt::Display for ContractViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ContractViolation {}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

fn overlap(a: &[String], b: &[String]) -> Vec<String> {
    a.iter().filter(|s| b.contains(s)).cloned().collect()
}

/// Partitions `subjects`. Without an explicit validation list the last
/// remaining subject validates; without a training list every subject not
/// otherwise assigned trains.
pub fn plan_split(subjects: &BTreeSet<String>, train: Option<&[String]>, val: Option<&[String]>, test: &[String]) -> Result<Split> {
    let lists = [("training", train.unwrap_or(&[])), ("validation", val.unwrap_or(&[])), ("test", test)];
    for (name, list) in lists {
        if let Some(s) = list.iter().find(|s| !subjects.contains(*s)) {
            bail!("{name} subject {s} has no labelled segments");
        }
    }
    for i in 0..3 {
        for j in i + 1..3 {
            let shared = overlap(lists[i].1, lists[j].1);
            if !shared.is_empty() {
                return Err(ContractViolation(format!("subjects {shared:?} appear in both {} and {} sets", lists[i].0, lists[j].0)).into());
            }
        }
    }
    let taken = |extra: &[String]| -> Vec<String> {
        subjects.iter().filter(|s| !test.contains(s) && !extra.contains(s)).cloned().collect()
    };
    let val: Vec<String> = match val {
        Some(v) => v.to_vec(),
        None => taken(train.unwrap_or(&[])).last().cloned().into_iter().collect(),
    };
    let train: Vec<String> = match train {
        Some(t) => t.to_vec(),
        None => taken(&val),
    };
    if train.is_empty() || val.is_empty() {
        bail!("need at least one training and one validation subject, have {} labelled subjects", subjects.len());
    }
    Ok(Split { train, val, test: test.to_vec() })
}

pub fn labelled_subjects(bundles: &[SegmentBundle]) -> BTreeSet<String> {
    bundles.iter().filter(|b| b.label_rr.is_some()).map(|b| b.subject_id.clone()).collect()
}

/// Labelled examples of the given subjects.
pub fn examples(bundles: &[SegmentBundle], subjects: &[String]) -> Vec<Example> {
    bundles
        .iter()
        .filter(|b| subjects.contains(&b.subject_id))
        .filter_map(|b| {
            let label = f64::from(b.label_rr?);
            let input = b.channels().concat();
            Some(Example { subject_id: b.subject_id.clone(), segment_id: b.segment_id.clone(), input, label })
        })
        .collect()
}

/// Provenance and summary stored next to a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub config_hash: String,
    pub seed: u64,
    pub model: ModelConfig,
    pub param_count: u64,
    pub split: Split,
    pub best_epoch: usize,
    pub best_val_mae: f64,
    pub steps: u64,
}

pub fn train_split(bundles: &[SegmentBundle], split: &Split, cfg: &RunConfig) -> Result<(RrModel, TrainOutcome, ModelMeta)> {
    let train_set = examples(bundles, &split.train);
    let val_set = examples(bundles, &split.val);
    let tcfg = cfg.train_config();
    let mut model = RrModel::build(&cfg.model, cfg.seed)?;
    log::info!(
        "training {} parameters on {} windows, validating on {}",
        model.count_params(),
        train_set.len(),
        val_set.len()
    );
    let outcome = match train(&mut model, &train_set, &val_set, &tcfg) {
        Err(rrforge_nn::Error::InvalidSplit(msg)) => return Err(ContractViolation(msg).into()),
        other => other?,
    };
    let meta = ModelMeta {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        model: cfg.model.clone(),
        param_count: model.count_params() as u64,
        split: split.clone(),
        best_epoch: outcome.best_epoch,
        best_val_mae: outcome.best_val_mae,
        steps: outcome.steps,
    };
    Ok((model, outcome, meta))
}
