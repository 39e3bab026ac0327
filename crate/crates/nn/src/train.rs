//! Mini-batch training with cosine decay, per-epoch validation and early
//! stopping on validation MAE.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::model::{batch_tensor, RrModel};
use crate::optim::{cosine_decay, Adam, AdamConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub batch_size: usize,
    pub lr0: f64,
    /// Epochs without validation improvement before stopping; `None` never stops early.
    pub early_stop_patience: Option<usize>,
    pub seed: u64,
    /// Start the output bias at the mean training label.
    #[serde(default = "default_true")]
    pub init_output_bias: bool,
}

fn default_true() -> bool {
    true
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            steps_per_epoch: 60,
            batch_size: 32,
            lr0: 1e-3,
            early_stop_patience: Some(10),
            seed: 0,
            init_output_bias: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.steps_per_epoch == 0 || self.batch_size == 0 || self.early_stop_patience == Some(0) {
            return Err(Error::InvalidConfig("epochs, steps, batch size and patience must be positive".into()));
        }
        if !(self.lr0.is_finite() && self.lr0 > 0.0) {
            return Err(Error::InvalidConfig(format!("learning rate {} must be positive", self.lr0)));
        }
        Ok(())
    }
}

/// One model input: channel-major samples and the reference rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub subject_id: String,
    pub segment_id: String,
    pub input: Vec<f32>,
    pub label: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mae: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_mae: f64,
    pub steps: u64,
}

/// Rejects splits that share a subject.
pub fn check_disjoint(train: &[Example], val: &[Example]) -> Result<()> {
    let subjects: BTreeSet<&str> = train.iter().map(|e| e.subject_id.as_str()).collect();
    let shared: BTreeSet<&str> = val.iter().map(|e| e.subject_id.as_str()).filter(|s| subjects.contains(s)).collect();
    if shared.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidSplit(format!("subjects in both training and validation sets: {shared:?}")))
    }
}

/// Mean absolute error of evaluation-mode predictions.
pub fn evaluate_mae(model: &RrModel, examples: &[Example], batch_size: usize) -> Result<f64> {
    let inputs: Vec<&[f32]> = examples.iter().map(|e| e.input.as_slice()).collect();
    let preds = model.predict(&inputs, batch_size)?;
    Ok(preds.iter().zip(examples).map(|(p, e)| (p - e.label).abs()).sum::<f64>() / examples.len() as f64)
}

pub fn train(model: &mut RrModel, train_set: &[Example], val_set: &[Example], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::InvalidArgument("training and validation sets must be non-empty".into()));
    }
    check_disjoint(train_set, val_set)?;
    // Sampling works on a canonical order so the result does not depend on
    // how the caller arranged the examples.
    let mut order: Vec<&Example> = train_set.iter().collect();
    order.sort_by(|a, b| (&a.subject_id, &a.segment_id).cmp(&(&b.subject_id, &b.segment_id)));
    if cfg.init_output_bias {
        model.set_output_bias(order.iter().map(|e| e.label).sum::<f64>() / order.len() as f64);
    }
    let batch = cfg.batch_size.min(order.len());
    let (channels, length) = (model.config.input_channels, model.config.input_length);
    let total = (cfg.epochs * cfg.steps_per_epoch) as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(AdamConfig::default(), &model.store);
    let mut best = (f64::INFINITY, 0usize, model.store.clone());
    let mut history = Vec::new();
    let mut stale = 0;
    let mut step = 0u64;
    for epoch in 1..=cfg.epochs {
        let mut loss_sum = 0.0;
        let mut lr = 0.0;
        for _ in 0..cfg.steps_per_epoch {
            lr = cosine_decay(cfg.lr0, step, total);
            let idx = rand::seq::index::sample(&mut rng, order.len(), batch);
            let picked: Vec<&Example> = idx.iter().map(|i| order[i]).collect();
            let inputs: Vec<&[f32]> = picked.iter().map(|e| e.input.as_slice()).collect();
            let targets: Vec<f64> = picked.iter().map(|e| e.label).collect();
            let mut g = Graph::new();
            let x = g.input(batch_tensor(&inputs, channels, length)?)?;
            let pred = model.forward(&mut g, x, true)?;
            let loss = g.smooth_l1(pred, &targets)?;
            g.backward(loss)?;
            model.store.zero_grads();
            g.accumulate_param_grads(&mut model.store);
            adam.step(&mut model.store, lr);
            loss_sum += g.value(loss).data[0] / batch as f64;
            step += 1;
        }
        let val_mae = evaluate_mae(model, val_set, cfg.batch_size)?;
        let train_loss = loss_sum / cfg.steps_per_epoch as f64;
        log::info!("epoch {epoch}: train loss {train_loss:.4}, val MAE {val_mae:.4}, lr {lr:.2e}");
        history.push(EpochRecord { epoch, train_loss, val_mae, lr });
        if val_mae < best.0 {
            best = (val_mae, epoch, model.store.clone());
            stale = 0;
        } else {
            stale += 1;
            if cfg.early_stop_patience.is_some_and(|p| stale >= p) {
                break;
            }
        }
    }
    model.store.copy_values_from(&best.2);
    Ok(TrainOutcome { history, best_epoch: best.1, best_val_mae: best.0, steps: step })
}
