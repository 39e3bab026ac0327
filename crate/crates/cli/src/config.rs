use std::path::Path;

use anyhow::{Context, Result};
use rrforge_core::baselines::BaselineParams;
use rrforge_core::groundtruth::KalmanParams;
use rrforge_core::pipeline::{ReferenceGate, Windowing};
use rrforge_core::quality::QualityParams;
use rrforge_core::respir::IcaOptions;
use rrforge_nn::{ModelConfig, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Every tunable of a run. Missing fields take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub windowing: Windowing,
    pub quality: QualityParams,
    pub reference_gate: ReferenceGate,
    pub kalman: KalmanParams,
    pub ica: IcaOptions,
    pub baseline: BaselineParams,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            windowing: Windowing::default(),
            quality: QualityParams::default(),
            reference_gate: ReferenceGate::default(),
            kalman: KalmanParams::default(),
            ica: IcaOptions::default(),
            baseline: BaselineParams::default(),
            model: ModelConfig::desk(),
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
            }
        }
    }

    /// Training settings with the run seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { seed: self.seed, ..self.train.clone() }
    }

    pub fn hash(&self) -> String {
        hash_json(self)
    }
}

/// Hex SHA-256 of the compact JSON encoding.
pub fn hash_json<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config serializes");
    hex(&Sha256::digest(bytes))
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Provenance written next to tabular outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactMeta {
    pub config_hash: String,
    pub seed: u64,
}

impl ArtifactMeta {
    pub fn of(cfg: &RunConfig) -> Self {
        Self { config_hash: cfg.hash(), seed: cfg.seed }
    }
}
