//! Signal processing for wrist respiratory-rate estimation: resampling and
//! windowing, PPG quality gating, IMU respiration extraction, chest
//! ground-truth labelling, classical baselines, metrics and a synthetic
//! recording generator.

pub mod baselines;
pub mod error;
pub mod groundtruth;
pub mod io;
pub mod metrics;
pub mod ocsvm;
pub mod pipeline;
pub mod quality;
pub mod respir;
pub mod signal;
pub mod spectral;
pub mod synth;

pub use error::{Error, Result};
