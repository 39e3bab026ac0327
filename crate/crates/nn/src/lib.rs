//! A small reverse-mode tensor engine and the respiratory-rate network
//! built on it.

pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod model;
pub mod optim;
pub mod params;
pub mod serialize;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use graph::{ConvSpec, Graph, Var};
pub use model::{ModelConfig, RrModel, StagePlan};
pub use tensor::Tensor;
pub use train::{train, EpochRecord, Example, TrainConfig, TrainOutcome};
