//! Decoder-only translation model with sparse expert blocks, its trainer and
//! checkpoints. Everything runs on the CPU in f64.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod model;
pub mod optim;
pub mod params;
pub mod tensor;
pub mod toy;
pub mod trainer;

pub use checkpoint::Checkpoint;
pub use config::{InitMode, ModelConfig, MoePlacement};
pub use error::{ModelError, Result};
pub use model::{backward, clm_loss, forward, forward_dense, generate, weighted_nll, ForwardCache, GateVector, Gradients};
pub use optim::{adamw_step, AdamState, OptimizerConfig};
pub use params::{ParamGroup, ParameterSet, TrainScope};
pub use tensor::Tensor;
pub use trainer::{train_stage1, train_stage2, Ablation, RunConfig, RunStage, Stage2Data, Start, TrainLog, TrainOutcome};
