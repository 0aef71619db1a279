//! Hall-effect sign-language glove.
//!
//! Simulates the glove's sensor physics and firmware loop, generates
//! multi-subject gesture datasets, trains a small sigmoid MLP with Adam and
//! exports its weights for the on-glove inference engine.

// Index loops mirror the matrix maths; `!(a < b)` checks also reject NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod app;
pub mod dataset;
pub mod error;
pub mod export;
pub mod firmware;
pub mod hand;
pub mod neural;
pub mod numfmt;
pub mod physics;
pub mod pipeline;
pub mod script;
pub mod session;

pub use dataset::{GestureDataset, SampleRecord, SplitSpec, SynthConfig};
pub use error::ConfigError;
pub use firmware::{FirmwareState, WireFrame};
pub use hand::{AnthropometricProfile, HandPose, JointId, Vocabulary};
pub use neural::{MlpParameters, NormalizationSpec, TrainConfig, TrainReport};
pub use physics::{GloveModel, SensorFrame};
