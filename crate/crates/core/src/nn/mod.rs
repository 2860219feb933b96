//! Small differentiable classifiers used as targets and substitutes.

pub mod checkpoint;
mod layers;
mod model;
mod spec;
mod train;

pub use model::{AdamState, Model};
pub use spec::{Activation, Architecture, ModelSpec};
pub use train::{class_weights, ClassWeighting, TrainConfig, TrainReport};
