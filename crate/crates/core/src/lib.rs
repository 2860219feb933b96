//! Black-box transfer attacks on label-only classifiers, with substitute models
//! trained by query-synthesis active learning.
//!
//! The attacker sees the target only through a [`TargetOracle`](oracle::TargetOracle)
//! that answers with labels and counts queries. A substitute [`Model`](nn::Model) is
//! trained on oracle-labeled epochs, grown either by boundary-seeking synthesis
//! ([`synthesis::train_substitute_active`]) or by Jacobian-sign augmentation
//! ([`synthesis::train_substitute_jacobian`]). Adversarial examples are then crafted on
//! the substitute ([`attack`]) and scored against the target ([`eval`]).

pub mod attack;
pub mod classifier;
pub mod data;
mod error;
pub mod eval;
pub mod experiment;
pub mod nn;
pub mod oracle;
pub mod rng;
pub mod synthesis;

pub use classifier::{Classifier, Differentiable};
pub use data::{EpochTensor, LabeledSet};
pub use error::{Error, Result};
pub use nn::{Model, ModelSpec, TrainConfig};
pub use oracle::TargetOracle;
