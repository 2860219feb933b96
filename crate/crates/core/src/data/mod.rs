//! Epoch containers, synthetic datasets, class balancing, and the `EPO1` file format.

mod balance;
pub mod epo;
mod generate;
mod tensor;
pub mod text;

pub use balance::{balance_by_predicted_label, Shortfall};
pub use epo::{read_epochs, write_epochs};
pub use generate::{
    blob_means, class_templates, gen_blobs, gen_synthetic_epochs, BlobConfig, SyntheticEpochConfig,
};
pub use tensor::{sign, zscore_channels, EpochTensor, LabeledSet};
