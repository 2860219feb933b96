//! Substitute training against a label-only oracle: boundary-seeking query synthesis
//! and the Jacobian-augmentation baseline.

mod active;
mod boundary;
mod jacobian;
mod trace;

pub use active::{
    continue_active, one_vs_one_quotas, pretrain_substitute, synthesize_epoch,
    synthesize_one_vs_one, train_substitute_active, RetrainMode, SubstituteRun, SynthesisConfig,
};
pub use boundary::{
    binary_search_pair, mid_perpendicular, orthogonal_offset, random_normal_epoch,
    select_opposite_pair, OppositePair, DEFAULT_RESAMPLE_LIMIT,
};
pub use jacobian::{
    continue_jacobian, jacobian_augment, train_substitute_jacobian, JacobianConfig,
};
pub use trace::{write_trace_csv, AugmentationTrace, TraceRecord};
