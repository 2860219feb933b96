use std::io::Write;

use serde::Serialize;

use crate::data::LabeledSet;
use crate::error::{Error, Result};

/// Query and data-size snapshot taken after each training round. Iteration 0 is the
/// pre-training round on the initial set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TraceRecord {
    pub iteration: usize,
    /// Target queries issued by the substitute-training run so far.
    pub target_queries: u64,
    /// Substitute label evaluations issued while synthesizing so far.
    pub substitute_queries: u64,
    pub train_set_size: usize,
}

/// Per-iteration accounting of a substitute-training run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AugmentationTrace {
    pub records: Vec<TraceRecord>,
    /// Oracle-labeled additions of each augmentation iteration, in order.
    pub increments: Vec<LabeledSet>,
}

impl AugmentationTrace {
    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn target_queries(&self) -> u64 {
        self.last().map_or(0, |r| r.target_queries)
    }

    /// Target queries spent on augmentation, i.e. beyond the initial labeling.
    pub fn augmentation_queries(&self) -> u64 {
        match (self.records.first(), self.records.last()) {
            (Some(first), Some(last)) => last.target_queries - first.target_queries,
            _ => 0,
        }
    }

    /// CSV with header `iteration,target_queries,substitute_queries,train_set_size`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_trace_csv(&self.records, out)
    }
}

pub fn write_trace_csv<W: Write>(records: &[TraceRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)
            .map_err(|e| Error::Parse(format!("trace csv: {e}")))?;
    }
    w.flush()
        .map_err(|e| Error::Parse(format!("trace csv: {e}")))?;
    Ok(())
}
