use rand::seq::index;

use crate::classifier::Classifier;
use crate::data::tensor::EpochTensor;
use crate::error::{Error, Result};
use crate::oracle::TargetOracle;
use crate::rng;

/// How to treat a predicted class with fewer than `per_class` members.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shortfall {
    Fail,
    TakeAll,
}

/// Labels the whole pool through the oracle (`pool.len()` queries), then draws
/// `per_class` epochs uniformly without replacement from each predicted class.
///
/// The result is ordered by predicted class, then by pool index.
pub fn balance_by_predicted_label<M: Classifier>(
    oracle: &mut TargetOracle<M>,
    pool: &[EpochTensor],
    per_class: usize,
    seed: u64,
    shortfall: Shortfall,
) -> Result<Vec<EpochTensor>> {
    let classes = oracle.num_classes();
    let predicted = oracle.query_labels(pool)?;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &l) in predicted.iter().enumerate() {
        members[l].push(i);
    }
    let mut rng = rng::seeded(seed);
    let mut out = Vec::with_capacity(classes * per_class);
    for (class, idx) in members.iter().enumerate() {
        if idx.len() < per_class && shortfall == Shortfall::Fail {
            return Err(Error::InsufficientClass {
                class,
                wanted: per_class,
                found: idx.len(),
            });
        }
        let take = per_class.min(idx.len());
        let mut picked: Vec<usize> = index::sample(&mut rng, idx.len(), take)
            .into_iter()
            .map(|k| idx[k])
            .collect();
        picked.sort_unstable();
        out.extend(picked.into_iter().map(|i| pool[i].clone()));
    }
    Ok(out)
}
