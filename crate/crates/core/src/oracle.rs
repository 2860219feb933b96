//! Label-only access to a target classifier.
//!
//! [`TargetOracle`] is the only handle an attack gets on the target model. It answers
//! with labels, counts every labeled epoch, and refuses calls that would overrun an
//! optional budget. Nothing else about the wrapped model is reachable through it.

use crate::classifier::Classifier;
use crate::data::EpochTensor;
use crate::error::{Error, Result};

pub struct TargetOracle<M> {
    inner: M,
    queries: u64,
    budget: Option<u64>,
}

impl<M: Classifier> TargetOracle<M> {
    pub fn new(inner: M) -> Self {
        Self {
            inner,
            queries: 0,
            budget: None,
        }
    }

    pub fn with_budget(inner: M, budget: u64) -> Result<Self> {
        if budget == 0 {
            return Err(Error::InvalidConfig("query budget must be positive".into()));
        }
        Ok(Self {
            inner,
            queries: 0,
            budget: Some(budget),
        })
    }

    /// Labels every epoch in `xs`. The call either labels all of them and counts
    /// `xs.len()` queries, or fails without touching the counter.
    pub fn query_labels(&mut self, xs: &[EpochTensor]) -> Result<Vec<usize>> {
        let (c, t) = self.inner.input_shape();
        for x in xs {
            x.check_shape(c, t)?;
        }
        let requested = xs.len() as u64;
        if let Some(budget) = self.budget {
            let remaining = budget - self.queries;
            if requested > remaining {
                return Err(Error::BudgetExhausted {
                    requested,
                    remaining,
                    budget,
                });
            }
        }
        let labels = xs
            .iter()
            .map(|x| self.inner.predict(x))
            .collect::<Result<Vec<_>>>()?;
        self.queries += requested;
        Ok(labels)
    }

    pub fn query_count(&self) -> u64 {
        self.queries
    }

    pub fn budget(&self) -> Option<u64> {
        self.budget
    }

    pub fn remaining(&self) -> Option<u64> {
        self.budget.map(|b| b - self.queries)
    }

    pub fn input_shape(&self) -> (usize, usize) {
        self.inner.input_shape()
    }

    pub fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }
}

impl<M> std::fmt::Debug for TargetOracle<M> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TargetOracle")
            .field("queries", &self.queries)
            .field("budget", &self.budget)
            .finish_non_exhaustive()
    }
}
