use std::cell::Cell;

use crate::data::EpochTensor;
use crate::error::Result;

/// Anything that maps an epoch to a class label.
pub trait Classifier {
    /// `(channels, samples)` accepted by [`Classifier::predict`].
    fn input_shape(&self) -> (usize, usize);

    fn num_classes(&self) -> usize;

    fn predict(&self, x: &EpochTensor) -> Result<usize>;
}

/// A classifier with softmax outputs and exact input gradients of its loss.
pub trait Differentiable: Classifier {
    fn probabilities(&self, x: &EpochTensor) -> Result<Vec<f64>>;

    /// Gradient of the cross-entropy loss `-ln p_y` with respect to every input entry.
    fn input_gradient(&self, x: &EpochTensor, y: usize) -> Result<EpochTensor>;
}

impl<T: Classifier + ?Sized> Classifier for &T {
    fn input_shape(&self) -> (usize, usize) {
        (**self).input_shape()
    }

    fn num_classes(&self) -> usize {
        (**self).num_classes()
    }

    fn predict(&self, x: &EpochTensor) -> Result<usize> {
        (**self).predict(x)
    }
}

impl<T: Differentiable + ?Sized> Differentiable for &T {
    fn probabilities(&self, x: &EpochTensor) -> Result<Vec<f64>> {
        (**self).probabilities(x)
    }

    fn input_gradient(&self, x: &EpochTensor, y: usize) -> Result<EpochTensor> {
        (**self).input_gradient(x, y)
    }
}

/// Counts `predict` calls on the wrapped classifier.
#[derive(Debug)]
pub struct CountingClassifier<C> {
    inner: C,
    calls: Cell<u64>,
}

impl<C: Classifier> CountingClassifier<C> {
    pub fn new(inner: C) -> Self {
        Self {
            inner,
            calls: Cell::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.get()
    }

    pub fn into_inner(self) -> C {
        self.inner
    }
}

impl<C: Classifier> Classifier for CountingClassifier<C> {
    fn input_shape(&self) -> (usize, usize) {
        self.inner.input_shape()
    }

    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    fn predict(&self, x: &EpochTensor) -> Result<usize> {
        self.calls.set(self.calls.get() + 1);
        self.inner.predict(x)
    }
}

/// Lowest-index argmax.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
