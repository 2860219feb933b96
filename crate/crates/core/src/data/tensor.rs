use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One multichannel epoch: `channels` rows of `samples` values, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochTensor {
    channels: usize,
    samples: usize,
    values: Vec<f64>,
}

impl EpochTensor {
    pub fn new(channels: usize, samples: usize, values: Vec<f64>) -> Result<Self> {
        if channels.checked_mul(samples) != Some(values.len()) {
            return Err(Error::InvalidConfig(format!(
                "{} values cannot fill a {channels}x{samples} epoch",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "non-finite value at index {i}"
            )));
        }
        Ok(Self {
            channels,
            samples,
            values,
        })
    }

    pub fn zeros(channels: usize, samples: usize) -> Self {
        Self {
            channels,
            samples,
            values: vec![0.0; channels * samples],
        }
    }

    /// Builds an epoch from a closure over `(channel, sample)`.
    pub fn from_fn(
        channels: usize,
        samples: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Self {
        let mut values = Vec::with_capacity(channels * samples);
        for c in 0..channels {
            for t in 0..samples {
                values.push(f(c, t));
            }
        }
        Self {
            channels,
            samples,
            values,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.channels, self.samples)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, channel: usize, sample: usize) -> f64 {
        self.values[channel * self.samples + sample]
    }

    pub fn check_shape(&self, channels: usize, samples: usize) -> Result<()> {
        if self.shape() != (channels, samples) {
            return Err(Error::ShapeMismatch {
                expected_channels: channels,
                expected_samples: samples,
                channels: self.channels,
                samples: self.samples,
            });
        }
        Ok(())
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn norm_l2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn norm_linf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Elementwise `self + scale * other`.
    pub fn add_scaled(&self, other: &Self, scale: f64) -> Self {
        self.zip_map(other, |a, b| a + scale * b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn scale(&self, factor: f64) -> Self {
        self.map(|v| v * factor)
    }

    pub fn midpoint(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| (a + b) / 2.0)
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        Self {
            channels: self.channels,
            samples: self.samples,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.shape(), other.shape());
        Self {
            channels: self.channels,
            samples: self.samples,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Rounds every value to the nearest binary32, the precision of the epoch file format.
    pub fn quantize_f32(&self) -> Self {
        self.map(|v| v as f32 as f64)
    }
}

/// `sign` with `sign(0) = 0`.
pub fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Epochs paired with class labels. All epochs share one shape.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledSet {
    epochs: Vec<EpochTensor>,
    labels: Vec<usize>,
}

impl LabeledSet {
    pub fn new(epochs: Vec<EpochTensor>, labels: Vec<usize>) -> Result<Self> {
        if epochs.len() != labels.len() {
            return Err(Error::InvalidConfig(format!(
                "{} epochs but {} labels",
                epochs.len(),
                labels.len()
            )));
        }
        if let Some(first) = epochs.first() {
            let (c, t) = first.shape();
            for e in &epochs[1..] {
                e.check_shape(c, t)?;
            }
        }
        Ok(Self { epochs, labels })
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn epochs(&self) -> &[EpochTensor] {
        &self.epochs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn into_parts(self) -> (Vec<EpochTensor>, Vec<usize>) {
        (self.epochs, self.labels)
    }

    /// `(channels, samples)` of the member epochs, or `None` when empty.
    pub fn shape(&self) -> Option<(usize, usize)> {
        self.epochs.first().map(EpochTensor::shape)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&EpochTensor, usize)> {
        self.epochs.iter().zip(self.labels.iter().copied())
    }

    pub fn push(&mut self, epoch: EpochTensor, label: usize) -> Result<()> {
        if let Some((c, t)) = self.shape() {
            epoch.check_shape(c, t)?;
        }
        self.epochs.push(epoch);
        self.labels.push(label);
        Ok(())
    }

    pub fn extend(&mut self, other: LabeledSet) -> Result<()> {
        for (e, l) in other.epochs.into_iter().zip(other.labels) {
            self.push(e, l)?;
        }
        Ok(())
    }

    /// Number of examples per class, indexed `0..classes`. Labels beyond `classes` are ignored.
    pub fn class_counts(&self, classes: usize) -> Vec<usize> {
        let mut counts = vec![0; classes];
        for &l in &self.labels {
            if l < classes {
                counts[l] += 1;
            }
        }
        counts
    }

    /// Sorted distinct labels present in the set.
    pub fn present_classes(&self) -> Vec<usize> {
        let mut present: Vec<usize> = self.labels.clone();
        present.sort_unstable();
        present.dedup();
        present
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledSet {
        LabeledSet {
            epochs: indices.iter().map(|&i| self.epochs[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

/// Per-channel z-scoring over all epochs. Off by default in every pipeline.
pub fn zscore_channels(epochs: &mut [EpochTensor]) {
    let Some(first) = epochs.first() else {
        return;
    };
    let (channels, samples) = first.shape();
    for c in 0..channels {
        let count = (epochs.len() * samples) as f64;
        let mean = epochs
            .iter()
            .flat_map(|e| &e.values[c * samples..(c + 1) * samples])
            .sum::<f64>()
            / count;
        let var = epochs
            .iter()
            .flat_map(|e| &e.values[c * samples..(c + 1) * samples])
            .map(|v| (v - mean).powi(2))
            .sum::<f64>()
            / count;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        for e in epochs.iter_mut() {
            for v in &mut e.values[c * samples..(c + 1) * samples] {
                *v = (*v - mean) / sd;
            }
        }
    }
}
