use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    pub(crate) fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z` and the output `a`.
    pub(crate) fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Architecture {
    /// Dense softmax on the flattened epoch.
    LinearSoftmax,
    /// One or two hidden dense layers.
    MultilayerPerceptron,
    /// Temporal convolution spanning every channel (`hidden[0]` filters of width
    /// `kernel`), activation, non-overlapping average pooling of width `pool`, dense
    /// softmax.
    TemporalConvNet { kernel: usize, pool: usize },
}

/// Shape and architecture of a classifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub architecture: Architecture,
    pub channels: usize,
    pub samples: usize,
    pub classes: usize,
    #[serde(default)]
    pub hidden: Vec<usize>,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    #[serde(default)]
    pub seed: u64,
}

fn default_activation() -> Activation {
    Activation::Relu
}

impl ModelSpec {
    pub fn linear(channels: usize, samples: usize, classes: usize, seed: u64) -> Self {
        Self {
            architecture: Architecture::LinearSoftmax,
            channels,
            samples,
            classes,
            hidden: Vec::new(),
            activation: Activation::Relu,
            seed,
        }
    }

    pub fn mlp(
        channels: usize,
        samples: usize,
        classes: usize,
        hidden: Vec<usize>,
        seed: u64,
    ) -> Self {
        Self {
            architecture: Architecture::MultilayerPerceptron,
            channels,
            samples,
            classes,
            hidden,
            activation: Activation::Relu,
            seed,
        }
    }

    pub fn temporal_conv(
        channels: usize,
        samples: usize,
        classes: usize,
        filters: usize,
        kernel: usize,
        pool: usize,
        seed: u64,
    ) -> Self {
        Self {
            architecture: Architecture::TemporalConvNet { kernel, pool },
            channels,
            samples,
            classes,
            hidden: vec![filters],
            activation: Activation::Relu,
            seed,
        }
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn input_len(&self) -> usize {
        self.channels * self.samples
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.classes));
        }
        if self.channels == 0 || self.samples == 0 {
            return bad(format!(
                "empty input shape {}x{}",
                self.channels, self.samples
            ));
        }
        if self.hidden.contains(&0) {
            return bad("hidden sizes must be at least 1".into());
        }
        match self.architecture {
            Architecture::LinearSoftmax if !self.hidden.is_empty() => {
                bad("linear-softmax takes no hidden sizes".into())
            }
            Architecture::MultilayerPerceptron if !(1..=2).contains(&self.hidden.len()) => {
                bad(format!(
                    "multilayer-perceptron takes 1 or 2 hidden sizes, got {}",
                    self.hidden.len()
                ))
            }
            Architecture::TemporalConvNet { kernel, pool } => {
                if self.hidden.len() != 1 {
                    return bad(
                        "temporal-conv-net takes exactly one hidden size (filter count)".into(),
                    );
                }
                if kernel == 0 || kernel > self.samples {
                    return bad(format!(
                        "kernel {kernel} does not fit {} samples",
                        self.samples
                    ));
                }
                if pool == 0 || pool > self.samples - kernel + 1 {
                    return bad(format!(
                        "pool {pool} does not fit {} convolution outputs",
                        self.samples - kernel + 1
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}
