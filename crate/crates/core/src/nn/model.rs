use crate::classifier::{argmax, Classifier, Differentiable};
use crate::data::EpochTensor;
use crate::error::{Error, Result};
use crate::nn::layers::{cross_entropy, softmax, Stack};
use crate::nn::spec::ModelSpec;
use crate::rng;

/// Adam moments carried between calls to [`Model::train`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdamState {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
    pub step: u64,
}

/// A small differentiable classifier over `C x T` epochs.
///
/// Serves both as the target behind an oracle and as the attacker's substitute.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    stack: Stack,
    params: Vec<f64>,
    optimizer: AdamState,
}

impl Model {
    /// Builds a model with seeded initial parameters.
    pub fn new(spec: ModelSpec) -> Result<Self> {
        spec.validate()?;
        let stack = Stack::from_spec(&spec);
        let params = stack.init_params(&mut rng::seeded(spec.seed));
        Ok(Self {
            spec,
            stack,
            params,
            optimizer: AdamState::default(),
        })
    }

    pub fn from_params(spec: ModelSpec, params: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        let stack = Stack::from_spec(&spec);
        if params.len() != stack.param_count() {
            return Err(Error::InvalidConfig(format!(
                "spec needs {} parameters, got {}",
                stack.param_count(),
                params.len()
            )));
        }
        Ok(Self {
            spec,
            stack,
            params,
            optimizer: AdamState::default(),
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn optimizer_state(&self) -> &AdamState {
        &self.optimizer
    }

    /// Restores the seeded initial parameters and clears optimizer state.
    pub fn reinitialize(&mut self) {
        self.params = self.stack.init_params(&mut rng::seeded(self.spec.seed));
        self.optimizer = AdamState::default();
    }

    fn check_input(&self, x: &EpochTensor) -> Result<()> {
        x.check_shape(self.spec.channels, self.spec.samples)
    }

    fn check_label(&self, y: usize) -> Result<()> {
        if y >= self.spec.classes {
            return Err(Error::InvalidLabel {
                label: y,
                classes: self.spec.classes,
            });
        }
        Ok(())
    }

    pub fn logits(&self, x: &EpochTensor) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.stack.logits(&self.params, x.as_slice()))
    }

    pub fn forward(&self, x: &EpochTensor) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(x)?))
    }

    /// Cross-entropy `-ln p_y`.
    pub fn loss(&self, x: &EpochTensor, y: usize) -> Result<f64> {
        self.check_label(y)?;
        Ok(cross_entropy(&self.logits(x)?, y))
    }

    /// Input gradient of `weight * (-ln p_y)`.
    pub fn weighted_input_gradient(
        &self,
        x: &EpochTensor,
        y: usize,
        weight: f64,
    ) -> Result<EpochTensor> {
        self.check_input(x)?;
        self.check_label(y)?;
        let acts = self.stack.forward(&self.params, x.as_slice());
        let grad_logits = loss_gradient(acts.last().expect("logits"), y, weight);
        let dx = self.stack.backward(&self.params, &acts, grad_logits, None);
        EpochTensor::new(self.spec.channels, self.spec.samples, dx)
    }

    /// Adds `weight * d(-ln p_y)/d(params)` into `grad` and returns the weighted loss.
    pub(crate) fn accumulate_param_gradient(
        &self,
        x: &EpochTensor,
        y: usize,
        weight: f64,
        grad: &mut [f64],
    ) -> f64 {
        let acts = self.stack.forward(&self.params, x.as_slice());
        let logits = acts.last().expect("logits");
        let loss = weight * cross_entropy(logits, y);
        let grad_logits = loss_gradient(logits, y, weight);
        self.stack
            .backward(&self.params, &acts, grad_logits, Some(grad));
        loss
    }

    pub(crate) fn params_and_optimizer(&mut self) -> (&mut [f64], &mut AdamState) {
        (&mut self.params, &mut self.optimizer)
    }

    pub(crate) fn set_params(&mut self, params: Vec<f64>) {
        debug_assert_eq!(params.len(), self.params.len());
        self.params = params;
    }
}

/// `weight * (softmax(z) - onehot(y))`.
fn loss_gradient(logits: &[f64], y: usize, weight: f64) -> Vec<f64> {
    let mut g = softmax(logits);
    g[y] -= 1.0;
    g.iter_mut().for_each(|v| *v *= weight);
    g
}

impl Classifier for Model {
    fn input_shape(&self) -> (usize, usize) {
        (self.spec.channels, self.spec.samples)
    }

    fn num_classes(&self) -> usize {
        self.spec.classes
    }

    fn predict(&self, x: &EpochTensor) -> Result<usize> {
        Ok(argmax(&self.forward(x)?))
    }
}

impl Differentiable for Model {
    fn probabilities(&self, x: &EpochTensor) -> Result<Vec<f64>> {
        self.forward(x)
    }

    fn input_gradient(&self, x: &EpochTensor, y: usize) -> Result<EpochTensor> {
        self.weighted_input_gradient(x, y, 1.0)
    }
}
