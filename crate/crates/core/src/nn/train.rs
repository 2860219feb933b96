//! Mini-batch Adam on class-weighted cross-entropy with validation early stopping.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::LabeledSet;
use crate::error::{Error, Result};
use crate::nn::model::{AdamState, Model};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassWeighting {
    Uniform,
    /// `1 / count`, rescaled so the weights of present classes average to 1.
    InverseFrequency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub class_weighting: ClassWeighting,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_epochs: 200,
            patience: 10,
            validation_fraction: 0.2,
            class_weighting: ClassWeighting::InverseFrequency,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return bad("learning rate must be positive");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad("validation fraction must lie strictly between 0 and 1");
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || (self.epsilon.is_nan() || self.epsilon <= 0.0)
        {
            return bad("Adam betas must lie in [0, 1) and epsilon must be positive");
        }
        Ok(())
    }
}

/// Loss curves of one call to [`Model::train`]. Index 0 holds the losses of the
/// starting parameters, index `e` those after epoch `e`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
    /// Index into the curves of the parameters that were kept.
    pub best_epoch: usize,
}

impl TrainReport {
    pub fn best_validation_loss(&self) -> f64 {
        self.validation_loss[self.best_epoch]
    }
}

/// Per-class loss weights for `labels` over `classes` classes.
pub fn class_weights(labels: &[usize], classes: usize, mode: ClassWeighting) -> Result<Vec<f64>> {
    let mut counts = vec![0usize; classes];
    for &l in labels {
        if l >= classes {
            return Err(Error::InvalidLabel { label: l, classes });
        }
        counts[l] += 1;
    }
    match mode {
        ClassWeighting::Uniform => Ok(vec![1.0; classes]),
        ClassWeighting::InverseFrequency => {
            let present = counts.iter().filter(|&&c| c > 0).count();
            if present < 2 {
                return Err(Error::InvalidConfig(
                    "inverse-frequency weighting needs at least two represented classes".into(),
                ));
            }
            let inv: Vec<f64> = counts
                .iter()
                .map(|&c| if c > 0 { 1.0 / c as f64 } else { 0.0 })
                .collect();
            let mean = inv.iter().sum::<f64>() / present as f64;
            Ok(counts
                .iter()
                .zip(&inv)
                .map(|(&c, &w)| if c > 0 { w / mean } else { 1.0 })
                .collect())
        }
    }
}

impl Model {
    /// Mean of `weight[y] * (-ln p_y)` over the set.
    pub fn weighted_loss(&self, data: &LabeledSet, weights: &[f64]) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::Empty("loss over an empty set"));
        }
        let mut total = 0.0;
        for (x, y) in data.iter() {
            total += weights[y] * self.loss(x, y)?;
        }
        Ok(total / data.len() as f64)
    }

    /// Trains in place and keeps the parameters with the lowest validation loss seen,
    /// including the starting parameters.
    ///
    /// A seeded shuffle holds out `round(validation_fraction * n)` examples (at least
    /// one, and at least one left for training). A single-example set validates on its
    /// training example.
    pub fn train(&mut self, data: &LabeledSet, cfg: &TrainConfig) -> Result<TrainReport> {
        cfg.validate()?;
        if data.is_empty() {
            return Err(Error::Empty("training set"));
        }
        let (c, t) = (self.spec().channels, self.spec().samples);
        for (x, _) in data.iter() {
            x.check_shape(c, t)?;
        }
        let classes = self.spec().classes;
        let weights = class_weights(data.labels(), classes, cfg.class_weighting)?;

        let mut rng = rng::seeded(cfg.seed);
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng);
        let (train_idx, val_idx) = if data.len() == 1 {
            (order.clone(), order)
        } else {
            let n_val = ((cfg.validation_fraction * data.len() as f64).round() as usize)
                .clamp(1, data.len() - 1);
            let (v, tr) = order.split_at(n_val);
            (tr.to_vec(), v.to_vec())
        };
        let train_set = data.subset(&train_idx);
        let val_set = data.subset(&val_idx);

        let n = self.param_count();
        if self.optimizer_state().first.len() != n {
            *self.params_and_optimizer().1 = AdamState {
                first: vec![0.0; n],
                second: vec![0.0; n],
                step: 0,
            };
        }

        let mut report = TrainReport {
            train_loss: vec![self.weighted_loss(&train_set, &weights)?],
            validation_loss: vec![self.weighted_loss(&val_set, &weights)?],
            best_epoch: 0,
        };
        let mut best_params = self.params().to_vec();
        let mut best_val = report.validation_loss[0];
        let mut stale = 0;
        let mut grad = vec![0.0; n];
        let mut batch_order: Vec<usize> = (0..train_set.len()).collect();

        for epoch in 1..=cfg.max_epochs {
            batch_order.shuffle(&mut rng);
            for batch in batch_order.chunks(cfg.batch_size) {
                grad.iter_mut().for_each(|g| *g = 0.0);
                for &i in batch {
                    let y = train_set.labels()[i];
                    self.accumulate_param_gradient(
                        &train_set.epochs()[i],
                        y,
                        weights[y],
                        &mut grad,
                    );
                }
                let scale = 1.0 / batch.len() as f64;
                self.adam_step(&grad, scale, cfg);
            }
            let train_loss = self.weighted_loss(&train_set, &weights)?;
            let val_loss = self.weighted_loss(&val_set, &weights)?;
            report.train_loss.push(train_loss);
            report.validation_loss.push(val_loss);
            if val_loss < best_val {
                best_val = val_loss;
                best_params.copy_from_slice(self.params());
                report.best_epoch = epoch;
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.patience {
                    break;
                }
            }
        }
        self.set_params(best_params);
        Ok(report)
    }

    fn adam_step(&mut self, grad: &[f64], scale: f64, cfg: &TrainConfig) {
        let (params, state) = self.params_and_optimizer();
        state.step += 1;
        let t = state.step as i32;
        let bias1 = 1.0 - cfg.beta1.powi(t);
        let bias2 = 1.0 - cfg.beta2.powi(t);
        for (i, p) in params.iter_mut().enumerate() {
            let g = grad[i] * scale;
            let m = cfg.beta1 * state.first[i] + (1.0 - cfg.beta1) * g;
            let v = cfg.beta2 * state.second[i] + (1.0 - cfg.beta2) * g * g;
            state.first[i] = m;
            state.second[i] = v;
            *p -= cfg.learning_rate * (m / bias1) / ((v / bias2).sqrt() + cfg.epsilon);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::Classifier;
    use crate::data::{gen_blobs, BlobConfig};
    use crate::nn::spec::ModelSpec;

    fn blobs(n: usize, seed: u64) -> LabeledSet {
        gen_blobs(&BlobConfig {
            n_per_class: n,
            classes: 2,
            channels: 1,
            samples: 4,
            separation: 6.0,
            sigma: 1.0,
            task_seed: 0,
            seed,
        })
        .unwrap()
    }

    fn accuracy(m: &Model, data: &LabeledSet) -> f64 {
        data.iter()
            .filter(|(x, y)| m.predict(x).unwrap() == *y)
            .count() as f64
            / data.len() as f64
    }

    #[test]
    fn fits_separable_blobs() {
        let data = blobs(20, 3);
        let mut m = Model::new(ModelSpec::linear(1, 4, 2, 1)).unwrap();
        m.train(&data, &TrainConfig::default()).unwrap();
        assert!(accuracy(&m, &data) >= 0.95);
    }

    #[test]
    fn config_preconditions() {
        let data = blobs(5, 0);
        let mut m = Model::new(ModelSpec::linear(1, 4, 2, 1)).unwrap();
        for cfg in [
            TrainConfig {
                patience: 0,
                ..Default::default()
            },
            TrainConfig {
                learning_rate: 0.0,
                ..Default::default()
            },
            TrainConfig {
                validation_fraction: 1.0,
                ..Default::default()
            },
            TrainConfig {
                validation_fraction: 0.0,
                ..Default::default()
            },
        ] {
            assert!(matches!(m.train(&data, &cfg), Err(Error::InvalidConfig(_))));
        }
        assert!(matches!(
            m.train(&LabeledSet::default(), &TrainConfig::default()),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn single_class_needs_uniform_weights() {
        let data = blobs(5, 0);
        let idx: Vec<usize> = (0..data.len()).filter(|&i| data.labels()[i] == 0).collect();
        let one_class = data.subset(&idx);
        let mut m = Model::new(ModelSpec::linear(1, 4, 2, 1)).unwrap();
        assert!(m.train(&one_class, &TrainConfig::default()).is_err());
        let uniform = TrainConfig {
            class_weighting: ClassWeighting::Uniform,
            ..Default::default()
        };
        assert!(m.train(&one_class, &uniform).is_ok());
    }

    #[test]
    fn training_is_deterministic() {
        let data = blobs(15, 8);
        let spec = ModelSpec::mlp(1, 4, 2, vec![6], 5);
        let cfg = TrainConfig {
            seed: 17,
            ..Default::default()
        };
        let mut a = Model::new(spec.clone()).unwrap();
        let mut b = Model::new(spec).unwrap();
        let ra = a.train(&data, &cfg).unwrap();
        let rb = b.train(&data, &cfg).unwrap();
        assert_eq!(ra, rb);
        assert_eq!(a.params(), b.params());
    }

    #[test]
    fn kept_parameters_have_the_lowest_validation_loss() {
        let data = blobs(30, 2);
        let mut m = Model::new(ModelSpec::mlp(1, 4, 2, vec![8], 3)).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.2,
            patience: 3,
            ..Default::default()
        };
        let report = m.train(&data, &cfg).unwrap();
        let best = report.best_validation_loss();
        assert!(report.validation_loss.iter().all(|&v| best <= v));
        assert!(report.validation_loss.len() <= cfg.max_epochs + 1);
    }

    #[test]
    fn inverse_frequency_weights_average_one() {
        let w = class_weights(&[0, 0, 0, 1, 2, 2], 4, ClassWeighting::InverseFrequency).unwrap();
        let present_mean = (w[0] + w[1] + w[2]) / 3.0;
        assert!((present_mean - 1.0).abs() < 1e-12);
        assert!((w[1] / w[0] - 3.0).abs() < 1e-12);
        assert_eq!(w[3], 1.0);
        assert!(class_weights(&[0, 5], 2, ClassWeighting::Uniform).is_err());
    }

    #[test]
    fn uniform_weighted_loss_equals_plain_loss() {
        let data = blobs(10, 4);
        let m = Model::new(ModelSpec::mlp(1, 4, 2, vec![5], 9)).unwrap();
        let weighted = m.weighted_loss(&data, &[1.0, 1.0]).unwrap();
        let plain =
            data.iter().map(|(x, y)| m.loss(x, y).unwrap()).sum::<f64>() / data.len() as f64;
        assert_eq!(weighted, plain);
    }
}
