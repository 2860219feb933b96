//! Jacobian-sign dataset augmentation, the baseline substitute-training strategy.
//!
//! Each iteration steps every epoch of `D` by `step * sign(grad_x J(x, y_hat))`,
//! where `y_hat` is the substitute's own prediction, labels the new epochs through
//! the oracle and retrains. `D` doubles every iteration, so `N` iterations cost
//! `|S0| * (2^N - 1)` augmentation queries unless capped.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::classifier::{Classifier, Differentiable};
use crate::data::{sign, EpochTensor, LabeledSet};
use crate::error::{Error, Result};
use crate::nn::{Model, ModelSpec, TrainConfig};
use crate::oracle::TargetOracle;
use crate::rng;
use crate::synthesis::active::{check_budget, pretrain_substitute, SubstituteRun};
use crate::synthesis::trace::AugmentationTrace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JacobianConfig {
    /// Step size `lambda`.
    pub step: f64,
    pub iterations: usize,
    /// Upper bound on target queries for the whole run, initial set included. The
    /// last iteration labels a seeded uniform subset of its new epochs to fit.
    pub query_cap: Option<u64>,
    pub seed: u64,
}

impl Default for JacobianConfig {
    fn default() -> Self {
        Self {
            step: 0.5,
            iterations: 1,
            query_cap: None,
            seed: 0,
        }
    }
}

impl JacobianConfig {
    pub fn validate(&self) -> Result<()> {
        if self.step.is_nan() || self.step <= 0.0 {
            return Err(Error::InvalidConfig(
                "jacobian step must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// `x + step * sign(grad_x J(x, f(x)))` for every epoch of `data`, in order.
pub fn jacobian_augment<D: Differentiable + ?Sized>(
    data: &LabeledSet,
    f: &D,
    step: f64,
) -> Result<Vec<EpochTensor>> {
    if step.is_nan() || step <= 0.0 {
        return Err(Error::InvalidConfig(
            "jacobian step must be positive".into(),
        ));
    }
    data.epochs()
        .iter()
        .map(|x| {
            let y_hat = f.predict(x)?;
            let grad = f.input_gradient(x, y_hat)?;
            Ok(x.add_scaled(&grad.map(sign), step))
        })
        .collect()
}

/// Runs Jacobian augmentation rounds on top of a pre-trained substitute.
pub fn continue_jacobian<M: Classifier>(
    oracle: &mut TargetOracle<M>,
    mut run: SubstituteRun,
    cfg: &JacobianConfig,
) -> Result<SubstituteRun> {
    cfg.validate()?;
    let mut rng = rng::seeded(cfg.seed);
    for _ in 0..cfg.iterations {
        let mut fresh = jacobian_augment(&run.data, &run.model, cfg.step)?;
        run.add_substitute_queries(run.data.len() as u64);
        if let Some(cap) = cfg.query_cap {
            let spent = run.target_queries(oracle.query_count());
            let left = cap.saturating_sub(spent) as usize;
            if left == 0 {
                break;
            }
            if fresh.len() > left {
                let mut keep = index::sample(&mut rng, fresh.len(), left).into_vec();
                keep.sort_unstable();
                fresh = keep.into_iter().map(|i| fresh[i].clone()).collect();
            }
        }
        check_budget(oracle, fresh.len() as u64)?;
        let labels = oracle.query_labels(&fresh)?;
        let increment = LabeledSet::new(fresh, labels)?;
        run.absorb(oracle, increment, false)?;
    }
    Ok(run)
}

pub fn train_substitute_jacobian<M: Classifier>(
    oracle: &mut TargetOracle<M>,
    initial: &[EpochTensor],
    spec: &ModelSpec,
    train_cfg: &TrainConfig,
    cfg: &JacobianConfig,
) -> Result<(Model, AugmentationTrace)> {
    cfg.validate()?;
    if let Some(cap) = cfg.query_cap {
        if cap < initial.len() as u64 {
            return Err(Error::InvalidConfig(format!(
                "query cap {cap} is below the initial set size {}",
                initial.len()
            )));
        }
    }
    let run = pretrain_substitute(oracle, initial, spec, train_cfg)?;
    let run = continue_jacobian(oracle, run, cfg)?;
    Ok((run.model, run.trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn logistic(w: &[f64]) -> Model {
        let spec = ModelSpec::linear(1, w.len(), 2, 0);
        let mut params = vec![0.0; w.len()];
        params.extend_from_slice(w);
        params.extend_from_slice(&[0.0, 0.0]);
        Model::from_params(spec, params).unwrap()
    }

    #[test]
    fn zero_gradient_copies_the_set() {
        let m = logistic(&[0.0, 0.0]);
        let xs = vec![
            EpochTensor::new(1, 2, vec![1.0, 2.0]).unwrap(),
            EpochTensor::new(1, 2, vec![-3.0, 0.5]).unwrap(),
        ];
        let set = LabeledSet::new(xs.clone(), vec![0, 1]).unwrap();
        assert_eq!(jacobian_augment(&set, &m, 0.5).unwrap(), xs);
    }

    #[test]
    fn logistic_step_follows_analytic_sign() {
        let w = [0.7, -1.2, 0.0, 2.0];
        let m = logistic(&w);
        let x = EpochTensor::new(1, 4, vec![0.3, 0.1, -0.2, 0.4]).unwrap();
        let set = LabeledSet::new(vec![x.clone()], vec![0]).unwrap();
        let out = &jacobian_augment(&set, &m, 0.5).unwrap()[0];
        let z: f64 = w.iter().zip(x.as_slice()).map(|(a, b)| a * b).sum();
        let p1 = 1.0 / (1.0 + (-z).exp());
        let y_hat = usize::from(p1 > 0.5);
        let coef = p1 - if y_hat == 1 { 1.0 } else { 0.0 };
        for ((o, xi), wi) in out.as_slice().iter().zip(x.as_slice()).zip(&w) {
            assert_eq!(*o, xi + 0.5 * sign(coef * wi));
        }
    }

    #[test]
    fn non_positive_step_rejected() {
        let set = LabeledSet::new(vec![EpochTensor::zeros(1, 2)], vec![0]).unwrap();
        assert!(jacobian_augment(&set, &logistic(&[1.0, 1.0]), 0.0).is_err());
    }
}
