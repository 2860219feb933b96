//! Max-norm bounded perturbations: FGSM, its prediction-labeled variant UFGSM, and
//! the random-sign control. Every perturbation is `epsilon * sign(.)`, so each
//! component of `perturbed - original` is exactly `-epsilon`, `0` or `+epsilon`.
//! Outputs are not clipped.

use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::classifier::Differentiable;
use crate::data::{sign, EpochTensor};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackMethod {
    Fgsm,
    Ufgsm,
    Noise,
}

impl fmt::Display for AttackMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Fgsm => "fgsm",
            Self::Ufgsm => "ufgsm",
            Self::Noise => "noise",
        })
    }
}

impl FromStr for AttackMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fgsm" => Ok(Self::Fgsm),
            "ufgsm" => Ok(Self::Ufgsm),
            "noise" => Ok(Self::Noise),
            _ => Err(Error::Parse(format!("unknown attack method {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub epsilon: f64,
    pub method: AttackMethod,
    pub noise_seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            method: AttackMethod::Ufgsm,
            noise_seed: 0,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        check_epsilon(self.epsilon)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialExample {
    pub original: EpochTensor,
    pub perturbed: EpochTensor,
    /// `perturbed - original`, stored as computed rather than recovered by subtraction.
    pub perturbation: EpochTensor,
    /// Label whose loss gradient was followed; `None` for noise.
    pub label_used: Option<usize>,
}

impl AdversarialExample {
    fn from_step(
        original: &EpochTensor,
        perturbation: EpochTensor,
        label_used: Option<usize>,
    ) -> Self {
        Self {
            perturbed: original.add(&perturbation),
            original: original.clone(),
            perturbation,
            label_used,
        }
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon >= 0.0 && epsilon.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "epsilon must be finite and non-negative, got {epsilon}"
        )))
    }
}

/// `x + epsilon * sign(grad_x J(x, y))` on the gradient source `f`.
pub fn fgsm<D: Differentiable + ?Sized>(
    f: &D,
    x: &EpochTensor,
    y: usize,
    epsilon: f64,
) -> Result<AdversarialExample> {
    check_epsilon(epsilon)?;
    let grad = f.input_gradient(x, y)?;
    let delta = grad.map(|g| epsilon * sign(g));
    Ok(AdversarialExample::from_step(x, delta, Some(y)))
}

/// FGSM with `f`'s own prediction in place of the true label.
pub fn ufgsm<D: Differentiable + ?Sized>(
    f: &D,
    x: &EpochTensor,
    epsilon: f64,
) -> Result<AdversarialExample> {
    check_epsilon(epsilon)?;
    let y = f.predict(x)?;
    fgsm(f, x, y, epsilon)
}

/// `x + epsilon * sign(z)` with `z` standard normal per component.
pub fn random_noise(x: &EpochTensor, epsilon: f64, rng: &mut Rng) -> Result<AdversarialExample> {
    check_epsilon(epsilon)?;
    let delta = x.map(|_| {
        let z: f64 = StandardNormal.sample(rng);
        epsilon * sign(z)
    });
    Ok(AdversarialExample::from_step(x, delta, None))
}

/// Applies `cfg` to every epoch. `labels` is required by FGSM only; noise draws come
/// from one stream seeded with `cfg.noise_seed`, in input order.
pub fn craft_batch<D: Differentiable + ?Sized>(
    f: &D,
    epochs: &[EpochTensor],
    labels: Option<&[usize]>,
    cfg: &AttackConfig,
) -> Result<Vec<AdversarialExample>> {
    cfg.validate()?;
    match cfg.method {
        AttackMethod::Fgsm => {
            let labels =
                labels.ok_or_else(|| Error::InvalidConfig("fgsm needs true labels".into()))?;
            if labels.len() != epochs.len() {
                return Err(Error::InvalidConfig(format!(
                    "{} labels for {} epochs",
                    labels.len(),
                    epochs.len()
                )));
            }
            epochs
                .iter()
                .zip(labels)
                .map(|(x, &y)| fgsm(f, x, y, cfg.epsilon))
                .collect()
        }
        AttackMethod::Ufgsm => epochs.iter().map(|x| ufgsm(f, x, cfg.epsilon)).collect(),
        AttackMethod::Noise => {
            let mut rng = rng::seeded(cfg.noise_seed);
            epochs
                .iter()
                .map(|x| random_noise(x, cfg.epsilon, &mut rng))
                .collect()
        }
    }
}

/// Perturbed epochs of a batch, in order.
pub fn perturbed(examples: &[AdversarialExample]) -> Vec<EpochTensor> {
    examples.iter().map(|e| e.perturbed.clone()).collect()
}
