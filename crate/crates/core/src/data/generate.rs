//! Seeded synthetic datasets standing in for recorded epochs.
//!
//! All values are rounded to binary32 so generated sets round-trip through the
//! `EPO1` format bit-exactly.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::data::tensor::{EpochTensor, LabeledSet};
use crate::error::{Error, Result};
use crate::rng;

/// Isotropic Gaussian clusters.
#[derive(Debug, Clone, PartialEq)]
pub struct BlobConfig {
    pub n_per_class: usize,
    pub classes: usize,
    pub channels: usize,
    pub samples: usize,
    /// Euclidean distance between any two class means.
    pub separation: f64,
    pub sigma: f64,
    /// Fixes the class means; splits of one task share it.
    pub task_seed: u64,
    /// Drives sampling only.
    pub seed: u64,
}

/// Class means on an orthonormal frame, every pair exactly `separation` apart.
pub fn blob_means(cfg: &BlobConfig) -> Result<Vec<EpochTensor>> {
    let dim = cfg.channels * cfg.samples;
    if cfg.classes < 2 || cfg.classes > dim {
        return Err(Error::InvalidConfig(format!(
            "blobs need 2 <= classes <= C*T, got {} classes in dimension {dim}",
            cfg.classes
        )));
    }
    if cfg.separation <= 0.0 || cfg.sigma < 0.0 {
        return Err(Error::InvalidConfig(
            "separation must be positive and sigma non-negative".into(),
        ));
    }
    let mut rng = rng::seeded(cfg.task_seed);
    let mut frame: Vec<Vec<f64>> = Vec::with_capacity(cfg.classes);
    while frame.len() < cfg.classes {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        for u in &frame {
            let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= d * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-8 {
            frame.push(v.into_iter().map(|a| a / norm).collect());
        }
    }
    let radius = cfg.separation / std::f64::consts::SQRT_2;
    frame
        .into_iter()
        .map(|u| {
            EpochTensor::new(
                cfg.channels,
                cfg.samples,
                u.into_iter().map(|a| a * radius).collect(),
            )
        })
        .collect()
}

pub fn gen_blobs(cfg: &BlobConfig) -> Result<LabeledSet> {
    if cfg.n_per_class == 0 {
        return Err(Error::InvalidConfig(
            "n_per_class must be at least 1".into(),
        ));
    }
    let means = blob_means(cfg)?;
    let mut rng = rng::seeded(cfg.seed);
    let mut epochs = Vec::with_capacity(cfg.n_per_class * cfg.classes);
    let mut labels = Vec::with_capacity(epochs.capacity());
    for (class, mean) in means.iter().enumerate() {
        for _ in 0..cfg.n_per_class {
            let e = mean.map(|m| {
                let z: f64 = StandardNormal.sample(&mut rng);
                m + cfg.sigma * z
            });
            epochs.push(e.quantize_f32());
            labels.push(class);
        }
    }
    shuffled(epochs, labels, &mut rng)
}

/// ERP-like epochs: per class a windowed bump at a class-specific latency and
/// amplitude, on top of a shared per-channel rhythm, plus white noise. Scaled so the
/// expected signal RMS is 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticEpochConfig {
    pub n_per_class: usize,
    pub classes: usize,
    pub channels: usize,
    pub samples: usize,
    /// White-noise standard deviation relative to the unit-peak templates.
    pub noise: f64,
    /// Fixes channel gains and rhythm phases; splits of one task share it.
    pub task_seed: u64,
    /// Drives sampling only.
    pub seed: u64,
}

pub fn class_templates(cfg: &SyntheticEpochConfig) -> Result<Vec<EpochTensor>> {
    if cfg.channels == 0 || cfg.samples < 8 || cfg.classes < 2 {
        return Err(Error::InvalidConfig(format!(
            "synthetic epochs need C >= 1, T >= 8, classes >= 2; got C={}, T={}, classes={}",
            cfg.channels, cfg.samples, cfg.classes
        )));
    }
    if cfg.noise < 0.0 {
        return Err(Error::InvalidConfig("noise must be non-negative".into()));
    }
    let mut rng = rng::seeded(cfg.task_seed);
    let gain = Uniform::new(0.5, 1.5).expect("valid range");
    let phase = Uniform::new(0.0, std::f64::consts::TAU).expect("valid range");
    let gains: Vec<f64> = (0..cfg.channels).map(|_| gain.sample(&mut rng)).collect();
    let phases: Vec<f64> = (0..cfg.channels).map(|_| phase.sample(&mut rng)).collect();
    let t_len = cfg.samples as f64;
    let width = (t_len / 10.0).max(1.0);
    Ok((0..cfg.classes)
        .map(|class| {
            let frac = class as f64 / (cfg.classes - 1) as f64;
            let latency = t_len * (0.25 + 0.5 * frac);
            let amplitude = 1.0 + 0.25 * class as f64;
            EpochTensor::from_fn(cfg.channels, cfg.samples, |c, t| {
                let dt = t as f64 - latency;
                let bump = amplitude * (-dt * dt / (2.0 * width * width)).exp();
                let rhythm =
                    0.5 * (std::f64::consts::TAU * 2.0 * t as f64 / t_len + phases[c]).sin();
                gains[c] * bump + rhythm
            })
        })
        .collect())
}

pub fn gen_synthetic_epochs(cfg: &SyntheticEpochConfig) -> Result<LabeledSet> {
    if cfg.n_per_class == 0 {
        return Err(Error::InvalidConfig(
            "n_per_class must be at least 1".into(),
        ));
    }
    let templates = class_templates(cfg)?;
    let power = templates
        .iter()
        .map(|t| t.dot(t) / t.len() as f64)
        .sum::<f64>()
        / templates.len() as f64;
    let scale = 1.0 / (power + cfg.noise * cfg.noise).sqrt();
    let mut rng = rng::seeded(cfg.seed);
    let mut epochs = Vec::with_capacity(cfg.n_per_class * cfg.classes);
    let mut labels = Vec::with_capacity(epochs.capacity());
    for (class, template) in templates.iter().enumerate() {
        for _ in 0..cfg.n_per_class {
            let e = template.map(|v| {
                let z: f64 = StandardNormal.sample(&mut rng);
                scale * (v + cfg.noise * z)
            });
            epochs.push(e.quantize_f32());
            labels.push(class);
        }
    }
    shuffled(epochs, labels, &mut rng)
}

fn shuffled(
    epochs: Vec<EpochTensor>,
    labels: Vec<usize>,
    rng: &mut rng::Rng,
) -> Result<LabeledSet> {
    let mut order: Vec<usize> = (0..epochs.len()).collect();
    order.shuffle(rng);
    let set = LabeledSet::new(epochs, labels)?;
    Ok(set.subset(&order))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(sigma: f64) -> BlobConfig {
        BlobConfig {
            n_per_class: 20,
            classes: 3,
            channels: 2,
            samples: 4,
            separation: 3.0,
            sigma,
            task_seed: 1,
            seed: 11,
        }
    }

    #[test]
    fn zero_sigma_collapses_to_means() {
        let cfg = blobs(0.0);
        let set = gen_blobs(&cfg).unwrap();
        let means = blob_means(&cfg).unwrap();
        for (e, l) in set.iter() {
            assert_eq!(e, &means[l].quantize_f32());
        }
    }

    #[test]
    fn means_are_equidistant() {
        let means = blob_means(&blobs(1.0)).unwrap();
        for i in 0..means.len() {
            for j in i + 1..means.len() {
                let d = means[i].sub(&means[j]).norm_l2();
                assert!((d - 3.0).abs() < 1e-9, "distance {d}");
            }
        }
    }

    #[test]
    fn generators_are_deterministic() {
        assert_eq!(
            gen_blobs(&blobs(1.0)).unwrap(),
            gen_blobs(&blobs(1.0)).unwrap()
        );
        let cfg = SyntheticEpochConfig {
            n_per_class: 5,
            classes: 2,
            channels: 3,
            samples: 16,
            noise: 0.5,
            task_seed: 1,
            seed: 4,
        };
        assert_eq!(
            gen_synthetic_epochs(&cfg).unwrap(),
            gen_synthetic_epochs(&cfg).unwrap()
        );
    }

    #[test]
    fn splits_of_one_task_share_structure() {
        let a = blobs(1.0);
        let b = BlobConfig {
            seed: 12,
            ..blobs(1.0)
        };
        assert_eq!(blob_means(&a).unwrap(), blob_means(&b).unwrap());
        assert_ne!(gen_blobs(&a).unwrap(), gen_blobs(&b).unwrap());
        let c = BlobConfig {
            task_seed: 2,
            ..blobs(1.0)
        };
        assert_ne!(blob_means(&a).unwrap(), blob_means(&c).unwrap());
        let t = SyntheticEpochConfig {
            n_per_class: 3,
            classes: 2,
            channels: 3,
            samples: 16,
            noise: 0.5,
            task_seed: 5,
            seed: 1,
        };
        let u = SyntheticEpochConfig {
            seed: 2,
            ..t.clone()
        };
        assert_eq!(class_templates(&t).unwrap(), class_templates(&u).unwrap());
    }

    #[test]
    fn too_many_classes_for_dimension() {
        let mut cfg = blobs(1.0);
        cfg.classes = 9;
        assert!(gen_blobs(&cfg).is_err());
    }

    #[test]
    fn noiseless_synthetic_epochs_are_identical_within_class() {
        let cfg = SyntheticEpochConfig {
            n_per_class: 4,
            classes: 3,
            channels: 2,
            samples: 12,
            noise: 0.0,
            task_seed: 1,
            seed: 9,
        };
        let set = gen_synthetic_epochs(&cfg).unwrap();
        for class in 0..3 {
            let members: Vec<_> = set
                .iter()
                .filter(|(_, l)| *l == class)
                .map(|(e, _)| e)
                .collect();
            assert_eq!(members.len(), 4);
            assert!(members.windows(2).all(|w| w[0] == w[1]));
        }
    }

    #[test]
    fn short_epochs_rejected() {
        let cfg = SyntheticEpochConfig {
            n_per_class: 1,
            classes: 2,
            channels: 1,
            samples: 7,
            noise: 1.0,
            task_seed: 1,
            seed: 0,
        };
        assert!(gen_synthetic_epochs(&cfg).is_err());
    }
}
