use qsynth::attack::random_noise;
use qsynth::data::{
    class_templates, gen_blobs, gen_synthetic_epochs, BlobConfig, SyntheticEpochConfig,
};
use qsynth::eval::{predict_all, rca};
use qsynth::nn::ModelSpec;
use qsynth::rng::seeded;
use qsynth::synthesis::select_opposite_pair;
use qsynth::{EpochTensor, LabeledSet, Model, TrainConfig};

#[test]
fn opposite_pair_members_are_uniform() {
    let epochs: Vec<EpochTensor> = (0..20)
        .map(|i| EpochTensor::new(1, 1, vec![i as f64]).unwrap())
        .collect();
    let labels: Vec<usize> = (0..20).map(|i| i / 10).collect();
    let set = LabeledSet::new(epochs, labels).unwrap();
    let mut rng = seeded(42);
    let mut hits = [0usize; 20];
    let draws = 10_000;
    for _ in 0..draws {
        let pair = select_opposite_pair(&set, &mut rng, None).unwrap();
        hits[pair.plus().as_slice()[0] as usize] += 1;
        hits[pair.minus().as_slice()[0] as usize] += 1;
    }
    // every draw takes exactly one member of each class
    for (i, &h) in hits.iter().enumerate() {
        let freq = h as f64 / draws as f64;
        assert!((freq - 0.1).abs() <= 0.02, "example {i}: {freq}");
    }
}

#[test]
fn binary_class_order_is_random() {
    let set = LabeledSet::new(
        vec![EpochTensor::zeros(1, 1), EpochTensor::zeros(1, 1)],
        vec![0, 1],
    )
    .unwrap();
    let mut rng = seeded(3);
    let draws = 10_000;
    let zero_first = (0..draws)
        .filter(|_| {
            select_opposite_pair(&set, &mut rng, None)
                .unwrap()
                .positive_label()
                == 0
        })
        .count();
    assert!((zero_first as f64 / draws as f64 - 0.5).abs() <= 0.02);
}

#[test]
fn noise_signs_are_balanced() {
    let x = EpochTensor::zeros(10, 1000);
    let adv = random_noise(&x, 0.3, &mut seeded(8)).unwrap();
    let plus = adv
        .perturbation
        .as_slice()
        .iter()
        .filter(|&&d| d == 0.3)
        .count();
    let minus = adv
        .perturbation
        .as_slice()
        .iter()
        .filter(|&&d| d == -0.3)
        .count();
    assert_eq!(plus + minus, 10_000);
    assert!((plus as f64 / 1e4 - 0.5).abs() <= 0.02, "{plus}");
}

#[test]
fn synthetic_epochs_have_unit_rms() {
    for (noise, seed) in [(0.0, 1), (0.5, 2), (1.0, 3), (3.0, 4)] {
        let set = gen_synthetic_epochs(&SyntheticEpochConfig {
            n_per_class: 100,
            classes: 3,
            channels: 4,
            samples: 32,
            noise,
            task_seed: seed,
            seed,
        })
        .unwrap();
        let (sum, count) = set
            .epochs()
            .iter()
            .flat_map(|x| x.as_slice())
            .fold((0.0, 0usize), |(s, n), v| (s + v * v, n + 1));
        let rms = (sum / count as f64).sqrt();
        assert!((rms - 1.0).abs() <= 0.1, "noise {noise}: rms {rms}");
    }
}

#[test]
fn templates_resemble_their_own_class() {
    let cfg = SyntheticEpochConfig {
        n_per_class: 50,
        classes: 4,
        channels: 4,
        samples: 32,
        noise: 1.0,
        task_seed: 5,
        seed: 5,
    };
    let templates = class_templates(&cfg).unwrap();
    let set = gen_synthetic_epochs(&cfg).unwrap();
    let (mut same, mut same_n, mut cross, mut cross_n) = (0.0, 0, 0.0, 0);
    for (x, y) in set.iter() {
        for (c, t) in templates.iter().enumerate() {
            if c == y {
                same += x.dot(t);
                same_n += 1;
            } else {
                cross += x.dot(t);
                cross_n += 1;
            }
        }
    }
    assert!(same / same_n as f64 > cross / cross_n as f64);
}

#[test]
fn well_separated_blobs_are_linearly_learnable() {
    let cfg = |seed| BlobConfig {
        n_per_class: 200,
        classes: 2,
        channels: 2,
        samples: 8,
        separation: 6.0,
        sigma: 1.0,
        task_seed: 0,
        seed,
    };
    let train = gen_blobs(&cfg(1)).unwrap();
    let test = gen_blobs(&cfg(2)).unwrap();
    let mut model = Model::new(ModelSpec::linear(2, 8, 2, 0)).unwrap();
    model.train(&train, &TrainConfig::default()).unwrap();
    let acc = rca(&predict_all(&model, test.epochs()).unwrap(), test.labels()).unwrap();
    assert!(acc >= 0.99, "{acc}");
}
