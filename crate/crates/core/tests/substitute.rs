use qsynth::data::{gen_blobs, BlobConfig};
use qsynth::eval::{boundary_agreement, predict_all, rca};
use qsynth::nn::ModelSpec;
use qsynth::synthesis::{
    continue_active, jacobian_augment, pretrain_substitute, train_substitute_active,
    train_substitute_jacobian, JacobianConfig, RetrainMode, SynthesisConfig,
};
use qsynth::{Error, LabeledSet, Model, TargetOracle, TrainConfig};

fn blobs(seed: u64, n: usize) -> LabeledSet {
    gen_blobs(&BlobConfig {
        n_per_class: n,
        classes: 2,
        channels: 2,
        samples: 4,
        separation: 3.0,
        sigma: 1.0,
        task_seed: 0,
        seed,
    })
    .unwrap()
}

fn target(seed: u64) -> Model {
    let mut m = Model::new(ModelSpec::mlp(2, 4, 2, vec![16], seed)).unwrap();
    m.train(&blobs(seed + 100, 150), &TrainConfig::default())
        .unwrap();
    m
}

fn spec() -> ModelSpec {
    ModelSpec::mlp(2, 4, 2, vec![16], 7)
}

fn syn(iterations: usize, per_iteration: usize) -> SynthesisConfig {
    SynthesisConfig {
        iterations,
        per_iteration,
        offset_norm: 1.5,
        ..Default::default()
    }
}

#[test]
fn single_synthesized_epoch() {
    let t = target(1);
    let mut oracle = TargetOracle::new(&t);
    let s0 = blobs(2, 20).into_parts().0;
    let (_, trace) = train_substitute_active(
        &mut oracle,
        &s0,
        &spec(),
        &TrainConfig::default(),
        &syn(1, 1),
    )
    .unwrap();
    assert_eq!(oracle.query_count(), 41);
    assert_eq!(trace.records.len(), 2);
    assert_eq!(trace.records[1].train_set_size, 41);
    assert_eq!(trace.increments[0].len(), 1);
}

#[test]
fn trace_grows_by_the_iteration_count() {
    let t = target(3);
    let mut oracle = TargetOracle::new(&t);
    let s0 = blobs(4, 30).into_parts().0;
    let cfg = SynthesisConfig {
        retrain: RetrainMode::FromScratch,
        ..syn(3, 25)
    };
    let (_, trace) =
        train_substitute_active(&mut oracle, &s0, &spec(), &TrainConfig::default(), &cfg).unwrap();
    for (i, r) in trace.records.iter().enumerate() {
        assert_eq!(r.iteration, i);
        assert_eq!(r.train_set_size, 60 + 25 * i);
        assert_eq!(r.target_queries, 60 + 25 * i as u64);
    }
    // two bisections of m + 2 evaluations per synthesized epoch, at least
    assert!(trace.records[3].substitute_queries >= 75 * 2 * 12);
    assert_eq!(trace.augmentation_queries(), 75);
}

#[test]
fn budget_short_of_the_plan_fails_before_querying() {
    let t = target(5);
    let mut oracle = TargetOracle::with_budget(&t, 100).unwrap();
    let s0 = blobs(6, 30).into_parts().0;
    let err = train_substitute_active(
        &mut oracle,
        &s0,
        &spec(),
        &TrainConfig::default(),
        &syn(2, 30),
    )
    .unwrap_err();
    assert!(
        matches!(err, Error::BudgetExhausted { requested: 120, .. }),
        "{err}"
    );
    assert_eq!(oracle.query_count(), 0);
}

#[test]
fn runs_are_reproducible() {
    let t = target(7);
    let s0 = blobs(8, 20).into_parts().0;
    let run = || {
        let mut oracle = TargetOracle::new(&t);
        train_substitute_active(
            &mut oracle,
            &s0,
            &spec(),
            &TrainConfig::default(),
            &syn(2, 10),
        )
        .unwrap()
    };
    let (a, ta) = run();
    let (b, tb) = run();
    assert_eq!(a.params(), b.params());
    assert_eq!(ta, tb);
}

#[test]
fn jacobian_doubles_the_set() {
    let t = target(9);
    let s0 = blobs(10, 25).into_parts().0;
    for n in 1..=3 {
        let mut oracle = TargetOracle::new(&t);
        let cfg = JacobianConfig {
            iterations: n,
            ..Default::default()
        };
        let (_, trace) =
            train_substitute_jacobian(&mut oracle, &s0, &spec(), &TrainConfig::default(), &cfg)
                .unwrap();
        assert_eq!(trace.augmentation_queries(), 50 * ((1 << n) - 1));
        assert_eq!(trace.last().unwrap().train_set_size, 50 << n);
    }
}

#[test]
fn jacobian_cap_subsamples_the_last_round() {
    let t = target(11);
    let s0 = blobs(12, 25).into_parts().0;
    let mut oracle = TargetOracle::new(&t);
    let cfg = JacobianConfig {
        iterations: 5,
        query_cap: Some(130),
        ..Default::default()
    };
    let (_, trace) =
        train_substitute_jacobian(&mut oracle, &s0, &spec(), &TrainConfig::default(), &cfg)
            .unwrap();
    assert_eq!(oracle.query_count(), 130);
    let sizes: Vec<usize> = trace.records.iter().map(|r| r.train_set_size).collect();
    assert_eq!(sizes, vec![50, 100, 130]);
}

#[test]
fn jacobian_augment_preserves_order_and_count() {
    let t = target(13);
    let set = blobs(14, 10);
    let out = jacobian_augment(&set, &t, 0.5).unwrap();
    assert_eq!(out.len(), set.len());
    for (x, y) in set.epochs().iter().zip(&out) {
        assert!(x
            .sub(y)
            .as_slice()
            .iter()
            .all(|d| d.abs() == 0.5 || *d == 0.0));
    }
}

#[test]
fn target_agrees_with_itself() {
    let t = target(15);
    let test = blobs(16, 50);
    let labels = predict_all(&t, test.epochs()).unwrap();
    assert_eq!(boundary_agreement(&t, &labels, test.epochs()).unwrap(), 1.0);
    let other = target(17);
    let agreement = boundary_agreement(&other, &labels, test.epochs()).unwrap();
    assert_eq!(
        agreement,
        rca(&predict_all(&other, test.epochs()).unwrap(), &labels).unwrap()
    );
}

#[test]
fn synthesis_does_not_lower_agreement_on_average() {
    let (mut before, mut after) = (0.0, 0.0);
    for seed in 0..10 {
        let t = target(200 + seed);
        let test = blobs(300 + seed, 100);
        let labels = predict_all(&t, test.epochs()).unwrap();
        let mut oracle = TargetOracle::new(&t);
        let s0 = blobs(400 + seed, 20).into_parts().0;
        let run = pretrain_substitute(&mut oracle, &s0, &spec(), &TrainConfig::default()).unwrap();
        before += boundary_agreement(&run.model, &labels, test.epochs()).unwrap();
        let cfg = SynthesisConfig { seed, ..syn(2, 40) };
        let run = continue_active(&mut oracle, run, &cfg).unwrap();
        after += boundary_agreement(&run.model, &labels, test.epochs()).unwrap();
    }
    assert!(after >= before, "before {before} after {after}");
}
