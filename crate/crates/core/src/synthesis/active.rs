//! Substitute training by query synthesis.
//!
//! Starting from an oracle-labeled initial set `D`, every iteration synthesizes
//! `per_iteration` new epochs near the substitute's decision boundary, labels them
//! through the oracle, appends them to `D` and retrains. Each synthesized epoch comes
//! from an opposite pair drawn from `D`: one bisection toward the boundary, then a
//! mid-perpendicular step (which bisects again before offsetting). Only the
//! substitute is evaluated during synthesis; the oracle sees exactly the synthesized
//! epochs.

use serde::{Deserialize, Serialize};

use crate::classifier::{Classifier, CountingClassifier};
use crate::data::{EpochTensor, LabeledSet};
use crate::error::{Error, Result};
use crate::nn::{Model, ModelSpec, TrainConfig};
use crate::oracle::TargetOracle;
use crate::rng::{self, Rng};
use crate::synthesis::boundary::{
    binary_search_pair, mid_perpendicular, random_normal_epoch, select_opposite_pair,
    DEFAULT_RESAMPLE_LIMIT,
};
use crate::synthesis::trace::{AugmentationTrace, TraceRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RetrainMode {
    /// Continue from the current parameters and optimizer state.
    FineTune,
    /// Restore the seeded initial parameters before every retraining.
    FromScratch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisConfig {
    /// Outer augmentation iterations.
    pub iterations: usize,
    /// Epochs synthesized (and target queries spent) per iteration.
    pub per_iteration: usize,
    /// Bisection steps per boundary search.
    pub search_steps: usize,
    /// L2 norm of the perpendicular offset, in signal units.
    pub offset_norm: f64,
    pub seed: u64,
    pub retrain: RetrainMode,
    /// Fresh random draws allowed when the orthogonal component vanishes.
    pub resample_limit: usize,
    /// Extra pair draws allowed when the substitute labels a drawn pair alike.
    pub reselect_limit: usize,
    /// When no usable pair can be found, synthesize a standard-normal epoch instead of
    /// failing.
    pub random_fallback: bool,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            iterations: 2,
            per_iteration: 200,
            search_steps: 10,
            offset_norm: 1.0,
            seed: 0,
            retrain: RetrainMode::FineTune,
            resample_limit: DEFAULT_RESAMPLE_LIMIT,
            reselect_limit: 32,
            random_fallback: true,
        }
    }
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.iterations == 0 {
            return bad("synthesis needs at least one iteration");
        }
        if self.per_iteration == 0 {
            return bad("synthesis needs at least one epoch per iteration");
        }
        if self.search_steps == 0 {
            return bad("synthesis needs at least one bisection step");
        }
        if self.offset_norm.is_nan() || self.offset_norm <= 0.0 {
            return bad("offset norm must be positive");
        }
        Ok(())
    }

    /// Target queries an active run spends on top of the initial set.
    pub fn augmentation_queries(&self) -> u64 {
        (self.iterations * self.per_iteration) as u64
    }
}

/// A substitute under training together with its labeled set and accounting.
#[derive(Debug, Clone)]
pub struct SubstituteRun {
    pub model: Model,
    pub data: LabeledSet,
    pub trace: AugmentationTrace,
    train_cfg: TrainConfig,
    queries_before: u64,
    substitute_queries: u64,
}

impl SubstituteRun {
    fn record(&mut self, iteration: usize, target_queries: u64) {
        self.trace.records.push(TraceRecord {
            iteration,
            target_queries: target_queries - self.queries_before,
            substitute_queries: self.substitute_queries,
            train_set_size: self.data.len(),
        });
    }

    fn iteration(&self) -> usize {
        self.trace.records.len()
    }

    /// Appends an oracle-labeled increment, retrains, and records the iteration.
    pub(crate) fn absorb<M: Classifier>(
        &mut self,
        oracle: &TargetOracle<M>,
        increment: LabeledSet,
        from_scratch: bool,
    ) -> Result<()> {
        let iteration = self.iteration();
        self.data.extend(increment.clone())?;
        self.trace.increments.push(increment);
        if from_scratch {
            self.model.reinitialize();
        }
        let cfg = iteration_train_config(&self.train_cfg, iteration);
        self.model.train(&self.data, &cfg)?;
        self.record(iteration, oracle.query_count());
        Ok(())
    }

    pub(crate) fn target_queries(&self, oracle_count: u64) -> u64 {
        oracle_count - self.queries_before
    }

    pub(crate) fn add_substitute_queries(&mut self, n: u64) {
        self.substitute_queries += n;
    }
}

/// Training seed for round `iteration` is the configured seed plus the round index.
fn iteration_train_config(base: &TrainConfig, iteration: usize) -> TrainConfig {
    TrainConfig {
        seed: base.seed.wrapping_add(iteration as u64),
        ..base.clone()
    }
}

/// Labels `initial` through the oracle and trains a fresh substitute on it
/// (iteration 0 of the trace).
pub fn pretrain_substitute<M: Classifier>(
    oracle: &mut TargetOracle<M>,
    initial: &[EpochTensor],
    spec: &ModelSpec,
    train_cfg: &TrainConfig,
) -> Result<SubstituteRun> {
    if initial.is_empty() {
        return Err(Error::Empty("initial substitute training set"));
    }
    train_cfg.validate()?;
    let queries_before = oracle.query_count();
    let labels = oracle.query_labels(initial)?;
    let data = LabeledSet::new(initial.to_vec(), labels)?;
    let mut model = Model::new(spec.clone())?;
    model.train(&data, &iteration_train_config(train_cfg, 0))?;
    let mut run = SubstituteRun {
        model,
        data,
        trace: AugmentationTrace::default(),
        train_cfg: train_cfg.clone(),
        queries_before,
        substitute_queries: 0,
    };
    run.record(0, oracle.query_count());
    Ok(run)
}

pub(crate) fn check_budget<M: Classifier>(oracle: &TargetOracle<M>, needed: u64) -> Result<()> {
    if let (Some(budget), Some(remaining)) = (oracle.budget(), oracle.remaining()) {
        if needed > remaining {
            return Err(Error::BudgetExhausted {
                requested: needed,
                remaining,
                budget,
            });
        }
    }
    Ok(())
}

/// Runs the synthesis iterations on top of a pre-trained substitute.
pub fn continue_active<M: Classifier>(
    oracle: &mut TargetOracle<M>,
    mut run: SubstituteRun,
    syn: &SynthesisConfig,
) -> Result<SubstituteRun> {
    syn.validate()?;
    check_budget(oracle, syn.augmentation_queries())?;
    let classes = run.model.spec().classes;
    let mut rng = rng::seeded(syn.seed);
    for _ in 0..syn.iterations {
        let probe = CountingClassifier::new(&run.model);
        let synthesized = if classes == 2 {
            (0..syn.per_iteration)
                .map(|_| synthesize_epoch(&run.data, &probe, syn, &mut rng, None))
                .collect::<Result<Vec<_>>>()?
        } else {
            synthesize_one_vs_one(&run.data, &probe, classes, syn, &mut rng)?
        };
        run.add_substitute_queries(probe.calls());
        let labels = oracle.query_labels(&synthesized)?;
        let increment = LabeledSet::new(synthesized, labels)?;
        run.absorb(oracle, increment, syn.retrain == RetrainMode::FromScratch)?;
    }
    Ok(run)
}

/// Full active substitute training: label `initial`, pre-train, then run
/// `syn.iterations` synthesis rounds. Issues exactly
/// `initial.len() + iterations * per_iteration` target queries.
pub fn train_substitute_active<M: Classifier>(
    oracle: &mut TargetOracle<M>,
    initial: &[EpochTensor],
    spec: &ModelSpec,
    train_cfg: &TrainConfig,
    syn: &SynthesisConfig,
) -> Result<(Model, AugmentationTrace)> {
    syn.validate()?;
    check_budget(oracle, initial.len() as u64 + syn.augmentation_queries())?;
    let run = pretrain_substitute(oracle, initial, spec, train_cfg)?;
    let run = continue_active(oracle, run, syn)?;
    Ok((run.model, run.trace))
}

/// One synthesized epoch from a random opposite pair of `data`.
///
/// A pair the substitute labels alike is redrawn up to `reselect_limit` times; after
/// that, or when `data` has no opposite pair at all, a standard-normal epoch is
/// returned if `random_fallback` is set.
pub fn synthesize_epoch<C: Classifier + ?Sized>(
    data: &LabeledSet,
    f: &C,
    syn: &SynthesisConfig,
    rng: &mut Rng,
    classes: Option<(usize, usize)>,
) -> Result<EpochTensor> {
    let mut last_err = None;
    for _ in 0..=syn.reselect_limit {
        let pair = match select_opposite_pair(data, rng, classes) {
            Ok(pair) => pair,
            Err(e @ Error::NoOppositePair(_)) => {
                last_err = Some(e);
                break;
            }
            Err(e) => return Err(e),
        };
        match binary_search_pair(&pair, f, syn.search_steps) {
            Ok(near) => {
                return mid_perpendicular(
                    &near,
                    f,
                    syn.search_steps,
                    syn.offset_norm,
                    rng,
                    syn.resample_limit,
                );
            }
            Err(e @ Error::BoundaryLost { .. }) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    if syn.random_fallback {
        let (c, t) = f.input_shape();
        Ok(random_normal_epoch(c, t, rng))
    } else {
        Err(last_err.expect("loop ran at least once"))
    }
}

/// Canonical class pairs `(a, b)`, `a < b`, in lexicographic order, each with its
/// share of `per_iteration` epochs.
///
/// Every pair gets `per_iteration / k2` and the first `per_iteration % k2` pairs one
/// more. Pairs touching a class missing from `present` get nothing; their combined
/// quota is dealt one epoch at a time, round-robin, to the remaining pairs in
/// canonical order. If no pair remains, every quota is zero.
pub fn one_vs_one_quotas(
    classes: usize,
    per_iteration: usize,
    present: &[usize],
) -> Vec<((usize, usize), usize)> {
    let pairs: Vec<(usize, usize)> = (0..classes)
        .flat_map(|a| (a + 1..classes).map(move |b| (a, b)))
        .collect();
    let k2 = pairs.len();
    if k2 == 0 {
        return Vec::new();
    }
    let mut quotas: Vec<usize> = (0..k2)
        .map(|i| per_iteration / k2 + usize::from(i < per_iteration % k2))
        .collect();
    let realizable: Vec<bool> = pairs
        .iter()
        .map(|(a, b)| present.contains(a) && present.contains(b))
        .collect();
    let live: Vec<usize> = (0..k2).filter(|&i| realizable[i]).collect();
    let mut spare = 0;
    for i in 0..k2 {
        if !realizable[i] {
            spare += quotas[i];
            quotas[i] = 0;
        }
    }
    if live.is_empty() {
        return pairs.into_iter().map(|p| (p, 0)).collect();
    }
    for j in 0..spare {
        quotas[live[j % live.len()]] += 1;
    }
    pairs.into_iter().zip(quotas).collect()
}

/// Multi-class synthesis by one-vs-one decomposition: each class pair gets its
/// quota from [`one_vs_one_quotas`] and synthesizes from pairs drawn from exactly
/// those two classes. Returns `per_iteration` epochs in canonical pair order.
pub fn synthesize_one_vs_one<C: Classifier + ?Sized>(
    data: &LabeledSet,
    f: &C,
    classes: usize,
    syn: &SynthesisConfig,
    rng: &mut Rng,
) -> Result<Vec<EpochTensor>> {
    if classes < 3 {
        return Err(Error::InvalidConfig(format!(
            "one-vs-one synthesis needs at least 3 classes, got {classes}"
        )));
    }
    let present = data.present_classes();
    let quotas = one_vs_one_quotas(classes, syn.per_iteration, &present);
    if quotas.iter().all(|&(_, q)| q == 0) {
        if !syn.random_fallback {
            return Err(Error::NoOppositePair(format!(
                "{} class(es) present, need two",
                present.len()
            )));
        }
        let (c, t) = f.input_shape();
        return Ok((0..syn.per_iteration)
            .map(|_| random_normal_epoch(c, t, rng))
            .collect());
    }
    let mut out = Vec::with_capacity(syn.per_iteration);
    for ((a, b), quota) in quotas {
        for _ in 0..quota {
            out.push(synthesize_epoch(data, f, syn, rng, Some((a, b)))?);
        }
    }
    Ok(out)
}
