//! End-to-end attack runs: generate data, train the target, label and balance the
//! attacker's initial set, train a substitute, craft UFGSM examples on it, and score
//! the target on clean, noisy and adversarial test epochs.
//!
//! Every random choice of run `r` is seeded from `run_seed(master, r)` through
//! [`RunSeeds::stage`], so a results row is reproducible from its `seed` column
//! alone. Seed fields inside the nested model, synthesis, jacobian and attack
//! sections are ignored in favor of these derived seeds.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attack::{self, AdversarialExample, AttackConfig, AttackMethod};
use crate::data::{
    balance_by_predicted_label, gen_blobs, gen_synthetic_epochs, zscore_channels, BlobConfig,
    EpochTensor, LabeledSet, Shortfall, SyntheticEpochConfig,
};
use crate::error::{Error, Result, StageContext};
use crate::eval::{self, MetricReport, ResultRow};
use crate::nn::{Activation, Architecture, Model, ModelSpec, TrainConfig, TrainReport};
use crate::oracle::TargetOracle;
use crate::rng::derive_seed;
use crate::synthesis::{
    continue_active, continue_jacobian, pretrain_substitute, JacobianConfig, SynthesisConfig,
    TraceRecord,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Boundary-seeking query synthesis.
    Active,
    /// Jacobian-sign augmentation.
    Jacobian,
    /// No substitute; the test set is perturbed by random signs only.
    Noise,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Active => "active",
            Self::Jacobian => "jacobian",
            Self::Noise => "noise",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "active" => Ok(Self::Active),
            "jacobian" => Ok(Self::Jacobian),
            "noise" | "noise-only" => Ok(Self::Noise),
            _ => Err(Error::Parse(format!("unknown method {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Generator {
    SyntheticEpochs,
    Blobs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub generator: Generator,
    pub classes: usize,
    pub channels: usize,
    pub samples: usize,
    /// Target training epochs per class.
    pub train_per_class: usize,
    /// Held-out evaluation epochs per class.
    pub test_per_class: usize,
    /// Unlabeled attacker epochs per class, from which the initial set is balanced.
    pub pool_per_class: usize,
    /// White-noise amplitude (synthetic epochs) or cluster sigma (blobs).
    pub noise: f64,
    /// Distance between class means (blobs only).
    pub separation: f64,
    /// Per-channel z-scoring of every split.
    pub zscore: bool,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            generator: Generator::SyntheticEpochs,
            classes: 2,
            channels: 4,
            samples: 16,
            train_per_class: 300,
            test_per_class: 200,
            pool_per_class: 300,
            noise: 1.0,
            separation: 6.0,
            zscore: false,
        }
    }
}

impl DatasetConfig {
    pub fn name(&self) -> &'static str {
        match self.generator {
            Generator::SyntheticEpochs => "synthetic-epochs",
            Generator::Blobs => "blobs",
        }
    }

    /// One split of `n_per_class` epochs per class. Splits with equal `task_seed`
    /// come from the same distribution.
    pub fn generate(&self, n_per_class: usize, task_seed: u64, seed: u64) -> Result<LabeledSet> {
        let set = match self.generator {
            Generator::SyntheticEpochs => gen_synthetic_epochs(&SyntheticEpochConfig {
                n_per_class,
                classes: self.classes,
                channels: self.channels,
                samples: self.samples,
                noise: self.noise,
                task_seed,
                seed,
            })?,
            Generator::Blobs => gen_blobs(&BlobConfig {
                n_per_class,
                classes: self.classes,
                channels: self.channels,
                samples: self.samples,
                separation: self.separation,
                sigma: self.noise,
                task_seed,
                seed,
            })?,
        };
        if !self.zscore {
            return Ok(set);
        }
        let (mut epochs, labels) = set.into_parts();
        zscore_channels(&mut epochs);
        LabeledSet::new(epochs, labels)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub train: TrainConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            architecture: Architecture::MultilayerPerceptron,
            hidden: vec![32],
            activation: Activation::Relu,
            train: TrainConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn name(&self) -> String {
        match self.architecture {
            Architecture::LinearSoftmax => "linear".to_string(),
            Architecture::MultilayerPerceptron => format!(
                "mlp-{}",
                self.hidden
                    .iter()
                    .map(|h| h.to_string())
                    .collect::<Vec<_>>()
                    .join("x")
            ),
            Architecture::TemporalConvNet { kernel, pool } => {
                format!(
                    "tcn-{}f-k{kernel}-p{pool}",
                    self.hidden.first().copied().unwrap_or(0)
                )
            }
        }
    }

    pub fn spec(&self, data: &DatasetConfig, seed: u64) -> ModelSpec {
        ModelSpec {
            architecture: self.architecture,
            channels: data.channels,
            samples: data.samples,
            classes: data.classes,
            hidden: self.hidden.clone(),
            activation: self.activation,
            seed,
        }
    }

    fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            ..self.train.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    /// Independent runs per setting.
    pub runs: usize,
    pub method: Method,
    /// Substitute-training query budgets for sweeps, initial set included and
    /// balancing excluded. Strictly increasing.
    pub budgets: Vec<u64>,
    pub output_dir: String,
    /// Initial-set size per class predicted by the target.
    pub initial_per_class: usize,
    /// Fail when the pool holds fewer than `initial_per_class` epochs of some
    /// predicted class; otherwise take what is there.
    pub strict_balance: bool,
    pub dataset: DatasetConfig,
    pub target: ModelConfig,
    pub substitute: ModelConfig,
    pub synthesis: SynthesisConfig,
    pub jacobian: JacobianConfig,
    pub attack: AttackConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            master_seed: 0,
            runs: 1,
            method: Method::Active,
            budgets: vec![400, 600, 800, 1000],
            output_dir: "out".to_string(),
            initial_per_class: 200,
            strict_balance: true,
            dataset: DatasetConfig::default(),
            target: ModelConfig::default(),
            substitute: ModelConfig::default(),
            // offset norm chosen so synthesized epochs match the initial set's
            // magnitude on the default dataset
            synthesis: SynthesisConfig {
                offset_norm: 5.0,
                ..SynthesisConfig::default()
            },
            jacobian: JacobianConfig::default(),
            attack: AttackConfig {
                epsilon: 0.25,
                ..AttackConfig::default()
            },
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.runs == 0 {
            return bad("runs must be at least 1".into());
        }
        if self.initial_per_class == 0 {
            return bad("initial_per_class must be at least 1".into());
        }
        if self.budgets.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!(
                "budgets must be strictly increasing, got {:?}",
                self.budgets
            ));
        }
        self.target.spec(&self.dataset, 0).validate()?;
        self.substitute.spec(&self.dataset, 0).validate()?;
        self.target.train.validate()?;
        self.substitute.train.validate()?;
        self.synthesis.validate()?;
        self.jacobian.validate()?;
        self.attack.validate()?;
        for &b in &self.budgets {
            self.augmentation_plan(Method::Active, b)?;
        }
        Ok(())
    }

    /// Size of the balanced initial set.
    pub fn initial_size(&self) -> u64 {
        (self.initial_per_class * self.dataset.classes) as u64
    }

    /// Augmentation rounds that spend exactly `budget` substitute-training queries.
    /// Active runs need `budget - |S0|` to be a multiple of the per-iteration count;
    /// Jacobian runs double until the budget is reached and label a random subset in
    /// the last round.
    pub fn augmentation_plan(&self, method: Method, budget: u64) -> Result<usize> {
        let s0 = self.initial_size();
        if budget < s0 {
            return Err(Error::InvalidConfig(format!(
                "budget {budget} is below the initial set size {s0}"
            )));
        }
        let extra = budget - s0;
        match method {
            Method::Active => {
                let step = self.synthesis.per_iteration as u64;
                if !extra.is_multiple_of(step) {
                    return Err(Error::InvalidConfig(format!(
                        "budget {budget} minus initial set {s0} is not a multiple of {step} epochs per iteration"
                    )));
                }
                Ok((extra / step) as usize)
            }
            Method::Jacobian => {
                let mut rounds = 0;
                let mut size = s0;
                while size < budget {
                    size *= 2;
                    rounds += 1;
                }
                Ok(rounds)
            }
            Method::Noise => Ok(0),
        }
    }
}

/// Seed of run `run` under `master`.
pub fn run_seed(master: u64, run: usize) -> u64 {
    derive_seed(master, run as u64, "run")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSeeds(pub u64);

impl RunSeeds {
    pub fn stage(self, name: &str) -> u64 {
        derive_seed(self.0, 0, name)
    }
}

/// Everything a run shares across methods and budgets: data, the trained target,
/// the target's clean and noisy test scores, and the balanced initial set.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub seed: u64,
    pub train: LabeledSet,
    pub test: LabeledSet,
    pub pool: Vec<EpochTensor>,
    pub target: Model,
    pub target_report: TrainReport,
    /// Target predictions on the clean test epochs.
    pub target_test_predictions: Vec<usize>,
    pub baseline: MetricReport,
    pub noisy: MetricReport,
    pub initial: Vec<EpochTensor>,
    /// Target queries spent labeling the pool for balancing.
    pub balancing_queries: u64,
}

/// Generates the three data splits of a run.
pub fn generate_splits(
    cfg: &ExperimentConfig,
    seeds: RunSeeds,
) -> Result<(LabeledSet, LabeledSet, Vec<EpochTensor>)> {
    let d = &cfg.dataset;
    let task = seeds.stage("data-task");
    let train = d.generate(d.train_per_class, task, seeds.stage("data-train"))?;
    let test = d.generate(d.test_per_class, task, seeds.stage("data-test"))?;
    let pool = d
        .generate(d.pool_per_class, task, seeds.stage("data-pool"))?
        .into_parts()
        .0;
    Ok((train, test, pool))
}

/// Trains the target of a run on its training split.
pub fn train_target(
    cfg: &ExperimentConfig,
    seeds: RunSeeds,
    train: &LabeledSet,
) -> Result<(Model, TrainReport)> {
    let mut target = Model::new(cfg.target.spec(&cfg.dataset, seeds.stage("target-init")))?;
    let report = target.train(train, &cfg.target.train_config(seeds.stage("target-train")))?;
    Ok((target, report))
}

fn noise_config(cfg: &ExperimentConfig, seeds: RunSeeds) -> AttackConfig {
    AttackConfig {
        epsilon: cfg.attack.epsilon,
        method: AttackMethod::Noise,
        noise_seed: seeds.stage("noise"),
    }
}

fn score(
    f: &Model,
    epochs: &[EpochTensor],
    labels: &[usize],
    classes: usize,
) -> Result<MetricReport> {
    MetricReport::new(&eval::predict_all(f, epochs)?, labels, classes)
}

pub fn prepare_run(cfg: &ExperimentConfig, seed: u64) -> Result<RunContext> {
    cfg.validate()?;
    let seeds = RunSeeds(seed);
    let classes = cfg.dataset.classes;
    let (train, test, pool) = generate_splits(cfg, seeds).stage("data generation")?;
    let (target, target_report) = train_target(cfg, seeds, &train).stage("target training")?;
    let clean = || -> Result<_> {
        let predictions = eval::predict_all(&target, test.epochs())?;
        let baseline = MetricReport::new(&predictions, test.labels(), classes)?;
        let noisy_examples =
            attack::craft_batch(&target, test.epochs(), None, &noise_config(cfg, seeds))?;
        let noisy = score(
            &target,
            &attack::perturbed(&noisy_examples),
            test.labels(),
            classes,
        )?;
        Ok((predictions, baseline, noisy))
    };
    let (target_test_predictions, baseline, noisy) = clean().stage("baseline evaluation")?;

    let mut oracle = TargetOracle::new(&target);
    let shortfall = if cfg.strict_balance {
        Shortfall::Fail
    } else {
        Shortfall::TakeAll
    };
    let initial = balance_by_predicted_label(
        &mut oracle,
        &pool,
        cfg.initial_per_class,
        seeds.stage("balance"),
        shortfall,
    )
    .stage("initial-set balancing")?;
    let balancing_queries = oracle.query_count();
    Ok(RunContext {
        seed,
        train,
        test,
        pool,
        target,
        target_report,
        target_test_predictions,
        baseline,
        noisy,
        initial,
        balancing_queries,
    })
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub row: ResultRow,
    /// Substitute-training trace; target queries include the balancing queries.
    pub trace: Vec<TraceRecord>,
    pub substitute: Option<Model>,
    /// Fraction of clean test epochs on which the substitute reproduces the target.
    pub agreement: Option<f64>,
    pub attacked: MetricReport,
    pub examples: Vec<AdversarialExample>,
}

impl RunOutcome {
    /// Target queries over the whole run, balancing included.
    pub fn target_queries(&self) -> u64 {
        self.trace.last().map_or(0, |r| r.target_queries)
    }
}

/// Trains a substitute with `method` against the run's target and attacks the test
/// set with it. With a `budget`, the augmentation plan is derived from it and the
/// oracle refuses to exceed it; otherwise the configured iteration counts apply.
pub fn execute(
    cfg: &ExperimentConfig,
    ctx: &RunContext,
    method: Method,
    budget: Option<u64>,
) -> Result<RunOutcome> {
    let seeds = RunSeeds(ctx.seed);
    let classes = cfg.dataset.classes;
    let labels = ctx.test.labels();
    let (substitute, trace, examples) = match method {
        Method::Noise => {
            let examples = attack::craft_batch(
                &ctx.target,
                ctx.test.epochs(),
                None,
                &noise_config(cfg, seeds),
            )?;
            let trace = vec![TraceRecord {
                iteration: 0,
                target_queries: ctx.balancing_queries,
                substitute_queries: 0,
                train_set_size: 0,
            }];
            (None, trace, examples)
        }
        Method::Active | Method::Jacobian => {
            let mut oracle = match budget {
                Some(b) => TargetOracle::with_budget(&ctx.target, b)?,
                None => TargetOracle::new(&ctx.target),
            };
            let spec = cfg
                .substitute
                .spec(&cfg.dataset, seeds.stage("substitute-init"));
            let train_cfg = cfg.substitute.train_config(seeds.stage("substitute-train"));
            let run = pretrain_substitute(&mut oracle, &ctx.initial, &spec, &train_cfg)
                .stage("substitute pre-training")?;
            let run = if method == Method::Active {
                let syn = SynthesisConfig {
                    iterations: match budget {
                        Some(b) => cfg.augmentation_plan(method, b)?,
                        None => cfg.synthesis.iterations,
                    },
                    seed: seeds.stage("synthesis"),
                    ..cfg.synthesis.clone()
                };
                if syn.iterations == 0 {
                    run
                } else {
                    continue_active(&mut oracle, run, &syn).stage("query synthesis")?
                }
            } else {
                let jac = JacobianConfig {
                    iterations: match budget {
                        Some(b) => cfg.augmentation_plan(method, b)?,
                        None => cfg.jacobian.iterations,
                    },
                    query_cap: budget.or(cfg.jacobian.query_cap),
                    seed: seeds.stage("jacobian"),
                    ..cfg.jacobian.clone()
                };
                continue_jacobian(&mut oracle, run, &jac).stage("jacobian augmentation")?
            };
            let attack_cfg = AttackConfig {
                method: AttackMethod::Ufgsm,
                ..cfg.attack.clone()
            };
            let examples = attack::craft_batch(&run.model, ctx.test.epochs(), None, &attack_cfg)
                .stage("crafting")?;
            let trace = run
                .trace
                .records
                .iter()
                .map(|r| TraceRecord {
                    target_queries: r.target_queries + ctx.balancing_queries,
                    ..*r
                })
                .collect();
            (Some(run.model), trace, examples)
        }
    };
    let attacked = score(&ctx.target, &attack::perturbed(&examples), labels, classes)?;
    let agreement = substitute
        .as_ref()
        .map(|s| eval::boundary_agreement(s, &ctx.target_test_predictions, ctx.test.epochs()))
        .transpose()?;
    let total_queries = trace.last().map_or(0, |r| r.target_queries);
    let row = ResultRow {
        dataset: cfg.dataset.name().to_string(),
        target_model: cfg.target.name(),
        substitute_model: if method == Method::Noise {
            "none".to_string()
        } else {
            cfg.substitute.name()
        },
        method: method.to_string(),
        budget: budget.unwrap_or(total_queries - ctx.balancing_queries),
        seed: ctx.seed,
        rca: attacked.rca,
        bca: attacked.bca,
        baseline_rca: ctx.baseline.rca,
        baseline_bca: ctx.baseline.bca,
        noisy_rca: ctx.noisy.rca,
        noisy_bca: ctx.noisy.bca,
    };
    Ok(RunOutcome {
        row,
        trace,
        substitute,
        agreement,
        attacked,
        examples,
    })
}

/// Prepares run `run` of `cfg` and executes it.
pub fn run_once(
    cfg: &ExperimentConfig,
    run: usize,
    method: Method,
    budget: Option<u64>,
) -> Result<RunOutcome> {
    let ctx = prepare_run(cfg, run_seed(cfg.master_seed, run))?;
    execute(cfg, &ctx, method, budget)
}
