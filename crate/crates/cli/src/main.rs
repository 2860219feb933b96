//! `qsynth`: config-driven black-box attack experiments.

mod manifest;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use qsynth::attack::AdversarialExample;
use qsynth::data::{write_epochs, LabeledSet};
use qsynth::eval::{
    self, paired_sign_test, read_results_csv, run_sweep, write_results_csv, ResultRow,
};
use qsynth::experiment::{
    execute, generate_splits, prepare_run, run_seed, ExperimentConfig, Method, RunContext,
    RunOutcome, RunSeeds,
};
use qsynth::nn::checkpoint;
use qsynth::synthesis::write_trace_csv;

use manifest::{Manifest, RunEntry};

#[derive(Parser)]
#[command(
    name = "qsynth",
    version,
    about = "Black-box attacks via query-synthesis substitute training"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the target's training and test splits of run 0 as EPO1 files.
    GenData(Common),
    /// Train the target of run 0 and save it as a JSON checkpoint.
    TrainTarget(Common),
    /// Train substitutes, craft adversarial test epochs and score the target.
    Attack(Common),
    /// Attacked accuracy as a function of the query budget.
    Sweep(Common),
    /// Summarize a results.csv.
    Report(ReportArgs),
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `method`; `sweep` accepts it repeatedly and runs each method on the
    /// same per-run data.
    #[arg(long, value_parser = parse_method)]
    method: Vec<Method>,
    /// Substitute-training query budget (initial set included). `sweep` replaces
    /// its budget list with the given values.
    #[arg(long)]
    budget: Vec<u64>,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory holding results.csv.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Explicit results file; takes precedence over `--out`.
    #[arg(long)]
    results: Option<PathBuf>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: qsynth::Error| e.to_string())
}

struct Setup {
    cfg: ExperimentConfig,
    out: PathBuf,
    methods: Vec<Method>,
    budgets: Vec<u64>,
}

fn setup(args: &Common) -> Result<Setup> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str::<ExperimentConfig>(&text)
                .with_context(|| format!("parsing {}", path.display()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.output_dir = out.display().to_string();
    }
    if let [m] = args.method[..] {
        cfg.method = m;
    }
    if !args.budget.is_empty() {
        cfg.budgets = args.budget.clone();
    }
    cfg.validate().context("invalid config")?;
    let out = PathBuf::from(&cfg.output_dir);
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let methods = if args.method.is_empty() {
        vec![cfg.method]
    } else {
        args.method.clone()
    };
    Ok(Setup {
        cfg,
        out,
        methods,
        budgets: args.budget.clone(),
    })
}

fn gen_data(args: &Common) -> Result<()> {
    let s = setup(args)?;
    let mut manifest = Manifest::start(&s.out, "gen-data", &s.cfg)?;
    let result = (|| {
        let seed = run_seed(s.cfg.master_seed, 0);
        manifest.runs.push(RunEntry { run: 0, seed });
        let (train, test, _) = generate_splits(&s.cfg, RunSeeds(seed))?;
        for (name, set) in [("train.epo", &train), ("test.epo", &test)] {
            let path = s.out.join(name);
            write_epochs(&path, set)?;
            manifest.output(&path, &s.out)?;
            let (c, t) = set.shape().unwrap_or((0, 0));
            println!(
                "{}: n={} C={c} T={t} k1={}",
                path.display(),
                set.len(),
                s.cfg.dataset.classes
            );
        }
        Ok(())
    })();
    manifest.finish(result)
}

fn cmd_train_target(args: &Common) -> Result<()> {
    let s = setup(args)?;
    let mut manifest = Manifest::start(&s.out, "train-target", &s.cfg)?;
    let result = (|| {
        let seed = run_seed(s.cfg.master_seed, 0);
        manifest.runs.push(RunEntry { run: 0, seed });
        let ctx = prepare_run(&s.cfg, seed)?;
        let path = s.out.join("target.json");
        checkpoint::save(&ctx.target, &path)?;
        manifest.output(&path, &s.out)?;
        println!(
            "target {}: best epoch {} of {}, test RCA {:.4} BCA {:.4}, noisy RCA {:.4} (epsilon {})",
            s.cfg.target.name(),
            ctx.target_report.best_epoch,
            ctx.target_report.train_loss.len(),
            ctx.baseline.rca,
            ctx.baseline.bca,
            ctx.noisy.rca,
            s.cfg.attack.epsilon
        );
        Ok(())
    })();
    manifest.finish(result)
}

#[derive(Serialize)]
struct AdversarialManifest<'a> {
    method: &'a str,
    attack: &'a str,
    epsilon: f64,
    /// Model whose input gradients produced the perturbations.
    gradient_source: &'a str,
    gradient_model: Option<String>,
    /// Labels whose loss gradient was followed, per epoch; absent for noise.
    labels_used: Vec<Option<usize>>,
    original: &'a str,
    perturbed: &'a str,
    note: &'a str,
}

fn write_run(
    dir: &Path,
    root: &Path,
    cfg: &ExperimentConfig,
    ctx: &RunContext,
    outcome: &RunOutcome,
    method: Method,
    manifest: &mut Manifest,
) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let trace = dir.join("trace.csv");
    let file = fs::File::create(&trace).with_context(|| format!("creating {}", trace.display()))?;
    write_trace_csv(&outcome.trace, file)?;
    manifest.output(&trace, root)?;

    let labels = ctx.test.labels().to_vec();
    let perturbed: Vec<_> = outcome
        .examples
        .iter()
        .map(|e: &AdversarialExample| e.perturbed.quantize_f32())
        .collect();
    let original = dir.join("original.epo");
    let adversarial = dir.join("perturbed.epo");
    write_epochs(&original, &ctx.test)?;
    write_epochs(&adversarial, &LabeledSet::new(perturbed, labels)?)?;
    manifest.output(&original, root)?;
    manifest.output(&adversarial, root)?;

    if let Some(substitute) = &outcome.substitute {
        let path = dir.join("substitute.json");
        checkpoint::save(substitute, &path)?;
        manifest.output(&path, root)?;
    }
    let meta = AdversarialManifest {
        method: &method.to_string(),
        attack: if method == Method::Noise { "noise" } else { "ufgsm" },
        epsilon: cfg.attack.epsilon,
        gradient_source: if outcome.substitute.is_some() {
            "substitute"
        } else {
            "none"
        },
        gradient_model: outcome.substitute.as_ref().map(|_| cfg.substitute.name()),
        labels_used: outcome.examples.iter().map(|e| e.label_used).collect(),
        original: "original.epo",
        perturbed: "perturbed.epo",
        note: "labels in both files are the true test labels; perturbed values are rounded to binary32",
    };
    let path = dir.join("adversarial.json");
    fs::write(&path, serde_json::to_string_pretty(&meta)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    manifest.output(&path, root)
}

fn save_results(rows: &[ResultRow], path: &Path) -> Result<()> {
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_results_csv(rows, file)?;
    Ok(())
}

fn cmd_attack(args: &Common) -> Result<()> {
    let s = setup(args)?;
    if s.budgets.len() > 1 {
        bail!("attack takes at most one --budget");
    }
    let budget = s.budgets.first().copied();
    if let Some(b) = budget {
        s.cfg
            .augmentation_plan(s.cfg.method, b)
            .context("invalid --budget")?;
    }
    let mut manifest = Manifest::start(&s.out, "attack", &s.cfg)?;
    let results = s.out.join("results.csv");
    let result = (|| {
        let mut rows = Vec::new();
        for run in 0..s.cfg.runs {
            let seed = run_seed(s.cfg.master_seed, run);
            manifest.runs.push(RunEntry { run, seed });
            let ctx = prepare_run(&s.cfg, seed).with_context(|| format!("run {run}"))?;
            for &method in &s.methods {
                let outcome = execute(&s.cfg, &ctx, method, budget)
                    .with_context(|| format!("run {run}, {method}"))?;
                let dir = if s.methods.len() == 1 {
                    s.out.join(format!("run-{run:03}"))
                } else {
                    s.out.join(format!("run-{run:03}")).join(method.to_string())
                };
                write_run(&dir, &s.out, &s.cfg, &ctx, &outcome, method, &mut manifest)?;
                let r = &outcome.row;
                println!(
                    "run {run} {method}: RCA clean {:.4} noisy {:.4} attacked {:.4}; {} target queries{}",
                    r.baseline_rca,
                    r.noisy_rca,
                    r.rca,
                    outcome.target_queries(),
                    outcome
                        .agreement
                        .map(|a| format!(", agreement {a:.4}"))
                        .unwrap_or_default()
                );
                rows.push(outcome.row);
                save_results(&rows, &results)?;
            }
        }
        manifest.output(&results, &s.out)
    })();
    manifest.finish(result)
}

#[derive(Serialize)]
struct SweepRow {
    method: String,
    budget: u64,
    mean_rca: f64,
    mean_bca: f64,
    std_rca: f64,
    std_bca: f64,
    runs: usize,
}

fn cmd_sweep(args: &Common) -> Result<()> {
    let s = setup(args)?;
    if s.cfg.budgets.is_empty() {
        bail!("sweep needs at least one budget");
    }
    let mut manifest = Manifest::start(&s.out, "sweep", &s.cfg)?;
    let sweep_path = s.out.join("sweep.csv");
    let results = s.out.join("results.csv");
    let result = (|| {
        for &method in &s.methods {
            for &b in &s.cfg.budgets {
                s.cfg
                    .augmentation_plan(method, b)
                    .with_context(|| format!("{method} at budget {b}"))?;
            }
        }
        let mut contexts = Vec::with_capacity(s.cfg.runs);
        for run in 0..s.cfg.runs {
            let seed = run_seed(s.cfg.master_seed, run);
            manifest.runs.push(RunEntry { run, seed });
            contexts.push(prepare_run(&s.cfg, seed).with_context(|| format!("run {run}"))?);
        }
        manifest.save()?;
        let mut rows = Vec::new();
        let mut points = Vec::new();
        let mut failure = None;
        for &method in &s.methods {
            let curve = run_sweep(&s.cfg.budgets, s.cfg.runs, |budget, run| {
                let outcome = execute(&s.cfg, &contexts[run], method, Some(budget))?;
                rows.push(outcome.row);
                Ok(outcome.attacked)
            });
            let curve = match curve {
                Ok(c) => c,
                Err(aborted) => {
                    let msg = format!("{method}: {aborted}");
                    failure = Some(msg);
                    aborted.curve
                }
            };
            points.extend(curve.points.into_iter().map(|p| SweepRow {
                method: method.to_string(),
                budget: p.budget,
                mean_rca: p.mean_rca,
                mean_bca: p.mean_bca,
                std_rca: p.std_rca,
                std_bca: p.std_bca,
                runs: p.runs,
            }));
            if failure.is_some() {
                break;
            }
        }
        let mut w = csv::Writer::from_path(&sweep_path)
            .with_context(|| format!("creating {}", sweep_path.display()))?;
        for p in &points {
            w.serialize(p)?;
            println!(
                "{} budget {}: attacked RCA {:.4} (sd {:.4}) BCA {:.4} over {} runs",
                p.method, p.budget, p.mean_rca, p.std_rca, p.mean_bca, p.runs
            );
        }
        w.flush()?;
        manifest.output(&sweep_path, &s.out)?;
        save_results(&rows, &results)?;
        manifest.output(&results, &s.out)?;
        match failure {
            Some(msg) => bail!("sweep aborted, partial results kept: {msg}"),
            None => Ok(()),
        }
    })();
    manifest.finish(result)
}

#[derive(Serialize)]
struct SummaryRow {
    dataset: String,
    target_model: String,
    substitute_model: String,
    method: String,
    budget: u64,
    runs: usize,
    rca: f64,
    bca: f64,
    baseline_rca: f64,
    baseline_bca: f64,
    noisy_rca: f64,
    noisy_bca: f64,
    rca_drop: f64,
}

fn cmd_report(args: &ReportArgs) -> Result<()> {
    let path = args
        .results
        .clone()
        .unwrap_or_else(|| args.out.join("results.csv"));
    let file = fs::File::open(&path).with_context(|| format!("opening {}", path.display()))?;
    let rows = read_results_csv(file)?;
    if rows.is_empty() {
        bail!("{} has no rows", path.display());
    }
    type Key = (String, String, String, String, u64);
    let mut groups: BTreeMap<Key, Vec<&ResultRow>> = BTreeMap::new();
    for r in &rows {
        let key = (
            r.dataset.clone(),
            r.target_model.clone(),
            r.substitute_model.clone(),
            r.method.clone(),
            r.budget,
        );
        groups.entry(key).or_default().push(r);
    }
    let mean_of = |g: &[&ResultRow], f: fn(&ResultRow) -> f64| {
        eval::mean(&g.iter().map(|r| f(r)).collect::<Vec<_>>())
    };
    let summary: Vec<SummaryRow> = groups
        .iter()
        .map(
            |((dataset, target, substitute, method, budget), g)| SummaryRow {
                dataset: dataset.clone(),
                target_model: target.clone(),
                substitute_model: substitute.clone(),
                method: method.clone(),
                budget: *budget,
                runs: g.len(),
                rca: mean_of(g, |r| r.rca),
                bca: mean_of(g, |r| r.bca),
                baseline_rca: mean_of(g, |r| r.baseline_rca),
                baseline_bca: mean_of(g, |r| r.baseline_bca),
                noisy_rca: mean_of(g, |r| r.noisy_rca),
                noisy_bca: mean_of(g, |r| r.noisy_bca),
                rca_drop: mean_of(g, |r| r.rca_drop()),
            },
        )
        .collect();
    println!(
        "{:<10} {:>7} {:>5} {:>8} {:>8} {:>8} {:>8} {:>8}",
        "method", "budget", "runs", "clean", "noisy", "attacked", "bca", "drop"
    );
    for s in &summary {
        println!(
            "{:<10} {:>7} {:>5} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
            s.method, s.budget, s.runs, s.baseline_rca, s.noisy_rca, s.rca, s.bca, s.rca_drop
        );
    }
    // paired comparison wherever both substitute-training methods share a budget
    let by_seed = |method: &str, budget: u64| -> BTreeMap<u64, f64> {
        rows.iter()
            .filter(|r| r.method == method && r.budget == budget)
            .map(|r| (r.seed, r.rca))
            .collect()
    };
    let budgets: std::collections::BTreeSet<u64> = rows.iter().map(|r| r.budget).collect();
    for b in budgets {
        let (a, j) = (by_seed("active", b), by_seed("jacobian", b));
        let paired: Vec<(f64, f64)> = a
            .iter()
            .filter_map(|(s, &x)| j.get(s).map(|&y| (x, y)))
            .collect();
        if paired.is_empty() {
            continue;
        }
        let (xs, ys): (Vec<f64>, Vec<f64>) = paired.into_iter().unzip();
        let t = paired_sign_test(&xs, &ys)?;
        println!(
            "budget {b}: active below jacobian in {}/{} paired runs, one-sided sign test p = {:.3e}",
            t.below,
            t.below + t.above,
            t.p_value
        );
    }
    let out = path.with_file_name("summary.csv");
    let mut w =
        csv::Writer::from_path(&out).with_context(|| format!("creating {}", out.display()))?;
    for s in &summary {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenData(a) => gen_data(a),
        Command::TrainTarget(a) => cmd_train_target(a),
        Command::Attack(a) => cmd_attack(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
