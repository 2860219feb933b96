//! Accuracy metrics, substitute/target agreement, query-budget sweeps, and the small
//! amount of statistics needed to compare methods (rank correlation, sign test).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::classifier::Classifier;
use crate::data::EpochTensor;
use crate::error::{Error, Result};

fn check_pairs(preds: &[usize], labels: &[usize]) -> Result<()> {
    if preds.is_empty() {
        return Err(Error::Empty("prediction vector"));
    }
    if preds.len() != labels.len() {
        return Err(Error::InvalidConfig(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    Ok(())
}

fn class_count(preds: &[usize], labels: &[usize]) -> usize {
    preds.iter().chain(labels).max().map_or(0, |&m| m + 1)
}

/// Fraction of positions where `preds` equals `labels`.
pub fn rca(preds: &[usize], labels: &[usize]) -> Result<f64> {
    check_pairs(preds, labels)?;
    let hits = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / preds.len() as f64)
}

/// Mean recall over the classes that occur in `labels`.
pub fn bca(preds: &[usize], labels: &[usize]) -> Result<f64> {
    Ok(MetricReport::new(preds, labels, class_count(preds, labels))?.bca)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rca: f64,
    pub bca: f64,
    /// Recall per class; `None` for classes without support.
    pub recalls: Vec<Option<f64>>,
    /// `confusion[true][predicted]` counts.
    pub confusion: Vec<Vec<u64>>,
}

impl MetricReport {
    pub fn new(preds: &[usize], labels: &[usize], classes: usize) -> Result<Self> {
        check_pairs(preds, labels)?;
        let mut confusion = vec![vec![0u64; classes]; classes];
        for (&p, &l) in preds.iter().zip(labels) {
            if p >= classes || l >= classes {
                return Err(Error::InvalidLabel {
                    label: p.max(l),
                    classes,
                });
            }
            confusion[l][p] += 1;
        }
        Ok(Self::from_confusion(confusion))
    }

    /// Recomputes every metric from a square confusion matrix with non-zero total.
    pub fn from_confusion(confusion: Vec<Vec<u64>>) -> Self {
        let total: u64 = confusion.iter().flatten().sum();
        let diagonal: u64 = (0..confusion.len()).map(|i| confusion[i][i]).sum();
        let recalls: Vec<Option<f64>> = confusion
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let support: u64 = row.iter().sum();
                (support > 0).then(|| row[i] as f64 / support as f64)
            })
            .collect();
        let present: Vec<f64> = recalls.iter().flatten().copied().collect();
        Self {
            rca: diagonal as f64 / total as f64,
            bca: present.iter().sum::<f64>() / present.len() as f64,
            recalls,
            confusion,
        }
    }

    pub fn support(&self) -> Vec<u64> {
        self.confusion.iter().map(|row| row.iter().sum()).collect()
    }
}

/// Labels of `f` on every epoch, in order.
pub fn predict_all<C: Classifier + ?Sized>(f: &C, epochs: &[EpochTensor]) -> Result<Vec<usize>> {
    epochs.iter().map(|x| f.predict(x)).collect()
}

/// Fraction of `epochs` on which `f` reproduces `target_labels`.
pub fn boundary_agreement<C: Classifier + ?Sized>(
    f: &C,
    target_labels: &[usize],
    epochs: &[EpochTensor],
) -> Result<f64> {
    if epochs.len() != target_labels.len() {
        return Err(Error::InvalidConfig(format!(
            "{} target labels for {} epochs",
            target_labels.len(),
            epochs.len()
        )));
    }
    rca(&predict_all(f, epochs)?, target_labels)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (`n - 1` denominator); 0 for a single value.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRun {
    pub budget: u64,
    pub run: usize,
    pub report: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub budget: u64,
    pub mean_rca: f64,
    pub mean_bca: f64,
    pub std_rca: f64,
    pub std_bca: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SweepCurve {
    pub points: Vec<SweepPoint>,
    /// Every completed run, in execution order.
    pub runs: Vec<SweepRun>,
}

impl SweepCurve {
    pub fn budgets(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.budget as f64).collect()
    }

    pub fn mean_rcas(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.mean_rca).collect()
    }

    /// Rank correlation between budget and mean RCA.
    pub fn budget_rca_correlation(&self) -> Option<f64> {
        spearman(&self.budgets(), &self.mean_rcas())
    }

    fn close_point(&mut self, budget: u64) {
        let reports: Vec<&MetricReport> = self
            .runs
            .iter()
            .filter(|r| r.budget == budget)
            .map(|r| &r.report)
            .collect();
        let rcas: Vec<f64> = reports.iter().map(|r| r.rca).collect();
        let bcas: Vec<f64> = reports.iter().map(|r| r.bca).collect();
        self.points.push(SweepPoint {
            budget,
            mean_rca: mean(&rcas),
            mean_bca: mean(&bcas),
            std_rca: std_dev(&rcas),
            std_bca: std_dev(&bcas),
            runs: rcas.len(),
        });
    }

    /// CSV with header `budget,mean_rca,mean_bca,std_rca,std_bca,runs`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for p in &self.points {
            w.serialize(p)
                .map_err(|e| Error::Parse(format!("sweep csv: {e}")))?;
        }
        w.flush()
            .map_err(|e| Error::Parse(format!("sweep csv: {e}")))?;
        Ok(())
    }
}

/// A sweep stopped by a failing run. `curve` holds the budgets whose runs all
/// completed as points and every completed run, including those of the budget
/// that failed.
#[derive(Debug)]
pub struct SweepAborted {
    pub curve: SweepCurve,
    pub budget: u64,
    pub run: usize,
    pub source: Error,
}

impl fmt::Display for SweepAborted {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "sweep run {} at budget {} failed: {}",
            self.run, self.budget, self.source
        )
    }
}

impl std::error::Error for SweepAborted {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

/// Calls `experiment(budget, run)` for every budget and run index `0..runs`, budget
/// by budget, and aggregates the reports. The closure owns seeding; the usual
/// choice is `derive_seed(master, run, stage)`, which pairs runs across budgets and
/// methods.
pub fn run_sweep<F>(
    budgets: &[u64],
    runs: usize,
    mut experiment: F,
) -> std::result::Result<SweepCurve, SweepAborted>
where
    F: FnMut(u64, usize) -> Result<MetricReport>,
{
    let abort = |curve, budget, run, source| SweepAborted {
        curve,
        budget,
        run,
        source,
    };
    let mut curve = SweepCurve::default();
    if budgets.is_empty() || runs == 0 {
        return Err(abort(curve, 0, 0, Error::Empty("sweep budgets or runs")));
    }
    if let Some(w) = budgets.windows(2).find(|w| w[0] >= w[1]) {
        let msg = format!(
            "sweep budgets must be strictly increasing, got {} then {}",
            w[0], w[1]
        );
        return Err(abort(curve, w[1], 0, Error::InvalidConfig(msg)));
    }
    for &budget in budgets {
        for run in 0..runs {
            match experiment(budget, run) {
                Ok(report) => curve.runs.push(SweepRun {
                    budget,
                    run,
                    report,
                }),
                Err(e) => return Err(abort(curve, budget, run, e)),
            }
        }
        curve.close_point(budget);
    }
    Ok(curve)
}

/// Ranks starting at 1, ties sharing their average rank.
fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let (mx, my) = (mean(xs), mean(ys));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

/// Spearman rank correlation (Pearson on average ranks). `None` for fewer than two
/// points, unequal lengths, or a constant input.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    pearson(&average_ranks(xs), &average_ranks(ys))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignTest {
    /// Pairs with `a < b`.
    pub below: usize,
    /// Pairs with `a > b`.
    pub above: usize,
    pub ties: usize,
    /// One-sided exact p-value for "a tends to be below b": `P(X >= below)` with
    /// `X ~ Binomial(below + above, 1/2)`. 1 when every pair ties.
    pub p_value: f64,
}

fn ln_choose(n: usize, k: usize) -> f64 {
    (1..=k).map(|i| ((n - k + i) as f64 / i as f64).ln()).sum()
}

/// Exact `P(X >= k)` for `X ~ Binomial(n, 1/2)`.
pub fn binomial_upper_tail(n: usize, k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let ln_half = -(n as f64) * std::f64::consts::LN_2;
    (k..=n)
        .map(|i| (ln_choose(n, i) + ln_half).exp())
        .sum::<f64>()
        .min(1.0)
}

/// Paired sign test on `a[i]` vs `b[i]`; ties are dropped.
pub fn paired_sign_test(a: &[f64], b: &[f64]) -> Result<SignTest> {
    if a.len() != b.len() {
        return Err(Error::InvalidConfig(format!(
            "{} vs {} paired values",
            a.len(),
            b.len()
        )));
    }
    let below = a.iter().zip(b).filter(|(x, y)| x < y).count();
    let above = a.iter().zip(b).filter(|(x, y)| x > y).count();
    Ok(SignTest {
        below,
        above,
        ties: a.len() - below - above,
        p_value: binomial_upper_tail(below + above, below),
    })
}

/// One results-table row: accuracy of the target on clean, noise-perturbed and
/// adversarial test epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub dataset: String,
    pub target_model: String,
    pub substitute_model: String,
    pub method: String,
    pub budget: u64,
    pub seed: u64,
    pub rca: f64,
    pub bca: f64,
    pub baseline_rca: f64,
    pub baseline_bca: f64,
    pub noisy_rca: f64,
    pub noisy_bca: f64,
}

impl ResultRow {
    /// Baseline RCA minus attacked RCA.
    pub fn rca_drop(&self) -> f64 {
        self.baseline_rca - self.rca
    }
}

pub fn write_results_csv<W: std::io::Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)
            .map_err(|e| Error::Parse(format!("results csv: {e}")))?;
    }
    w.flush()
        .map_err(|e| Error::Parse(format!("results csv: {e}")))?;
    Ok(())
}

pub fn read_results_csv<R: std::io::Read>(input: R) -> Result<Vec<ResultRow>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(|e| Error::Parse(format!("results csv: {e}"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_cases() {
        assert_eq!(rca(&[1, 0, 1, 1], &[1, 1, 1, 0]).unwrap(), 0.5);
        assert_eq!(rca(&[0, 1, 2], &[0, 1, 2]).unwrap(), 1.0);
        let b = bca(&[0, 0, 1, 1], &[0, 0, 0, 1]).unwrap();
        assert!((b - 5.0 / 6.0).abs() < 1e-15);
        assert!(rca(&[], &[]).is_err());
        assert!(bca(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn absent_class_is_excluded() {
        let r = MetricReport::new(&[0, 2, 0], &[0, 0, 0], 3).unwrap();
        assert_eq!(r.recalls, vec![Some(2.0 / 3.0), None, None]);
        assert_eq!(r.bca, 2.0 / 3.0);
        assert_eq!(r.support(), vec![3, 0, 0]);
    }

    #[test]
    fn balanced_supports_give_equal_metrics() {
        let r = MetricReport::new(&[0, 1, 1, 1, 0, 0], &[0, 0, 1, 1, 2, 2], 3).unwrap();
        assert!((r.rca - r.bca).abs() < 1e-15);
    }

    #[test]
    fn constant_predictor_agreement() {
        struct Constant;
        impl Classifier for Constant {
            fn input_shape(&self) -> (usize, usize) {
                (1, 1)
            }
            fn num_classes(&self) -> usize {
                2
            }
            fn predict(&self, _: &EpochTensor) -> Result<usize> {
                Ok(0)
            }
        }
        let xs = vec![EpochTensor::zeros(1, 1); 4];
        assert_eq!(
            boundary_agreement(&Constant, &[0, 1, 0, 1], &xs).unwrap(),
            0.5
        );
    }

    fn report(rca: f64) -> MetricReport {
        MetricReport {
            rca,
            bca: rca,
            recalls: vec![],
            confusion: vec![],
        }
    }

    #[test]
    fn single_run_sweep_echoes_the_run() {
        let c = run_sweep(&[200], 1, |_, _| Ok(report(0.7))).unwrap();
        assert_eq!(c.points.len(), 1);
        assert_eq!(c.points[0].mean_rca, 0.7);
        assert_eq!(c.points[0].std_rca, 0.0);
        assert_eq!(c.points[0].runs, 1);
    }

    #[test]
    fn sweep_aggregates_and_preserves_partial_results() {
        let c = run_sweep(&[1, 2], 3, |b, r| Ok(report(b as f64 + r as f64))).unwrap();
        assert_eq!(c.points[1].mean_rca, 3.0);
        assert_eq!(c.points[1].std_rca, 1.0);
        let err = run_sweep(&[1, 2, 3], 2, |b, r| {
            if b == 2 && r == 1 {
                Err(Error::Empty("boom"))
            } else {
                Ok(report(0.5))
            }
        })
        .unwrap_err();
        assert_eq!(err.curve.points.len(), 1);
        assert_eq!(err.curve.runs.len(), 3);
        assert_eq!((err.budget, err.run), (2, 1));
        assert!(run_sweep(&[2, 2], 1, |_, _| Ok(report(0.5))).is_err());
    }

    #[test]
    fn spearman_cases() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[1.0, 4.0, 9.0]), Some(1.0));
        assert_eq!(spearman(&[1.0, 2.0], &[5.0, 5.0]), None);
        assert_eq!(
            average_ranks(&[3.0, 1.0, 3.0, 2.0]),
            vec![3.5, 1.0, 3.5, 2.0]
        );
    }

    #[test]
    fn sign_test_exact_values() {
        // 10 of 10 below: 2^-10
        let t = paired_sign_test(&[0.0; 10], &[1.0; 10]).unwrap();
        assert!((t.p_value - 1.0 / 1024.0).abs() < 1e-15);
        // 8 of 10: (45 + 10 + 1) / 1024
        assert!((binomial_upper_tail(10, 8) - 56.0 / 1024.0).abs() < 1e-14);
        assert_eq!(binomial_upper_tail(0, 0), 1.0);
        let t = paired_sign_test(&[1.0, 2.0, 3.0], &[1.0, 1.0, 4.0]).unwrap();
        assert_eq!((t.below, t.above, t.ties), (1, 1, 1));
        assert!((t.p_value - 0.75).abs() < 1e-15);
    }

    #[test]
    fn results_csv_round_trip() {
        let row = ResultRow {
            dataset: "synthetic".into(),
            target_model: "mlp".into(),
            substitute_model: "mlp".into(),
            method: "active".into(),
            budget: 800,
            seed: 3,
            rca: 0.5,
            bca: 0.5,
            baseline_rca: 0.9,
            baseline_bca: 0.9,
            noisy_rca: 0.89,
            noisy_bca: 0.89,
        };
        let mut buf = Vec::new();
        write_results_csv(std::slice::from_ref(&row), &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            "dataset,target_model,substitute_model,method,budget,seed,rca,bca,baseline_rca,baseline_bca,noisy_rca,noisy_bca\n"
        ));
        assert_eq!(read_results_csv(&buf[..]).unwrap(), vec![row]);
    }
}
