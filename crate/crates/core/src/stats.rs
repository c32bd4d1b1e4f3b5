//! Two-population significance tests and the baseline-vs-treatment report.

use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::train::RunSummary;

pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

fn check_finite(name: &str, xs: &[f64]) -> Result<()> {
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "{name} contains non-finite values"
        )));
    }
    Ok(())
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased (n-1) sample variance.
fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

fn two_sided_t(t: f64, df: f64) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    (2.0 * dist.sf(t.abs())).min(1.0)
}

/// Two-sided Welch t-test with Welch-Satterthwaite degrees of freedom.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidArgument(
            "welch t-test needs at least two values per sample".into(),
        ));
    }
    check_finite("a", a)?;
    check_finite("b", b)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (qa, qb) = (sample_variance(a) / na, sample_variance(b) / nb);
    let diff = mean(a) - mean(b);
    let se2 = qa + qb;
    if se2 == 0.0 {
        // Both samples constant.
        return Ok(if diff == 0.0 {
            TestResult {
                statistic: 0.0,
                p_value: 1.0,
            }
        } else {
            TestResult {
                statistic: diff.signum() * f64::INFINITY,
                p_value: 0.0,
            }
        });
    }
    let t = diff / se2.sqrt();
    let df = se2 * se2 / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
    Ok(TestResult {
        statistic: t,
        p_value: two_sided_t(t, df),
    })
}

/// Average ranks (1-based) with ties sharing their mean rank, plus the
/// tie-correction sum `sum (t^3 - t)`.
fn average_ranks(values: &[f64]) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &k in &order[start..end] {
            ranks[k] = rank;
        }
        let t = (end - start) as f64;
        ties += t * t * t - t;
        start = end;
    }
    (ranks, ties)
}

/// Two-group Kruskal-Wallis H with tie correction; p from chi-square(1).
/// The chi-square approximation is reasonable from five values per group.
pub fn kruskal_wallis(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument(
            "kruskal-wallis needs nonempty samples".into(),
        ));
    }
    check_finite("a", a)?;
    check_finite("b", b)?;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let n = pooled.len() as f64;
    let (ranks, ties) = average_ranks(&pooled);
    let correction = 1.0 - ties / (n * n * n - n);
    if correction <= 0.0 {
        // Every value tied.
        return Ok(TestResult {
            statistic: 0.0,
            p_value: 1.0,
        });
    }
    let ra: f64 = ranks[..a.len()].iter().sum();
    let rb: f64 = ranks[a.len()..].iter().sum();
    let h_raw = 12.0 / (n * (n + 1.0)) * (ra * ra / a.len() as f64 + rb * rb / b.len() as f64)
        - 3.0 * (n + 1.0);
    let h = (h_raw / correction).max(0.0);
    let chi2 = ChiSquared::new(1.0).expect("one degree of freedom");
    Ok(TestResult {
        statistic: h,
        p_value: chi2.sf(h).clamp(0.0, 1.0),
    })
}

/// Pearson correlation with a two-sided p-value from the t transform.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<TestResult> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "pearson needs equal lengths, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(Error::InvalidArgument(
            "pearson needs at least three pairs".into(),
        ));
    }
    check_finite("x", x)?;
    check_finite("y", y)?;
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::InvalidArgument(
            "correlation is undefined for a constant sample".into(),
        ));
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let df = (x.len() - 2) as f64;
    let p = if r.abs() == 1.0 {
        0.0
    } else {
        two_sided_t(r * (df / (1.0 - r * r)).sqrt(), df)
    };
    Ok(TestResult {
        statistic: r,
        p_value: p,
    })
}

pub fn median(a: &[f64]) -> Result<f64> {
    if a.is_empty() {
        return Err(Error::InvalidArgument("median of an empty sample".into()));
    }
    let mut v = a.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

pub fn median_abs_deviation(a: &[f64]) -> Result<f64> {
    let m = median(a)?;
    let dev: Vec<f64> = a.iter().map(|x| (x - m).abs()).collect();
    median(&dev)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Improved,
    Worsened,
    Indistinct,
}

impl Verdict {
    pub fn marker(self) -> &'static str {
        match self {
            Verdict::Improved => "(+)",
            Verdict::Worsened => "(−)",
            Verdict::Indistinct => "(=)",
        }
    }

    /// `diff` is treatment minus baseline.
    pub fn decide(p_value: f64, diff: f64, higher_is_better: bool, alpha: f64) -> Self {
        if p_value.is_nan() || p_value >= alpha || diff == 0.0 {
            return Verdict::Indistinct;
        }
        if (diff > 0.0) == higher_is_better {
            Verdict::Improved
        } else {
            Verdict::Worsened
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Improved => "improved",
            Verdict::Worsened => "worsened",
            Verdict::Indistinct => "indistinct",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Epoch1TrainAcc,
    Epoch1ValAcc,
    ConvergenceEpoch,
    TestAcc,
}

impl Metric {
    pub const ALL: [Metric; 4] = [
        Metric::Epoch1TrainAcc,
        Metric::Epoch1ValAcc,
        Metric::ConvergenceEpoch,
        Metric::TestAcc,
    ];

    pub fn higher_is_better(self) -> bool {
        !matches!(self, Metric::ConvergenceEpoch)
    }

    pub fn label(self) -> &'static str {
        match self {
            Metric::Epoch1TrainAcc => "epoch 1 acc.",
            Metric::Epoch1ValAcc => "epoch 1 val. acc.",
            Metric::ConvergenceEpoch => "convergence",
            Metric::TestAcc => "test acc.",
        }
    }

    pub fn extract(self, run: &RunSummary) -> f64 {
        match self {
            Metric::Epoch1TrainAcc => run.epoch1_train_acc,
            Metric::Epoch1ValAcc => run.epoch1_val_acc,
            Metric::ConvergenceEpoch => run.convergence_epoch as f64,
            Metric::TestAcc => run.test_acc,
        }
    }
}

/// Location and spread of one population for one metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub n: usize,
    pub mean: f64,
    /// Population (1/n) standard deviation.
    pub std: f64,
    pub median: f64,
    pub mad: f64,
}

impl Spread {
    pub fn of(xs: &[f64]) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::InvalidArgument("empty population".into()));
        }
        let m = mean(xs);
        let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64;
        Ok(Self {
            n: xs.len(),
            mean: m,
            std: var.sqrt(),
            median: median(xs)?,
            mad: median_abs_deviation(xs)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricComparison {
    pub metric: Metric,
    pub baseline: Spread,
    pub treatment: Spread,
    pub t_statistic: f64,
    pub t_p_value: f64,
    pub h_statistic: f64,
    pub h_p_value: f64,
    pub mean_verdict: Verdict,
    pub median_verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub baseline_label: String,
    pub treatment_label: String,
    pub alpha: f64,
    pub metrics: Vec<MetricComparison>,
    pub warnings: Vec<String>,
}

pub fn compare_samples(
    metric: Metric,
    baseline: &[f64],
    treatment: &[f64],
    alpha: f64,
) -> Result<MetricComparison> {
    let b = Spread::of(baseline)?;
    let t = Spread::of(treatment)?;
    // Tests take treatment first so the statistic's sign follows
    // treatment - baseline.
    let welch = welch_t_test(treatment, baseline)?;
    let kw = kruskal_wallis(treatment, baseline)?;
    let better = metric.higher_is_better();
    Ok(MetricComparison {
        metric,
        baseline: b,
        treatment: t,
        t_statistic: welch.statistic,
        t_p_value: welch.p_value,
        h_statistic: kw.statistic,
        h_p_value: kw.p_value,
        mean_verdict: Verdict::decide(welch.p_value, t.mean - b.mean, better, alpha),
        median_verdict: Verdict::decide(kw.p_value, t.median - b.median, better, alpha),
    })
}

/// Unpaired comparison of two run populations on every reported metric.
pub fn compare(
    baseline_label: &str,
    baseline: &[RunSummary],
    treatment_label: &str,
    treatment: &[RunSummary],
    alpha: f64,
) -> Result<ComparisonReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let mut warnings = Vec::new();
    let mut reps_b: Vec<u32> = baseline.iter().map(|r| r.repetition).collect();
    let mut reps_t: Vec<u32> = treatment.iter().map(|r| r.repetition).collect();
    reps_b.sort_unstable();
    reps_t.sort_unstable();
    if reps_b != reps_t {
        let msg = format!(
            "populations are not seed-paired ({} baseline runs, {} treatment runs); running unpaired tests",
            baseline.len(),
            treatment.len()
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let metrics = Metric::ALL
        .iter()
        .map(|&m| {
            let b: Vec<f64> = baseline.iter().map(|r| m.extract(r)).collect();
            let t: Vec<f64> = treatment.iter().map(|r| m.extract(r)).collect();
            compare_samples(m, &b, &t, alpha)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ComparisonReport {
        baseline_label: baseline_label.to_string(),
        treatment_label: treatment_label.to_string(),
        alpha,
        metrics,
        warnings,
    })
}

impl ComparisonReport {
    pub fn get(&self, metric: Metric) -> Option<&MetricComparison> {
        self.metrics.iter().find(|m| m.metric == metric)
    }

    /// Table with one row per population; treatment cells carry
    /// `(+)`/`(−)`/`(=)` markers.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        out.push_str(
            "| weights | epoch 1 acc. | epoch 1 val. acc. | convergence | average | median |\n",
        );
        out.push_str("|---|---|---|---|---|---|\n");
        let cells = |treat: bool| -> Vec<String> {
            let mut row = Vec::new();
            for m in &self.metrics {
                let s = if treat { &m.treatment } else { &m.baseline };
                let mark = |v: Verdict| {
                    if treat {
                        format!(" {}", v.marker())
                    } else {
                        String::new()
                    }
                };
                if m.metric == Metric::TestAcc {
                    row.push(format!(
                        "{:.2}±{:.2}{}",
                        s.mean,
                        s.std,
                        mark(m.mean_verdict)
                    ));
                    row.push(format!(
                        "{:.2}±{:.2}{}",
                        s.median,
                        s.mad,
                        mark(m.median_verdict)
                    ));
                } else {
                    row.push(format!(
                        "{:.2}±{:.2}{}",
                        s.mean,
                        s.std,
                        mark(m.mean_verdict)
                    ));
                }
            }
            row
        };
        out.push_str(&format!(
            "| {} | {} |\n",
            self.baseline_label,
            cells(false).join(" | ")
        ));
        out.push_str(&format!(
            "| {} | {} |\n",
            self.treatment_label,
            cells(true).join(" | ")
        ));
        out.push('\n');
        out.push_str("| metric | t | p (t) | H | p (H) | mean | median |\n");
        out.push_str("|---|---|---|---|---|---|---|\n");
        for m in &self.metrics {
            out.push_str(&format!(
                "| {} | {:.4} | {:.4e} | {:.4} | {:.4e} | {} | {} |\n",
                m.metric.label(),
                m.t_statistic,
                m.t_p_value,
                m.h_statistic,
                m.h_p_value,
                m.mean_verdict,
                m.median_verdict
            ));
        }
        for w in &self.warnings {
            out.push_str(&format!("\nwarning: {w}\n"));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "metric,baseline_mean,baseline_std,baseline_median,baseline_mad,treatment_mean,treatment_std,treatment_median,treatment_mad,t,t_p,h,h_p,mean_verdict,median_verdict\n",
        );
        for m in &self.metrics {
            let metric = serde_json::to_value(m.metric).expect("metric serializes");
            out.push_str(&format!(
                "{},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{},{}\n",
                metric.as_str().unwrap_or_default(),
                m.baseline.mean,
                m.baseline.std,
                m.baseline.median,
                m.baseline.mad,
                m.treatment.mean,
                m.treatment.std,
                m.treatment.median,
                m.treatment.mad,
                m.t_statistic,
                m.t_p_value,
                m.h_statistic,
                m.h_p_value,
                m.mean_verdict,
                m.median_verdict
            ));
        }
        out
    }
}
