//! Run aggregation and Welch's t-test with Student-t tail probabilities.

use serde::{Deserialize, Serialize};
use statrs::function::beta::checked_beta_reg;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunGroup {
    pub label: String,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// sample standard deviation (divisor n - 1)
    pub std: f64,
}

pub fn summarize(scores: &[f64]) -> Result<Summary> {
    if scores.len() < 2 {
        return Err(Error::Contract(format!("need at least 2 scores, got {}", scores.len())));
    }
    if scores.iter().any(|v| !v.is_finite()) {
        return Err(Error::Contract("scores must be finite".into()));
    }
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let ss: f64 = scores.iter().map(|v| (v - mean).powi(2)).sum();
    Ok(Summary { n: scores.len(), mean, std: (ss / (n - 1.0)).sqrt() })
}

/// How a reported `±` value is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spread {
    #[default]
    SampleStd,
    StandardError,
}

impl Spread {
    pub fn to_std(self, value: f64, n: usize) -> f64 {
        match self {
            Spread::SampleStd => value,
            Spread::StandardError => value * (n as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sided {
    /// alternative: first mean greater than second
    Greater,
    Two,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestResult {
    pub t: f64,
    pub df: f64,
    pub p: f64,
    pub sided: Sided,
}

/// `I_x(df/2, 1/2)` with `x = df / (df + t^2)`: the two-sided tail mass.
fn two_tail(t: f64, df: f64) -> f64 {
    let x = df / (df + t * t);
    checked_beta_reg(df / 2.0, 0.5, x).expect("arguments validated by caller")
}

/// Student-t cumulative distribution function.
pub fn t_cdf(t: f64, df: f64) -> f64 {
    assert!(df > 0.0 && df.is_finite(), "t_cdf needs finite df > 0, got {df}");
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return if t > 0.0 { 1.0 } else { 0.0 };
    }
    let half = 0.5 * two_tail(t, df);
    if t > 0.0 {
        1.0 - half
    } else {
        half
    }
}

/// Upper tail `P(T > t)`, computed without cancellation for large `t`.
pub fn t_sf(t: f64, df: f64) -> f64 {
    t_cdf(-t, df)
}

pub fn welch_test(m1: f64, s1: f64, n1: usize, m2: f64, s2: f64, n2: usize, sided: Sided) -> Result<TestResult> {
    if n1 < 2 || n2 < 2 {
        return Err(Error::Contract(format!("each group needs n >= 2 (got {n1}, {n2})")));
    }
    if [m1, s1, m2, s2].iter().any(|v| !v.is_finite()) || s1 < 0.0 || s2 < 0.0 {
        return Err(Error::Contract("means and standard deviations must be finite, spreads non-negative".into()));
    }
    let v1 = s1 * s1 / n1 as f64;
    let v2 = s2 * s2 / n2 as f64;
    if v1 + v2 == 0.0 {
        return Err(Error::DegenerateStatistics("both groups have zero variance".into()));
    }
    let t = (m1 - m2) / (v1 + v2).sqrt();
    let df = (v1 + v2).powi(2) / (v1 * v1 / (n1 - 1) as f64 + v2 * v2 / (n2 - 1) as f64);
    let p = match sided {
        Sided::Greater => t_sf(t, df),
        Sided::Two => two_tail(t, df).min(1.0),
    };
    Ok(TestResult { t, df, p, sided })
}

/// Welch's test on raw per-run scores.
pub fn welch_groups(a: &[f64], b: &[f64], sided: Sided) -> Result<TestResult> {
    let (sa, sb) = (summarize(a)?, summarize(b)?);
    welch_test(sa.mean, sa.std, sa.n, sb.mean, sb.std, sb.n, sided)
}

#[derive(Debug, Clone, Deserialize)]
pub struct StatsInput {
    pub groups: Vec<RunGroup>,
    pub comparisons: Vec<(String, String, Sided)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRow {
    pub a: String,
    pub b: String,
    pub mean_a: f64,
    pub mean_b: f64,
    #[serde(flatten)]
    pub test: TestResult,
}

pub fn run_comparisons(input: &StatsInput) -> Result<Vec<ComparisonRow>> {
    let find = |label: &str| {
        input
            .groups
            .iter()
            .find(|g| g.label == label)
            .ok_or_else(|| Error::Config(format!("comparison names unknown group {label:?}")))
    };
    input
        .comparisons
        .iter()
        .map(|(a, b, sided)| {
            let (ga, gb) = (find(a)?, find(b)?);
            let test = welch_groups(&ga.scores, &gb.scores, *sided)?;
            Ok(ComparisonRow {
                a: a.clone(),
                b: b.clone(),
                mean_a: summarize(&ga.scores)?.mean,
                mean_b: summarize(&gb.scores)?.mean,
                test,
            })
        })
        .collect()
}

/// Aligned plain-text table of comparison rows.
pub fn format_table(rows: &[ComparisonRow]) -> String {
    let wa = rows.iter().map(|r| r.a.len()).max().unwrap_or(1).max(1);
    let wb = rows.iter().map(|r| r.b.len()).max().unwrap_or(1).max(1);
    let mut out = format!("{:<wa$}  {:<wb$}  {:>9}  {:>7}  {:>10}  {:>5}\n", "a", "b", "t", "df", "p", "sided");
    for r in rows {
        let sided = match r.test.sided {
            Sided::Greater => "one",
            Sided::Two => "two",
        };
        out.push_str(&format!(
            "{:<wa$}  {:<wb$}  {:>9.4}  {:>7.3}  {:>10.3e}  {:>5}\n",
            r.a, r.b, r.test.t, r.test.df, r.test.p, sided
        ));
    }
    out
}
