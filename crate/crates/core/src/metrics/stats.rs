//! Descriptive statistics and two-sample t-tests.
//!
//! Two-tailed p-values come from the Student t survival function,
//! expressed through the regularized incomplete beta function and
//! evaluated with a Lentz continued fraction.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("descriptive statistics need at least one value")]
    Empty,
    #[error("{variant:?} t-test needs at least two values per sample (got {left} and {right})")]
    TooFewSamples {
        variant: TTestVariant,
        left: usize,
        right: usize,
    },
    #[error("paired t-test needs samples of equal length (got {left} and {right})")]
    UnequalPairs { left: usize, right: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TTestVariant {
    /// Student's t-test with pooled variance.
    #[default]
    Pooled,
    Welch,
    Paired,
}

impl TTestVariant {
    pub fn parse(s: &str) -> Option<TTestVariant> {
        match s {
            "pooled" | "student" => Some(TTestVariant::Pooled),
            "welch" => Some(TTestVariant::Welch),
            "paired" => Some(TTestVariant::Paired),
            _ => None,
        }
    }
}

pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub variant: TTestVariant,
    pub t: f64,
    pub degrees_of_freedom: f64,
    pub p_two_tailed: f64,
    pub significant: bool,
    /// Zero standard error with differing means: t is infinite and p is 0.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescriptiveStats {
    pub n: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); 0 for a single value.
    pub sd: f64,
}

// Lanczos approximation, g = 7, n = 9.
const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).abs().ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    incomplete_beta_split(x, 1.0 - x, a, b)
}

// `y` is `1 - x`, passed separately so callers can avoid cancellation.
fn incomplete_beta_split(x: f64, y: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if y <= 0.0 {
        return 1.0;
    }
    let ln_front = a * x.ln() + b * y.ln() - ln_beta(a, b);
    if x < (a + 1.0) / (a + b + 2.0) {
        (ln_front.exp() * beta_continued_fraction(x, a, b) / a).clamp(0.0, 1.0)
    } else {
        (1.0 - ln_front.exp() * beta_continued_fraction(y, b, a) / b).clamp(0.0, 1.0)
    }
}

fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    const MAX_ITER: usize = 10_000;
    const EPS: f64 = 1e-16;
    const TINY: f64 = 1e-300;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// `P(|T| >= |t|)` for Student's t with `df` degrees of freedom.
pub fn student_t_two_tailed(t: f64, df: f64) -> f64 {
    assert!(df > 0.0, "degrees of freedom must be positive");
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let t2 = t * t;
    let denom = df + t2;
    incomplete_beta_split(df / denom, t2 / denom, df / 2.0, 0.5)
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    (mean, if xs.len() > 1 { ss / (n - 1.0) } else { 0.0 })
}

pub fn t_test_two_sample(
    xs: &[f64],
    ys: &[f64],
    variant: TTestVariant,
) -> Result<TTestResult, StatsError> {
    if variant == TTestVariant::Paired && xs.len() != ys.len() {
        return Err(StatsError::UnequalPairs {
            left: xs.len(),
            right: ys.len(),
        });
    }
    if xs.len() < 2 || ys.len() < 2 {
        return Err(StatsError::TooFewSamples {
            variant,
            left: xs.len(),
            right: ys.len(),
        });
    }

    let (diff, se, df) = match variant {
        TTestVariant::Pooled => {
            let (m1, v1) = mean_var(xs);
            let (m2, v2) = mean_var(ys);
            let (n1, n2) = (xs.len() as f64, ys.len() as f64);
            let df = n1 + n2 - 2.0;
            let pooled = ((n1 - 1.0) * v1 + (n2 - 1.0) * v2) / df;
            (m1 - m2, (pooled * (1.0 / n1 + 1.0 / n2)).sqrt(), df)
        }
        TTestVariant::Welch => {
            let (m1, v1) = mean_var(xs);
            let (m2, v2) = mean_var(ys);
            let (n1, n2) = (xs.len() as f64, ys.len() as f64);
            let (a, b) = (v1 / n1, v2 / n2);
            let se2 = a + b;
            let df = if se2 == 0.0 {
                n1 + n2 - 2.0
            } else {
                se2 * se2 / (a * a / (n1 - 1.0) + b * b / (n2 - 1.0))
            };
            (m1 - m2, se2.sqrt(), df)
        }
        TTestVariant::Paired => {
            let diffs: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| x - y).collect();
            let (md, vd) = mean_var(&diffs);
            let n = diffs.len() as f64;
            (md, (vd / n).sqrt(), n - 1.0)
        }
    };

    if se == 0.0 {
        let degenerate = diff != 0.0;
        let t = if degenerate {
            f64::INFINITY.copysign(diff)
        } else {
            0.0
        };
        let p = if degenerate { 0.0 } else { 1.0 };
        return Ok(TTestResult {
            variant,
            t,
            degrees_of_freedom: df,
            p_two_tailed: p,
            significant: p <= SIGNIFICANCE_LEVEL,
            degenerate,
        });
    }

    let t = diff / se;
    let p = student_t_two_tailed(t, df);
    Ok(TTestResult {
        variant,
        t,
        degrees_of_freedom: df,
        p_two_tailed: p,
        significant: p <= SIGNIFICANCE_LEVEL,
        degenerate: false,
    })
}

pub fn descriptive_stats(values: &[f64]) -> Result<DescriptiveStats, StatsError> {
    if values.is_empty() {
        return Err(StatsError::Empty);
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if min == max {
        return Ok(DescriptiveStats {
            n: values.len(),
            min,
            max,
            mean: min,
            sd: 0.0,
        });
    }
    let (mean, var) = mean_var(values);
    Ok(DescriptiveStats {
        n: values.len(),
        min,
        max,
        mean: mean.clamp(min, max),
        sd: var.sqrt(),
    })
}
