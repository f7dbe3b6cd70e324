//! Population statistics over probe runs: Gaussian density fits, pooled
//! Student t-tests and Cohen's d, per strength.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifest::Group;
use crate::probe::ProbeRecord;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("group {0} has no records in this run")]
    EmptyGroup(Group),
    #[error("records do not share one strength schedule")]
    MixedSchedules,
}

/// Floor applied to fitted standard deviations.
pub const MIN_SIGMA: f64 = 1e-9;

const BETA_CF_TOL: f64 = 1e-12;
const BETA_CF_MAX_ITER: usize = 300;

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased (N-1) sample variance.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

fn require(xs: &[f64], needed: usize) -> Result<(), StatsError> {
    if xs.len() < needed {
        Err(StatsError::TooFewSamples { needed, got: xs.len() })
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityProfile {
    pub mu: f64,
    pub sigma: f64,
    #[serde(rename = "n")]
    pub n_samples: usize,
}

pub fn fit_density(samples: &[f64]) -> Result<DensityProfile, StatsError> {
    require(samples, 2)?;
    Ok(DensityProfile {
        mu: mean(samples),
        sigma: sample_variance(samples).sqrt().max(MIN_SIGMA),
        n_samples: samples.len(),
    })
}

/// Gaussian log-density of `profile` at each point of `xs`.
pub fn log_density_curve(profile: &DensityProfile, xs: &[f64]) -> Vec<f64> {
    let (mu, sigma) = (profile.mu, profile.sigma);
    let log_norm = -(sigma * (2.0 * PI).sqrt()).ln();
    xs.iter()
        .map(|&x| log_norm - (x - mu).powi(2) / (2.0 * sigma * sigma))
        .collect()
}

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7, nine terms).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
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
    if x < 0.5 {
        // Reflection.
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (k, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + k as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=BETA_CF_MAX_ITER {
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
        if (delta - 1.0).abs() < BETA_CF_TOL {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Two-sided p-value of Student's t with `df` degrees of freedom.
pub fn student_t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    regularized_incomplete_beta(df / 2.0, 0.5, x).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub df: usize,
    pub p: f64,
    /// Set when the pooled variance is zero.
    pub degenerate: bool,
}

fn pooled_sd(x: &[f64], y: &[f64]) -> f64 {
    let (n1, n2) = (x.len() as f64, y.len() as f64);
    (((n1 - 1.0) * sample_variance(x) + (n2 - 1.0) * sample_variance(y)) / (n1 + n2 - 2.0)).sqrt()
}

/// Independent-samples pooled-variance Student t-test, two-sided.
///
/// With zero pooled variance the test is flagged degenerate: equal means give
/// `t = 0, p = 1`; different means give `t = ±inf, p = 0`.
pub fn t_test_independent(x: &[f64], y: &[f64]) -> Result<TTest, StatsError> {
    require(x, 2)?;
    require(y, 2)?;
    let df = x.len() + y.len() - 2;
    let diff = mean(x) - mean(y);
    let sp = pooled_sd(x, y);
    if sp == 0.0 {
        let (t, p) = if diff == 0.0 { (0.0, 1.0) } else { (diff.signum() * f64::INFINITY, 0.0) };
        return Ok(TTest { t, df, p, degenerate: true });
    }
    let se = sp * (1.0 / x.len() as f64 + 1.0 / y.len() as f64).sqrt();
    let t = diff / se;
    Ok(TTest { t, df, p: student_t_two_sided_p(t, df as f64), degenerate: false })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectSize {
    pub d: f64,
    pub degenerate: bool,
}

/// Cohen's d with the pooled (N-1) standard deviation. Zero pooled variance
/// yields `d = 0`, flagged degenerate.
pub fn cohens_d(x: &[f64], y: &[f64]) -> Result<EffectSize, StatsError> {
    require(x, 2)?;
    require(y, 2)?;
    let sp = pooled_sd(x, y);
    if sp == 0.0 {
        return Ok(EffectSize { d: 0.0, degenerate: true });
    }
    Ok(EffectSize { d: (mean(x) - mean(y)) / sp, degenerate: false })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupComparison {
    pub strength: f64,
    pub group_a: DensityProfile,
    pub group_b: DensityProfile,
    pub t: f64,
    pub df: usize,
    pub p: f64,
    pub d: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degenerate: bool,
}

/// Values of `distance_vector[i]` for every record of `group`, per strength.
pub fn group_columns(run: &[ProbeRecord], group: Group) -> Result<Vec<Vec<f64>>, StatsError> {
    let members: Vec<&ProbeRecord> = run.iter().filter(|r| r.group == group).collect();
    let first = members.first().ok_or(StatsError::EmptyGroup(group))?;
    let m = first.strengths.len();
    if members.iter().any(|r| r.strengths != first.strengths) {
        return Err(StatsError::MixedSchedules);
    }
    Ok((0..m).map(|i| members.iter().map(|r| r.distance_vector[i]).collect()).collect())
}

/// Per-strength t-test and Cohen's d between two groups of a run.
pub fn compare_groups(run: &[ProbeRecord], group_a: Group, group_b: Group) -> Result<Vec<GroupComparison>, StatsError> {
    let a = group_columns(run, group_a)?;
    let b = group_columns(run, group_b)?;
    let strengths = &run.iter().find(|r| r.group == group_a).expect("nonempty").strengths;
    if run.iter().any(|r| &r.strengths != strengths) {
        return Err(StatsError::MixedSchedules);
    }
    strengths
        .iter()
        .zip(a.iter().zip(&b))
        .map(|(&strength, (xa, xb))| {
            let test = t_test_independent(xa, xb)?;
            let effect = cohens_d(xa, xb)?;
            Ok(GroupComparison {
                strength,
                group_a: fit_density(xa)?,
                group_b: fit_density(xb)?,
                t: test.t,
                df: test.df,
                p: test.p,
                d: effect.d,
                degenerate: test.degenerate || effect.degenerate,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub schedule_label: String,
    pub group_a: Group,
    pub group_b: Group,
    pub per_strength: Vec<GroupComparison>,
}

impl StatsReport {
    pub fn build(schedule_label: &str, run: &[ProbeRecord], group_a: Group, group_b: Group) -> Result<Self, StatsError> {
        Ok(Self {
            schedule_label: schedule_label.to_owned(),
            group_a,
            group_b,
            per_strength: compare_groups(run, group_a, group_b)?,
        })
    }

    pub fn density_csv(&self) -> String {
        density_csv(&self.per_strength, self.group_a, self.group_b)
    }
}

pub const PLOT_GRID_POINTS: usize = 200;

/// `PLOT_GRID_POINTS` evenly spaced points spanning [0, 1] inclusive.
pub fn plot_grid() -> Vec<f64> {
    (0..PLOT_GRID_POINTS)
        .map(|k| k as f64 / (PLOT_GRID_POINTS - 1) as f64)
        .collect()
}

/// CSV of fitted log-densities: `strength,group,x,log_density`.
pub fn density_csv(comparisons: &[GroupComparison], group_a: Group, group_b: Group) -> String {
    let grid = plot_grid();
    let mut out = String::from("strength,group,x,log_density\n");
    for c in comparisons {
        for (group, profile) in [(group_a, &c.group_a), (group_b, &c.group_b)] {
            for (x, ld) in grid.iter().zip(log_density_curve(profile, &grid)) {
                writeln!(out, "{},{},{},{}", c.strength, group, x, ld).expect("write to string");
            }
        }
    }
    out
}
