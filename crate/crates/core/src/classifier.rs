//! Logistic regression on per-strength distance vectors, ROC operating
//! points, and repeated stratified train/test evaluation.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifest::Group;
use crate::probe::ProbeRecord;
use crate::rng::mix_words;

pub const MODEL_VERSION: u32 = 1;
const MIN_FEATURE_STD: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("training data has a single class")]
    SingleClass,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("no scores for the {0} group")]
    EmptyGroup(&'static str),
    #[error("too few examples: {0}")]
    TooFewExamples(String),
    #[error("model was trained on schedule {model:?} but the run uses {run:?}")]
    ScheduleMismatch { model: String, run: String },
    #[error("cannot parse {what}: {reason}")]
    Parse { what: &'static str, reason: String },
    #[error("i/o error on {path:?}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub l2: f64,
    pub learning_rate: f64,
    pub max_iter: usize,
    pub grad_tol: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { l2: 1e-4, learning_rate: 0.1, max_iter: 5000, grad_tol: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipModel {
    pub version: u32,
    pub schedule_label: String,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub feature_means: Vec<f64>,
    pub feature_stds: Vec<f64>,
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
#[inline]
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_dims(vectors: &[Vec<f64>]) -> Result<usize, ClassifierError> {
    let m = vectors.first().map_or(0, Vec::len);
    if let Some(v) = vectors.iter().find(|v| v.len() != m) {
        return Err(ClassifierError::DimensionMismatch { expected: m, got: v.len() });
    }
    Ok(m)
}

impl MembershipModel {
    pub fn dims(&self) -> usize {
        self.weights.len()
    }

    pub fn standardize(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(self.feature_means.iter().zip(&self.feature_stds))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }

    /// Linear score before the sigmoid.
    pub fn decision(&self, v: &[f64]) -> Result<f64, ClassifierError> {
        if v.len() != self.dims() {
            return Err(ClassifierError::DimensionMismatch { expected: self.dims(), got: v.len() });
        }
        Ok(dot(&self.weights, &self.standardize(v)) + self.bias)
    }

    /// Membership likelihood in (0, 1); higher means more likely in-training.
    pub fn score(&self, v: &[f64]) -> Result<f64, ClassifierError> {
        Ok(sigmoid(self.decision(v)?))
    }

    pub fn check_schedule(&self, schedule_label: &str, dims: usize) -> Result<(), ClassifierError> {
        if self.schedule_label != schedule_label {
            return Err(ClassifierError::ScheduleMismatch {
                model: self.schedule_label.clone(),
                run: schedule_label.to_owned(),
            });
        }
        if dims != self.dims() {
            return Err(ClassifierError::DimensionMismatch { expected: self.dims(), got: dims });
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), ClassifierError> {
        let mut text = serde_json::to_string_pretty(self).expect("model serializes");
        text.push('\n');
        fs::write(path, text).map_err(|source| ClassifierError::Io { path: path.to_path_buf(), source })
    }

    pub fn load(path: &Path) -> Result<Self, ClassifierError> {
        let text = fs::read_to_string(path).map_err(|source| ClassifierError::Io { path: path.to_path_buf(), source })?;
        let model: Self =
            serde_json::from_str(&text).map_err(|e| ClassifierError::Parse { what: "model", reason: e.to_string() })?;
        let m = model.weights.len();
        if model.version != MODEL_VERSION
            || model.feature_means.len() != m
            || model.feature_stds.len() != m
            || model.feature_stds.iter().any(|&s| !(s > 0.0))
        {
            return Err(ClassifierError::Parse { what: "model", reason: "inconsistent model fields".into() });
        }
        Ok(model)
    }
}

/// Mean regularized negative log-likelihood on already standardized features:
/// `(1/N) Σ [softplus(z) - y z] + (λ/2) |w|²`.
pub fn regularized_loss(features: &[Vec<f64>], labels: &[bool], weights: &[f64], bias: f64, l2: f64) -> f64 {
    let nll: f64 = features
        .iter()
        .zip(labels)
        .map(|(x, &y)| {
            let z = dot(weights, x) + bias;
            softplus(z) - if y { z } else { 0.0 }
        })
        .sum::<f64>()
        / features.len() as f64;
    nll + 0.5 * l2 * dot(weights, weights)
}

fn feature_stats(vectors: &[Vec<f64>], m: usize) -> (Vec<f64>, Vec<f64>) {
    let n = vectors.len() as f64;
    let means: Vec<f64> = (0..m).map(|k| vectors.iter().map(|v| v[k]).sum::<f64>() / n).collect();
    let stds = (0..m)
        .map(|k| {
            let var = vectors.iter().map(|v| (v[k] - means[k]).powi(2)).sum::<f64>() / (n - 1.0);
            var.sqrt().max(MIN_FEATURE_STD)
        })
        .collect();
    (means, stds)
}

/// Fits standardized, L2-regularized logistic regression by full-batch
/// gradient descent from zero weights. `labels[k]` is true for members.
pub fn fit(
    vectors: &[Vec<f64>],
    labels: &[bool],
    schedule_label: &str,
    cfg: &FitConfig,
) -> Result<MembershipModel, ClassifierError> {
    assert_eq!(vectors.len(), labels.len(), "one label per vector");
    let m = check_dims(vectors)?;
    let positives = labels.iter().filter(|&&y| y).count();
    if positives < 2 || labels.len() - positives < 2 {
        return Err(ClassifierError::SingleClass);
    }
    let (feature_means, feature_stds) = feature_stats(vectors, m);
    let mut model = MembershipModel {
        version: MODEL_VERSION,
        schedule_label: schedule_label.to_owned(),
        weights: vec![0.0; m],
        bias: 0.0,
        feature_means,
        feature_stds,
    };
    let xs: Vec<Vec<f64>> = vectors.iter().map(|v| model.standardize(v)).collect();
    let n = xs.len() as f64;
    let mut grad_w = vec![0.0; m];
    for _ in 0..cfg.max_iter {
        grad_w.iter_mut().for_each(|g| *g = 0.0);
        let mut grad_b = 0.0;
        for (x, &y) in xs.iter().zip(labels) {
            let residual = sigmoid(dot(&model.weights, x) + model.bias) - if y { 1.0 } else { 0.0 };
            for (g, xi) in grad_w.iter_mut().zip(x) {
                *g += residual * xi;
            }
            grad_b += residual;
        }
        for (g, w) in grad_w.iter_mut().zip(&model.weights) {
            *g = *g / n + cfg.l2 * w;
        }
        grad_b /= n;
        let norm = (dot(&grad_w, &grad_w) + grad_b * grad_b).sqrt();
        if norm < cfg.grad_tol {
            break;
        }
        for (w, g) in model.weights.iter_mut().zip(&grad_w) {
            *w -= cfg.learning_rate * g;
        }
        model.bias -= cfg.learning_rate * grad_b;
    }
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocMetrics {
    pub eer: f64,
    pub accuracy_at_eer: f64,
    pub tpr_at_fpr: f64,
}

/// (FPR, TPR) at every threshold `score >= τ` for τ in
/// `-inf, s_1 < ... < s_k, +inf` over the distinct scores, ordered by τ.
fn roc_points(scores_in: &[f64], scores_out: &[f64]) -> Vec<(f64, f64)> {
    let sorted = |xs: &[f64]| {
        let mut v = xs.to_vec();
        v.sort_by(f64::total_cmp);
        v
    };
    let (ins, outs) = (sorted(scores_in), sorted(scores_out));
    let mut thresholds: Vec<f64> = ins.iter().chain(&outs).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();

    let (n_in, n_out) = (ins.len() as f64, outs.len() as f64);
    let mut points = Vec::with_capacity(thresholds.len() + 2);
    points.push((1.0, 1.0));
    let (mut below_in, mut below_out) = (0usize, 0usize);
    for &t in &thresholds {
        while below_in < ins.len() && ins[below_in] < t {
            below_in += 1;
        }
        while below_out < outs.len() && outs[below_out] < t {
            below_out += 1;
        }
        points.push(((outs.len() - below_out) as f64 / n_out, (ins.len() - below_in) as f64 / n_in));
    }
    points.push((0.0, 0.0));
    points
}

/// Equal error rate from ROC points ordered by increasing threshold: the
/// first crossing of FPR and FNR, linearly interpolated between neighbours.
pub fn eer_from_points(points: &[(f64, f64)]) -> f64 {
    let mut prev: Option<(f64, f64)> = None;
    for &(fpr, tpr) in points {
        let diff = fpr - (1.0 - tpr);
        if diff <= 0.0 {
            return match prev {
                Some((pf, pd)) if diff < 0.0 => {
                    let t = pd / (pd - diff);
                    pf + t * (fpr - pf)
                }
                _ => fpr,
            };
        }
        prev = Some((fpr, diff));
    }
    unreachable!("the +inf threshold always has FPR 0 and FNR 1")
}

pub fn tpr_at_fpr_from_points(points: &[(f64, f64)], fpr_target: f64) -> f64 {
    points
        .iter()
        .filter(|(fpr, _)| *fpr <= fpr_target)
        .map(|&(_, tpr)| tpr)
        .fold(0.0, f64::max)
}

pub fn roc_metrics(scores_in: &[f64], scores_out: &[f64], fpr_target: f64) -> Result<RocMetrics, ClassifierError> {
    if scores_in.is_empty() {
        return Err(ClassifierError::EmptyGroup("in-training"));
    }
    if scores_out.is_empty() {
        return Err(ClassifierError::EmptyGroup("out-of-training"));
    }
    let points = roc_points(scores_in, scores_out);
    let eer = eer_from_points(&points);
    Ok(RocMetrics { eer, accuracy_at_eer: 1.0 - eer, tpr_at_fpr: tpr_at_fpr_from_points(&points, fpr_target) })
}

/// Area under the ROC curve (Mann-Whitney, ties count one half).
pub fn auc(scores_in: &[f64], scores_out: &[f64]) -> f64 {
    let mut wins = 0.0;
    for &a in scores_in {
        for &b in scores_out {
            if a > b {
                wins += 1.0;
            } else if a == b {
                wins += 0.5;
            }
        }
    }
    wins / (scores_in.len() * scores_out.len()) as f64
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub n_splits: usize,
    pub train_fraction: f64,
    pub fpr_target: f64,
    pub rng_seed: u64,
    pub fit: FitConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { n_splits: 100, train_fraction: 0.8, fpr_target: 0.01, rng_seed: 0, fit: FitConfig::default() }
    }
}

pub const VARIANCE_CONVENTION: &str = "population variance of per-split values in percent (0-100 scale)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub n_splits: usize,
    pub train_fraction: f64,
    /// Mean over splits, as a fraction in [0, 1].
    pub accuracy_at_eer_mean: f64,
    /// Variance over splits, in squared percentage points.
    pub accuracy_at_eer_var: f64,
    pub tpr_at_fpr_mean: f64,
    pub tpr_at_fpr_var: f64,
    pub fpr_target: f64,
    pub variance_convention: String,
}

/// Class-stratified split: returns (train, test) index lists.
fn stratified_split(labels: &[bool], train_fraction: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in [true, false] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&k| labels[k] == class).collect();
        idx.shuffle(rng);
        let n_train = ((idx.len() as f64 * train_fraction).round() as usize).clamp(2, idx.len() - 1);
        train.extend_from_slice(&idx[..n_train]);
        test.extend_from_slice(&idx[n_train..]);
    }
    (train, test)
}

fn mean_and_percent_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (100.0 * (v - mean)).powi(2)).sum::<f64>() / n;
    (mean, var)
}

/// Repeated stratified train/test evaluation. Split `k` draws from an RNG
/// seeded by `(rng_seed, k)`, so the summary is reproducible and independent
/// of evaluation order.
pub fn evaluate_splits(
    vectors: &[Vec<f64>],
    labels: &[bool],
    schedule_label: &str,
    cfg: &EvalConfig,
) -> Result<EvalSummary, ClassifierError> {
    assert_eq!(vectors.len(), labels.len(), "one label per vector");
    check_dims(vectors)?;
    let positives = labels.iter().filter(|&&y| y).count();
    let negatives = labels.len() - positives;
    // Two to train on and one to test, per class.
    if positives < 3 || negatives < 3 {
        return Err(ClassifierError::TooFewExamples(format!(
            "need at least 3 examples per class, got {positives} in / {negatives} out"
        )));
    }
    if cfg.n_splits == 0 || !(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0) {
        return Err(ClassifierError::TooFewExamples("n_splits must be >= 1 and train_fraction in (0,1)".into()));
    }

    let per_split: Vec<RocMetrics> = (0..cfg.n_splits)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_words(&[cfg.rng_seed, k as u64]));
            let (train, test) = stratified_split(labels, cfg.train_fraction, &mut rng);
            let tv: Vec<Vec<f64>> = train.iter().map(|&i| vectors[i].clone()).collect();
            let tl: Vec<bool> = train.iter().map(|&i| labels[i]).collect();
            let model = fit(&tv, &tl, schedule_label, &cfg.fit)?;
            let (mut s_in, mut s_out) = (Vec::new(), Vec::new());
            for &i in &test {
                let s = model.score(&vectors[i])?;
                if labels[i] {
                    s_in.push(s);
                } else {
                    s_out.push(s);
                }
            }
            roc_metrics(&s_in, &s_out, cfg.fpr_target)
        })
        .collect::<Result<_, _>>()?;

    let acc: Vec<f64> = per_split.iter().map(|r| r.accuracy_at_eer).collect();
    let tpr: Vec<f64> = per_split.iter().map(|r| r.tpr_at_fpr).collect();
    let (accuracy_at_eer_mean, accuracy_at_eer_var) = mean_and_percent_var(&acc);
    let (tpr_at_fpr_mean, tpr_at_fpr_var) = mean_and_percent_var(&tpr);
    Ok(EvalSummary {
        n_splits: cfg.n_splits,
        train_fraction: cfg.train_fraction,
        accuracy_at_eer_mean,
        accuracy_at_eer_var,
        tpr_at_fpr_mean,
        tpr_at_fpr_var,
        fpr_target: cfg.fpr_target,
        variance_convention: VARIANCE_CONVENTION.to_owned(),
    })
}

/// Which manifest groups count as members (`true`) or non-members (`false`).
/// Groups absent from the map are ignored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap(pub BTreeMap<Group, bool>);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Membership {
    In,
    Out,
}

impl Default for LabelMap {
    /// Both in-training conditions are members; both out-of-training
    /// conditions are not.
    fn default() -> Self {
        LabelMap(Group::ALL.into_iter().map(|g| (g, g.default_membership())).collect())
    }
}

impl LabelMap {
    pub fn label(&self, group: Group) -> Option<bool> {
        self.0.get(&group).copied()
    }

    /// Parses `{"<group>": "in" | "out", ...}`.
    pub fn from_json(text: &str) -> Result<Self, ClassifierError> {
        let raw: BTreeMap<Group, Membership> = serde_json::from_str(text)
            .map_err(|e| ClassifierError::Parse { what: "label map", reason: e.to_string() })?;
        Ok(LabelMap(raw.into_iter().map(|(g, m)| (g, m == Membership::In)).collect()))
    }

    pub fn to_json(&self) -> String {
        let raw: BTreeMap<Group, Membership> = self
            .0
            .iter()
            .map(|(&g, &is_in)| (g, if is_in { Membership::In } else { Membership::Out }))
            .collect();
        serde_json::to_string_pretty(&raw).expect("label map serializes")
    }

    /// Distance vectors and labels for every record whose group is mapped.
    pub fn dataset(&self, records: &[ProbeRecord]) -> (Vec<Vec<f64>>, Vec<bool>) {
        records
            .iter()
            .filter_map(|r| self.label(r.group).map(|y| (r.distance_vector.clone(), y)))
            .unzip()
    }
}
