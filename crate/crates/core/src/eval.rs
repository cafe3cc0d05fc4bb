//! Frozen-embedding downstream task and per-group gap metrics.
//!
//! The downstream model is deliberately small: mean-pooled word vectors
//! feeding a logistic regression trained by seeded SGD. The embedding
//! store is read-only throughout, preserving the frozen-embedding causal
//! path from vector space to task. Per-group confusion counts yield the
//! two gap metrics: difference in precision (predictive parity) and
//! difference in recall (equality of odds) between the two tagged
//! groups, with a neutral group tracked but excluded from gaps.
//!
//! Labeled data is UTF-8 TSV: `label<TAB>group<TAB>text`, label 0/1,
//! group `a`/`b`/`neutral`, text pre-tokenized with single spaces.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::store::EmbeddingStore;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {0}: {1}")]
    BadRecord(usize, String),
    #[error("training set contains a single class")]
    SingleClass,
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("{metric} is undefined for group {group} (zero denominator)")]
    UndefinedMetric { metric: &'static str, group: Group },
    #[error("reference group must be a or b, not neutral")]
    NeutralReference,
    #[error("invalid classifier config: {0}")]
    InvalidConfig(String),
    #[error("malformed model file: {0}")]
    BadModel(String),
}

impl EvalError {
    pub fn is_io(&self) -> bool {
        matches!(self, EvalError::Io(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Negative,
    Positive,
}

/// Demographic group tag of an example.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    A,
    B,
    Neutral,
}

impl std::fmt::Display for Group {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Group::A => write!(f, "a"),
            Group::B => write!(f, "b"),
            Group::Neutral => write!(f, "neutral"),
        }
    }
}

impl std::str::FromStr for Group {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "a" => Ok(Group::A),
            "b" => Ok(Group::B),
            "neutral" => Ok(Group::Neutral),
            other => Err(format!("unknown group {other:?}")),
        }
    }
}

impl Group {
    /// The other non-neutral group.
    pub fn other(&self) -> Option<Group> {
        match self {
            Group::A => Some(Group::B),
            Group::B => Some(Group::A),
            Group::Neutral => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledExample {
    pub tokens: Vec<String>,
    pub label: Label,
    pub group: Group,
}

/// Read `label<TAB>group<TAB>text` lines.
pub fn read_labeled_tsv(path: &Path) -> Result<Vec<LabeledExample>, EvalError> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut fields = line.splitn(3, '\t');
        let label = match fields.next() {
            Some("0") => Label::Negative,
            Some("1") => Label::Positive,
            other => {
                return Err(EvalError::BadRecord(
                    i + 1,
                    format!("label must be 0 or 1, got {other:?}"),
                ))
            }
        };
        let group: Group = fields
            .next()
            .ok_or_else(|| EvalError::BadRecord(i + 1, "missing group column".into()))?
            .parse()
            .map_err(|e| EvalError::BadRecord(i + 1, e))?;
        let tokens: Vec<String> = fields
            .next()
            .ok_or_else(|| EvalError::BadRecord(i + 1, "missing text column".into()))?
            .split(' ')
            .filter(|t| !t.is_empty())
            .map(str::to_string)
            .collect();
        if tokens.is_empty() {
            return Err(EvalError::BadRecord(i + 1, "empty text column".into()));
        }
        out.push(LabeledExample {
            tokens,
            label,
            group,
        });
    }
    Ok(out)
}

pub fn write_labeled_tsv(path: &Path, examples: &[LabeledExample]) -> Result<(), EvalError> {
    let mut out = String::new();
    for ex in examples {
        let label = match ex.label {
            Label::Negative => '0',
            Label::Positive => '1',
        };
        out.push(label);
        out.push('\t');
        out.push_str(&ex.group.to_string());
        out.push('\t');
        out.push_str(&ex.tokens.join(" "));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Mean-pooled feature vector; `any_resolved` is false when every token
/// was out of vocabulary and the vector is all zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f32>,
    pub any_resolved: bool,
}

/// Mean of the resolvable token vectors; a flagged zero vector when
/// nothing resolves.
pub fn featurize(store: &EmbeddingStore, tokens: &[String]) -> FeatureVector {
    let mut acc = vec![0.0f64; store.dim()];
    let mut n = 0usize;
    for token in tokens {
        if let Some(v) = store.resolve(token) {
            for (a, &x) in acc.iter_mut().zip(&v) {
                *a += x as f64;
            }
            n += 1;
        }
    }
    if n == 0 {
        return FeatureVector {
            values: vec![0.0; store.dim()],
            any_resolved: false,
        };
    }
    FeatureVector {
        values: acc.into_iter().map(|a| (a / n as f64) as f32).collect(),
        any_resolved: true,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            learning_rate: 0.5,
            epochs: 100,
            l2: 1e-4,
            seed: 13,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(EvalError::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(EvalError::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.l2 < 0.0 {
            return Err(EvalError::InvalidConfig("l2 must be >= 0".into()));
        }
        Ok(())
    }
}

/// Logistic regression over mean-pooled embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    weights: Vec<f64>,
    bias: f64,
}

fn sigmoid(x: f64) -> f64 {
    let x = x.clamp(-30.0, 30.0);
    1.0 / (1.0 + (-x).exp())
}

impl Classifier {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> (&[f64], f64) {
        (&self.weights, self.bias)
    }

    pub fn predict_proba(&self, features: &FeatureVector) -> f64 {
        let z: f64 = self
            .weights
            .iter()
            .zip(&features.values)
            .map(|(w, &x)| w * x as f64)
            .sum::<f64>()
            + self.bias;
        sigmoid(z)
    }

    /// Decision at the fixed 0.5 threshold.
    pub fn predict(&self, features: &FeatureVector) -> Label {
        if self.predict_proba(features) >= 0.5 {
            Label::Positive
        } else {
            Label::Negative
        }
    }

    /// Plain-text model file: dimension, bias, then one weight per line.
    /// Floats round-trip exactly.
    pub fn save(&self, path: &Path) -> Result<(), EvalError> {
        let mut out = format!("dim {}\nbias {}\n", self.weights.len(), self.bias);
        for w in &self.weights {
            out.push_str(&format!("{w}\n"));
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let text = fs::read_to_string(path)?;
        let mut lines = text.lines();
        let dim: usize = lines
            .next()
            .and_then(|l| l.strip_prefix("dim "))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| EvalError::BadModel("missing dim line".into()))?;
        let bias: f64 = lines
            .next()
            .and_then(|l| l.strip_prefix("bias "))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| EvalError::BadModel("missing bias line".into()))?;
        let weights: Vec<f64> = lines
            .map(|l| l.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| EvalError::BadModel(e.to_string()))?;
        if weights.len() != dim {
            return Err(EvalError::BadModel(format!(
                "expected {dim} weights, found {}",
                weights.len()
            )));
        }
        Ok(Classifier { weights, bias })
    }
}

/// Train a logistic regression on frozen features by seeded SGD. The
/// store is only read; features are extracted once up front.
pub fn train_classifier(
    store: &EmbeddingStore,
    train_set: &[LabeledExample],
    config: &ClassifierConfig,
) -> Result<Classifier, EvalError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(EvalError::EmptyTrainingSet);
    }
    let has_pos = train_set.iter().any(|e| e.label == Label::Positive);
    let has_neg = train_set.iter().any(|e| e.label == Label::Negative);
    if !has_pos || !has_neg {
        return Err(EvalError::SingleClass);
    }
    let features: Vec<FeatureVector> = train_set
        .iter()
        .map(|e| featurize(store, &e.tokens))
        .collect();
    let targets: Vec<f64> = train_set
        .iter()
        .map(|e| if e.label == Label::Positive { 1.0 } else { 0.0 })
        .collect();
    let dim = store.dim();
    let mut weights = vec![0.0f64; dim];
    let mut bias = 0.0f64;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let x = &features[i].values;
            let z: f64 = weights
                .iter()
                .zip(x)
                .map(|(w, &v)| w * v as f64)
                .sum::<f64>()
                + bias;
            let err = sigmoid(z) - targets[i];
            for (w, &v) in weights.iter_mut().zip(x) {
                *w -= config.learning_rate * (err * v as f64 + config.l2 * *w);
            }
            bias -= config.learning_rate * err;
        }
    }
    Ok(Classifier { weights, bias })
}

/// Confusion counts for one group.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub true_pos: u64,
    pub false_pos: u64,
    pub false_neg: u64,
    pub true_neg: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.false_neg + self.true_neg
    }

    pub fn precision(&self) -> Option<f64> {
        let denom = self.true_pos + self.false_pos;
        (denom > 0).then(|| self.true_pos as f64 / denom as f64)
    }

    pub fn recall(&self) -> Option<f64> {
        let denom = self.true_pos + self.false_neg;
        (denom > 0).then(|| self.true_pos as f64 / denom as f64)
    }
}

/// Per-group confusion counts at the 0.5 threshold.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GroupedConfusion {
    pub group_a: ConfusionCounts,
    pub group_b: ConfusionCounts,
    pub neutral: ConfusionCounts,
}

impl GroupedConfusion {
    pub fn group(&self, group: Group) -> &ConfusionCounts {
        match group {
            Group::A => &self.group_a,
            Group::B => &self.group_b,
            Group::Neutral => &self.neutral,
        }
    }

    fn totals(&self) -> ConfusionCounts {
        ConfusionCounts {
            true_pos: self.group_a.true_pos + self.group_b.true_pos + self.neutral.true_pos,
            false_pos: self.group_a.false_pos + self.group_b.false_pos + self.neutral.false_pos,
            false_neg: self.group_a.false_neg + self.group_b.false_neg + self.neutral.false_neg,
            true_neg: self.group_a.true_neg + self.group_b.true_neg + self.neutral.true_neg,
        }
    }

    /// Accuracy over every group, neutral included.
    pub fn accuracy(&self) -> f64 {
        let t = self.totals();
        let total = t.total();
        if total == 0 {
            return 0.0;
        }
        (t.true_pos + t.true_neg) as f64 / total as f64
    }

    /// F1 of the positive class over every group; 0 when undefined.
    pub fn f1(&self) -> f64 {
        let t = self.totals();
        let (p, r) = match (t.precision(), t.recall()) {
            (Some(p), Some(r)) => (p, r),
            _ => return 0.0,
        };
        if p + r == 0.0 {
            return 0.0;
        }
        2.0 * p * r / (p + r)
    }
}

/// Classify the test set and accumulate confusion counts per group tag.
pub fn grouped_confusion(
    classifier: &Classifier,
    store: &EmbeddingStore,
    test_set: &[LabeledExample],
) -> GroupedConfusion {
    let mut out = GroupedConfusion::default();
    for ex in test_set {
        let predicted = classifier.predict(&featurize(store, &ex.tokens));
        let counts = match ex.group {
            Group::A => &mut out.group_a,
            Group::B => &mut out.group_b,
            Group::Neutral => &mut out.neutral,
        };
        match (predicted, ex.label) {
            (Label::Positive, Label::Positive) => counts.true_pos += 1,
            (Label::Positive, Label::Negative) => counts.false_pos += 1,
            (Label::Negative, Label::Positive) => counts.false_neg += 1,
            (Label::Negative, Label::Negative) => counts.true_neg += 1,
        }
    }
    out
}

fn group_metric(
    conf: &GroupedConfusion,
    group: Group,
    metric: &'static str,
) -> Result<f64, EvalError> {
    let counts = conf.group(group);
    let value = match metric {
        "precision" => counts.precision(),
        _ => counts.recall(),
    };
    value.ok_or(EvalError::UndefinedMetric { metric, group })
}

/// Precision of the reference group minus precision of the other group.
/// Undefined precision in either group is an error, never a fabricated
/// zero.
pub fn precision_gap(conf: &GroupedConfusion, reference: Group) -> Result<f64, EvalError> {
    let other = reference.other().ok_or(EvalError::NeutralReference)?;
    Ok(group_metric(conf, reference, "precision")? - group_metric(conf, other, "precision")?)
}

/// Recall of the reference group minus recall of the other group.
pub fn recall_gap(conf: &GroupedConfusion, reference: Group) -> Result<f64, EvalError> {
    let other = reference.other().ok_or(EvalError::NeutralReference)?;
    Ok(group_metric(conf, reference, "recall")? - group_metric(conf, other, "recall")?)
}

/// Both gaps plus the per-group rates they were computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct GapMetrics {
    pub reference: Group,
    pub precision_gap: f64,
    pub recall_gap: f64,
    pub precision_a: f64,
    pub precision_b: f64,
    pub recall_a: f64,
    pub recall_b: f64,
}

pub fn compute_gaps(conf: &GroupedConfusion, reference: Group) -> Result<GapMetrics, EvalError> {
    Ok(GapMetrics {
        reference,
        precision_gap: precision_gap(conf, reference)?,
        recall_gap: recall_gap(conf, reference)?,
        precision_a: group_metric(conf, Group::A, "precision")?,
        precision_b: group_metric(conf, Group::B, "precision")?,
        recall_a: group_metric(conf, Group::A, "recall")?,
        recall_b: group_metric(conf, Group::B, "recall")?,
    })
}
