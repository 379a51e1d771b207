//! Classification metrics on ordinal class indices.

use serde::{Deserialize, Serialize};

use super::EvalError;

/// Three-way fluency class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FluencyLabel {
    Low = 0,
    Medium = 1,
    High = 2,
}

impl FluencyLabel {
    pub const ALL: [FluencyLabel; 3] = [FluencyLabel::Low, FluencyLabel::Medium, FluencyLabel::High];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Parses a 0-10 score or a class name (`Low`, `Medium`, `Intermediate`, `High`, with
    /// an optional `_fluency` suffix, case-insensitive).
    pub fn parse(raw: &str) -> Result<Self, EvalError> {
        let t = raw.trim();
        if let Ok(score) = t.parse::<i64>() {
            return bucket_score(score);
        }
        let lower = t.to_ascii_lowercase();
        match lower.strip_suffix("_fluency").unwrap_or(&lower) {
            "low" => Ok(FluencyLabel::Low),
            "medium" | "intermediate" => Ok(FluencyLabel::Medium),
            "high" => Ok(FluencyLabel::High),
            _ => Err(EvalError::BadLabel(raw.to_string())),
        }
    }
}

/// Buckets a 0-10 rating: 0-5 Low, 6-7 Medium, 8-10 High.
pub fn bucket_score(score: i64) -> Result<FluencyLabel, EvalError> {
    match score {
        0..=5 => Ok(FluencyLabel::Low),
        6 | 7 => Ok(FluencyLabel::Medium),
        8..=10 => Ok(FluencyLabel::High),
        _ => Err(EvalError::OutOfRange(score)),
    }
}

fn check_lengths(preds: &[usize], labels: &[usize]) -> Result<(), EvalError> {
    if preds.len() != labels.len() {
        return Err(EvalError::LengthMismatch { preds: preds.len(), labels: labels.len() });
    }
    if preds.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    Ok(())
}

/// `confusion[true][pred]` over `classes` classes.
pub fn confusion_matrix(preds: &[usize], labels: &[usize], classes: usize) -> Vec<Vec<usize>> {
    let mut m = vec![vec![0; classes]; classes];
    for (&p, &l) in preds.iter().zip(labels) {
        m[l][p] += 1;
    }
    m
}

/// Unweighted mean of per-class F1. Classes missing from both `preds` and `labels` are
/// left out of the mean.
pub fn macro_f1(preds: &[usize], labels: &[usize]) -> Result<f64, EvalError> {
    check_lengths(preds, labels)?;
    let classes = preds.iter().chain(labels).max().map_or(0, |m| m + 1);
    let mut sum = 0.0;
    let mut present = 0;
    for c in 0..classes {
        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut fn_ = 0usize;
        for (&p, &l) in preds.iter().zip(labels) {
            match (p == c, l == c) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
        if tp + fp + fn_ == 0 {
            continue;
        }
        present += 1;
        sum += 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64;
    }
    Ok(sum / present as f64)
}

/// Micro-averaged F1, which equals accuracy for single-label classification.
pub fn micro_f1(preds: &[usize], labels: &[usize]) -> Result<f64, EvalError> {
    check_lengths(preds, labels)?;
    let hits = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / preds.len() as f64)
}

/// Sample Pearson correlation of the class indices.
pub fn pearson(preds: &[usize], labels: &[usize]) -> Result<f64, EvalError> {
    if preds.len() != labels.len() {
        return Err(EvalError::LengthMismatch { preds: preds.len(), labels: labels.len() });
    }
    if preds.len() < 2 {
        return Err(EvalError::EmptyInput);
    }
    let n = preds.len() as f64;
    let x: Vec<f64> = preds.iter().map(|&v| v as f64).collect();
    let y: Vec<f64> = labels.iter().map(|&v| v as f64).collect();
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(&y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(EvalError::ConstantInput);
    }
    Ok(sxy / (sxx.sqrt() * syy.sqrt()))
}
