//! Evaluation against hidden ground truth. "Clean" is the positive class.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{check_labels, ConfidenceVector};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub true_negatives: usize,
    /// Nothing was predicted clean, so precision is undefined and reported as 0.
    pub precision_undefined: bool,
}

/// Precision/recall/F1 of `w ≥ threshold` as a detector of clean samples.
pub fn noise_detection_scores(
    w: &ConfidenceVector,
    clean_mask: &[bool],
    threshold: f64,
) -> Result<DetectionScores> {
    if w.len() != clean_mask.len() {
        return Err(Error::dim(format!(
            "{} confidences for {} mask entries",
            w.len(),
            clean_mask.len()
        )));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&wi, &clean) in w.values().iter().zip(clean_mask) {
        match (wi >= threshold, clean) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(DetectionScores {
        precision,
        recall,
        f1,
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        true_negatives: tn,
        precision_undefined: tp + fp == 0,
    })
}

pub fn accuracy(predictions: &[usize], truth: &[usize]) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(Error::dim(format!(
            "{} predictions for {} labels",
            predictions.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::input("accuracy of an empty set"));
    }
    let hits = predictions.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Rows are true classes, columns predicted classes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in &self.counts {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

pub fn confusion_matrix(
    predictions: &[usize],
    truth: &[usize],
    num_classes: usize,
) -> Result<ConfusionMatrix> {
    if predictions.len() != truth.len() {
        return Err(Error::dim(format!(
            "{} predictions for {} labels",
            predictions.len(),
            truth.len()
        )));
    }
    check_labels(predictions, num_classes)?;
    check_labels(truth, num_classes)?;
    let mut counts = vec![vec![0u64; num_classes]; num_classes];
    for (&p, &t) in predictions.iter().zip(truth) {
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix { counts })
}
