use serde::{Deserialize, Serialize};

use super::frame::StabilityLabel;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl DetectionScores {
    /// Scores from raw counts. With no positives predicted and none present
    /// precision is taken as 1 (nothing was missed or misreported); recall
    /// follows the same rule. F1 is 0 whenever precision + recall is 0.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let empty = tp + fp == 0 && tp + fn_ == 0;
        let ratio = |num: usize, den: usize| if den == 0 { if empty { 1.0 } else { 0.0 } } else { num as f64 / den as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        Self { precision, recall, f1, tp, fp, fn_, tn }
    }
}

/// Precision, recall and F1 with "unstable" as the positive class.
pub fn detection_scores(predicted: &[StabilityLabel], truth: &[StabilityLabel]) -> Result<DetectionScores> {
    if predicted.len() != truth.len() {
        return Err(Error::Dimension(format!("{} predictions but {} truth labels", predicted.len(), truth.len())));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (p, t) in predicted.iter().zip(truth) {
        match (p, t) {
            (StabilityLabel::Unstable, StabilityLabel::Unstable) => tp += 1,
            (StabilityLabel::Unstable, StabilityLabel::Stable) => fp += 1,
            (StabilityLabel::Stable, StabilityLabel::Unstable) => fn_ += 1,
            (StabilityLabel::Stable, StabilityLabel::Stable) => tn += 1,
        }
    }
    Ok(DetectionScores::from_counts(tp, fp, fn_, tn))
}

/// Mean silhouette coefficient of a labelling under Euclidean distance.
/// Points in singleton clusters score 0.
pub fn silhouette(points: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if points.len() != labels.len() {
        return Err(Error::Dimension(format!("{} points but {} labels", points.len(), labels.len())));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    labels.iter().for_each(|&l| sizes[l] += 1);
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(Error::InvalidArgument("silhouette needs at least two non-empty clusters".into()));
    }
    let mut total = 0.0;
    for (i, p) in points.iter().enumerate() {
        let mut sums = vec![0.0; k];
        for (j, q) in points.iter().enumerate() {
            if i != j {
                sums[labels[j]] += p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            }
        }
        let own = labels[i];
        if sizes[own] <= 1 {
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(total / points.len() as f64)
}
