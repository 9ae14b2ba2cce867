//! Detection metrics over per-sample scores and binary labels.

use std::cmp::Ordering;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("labels contain a single class")]
    DegenerateLabels,
    #[error("{scores} scores for {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("score at position {0} is not finite")]
    NonFiniteScore(usize),
    #[error("label at position {0} is not 0 or 1")]
    NonBinaryLabel(usize),
    #[error("anomaly rate {0} is outside (0, 1)")]
    BadRate(f64),
}

fn check(scores: &[f64], labels: &[u8]) -> Result<(usize, usize), MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch { scores: scores.len(), labels: labels.len() });
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(MetricError::NonFiniteScore(i));
    }
    if let Some(i) = labels.iter().position(|&l| l > 1) {
        return Err(MetricError::NonBinaryLabel(i));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricError::DegenerateLabels);
    }
    Ok((pos, neg))
}

fn descending(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal));
    order
}

/// Area under the ROC curve via average ranks, so tied scores count one half.
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64, MetricError> {
    let (pos, neg) = check(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));
    let mut positive_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks are 1-based; the tie group i..=j shares their mean.
        let mean_rank = (i + j) as f64 / 2.0 + 1.0;
        let group_pos = order[i..=j].iter().filter(|&&k| labels[k] == 1).count();
        positive_rank_sum += mean_rank * group_pos as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((positive_rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Average precision: the sum over distinct score thresholds, highest
/// first, of precision at that threshold times the recall it adds.
pub fn auprc(scores: &[f64], labels: &[u8]) -> Result<f64, MetricError> {
    let (pos, _) = check(scores, labels)?;
    let order = descending(scores);
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let recall = tp as f64 / pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(ap)
}

/// Linear-interpolation quantile of `values` at `q` in [0, 1].
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdRule {
    /// Flag scores above the `(1 - rate)` quantile.
    AnomalyRate(f64),
    /// Flag scores above a fixed cut.
    Fixed(f64),
}

pub const DEFAULT_ANOMALY_RATE: f64 = 0.1;

impl ThresholdRule {
    pub fn cut(&self, scores: &[f64]) -> Result<f64, MetricError> {
        match *self {
            ThresholdRule::AnomalyRate(rate) if !(rate > 0.0 && rate < 1.0) => Err(MetricError::BadRate(rate)),
            ThresholdRule::AnomalyRate(rate) => Ok(quantile(scores, 1.0 - rate)),
            ThresholdRule::Fixed(t) => Ok(t),
        }
    }
}

pub fn binarize(scores: &[f64], cut: f64) -> Vec<u8> {
    scores.iter().map(|&s| u8::from(s > cut)).collect()
}

/// F1 of binary predictions; zero when nothing is predicted positive.
pub fn f1_from_predictions(predicted: &[u8], labels: &[u8]) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&p, &l) in predicted.iter().zip(labels) {
        match (p, l) {
            (1, 1) => tp += 1,
            (1, _) => fp += 1,
            (_, 1) => fn_ += 1,
            _ => {}
        }
    }
    if tp == 0 {
        return 0.0;
    }
    2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
}

pub fn f1(scores: &[f64], labels: &[u8], rule: ThresholdRule) -> Result<f64, MetricError> {
    check(scores, labels)?;
    let cut = rule.cut(scores)?;
    Ok(f1_from_predictions(&binarize(scores, cut), labels))
}
