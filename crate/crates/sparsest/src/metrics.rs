//! Frame-level detection metrics: ROC curve and AUC.

use serde::Serialize;

use crate::{Error, Result};

/// One operating point of the ROC curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC points (threshold sweep over the unique scores, descending) and the
/// AUC computed by the rank statistic with midrank tie handling.
///
/// Scores are "higher means more anomalous"; labels mark the positive
/// (anomalous) frames. Both classes must be present.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<(Vec<RocPoint>, f64)> {
    if scores.len() != labels.len() {
        return Err(Error::shape(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::data(
            "ROC needs both positive and negative labels".to_string(),
        ));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::numeric("non-finite anomaly score".to_string()));
    }

    // Midranks: sort ascending, average ranks within tie groups.
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks are 1-based; ties share the average rank of the group.
        let midrank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = midrank;
        }
        i = j + 1;
    }
    let rank_sum_pos: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l)
        .map(|(&r, _)| r)
        .sum();
    let p = positives as f64;
    let n = negatives as f64;
    let auc = (rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n);

    // Threshold sweep: classify positive when score >= threshold.
    let mut unique: Vec<f64> = scores.to_vec();
    unique.sort_by(|a, b| b.partial_cmp(a).unwrap());
    unique.dedup();
    let mut points = vec![RocPoint { threshold: f64::INFINITY, fpr: 0.0, tpr: 0.0 }];
    for &t in &unique {
        let mut tp = 0usize;
        let mut fp = 0usize;
        for (&s, &l) in scores.iter().zip(labels) {
            if s >= t {
                if l {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
        }
        points.push(RocPoint {
            threshold: t,
            fpr: fp as f64 / n,
            tpr: tp as f64 / p,
        });
    }
    Ok((points, auc))
}

/// Trapezoidal area under a threshold-sweep ROC curve.
pub fn trapezoid_auc(points: &[RocPoint]) -> f64 {
    let mut area = 0.0;
    for w in points.windows(2) {
        area += (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0;
    }
    area
}
