//! Classification metrics and the evidence-path stability score.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::explain::EvidencePath;
use crate::graph::HeteroGraph;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: f64,
    /// (K, Precision@K) in the configured order.
    pub precision_at_k: Vec<(usize, f64)>,
    /// Evidence-path stability; absent unless checkpoints were compared.
    pub stc: Option<f64>,
}

fn counts(scores: &[f64], labels: &[f64], threshold: f64) -> (f64, f64, f64, f64) {
    let (mut tp, mut fp, mut tn, mut fn_) = (0.0, 0.0, 0.0, 0.0);
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y == 1.0) {
            (true, true) => tp += 1.0,
            (true, false) => fp += 1.0,
            (false, false) => tn += 1.0,
            (false, true) => fn_ += 1.0,
        }
    }
    (tp, fp, tn, fn_)
}

fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a / b
    }
}

fn f1_of(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// F1 of the spam class at `threshold`; 0 on empty input.
pub fn f1_at_threshold(scores: &[f64], labels: &[f64], threshold: f64) -> f64 {
    let (tp, fp, _, fn_) = counts(scores, labels, threshold);
    f1_of(ratio(tp, tp + fp), ratio(tp, tp + fn_))
}

/// Rank-statistic AUC with midranks for ties; 0.5 when a class is missing.
pub fn auc(scores: &[f64], labels: &[f64]) -> f64 {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = mid;
        }
        i = j + 1;
    }
    let pos = labels.iter().filter(|&&y| y == 1.0).count() as f64;
    let neg = labels.len() as f64 - pos;
    if pos == 0.0 || neg == 0.0 {
        return 0.5;
    }
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &y)| y == 1.0).map(|(r, _)| r).sum();
    (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg)
}

/// Fraction of spam among the `k` highest scores (ties by position).
pub fn precision_at_k(scores: &[f64], labels: &[f64], k: usize) -> f64 {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let k = k.min(order.len());
    if k == 0 {
        return 0.0;
    }
    order[..k].iter().filter(|&&i| labels[i] == 1.0).count() as f64 / k as f64
}

pub fn classification_metrics(
    scores: &[f64],
    labels: &[f64],
    threshold: f64,
    ks: &[usize],
) -> Result<MetricsReport, HarnessError> {
    if scores.is_empty() || scores.len() != labels.len() {
        return Err(HarnessError::EmptyInput);
    }
    let (tp, fp, tn, fn_) = counts(scores, labels, threshold);
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    Ok(MetricsReport {
        accuracy: (tp + tn) / (tp + fp + tn + fn_),
        precision,
        recall,
        f1: f1_of(precision, recall),
        auc: auc(scores, labels),
        precision_at_k: ks.iter().map(|&k| (k, precision_at_k(scores, labels, k))).collect(),
        stc: None,
    })
}

/// Node kinds and entity keys along a path, e.g. `domain:example.com`.
pub fn path_signature(path: &EvidencePath, graph: &HeteroGraph) -> BTreeSet<String> {
    path.steps
        .iter()
        .map(|s| {
            let key = if s.node < graph.len() { graph.node(s.node).key.as_str() } else { "variant" };
            format!("{}:{}", s.kind.as_str(), key)
        })
        .collect()
}

fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        1.0
    } else {
        a.intersection(b).count() as f64 / union as f64
    }
}

/// Mean Jaccard overlap of each campaign's path signature between
/// consecutive checkpoints; campaigns missing from either side are skipped.
pub fn stc_metric(checkpoints: &[BTreeMap<String, BTreeSet<String>>]) -> Result<f64, HarnessError> {
    if checkpoints.len() < 2 {
        return Err(HarnessError::InsufficientCheckpoints(checkpoints.len()));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for pair in checkpoints.windows(2) {
        for (campaign, a) in &pair[0] {
            if let Some(b) = pair[1].get(campaign) {
                total += jaccard(a, b);
                count += 1;
            }
        }
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_separation() {
        let m = classification_metrics(&[0.9, 0.8, 0.1, 0.2], &[1.0, 1.0, 0.0, 0.0], 0.5, &[2]).unwrap();
        assert_eq!((m.accuracy, m.precision, m.recall, m.f1, m.auc), (1.0, 1.0, 1.0, 1.0, 1.0));
        assert_eq!(m.precision_at_k, vec![(2, 1.0)]);
    }

    #[test]
    fn precision_at_two_by_hand() {
        assert_eq!(precision_at_k(&[0.9, 0.8, 0.2], &[1.0, 0.0, 1.0], 2), 0.5);
    }

    #[test]
    fn all_ham_gives_zero_f1() {
        let m = classification_metrics(&[0.9, 0.1], &[0.0, 0.0], 0.5, &[]).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn auc_midranks_ties() {
        assert_eq!(auc(&[0.5, 0.5], &[1.0, 0.0]), 0.5);
        assert_eq!(auc(&[0.2, 0.5, 0.5, 0.9], &[0.0, 1.0, 0.0, 1.0]), 0.875);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(classification_metrics(&[], &[], 0.5, &[]), Err(HarnessError::EmptyInput)));
    }

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn stc_jaccard_cases() {
        let c = |s: BTreeSet<String>| BTreeMap::from([("camp".to_string(), s)]);
        assert_eq!(stc_metric(&[c(set(&["a", "b"])), c(set(&["a", "b"]))]).unwrap(), 1.0);
        assert_eq!(stc_metric(&[c(set(&["a"])), c(set(&["b"]))]).unwrap(), 0.0);
        let third = stc_metric(&[c(set(&["a", "b"])), c(set(&["b", "c"]))]).unwrap();
        assert!((third - 1.0 / 3.0).abs() < 1e-15);
        assert!(stc_metric(&[c(set(&["a"]))]).is_err());
    }
}
