//! Ranking metrics at a cutoff.

use crate::corpus::PaperId;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Denominator used for precision.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecisionMode {
    /// `min(K, |returned|)`.
    #[default]
    Returned,
    /// Always `K`; short lists are penalized.
    StrictK,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RankingMetrics {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub ndcg: f64,
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

fn discount(position: usize) -> f64 {
    1.0 / ((position + 1) as f64).log2()
}

/// Metrics of a returned list against the ground truth at cutoff `k`
/// (clamped to at least 1).
///
/// `returned` holds the resolved paper id of each entry in order; `None`
/// marks an entry that could not be resolved and counts as a miss. Only
/// the first `k` entries are looked at. A paper repeated inside the prefix
/// earns credit once.
pub fn evaluate_ranking(
    returned: &[Option<PaperId>],
    ground_truth: &BTreeSet<PaperId>,
    k: usize,
    mode: PrecisionMode,
) -> RankingMetrics {
    let k = k.max(1);
    let prefix = &returned[..returned.len().min(k)];
    let mut seen = BTreeSet::new();
    let mut hits = 0usize;
    let mut dcg = 0.0;
    for (i, id) in prefix.iter().enumerate() {
        if let Some(id) = id {
            if ground_truth.contains(id) && seen.insert(id) {
                hits += 1;
                dcg += discount(i + 1);
            }
        }
    }
    if ground_truth.is_empty() {
        return RankingMetrics::default();
    }
    let recall = hits as f64 / ground_truth.len() as f64;
    let denominator = match mode {
        PrecisionMode::Returned => prefix.len(),
        PrecisionMode::StrictK => k,
    };
    let precision = if denominator == 0 {
        0.0
    } else {
        hits as f64 / denominator as f64
    };
    let idcg: f64 = (1..=ground_truth.len().min(k)).map(discount).sum();
    RankingMetrics {
        recall,
        precision,
        f1: f1(precision, recall),
        ndcg: dcg / idcg,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(xs: &[&str]) -> Vec<Option<PaperId>> {
        xs.iter().map(|x| if x.is_empty() { None } else { Some(PaperId::from(*x)) }).collect()
    }

    fn truth(xs: &[&str]) -> BTreeSet<PaperId> {
        xs.iter().map(|x| PaperId::from(*x)).collect()
    }

    #[test]
    fn recall_ratio() {
        let m = evaluate_ranking(&ids(&["a", "b", "c", "x"]), &truth(&["a", "b", "c", "d"]), 20, PrecisionMode::Returned);
        assert_eq!(m.recall, 0.75);
    }

    #[test]
    fn precision_and_f1() {
        let mut r: Vec<&str> = vec!["a", "b", "c", "d", "e"];
        let fillers: Vec<String> = (0..15).map(|i| format!("n{i}")).collect();
        r.extend(fillers.iter().map(String::as_str));
        let gt = truth(&["a", "b", "c", "d", "e", "f", "g"]);
        let m = evaluate_ranking(&ids(&r), &gt, 20, PrecisionMode::Returned);
        assert_eq!(m.precision, 0.25);
        assert!((f1(0.25, 0.75) - 0.375).abs() < 1e-15);
    }

    #[test]
    fn ndcg_hits_one_and_three() {
        let m = evaluate_ranking(&ids(&["a", "x", "b"]), &truth(&["a", "b"]), 20, PrecisionMode::Returned);
        assert!((m.ndcg - 0.91972).abs() < 1e-5);
    }

    #[test]
    fn strict_k_and_duplicates() {
        let m = evaluate_ranking(&ids(&["a", "a", ""]), &truth(&["a"]), 20, PrecisionMode::StrictK);
        assert_eq!(m.precision, 1.0 / 20.0);
        assert_eq!(m.ndcg, 1.0);
        let m = evaluate_ranking(&[], &truth(&["a"]), 20, PrecisionMode::Returned);
        assert_eq!(m, RankingMetrics::default());
    }
}
