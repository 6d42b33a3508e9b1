//! Distribution metrics over partitioned query matrices.
//!
//! Every metric returns `None` (serialized as `null`) when its underlying
//! pair or sample set is empty, rather than inventing a value.

use serde::Serialize;

use crate::linalg::{cosine_similarity, QueryMatrix};
use crate::losses::{margin_mask, rank_weights, LossConfig};
use crate::partition::PartitionSpec;

/// Snapshot of the distribution metrics for one query matrix.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    /// Mean truncated cosine similarity over intra-class ordered pairs.
    pub homogeneity: Option<f64>,
    /// Per-class homogeneity; `None` for classes with fewer than two
    /// members.
    pub per_class_homogeneity: Vec<Option<f64>>,
    /// Mean truncated cosine similarity over inter-class ordered pairs.
    pub inter_class_similarity: Option<f64>,
    /// Fraction of ranked intra-class pairs whose weighted penalty has
    /// dropped below the margin.
    pub margin_satisfaction: Option<f64>,
}

/// Computes every query-matrix metric at once.
pub fn metrics_report(q: &QueryMatrix, p: &PartitionSpec, cfg: &LossConfig) -> MetricsReport {
    MetricsReport {
        homogeneity: homogeneity(q, p),
        per_class_homogeneity: per_class_homogeneity(q, p),
        inter_class_similarity: inter_class_similarity(q, p),
        margin_satisfaction: margin_satisfaction(q, p, cfg),
    }
}

/// Mean truncated cosine similarity over intra-class ordered pairs, or
/// `None` when every class is a singleton.
pub fn homogeneity(q: &QueryMatrix, p: &PartitionSpec) -> Option<f64> {
    let sim = cosine_similarity(q);
    let mut sum = 0.0;
    let mut count = 0usize;
    for k in 0..p.classes() {
        let members = p.members(k);
        for i in members.clone() {
            for j in members.clone() {
                if i != j {
                    sum += sim.value(i, j);
                    count += 1;
                }
            }
        }
    }
    (count > 0).then(|| sum / count as f64)
}

/// Homogeneity restricted to each class.
pub fn per_class_homogeneity(q: &QueryMatrix, p: &PartitionSpec) -> Vec<Option<f64>> {
    let sim = cosine_similarity(q);
    (0..p.classes())
        .map(|k| {
            let members = p.members(k);
            let mut sum = 0.0;
            let mut count = 0usize;
            for i in members.clone() {
                for j in members.clone() {
                    if i != j {
                        sum += sim.value(i, j);
                        count += 1;
                    }
                }
            }
            (count > 0).then(|| sum / count as f64)
        })
        .collect()
}

/// Mean truncated cosine similarity over inter-class ordered pairs, or
/// `None` with a single class.
pub fn inter_class_similarity(q: &QueryMatrix, p: &PartitionSpec) -> Option<f64> {
    let sim = cosine_similarity(q);
    let n = p.total_queries();
    let mut sum = 0.0;
    let mut count = 0usize;
    for a in 0..n {
        for b in 0..n {
            if a != b && !p.same_group(a, b) {
                sum += sim.value(a, b);
                count += 1;
            }
        }
    }
    (count > 0).then(|| sum / count as f64)
}

/// Fraction of ranked intra-class pairs that satisfy the margin, i.e.
/// whose weighted penalty `-w log(s)` has fallen below it.
pub fn margin_satisfaction(q: &QueryMatrix, p: &PartitionSpec, cfg: &LossConfig) -> Option<f64> {
    let sim = cosine_similarity(q);
    let ranking = rank_weights(&sim, p, cfg.alpha);
    let total = ranking.pair_count();
    if total == 0 {
        return None;
    }
    let included = margin_mask(&ranking, cfg).included_count();
    Some((total - included) as f64 / total as f64)
}

/// Fraction of matched queries whose partition group equals the class of
/// the object they matched, under the fixed identification of group `k`
/// with class `k`.  `matches` holds `(query index, object class)` pairs;
/// `None` when empty.
pub fn group_class_consistency(matches: &[(usize, usize)], p: &PartitionSpec) -> Option<f64> {
    if matches.is_empty() {
        return None;
    }
    let hits = matches.iter().filter(|&&(q, class)| p.group_of(q) == class).count();
    Some(hits as f64 / matches.len() as f64)
}
