//! The margin-masked contrastive family: a separation term over
//! inter-class pairs, a rank-weighted compactness term over intra-class
//! pairs, and their weighted combination.

use crate::error::Result;
use crate::linalg::{accumulate_cosine_gradient, cosine_similarity, Matrix, QueryMatrix, SimilarityTensor};
use crate::losses::{
    ordered_inter_pairs, truncation_factor, validate_inputs, CompensatedSum, LossConfig,
    LossResult, LossWarning,
};
use crate::partition::PartitionSpec;

/// One intra-class ordered pair with its similarity and rank weight.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedPair {
    /// Anchor query index.
    pub i: usize,
    /// Paired query index (same group, `j != i`).
    pub j: usize,
    /// Truncated cosine similarity of the pair.
    pub similarity: f64,
    /// Rank weight `exp(-alpha * rank)`, where rank is the pair's 0-based
    /// position in its class ordering.
    pub weight: f64,
}

/// Per-class ranking of ordered intra-class pairs.
///
/// Pairs are sorted by descending similarity; ties break lexicographically
/// on `(i, j)`.  A pair's rank is its index in `pairs`.
#[derive(Debug, Clone)]
pub struct ClassRanking {
    /// Group index within the partition.
    pub class: usize,
    /// Ordered pairs in rank order.
    pub pairs: Vec<RankedPair>,
}

/// Rank weights of every class in a partition.
#[derive(Debug, Clone)]
pub struct RankWeightMatrix {
    /// Rankings per class, in class order.  Classes with fewer than two
    /// members contribute an empty ranking.
    pub classes: Vec<ClassRanking>,
}

impl RankWeightMatrix {
    /// Total number of ranked pairs across all classes.
    pub fn pair_count(&self) -> usize {
        self.classes.iter().map(|c| c.pairs.len()).sum()
    }
}

/// Computes per-class rank weights from a similarity tensor.
pub fn rank_weights(
    sim: &SimilarityTensor,
    p: &PartitionSpec,
    alpha: f64,
) -> RankWeightMatrix {
    let mut classes = Vec::with_capacity(p.classes());
    for k in 0..p.classes() {
        let members = p.members(k);
        let mut pairs: Vec<RankedPair> = Vec::new();
        for i in members.clone() {
            for j in members.clone() {
                if i != j {
                    pairs.push(RankedPair {
                        i,
                        j,
                        similarity: sim.value(i, j),
                        weight: 0.0,
                    });
                }
            }
        }
        pairs.sort_by(|a, b| {
            b.similarity
                .total_cmp(&a.similarity)
                .then(a.i.cmp(&b.i))
                .then(a.j.cmp(&b.j))
        });
        for (rank, pair) in pairs.iter_mut().enumerate() {
            pair.weight = (-alpha * rank as f64).exp();
        }
        classes.push(ClassRanking { class: k, pairs });
    }
    RankWeightMatrix { classes }
}

/// Margin decisions for every ranked pair, parallel to a [`RankWeightMatrix`].
#[derive(Debug, Clone)]
pub struct MarginMask {
    /// Per-class inclusion flags, index-aligned with the ranking's classes.
    pub classes: Vec<ClassMask>,
}

/// Inclusion flags for one class's ranked pairs.
#[derive(Debug, Clone)]
pub struct ClassMask {
    /// Group index within the partition.
    pub class: usize,
    /// `included[r]` is true when the pair at rank `r` still violates the
    /// margin and therefore contributes to the loss.
    pub included: Vec<bool>,
}

impl MarginMask {
    /// Number of included pairs across all classes.
    pub fn included_count(&self) -> usize {
        self.classes
            .iter()
            .map(|c| c.included.iter().filter(|&&b| b).count())
            .sum()
    }
}

/// Clamps a similarity into `[eps, 1 - eps]` before it enters a logarithm.
#[inline]
pub(crate) fn clamp_for_log(s: f64, eps: f64) -> f64 {
    s.clamp(eps, 1.0 - eps)
}

/// Weighted penalty of a ranked pair: `-w * log(clamp(s))`.
#[inline]
fn weighted_penalty(pair: &RankedPair, eps: f64) -> f64 {
    -pair.weight * clamp_for_log(pair.similarity, eps).ln()
}

/// Computes the margin mask: a ranked pair stays included while its
/// weighted penalty `-w * log(s)` is at least the margin; pairs that have
/// pushed their penalty below the margin are treated as satisfied and
/// excluded.  The mask is a constant in gradient computations.
pub fn margin_mask(ranking: &RankWeightMatrix, cfg: &LossConfig) -> MarginMask {
    let classes = ranking
        .classes
        .iter()
        .map(|c| ClassMask {
            class: c.class,
            included: c
                .pairs
                .iter()
                .map(|pair| weighted_penalty(pair, cfg.eps_clamp) >= cfg.margin)
                .collect(),
        })
        .collect();
    MarginMask { classes }
}

/// Inter-class separation loss: the mean of `-log(1 - s)` over all ordered
/// pairs of queries from different groups, with `s` clamped to at most
/// `1 - eps_clamp`.  Minimizing it pushes inter-class similarities toward
/// the truncation point at 0.
pub fn ime_loss(q: &QueryMatrix, p: &PartitionSpec, cfg: &LossConfig) -> Result<LossResult> {
    validate_inputs(q, p, cfg)?;
    let sim = cosine_similarity(q);
    ime_with(q, p, cfg, &sim)
}

fn ime_with(
    q: &QueryMatrix,
    p: &PartitionSpec,
    cfg: &LossConfig,
    sim: &SimilarityTensor,
) -> Result<LossResult> {
    let pairs = ordered_inter_pairs(p);
    if pairs.is_empty() {
        return Ok(LossResult::zero(q, vec![LossWarning::NoInterClassPairs]));
    }
    let inv_count = 1.0 / pairs.len() as f64;
    let cap = 1.0 - cfg.eps_clamp;
    let mut value = CompensatedSum::default();
    let mut gradient = Matrix::zeros(q.rows(), q.cols());
    for &(a, b) in &pairs {
        let s = sim.value(a, b);
        let clamped = s.min(cap);
        value.add(-(1.0 - clamped).ln());
        // d/ds of -log(1 - s) is 1 / (1 - s); zero where the clamp or the
        // truncation is active.
        let factor = if s < cap { truncation_factor(s) } else { 0.0 };
        let coeff = inv_count * factor / (1.0 - clamped);
        accumulate_cosine_gradient(q, a, b, coeff, &mut gradient);
    }
    let value = value.total() * inv_count;
    LossResult { value, gradient, warnings: Vec::new() }.check_finite("separation loss")
}

/// Intra-class compactness loss: ranked pairs are weighted by
/// `exp(-alpha * rank)` and masked by the margin; the mean (over *all*
/// intra-class ordered pairs, included or not) of the included penalties
/// `-w * log(s)` pulls same-group queries together, hardest pairs first.
pub fn imc_loss(q: &QueryMatrix, p: &PartitionSpec, cfg: &LossConfig) -> Result<LossResult> {
    validate_inputs(q, p, cfg)?;
    let sim = cosine_similarity(q);
    imc_with(q, p, cfg, &sim)
}

fn imc_with(
    q: &QueryMatrix,
    p: &PartitionSpec,
    cfg: &LossConfig,
    sim: &SimilarityTensor,
) -> Result<LossResult> {
    let ranking = rank_weights(sim, p, cfg.alpha);
    let total_pairs = ranking.pair_count();
    if total_pairs == 0 {
        return Ok(LossResult::zero(q, vec![LossWarning::NoIntraClassPairs]));
    }
    let mask = margin_mask(&ranking, cfg);
    let inv_count = 1.0 / total_pairs as f64;
    let eps = cfg.eps_clamp;
    let mut value = CompensatedSum::default();
    let mut gradient = Matrix::zeros(q.rows(), q.cols());
    for (class, flags) in ranking.classes.iter().zip(mask.classes.iter()) {
        for (pair, &included) in class.pairs.iter().zip(flags.included.iter()) {
            if !included {
                continue;
            }
            let clamped = clamp_for_log(pair.similarity, eps);
            value.add(-pair.weight * clamped.ln());
            // d/ds of -w * log(s) is -w / s; the rank weight and the mask
            // are constants, and the gradient vanishes where the clamp or
            // the truncation is active.
            let inside = pair.similarity > eps && pair.similarity < 1.0 - eps;
            if inside {
                let coeff = inv_count * (-pair.weight / clamped);
                accumulate_cosine_gradient(q, pair.i, pair.j, coeff, &mut gradient);
            }
        }
    }
    let value = value.total() * inv_count;
    LossResult { value, gradient, warnings: Vec::new() }.check_finite("compactness loss")
}

/// The combined loss `gamma * compactness + eta * separation`.
pub fn mmcl_loss(q: &QueryMatrix, p: &PartitionSpec, cfg: &LossConfig) -> Result<LossResult> {
    validate_inputs(q, p, cfg)?;
    let sim = cosine_similarity(q);
    let imc = imc_with(q, p, cfg, &sim)?;
    let ime = ime_with(q, p, cfg, &sim)?;
    let value = cfg.gamma * imc.value + cfg.eta * ime.value;
    let mut gradient = imc.gradient;
    gradient.scale(cfg.gamma);
    gradient.add_scaled(cfg.eta, &ime.gradient);
    let mut warnings = imc.warnings;
    for w in ime.warnings {
        if !warnings.contains(&w) {
            warnings.push(w);
        }
    }
    LossResult { value, gradient, warnings }.check_finite("combined loss")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::LossKind;
    use crate::partition::partition_queries;

    /// Three unit queries with pairwise cosine exactly 0.5 (Cholesky rows
    /// of the 3x3 matrix with unit diagonal and 0.5 off-diagonal).
    fn pairwise_half_queries() -> QueryMatrix {
        Matrix::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.5, 0.8660254037844386, 0.0],
            vec![0.5, 0.2886751345948129, 0.816496580927726],
        ])
        .unwrap()
    }

    #[test]
    fn separation_value_on_pairwise_half_instance() {
        let q = pairwise_half_queries();
        let p = partition_queries(3, 2).unwrap();
        let r = ime_loss(&q, &p, &LossConfig::default()).unwrap();
        // Four inter-class ordered pairs, each -log(1 - 0.5) = log 2.
        assert!((r.value - 0.6931471805599453).abs() < 1e-12);
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn rank_weights_order_and_tie_break() {
        let q = pairwise_half_queries();
        let p = partition_queries(3, 2).unwrap();
        let sim = cosine_similarity(&q);
        let ranking = rank_weights(&sim, &p, 0.25);
        assert_eq!(ranking.classes.len(), 2);
        let class0 = &ranking.classes[0];
        // Both pairs tie at similarity 0.5; lexicographic order breaks it.
        assert_eq!((class0.pairs[0].i, class0.pairs[0].j), (0, 1));
        assert_eq!((class0.pairs[1].i, class0.pairs[1].j), (1, 0));
        assert!((class0.pairs[0].weight - 1.0).abs() < 1e-15);
        assert!((class0.pairs[1].weight - (-0.25f64).exp()).abs() < 1e-15);
        assert!(ranking.classes[1].pairs.is_empty());
    }

    #[test]
    fn compactness_value_on_pairwise_half_instance() {
        let q = pairwise_half_queries();
        let p = partition_queries(3, 2).unwrap();
        let r = imc_loss(&q, &p, &LossConfig::default()).unwrap();
        // Pair contributions: -1.0 * log(0.5) and -exp(-0.25) * log(0.5),
        // both above the margin, averaged over the 2 intra-class pairs.
        let first = 0.6931471805599453;
        let second = 0.5398235670038218;
        assert!((r.value - (first + second) / 2.0).abs() < 1e-12);
        assert!((r.value - 0.6164853737818836).abs() < 1e-12);
    }

    #[test]
    fn combined_value_on_pairwise_half_instance() {
        let q = pairwise_half_queries();
        let p = partition_queries(3, 2).unwrap();
        let r = mmcl_loss(&q, &p, &LossConfig::default()).unwrap();
        assert!((r.value - 0.9630589640618563).abs() < 1e-12);
    }

    #[test]
    fn compactness_is_exactly_zero_at_the_optimum() {
        // Identical rows within each class, orthogonal across classes:
        // every intra similarity is 1, so every weighted penalty is below
        // the margin and the mask removes every pair.
        let q = Matrix::from_rows(&[
            vec![1.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, 1.0],
        ])
        .unwrap();
        let p = partition_queries(4, 2).unwrap();
        let r = imc_loss(&q, &p, &LossConfig::default()).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.gradient.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn single_class_yields_separation_warning() {
        let q = pairwise_half_queries();
        let p = partition_queries(3, 1).unwrap();
        let r = ime_loss(&q, &p, &LossConfig::default()).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.warnings, vec![LossWarning::NoInterClassPairs]);
    }

    #[test]
    fn all_singleton_classes_yield_compactness_warning() {
        let q = pairwise_half_queries();
        let p = partition_queries(3, 3).unwrap();
        let r = imc_loss(&q, &p, &LossConfig::default()).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.warnings, vec![LossWarning::NoIntraClassPairs]);
    }

    #[test]
    fn margin_mask_drops_satisfied_pairs() {
        let q = pairwise_half_queries();
        let p = partition_queries(3, 2).unwrap();
        let sim = cosine_similarity(&q);
        let ranking = rank_weights(&sim, &p, 0.25);
        // With a huge margin nothing violates it.
        let strict = LossConfig { margin: 10.0, ..LossConfig::default() };
        assert_eq!(margin_mask(&ranking, &strict).included_count(), 0);
        // With the default margin both pairs violate it.
        assert_eq!(margin_mask(&ranking, &LossConfig::default()).included_count(), 2);
    }

    #[test]
    fn permutation_within_a_group_preserves_values_when_similarities_differ() {
        // Partitioning 5 queries into 2 groups puts {0, 1, 2} in group 0;
        // its three unordered pair similarities (0.9, 0.6, ~0.67) are
        // distinct, so a within-group swap relabels ranks but must not
        // change any loss value.
        let q = Matrix::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.9, 0.4358898943540674, 0.0],
            vec![0.6, 0.3, 0.7416198487095663],
            vec![0.0, 0.0, 1.0],
            vec![0.0, 1.0, 0.0],
        ])
        .unwrap();
        let swapped = Matrix::from_rows(&[
            q.row(1).to_vec(),
            q.row(0).to_vec(),
            q.row(2).to_vec(),
            q.row(3).to_vec(),
            q.row(4).to_vec(),
        ])
        .unwrap();
        let p = partition_queries(5, 2).unwrap();
        let cfg = LossConfig::default();
        for kind in [LossKind::Ime, LossKind::Imc, LossKind::Mmcl] {
            let a = crate::losses::evaluate(kind, &q, &p, &cfg).unwrap();
            let b = crate::losses::evaluate(kind, &swapped, &p, &cfg).unwrap();
            assert!(
                (a.value - b.value).abs() < 1e-12,
                "{kind}: {} vs {}",
                a.value,
                b.value
            );
        }
    }
}
