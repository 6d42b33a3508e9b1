//! Baseline contrastive losses used for comparison experiments.

use crate::error::Result;
use crate::linalg::{accumulate_cosine_gradient, cosine_similarity, Matrix, QueryMatrix};
use crate::losses::{
    ordered_inter_pairs, ordered_intra_pairs, truncation_factor, validate_inputs,
    CompensatedSum, LossConfig, LossResult, LossWarning,
};
use crate::partition::PartitionSpec;

/// N-pair loss: the mean of `log(1 + exp(s_neg - s_pos))` over the full
/// Cartesian product of intra-class (positive) and inter-class (negative)
/// ordered pairs.
pub fn npair_loss(q: &QueryMatrix, p: &PartitionSpec, cfg: &LossConfig) -> Result<LossResult> {
    validate_inputs(q, p, cfg)?;
    let intra = ordered_intra_pairs(p);
    let inter = ordered_inter_pairs(p);
    if let Some(result) = empty_pair_result(q, &intra, &inter) {
        return Ok(result);
    }
    let sim = cosine_similarity(q);
    let s_pos: Vec<f64> = intra.iter().map(|&(a, b)| sim.value(a, b)).collect();
    let s_neg: Vec<f64> = inter.iter().map(|&(a, b)| sim.value(a, b)).collect();
    // exp(s_neg - s_pos) factors into per-pair exponentials, which keeps
    // the quadratic pair-product loop to one multiply per combination.
    let exp_neg: Vec<f64> = s_neg.iter().map(|s| s.exp()).collect();
    let exp_pos_inv: Vec<f64> = s_pos.iter().map(|s| (-s).exp()).collect();
    let inv_count = 1.0 / (intra.len() as f64 * inter.len() as f64);
    let mut value = CompensatedSum::default();
    let mut coef_pos = vec![0.0; intra.len()];
    let mut coef_neg = vec![0.0; inter.len()];
    for (ip, &ep) in exp_pos_inv.iter().enumerate() {
        for (in_, &en) in exp_neg.iter().enumerate() {
            let t = en * ep;
            value.add(t.ln_1p());
            let sigma = t / (1.0 + t);
            coef_pos[ip] -= sigma;
            coef_neg[in_] += sigma;
        }
    }
    let value = value.total() * inv_count;
    let mut gradient = Matrix::zeros(q.rows(), q.cols());
    for (idx, &(a, b)) in intra.iter().enumerate() {
        let coeff = inv_count * coef_pos[idx] * truncation_factor(s_pos[idx]);
        accumulate_cosine_gradient(q, a, b, coeff, &mut gradient);
    }
    for (idx, &(a, b)) in inter.iter().enumerate() {
        let coeff = inv_count * coef_neg[idx] * truncation_factor(s_neg[idx]);
        accumulate_cosine_gradient(q, a, b, coeff, &mut gradient);
    }
    LossResult { value, gradient, warnings: Vec::new() }.check_finite("n-pair loss")
}

/// Occlusion-aware contrast: like a two-way softmax over `(s_pos, s_neg)`,
/// but positives still below the threshold `tau` contribute an extra
/// `exp(s_pos)` denominator term, sharpening their pull.  The threshold
/// indicator is a constant in gradients.
pub fn oca_loss(q: &QueryMatrix, p: &PartitionSpec, cfg: &LossConfig) -> Result<LossResult> {
    validate_inputs(q, p, cfg)?;
    let intra = ordered_intra_pairs(p);
    let inter = ordered_inter_pairs(p);
    if let Some(result) = empty_pair_result(q, &intra, &inter) {
        return Ok(result);
    }
    let sim = cosine_similarity(q);
    let s_pos: Vec<f64> = intra.iter().map(|&(a, b)| sim.value(a, b)).collect();
    let s_neg: Vec<f64> = inter.iter().map(|&(a, b)| sim.value(a, b)).collect();
    // Positives below the threshold count twice in the denominator.
    let gated_exp_pos: Vec<f64> = s_pos
        .iter()
        .map(|&s| if s < cfg.tau { 2.0 * s.exp() } else { s.exp() })
        .collect();
    let exp_neg: Vec<f64> = s_neg.iter().map(|s| s.exp()).collect();
    let inv_count = 1.0 / (intra.len() as f64 * inter.len() as f64);
    let mut value = CompensatedSum::default();
    let mut coef_pos = vec![0.0; intra.len()];
    let mut coef_neg = vec![0.0; inter.len()];
    for (ip, &ap) in gated_exp_pos.iter().enumerate() {
        for (in_, &en) in exp_neg.iter().enumerate() {
            let denom = ap + en;
            value.add(denom.ln() - s_pos[ip]);
            coef_pos[ip] += ap / denom - 1.0;
            coef_neg[in_] += en / denom;
        }
    }
    let value = value.total() * inv_count;
    let mut gradient = Matrix::zeros(q.rows(), q.cols());
    for (idx, &(a, b)) in intra.iter().enumerate() {
        let coeff = inv_count * coef_pos[idx] * truncation_factor(s_pos[idx]);
        accumulate_cosine_gradient(q, a, b, coeff, &mut gradient);
    }
    for (idx, &(a, b)) in inter.iter().enumerate() {
        let coeff = inv_count * coef_neg[idx] * truncation_factor(s_neg[idx]);
        accumulate_cosine_gradient(q, a, b, coeff, &mut gradient);
    }
    LossResult { value, gradient, warnings: Vec::new() }.check_finite("occlusion-aware loss")
}

/// Distribution-contrast loss: each query row is turned into a probability
/// distribution by a temperature-1 softmax over its raw coordinates (so
/// the loss is *not* scale invariant), and the value is the mean symmetric
/// KL divergence over intra-class pairs minus the mean over inter-class
/// pairs.  Negative values are legitimate.
pub fn iic_loss(q: &QueryMatrix, p: &PartitionSpec, cfg: &LossConfig) -> Result<LossResult> {
    validate_inputs(q, p, cfg)?;
    if q.cols() == 1 {
        return Ok(LossResult::zero(q, vec![LossWarning::DegenerateDimension]));
    }
    let n = q.rows();
    let dim = q.cols();
    let intra = ordered_intra_pairs(p);
    let inter = ordered_inter_pairs(p);
    let mut warnings = Vec::new();
    if intra.is_empty() {
        warnings.push(LossWarning::NoIntraClassPairs);
    }
    if inter.is_empty() {
        warnings.push(LossWarning::NoInterClassPairs);
    }
    if intra.is_empty() && inter.is_empty() {
        return Ok(LossResult::zero(q, warnings));
    }

    // Row distributions and their logs, via max-shifted softmax.
    let mut probs = Matrix::zeros(n, dim);
    let mut log_probs = Matrix::zeros(n, dim);
    for i in 0..n {
        let row = q.row(i);
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let mut z = 0.0;
        for &v in row {
            z += (v - max).exp();
        }
        let log_z = z.ln();
        for d in 0..dim {
            let log_p = row[d] - max - log_z;
            log_probs.set(i, d, log_p);
            probs.set(i, d, log_p.exp());
        }
    }

    let sym_kl = |a: usize, b: usize| -> f64 {
        let (pa, pb) = (probs.row(a), probs.row(b));
        let (la, lb) = (log_probs.row(a), log_probs.row(b));
        (0..dim).map(|d| (pa[d] - pb[d]) * (la[d] - lb[d])).sum()
    };

    // Accumulate the divergence means and the adjoint with respect to the
    // row distributions in one pass over the pairs.
    let mut value = CompensatedSum::default();
    let mut dprobs = Matrix::zeros(n, dim);
    let mut visit = |pairs: &[(usize, usize)], sign: f64| {
        if pairs.is_empty() {
            return;
        }
        let scale = sign / pairs.len() as f64;
        for &(a, b) in pairs {
            value.add(scale * sym_kl(a, b));
            for d in 0..dim {
                let delta_log = log_probs.get(a, d) - log_probs.get(b, d);
                let ratio_ba = (log_probs.get(b, d) - log_probs.get(a, d)).exp();
                let ratio_ab = (log_probs.get(a, d) - log_probs.get(b, d)).exp();
                // d/dp of (p - q)(log p - log q) = (log p - log q) + 1 - q/p.
                dprobs.add_at(a, d, scale * (delta_log + 1.0 - ratio_ba));
                dprobs.add_at(b, d, scale * (-delta_log + 1.0 - ratio_ab));
            }
        }
    };
    visit(&intra, 1.0);
    visit(&inter, -1.0);

    // Pull the adjoint through each row's softmax Jacobian.
    let mut gradient = Matrix::zeros(n, dim);
    for i in 0..n {
        let pi = probs.row(i);
        let gi = dprobs.row(i);
        let inner: f64 = (0..dim).map(|d| pi[d] * gi[d]).sum();
        let dst = gradient.row_mut(i);
        for d in 0..dim {
            dst[d] = pi[d] * (gi[d] - inner);
        }
    }
    LossResult { value: value.total(), gradient, warnings }
        .check_finite("distribution-contrast loss")
}

/// Temperature-scaled noise-contrastive loss: for every anchor and each of
/// its same-class positives, `-log softmax` of the positive's similarity
/// against all other queries.  Anchors without positives are excluded from
/// the mean and reported in a warning.
pub fn infonce_loss(q: &QueryMatrix, p: &PartitionSpec, cfg: &LossConfig) -> Result<LossResult> {
    validate_inputs(q, p, cfg)?;
    let n = q.rows();
    let sim = cosine_similarity(q);
    let inv_t = 1.0 / cfg.temperature;
    let mut warnings = Vec::new();
    if p.classes() == 1 && n > 1 {
        warnings.push(LossWarning::NoInterClassPairs);
    }

    let mut value = CompensatedSum::default();
    let mut term_count = 0usize;
    let mut excluded = 0usize;
    // coeffs[i][b] multiplies d s(i, b) in the gradient (ordered: anchor i).
    let mut coeffs = Matrix::zeros(n, n);
    for i in 0..n {
        let positives: Vec<usize> =
            (0..n).filter(|&j| j != i && p.same_group(i, j)).collect();
        if positives.is_empty() {
            excluded += 1;
            continue;
        }
        // Max-shifted log-sum-exp over all non-anchor logits.
        let mut max_logit = f64::NEG_INFINITY;
        for b in 0..n {
            if b != i {
                max_logit = max_logit.max(sim.value(i, b) * inv_t);
            }
        }
        let mut z = 0.0;
        for b in 0..n {
            if b != i {
                z += (sim.value(i, b) * inv_t - max_logit).exp();
            }
        }
        let lse = max_logit + z.ln();
        for &j in &positives {
            value.add(lse - sim.value(i, j) * inv_t);
            coeffs.add_at(i, j, -inv_t);
        }
        term_count += positives.len();
        // Each of this anchor's terms contributes the same softmax pull.
        let pull = positives.len() as f64 * inv_t;
        for b in 0..n {
            if b != i {
                let softmax = (sim.value(i, b) * inv_t - max_logit).exp() / z;
                coeffs.add_at(i, b, pull * softmax);
            }
        }
    }
    if excluded > 0 {
        warnings.push(LossWarning::AnchorsWithoutPositives { count: excluded });
    }
    if term_count == 0 {
        warnings.push(LossWarning::NoIntraClassPairs);
        return Ok(LossResult::zero(q, warnings));
    }
    let inv_count = 1.0 / term_count as f64;
    let value = value.total() * inv_count;
    let mut gradient = Matrix::zeros(q.rows(), q.cols());
    for i in 0..n {
        for b in 0..n {
            if b == i {
                continue;
            }
            let coeff = inv_count * coeffs.get(i, b) * truncation_factor(sim.value(i, b));
            accumulate_cosine_gradient(q, i, b, coeff, &mut gradient);
        }
    }
    LossResult { value, gradient, warnings }.check_finite("noise-contrastive loss")
}

/// Shared degenerate-input handling for the pair-product losses.
fn empty_pair_result(
    q: &QueryMatrix,
    intra: &[(usize, usize)],
    inter: &[(usize, usize)],
) -> Option<LossResult> {
    let mut warnings = Vec::new();
    if intra.is_empty() {
        warnings.push(LossWarning::NoIntraClassPairs);
    }
    if inter.is_empty() {
        warnings.push(LossWarning::NoInterClassPairs);
    }
    if warnings.is_empty() {
        None
    } else {
        Some(LossResult::zero(q, warnings))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::partition_queries;

    fn pairwise_half_queries() -> QueryMatrix {
        Matrix::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.5, 0.8660254037844386, 0.0],
            vec![0.5, 0.2886751345948129, 0.816496580927726],
        ])
        .unwrap()
    }

    #[test]
    fn npair_equal_similarities_give_log_two() {
        let q = pairwise_half_queries();
        let p = partition_queries(3, 2).unwrap();
        let r = npair_loss(&q, &p, &LossConfig::default()).unwrap();
        assert!((r.value - 0.6931471805599453).abs() < 1e-12);
    }

    #[test]
    fn npair_separated_instance_matches_closed_form() {
        // Identical positives (s_pos = 1), orthogonal negatives (s_neg = 0):
        // every combination is log(1 + exp(-1)).
        let q = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let p = partition_queries(3, 2).unwrap();
        let r = npair_loss(&q, &p, &LossConfig::default()).unwrap();
        assert!((r.value - 0.3132616875182228).abs() < 1e-12);
    }

    #[test]
    fn npair_inverted_instance_penalizes_hard() {
        // Orthogonal positives (s_pos = 0) against negatives at 1 and 0.
        let q = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let p = partition_queries(3, 2).unwrap();
        let r = npair_loss(&q, &p, &LossConfig::default()).unwrap();
        let hard = 1.3132616875182228; // log(1 + e)
        let soft = 0.6931471805599453; // log 2
        let expect = (2.0 * (2.0 * hard + 2.0 * soft)) / 8.0;
        assert!((r.value - expect).abs() < 1e-12);
    }

    #[test]
    fn npair_warns_when_a_pair_side_is_missing() {
        let q = pairwise_half_queries();
        let singletons = partition_queries(3, 3).unwrap();
        let r = npair_loss(&q, &singletons, &LossConfig::default()).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.warnings, vec![LossWarning::NoIntraClassPairs]);
        let one_group = partition_queries(3, 1).unwrap();
        let r = npair_loss(&q, &one_group, &LossConfig::default()).unwrap();
        assert_eq!(r.warnings, vec![LossWarning::NoInterClassPairs]);
    }

    #[test]
    fn oca_threshold_gates_the_extra_term() {
        let q = pairwise_half_queries();
        let p = partition_queries(3, 2).unwrap();
        // s_pos = s_neg = 0.5 and tau = 0.5: the strict inequality keeps
        // the extra term out, leaving -log(1/2).
        let r = oca_loss(&q, &p, &LossConfig::default()).unwrap();
        assert!((r.value - 0.6931471805599453).abs() < 1e-12);
        // Raising tau above the positives doubles their denominator share.
        let cfg = LossConfig { tau: 0.6, ..LossConfig::default() };
        let r = oca_loss(&q, &p, &cfg).unwrap();
        assert!((r.value - 1.0986122886681098).abs() < 1e-12);
    }

    #[test]
    fn iic_two_rows_match_hand_computation() {
        let q = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let p = partition_queries(2, 1).unwrap();
        let r = iic_loss(&q, &p, &LossConfig::default()).unwrap();
        // softmax([1, 0]) = (0.7310585786300049, 0.2689414213699951);
        // the two rows mirror each other, giving a symmetric KL of
        // 0.9242343145200195 on both ordered intra pairs.
        assert!((r.value - 0.9242343145200195).abs() < 1e-12);
        assert_eq!(r.warnings, vec![LossWarning::NoInterClassPairs]);
    }

    #[test]
    fn iic_goes_negative_for_compact_separated_classes() {
        // Intra pairs are identical (divergence 0) while every inter pair
        // diverges, so the intra-minus-inter gap is negative.
        let q = Matrix::from_rows(&[
            vec![1.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, 1.0],
        ])
        .unwrap();
        let p = partition_queries(4, 2).unwrap();
        let r = iic_loss(&q, &p, &LossConfig::default()).unwrap();
        assert!(r.value < 0.0);
    }

    #[test]
    fn iic_dimension_one_degenerates() {
        let q = Matrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        let p = partition_queries(2, 1).unwrap();
        let r = iic_loss(&q, &p, &LossConfig::default()).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.warnings, vec![LossWarning::DegenerateDimension]);
        assert!(r.gradient.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn infonce_uniform_logits_give_log_n_minus_one() {
        let q = Matrix::from_rows(&[
            vec![0.3, 0.4],
            vec![0.3, 0.4],
            vec![0.3, 0.4],
            vec![0.3, 0.4],
        ])
        .unwrap();
        let p = partition_queries(4, 2).unwrap();
        let r = infonce_loss(&q, &p, &LossConfig::default()).unwrap();
        assert!((r.value - 3.0_f64.ln()).abs() < 1e-12);
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn infonce_excludes_anchors_without_positives() {
        let q = pairwise_half_queries();
        let p = partition_queries(3, 2).unwrap();
        let r = infonce_loss(&q, &p, &LossConfig::default()).unwrap();
        assert_eq!(r.warnings, vec![LossWarning::AnchorsWithoutPositives { count: 1 }]);
        // Anchors 0 and 1 each contribute -log(e^5 / (e^5 + e^5)) = log 2
        // at temperature 0.1 with both similarities 0.5.
        assert!((r.value - 0.6931471805599453).abs() < 1e-12);
    }

    #[test]
    fn infonce_all_singletons_is_zero_with_warnings() {
        let q = pairwise_half_queries();
        let p = partition_queries(3, 3).unwrap();
        let r = infonce_loss(&q, &p, &LossConfig::default()).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.warnings.contains(&LossWarning::AnchorsWithoutPositives { count: 3 }));
        assert!(r.warnings.contains(&LossWarning::NoIntraClassPairs));
    }
}
