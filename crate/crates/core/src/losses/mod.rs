//! Contrastive losses over a partitioned query matrix.
//!
//! All losses consume a [`QueryMatrix`] (one embedding per row) together
//! with a [`PartitionSpec`] assigning each row to a class group, and all
//! return the scalar value plus its analytic gradient with respect to
//! every query coordinate.
//!
//! Unless a loss states otherwise, pairwise similarity is the truncated
//! cosine `s = max(0, cos)`; gradients flow through `s` only where the
//! truncation (and, where applicable, the clamp guarding a logarithm) is
//! inactive.  Inputs that admit no pairs of the required kind produce a
//! zero value, a zero gradient, and a warning instead of an error.

mod baselines;
mod mmcl;

pub use baselines::{iic_loss, infonce_loss, npair_loss, oca_loss};
pub use mmcl::{
    ime_loss, imc_loss, margin_mask, mmcl_loss, rank_weights, ClassMask, ClassRanking,
    MarginMask, RankWeightMatrix, RankedPair,
};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, QueryMatrix};
use crate::partition::PartitionSpec;

/// Hyperparameters shared by the loss family.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossConfig {
    /// Margin `m` of the compactness mask: ranked pairs whose weighted
    /// penalty falls below it are considered satisfied and drop out.
    pub margin: f64,
    /// Weight of the compactness term in the combined loss.
    pub gamma: f64,
    /// Weight of the separation term in the combined loss.
    pub eta: f64,
    /// Decay rate of the rank weights `w = exp(-alpha * rank)`.
    pub alpha: f64,
    /// Similarity threshold of the occlusion-aware denominator term.
    pub tau: f64,
    /// Softmax temperature of the noise-contrastive loss.
    pub temperature: f64,
    /// Clamp distance keeping similarities away from 0 and 1 inside
    /// logarithms.
    pub eps_clamp: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            margin: 0.01,
            gamma: 1.0,
            eta: 0.5,
            alpha: 0.25,
            tau: 0.5,
            temperature: 0.1,
            eps_clamp: 1e-7,
        }
    }
}

impl LossConfig {
    /// Checks that every hyperparameter is finite and in range.
    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, v: f64, ok: bool| -> Result<()> {
            if !v.is_finite() || !ok {
                return Err(Error::InvalidConfig(format!("{name} = {v} is out of range")));
            }
            Ok(())
        };
        check("margin", self.margin, self.margin > 0.0)?;
        check("gamma", self.gamma, self.gamma >= 0.0)?;
        check("eta", self.eta, self.eta >= 0.0)?;
        check("alpha", self.alpha, self.alpha >= 0.0)?;
        check("tau", self.tau, true)?;
        check("temperature", self.temperature, self.temperature > 0.0)?;
        check("eps_clamp", self.eps_clamp, self.eps_clamp > 0.0 && self.eps_clamp < 0.1)?;
        Ok(())
    }
}

/// Conditions under which a loss degenerates but remains well-defined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LossWarning {
    /// No ordered pair of queries from different groups exists.
    NoInterClassPairs,
    /// No ordered pair of queries from the same group exists.
    NoIntraClassPairs,
    /// The embedding dimension is 1, so row distributions are constant.
    DegenerateDimension,
    /// Anchors without a positive were excluded from the mean.
    AnchorsWithoutPositives {
        /// How many anchors were excluded.
        count: usize,
    },
}

impl std::fmt::Display for LossWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::NoInterClassPairs => write!(f, "no inter-class pairs"),
            Self::NoIntraClassPairs => write!(f, "no intra-class pairs"),
            Self::DegenerateDimension => write!(f, "dimension 1 yields constant distributions"),
            Self::AnchorsWithoutPositives { count } => {
                write!(f, "{count} anchor(s) without positives excluded")
            }
        }
    }
}

/// Value, gradient, and warnings of one loss evaluation.
#[derive(Debug, Clone)]
pub struct LossResult {
    /// Scalar loss value.
    pub value: f64,
    /// Gradient with respect to every query coordinate, same shape as the
    /// query matrix.
    pub gradient: Matrix,
    /// Degeneracies encountered during evaluation.
    pub warnings: Vec<LossWarning>,
}

impl LossResult {
    pub(crate) fn zero(q: &QueryMatrix, warnings: Vec<LossWarning>) -> Self {
        Self { value: 0.0, gradient: Matrix::zeros(q.rows(), q.cols()), warnings }
    }

    pub(crate) fn check_finite(self, context: &str) -> Result<Self> {
        if !self.value.is_finite() || !self.gradient.is_finite() {
            return Err(Error::NonFinite { context: context.to_string() });
        }
        Ok(self)
    }
}

/// The losses understood by the experiment commands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// Inter-class separation: `-mean log(1 - s)` over inter-class pairs.
    Ime,
    /// Intra-class compactness with rank weights and a margin mask.
    Imc,
    /// Weighted combination `gamma * imc + eta * ime`.
    Mmcl,
    /// Softplus of negative-minus-positive similarity over pair products.
    NPair,
    /// Softmax contrast with a threshold-gated extra denominator term.
    Oca,
    /// Symmetric-KL gap between intra- and inter-class row distributions.
    Iic,
    /// Temperature-scaled noise-contrastive estimation over positives.
    InfoNce,
}

impl LossKind {
    /// Every loss, in canonical order.
    pub const ALL: [LossKind; 7] = [
        LossKind::Ime,
        LossKind::Imc,
        LossKind::Mmcl,
        LossKind::NPair,
        LossKind::Oca,
        LossKind::Iic,
        LossKind::InfoNce,
    ];

    /// Canonical lowercase name.
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Ime => "ime",
            LossKind::Imc => "imc",
            LossKind::Mmcl => "mmcl",
            LossKind::NPair => "npair",
            LossKind::Oca => "oca",
            LossKind::Iic => "iic",
            LossKind::InfoNce => "infonce",
        }
    }

    /// Parses a canonical name.
    pub fn parse(name: &str) -> Option<LossKind> {
        LossKind::ALL.iter().copied().find(|k| k.name() == name)
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Evaluates `kind` on `q` under the partition `p`.
pub fn evaluate(
    kind: LossKind,
    q: &QueryMatrix,
    p: &PartitionSpec,
    cfg: &LossConfig,
) -> Result<LossResult> {
    match kind {
        LossKind::Ime => ime_loss(q, p, cfg),
        LossKind::Imc => imc_loss(q, p, cfg),
        LossKind::Mmcl => mmcl_loss(q, p, cfg),
        LossKind::NPair => npair_loss(q, p, cfg),
        LossKind::Oca => oca_loss(q, p, cfg),
        LossKind::Iic => iic_loss(q, p, cfg),
        LossKind::InfoNce => infonce_loss(q, p, cfg),
    }
}

/// Validates that the query matrix matches the partition and is finite.
pub(crate) fn validate_inputs(
    q: &QueryMatrix,
    p: &PartitionSpec,
    cfg: &LossConfig,
) -> Result<()> {
    cfg.validate()?;
    if q.rows() != p.total_queries() {
        return Err(Error::InvalidInput(format!(
            "query matrix has {} rows but the partition covers {}",
            q.rows(),
            p.total_queries()
        )));
    }
    if !q.is_finite() {
        return Err(Error::InvalidInput("query matrix contains non-finite entries".into()));
    }
    Ok(())
}

/// All ordered pairs `(a, b)`, `a != b`, with `a` and `b` in the same group.
pub(crate) fn ordered_intra_pairs(p: &PartitionSpec) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for k in 0..p.classes() {
        let members = p.members(k);
        for i in members.clone() {
            for j in members.clone() {
                if i != j {
                    pairs.push((i, j));
                }
            }
        }
    }
    pairs
}

/// All ordered pairs `(a, b)` with `a` and `b` in different groups.
pub(crate) fn ordered_inter_pairs(p: &PartitionSpec) -> Vec<(usize, usize)> {
    let n = p.total_queries();
    let mut pairs = Vec::new();
    for a in 0..n {
        for b in 0..n {
            if a != b && !p.same_group(a, b) {
                pairs.push((a, b));
            }
        }
    }
    pairs
}

/// Derivative factor of the truncation `s = max(0, cos)`: gradients pass
/// only where the similarity is strictly positive (a stored `s == 0` means
/// the raw cosine was non-positive, or the pair involved a zero row).
#[inline]
pub(crate) fn truncation_factor(s: f64) -> f64 {
    if s > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Compensated (Neumaier) summation for loss values.
///
/// The pair-product losses average up to ~10^5 terms; a plain running sum
/// accumulates rounding noise proportional to the sum's magnitude, which
/// is large enough to pollute central-difference probes of the value.
/// Compensation keeps the total accurate to a few ulps regardless of the
/// term count.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    #[inline]
    pub(crate) fn add(&mut self, term: f64) {
        let t = self.sum + term;
        if self.sum.abs() >= term.abs() {
            self.compensation += (self.sum - t) + term;
        } else {
            self.compensation += (term - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub(crate) fn total(&self) -> f64 {
        self.sum + self.compensation
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::partition_queries;

    #[test]
    fn config_validation_rejects_bad_values() {
        let mut cfg = LossConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.margin = 0.0;
        assert!(cfg.validate().is_err());
        cfg = LossConfig { temperature: -1.0, ..LossConfig::default() };
        assert!(cfg.validate().is_err());
        cfg = LossConfig { eps_clamp: 0.0, ..LossConfig::default() };
        assert!(cfg.validate().is_err());
        cfg = LossConfig { gamma: f64::NAN, ..LossConfig::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn loss_kind_names_round_trip() {
        for kind in LossKind::ALL {
            assert_eq!(LossKind::parse(kind.name()), Some(kind));
        }
        assert_eq!(LossKind::parse("unknown"), None);
    }

    #[test]
    fn pair_enumeration_counts() {
        let p = partition_queries(10, 3).unwrap();
        // Group sizes 4, 3, 3: intra ordered pairs = 12 + 6 + 6.
        assert_eq!(ordered_intra_pairs(&p).len(), 24);
        // Total ordered pairs = 90, so inter = 90 - 24.
        assert_eq!(ordered_inter_pairs(&p).len(), 66);
    }

    #[test]
    fn mismatched_inputs_are_rejected() {
        let q = Matrix::zeros(4, 2);
        let p = partition_queries(5, 2).unwrap();
        assert!(validate_inputs(&q, &p, &LossConfig::default()).is_err());
    }
}
