//! Central-difference verification of the analytic loss gradients.
//!
//! [`finite_difference_gradient`] probes a single instance coordinate by
//! coordinate.  [`verify_gradient`] runs a randomized trial suite: each
//! trial samples a query matrix and partition, rejects instances whose
//! similarities sit close to a non-differentiable boundary (truncation
//! kinks, clamp edges, rank ties, mask and threshold flips), and compares
//! the analytic gradient against central differences coordinate-wise.
//!
//! The comparison reports `|analytic - numeric|` relative to
//! `max(|analytic|, |numeric|, 1e-3)`; the absolute floor keeps roundoff
//! noise on near-zero coordinates from masquerading as relative error.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, Matrix, QueryMatrix};
use crate::losses::{evaluate, rank_weights, LossConfig, LossKind};
use crate::partition::{partition_queries, PartitionSpec};
use crate::seeds;

/// Default step for direct finite-difference probes.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Step used by the trial harness.  Smaller than the probe default so the
/// stencil stays well inside the plateaus guaranteed by resampling.
pub const VERIFY_STEP: f64 = 1e-6;

/// Denominator floor of the relative-error metric.
pub const REL_ERROR_FLOOR: f64 = 1e-3;

/// Attempts allowed when resampling an instance away from boundaries.
pub const RESAMPLE_BUDGET: usize = 100;

/// Raw cosines closer to the truncation kink than this force a resample.
const KINK_MARGIN: f64 = 1e-4;

/// Similarities within this distance of 0 or 1 force a resample for the
/// losses that take logarithms of (one minus) the similarity: beyond the
/// clamp edges themselves, the log curvature there exceeds what a central
/// difference can track at the verification tolerance.
const CURVE_MARGIN: f64 = 2e-3;

/// Weighted penalties within this distance of the margin force a resample
/// (the mask would flip inside the stencil).
const MASK_MARGIN: f64 = 1e-4;

/// Positive similarities within this distance of the threshold force a
/// resample for the threshold-gated loss.
const THRESHOLD_MARGIN: f64 = 1e-4;

/// Outcome of a gradient-verification suite for one loss.
#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    /// The loss that was verified.
    pub loss: LossKind,
    /// Number of accepted trial instances.
    pub trials: usize,
    /// Finite-difference step used.
    pub step: f64,
    /// Pass threshold on the relative error.
    pub tolerance: f64,
    /// Largest relative error over all trials and coordinates.
    pub max_rel_error: f64,
    /// Largest absolute error over all trials and coordinates.
    pub max_abs_error: f64,
    /// Trial index of the worst coordinate.
    pub worst_trial: usize,
    /// `(row, column)` of the worst coordinate.
    pub worst_coordinate: [usize; 2],
    /// Instances rejected for sitting too close to a boundary.
    pub resamples: usize,
    /// True when `max_rel_error` is strictly below the tolerance.
    pub passed: bool,
}

/// Central-difference gradient of `kind` at `q`: every coordinate is
/// probed with `(L(x + step) - L(x - step)) / (2 step)`.
///
/// `step` must lie in `[1e-8, 1e-2]`.
pub fn finite_difference_gradient(
    kind: LossKind,
    q: &QueryMatrix,
    p: &PartitionSpec,
    cfg: &LossConfig,
    step: f64,
) -> Result<Matrix> {
    if !(1e-8..=1e-2).contains(&step) {
        return Err(Error::InvalidConfig(format!(
            "finite-difference step {step} outside [1e-8, 1e-2]"
        )));
    }
    let mut probe = q.clone();
    let mut grad = Matrix::zeros(q.rows(), q.cols());
    for r in 0..q.rows() {
        for c in 0..q.cols() {
            let orig = probe.get(r, c);
            probe.set(r, c, orig + step);
            let plus = probed_value(kind, &probe, p, cfg, r, c)?;
            probe.set(r, c, orig - step);
            let minus = probed_value(kind, &probe, p, cfg, r, c)?;
            probe.set(r, c, orig);
            let fd = (plus - minus) / (2.0 * step);
            if !fd.is_finite() {
                return Err(Error::ProbeFailure {
                    row: r,
                    col: c,
                    detail: format!("non-finite quotient from values {plus} and {minus}"),
                });
            }
            grad.set(r, c, fd);
        }
    }
    Ok(grad)
}

fn probed_value(
    kind: LossKind,
    q: &QueryMatrix,
    p: &PartitionSpec,
    cfg: &LossConfig,
    row: usize,
    col: usize,
) -> Result<f64> {
    match evaluate(kind, q, p, cfg) {
        Ok(result) => Ok(result.value),
        Err(e) => Err(Error::ProbeFailure { row, col, detail: e.to_string() }),
    }
}

/// Runs the randomized verification suite for `kind` with the default
/// step ([`VERIFY_STEP`]).
pub fn verify_gradient(
    kind: LossKind,
    trials: usize,
    seed: u64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    verify_gradient_with_step(kind, trials, seed, tolerance, VERIFY_STEP)
}

/// Runs the randomized verification suite with an explicit step.
pub fn verify_gradient_with_step(
    kind: LossKind,
    trials: usize,
    seed: u64,
    tolerance: f64,
    step: f64,
) -> Result<GradCheckReport> {
    if trials == 0 {
        return Err(Error::InvalidConfig("gradient verification needs at least one trial".into()));
    }
    if !tolerance.is_finite() || tolerance < 0.0 {
        return Err(Error::InvalidConfig(format!("tolerance {tolerance} must be non-negative")));
    }
    let cfg = LossConfig::default();
    let mut report = GradCheckReport {
        loss: kind,
        trials,
        step,
        tolerance,
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst_trial: 0,
        worst_coordinate: [0, 0],
        resamples: 0,
        passed: false,
    };
    for trial in 0..trials {
        let instance = sample_accepted_instance(kind, seed, trial, &cfg, step, &mut report)?;
        let analytic = evaluate(kind, &instance.q, &instance.p, &cfg)?;
        let numeric = finite_difference_gradient(kind, &instance.q, &instance.p, &cfg, step)?;
        for r in 0..instance.q.rows() {
            for c in 0..instance.q.cols() {
                let a = analytic.gradient.get(r, c);
                let f = numeric.get(r, c);
                let abs = (a - f).abs();
                let rel = abs / a.abs().max(f.abs()).max(REL_ERROR_FLOOR);
                if abs > report.max_abs_error {
                    report.max_abs_error = abs;
                }
                if rel > report.max_rel_error {
                    report.max_rel_error = rel;
                    report.worst_trial = trial;
                    report.worst_coordinate = [r, c];
                }
            }
        }
    }
    report.passed = report.max_rel_error < tolerance;
    Ok(report)
}

struct Instance {
    q: QueryMatrix,
    p: PartitionSpec,
}

fn sample_accepted_instance(
    kind: LossKind,
    seed: u64,
    trial: usize,
    cfg: &LossConfig,
    step: f64,
    report: &mut GradCheckReport,
) -> Result<Instance> {
    for attempt in 0..RESAMPLE_BUDGET {
        let index = (trial * RESAMPLE_BUDGET + attempt) as u64;
        let sub_seed = seeds::derive(seed, seeds::stream::GRADCHECK, index);
        let instance = sample_instance(sub_seed);
        if !near_boundary(kind, &instance, cfg, step) {
            return Ok(instance);
        }
        report.resamples += 1;
    }
    Err(Error::InvalidConfig(format!(
        "trial {trial} for {kind} exhausted the {RESAMPLE_BUDGET}-attempt resampling budget"
    )))
}

/// Samples a unit-row query matrix and a compatible partition.
///
/// The minimum dimension grows with the query count: in low dimensions a
/// large random instance almost always contains a near-boundary pair, so
/// resampling would thrash.
fn sample_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = rng.random_range(4..=30);
    let d_min = match n {
        0..=8 => 2,
        9..=16 => 4,
        17..=24 => 6,
        _ => 8,
    };
    let d = rng.random_range(d_min..=16usize);
    let k = rng.random_range(2..=5.min(n));
    let mut q = Matrix::zeros(n, d);
    for r in 0..n {
        loop {
            let row = q.row_mut(r);
            for v in row.iter_mut() {
                *v = rng.sample::<f64, _>(rand_distr::StandardNormal);
            }
            let len = norm(q.row(r));
            if len > 1e-6 {
                let row = q.row_mut(r);
                for v in row.iter_mut() {
                    *v /= len;
                }
                break;
            }
        }
    }
    let p = partition_queries(n, k).expect("sampled n >= k");
    Instance { q, p }
}

/// True when any quantity the loss is non-smooth in sits within a margin
/// of its boundary, so a central difference across it would be invalid.
fn near_boundary(kind: LossKind, instance: &Instance, cfg: &LossConfig, step: f64) -> bool {
    if kind == LossKind::Iic {
        // Softmax distributions are smooth everywhere.
        return false;
    }
    let q = &instance.q;
    let p = &instance.p;
    let n = q.rows();
    // Rows are unit-norm by construction, so the dot product is the cosine.
    let mut cos = Matrix::zeros(n, n);
    for a in 0..n {
        for b in (a + 1)..n {
            let c = dot(q.row(a), q.row(b));
            cos.set(a, b, c);
            cos.set(b, a, c);
        }
    }
    for a in 0..n {
        for b in (a + 1)..n {
            // Truncation kink at cosine 0 affects every similarity consumer.
            if cos.get(a, b).abs() < KINK_MARGIN {
                return true;
            }
        }
    }
    let log_losses = matches!(kind, LossKind::Ime | LossKind::Imc | LossKind::Mmcl);
    if log_losses {
        for a in 0..n {
            for b in (a + 1)..n {
                let c = cos.get(a, b);
                let intra = p.same_group(a, b);
                // log(1 - s) curvature near 1 (inter pairs) and log(s)
                // curvature near 0 plus both clamp edges (intra pairs).
                if !intra && matches!(kind, LossKind::Ime | LossKind::Mmcl) && c > 1.0 - CURVE_MARGIN
                {
                    return true;
                }
                if intra
                    && matches!(kind, LossKind::Imc | LossKind::Mmcl)
                    && (c > 1.0 - CURVE_MARGIN || (0.0 < c && c < CURVE_MARGIN))
                {
                    return true;
                }
            }
        }
    }
    if matches!(kind, LossKind::Imc | LossKind::Mmcl) {
        let sim = crate::linalg::cosine_similarity(q);
        let ranking = rank_weights(&sim, p, cfg.alpha);
        for class in &ranking.classes {
            // A perturbation moves each similarity by at most ~2 * step, so
            // distinct similarities closer than that could swap ranks.
            let tie_margin = (6.0 * step).max(6e-6);
            for x in 0..class.pairs.len() {
                for y in (x + 1)..class.pairs.len() {
                    let sx = class.pairs[x].similarity;
                    let sy = class.pairs[y].similarity;
                    if sx != sy && (sx - sy).abs() < tie_margin {
                        return true;
                    }
                }
            }
            // A mask flip inside the stencil shows up as a step in the
            // probed values, so reject penalties near the margin.
            for pair in &class.pairs {
                let clamped = pair.similarity.clamp(cfg.eps_clamp, 1.0 - cfg.eps_clamp);
                let penalty = -pair.weight * clamped.ln();
                if (penalty - cfg.margin).abs() < MASK_MARGIN {
                    return true;
                }
            }
        }
    }
    if kind == LossKind::Oca {
        for a in 0..n {
            for b in (a + 1)..n {
                if p.same_group(a, b) && (cos.get(a, b) - cfg.tau).abs() < THRESHOLD_MARGIN {
                    return true;
                }
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probe_step_is_range_checked() {
        let q = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap();
        let p = partition_queries(2, 1).unwrap();
        let cfg = LossConfig::default();
        assert!(finite_difference_gradient(LossKind::Ime, &q, &p, &cfg, 1e-9).is_err());
        assert!(finite_difference_gradient(LossKind::Ime, &q, &p, &cfg, 0.1).is_err());
        assert!(finite_difference_gradient(LossKind::Ime, &q, &p, &cfg, 1e-5).is_ok());
    }

    #[test]
    fn every_loss_passes_a_short_suite() {
        for kind in LossKind::ALL {
            let report = verify_gradient(kind, 4, 20240, 1e-5).unwrap();
            assert!(
                report.passed,
                "{kind}: max rel error {} at trial {} coordinate {:?}",
                report.max_rel_error, report.worst_trial, report.worst_coordinate
            );
        }
    }

    #[test]
    fn zero_tolerance_fails_on_noise() {
        let report = verify_gradient(LossKind::Ime, 2, 7, 0.0).unwrap();
        assert!(!report.passed);
    }

    #[test]
    fn suite_is_deterministic() {
        let a = verify_gradient(LossKind::Mmcl, 3, 99, 1e-5).unwrap();
        let b = verify_gradient(LossKind::Mmcl, 3, 99, 1e-5).unwrap();
        assert_eq!(a.max_rel_error, b.max_rel_error);
        assert_eq!(a.resamples, b.resamples);
        assert_eq!(a.worst_coordinate, b.worst_coordinate);
    }

    #[test]
    fn rejects_zero_trials_and_bad_tolerance() {
        assert!(verify_gradient(LossKind::Ime, 0, 1, 1e-5).is_err());
        assert!(verify_gradient(LossKind::Ime, 1, 1, f64::NAN).is_err());
    }
}
