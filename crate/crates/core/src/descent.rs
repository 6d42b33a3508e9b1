//! Plain gradient descent directly on a query matrix.
//!
//! This is the engine behind the `optimize` command: it initializes a
//! query matrix (random or collapsed onto one direction), repeatedly steps
//! against a chosen loss gradient, and records the distribution metrics at
//! every iterate, so the trajectory of homogeneity and inter-class
//! similarity under each loss can be compared.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, QueryMatrix};
use crate::losses::{evaluate, LossConfig, LossKind};
use crate::metrics;
use crate::partition::{partition_queries, PartitionSpec};
use crate::seeds;

/// Losses larger than this abort the run as diverged.
pub const DIVERGENCE_GUARD: f64 = 1e12;

/// How the query matrix is initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// Independent standard-normal coordinates.
    Random,
    /// All rows near one random unit direction (plus 1% relative noise).
    Collapsed,
}

impl InitMode {
    /// Parses `"random"` or `"collapsed"`.
    pub fn parse(name: &str) -> Option<InitMode> {
        match name {
            "random" => Some(InitMode::Random),
            "collapsed" => Some(InitMode::Collapsed),
            _ => None,
        }
    }

    /// Canonical lowercase name.
    pub fn name(self) -> &'static str {
        match self {
            InitMode::Random => "random",
            InitMode::Collapsed => "collapsed",
        }
    }
}

/// Configuration of a descent run.
#[derive(Debug, Clone)]
pub struct DescentConfig {
    /// Loss to minimize.
    pub loss: LossKind,
    /// Number of gradient steps.
    pub iterations: usize,
    /// Step size.
    pub learning_rate: f64,
    /// Number of query rows.
    pub queries: usize,
    /// Embedding dimension.
    pub dim: usize,
    /// Number of partition groups.
    pub classes: usize,
    /// Initialization mode.
    pub init: InitMode,
    /// Root seed for the initialization.
    pub seed: u64,
    /// Loss hyperparameters.
    pub loss_cfg: LossConfig,
}

impl DescentConfig {
    fn validate(&self) -> Result<()> {
        self.loss_cfg.validate()?;
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Metrics of one iterate.  Row `iteration = t` describes the state after
/// `t` gradient steps; row 0 is the initialization.
#[derive(Debug, Clone, Serialize)]
pub struct DescentRecord {
    /// Number of steps taken so far.
    pub iteration: usize,
    /// Loss value at this iterate.
    pub loss: f64,
    /// Intra-class mean similarity.
    pub homogeneity: Option<f64>,
    /// Inter-class mean similarity.
    pub inter_class_similarity: Option<f64>,
    /// Fraction of ranked pairs satisfying the margin.
    pub margin_satisfaction: Option<f64>,
}

/// Trajectory and final state of a descent run.
#[derive(Debug, Clone)]
pub struct DescentOutcome {
    /// One record per iterate, `iterations + 1` in total.
    pub trajectory: Vec<DescentRecord>,
    /// Query matrix after the last step.
    pub final_queries: Matrix,
}

/// Draws an initial query matrix.
pub fn init_queries(mode: InitMode, queries: usize, dim: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(seed, seeds::stream::QUERY_INIT, 0));
    let mut q = Matrix::zeros(queries, dim);
    match mode {
        InitMode::Random => {
            for v in q.data_mut() {
                *v = rng.sample::<f64, _>(rand_distr::StandardNormal);
            }
        }
        InitMode::Collapsed => {
            let mut anchor: Vec<f64> =
                (0..dim).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
            let len = crate::linalg::norm(&anchor).max(crate::linalg::NORM_EPSILON);
            for v in &mut anchor {
                *v /= len;
            }
            for r in 0..queries {
                let row = q.row_mut(r);
                for (d, slot) in row.iter_mut().enumerate() {
                    let noise: f64 = rng.sample(rand_distr::StandardNormal);
                    *slot = anchor[d] + 0.01 * noise;
                }
            }
        }
    }
    q
}

/// Runs gradient descent from a fresh initialization.
pub fn run_descent(cfg: &DescentConfig) -> Result<DescentOutcome> {
    cfg.validate()?;
    let q0 = init_queries(cfg.init, cfg.queries, cfg.dim, cfg.seed);
    run_descent_from(q0, cfg)
}

/// Runs gradient descent from a caller-supplied query matrix.
pub fn run_descent_from(mut q: QueryMatrix, cfg: &DescentConfig) -> Result<DescentOutcome> {
    cfg.validate()?;
    if q.rows() != cfg.queries || q.cols() != cfg.dim {
        return Err(Error::InvalidInput(format!(
            "initial matrix is {}x{}, config expects {}x{}",
            q.rows(),
            q.cols(),
            cfg.queries,
            cfg.dim
        )));
    }
    let p: PartitionSpec = partition_queries(cfg.queries, cfg.classes)?;
    let mut trajectory = Vec::with_capacity(cfg.iterations + 1);
    for step in 0..=cfg.iterations {
        let result = evaluate(cfg.loss, &q, &p, &cfg.loss_cfg)?;
        trajectory.push(DescentRecord {
            iteration: step,
            loss: result.value,
            homogeneity: metrics::homogeneity(&q, &p),
            inter_class_similarity: metrics::inter_class_similarity(&q, &p),
            margin_satisfaction: metrics::margin_satisfaction(&q, &p, &cfg.loss_cfg),
        });
        if result.value.abs() > DIVERGENCE_GUARD {
            return Err(Error::Diverged { loss: result.value });
        }
        if step < cfg.iterations {
            q.add_scaled(-cfg.learning_rate, &result.gradient);
        }
    }
    Ok(DescentOutcome { trajectory, final_queries: q })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_config(loss: LossKind, init: InitMode, seed: u64) -> DescentConfig {
        DescentConfig {
            loss,
            iterations: 150,
            learning_rate: 1.0,
            queries: 12,
            dim: 8,
            classes: 3,
            init,
            seed,
            loss_cfg: LossConfig::default(),
        }
    }

    #[test]
    fn trajectory_has_one_record_per_iterate() {
        let cfg = base_config(LossKind::Mmcl, InitMode::Random, 3);
        let out = run_descent(&cfg).unwrap();
        assert_eq!(out.trajectory.len(), cfg.iterations + 1);
        assert_eq!(out.trajectory[0].iteration, 0);
        assert_eq!(out.trajectory.last().unwrap().iteration, cfg.iterations);
    }

    #[test]
    fn combined_loss_decreases_from_random_init() {
        let cfg = base_config(LossKind::Mmcl, InitMode::Random, 11);
        let out = run_descent(&cfg).unwrap();
        let first = out.trajectory.first().unwrap().loss;
        let last = out.trajectory.last().unwrap().loss;
        assert!(last < first, "loss went {first} -> {last}");
    }

    #[test]
    fn collapsed_init_starts_homogeneous() {
        let cfg = base_config(LossKind::Mmcl, InitMode::Collapsed, 5);
        let out = run_descent(&cfg).unwrap();
        assert!(out.trajectory[0].homogeneity.unwrap() > 0.99);
    }

    #[test]
    fn runs_are_deterministic() {
        let cfg = base_config(LossKind::Mmcl, InitMode::Random, 17);
        let a = run_descent(&cfg).unwrap();
        let b = run_descent(&cfg).unwrap();
        assert_eq!(a.final_queries, b.final_queries);
        let ta: Vec<f64> = a.trajectory.iter().map(|r| r.loss).collect();
        let tb: Vec<f64> = b.trajectory.iter().map(|r| r.loss).collect();
        assert_eq!(ta, tb);
    }

    #[test]
    fn rejects_non_positive_learning_rate() {
        let mut cfg = base_config(LossKind::Ime, InitMode::Random, 1);
        cfg.learning_rate = 0.0;
        assert!(run_descent(&cfg).is_err());
    }
}
