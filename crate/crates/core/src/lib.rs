//! Contrastive losses for controlling the distribution of learnable
//! query embeddings, together with the machinery needed to study them:
//!
//! - a family of similarity-based losses over class-partitioned query
//!   sets ([`losses`]), all with hand-derived analytic gradients;
//! - a finite-difference gradient checker that avoids the losses'
//!   non-smooth regions ([`gradcheck`]);
//! - an exact rectangular assignment solver with deterministic
//!   tie-breaking ([`matcher`]);
//! - distribution metrics ([`metrics`]) and a plain gradient-descent
//!   driver over raw query matrices ([`descent`]);
//! - a small synthetic detection surrogate (scenes, decoder model,
//!   training loop) for end-to-end experiments ([`surrogate`]).
//!
//! Everything is deterministic given a root seed; see [`seeds`] for the
//! stream-derivation scheme.

pub mod descent;
pub mod error;
pub mod gradcheck;
pub mod linalg;
pub mod losses;
pub mod matcher;
pub mod metrics;
pub mod partition;
pub mod seeds;
pub mod surrogate;

pub use descent::{run_descent, DescentConfig, DescentOutcome, DescentRecord, InitMode};
pub use error::{Error, Result};
pub use gradcheck::{finite_difference_gradient, verify_gradient, GradCheckReport};
pub use linalg::{Matrix, QueryMatrix};
pub use losses::{evaluate, LossConfig, LossKind, LossResult, LossWarning};
pub use matcher::{exhaustive_assignment, solve_assignment, Assignment, CostMatrix};
pub use metrics::{group_class_consistency, metrics_report, MetricsReport};
pub use partition::{partition_queries, PartitionSpec};
