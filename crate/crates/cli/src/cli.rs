//! Command-line interface definition.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Experiment driver for contrastive query-distribution control.
#[derive(Debug, Parser)]
#[command(name = "mmcl", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// The available subcommands.
#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate a loss on a query set; writes eval_loss.json.
    EvalLoss(CommonArgs),
    /// Run gradient descent on a query matrix; writes optimize*.csv,
    /// final_queries*.csv, and optimize_summary.json.
    Optimize(CommonArgs),
    /// Train the detection surrogate; writes train_trace*.csv and
    /// train_summary.json.
    TrainSurrogate(TrainArgs),
    /// Verify analytic gradients against finite differences; writes
    /// gradcheck.json and fails when any loss exceeds the tolerance.
    Gradcheck(CommonArgs),
    /// Report distribution metrics of a query set; writes metrics.json.
    Metrics(CommonArgs),
    /// Print the configuration schema as JSON.
    Schema,
}

/// Flags shared by every experiment subcommand.
#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Configuration file (INI-style; `mmcl schema` lists the keys).
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Root seed; every random stream is derived from it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Output directory (overrides the [output] dir key).
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Loss override: ime, imc, mmcl, npair, oca, iic, or infonce.
    #[arg(long)]
    pub loss: Option<String>,

    /// Sweep one numeric key over several values, e.g.
    /// --sweep loss.margin=1e-4,1e-2 (unsupported for gradcheck/metrics).
    #[arg(long)]
    pub sweep: Option<String>,
}

/// Flags of `train-surrogate`.
#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,

    /// Train twice from identical initialization and scene streams: once
    /// with the configured contrastive targets, once without any.
    #[arg(long)]
    pub paired: bool,
}
