//! Command-line frontend for the contrastive query-distribution
//! toolkit.  The binary is a thin wrapper over [`run`], so integration
//! tests drive the exact code path the executable uses.

pub mod cli;
pub mod commands;
pub mod config;
pub mod fmt;

pub use cli::{Cli, Command, CommonArgs, TrainArgs};

use commands::Context;
use mmcl_core::Result;

/// Executes a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::EvalLoss(args) => commands::eval_loss::run(&Context::new(&args)?, &args.sweep),
        Command::Optimize(args) => commands::optimize::run(&Context::new(&args)?, &args.sweep),
        Command::TrainSurrogate(args) => commands::train::run(
            &Context::new(&args.common)?,
            &args.common.sweep,
            args.paired,
        ),
        Command::Gradcheck(args) => commands::gradcheck::run(&Context::new(&args)?, &args.sweep),
        Command::Metrics(args) => commands::metrics::run(&Context::new(&args)?, &args.sweep),
        Command::Schema => commands::schema::run(),
    }
}
