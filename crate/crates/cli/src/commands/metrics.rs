//! `mmcl metrics`: distribution metrics of a query set.

use serde::Serialize;

use mmcl_core::metrics::{metrics_report, MetricsReport};
use mmcl_core::{Error, Result};

use crate::commands::{build_queries, write_artifact, Context, QueryShape};
use crate::fmt;

#[derive(Serialize)]
struct MetricsArtifact {
    queries: QueryShape,
    report: MetricsReport,
}

/// Runs the command; writes `metrics.json`.
pub fn run(ctx: &Context, sweep: &Option<String>) -> Result<i32> {
    if sweep.is_some() {
        return Err(Error::InvalidConfig("--sweep is not supported for metrics".into()));
    }
    let (q, p) = build_queries(&ctx.cfg.queries, ctx.seed)?;
    let report = metrics_report(&q, &p, &ctx.cfg.loss.params);
    let artifact = MetricsArtifact {
        queries: QueryShape { count: q.rows(), dim: q.cols(), classes: p.classes() },
        report,
    };
    write_artifact(&ctx.out_dir, "metrics.json", &fmt::to_json(&artifact))?;
    Ok(0)
}
