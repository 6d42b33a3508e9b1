//! `mmcl eval-loss`: evaluate one loss on a query set.

use serde::Serialize;

use mmcl_core::losses::{evaluate, LossKind, LossWarning};
use mmcl_core::Result;

use crate::commands::{build_queries, plan_runs, write_artifact, Context, QueryShape};
use crate::config::AppConfig;
use crate::fmt;

#[derive(Serialize)]
struct EvalResult {
    loss: LossKind,
    queries: QueryShape,
    value: f64,
    gradient_frobenius: f64,
    warnings: Vec<LossWarning>,
}

#[derive(Serialize)]
struct SweepEntry {
    value: String,
    result: EvalResult,
}

#[derive(Serialize)]
struct SweepResult {
    sweep: String,
    entries: Vec<SweepEntry>,
}

fn evaluate_once(cfg: &AppConfig, seed: u64) -> Result<EvalResult> {
    let (q, p) = build_queries(&cfg.queries, seed)?;
    let result = evaluate(cfg.loss.kind, &q, &p, &cfg.loss.params)?;
    Ok(EvalResult {
        loss: cfg.loss.kind,
        queries: QueryShape { count: q.rows(), dim: q.cols(), classes: p.classes() },
        value: result.value,
        gradient_frobenius: result.gradient.frobenius_norm(),
        warnings: result.warnings,
    })
}

/// Runs the command; writes `eval_loss.json`.
pub fn run(ctx: &Context, sweep: &Option<String>) -> Result<i32> {
    let plan = plan_runs(&ctx.cfg, sweep)?;
    let json = match &plan.sweep_key {
        Some(key) => {
            let mut entries = Vec::new();
            for variant in &plan.runs {
                entries.push(SweepEntry {
                    value: variant.value.clone().expect("swept runs carry their token"),
                    result: evaluate_once(&variant.cfg, ctx.seed)?,
                });
            }
            fmt::to_json(&SweepResult { sweep: key.clone(), entries })
        }
        None => fmt::to_json(&evaluate_once(&plan.runs[0].cfg, ctx.seed)?),
    };
    write_artifact(&ctx.out_dir, "eval_loss.json", &json)?;
    Ok(0)
}
