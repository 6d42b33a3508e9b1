//! `mmcl optimize`: gradient descent on the query matrix.

use serde::Serialize;

use mmcl_core::descent::{run_descent, run_descent_from, DescentConfig, DescentRecord, InitMode};
use mmcl_core::losses::LossKind;
use mmcl_core::Result;

use crate::commands::{plan_runs, read_query_csv, render_query_csv, write_artifact, Context};
use crate::config::AppConfig;
use crate::fmt;

#[derive(Serialize)]
struct RunSummary {
    loss: LossKind,
    init: InitMode,
    iterations: usize,
    learning_rate: f64,
    final_record: DescentRecord,
}

#[derive(Serialize)]
struct SweepEntry {
    value: String,
    summary: RunSummary,
}

#[derive(Serialize)]
struct SweepSummary {
    sweep: String,
    entries: Vec<SweepEntry>,
}

fn trajectory_csv(records: &[DescentRecord]) -> String {
    let mut out =
        String::from("iteration,loss,homogeneity,inter_class_similarity,margin_satisfaction\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.iteration,
            fmt::float(r.loss),
            fmt::opt_float(r.homogeneity),
            fmt::opt_float(r.inter_class_similarity),
            fmt::opt_float(r.margin_satisfaction),
        ));
    }
    out
}

fn run_once(ctx: &Context, cfg: &AppConfig, suffix: &str) -> Result<RunSummary> {
    let mut dcfg = DescentConfig {
        loss: cfg.loss.kind,
        iterations: cfg.optimize.iterations,
        learning_rate: cfg.optimize.learning_rate,
        queries: cfg.queries.count,
        dim: cfg.queries.dim,
        classes: cfg.queries.classes,
        init: cfg.queries.init,
        seed: ctx.seed,
        loss_cfg: cfg.loss.params.clone(),
    };
    let outcome = match &cfg.queries.matrix {
        Some(path) => {
            let q = read_query_csv(path)?;
            dcfg.queries = q.rows();
            dcfg.dim = q.cols();
            run_descent_from(q, &dcfg)?
        }
        None => run_descent(&dcfg)?,
    };
    write_artifact(
        &ctx.out_dir,
        &format!("optimize{suffix}.csv"),
        &trajectory_csv(&outcome.trajectory),
    )?;
    write_artifact(
        &ctx.out_dir,
        &format!("final_queries{suffix}.csv"),
        &render_query_csv(&outcome.final_queries),
    )?;
    Ok(RunSummary {
        loss: dcfg.loss,
        init: dcfg.init,
        iterations: dcfg.iterations,
        learning_rate: dcfg.learning_rate,
        final_record: outcome.trajectory.last().expect("trajectory is never empty").clone(),
    })
}

/// Runs the command; writes `optimize*.csv`, `final_queries*.csv`, and
/// `optimize_summary.json`.
pub fn run(ctx: &Context, sweep: &Option<String>) -> Result<i32> {
    let plan = plan_runs(&ctx.cfg, sweep)?;
    let json = match &plan.sweep_key {
        Some(key) => {
            let mut entries = Vec::new();
            for variant in &plan.runs {
                entries.push(SweepEntry {
                    value: variant.value.clone().expect("swept runs carry their token"),
                    summary: run_once(ctx, &variant.cfg, &variant.suffix)?,
                });
            }
            fmt::to_json(&SweepSummary { sweep: key.clone(), entries })
        }
        None => fmt::to_json(&run_once(ctx, &plan.runs[0].cfg, "")?),
    };
    write_artifact(&ctx.out_dir, "optimize_summary.json", &json)?;
    Ok(0)
}
