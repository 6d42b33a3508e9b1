//! `mmcl train-surrogate`: train the decoder surrogate, optionally as a
//! matched pair of runs differing only in the contrastive term.

use serde::Serialize;

use mmcl_core::surrogate::{
    run_training, EpochRecord, ModelDims, SceneParams, TrainConfig,
};
use mmcl_core::Result;

use crate::commands::{plan_runs, write_artifact, Context};
use crate::config::AppConfig;
use crate::fmt;

#[derive(Serialize)]
struct ArmSummary {
    arm: String,
    contrastive_targets: Vec<usize>,
    final_epoch: EpochRecord,
}

#[derive(Serialize)]
struct TrainSummary {
    paired: bool,
    seed: u64,
    epochs: usize,
    arms: Vec<ArmSummary>,
}

#[derive(Serialize)]
struct SweepEntry {
    value: String,
    summary: TrainSummary,
}

#[derive(Serialize)]
struct SweepSummary {
    sweep: String,
    entries: Vec<SweepEntry>,
}

fn trace_csv(records: &[EpochRecord]) -> String {
    let mut out = String::from(
        "epoch,base_loss,contrastive_loss,homogeneity,inter_class_similarity,\
         group_class_consistency,detection_accuracy\n",
    );
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.epoch,
            fmt::float(r.base_loss),
            fmt::float(r.contrastive_loss),
            fmt::opt_float(r.homogeneity),
            fmt::opt_float(r.inter_class_similarity),
            fmt::opt_float(r.group_class_consistency),
            fmt::opt_float(r.detection_accuracy),
        ));
    }
    out
}

fn train_config(cfg: &AppConfig, seed: u64, targets: Vec<usize>) -> TrainConfig {
    TrainConfig {
        dims: ModelDims {
            queries: cfg.queries.count,
            dim: cfg.queries.dim,
            classes: cfg.queries.classes,
            layers: cfg.train.layers,
        },
        epochs: cfg.train.epochs,
        scenes_per_epoch: cfg.train.scenes_per_epoch,
        eval_scenes: cfg.train.eval_scenes,
        learning_rate: cfg.train.learning_rate,
        optimizer: cfg.train.optimizer,
        contrastive_targets: targets,
        stop_gradient: cfg.train.stop_gradient,
        seed,
        scene: SceneParams {
            classes: cfg.queries.classes,
            max_objects: cfg.scene.max_objects,
            overlap_prob: cfg.scene.overlap_prob,
            noise: cfg.scene.noise,
            feature_dim: cfg.scene.feature_dim.unwrap_or(cfg.queries.dim),
        },
        loss: cfg.loss.params.clone(),
    }
}

fn run_once(ctx: &Context, cfg: &AppConfig, suffix: &str, paired: bool) -> Result<TrainSummary> {
    let arms: Vec<(String, Vec<usize>)> = if paired {
        vec![
            ("contrastive".to_string(), cfg.train.targets.clone()),
            ("baseline".to_string(), Vec::new()),
        ]
    } else {
        vec![("trace".to_string(), cfg.train.targets.clone())]
    };
    let mut summaries = Vec::new();
    for (arm, targets) in arms {
        let tc = train_config(cfg, ctx.seed, targets.clone());
        let outcome = run_training(&tc)?;
        let name = if paired {
            format!("train_trace_{arm}{suffix}.csv")
        } else {
            format!("train_trace{suffix}.csv")
        };
        write_artifact(&ctx.out_dir, &name, &trace_csv(&outcome.trace))?;
        summaries.push(ArmSummary {
            arm,
            contrastive_targets: targets,
            final_epoch: outcome.trace.last().expect("at least one epoch").clone(),
        });
    }
    Ok(TrainSummary { paired, seed: ctx.seed, epochs: cfg.train.epochs, arms: summaries })
}

/// Runs the command; writes `train_trace*.csv` and `train_summary.json`.
pub fn run(ctx: &Context, sweep: &Option<String>, paired: bool) -> Result<i32> {
    let plan = plan_runs(&ctx.cfg, sweep)?;
    let json = match &plan.sweep_key {
        Some(key) => {
            let mut entries = Vec::new();
            for variant in &plan.runs {
                entries.push(SweepEntry {
                    value: variant.value.clone().expect("swept runs carry their token"),
                    summary: run_once(ctx, &variant.cfg, &variant.suffix, paired)?,
                });
            }
            fmt::to_json(&SweepSummary { sweep: key.clone(), entries })
        }
        None => fmt::to_json(&run_once(ctx, &plan.runs[0].cfg, "", paired)?),
    };
    write_artifact(&ctx.out_dir, "train_summary.json", &json)?;
    Ok(0)
}
