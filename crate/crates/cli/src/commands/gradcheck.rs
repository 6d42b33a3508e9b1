//! `mmcl gradcheck`: verify analytic gradients against central
//! differences.

use serde::Serialize;

use mmcl_core::gradcheck::{verify_gradient_with_step, GradCheckReport};
use mmcl_core::{Error, Result};

use crate::commands::{write_artifact, Context};
use crate::fmt;

#[derive(Serialize)]
struct GradcheckArtifact {
    trials: usize,
    tolerance: f64,
    step: f64,
    all_passed: bool,
    reports: Vec<GradCheckReport>,
}

/// Runs the command; writes `gradcheck.json` and exits non-zero when any
/// loss fails.
pub fn run(ctx: &Context, sweep: &Option<String>) -> Result<i32> {
    if sweep.is_some() {
        return Err(Error::InvalidConfig(
            "--sweep is not supported for gradcheck (the verifier pins default loss \
             parameters)"
                .into(),
        ));
    }
    let section = &ctx.cfg.gradcheck;
    let losses = match ctx.loss_override {
        Some(kind) => vec![kind],
        None => section.losses.clone(),
    };
    let mut reports = Vec::new();
    for kind in losses {
        let report = verify_gradient_with_step(
            kind,
            section.trials,
            ctx.seed,
            section.tolerance,
            section.step,
        )?;
        println!(
            "gradcheck {}: max rel error {} over {} trials -> {}",
            kind.name(),
            fmt::float(report.max_rel_error),
            report.trials,
            if report.passed { "ok" } else { "FAILED" }
        );
        reports.push(report);
    }
    let all_passed = reports.iter().all(|r| r.passed);
    let artifact = GradcheckArtifact {
        trials: section.trials,
        tolerance: section.tolerance,
        step: section.step,
        all_passed,
        reports,
    };
    write_artifact(&ctx.out_dir, "gradcheck.json", &fmt::to_json(&artifact))?;
    if all_passed {
        Ok(0)
    } else {
        println!("gradient check FAILED; see gradcheck.json");
        Ok(1)
    }
}
