//! Subcommand implementations and the plumbing they share.

pub mod eval_loss;
pub mod gradcheck;
pub mod metrics;
pub mod optimize;
pub mod schema;
pub mod train;

use std::path::{Path, PathBuf};

use serde::Serialize;

use mmcl_core::descent::init_queries;
use mmcl_core::linalg::Matrix;
use mmcl_core::losses::LossKind;
use mmcl_core::partition::{partition_queries, PartitionSpec};
use mmcl_core::{Error, Result};

use crate::cli::CommonArgs;
use crate::config::{AppConfig, QueriesSection};
use crate::fmt;

/// Everything a command needs: the merged configuration plus the CLI
/// flags that cut across config sections.
pub struct Context {
    /// Parsed configuration with CLI overrides applied.
    pub cfg: AppConfig,
    /// Root seed.
    pub seed: u64,
    /// Artifact directory.
    pub out_dir: PathBuf,
    /// Set when `--loss` was given explicitly.
    pub loss_override: Option<LossKind>,
}

impl Context {
    /// Merges the config file (or defaults) with the command-line flags.
    pub fn new(common: &CommonArgs) -> Result<Self> {
        let mut cfg = match &common.config {
            Some(path) => AppConfig::from_file(path)?,
            None => AppConfig::default(),
        };
        let loss_override = match &common.loss {
            Some(name) => Some(LossKind::parse(name).ok_or_else(|| {
                Error::InvalidConfig(format!("unknown loss `{name}` given with --loss"))
            })?),
            None => None,
        };
        if let Some(kind) = loss_override {
            cfg.loss.kind = kind;
        }
        let out_dir = common.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
        Ok(Self { cfg, seed: common.seed, out_dir, loss_override })
    }
}

/// One run of a (possibly swept) command.
pub struct Variant {
    /// Filename suffix distinguishing this run's artifacts (empty when
    /// there is no sweep).
    pub suffix: String,
    /// The raw sweep token applied to this run, if any.
    pub value: Option<String>,
    /// The configuration with the override applied.
    pub cfg: AppConfig,
}

/// The expansion of `--sweep KEY=V1,V2,...`.
pub struct Plan {
    /// The swept key, when a sweep was requested.
    pub sweep_key: Option<String>,
    /// One entry per run; exactly one with no sweep.
    pub runs: Vec<Variant>,
}

/// Expands the sweep flag into per-run configurations.
pub fn plan_runs(base: &AppConfig, sweep: &Option<String>) -> Result<Plan> {
    let Some(spec) = sweep else {
        return Ok(Plan {
            sweep_key: None,
            runs: vec![Variant { suffix: String::new(), value: None, cfg: base.clone() }],
        });
    };
    let (key, values) = spec.split_once('=').ok_or_else(|| {
        Error::InvalidConfig(format!("--sweep `{spec}` must look like section.key=v1,v2"))
    })?;
    let key = key.trim();
    let mut runs = Vec::new();
    for raw in values.split(',') {
        let raw = raw.trim();
        if raw.is_empty() {
            return Err(Error::InvalidConfig(format!("--sweep `{spec}` has an empty value")));
        }
        let mut cfg = base.clone();
        cfg.apply_override(key, raw)?;
        runs.push(Variant {
            suffix: format!("_{}_{raw}", key.replace('.', "_")),
            value: Some(raw.to_string()),
            cfg,
        });
    }
    if runs.is_empty() {
        return Err(Error::InvalidConfig(format!("--sweep `{spec}` has no values")));
    }
    Ok(Plan { sweep_key: Some(key.to_string()), runs })
}

/// Writes one artifact and reports it on stdout.
pub fn write_artifact(dir: &Path, name: &str, contents: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, contents)?;
    println!("wrote {}", path.display());
    Ok(())
}

/// Shape block echoed into JSON artifacts.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct QueryShape {
    pub count: usize,
    pub dim: usize,
    pub classes: usize,
}

/// Builds the query matrix and its partition from the `[queries]`
/// section: either loaded from the configured CSV file or drawn from the
/// seeded initializer.
pub fn build_queries(section: &QueriesSection, seed: u64) -> Result<(Matrix, PartitionSpec)> {
    let q = match &section.matrix {
        Some(path) => read_query_csv(path)?,
        None => init_queries(section.init, section.count, section.dim, seed),
    };
    let p = partition_queries(q.rows(), section.classes)?;
    Ok((q, p))
}

/// Renders a query matrix as CSV: a `rows,cols` shape line, then one line
/// of canonical floats per row.
pub fn render_query_csv(q: &Matrix) -> String {
    let mut out = format!("{},{}\n", q.rows(), q.cols());
    for r in 0..q.rows() {
        let line: Vec<String> = q.row(r).iter().map(|&v| fmt::float(v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Parses the CSV format produced by [`render_query_csv`].
pub fn read_query_csv(path: &Path) -> Result<Matrix> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::InvalidInput(format!("cannot read query matrix `{}`: {e}", path.display()))
    })?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::InvalidInput(format!("`{}` is empty", path.display())))?;
    let (rows_text, cols_text) = header.split_once(',').ok_or_else(|| {
        Error::InvalidInput(format!("`{}` line 1: expected a `rows,cols` header", path.display()))
    })?;
    let rows: usize = rows_text.trim().parse().map_err(|_| {
        Error::InvalidInput(format!("`{}` line 1: bad row count `{rows_text}`", path.display()))
    })?;
    let cols: usize = cols_text.trim().parse().map_err(|_| {
        Error::InvalidInput(format!("`{}` line 1: bad column count `{cols_text}`", path.display()))
    })?;
    let mut data = Vec::with_capacity(rows);
    for _ in 0..rows {
        let (idx, line) = lines.next().ok_or_else(|| {
            Error::InvalidInput(format!(
                "`{}`: expected {rows} data lines after the header",
                path.display()
            ))
        })?;
        let row: Vec<f64> = line
            .split(',')
            .map(|tok| {
                tok.trim().parse().map_err(|_| {
                    Error::InvalidInput(format!(
                        "`{}` line {}: `{}` is not a number",
                        path.display(),
                        idx + 1,
                        tok.trim()
                    ))
                })
            })
            .collect::<Result<_>>()?;
        if row.len() != cols {
            return Err(Error::InvalidInput(format!(
                "`{}` line {}: {} values, expected {cols}",
                path.display(),
                idx + 1,
                row.len()
            )));
        }
        data.push(row);
    }
    if let Some((idx, line)) = lines.next() {
        if !line.trim().is_empty() {
            return Err(Error::InvalidInput(format!(
                "`{}` line {}: unexpected extra data",
                path.display(),
                idx + 1
            )));
        }
    }
    Matrix::from_rows(&data)
}
