//! Plain-text experiment configuration.
//!
//! Files are INI-style: `[section]` headers, `key = value` lines, blank
//! lines, and full-line `#` comments.  Every section and key is checked
//! against the schema below — unknown names, duplicate entries, and
//! malformed values are rejected with their line and column.  All
//! sections and keys are optional; omitted keys take the documented
//! defaults, so an empty (or absent) file is a complete configuration.

use std::path::{Path, PathBuf};

use serde::Serialize;

use mmcl_core::descent::InitMode;
use mmcl_core::gradcheck::VERIFY_STEP;
use mmcl_core::losses::{LossConfig, LossKind};
use mmcl_core::surrogate::OptimizerKind;
use mmcl_core::{Error, Result};

/// `[loss]`: which loss to use and its parameters.
#[derive(Debug, Clone)]
pub struct LossSection {
    /// Loss selected by `kind` (overridable with `--loss`).
    pub kind: LossKind,
    /// Numeric parameters shared by the loss family.
    pub params: LossConfig,
}

/// `[queries]`: the query set under study.
#[derive(Debug, Clone)]
pub struct QueriesSection {
    /// Number of query rows.
    pub count: usize,
    /// Embedding dimension.
    pub dim: usize,
    /// Number of classes the rows are partitioned into.
    pub classes: usize,
    /// Initialization mode when no matrix file is given.
    pub init: InitMode,
    /// Optional CSV file with an explicit query matrix.
    pub matrix: Option<PathBuf>,
}

/// `[optimize]`: gradient-descent settings.
#[derive(Debug, Clone)]
pub struct OptimizeSection {
    /// Number of descent steps.
    pub iterations: usize,
    /// Step size.
    pub learning_rate: f64,
}

/// `[gradcheck]`: finite-difference verification settings.
#[derive(Debug, Clone)]
pub struct GradcheckSection {
    /// Randomized instances per loss.
    pub trials: usize,
    /// Pass threshold on the relative error.
    pub tolerance: f64,
    /// Central-difference step.
    pub step: f64,
    /// Losses to verify (`losses = all` or a comma-separated list).
    pub losses: Vec<LossKind>,
}

/// `[train]`: surrogate training settings.
#[derive(Debug, Clone)]
pub struct TrainSection {
    /// Number of epochs.
    pub epochs: usize,
    /// Scenes drawn per epoch.
    pub scenes_per_epoch: usize,
    /// Held-out scenes for the per-epoch evaluation.
    pub eval_scenes: usize,
    /// Optimizer step size.
    pub learning_rate: f64,
    /// `sgd` or `adam`.
    pub optimizer: OptimizerKind,
    /// Decoder layers.
    pub layers: usize,
    /// Query states receiving the contrastive loss (comma-separated
    /// indices; an empty value disables the contrastive term).
    pub targets: Vec<usize>,
    /// Stop contrastive gradients from flowing through decoder layers.
    pub stop_gradient: bool,
}

/// `[scene]`: synthetic scene generation.
#[derive(Debug, Clone)]
pub struct SceneSection {
    /// Maximum objects per scene (the count is uniform on `1..=max`).
    pub max_objects: usize,
    /// Probability that an object is forced to overlap an earlier one.
    pub overlap_prob: f64,
    /// Feature noise scale.
    pub noise: f64,
    /// Object feature dimension (defaults to the query dimension).
    pub feature_dim: Option<usize>,
}

/// `[output]`: artifact placement.
#[derive(Debug, Clone)]
pub struct OutputSection {
    /// Directory artifacts are written into (overridable with `--out`).
    pub dir: PathBuf,
}

/// The full typed configuration.
#[derive(Debug, Clone)]
pub struct AppConfig {
    pub loss: LossSection,
    pub queries: QueriesSection,
    pub optimize: OptimizeSection,
    pub gradcheck: GradcheckSection,
    pub train: TrainSection,
    pub scene: SceneSection,
    pub output: OutputSection,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            loss: LossSection { kind: LossKind::Mmcl, params: LossConfig::default() },
            queries: QueriesSection {
                count: 20,
                dim: 8,
                classes: 4,
                init: InitMode::Random,
                matrix: None,
            },
            optimize: OptimizeSection { iterations: 2000, learning_rate: 0.5 },
            gradcheck: GradcheckSection {
                trials: 20,
                tolerance: 1e-5,
                step: VERIFY_STEP,
                losses: LossKind::ALL.to_vec(),
            },
            train: TrainSection {
                epochs: 50,
                scenes_per_epoch: 24,
                eval_scenes: 64,
                learning_rate: 2e-3,
                optimizer: OptimizerKind::Adam,
                layers: 3,
                targets: vec![0],
                stop_gradient: false,
            },
            scene: SceneSection {
                max_objects: 6,
                overlap_prob: 0.3,
                noise: 0.05,
                feature_dim: None,
            },
            output: OutputSection { dir: PathBuf::from(".") },
        }
    }
}

struct Entry {
    key: String,
    value: String,
    line: usize,
}

struct RawSection {
    name: String,
    line: usize,
    entries: Vec<Entry>,
}

fn config_error(line: usize, col: usize, message: &str) -> Error {
    Error::InvalidConfig(format!("line {line}, column {col}: {message}"))
}

fn indent_col(raw: &str) -> usize {
    raw.len() - raw.trim_start().len() + 1
}

fn parse_raw(text: &str) -> Result<Vec<RawSection>> {
    let mut sections: Vec<RawSection> = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let col = indent_col(raw_line);
        if let Some(rest) = line.strip_prefix('[') {
            let close = rest.find(']').ok_or_else(|| {
                config_error(line_no, col, "section header is missing the closing `]`")
            })?;
            let name = rest[..close].trim().to_string();
            let tail = rest[close + 1..].trim();
            if !tail.is_empty() {
                return Err(config_error(
                    line_no,
                    col + close + 2,
                    "unexpected text after the section header",
                ));
            }
            if name.is_empty() {
                return Err(config_error(line_no, col + 1, "empty section name"));
            }
            if sections.iter().any(|s| s.name == name) {
                return Err(config_error(line_no, col, &format!("duplicate section [{name}]")));
            }
            sections.push(RawSection { name, line: line_no, entries: Vec::new() });
        } else if let Some(eq) = line.find('=') {
            let key = line[..eq].trim().to_string();
            let value = line[eq + 1..].trim().to_string();
            if key.is_empty() {
                return Err(config_error(line_no, col, "missing key before `=`"));
            }
            let section = sections.last_mut().ok_or_else(|| {
                config_error(
                    line_no,
                    col,
                    &format!("key `{key}` appears before any [section] header"),
                )
            })?;
            if section.entries.iter().any(|e| e.key == key) {
                return Err(config_error(
                    line_no,
                    col,
                    &format!("duplicate key `{key}` in [{}]", section.name),
                ));
            }
            section.entries.push(Entry { key, value, line: line_no });
        } else {
            return Err(config_error(
                line_no,
                col,
                "expected `key = value`, a [section] header, or a `#` comment",
            ));
        }
    }
    Ok(sections)
}

fn parse_f64(e: &Entry) -> Result<f64> {
    e.value.parse().map_err(|_| {
        config_error(e.line, 1, &format!("key `{}`: `{}` is not a number", e.key, e.value))
    })
}

fn parse_usize(e: &Entry) -> Result<usize> {
    e.value.parse().map_err(|_| {
        config_error(
            e.line,
            1,
            &format!("key `{}`: `{}` is not a non-negative integer", e.key, e.value),
        )
    })
}

fn parse_bool(e: &Entry) -> Result<bool> {
    match e.value.as_str() {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(config_error(
            e.line,
            1,
            &format!("key `{}`: `{other}` is not `true` or `false`", e.key),
        )),
    }
}

fn parse_usize_list(e: &Entry) -> Result<Vec<usize>> {
    if e.value.is_empty() {
        return Ok(Vec::new());
    }
    e.value
        .split(',')
        .map(|tok| {
            tok.trim().parse().map_err(|_| {
                config_error(
                    e.line,
                    1,
                    &format!("key `{}`: `{}` is not a non-negative integer", e.key, tok.trim()),
                )
            })
        })
        .collect()
}

fn parse_loss_kind(e: &Entry) -> Result<LossKind> {
    LossKind::parse(&e.value).ok_or_else(|| {
        config_error(
            e.line,
            1,
            &format!(
                "key `{}`: unknown loss `{}` (expected one of {})",
                e.key,
                e.value,
                loss_names()
            ),
        )
    })
}

fn parse_loss_kinds(e: &Entry) -> Result<Vec<LossKind>> {
    if e.value == "all" {
        return Ok(LossKind::ALL.to_vec());
    }
    e.value
        .split(',')
        .map(|tok| {
            let tok = tok.trim();
            LossKind::parse(tok).ok_or_else(|| {
                config_error(
                    e.line,
                    1,
                    &format!(
                        "key `{}`: unknown loss `{tok}` (expected `all` or names from {})",
                        e.key,
                        loss_names()
                    ),
                )
            })
        })
        .collect()
}

fn loss_names() -> String {
    LossKind::ALL.iter().map(|k| k.name()).collect::<Vec<_>>().join(", ")
}

fn unknown_key(section: &str, e: &Entry, allowed: &[&str]) -> Error {
    config_error(
        e.line,
        1,
        &format!("unknown key `{}` in [{section}] (allowed: {})", e.key, allowed.join(", ")),
    )
}

impl AppConfig {
    /// Reads and validates a configuration file.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::InvalidConfig(format!("cannot read config `{}`: {e}", path.display()))
        })?;
        Self::parse_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }

    /// Parses configuration text.
    pub fn parse_str(text: &str) -> Result<Self> {
        let sections = parse_raw(text)?;
        let mut cfg = AppConfig::default();
        for section in &sections {
            match section.name.as_str() {
                "loss" => {
                    const ALLOWED: &[&str] = &[
                        "kind", "margin", "gamma", "eta", "alpha", "tau", "temperature",
                        "eps_clamp",
                    ];
                    for e in &section.entries {
                        match e.key.as_str() {
                            "kind" => cfg.loss.kind = parse_loss_kind(e)?,
                            "margin" => cfg.loss.params.margin = parse_f64(e)?,
                            "gamma" => cfg.loss.params.gamma = parse_f64(e)?,
                            "eta" => cfg.loss.params.eta = parse_f64(e)?,
                            "alpha" => cfg.loss.params.alpha = parse_f64(e)?,
                            "tau" => cfg.loss.params.tau = parse_f64(e)?,
                            "temperature" => cfg.loss.params.temperature = parse_f64(e)?,
                            "eps_clamp" => cfg.loss.params.eps_clamp = parse_f64(e)?,
                            _ => return Err(unknown_key("loss", e, ALLOWED)),
                        }
                    }
                }
                "queries" => {
                    const ALLOWED: &[&str] = &["count", "dim", "classes", "init", "matrix"];
                    for e in &section.entries {
                        match e.key.as_str() {
                            "count" => cfg.queries.count = parse_usize(e)?,
                            "dim" => cfg.queries.dim = parse_usize(e)?,
                            "classes" => cfg.queries.classes = parse_usize(e)?,
                            "init" => {
                                cfg.queries.init = InitMode::parse(&e.value).ok_or_else(|| {
                                    config_error(
                                        e.line,
                                        1,
                                        &format!(
                                            "key `init`: `{}` is not `random` or `collapsed`",
                                            e.value
                                        ),
                                    )
                                })?
                            }
                            "matrix" => cfg.queries.matrix = Some(PathBuf::from(&e.value)),
                            _ => return Err(unknown_key("queries", e, ALLOWED)),
                        }
                    }
                }
                "optimize" => {
                    const ALLOWED: &[&str] = &["iterations", "learning_rate"];
                    for e in &section.entries {
                        match e.key.as_str() {
                            "iterations" => cfg.optimize.iterations = parse_usize(e)?,
                            "learning_rate" => cfg.optimize.learning_rate = parse_f64(e)?,
                            _ => return Err(unknown_key("optimize", e, ALLOWED)),
                        }
                    }
                }
                "gradcheck" => {
                    const ALLOWED: &[&str] = &["trials", "tolerance", "step", "losses"];
                    for e in &section.entries {
                        match e.key.as_str() {
                            "trials" => cfg.gradcheck.trials = parse_usize(e)?,
                            "tolerance" => cfg.gradcheck.tolerance = parse_f64(e)?,
                            "step" => cfg.gradcheck.step = parse_f64(e)?,
                            "losses" => cfg.gradcheck.losses = parse_loss_kinds(e)?,
                            _ => return Err(unknown_key("gradcheck", e, ALLOWED)),
                        }
                    }
                }
                "train" => {
                    const ALLOWED: &[&str] = &[
                        "epochs",
                        "scenes_per_epoch",
                        "eval_scenes",
                        "learning_rate",
                        "optimizer",
                        "layers",
                        "targets",
                        "stop_gradient",
                    ];
                    for e in &section.entries {
                        match e.key.as_str() {
                            "epochs" => cfg.train.epochs = parse_usize(e)?,
                            "scenes_per_epoch" => cfg.train.scenes_per_epoch = parse_usize(e)?,
                            "eval_scenes" => cfg.train.eval_scenes = parse_usize(e)?,
                            "learning_rate" => cfg.train.learning_rate = parse_f64(e)?,
                            "optimizer" => {
                                cfg.train.optimizer =
                                    OptimizerKind::parse(&e.value).map_err(|_| {
                                        config_error(
                                            e.line,
                                            1,
                                            &format!(
                                                "key `optimizer`: `{}` is not `sgd` or `adam`",
                                                e.value
                                            ),
                                        )
                                    })?
                            }
                            "layers" => cfg.train.layers = parse_usize(e)?,
                            "targets" => cfg.train.targets = parse_usize_list(e)?,
                            "stop_gradient" => cfg.train.stop_gradient = parse_bool(e)?,
                            _ => return Err(unknown_key("train", e, ALLOWED)),
                        }
                    }
                }
                "scene" => {
                    const ALLOWED: &[&str] =
                        &["max_objects", "overlap_prob", "noise", "feature_dim"];
                    for e in &section.entries {
                        match e.key.as_str() {
                            "max_objects" => cfg.scene.max_objects = parse_usize(e)?,
                            "overlap_prob" => cfg.scene.overlap_prob = parse_f64(e)?,
                            "noise" => cfg.scene.noise = parse_f64(e)?,
                            "feature_dim" => cfg.scene.feature_dim = Some(parse_usize(e)?),
                            _ => return Err(unknown_key("scene", e, ALLOWED)),
                        }
                    }
                }
                "output" => {
                    const ALLOWED: &[&str] = &["dir"];
                    for e in &section.entries {
                        match e.key.as_str() {
                            "dir" => cfg.output.dir = PathBuf::from(&e.value),
                            _ => return Err(unknown_key("output", e, ALLOWED)),
                        }
                    }
                }
                other => {
                    return Err(config_error(
                        section.line,
                        1,
                        &format!(
                            "unknown section [{other}] (expected [loss], [queries], \
                             [optimize], [gradcheck], [train], [scene], or [output])"
                        ),
                    ));
                }
            }
        }
        Ok(cfg)
    }

    /// Applies a single `section.key = value` override (used by `--sweep`).
    pub fn apply_override(&mut self, key: &str, raw: &str) -> Result<()> {
        let bad_f64 = || {
            Error::InvalidConfig(format!("sweep value `{raw}` for `{key}` is not a number"))
        };
        let bad_usize = || {
            Error::InvalidConfig(format!(
                "sweep value `{raw}` for `{key}` is not a non-negative integer"
            ))
        };
        match key {
            "loss.margin" => self.loss.params.margin = raw.parse().map_err(|_| bad_f64())?,
            "loss.gamma" => self.loss.params.gamma = raw.parse().map_err(|_| bad_f64())?,
            "loss.eta" => self.loss.params.eta = raw.parse().map_err(|_| bad_f64())?,
            "loss.alpha" => self.loss.params.alpha = raw.parse().map_err(|_| bad_f64())?,
            "loss.tau" => self.loss.params.tau = raw.parse().map_err(|_| bad_f64())?,
            "loss.temperature" => {
                self.loss.params.temperature = raw.parse().map_err(|_| bad_f64())?
            }
            "loss.eps_clamp" => self.loss.params.eps_clamp = raw.parse().map_err(|_| bad_f64())?,
            "optimize.learning_rate" => {
                self.optimize.learning_rate = raw.parse().map_err(|_| bad_f64())?
            }
            "optimize.iterations" => {
                self.optimize.iterations = raw.parse().map_err(|_| bad_usize())?
            }
            "queries.count" => self.queries.count = raw.parse().map_err(|_| bad_usize())?,
            "queries.dim" => self.queries.dim = raw.parse().map_err(|_| bad_usize())?,
            "queries.classes" => self.queries.classes = raw.parse().map_err(|_| bad_usize())?,
            "train.learning_rate" => {
                self.train.learning_rate = raw.parse().map_err(|_| bad_f64())?
            }
            "train.epochs" => self.train.epochs = raw.parse().map_err(|_| bad_usize())?,
            "train.scenes_per_epoch" => {
                self.train.scenes_per_epoch = raw.parse().map_err(|_| bad_usize())?
            }
            "scene.overlap_prob" => {
                self.scene.overlap_prob = raw.parse().map_err(|_| bad_f64())?
            }
            "scene.noise" => self.scene.noise = raw.parse().map_err(|_| bad_f64())?,
            "scene.max_objects" => {
                self.scene.max_objects = raw.parse().map_err(|_| bad_usize())?
            }
            other => {
                return Err(Error::InvalidConfig(format!(
                    "`{other}` is not a sweepable key (numeric keys of [loss], [optimize], \
                     [queries], [train], and [scene] are)"
                )));
            }
        }
        Ok(())
    }
}

/// One schema row for the `schema` command.
#[derive(Debug, Serialize)]
pub struct SchemaKey {
    pub key: &'static str,
    #[serde(rename = "type")]
    pub kind: &'static str,
    pub default: &'static str,
    pub doc: &'static str,
}

/// One config section in the schema listing.
#[derive(Debug, Serialize)]
pub struct SchemaSection {
    pub section: &'static str,
    pub keys: &'static [SchemaKey],
}

/// The full config schema, rendered by `mmcl schema`.
pub const SCHEMA: &[SchemaSection] = &[
    SchemaSection {
        section: "loss",
        keys: &[
            SchemaKey {
                key: "kind",
                kind: "name",
                default: "mmcl",
                doc: "one of ime, imc, mmcl, npair, oca, iic, infonce",
            },
            SchemaKey { key: "margin", kind: "float", default: "0.01", doc: "compactness margin" },
            SchemaKey {
                key: "gamma",
                kind: "float",
                default: "1.0",
                doc: "weight of the compactness term in the combined loss",
            },
            SchemaKey {
                key: "eta",
                kind: "float",
                default: "0.5",
                doc: "weight of the separation term in the combined loss",
            },
            SchemaKey {
                key: "alpha",
                kind: "float",
                default: "0.25",
                doc: "rank-weight decay of the compactness term",
            },
            SchemaKey {
                key: "tau",
                kind: "float",
                default: "0.5",
                doc: "positive-similarity threshold of the occlusion-aware loss",
            },
            SchemaKey {
                key: "temperature",
                kind: "float",
                default: "0.1",
                doc: "softmax temperature of the noise-contrastive loss",
            },
            SchemaKey {
                key: "eps_clamp",
                kind: "float",
                default: "1e-7",
                doc: "clamp distance from 0 and 1 applied before logarithms",
            },
        ],
    },
    SchemaSection {
        section: "queries",
        keys: &[
            SchemaKey { key: "count", kind: "int", default: "20", doc: "number of query rows" },
            SchemaKey { key: "dim", kind: "int", default: "8", doc: "embedding dimension" },
            SchemaKey { key: "classes", kind: "int", default: "4", doc: "number of classes" },
            SchemaKey {
                key: "init",
                kind: "name",
                default: "random",
                doc: "`random` or `collapsed` initialization",
            },
            SchemaKey {
                key: "matrix",
                kind: "path",
                default: "",
                doc: "optional CSV query matrix (first line `rows,cols`)",
            },
        ],
    },
    SchemaSection {
        section: "optimize",
        keys: &[
            SchemaKey { key: "iterations", kind: "int", default: "2000", doc: "descent steps" },
            SchemaKey { key: "learning_rate", kind: "float", default: "0.5", doc: "step size" },
        ],
    },
    SchemaSection {
        section: "gradcheck",
        keys: &[
            SchemaKey { key: "trials", kind: "int", default: "20", doc: "instances per loss" },
            SchemaKey {
                key: "tolerance",
                kind: "float",
                default: "1e-5",
                doc: "pass threshold on the relative error",
            },
            SchemaKey {
                key: "step",
                kind: "float",
                default: "1e-6",
                doc: "central-difference step",
            },
            SchemaKey {
                key: "losses",
                kind: "list",
                default: "all",
                doc: "`all` or a comma-separated list of loss names",
            },
        ],
    },
    SchemaSection {
        section: "train",
        keys: &[
            SchemaKey { key: "epochs", kind: "int", default: "50", doc: "training epochs" },
            SchemaKey {
                key: "scenes_per_epoch",
                kind: "int",
                default: "24",
                doc: "scenes drawn per epoch",
            },
            SchemaKey {
                key: "eval_scenes",
                kind: "int",
                default: "64",
                doc: "held-out scenes for the per-epoch evaluation",
            },
            SchemaKey {
                key: "learning_rate",
                kind: "float",
                default: "2e-3",
                doc: "optimizer step size",
            },
            SchemaKey { key: "optimizer", kind: "name", default: "adam", doc: "`sgd` or `adam`" },
            SchemaKey { key: "layers", kind: "int", default: "3", doc: "decoder layers" },
            SchemaKey {
                key: "targets",
                kind: "list",
                default: "0",
                doc: "query states receiving the contrastive loss (empty disables it)",
            },
            SchemaKey {
                key: "stop_gradient",
                kind: "bool",
                default: "false",
                doc: "keep contrastive gradients out of the decoder layers",
            },
        ],
    },
    SchemaSection {
        section: "scene",
        keys: &[
            SchemaKey {
                key: "max_objects",
                kind: "int",
                default: "6",
                doc: "objects per scene are uniform on 1..=max_objects",
            },
            SchemaKey {
                key: "overlap_prob",
                kind: "float",
                default: "0.3",
                doc: "probability of forcing an object to overlap an earlier one",
            },
            SchemaKey { key: "noise", kind: "float", default: "0.05", doc: "feature noise scale" },
            SchemaKey {
                key: "feature_dim",
                kind: "int",
                default: "",
                doc: "object feature dimension (defaults to the query dimension)",
            },
        ],
    },
    SchemaSection {
        section: "output",
        keys: &[SchemaKey {
            key: "dir",
            kind: "path",
            default: ".",
            doc: "directory artifacts are written into",
        }],
    },
];
