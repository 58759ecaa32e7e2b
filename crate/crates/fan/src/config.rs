//! Experiment configuration files.
//!
//! Configs are TOML documents layered over a base (built-in defaults or a
//! preset). Every key in a file must already exist in the base schema, and
//! `key=value` overrides are type-checked against the resolved value they
//! replace. The resolved config is written back out verbatim as the echo
//! stored beside run outputs.
//!
//! ```toml
//! name = "sin-demo"
//! seed = 42
//! epochs = 2000
//! eval_every = 20
//!
//! [task]
//! target = "sin"
//! train = [-12.566370614359172, 12.566370614359172]
//! test = [-50.26548245743669, 50.26548245743669]
//! points_per_period = 256
//!
//! [optimizer]
//! kind = "adamw"
//! lr = 1e-3
//!
//! [[models]]
//! family = "fan"
//! hidden = 256
//! depth = 2
//!
//! [[models]]
//! family = "mlp"
//! hidden = 256
//! ```

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use fan_core::{Activation, AdamW, AdamWConfig, Family, NamedTarget, NetworkSpec, Optimizer, Sgdm, SplitSpec, Target};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug)]
pub enum ConfigError {
    /// Malformed document, unknown key or wrongly typed value in a file.
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    UnknownKey(String),
    TypeMismatch {
        key: String,
        expected: &'static str,
        found: String,
    },
    Invalid(String),
    Io(std::io::Error),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Parse { line, column, message } => write!(f, "line {line}, column {column}: {message}"),
            ConfigError::UnknownKey(k) => write!(f, "unknown key '{k}'"),
            ConfigError::TypeMismatch { key, expected, found } => {
                write!(f, "key '{key}' expects {expected}, got '{found}'")
            }
            ConfigError::Invalid(m) => write!(f, "invalid config: {m}"),
            ConfigError::Io(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for ConfigError {}

impl From<fan_core::Error> for ConfigError {
    fn from(e: fan_core::Error) -> Self {
        ConfigError::Invalid(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    /// `sin`, `complex_a`, `complex_b`, `mod`, `square`, `affine` or a
    /// named periodic target (`triangle`, `sawtooth`, `abs_sin`,
    /// `sin_cos_mix`, `exp_sin`).
    pub target: String,
    pub freq: f64,
    pub modulus: f64,
    pub slope: f64,
    pub intercept: f64,
    /// Length that `points_per_period` refers to.
    pub period: f64,
    pub points_per_period: usize,
    pub train: [f64; 2],
    pub test: [f64; 2],
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            target: "sin".into(),
            freq: 1.0,
            modulus: 5.0,
            slope: 1.0,
            intercept: 0.0,
            period: 2.0 * PI,
            points_per_period: 256,
            train: [-4.0 * PI, 4.0 * PI],
            test: [-16.0 * PI, 16.0 * PI],
        }
    }
}

impl TaskConfig {
    pub fn target(&self) -> Result<Target, ConfigError> {
        Ok(match self.target.as_str() {
            "sin" => Target::Sin { freq: self.freq },
            "complex_a" => Target::ComplexPeriodicA,
            "complex_b" => Target::ComplexPeriodicB,
            "mod" => Target::Mod { k: self.modulus },
            "square" => Target::SquareWave { period: self.period },
            "affine" => Target::Affine {
                slope: self.slope,
                intercept: self.intercept,
            },
            other => Target::Named(NamedTarget::from_id(other)?),
        })
    }

    pub fn split(&self) -> SplitSpec {
        SplitSpec {
            train: (self.train[0], self.train[1]),
            test: (self.test[0], self.test[1]),
            points_per_period: self.points_per_period,
            period: self.period,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Row label in reports; defaults to the family name.
    pub label: String,
    /// `fan`, `gated_fan`, `mlp`, `fnn`, `snake` or `fsnn`.
    pub family: String,
    pub hidden: usize,
    /// Hidden layers before the linear head.
    pub depth: usize,
    pub dp_ratio: f64,
    /// FSNN terms per layer; 0 means `hidden / 2`.
    pub fsnn_terms: usize,
    /// `gelu`, `relu` or `identity`.
    pub activation: String,
    pub residual: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            label: "fan".into(),
            family: "fan".into(),
            hidden: 256,
            depth: 2,
            dp_ratio: fan_core::network::DEFAULT_DP_RATIO,
            fsnn_terms: 0,
            activation: "gelu".into(),
            residual: false,
        }
    }
}

impl ModelConfig {
    pub fn new(label: &str, family: &str, hidden: usize, depth: usize) -> Self {
        Self {
            label: label.into(),
            family: family.into(),
            hidden,
            depth,
            ..Default::default()
        }
    }

    pub fn family(&self) -> Result<Family, ConfigError> {
        if !(0.0..=0.5).contains(&self.dp_ratio) {
            return Err(ConfigError::Invalid(format!(
                "dp_ratio {} outside [0, 0.5]; d_pbar would be negative",
                self.dp_ratio
            )));
        }
        Ok(match self.family.as_str() {
            "fan" => Family::Fan {
                dp_ratio: self.dp_ratio,
            },
            "gated_fan" => Family::GatedFan {
                dp_ratio: self.dp_ratio,
            },
            "mlp" => Family::Mlp,
            "fnn" => Family::Fnn,
            "snake" => Family::Snake,
            "fsnn" => Family::Fsnn {
                terms: (self.fsnn_terms > 0).then_some(self.fsnn_terms),
            },
            other => return Err(ConfigError::Invalid(format!("unknown model family '{other}'"))),
        })
    }

    pub fn activation(&self) -> Result<Activation, ConfigError> {
        match self.activation.as_str() {
            "gelu" => Ok(Activation::Gelu),
            "relu" => Ok(Activation::Relu),
            "identity" => Ok(Activation::Identity),
            other => Err(ConfigError::Invalid(format!("unknown activation '{other}'"))),
        }
    }

    /// Scalar-in, scalar-out stack: `depth` hidden layers and a linear head.
    pub fn network_spec(&self) -> Result<NetworkSpec, ConfigError> {
        if self.hidden == 0 {
            return Err(ConfigError::Invalid("hidden width must be positive".into()));
        }
        Ok(NetworkSpec::stack(
            self.family()?,
            1,
            self.hidden,
            1,
            self.depth + 1,
            self.activation()?,
            self.residual,
        )?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    /// `adamw` or `sgdm`.
    pub kind: String,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// SGDM only.
    pub momentum: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let a = AdamWConfig::default();
        Self {
            kind: "adamw".into(),
            lr: 1e-5,
            beta1: a.beta1,
            beta2: a.beta2,
            eps: a.eps,
            weight_decay: a.weight_decay,
            momentum: 0.9,
        }
    }
}

impl OptimizerConfig {
    pub fn build(&self) -> Result<Optimizer, ConfigError> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(ConfigError::Invalid(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        match self.kind.as_str() {
            "adamw" => Ok(Optimizer::AdamW(AdamW::new(AdamWConfig {
                lr: self.lr,
                beta1: self.beta1,
                beta2: self.beta2,
                eps: self.eps,
                weight_decay: self.weight_decay,
            }))),
            "sgdm" => Ok(Optimizer::Sgdm(Sgdm::new(self.lr, self.momentum))),
            other => Err(ConfigError::Invalid(format!("unknown optimizer '{other}'"))),
        }
    }
}

/// A config document: shared task, optimizer and schedule, one run per model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub name: String,
    pub seed: u64,
    pub epochs: usize,
    pub eval_every: usize,
    /// Store measured training time in `wall_ms`; off keeps metrics
    /// byte-reproducible.
    pub record_wall_time: bool,
    /// Empty means the caller decides.
    pub output_dir: String,
    pub task: TaskConfig,
    pub optimizer: OptimizerConfig,
    pub models: Vec<ModelConfig>,
}

impl Default for ConfigFile {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            seed: 42,
            epochs: 2000,
            eval_every: 20,
            record_wall_time: false,
            output_dir: String::new(),
            task: TaskConfig::default(),
            optimizer: OptimizerConfig::default(),
            models: vec![ModelConfig::default()],
        }
    }
}

/// Everything one training run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub epochs: usize,
    pub eval_every: usize,
    pub record_wall_time: bool,
    pub output_dir: String,
    pub task: TaskConfig,
    pub optimizer: OptimizerConfig,
    pub model: ModelConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.epochs == 0 {
            return Err(ConfigError::Invalid("epochs must be at least 1".into()));
        }
        if self.eval_every == 0 {
            return Err(ConfigError::Invalid("eval_every must be at least 1".into()));
        }
        self.task.target()?;
        self.task.split().validate()?;
        self.model.network_spec()?;
        self.optimizer.build()?;
        Ok(())
    }

    /// TOML rendering of the resolved config.
    pub fn echo(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of [`ExperimentConfig::echo`].
    pub fn hash(&self) -> String {
        short_hash(self.echo().as_bytes())
    }
}

pub(crate) fn short_hash(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

impl ConfigFile {
    pub fn runs(&self) -> Vec<ExperimentConfig> {
        self.models
            .iter()
            .map(|m| ExperimentConfig {
                name: self.name.clone(),
                seed: self.seed,
                epochs: self.epochs,
                eval_every: self.eval_every,
                record_wall_time: self.record_wall_time,
                output_dir: self.output_dir.clone(),
                task: self.task.clone(),
                optimizer: self.optimizer.clone(),
                model: m.clone(),
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.models.is_empty() {
            return Err(ConfigError::Invalid("at least one model is required".into()));
        }
        for (i, m) in self.models.iter().enumerate() {
            if self.models[..i].iter().any(|o| o.label == m.label) {
                return Err(ConfigError::Invalid(format!("duplicate model label '{}'", m.label)));
            }
        }
        self.runs().iter().try_for_each(ExperimentConfig::validate)
    }

    pub fn echo(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        short_hash(self.echo().as_bytes())
    }

    /// Applies one `key=value` override. Keys are dotted paths into the
    /// resolved document; `model.<field>` sets the field on every model and
    /// `models.<i>.<field>` on one.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| ConfigError::Invalid(format!("override '{assignment}' is not key=value")))?;
        let (key, raw) = (key.trim(), raw.trim());
        let mut tree = toml::Value::try_from(&*self).expect("config serializes");
        let parts: Vec<&str> = key.split('.').collect();
        if parts[0] == "model" && parts.len() > 1 {
            let models = tree
                .get_mut("models")
                .and_then(toml::Value::as_array_mut)
                .expect("models array");
            for m in models {
                set_path(m, &parts[1..], key, raw)?;
            }
        } else {
            set_path(&mut tree, &parts, key, raw)?;
        }
        *self = tree
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Invalid(e.message().to_string()))?;
        Ok(())
    }
}

fn set_path(node: &mut toml::Value, path: &[&str], key: &str, raw: &str) -> Result<(), ConfigError> {
    let mut cur = node;
    for seg in path {
        cur = match cur {
            toml::Value::Table(t) => t.get_mut(*seg),
            toml::Value::Array(a) => seg.parse::<usize>().ok().and_then(|i| a.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| ConfigError::UnknownKey(key.to_string()))?;
    }
    if cur.is_table() {
        return Err(ConfigError::UnknownKey(key.to_string()));
    }
    *cur = coerce(cur, raw).ok_or_else(|| ConfigError::TypeMismatch {
        key: key.to_string(),
        expected: cur.type_str(),
        found: raw.to_string(),
    })?;
    Ok(())
}

fn parse_literal(raw: &str) -> Option<toml::Value> {
    let doc: toml::Table = toml::from_str(&format!("v = {raw}")).ok()?;
    doc.get("v").cloned()
}

/// Converts `raw` to the type of `existing`, widening integers to floats.
fn coerce(existing: &toml::Value, raw: &str) -> Option<toml::Value> {
    use toml::Value as V;
    let parsed = parse_literal(raw);
    match (existing, parsed) {
        (V::String(_), Some(V::String(s))) => Some(V::String(s)),
        (V::String(_), None) => Some(V::String(raw.to_string())),
        (V::Float(_), Some(V::Float(x))) => Some(V::Float(x)),
        (V::Float(_), Some(V::Integer(i))) => Some(V::Float(i as f64)),
        (V::Integer(_), Some(V::Integer(i))) => Some(V::Integer(i)),
        (V::Boolean(_), Some(V::Boolean(b))) => Some(V::Boolean(b)),
        (V::Array(old), Some(V::Array(new))) => {
            let template = old.first()?;
            new.iter()
                .map(|v| coerce(template, &v.to_string()))
                .collect::<Option<Vec<_>>>()
                .map(V::Array)
        }
        _ => None,
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialTask {
    target: Option<String>,
    freq: Option<f64>,
    modulus: Option<f64>,
    slope: Option<f64>,
    intercept: Option<f64>,
    period: Option<f64>,
    points_per_period: Option<usize>,
    train: Option<[f64; 2]>,
    test: Option<[f64; 2]>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialModel {
    label: Option<String>,
    family: Option<String>,
    hidden: Option<usize>,
    depth: Option<usize>,
    dp_ratio: Option<f64>,
    fsnn_terms: Option<usize>,
    activation: Option<String>,
    residual: Option<bool>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialOptimizer {
    kind: Option<String>,
    lr: Option<f64>,
    beta1: Option<f64>,
    beta2: Option<f64>,
    eps: Option<f64>,
    weight_decay: Option<f64>,
    momentum: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialFile {
    name: Option<String>,
    seed: Option<u64>,
    epochs: Option<usize>,
    eval_every: Option<usize>,
    record_wall_time: Option<bool>,
    output_dir: Option<String>,
    task: Option<PartialTask>,
    optimizer: Option<PartialOptimizer>,
    models: Option<Vec<PartialModel>>,
}

macro_rules! merge {
    ($dst:expr, $src:expr, $($field:ident),+) => {
        $(if let Some(v) = $src.$field { $dst.$field = v; })+
    };
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

/// Resolves `text` over `base`, then applies `overrides` in order.
pub fn parse_config_str(text: &str, base: ConfigFile, overrides: &[String]) -> Result<ConfigFile, ConfigError> {
    let partial: PartialFile = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_column(text, s.start));
        ConfigError::Parse {
            line,
            column,
            message: e.message().trim().to_string(),
        }
    })?;
    let mut cfg = base;
    merge!(
        cfg,
        partial,
        name,
        seed,
        epochs,
        eval_every,
        record_wall_time,
        output_dir
    );
    if let Some(t) = partial.task {
        merge!(
            cfg.task,
            t,
            target,
            freq,
            modulus,
            slope,
            intercept,
            period,
            points_per_period,
            train,
            test
        );
    }
    if let Some(o) = partial.optimizer {
        merge!(cfg.optimizer, o, kind, lr, beta1, beta2, eps, weight_decay, momentum);
    }
    if let Some(models) = partial.models {
        cfg.models = models
            .into_iter()
            .map(|p| {
                let mut m = ModelConfig::default();
                let explicit_label = p.label.is_some();
                merge!(m, p, label, family, hidden, depth, dp_ratio, fsnn_terms, activation, residual);
                if !explicit_label {
                    m.label = m.family.clone();
                }
                m
            })
            .collect();
    }
    for o in overrides {
        cfg.apply_override(o)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path, base: ConfigFile, overrides: &[String]) -> Result<ConfigFile, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(ConfigError::Io)?;
    parse_config_str(&text, base, overrides)
}
