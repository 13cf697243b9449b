//! Flat run configuration: defaults, then a JSON or `key=value` document, then flags.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;
use serde_json::{Map, Value};

use rnnlab::grad::TimeReduction;
use rnnlab::optim::{AlphaSchedule, ClipKind, ClipPolicy, TrainConfig};
use rnnlab::tasks::{TaskKind, TaskSpec};
use rnnlab::Activation;

/// Training recipe shorthand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Mode {
    #[serde(rename = "sgd")]
    Sgd,
    #[serde(rename = "sgd-c")]
    SgdC,
    #[serde(rename = "sgd-cr")]
    SgdCr,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Sgd => "sgd",
            Mode::SgdC => "sgd-c",
            Mode::SgdCr => "sgd-cr",
        }
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(Mode::Sgd),
            "sgd-c" => Ok(Mode::SgdC),
            "sgd-cr" => Ok(Mode::SgdCr),
            other => Err(format!("unknown mode '{other}' (expected sgd, sgd-c or sgd-cr)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub mode: Option<Mode>,
    pub task: TaskKind,
    #[serde(rename = "T")]
    pub length: usize,
    pub pattern_len: Option<usize>,
    pub symbols: Option<usize>,
    pub seed: u64,
    pub hidden: usize,
    pub activation: Activation,
    pub init_std: f64,
    pub lr: f64,
    pub lr_halving: bool,
    pub clip: ClipKind,
    pub threshold: f64,
    pub alpha: f64,
    pub alpha_schedule: AlphaSchedule,
    pub batch: usize,
    pub max_updates: usize,
    pub eval_every: usize,
    pub test_size: usize,
    pub time_reduction: TimeReduction,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: None,
            task: TaskKind::TemporalOrder,
            length: 50,
            pattern_len: None,
            symbols: None,
            seed: 0,
            hidden: 50,
            activation: Activation::Tanh,
            init_std: rnnlab::model::INIT_STD,
            lr: 0.01,
            lr_halving: false,
            clip: ClipKind::None,
            threshold: 6.0,
            alpha: 0.0,
            alpha_schedule: AlphaSchedule::Const,
            batch: 16,
            max_updates: 100_000,
            eval_every: 1_000,
            test_size: 10_000,
            time_reduction: TimeReduction::Sum,
        }
    }
}

/// Every problem found while building a config, one per field.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invalid configuration:")?;
        for e in &self.0 {
            writeln!(f, "  {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

fn describe(v: &Value) -> String {
    match v {
        Value::String(s) => format!("\"{s}\""),
        other => other.to_string(),
    }
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

fn as_u64(v: &Value) -> Option<u64> {
    match v {
        Value::Number(n) => n.as_u64(),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

fn as_bool(v: &Value) -> Option<bool> {
    match v {
        Value::Bool(b) => Some(*b),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

fn as_str(v: &Value) -> Option<&str> {
    v.as_str()
}

fn parsed<T: FromStr>(v: &Value) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    let s = as_str(v).ok_or_else(|| format!("expected a string, got {}", describe(v)))?;
    s.parse::<T>().map_err(|e| e.to_string())
}

impl RunConfig {
    pub const KEYS: [&'static str; 20] = [
        "mode",
        "task",
        "T",
        "pattern_len",
        "symbols",
        "seed",
        "hidden",
        "activation",
        "init_std",
        "lr",
        "lr_halving",
        "clip",
        "threshold",
        "alpha",
        "alpha_schedule",
        "batch",
        "max_updates",
        "eval_every",
        "test_size",
        "time_reduction",
    ];

    /// Sets one field from a JSON value; strings are accepted for every scalar field.
    pub fn set(&mut self, key: &str, v: &Value) -> Result<(), String> {
        let float = || as_f64(v).ok_or_else(|| format!("expected a number, got {}", describe(v)));
        let count = || as_u64(v).ok_or_else(|| format!("expected a non-negative integer, got {}", describe(v)));
        let usize_of = || count().map(|c| c as usize);
        let opt_count = || {
            if v.is_null() {
                Ok(None)
            } else {
                usize_of().map(Some)
            }
        };
        match key {
            "mode" => {
                self.mode = if v.is_null() { None } else { Some(parsed(v)?) };
            }
            "task" => self.task = parsed::<TaskKind>(v)?,
            "T" => self.length = usize_of()?,
            "pattern_len" => self.pattern_len = opt_count()?,
            "symbols" => self.symbols = opt_count()?,
            "seed" => self.seed = count()?,
            "hidden" => self.hidden = usize_of()?,
            "activation" => self.activation = parsed::<Activation>(v)?,
            "init_std" => self.init_std = float()?,
            "lr" => self.lr = float()?,
            "lr_halving" => {
                self.lr_halving = as_bool(v).ok_or_else(|| format!("expected true or false, got {}", describe(v)))?
            }
            "clip" => self.clip = parsed::<ClipKind>(v)?,
            "threshold" => self.threshold = float()?,
            "alpha" => self.alpha = float()?,
            "alpha_schedule" => self.alpha_schedule = parsed::<AlphaSchedule>(v)?,
            "batch" => self.batch = usize_of()?,
            "max_updates" => self.max_updates = usize_of()?,
            "eval_every" => self.eval_every = usize_of()?,
            "test_size" => self.test_size = usize_of()?,
            "time_reduction" => {
                self.time_reduction = match as_str(v).map(str::to_ascii_lowercase).as_deref() {
                    Some("sum") => TimeReduction::Sum,
                    Some("mean") => TimeReduction::Mean,
                    _ => return Err(format!("expected \"sum\" or \"mean\", got {}", describe(v))),
                }
            }
            _ => return Err(format!("unknown key (expected one of {})", Self::KEYS.join(", "))),
        }
        Ok(())
    }

    /// Applies every entry of `doc`, collecting one error per offending key.
    pub fn apply(&mut self, doc: &Map<String, Value>, origin: &str, errors: &mut Vec<String>) {
        for (k, v) in doc {
            if let Err(e) = self.set(k, v) {
                errors.push(format!("{origin}.{k}: {e}"));
            }
        }
    }

    /// Builds a config from defaults, an optional document, and flag overrides (in that order).
    pub fn build(document: Option<&Map<String, Value>>, overrides: &Map<String, Value>) -> Result<Self, ConfigErrors> {
        let mut cfg = RunConfig::default();
        let mut errors = Vec::new();
        if let Some(doc) = document {
            cfg.apply(doc, "config", &mut errors);
        }
        cfg.apply(overrides, "flag", &mut errors);
        if errors.is_empty() {
            cfg.resolve_mode(overrides.contains_key("clip") || document.is_some_and(|d| d.contains_key("clip")), &mut errors);
            cfg.check(&mut errors);
        }
        if errors.is_empty() {
            Ok(cfg)
        } else {
            Err(ConfigErrors(errors))
        }
    }

    fn resolve_mode(&mut self, clip_explicit: bool, errors: &mut Vec<String>) {
        let Some(mode) = self.mode else { return };
        let want_clip = match mode {
            Mode::Sgd => ClipKind::None,
            Mode::SgdC | Mode::SgdCr => ClipKind::Norm,
        };
        if clip_explicit && self.clip != want_clip {
            errors.push(format!("config.clip: {} conflicts with mode {}", self.clip.name(), mode.name()));
            return;
        }
        self.clip = want_clip;
        match mode {
            Mode::Sgd | Mode::SgdC if self.alpha != 0.0 => {
                errors.push(format!("config.alpha: mode {} has no regularizer, got alpha = {}", mode.name(), self.alpha))
            }
            Mode::SgdCr if self.alpha <= 0.0 => errors.push("config.alpha: mode sgd-cr needs alpha > 0".into()),
            _ => {}
        }
    }

    fn check(&self, errors: &mut Vec<String>) {
        let mut bad = |k: &str, msg: String| errors.push(format!("config.{k}: {msg}"));
        if let Err(e) = self.task_spec().validate() {
            bad("T", e.to_string());
        }
        if self.hidden == 0 {
            bad("hidden", "must be at least 1".into());
        }
        if !(self.init_std >= 0.0 && self.init_std.is_finite()) {
            bad("init_std", format!("must be a non-negative number, got {}", self.init_std));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            bad("lr", format!("must be positive, got {}", self.lr));
        }
        if self.clip != ClipKind::None && !(self.threshold > 0.0 && self.threshold.is_finite()) {
            bad("threshold", format!("must be positive when clipping, got {}", self.threshold));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            bad("alpha", format!("must be non-negative, got {}", self.alpha));
        }
        if self.batch == 0 {
            bad("batch", "must be at least 1".into());
        }
        if self.eval_every == 0 {
            bad("eval_every", "must be at least 1".into());
        }
        if self.test_size == 0 {
            bad("test_size", "must be at least 1".into());
        }
    }

    pub fn task_spec(&self) -> TaskSpec {
        let mut spec = TaskSpec::new(self.task, self.length, self.seed);
        if self.task == TaskKind::NoiselessMemorization {
            spec.pattern_len = Some(self.pattern_len.unwrap_or(5));
            spec.symbols = Some(self.symbols.unwrap_or(2));
        } else {
            spec.pattern_len = self.pattern_len;
            spec.symbols = self.symbols;
        }
        spec
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.lr,
            lr_halving: self.lr_halving,
            clip: match self.clip {
                ClipKind::None => ClipPolicy::none(),
                ClipKind::Norm => ClipPolicy::norm(self.threshold),
                ClipKind::Elementwise => ClipPolicy::elementwise(self.threshold),
            },
            alpha0: self.alpha,
            alpha_schedule: self.alpha_schedule,
            batch_size: self.batch,
            max_updates: self.max_updates,
            eval_every: self.eval_every,
            seed: self.seed,
            time_reduction: self.time_reduction,
        }
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

/// Reads a config document: a JSON object, a run manifest (its `config` is used),
/// or `key=value` lines with `#` comments.
pub fn read_document(path: &Path) -> anyhow::Result<Map<String, Value>> {
    let text = std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
    parse_document(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
}

pub fn parse_document(text: &str) -> Result<Map<String, Value>, String> {
    if text.trim_start().starts_with('{') {
        let v: Value = serde_json::from_str(text).map_err(|e| format!("invalid JSON: {e}"))?;
        let Value::Object(mut obj) = v else { unreachable!() };
        if obj.contains_key("command") {
            if let Some(Value::Object(cfg)) = obj.remove("config") {
                return Ok(cfg);
            }
        }
        return Ok(obj);
    }
    let mut out = Map::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key=value, got '{line}'", i + 1))?;
        out.insert(k.trim().to_string(), scalar_value(v.trim()));
    }
    Ok(out)
}

/// `key=value` right-hand side: JSON literal when it parses as one, otherwise a string.
pub fn scalar_value(s: &str) -> Value {
    serde_json::from_str::<Value>(s)
        .ok()
        .filter(|v| !v.is_object() && !v.is_array())
        .unwrap_or_else(|| Value::String(s.to_string()))
}
