//! Experiment configuration: flat `section.key = value` text, or the same
//! keys nested one level in JSON.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use serde_json::{Map, Value};
use sqa_core::{FlowKind, InitSpec, ModelParams};

use crate::error::{CliError, Result};

const KNOWN_KEYS: &[&str] = &[
    "model.N",
    "model.M",
    "model.beta",
    "model.T",
    "model.gamma",
    "model.h",
    "model.J0",
    "model.tau",
    "run.kind",
    "run.t_end",
    "run.record_dt",
    "run.dt",
    "run.m0",
    "run.eps0",
    "run.seeds",
    "run.M_list",
    "run.init",
    "run.max_attempts",
    "run.flow",
    "output.dir",
    "output.format",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Simulate,
    Drt,
    Slowflow,
    Statics,
    Compare,
}

impl FromStr for Kind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "simulate" => Kind::Simulate,
            "drt" => Kind::Drt,
            "slowflow" => Kind::Slowflow,
            "statics" => Kind::Statics,
            "compare" => Kind::Compare,
            other => return Err(format!("unknown kind '{other}' (simulate|drt|slowflow|statics|compare)")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Tau {
    Fixed(f64),
    InverseSquareSlices,
}

impl Tau {
    pub fn value(&self, slices: usize) -> f64 {
        match *self {
            Tau::Fixed(t) => t,
            Tau::InverseSquareSlices => 1.0 / (slices as f64 * slices as f64),
        }
    }
}

impl fmt::Display for Tau {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tau::Fixed(t) => write!(f, "{t}"),
            Tau::InverseSquareSlices => f.write_str("1/M^2"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    UniformUp,
    Magnetized,
    SliceReplicated,
    Random,
}

impl FromStr for InitMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "uniform_up" => InitMode::UniformUp,
            "magnetized" => InitMode::Magnetized,
            "slice_replicated" => InitMode::SliceReplicated,
            "random" => InitMode::Random,
            other => {
                return Err(format!(
                    "unknown init '{other}' (uniform_up|magnetized|slice_replicated|random)"
                ))
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
    Both,
}

impl Format {
    pub fn csv(&self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }

    pub fn json(&self) -> bool {
        matches!(self, Format::Json | Format::Both)
    }
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "csv" => Format::Csv,
            "json" => Format::Json,
            "both" => Format::Both,
            other => return Err(format!("unknown format '{other}' (csv|json|both)")),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSection {
    pub sites: usize,
    pub slices: Option<usize>,
    pub beta: f64,
    pub gamma: f64,
    pub h: f64,
    pub j0: f64,
    pub tau: Tau,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSection {
    pub kind: Option<Kind>,
    pub t_end: f64,
    pub record_dt: Option<f64>,
    pub dt: Option<f64>,
    pub m0: Option<f64>,
    pub eps0: Option<f64>,
    pub seeds: Vec<u64>,
    pub m_list: Vec<usize>,
    pub init: InitMode,
    pub max_attempts: Option<u64>,
    pub flow: FlowKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub format: Format,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub run: RunSection,
    pub output: OutputSection,
    /// The parsed key/value pairs, kept for manifests.
    pub raw: BTreeMap<String, String>,
}

struct Entry {
    value: String,
    line: Option<usize>,
}

struct Source<'a> {
    path: &'a Path,
    entries: BTreeMap<String, Entry>,
}

impl Source<'_> {
    fn err(&self, key: &str, msg: impl fmt::Display) -> CliError {
        match self.entries.get(key).and_then(|e| e.line) {
            Some(line) => CliError::ConfigAt { path: self.path.to_path_buf(), line, msg: format!("{key}: {msg}") },
            None => CliError::Config(format!("{}: {key}: {msg}", self.path.display())),
        }
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some(e) => e.value.parse().map(Some).map_err(|err| self.err(key, format!("'{}': {err}", e.value))),
        }
    }

    fn require<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        self.get(key)?.ok_or_else(|| CliError::Config(format!("{}: missing required key {key}", self.path.display())))
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: fmt::Display,
    {
        let Some(e) = self.entries.get(key) else { return Ok(None) };
        e.value
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|err| self.err(key, format!("'{s}': {err}"))))
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path, json: bool) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        if json {
            Self::parse_json(&text, path)
        } else {
            Self::parse(&text, path)
        }
    }

    /// Parses the flat text format. `origin` is only used in error messages.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw_line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let at = |msg: String| CliError::ConfigAt { path: origin.to_path_buf(), line, msg };
            let (key, value) = content.split_once('=').ok_or_else(|| at(format!("expected key = value, got '{content}'")))?;
            let (key, value) = (key.trim(), value.trim());
            if !KNOWN_KEYS.contains(&key) {
                return Err(at(format!("unknown key '{key}'")));
            }
            if entries.insert(key.to_string(), Entry { value: value.to_string(), line: Some(line) }).is_some() {
                return Err(at(format!("duplicate key '{key}'")));
            }
        }
        Self::build(Source { path: origin, entries })
    }

    /// Parses `{"model": {...}, "run": {...}, "output": {...}}`. A manifest
    /// written by this crate is accepted too (its `config` member is used).
    pub fn parse_json(text: &str, origin: &Path) -> Result<Self> {
        let value: Value = serde_json::from_str(text)
            .map_err(|e| CliError::Config(format!("{}: invalid JSON: {e}", origin.display())))?;
        let root = match value.get("config") {
            Some(inner) if value.get("command").is_some() => inner.clone(),
            _ => value,
        };
        let Value::Object(sections) = root else {
            return Err(CliError::Config(format!("{}: top level must be an object", origin.display())));
        };
        let mut entries = BTreeMap::new();
        for (section, body) in sections {
            let Value::Object(body) = body else {
                return Err(CliError::Config(format!("{}: section '{section}' must be an object", origin.display())));
            };
            for (k, v) in body {
                let key = format!("{section}.{k}");
                if !KNOWN_KEYS.contains(&key.as_str()) {
                    return Err(CliError::Config(format!("{}: unknown key '{key}'", origin.display())));
                }
                let value = json_scalar(&v)
                    .ok_or_else(|| CliError::Config(format!("{}: {key}: unsupported value {v}", origin.display())))?;
                entries.insert(key, Entry { value, line: None });
            }
        }
        Self::build(Source { path: origin, entries })
    }

    fn build(src: Source<'_>) -> Result<Self> {
        let beta: Option<f64> = src.get("model.beta")?;
        let temp: Option<f64> = src.get("model.T")?;
        let beta = match (beta, temp) {
            (Some(b), Some(t)) => {
                if ((b * t) - 1.0).abs() > 1e-12 {
                    return Err(src.err("model.T", format!("inconsistent with model.beta = {b} (beta = 1/T)")));
                }
                b
            }
            (Some(b), None) => b,
            (None, Some(t)) => {
                if !(t > 0.0) {
                    return Err(src.err("model.T", "must be > 0"));
                }
                1.0 / t
            }
            (None, None) => {
                return Err(CliError::Config(format!(
                    "{}: missing required key model.beta (or model.T)",
                    src.path.display()
                )))
            }
        };
        let tau = match src.entries.get("model.tau").map(|e| e.value.replace(' ', "")) {
            None => Tau::Fixed(1.0),
            Some(v) if v == "1/M^2" => Tau::InverseSquareSlices,
            Some(v) => Tau::Fixed(v.parse().map_err(|e| src.err("model.tau", format!("'{v}': {e} (number or 1/M^2)")))?),
        };
        let model = ModelSection {
            sites: src.require("model.N")?,
            slices: src.get("model.M")?,
            beta,
            gamma: src.require("model.gamma")?,
            h: src.get("model.h")?.unwrap_or(0.0),
            j0: src.get("model.J0")?.unwrap_or(0.0),
            tau,
        };

        let flow = match src.entries.get("run.flow") {
            None => FlowKind::Ferro,
            Some(e) => e.value.parse().map_err(|err: sqa_core::Error| src.err("run.flow", err))?,
        };
        let t_end: f64 = src.require("run.t_end")?;
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(src.err("run.t_end", "must be finite and > 0"));
        }
        let m_list = match src.list::<usize>("run.M_list")? {
            Some(list) if !list.is_empty() => list,
            Some(_) => return Err(src.err("run.M_list", "empty list")),
            None => match model.slices {
                Some(m) => vec![m],
                None => {
                    return Err(CliError::Config(format!(
                        "{}: missing required key model.M (or run.M_list)",
                        src.path.display()
                    )))
                }
            },
        };
        if let Some(&m) = m_list.iter().find(|&&m| m < 3) {
            return Err(src.err("run.M_list", format!("entries must be >= 3, got {m}")));
        }
        let run = RunSection {
            kind: src.get("run.kind")?,
            t_end,
            record_dt: src.get("run.record_dt")?,
            dt: src.get("run.dt")?,
            m0: src.get("run.m0")?,
            eps0: src.get("run.eps0")?,
            seeds: src.list("run.seeds")?.unwrap_or_default(),
            m_list,
            init: src.get("run.init")?.unwrap_or(InitMode::SliceReplicated),
            max_attempts: src.get("run.max_attempts")?,
            flow,
        };
        let output = OutputSection {
            dir: src.get::<PathBuf>("output.dir")?.unwrap_or_else(|| PathBuf::from("out")),
            format: src.get("output.format")?.unwrap_or(Format::Csv),
        };
        let raw = src.entries.into_iter().map(|(k, e)| (k, e.value)).collect();
        let cfg = ExperimentConfig { model, run, output, raw };
        for &m in &cfg.run.m_list {
            cfg.params(m)?;
        }
        Ok(cfg)
    }

    pub fn params(&self, slices: usize) -> Result<ModelParams> {
        let m = &self.model;
        ModelParams::new(m.sites, slices, m.beta, m.gamma, m.h, m.j0, m.tau.value(slices))
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn m0(&self) -> Result<f64> {
        let m0 = self.run.m0.ok_or_else(|| CliError::Config("missing required key run.m0".into()))?;
        if !(m0.abs() <= 1.0) {
            return Err(CliError::Config(format!("run.m0 = {m0} outside [-1, 1]")));
        }
        Ok(m0)
    }

    pub fn init_spec(&self) -> Result<InitSpec> {
        Ok(match self.run.init {
            InitMode::UniformUp => InitSpec::UniformUp,
            InitMode::Random => InitSpec::Random,
            InitMode::Magnetized => InitSpec::Magnetized(self.m0()?),
            InitMode::SliceReplicated => InitSpec::SliceReplicated(self.m0()?),
        })
    }

    /// Initial `(m, eps)` for the macroscopic flows; `eps` defaults to the
    /// value implied by `run.init`.
    pub fn initial_state(&self) -> Result<(f64, f64)> {
        let (m, implied) = match self.run.init {
            InitMode::UniformUp => (self.run.m0.unwrap_or(1.0), 1.0),
            InitMode::Random => (self.run.m0.unwrap_or(0.0), 0.0),
            InitMode::SliceReplicated => (self.m0()?, 1.0),
            InitMode::Magnetized => {
                let m = self.m0()?;
                (m, m * m)
            }
        };
        let eps = self.run.eps0.unwrap_or(implied);
        if !(eps.abs() <= 1.0) {
            return Err(CliError::Config(format!("run.eps0 = {eps} outside [-1, 1]")));
        }
        Ok((m, eps))
    }

    pub fn record_dt(&self) -> f64 {
        self.run.record_dt.unwrap_or(self.run.t_end / 100.0)
    }

    /// Integration step in simulation time: `run.dt`, else `tau/10` for the
    /// finite-M kinds and `1e-3 tau M^2` for the slow ones.
    pub fn flow_dt(&self, kind: FlowKind, slices: usize) -> f64 {
        self.run.dt.unwrap_or_else(|| {
            let tau = self.model.tau.value(slices);
            if kind.is_slow() {
                1e-3 * tau * (slices * slices) as f64
            } else {
                0.1 * tau
            }
        })
    }

    /// Nested JSON form of the configuration, suitable for `--json-config`.
    pub fn to_json(&self) -> Value {
        let mut sections: BTreeMap<&str, Map<String, Value>> = BTreeMap::new();
        for (k, v) in &self.raw {
            let (section, key) = k.split_once('.').expect("keys are dotted");
            sections.entry(section).or_default().insert(key.to_string(), Value::String(v.clone()));
        }
        Value::Object(sections.into_iter().map(|(k, v)| (k.to_string(), Value::Object(v))).collect())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let mut raw = self.raw.clone();
        raw.insert(key.to_string(), value.to_string());
        let entries = raw.into_iter().map(|(k, value)| (k, Entry { value, line: None })).collect();
        *self = Self::build(Source { path: Path::new("<override>"), entries })?;
        Ok(())
    }
}

fn json_scalar(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Array(items) => items.iter().map(json_scalar).collect::<Option<Vec<_>>>().map(|v| v.join(",")),
        _ => None,
    }
}
