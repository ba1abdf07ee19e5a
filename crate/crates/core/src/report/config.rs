use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::data::{generate_synthetic, load_cifar10_binary, Dataset, SyntheticConfig};
use crate::error::{Error, Result};
use crate::search::{Objective, SearchConfig};
use crate::train::{TrainConfig, TrainMode};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "EENAS_OUT";
pub const DEFAULT_OUT: &str = "eenas-out";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic,
    Cifar10,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub source: DataSource,
    pub path: Option<PathBuf>,
    pub seed: u64,
    pub per_class: usize,
    pub classes: usize,
    pub size: usize,
    pub noise: f64,
    pub jitter: bool,
    pub validation_fraction: f64,
}

impl Default for DatasetSection {
    fn default() -> Self {
        let s = SyntheticConfig::default();
        DatasetSection {
            source: DataSource::Synthetic,
            path: None,
            seed: s.seed,
            per_class: s.per_class,
            classes: s.classes,
            size: s.size,
            noise: s.noise,
            jitter: s.jitter,
            validation_fraction: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Constraints {
    pub min_accuracy: f64,
    pub max_macs: Option<f64>,
}

impl Default for Constraints {
    fn default() -> Self {
        let d = SearchConfig::desk();
        Constraints {
            min_accuracy: d.min_accuracy,
            max_macs: d.max_macs,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: [usize; 3],
    pub weights: [f64; 3],
    pub lambda_e: f64,
    pub mode: TrainMode,
    pub support_per_class: usize,
    pub exit_regularizer: bool,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::desk();
        TrainSection {
            epochs: t.epochs,
            weights: t.weights,
            lambda_e: t.lambda_e,
            mode: t.mode,
            support_per_class: t.support_per_class,
            exit_regularizer: t.exit_regularizer,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSection {
    pub n_start: usize,
    pub iterations: usize,
    pub population: usize,
    pub generations: usize,
    pub n_batch: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub k: usize,
    pub objective: Objective,
}

impl Default for SearchSection {
    fn default() -> Self {
        let s = SearchConfig::desk();
        SearchSection {
            n_start: s.n_start,
            iterations: s.iterations,
            population: s.population,
            generations: s.generations,
            n_batch: s.n_batch,
            crossover_rate: s.crossover_rate,
            mutation_rate: s.mutation_rate,
            k: s.k,
            objective: s.objective,
        }
    }
}

/// Everything a run needs, as read from a JSON config file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub dataset: DatasetSection,
    pub constraints: Constraints,
    pub train: TrainSection,
    pub search: SearchSection,
}

fn int(min: u64) -> Value {
    json!({"type": "integer", "minimum": min})
}

fn number(min: f64, max: Option<f64>) -> Value {
    let mut v = json!({"type": "number", "minimum": min});
    if let Some(m) = max {
        v["maximum"] = json!(m);
    }
    v
}

fn object(props: Value) -> Value {
    json!({"type": "object", "additionalProperties": false, "properties": props})
}

/// JSON Schema of the config file, published as `docs/config.schema.json`.
pub fn config_schema() -> Value {
    let mut root = object(json!({
        "seed": int(0),
        "out": {"type": ["string", "null"]},
        "dataset": object(json!({
            "source": {"enum": ["synthetic", "cifar10"]},
            "path": {"type": ["string", "null"]},
            "seed": int(0),
            "per_class": int(1),
            "classes": int(2),
            "size": int(4),
            "noise": number(0.0, None),
            "jitter": {"type": "boolean"},
            "validation_fraction": {"type": "number", "exclusiveMinimum": 0.0, "exclusiveMaximum": 1.0},
        })),
        "constraints": object(json!({
            "min_accuracy": number(0.0, Some(1.0)),
            "max_macs": {"type": ["number", "null"], "exclusiveMinimum": 0.0},
        })),
        "train": object(json!({
            "epochs": {"type": "array", "items": int(0), "minItems": 3, "maxItems": 3},
            "weights": {"type": "array", "items": number(0.0, None), "minItems": 3, "maxItems": 3},
            "lambda_e": number(0.0, None),
            "mode": {"enum": ["staged", "joint"]},
            "support_per_class": int(1),
            "exit_regularizer": {"type": "boolean"},
            "batch_size": int(1),
            "learning_rate": {"type": "number", "exclusiveMinimum": 0.0},
        })),
        "search": object(json!({
            "n_start": int(10),
            "iterations": int(0),
            "population": int(2),
            "generations": int(0),
            "n_batch": int(1),
            "crossover_rate": number(0.0, Some(1.0)),
            "mutation_rate": number(0.0, Some(1.0)),
            "k": int(1),
            "objective": {"enum": ["constrained", "unconstrained"]},
        })),
    }));
    root["$schema"] = json!("https://json-schema.org/draft/2020-12/schema");
    root["title"] = json!("eenas run configuration");
    root
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(n) if n.is_u64() || n.is_i64() => "integer",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

fn type_matches(expected: &str, v: &Value) -> bool {
    match expected {
        "number" => v.is_number(),
        "integer" => v.is_u64() || v.is_i64() || v.as_f64().is_some_and(|f| f.fract() == 0.0),
        other => type_name(v) == other,
    }
}

fn check(schema: &Value, v: &Value, path: &str, errs: &mut Vec<String>) {
    let at = if path.is_empty() { "(root)" } else { path };
    if let Some(t) = schema.get("type") {
        let ok = match t {
            Value::String(s) => type_matches(s, v),
            Value::Array(ts) => ts
                .iter()
                .filter_map(Value::as_str)
                .any(|s| type_matches(s, v)),
            _ => true,
        };
        if !ok {
            errs.push(format!("{at}: expected {t}, found {}", type_name(v)));
            return;
        }
    }
    if let Some(Value::Array(options)) = schema.get("enum") {
        if !options.contains(v) {
            errs.push(format!(
                "{at}: {v} is not one of {}",
                Value::Array(options.clone())
            ));
        }
    }
    if let Some(x) = v.as_f64() {
        let bound = |k: &str| schema.get(k).and_then(Value::as_f64);
        if bound("minimum").is_some_and(|m| x < m) {
            errs.push(format!(
                "{at}: {x} is below the minimum {}",
                bound("minimum").unwrap()
            ));
        }
        if bound("maximum").is_some_and(|m| x > m) {
            errs.push(format!(
                "{at}: {x} is above the maximum {}",
                bound("maximum").unwrap()
            ));
        }
        if bound("exclusiveMinimum").is_some_and(|m| x <= m) {
            errs.push(format!(
                "{at}: {x} must exceed {}",
                bound("exclusiveMinimum").unwrap()
            ));
        }
        if bound("exclusiveMaximum").is_some_and(|m| x >= m) {
            errs.push(format!(
                "{at}: {x} must be below {}",
                bound("exclusiveMaximum").unwrap()
            ));
        }
    }
    if let Value::Array(items) = v {
        let len = |k: &str| schema.get(k).and_then(Value::as_u64).map(|n| n as usize);
        if len("minItems").is_some_and(|n| items.len() < n)
            || len("maxItems").is_some_and(|n| items.len() > n)
        {
            errs.push(format!("{at}: wrong number of items ({})", items.len()));
        }
        if let Some(item_schema) = schema.get("items") {
            for (i, item) in items.iter().enumerate() {
                check(item_schema, item, &format!("{path}[{i}]"), errs);
            }
        }
    }
    if let Value::Object(map) = v {
        let props = schema.get("properties").and_then(Value::as_object);
        for (k, child) in map {
            let child_path = if path.is_empty() {
                k.clone()
            } else {
                format!("{path}.{k}")
            };
            match props.and_then(|p| p.get(k)) {
                Some(s) => check(s, child, &child_path, errs),
                None => errs.push(format!("{child_path}: unknown key")),
            }
        }
    }
}

/// Every schema violation in `v`, one message per offending key.
pub fn schema_errors(v: &Value) -> Vec<String> {
    let mut errs = Vec::new();
    check(&config_schema(), v, "", &mut errs);
    errs
}

impl RunConfig {
    pub fn from_value(v: &Value) -> Result<Self> {
        let mut errs = schema_errors(v);
        if errs.is_empty() {
            let cfg: RunConfig = serde_json::from_value(v.clone())
                .map_err(|e| Error::Schema(vec![e.to_string()]))?;
            errs.extend(cfg.semantic_errors());
            if errs.is_empty() {
                return Ok(cfg);
            }
        }
        Err(Error::Schema(errs))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text)
            .map_err(|e| Error::Schema(vec![format!("not valid JSON: {e}")]))?;
        RunConfig::from_value(&v)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::from_json(&text)
    }

    fn semantic_errors(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.dataset.source == DataSource::Cifar10 && self.dataset.path.is_none() {
            errs.push("dataset.path: required when dataset.source is \"cifar10\"".into());
        }
        if self.train.weights.iter().all(|w| *w == 0.0) {
            errs.push("train.weights: at least one weight must be positive".into());
        }
        errs
    }

    /// Canonical JSON form, with every default filled in.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Output directory: the explicit override, then the config, then
    /// `$EENAS_OUT`, then `eenas-out`.
    pub fn out_dir(&self, explicit: Option<&Path>) -> PathBuf {
        explicit
            .map(Path::to_path_buf)
            .or_else(|| self.out.clone())
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            epochs: t.epochs,
            weights: t.weights,
            lambda_e: t.lambda_e,
            mode: t.mode,
            min_accuracy: self.constraints.min_accuracy,
            max_macs: self.constraints.max_macs,
            support_per_class: t.support_per_class,
            exit_regularizer: t.exit_regularizer,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            seed: self.seed,
        }
    }

    pub fn search_config(&self) -> SearchConfig {
        let s = &self.search;
        SearchConfig {
            n_start: s.n_start,
            iterations: s.iterations,
            population: s.population,
            generations: s.generations,
            n_batch: s.n_batch,
            crossover_rate: s.crossover_rate,
            mutation_rate: s.mutation_rate,
            min_accuracy: self.constraints.min_accuracy,
            max_macs: self.constraints.max_macs,
            k: s.k,
            objective: s.objective,
            seed: self.seed,
        }
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        let d = &self.dataset;
        match d.source {
            DataSource::Synthetic => generate_synthetic(&SyntheticConfig {
                seed: d.seed,
                per_class: d.per_class,
                classes: d.classes,
                size: d.size,
                noise: d.noise,
                jitter: d.jitter,
            }),
            DataSource::Cifar10 => load_cifar10_binary(d.path.as_deref().expect("validated")),
        }
    }

    pub fn split_fractions(&self) -> (f64, f64) {
        let v = self.dataset.validation_fraction;
        (1.0 - v, v)
    }
}
