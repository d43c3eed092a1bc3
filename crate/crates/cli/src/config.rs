//! Run configuration: one TOML document, overridden by flags.
//!
//! Precedence, lowest first: built-in defaults (the sampler preset), the
//! `--config` document, command-line flags. Relative paths in a document
//! are resolved against the document's directory, relative flag paths
//! against the working directory. When `--iterations` is given without
//! `--burn-in` and the resolved burn-in would not fit, the burn-in becomes
//! half the iterations.
//!
//! ```toml
//! preset = "desk"            # sampler starting point: desk or paper
//!
//! [data]
//! path = "data.csv"          # long CSV: time_index,delay,count[,series]
//! present_day = 114
//! maturity = 26
//!
//! [model]                    # model specification
//! variant = "gdm"
//! delay_horizon = 8
//!
//! [sampler]                  # any sampler field overrides the preset
//! n_chains = 4
//! seed = 7
//!
//! [output]
//! dir = "runs/gdm"
//! levels = [0.5, 0.95]
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use nowcast_core::mcmc::SamplerConfig;
use nowcast_core::model::ModelSpec;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::args::{DataArgs, FitArgs, OutArgs};
use crate::error::{invalid, CliResult};

pub const DEFAULT_LEVELS: [f64; 2] = [0.5, 0.95];
const DEFAULT_ROOT: &str = "nowcast-runs";
const TOP_KEYS: [&str; 5] = ["preset", "data", "model", "sampler", "output"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub path: PathBuf,
    pub present_day: usize,
    pub maturity: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub series: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub levels: Vec<f64>,
}

/// A fully resolved `fit` configuration; written back as the run's echo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub model: ModelSpec,
    pub sampler: SamplerConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn to_toml(&self) -> CliResult<String> {
        let body = toml::to_string(self).map_err(|e| invalid(format!("serializing config: {e}")))?;
        Ok(format!("# Resolved configuration; `nowcast fit --config <this file>` repeats the run.\n\n{body}"))
    }

    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| invalid(format!("run config: {e}")))
    }
}

/// A config document and the directory its relative paths refer to.
pub struct Document {
    table: Table,
    base: PathBuf,
}

impl Document {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self { table: Table::new(), base: PathBuf::new() });
        };
        let text = fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        let table: Table = text.parse().map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        if let Some(k) = table.keys().find(|k| !TOP_KEYS.contains(&k.as_str())) {
            return Err(invalid(format!("{}: unknown section '{k}'", path.display())));
        }
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { table, base })
    }

    fn section(&self, name: &str) -> CliResult<Table> {
        match self.table.get(name) {
            None => Ok(Table::new()),
            Some(Value::Table(t)) => Ok(t.clone()),
            Some(_) => Err(invalid(format!("'{name}' must be a table"))),
        }
    }

    fn path(&self, p: &str) -> PathBuf {
        self.base.join(p)
    }
}

fn absolute(p: &Path) -> CliResult<PathBuf> {
    std::path::absolute(p).map_err(|e| invalid(format!("{}: {e}", p.display())))
}

fn set<T: Into<Value>>(t: &mut Table, key: &str, v: Option<T>) {
    if let Some(v) = v {
        t.insert(key.to_string(), v.into());
    }
}

fn usize_value(v: usize) -> Value {
    Value::Integer(v as i64)
}

/// Recursively replaces entries of `base` by those of `top`.
fn overlay(base: &mut Table, top: Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(t)) => overlay(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn decode<T: serde::de::DeserializeOwned>(t: Table, what: &str) -> CliResult<T> {
    Value::Table(t).try_into().map_err(|e| invalid(format!("{what}: {e}")))
}

pub fn resolve_data(doc: &Document, args: &DataArgs) -> CliResult<DataConfig> {
    let mut t = doc.section("data")?;
    let path = match (&args.data, t.remove("path")) {
        (Some(p), _) => p.clone(),
        (None, Some(Value::String(p))) => doc.path(&p),
        (None, Some(_)) => return Err(invalid("data.path must be a string")),
        (None, None) => return Err(invalid("no data file: set data.path or --data")),
    };
    t.insert("path".into(), Value::String(String::new()));
    set(&mut t, "present_day", args.present_day.map(usize_value));
    set(&mut t, "maturity", args.maturity.map(usize_value));
    set(&mut t, "series", args.series.clone());
    for key in ["present_day", "maturity"] {
        if !t.contains_key(key) {
            return Err(invalid(format!("data.{key} is required (or --{})", key.replace('_', "-"))));
        }
    }
    let mut data: DataConfig = decode(t, "data")?;
    data.path = absolute(&path)?;
    Ok(data)
}

pub fn default_out(out: &OutArgs, command: &str) -> PathBuf {
    match (&out.out, &out.output_root) {
        (Some(dir), _) => dir.clone(),
        (None, Some(root)) => root.join(command),
        (None, None) => Path::new(DEFAULT_ROOT).join(command),
    }
}

pub fn validate_levels(levels: &[f64]) -> CliResult<()> {
    if levels.is_empty() {
        return Err(invalid("at least one interval level is required"));
    }
    if let Some(l) = levels.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
        return Err(invalid(format!("interval level {l} outside (0, 1)")));
    }
    Ok(())
}

pub fn resolve_fit(args: &FitArgs) -> CliResult<RunConfig> {
    let doc = Document::load(args.config.as_deref())?;
    let data = resolve_data(&doc, &args.data)?;

    let mut m = doc.section("model")?;
    set(&mut m, "variant", args.variant.clone());
    set(&mut m, "delay_horizon", args.delay_horizon.map(usize_value));
    if !m.contains_key("variant") {
        m.insert("variant".into(), Value::String("gdm".into()));
    }
    if let Some(Value::String(v)) = m.get("variant") {
        let parsed: nowcast_core::model::Variant = v.parse()?;
        m.insert("variant".into(), Value::String(parsed.name().into()));
    }
    if !m.contains_key("delay_horizon") {
        return Err(invalid("model.delay_horizon is required (or --delay-horizon)"));
    }
    let model: ModelSpec = decode(m, "model")?;
    model.validate()?;

    let preset = match (&args.preset, doc.table.get("preset")) {
        (Some(p), _) => p.clone(),
        (None, Some(Value::String(p))) => p.clone(),
        (None, Some(_)) => return Err(invalid("preset must be a string")),
        (None, None) => "desk".into(),
    };
    let mut s = Table::try_from(SamplerConfig::preset(&preset)?).map_err(|e| invalid(e.to_string()))?;
    overlay(&mut s, doc.section("sampler")?);
    set(&mut s, "n_chains", args.chains.map(usize_value));
    set(&mut s, "n_iterations", args.iterations.map(usize_value));
    set(&mut s, "burn_in", args.burn_in.map(usize_value));
    set(&mut s, "thin", args.thin.map(usize_value));
    set(&mut s, "threads", args.threads.map(usize_value));
    if let Some(seed) = args.seed {
        let seed = i64::try_from(seed).map_err(|_| invalid("seed must be below 2^63"))?;
        s.insert("seed".into(), Value::Integer(seed));
    }
    let mut sampler: SamplerConfig = decode(s, "sampler")?;
    if args.iterations.is_some() && args.burn_in.is_none() && sampler.burn_in >= sampler.n_iterations {
        sampler.burn_in = sampler.n_iterations / 2;
    }
    sampler.validate()?;

    let mut o = doc.section("output")?;
    let dir = match (&args.out.out, o.remove("dir")) {
        (Some(d), _) => d.clone(),
        (None, Some(Value::String(d))) => doc.path(&d),
        (None, Some(_)) => return Err(invalid("output.dir must be a string")),
        (None, None) => default_out(&args.out, "fit"),
    };
    let levels = match (&args.levels, o.remove("levels")) {
        (Some(l), _) => l.clone(),
        (None, Some(v)) => v.try_into().map_err(|e| invalid(format!("output.levels: {e}")))?,
        (None, None) => DEFAULT_LEVELS.to_vec(),
    };
    if let Some(k) = o.keys().next() {
        return Err(invalid(format!("output: unknown field '{k}'")));
    }
    validate_levels(&levels)?;

    Ok(RunConfig {
        data,
        model,
        sampler,
        output: OutputConfig { dir: absolute(&dir)?, levels },
    })
}
