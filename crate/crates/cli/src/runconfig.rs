//! Run configuration files: TOML or JSON mirroring `TrainConfig`, plus
//! `data` and `lab` tables. Errors point at the offending line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use tpcflow::eval::{Dataset2D, DatasetName};
use tpcflow::io;
use tpcflow::variance::LabOptions;
use tpcflow::{DataSource, TrainConfig};

use crate::exit::{CmdResult, Failure};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub dataset: Option<DatasetName>,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
    /// Point CSV, relative to the config file.
    pub csv: Option<PathBuf>,
    /// Coupling CSV, relative to the config file.
    pub coupling: Option<PathBuf>,
}

fn default_n() -> usize {
    10_000
}

fn default_noise() -> f64 {
    0.05
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            dataset: Some(DatasetName::TwoMoons),
            n: default_n(),
            noise: default_noise(),
            seed: 0,
            csv: None,
            coupling: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub path: PathBuf,
    /// Exact bytes of the file as read.
    pub raw: Vec<u8>,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub lab: LabOptions,
}

struct Source<'a> {
    path: &'a Path,
    text: &'a str,
    json: bool,
}

impl Source<'_> {
    /// 1-based line where `key` is defined, if it can be found.
    fn line_of(&self, key: &str) -> Option<usize> {
        self.text.lines().position(|l| {
            let l = l.trim_start();
            if self.json {
                l.starts_with(&format!("\"{key}\""))
            } else {
                l.strip_prefix(key).is_some_and(|r| r.trim_start().starts_with('='))
                    || l.starts_with(&format!("[{key}]"))
                    || l.starts_with(&format!("[{key}."))
            }
        })
        .map(|i| i + 1)
    }

    fn fail(&self, key: &str, msg: impl std::fmt::Display) -> Failure {
        match self.line_of(key) {
            Some(line) => Failure::config(format!("{}:{line}: `{key}`: {msg}", self.path.display())),
            None => Failure::config(format!("{}: `{key}`: {msg}", self.path.display())),
        }
    }
}

fn known_train_keys() -> Vec<String> {
    match serde_json::to_value(TrainConfig::default()) {
        Ok(Value::Object(m)) => m.keys().cloned().collect(),
        _ => Vec::new(),
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CmdResult<Self> {
        let raw = std::fs::read(path)
            .map_err(|e| Failure::config(format!("{}: cannot read config: {e}", path.display())))?;
        let text = std::str::from_utf8(&raw)
            .map_err(|_| Failure::config(format!("{}: config is not UTF-8", path.display())))?;
        let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let src = Source { path, text, json };
        let value: Value = if json {
            serde_json::from_str(text).map_err(|e| {
                Failure::config(format!("{}:{}: {e}", path.display(), e.line()))
            })?
        } else {
            let table: toml::Table = toml::from_str(text).map_err(|e| {
                let line = e
                    .span()
                    .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                    .unwrap_or(1);
                Failure::config(format!("{}:{line}: {}", path.display(), e.message()))
            })?;
            serde_json::to_value(table)?
        };
        let Value::Object(mut top) = value else {
            return Err(Failure::config(format!("{}:1: config must be a table", path.display())));
        };
        let data = match top.remove("data") {
            Some(v) => serde_json::from_value(v).map_err(|e| src.fail("data", e))?,
            None => DataConfig::default(),
        };
        let lab = match top.remove("lab") {
            Some(v) => serde_json::from_value(v).map_err(|e| src.fail("lab", e))?,
            None => LabOptions::default(),
        };
        let known = known_train_keys();
        for key in top.keys() {
            if !known.iter().any(|k| k == key) {
                return Err(src.fail(key, "unknown field"));
            }
        }
        for (key, v) in &top {
            let mut one = Map::new();
            one.insert(key.clone(), v.clone());
            serde_json::from_value::<TrainConfig>(Value::Object(one)).map_err(|e| src.fail(key, e))?;
        }
        let train: TrainConfig = serde_json::from_value(Value::Object(top))
            .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
        if let Err((field, msg)) = train.check() {
            return Err(src.fail(field, msg));
        }
        let sources = [data.dataset.is_some(), data.csv.is_some(), data.coupling.is_some()];
        if sources.iter().filter(|&&b| b).count() != 1 {
            return Err(src.fail("data", "set exactly one of `dataset`, `csv`, `coupling`"));
        }
        Ok(Self {
            path: path.to_path_buf(),
            raw,
            train,
            data,
            lab,
        })
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.path.parent().unwrap_or(Path::new(".")).join(p)
        }
    }

    pub fn data_source(&self) -> CmdResult<DataSource> {
        let d = &self.data;
        let source = if let Some(name) = d.dataset {
            DataSource::points(Dataset2D::new(name, d.n, d.noise, d.seed).generate()?)?
        } else if let Some(p) = &d.csv {
            let (_, rows) = io::load_points(&self.resolve(p))?;
            DataSource::points(rows)?
        } else if let Some(p) = &d.coupling {
            let (_, pairs) = io::load_coupling(&self.resolve(p))?;
            DataSource::coupling(pairs)?
        } else {
            unreachable!("validated in load")
        };
        if source.is_empty() {
            return Err(Failure::config("training data is empty"));
        }
        Ok(source)
    }
}
