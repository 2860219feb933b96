use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

use qsynth::experiment::ExperimentConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Running,
    Complete,
    /// Outputs listed so far are partial.
    Failed,
}

#[derive(Debug, Serialize)]
pub struct RunEntry {
    pub run: usize,
    pub seed: u64,
}

/// Run record written next to the outputs: flattened config, seeds, versions and
/// final status. Rewritten on every change so an interrupted command leaves a
/// `running` or `failed` manifest behind.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub status: Status,
    pub error: Option<String>,
    pub versions: BTreeMap<&'static str, &'static str>,
    pub master_seed: u64,
    pub runs: Vec<RunEntry>,
    pub outputs: Vec<String>,
    pub config: BTreeMap<String, Value>,
    #[serde(skip)]
    path: PathBuf,
}

impl Manifest {
    pub fn start(dir: &Path, command: &str, cfg: &ExperimentConfig) -> Result<Self> {
        let mut config = BTreeMap::new();
        flatten("", &serde_json::to_value(cfg)?, &mut config);
        let manifest = Self {
            command: command.to_string(),
            status: Status::Running,
            error: None,
            versions: BTreeMap::from([("qsynth", env!("CARGO_PKG_VERSION")), ("manifest", "1")]),
            master_seed: cfg.master_seed,
            runs: Vec::new(),
            outputs: Vec::new(),
            config,
            path: dir.join("manifest.json"),
        };
        manifest.save()?;
        Ok(manifest)
    }

    pub fn save(&self) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(&self.path, text + "\n")
            .with_context(|| format!("writing {}", self.path.display()))
    }

    pub fn output(&mut self, path: &Path, root: &Path) -> Result<()> {
        let rel = path.strip_prefix(root).unwrap_or(path);
        self.outputs.push(rel.display().to_string());
        self.save()
    }

    /// Records the outcome of the command and passes it through.
    pub fn finish<T>(mut self, result: Result<T>) -> Result<T> {
        match &result {
            Ok(_) => self.status = Status::Complete,
            Err(e) => {
                self.status = Status::Failed;
                self.error = Some(format!("{e:#}"));
            }
        }
        self.save()?;
        result
    }
}

/// Dotted-key view of a JSON tree; arrays stay as values.
fn flatten(prefix: &str, value: &Value, out: &mut BTreeMap<String, Value>) {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, v, out);
            }
        }
        other => {
            out.insert(prefix.to_string(), other.clone());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flattening_uses_dotted_keys() {
        let mut out = BTreeMap::new();
        flatten(
            "",
            &serde_json::json!({"a": {"b": 1, "c": [1, 2]}, "d": "x"}),
            &mut out,
        );
        assert_eq!(out["a.b"], 1);
        assert_eq!(out["a.c"], serde_json::json!([1, 2]));
        assert_eq!(out["d"], "x");
    }
}
