//! Flag/config/default precedence and run manifests.

use std::path::{Path, PathBuf};

use clap::parser::ValueSource;
use clap::ArgMatches;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::CliError;

/// Written next to every result file. Its `params` can be fed back with
/// `--config` to repeat the run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub params: Value,
    pub master_seed: u64,
    pub artifact_version: String,
    /// RFC 3339, UTC.
    pub timestamp: String,
}

impl RunManifest {
    pub fn new(command: &str, params: &impl Serialize, master_seed: u64) -> Self {
        Self {
            command: command.to_string(),
            params: serde_json::to_value(params).expect("arguments serialize"),
            master_seed,
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        }
    }

    pub fn path_for(result: &Path) -> PathBuf {
        let stem = result.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        result.with_file_name(format!("{stem}.manifest.json"))
    }

    pub fn write(&self, result: &Path) -> Result<PathBuf, CliError> {
        let path = Self::path_for(result);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}

fn read_manifest(path: &Path, command: &str) -> Result<Map<String, Value>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
    let manifest: RunManifest = serde_json::from_str(&text)
        .map_err(|e| CliError::usage(format!("config {} is not a run manifest: {e}", path.display())))?;
    if manifest.command != command {
        return Err(CliError::usage(format!(
            "config {} was written by `{}`, not `{command}`",
            path.display(),
            manifest.command
        )));
    }
    match manifest.params {
        Value::Object(map) => Ok(map),
        _ => Err(CliError::usage(format!("config {}: params must be an object", path.display()))),
    }
}

fn from_command_line(matches: &ArgMatches, id: &str) -> bool {
    matches.value_source(id) == Some(ValueSource::CommandLine)
}

/// Resolves `parsed` as flags > config file > `--full-scale` values > defaults.
pub fn resolve<T: Serialize + DeserializeOwned>(
    parsed: T,
    matches: &ArgMatches,
    command: &str,
    config: Option<&Path>,
    full_scale: &[(&str, Value)],
) -> Result<T, CliError> {
    let Value::Object(mut values) = serde_json::to_value(&parsed).expect("arguments serialize") else {
        unreachable!("argument structs serialize to objects")
    };
    let file = match config {
        Some(path) => read_manifest(path, command)?,
        None => Map::new(),
    };
    for (key, value) in &file {
        if !values.contains_key(key) {
            return Err(CliError::usage(format!("config has unknown parameter `{key}` for `{command}`")));
        }
        if !from_command_line(matches, key) {
            values.insert(key.clone(), value.clone());
        }
    }
    if values.get("full_scale") == Some(&Value::Bool(true)) {
        for (key, value) in full_scale {
            if !from_command_line(matches, key) && !file.contains_key(*key) {
                values.insert(key.to_string(), value.clone());
            }
        }
    }
    serde_json::from_value(Value::Object(values)).map_err(|e| CliError::usage(format!("invalid parameter: {e}")))
}
