//! Application configuration: one JSON document with `${VAR}` interpolation.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;
use serde_json::Value;

use super::CliError;
use crate::judge::{ExecLimits, Interpreter};
use crate::pipeline::RunConfig;

/// A credential. It has no `Serialize` impl and never prints its value.
#[derive(Clone, PartialEq, Eq, Deserialize)]
#[serde(transparent)]
pub struct Secret(String);

impl Secret {
    pub fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Secret(***)")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeName {
    Live,
    Record,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    pub mode: Option<ModeName>,
    pub endpoint: String,
    pub model_id: Option<String>,
    /// Environment variable holding the API key.
    pub api_key_env: String,
    /// Explicit key, normally written as `"${SOME_VAR}"`.
    pub api_key: Option<Secret>,
    pub store: Option<PathBuf>,
    pub timeout_secs: f64,
    pub max_in_flight: usize,
    pub max_attempts: u32,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            mode: None,
            endpoint: "https://api.openai.com/v1".into(),
            model_id: None,
            api_key_env: "OPENAI_API_KEY".into(),
            api_key: None,
            store: None,
            timeout_secs: 120.0,
            max_in_flight: crate::llmgateway::DEFAULT_CONCURRENCY,
            max_attempts: 3,
        }
    }
}

impl GatewayConfig {
    pub fn api_key(&self) -> Option<Secret> {
        self.api_key.clone().or_else(|| {
            std::env::var(&self.api_key_env)
                .ok()
                .filter(|k| !k.is_empty())
                .map(Secret)
        })
    }

    pub fn timeout(&self) -> Result<Duration, CliError> {
        Duration::try_from_secs_f64(self.timeout_secs)
            .ok()
            .filter(|d| !d.is_zero())
            .ok_or_else(|| {
                CliError::config(format!(
                    "gateway.timeout_secs must be positive, got {}",
                    self.timeout_secs
                ))
            })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JudgeConfig {
    pub limits: ExecLimits,
    pub interpreter: Interpreter,
    /// Worker threads; 0 means one per CPU.
    pub workers: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub corpus_path: Option<PathBuf>,
    pub library_path: Option<PathBuf>,
    pub shots_path: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub gateway: GatewayConfig,
    pub defaults: RunConfig,
    pub judge: JudgeConfig,
}

/// Replace every `${NAME}` in string values with the environment variable.
pub fn interpolate(value: &mut Value, lookup: &dyn Fn(&str) -> Option<String>) -> Result<(), CliError> {
    match value {
        Value::String(s) => {
            let mut out = String::with_capacity(s.len());
            let mut rest = s.as_str();
            while let Some(start) = rest.find("${") {
                out.push_str(&rest[..start]);
                let after = &rest[start + 2..];
                let end = after
                    .find('}')
                    .ok_or_else(|| CliError::config(format!("unterminated ${{ in config value {s:?}")))?;
                let name = &after[..end];
                let v =
                    lookup(name).ok_or_else(|| CliError::config(format!("environment variable {name} is not set")))?;
                out.push_str(&v);
                rest = &after[end + 1..];
            }
            out.push_str(rest);
            *s = out;
        }
        Value::Array(items) => {
            for v in items {
                interpolate(v, lookup)?;
            }
        }
        Value::Object(map) => {
            for v in map.values_mut() {
                interpolate(v, lookup)?;
            }
        }
        _ => {}
    }
    Ok(())
}

fn rebase(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl AppConfig {
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self, CliError> {
        let mut value: Value = serde_json::from_str(text).map_err(|e| CliError::config(format!("config: {e}")))?;
        interpolate(&mut value, &|name| std::env::var(name).ok())?;
        let mut cfg: AppConfig = serde_json::from_value(value).map_err(|e| CliError::config(format!("config: {e}")))?;
        for p in [
            &mut cfg.corpus_path,
            &mut cfg.library_path,
            &mut cfg.shots_path,
            &mut cfg.output_dir,
            &mut cfg.gateway.store,
        ] {
            rebase(base_dir, p);
        }
        if let Some(model) = &cfg.gateway.model_id {
            cfg.defaults.sampling.model_id = model.clone();
        }
        Ok(cfg)
    }

    /// Relative paths inside the file are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_json(&text, base)
    }
}
