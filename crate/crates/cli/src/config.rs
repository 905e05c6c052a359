use std::fs;
use std::path::{Path, PathBuf};

use dkg_norms::agent::{RemoteChatConfig, DEFAULT_API_KEY_ENV, DEFAULT_ENDPOINT};
use dkg_norms::prompting::{Condition, DEFAULT_MAX_TOKENS, DEFAULT_TEMPERATURE};
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BackendChoice {
    Oracle,
    Scripted,
    Remote,
}

/// Flat key-value file contents. Every field is optional so that command-line
/// flags can fill in or override values.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub corpus: Option<PathBuf>,
    pub conditions: Option<Vec<String>>,
    pub backend: Option<BackendChoice>,
    pub script: Option<PathBuf>,
    pub model: Option<String>,
    pub endpoint: Option<String>,
    pub api_key_env: Option<String>,
    pub temperature: Option<f32>,
    pub max_tokens: Option<u32>,
    pub parallelism: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub ratings: Option<PathBuf>,
}

impl RunConfigFile {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    /// Fields set in `over` replace those in `self`.
    pub fn merged(self, over: RunConfigFile) -> RunConfigFile {
        RunConfigFile {
            corpus: over.corpus.or(self.corpus),
            conditions: over.conditions.or(self.conditions),
            backend: over.backend.or(self.backend),
            script: over.script.or(self.script),
            model: over.model.or(self.model),
            endpoint: over.endpoint.or(self.endpoint),
            api_key_env: over.api_key_env.or(self.api_key_env),
            temperature: over.temperature.or(self.temperature),
            max_tokens: over.max_tokens.or(self.max_tokens),
            parallelism: over.parallelism.or(self.parallelism),
            output_dir: over.output_dir.or(self.output_dir),
            ratings: over.ratings.or(self.ratings),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub corpus: PathBuf,
    pub conditions: Vec<Condition>,
    pub backend: BackendChoice,
    pub script: Option<PathBuf>,
    pub model: String,
    pub endpoint: String,
    pub api_key_env: String,
    pub temperature: f32,
    pub max_tokens: u32,
    pub parallelism: usize,
    pub output_dir: PathBuf,
    pub ratings: Option<PathBuf>,
}

impl RunConfig {
    pub fn resolve(file: RunConfigFile, default_corpus: PathBuf) -> Result<RunConfig, String> {
        let conditions = match file.conditions {
            None => Condition::BOTH.to_vec(),
            Some(list) => {
                let mut out = Vec::new();
                for name in list {
                    if name == "both" {
                        out.extend(Condition::BOTH);
                    } else {
                        out.push(name.parse::<Condition>()?);
                    }
                }
                out.sort();
                out.dedup();
                out
            }
        };
        if conditions.is_empty() {
            return Err("at least one condition is required".into());
        }
        let parallelism = file.parallelism.unwrap_or(1);
        if parallelism == 0 {
            return Err("parallelism must be at least 1".into());
        }
        let backend = file.backend.unwrap_or(BackendChoice::Oracle);
        if backend == BackendChoice::Scripted && file.script.is_none() {
            return Err("the scripted backend needs a script file".into());
        }
        Ok(RunConfig {
            corpus: file.corpus.unwrap_or(default_corpus),
            conditions,
            backend,
            script: file.script,
            model: file.model.unwrap_or_else(|| "gpt-4".into()),
            endpoint: file.endpoint.unwrap_or_else(|| DEFAULT_ENDPOINT.into()),
            api_key_env: file.api_key_env.unwrap_or_else(|| DEFAULT_API_KEY_ENV.into()),
            temperature: file.temperature.unwrap_or(DEFAULT_TEMPERATURE),
            max_tokens: file.max_tokens.unwrap_or(DEFAULT_MAX_TOKENS),
            parallelism,
            output_dir: file.output_dir.unwrap_or_else(|| PathBuf::from("results")),
            ratings: file.ratings,
        })
    }

    pub fn remote(&self) -> RemoteChatConfig {
        RemoteChatConfig {
            endpoint: self.endpoint.clone(),
            model: self.model.clone(),
            api_key_env: self.api_key_env.clone(),
            max_in_flight: self.parallelism,
            ..RemoteChatConfig::default()
        }
    }
}
