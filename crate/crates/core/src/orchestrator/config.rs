//! Versioned TOML configuration. Credentials never live here: providers
//! read them from the environment variables the config names.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::OrchestratorError;
use crate::expand::DEFAULT_VARIANTS;
use crate::gateway::LlmConfig;
use crate::ingest::{SimplificationRules, APPROX_TOKENIZER_ID};
use crate::prompting::{ContextBudget, DEFAULT_RAG_THRESHOLD};
use crate::rag::{ChunkBounds, DEFAULT_TOP_K};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub config_version: u32,
    pub tokenizer: String,
    pub simplification: SimplificationRules,
    pub rag: RagSettings,
    pub budget: ContextBudget,
    pub llm: LlmConfig,
    pub runner: RunnerSettings,
    pub checker: CheckerSettings,
    pub generation: GenerationSettings,
    pub env: EnvSettings,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            config_version: CONFIG_VERSION,
            tokenizer: APPROX_TOKENIZER_ID.into(),
            simplification: SimplificationRules::default(),
            rag: RagSettings::default(),
            budget: ContextBudget::default(),
            llm: LlmConfig::default(),
            runner: RunnerSettings::default(),
            checker: CheckerSettings::default(),
            generation: GenerationSettings::default(),
            env: EnvSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RagSettings {
    pub threshold_tokens: usize,
    pub top_k: usize,
    pub variants: usize,
    pub min_chunk_tokens: usize,
    pub max_chunk_tokens: usize,
    pub embedder: EmbedderSettings,
}

impl Default for RagSettings {
    fn default() -> Self {
        let b = ChunkBounds::default();
        Self {
            threshold_tokens: DEFAULT_RAG_THRESHOLD,
            top_k: DEFAULT_TOP_K,
            variants: DEFAULT_VARIANTS,
            min_chunk_tokens: b.min_tokens,
            max_chunk_tokens: b.max_tokens,
            embedder: EmbedderSettings::default(),
        }
    }
}

impl RagSettings {
    pub fn bounds(&self) -> ChunkBounds {
        ChunkBounds { min_tokens: self.min_chunk_tokens, max_tokens: self.max_chunk_tokens }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderKind {
    #[default]
    Hashing,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedderSettings {
    pub kind: EmbedderKind,
    pub model: String,
    pub base_url: String,
    pub dim: usize,
    pub api_key_env: String,
    pub timeout_s: f64,
}

impl Default for EmbedderSettings {
    fn default() -> Self {
        Self {
            kind: EmbedderKind::Hashing,
            model: "text-embedding-3-small".into(),
            base_url: "https://api.openai.com".into(),
            dim: 1536,
            api_key_env: "OPENAI_API_KEY".into(),
            timeout_s: 60.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunnerKind {
    #[default]
    Mock,
    Command,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunnerSettings {
    pub kind: RunnerKind,
    /// Program and leading arguments for a command runner.
    pub command: Vec<String>,
    /// Fixture results for the mock runner.
    pub fixtures: Option<PathBuf>,
    pub timeout_s: f64,
}

impl Default for RunnerSettings {
    fn default() -> Self {
        Self { kind: RunnerKind::Mock, command: Vec::new(), fixtures: None, timeout_s: 120.0 }
    }
}

/// An empty command selects the built-in structural pre-check.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckerSettings {
    pub command: Vec<String>,
    pub timeout_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationSettings {
    pub max_attempts: u32,
    /// Suite rows run concurrently up to this bound.
    pub parallelism: usize,
    /// Example script shown in the system prompt; a built-in one otherwise.
    pub test_example: Option<PathBuf>,
    pub templates_dir: Option<PathBuf>,
}

impl Default for GenerationSettings {
    fn default() -> Self {
        Self { max_attempts: 3, parallelism: 4, test_example: None, templates_dir: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSettings {
    /// JSON object of variables for generated scripts.
    pub file: Option<PathBuf>,
    /// Variables copied from the process environment.
    pub from_environment: Vec<String>,
    /// Descriptions shown to the model, by variable name.
    pub describe: BTreeMap<String, String>,
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl Config {
    pub fn parse(raw: &str) -> Result<Self, OrchestratorError> {
        let config: Config = toml::from_str(raw).map_err(|e| OrchestratorError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Load and validate; relative paths are taken relative to the file.
    pub fn load(path: &Path) -> Result<Self, OrchestratorError> {
        let raw =
            std::fs::read_to_string(path).map_err(|e| OrchestratorError::Config(format!("{}: {e}", path.display())))?;
        let mut config = Self::parse(&raw)?;
        let base = path.parent().unwrap_or(Path::new("."));
        resolve(base, &mut config.llm.transcript);
        resolve(base, &mut config.runner.fixtures);
        resolve(base, &mut config.generation.test_example);
        resolve(base, &mut config.generation.templates_dir);
        resolve(base, &mut config.env.file);
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), OrchestratorError> {
        let err = |m: String| Err(OrchestratorError::Config(m));
        if self.config_version != CONFIG_VERSION {
            return err(format!("unsupported config_version {} (expected {CONFIG_VERSION})", self.config_version));
        }
        if self.generation.max_attempts == 0 {
            return err("generation.max_attempts must be at least 1".into());
        }
        if self.generation.parallelism == 0 {
            return err("generation.parallelism must be at least 1".into());
        }
        let b = self.rag.bounds();
        if b.min_tokens == 0 || b.min_tokens > b.max_tokens {
            return err(format!("invalid chunk bounds [{}, {}]", b.min_tokens, b.max_tokens));
        }
        if self.rag.top_k == 0 {
            return err("rag.top_k must be at least 1".into());
        }
        if self.runner.timeout_s.is_nan() || self.runner.timeout_s <= 0.0 {
            return err("runner.timeout_s must be positive".into());
        }
        if self.runner.kind == RunnerKind::Command && self.runner.command.is_empty() {
            return err("runner.kind = \"command\" needs runner.command".into());
        }
        if self.budget.limit() == 0 {
            return err("budget leaves no room for the prompt".into());
        }
        self.llm.validate().map_err(|e| OrchestratorError::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = Config::parse("config_version = 1\n").unwrap();
        assert_eq!(c, Config::default());
        assert_eq!(c.generation.max_attempts, 3);
        assert_eq!(c.rag.threshold_tokens, 100_000);
        assert_eq!(c.runner.timeout_s, 120.0);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(Config::parse("config_version = 2\n").is_err());
        assert!(Config::parse("config_version = 1\nunknown = 3\n").is_err());
        assert!(Config::parse("[generation]\nmax_attempts = 0\n").is_err());
        assert!(Config::parse("[runner]\nkind = \"command\"\n").is_err());
        assert!(Config::parse("[llm]\nmode = \"replay\"\n").is_err());
        assert!(Config::parse("[rag]\nmin_chunk_tokens = 1300\n").is_err());
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "[llm]\nmode = \"replay\"\ntranscript = \"t.jsonl\"\n").unwrap();
        let c = Config::load(&path).unwrap();
        assert_eq!(c.llm.transcript.unwrap(), dir.path().join("t.jsonl"));
    }
}
