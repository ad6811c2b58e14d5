//! Generate, improve, execute and evaluate flows over configured
//! components.

mod config;
mod flows;
mod metrics;
mod records;
mod suite;

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;

pub use config::{
    CheckerSettings, Config, EmbedderKind, EmbedderSettings, EnvSettings, GenerationSettings, RagSettings, RunnerKind,
    RunnerSettings, CONFIG_VERSION,
};
pub use flows::{eval_flow, generate_flow, improve_flow, EvalResult, FlowMode, FlowResult};
pub use metrics::{compute_metrics, render_table, rows_from_dir, MetricsReport, MetricsRow, RowSummary, Subtotal};
pub use records::{
    annotate_record, annotation_path, load_record, requirement_dir_name, sha256_hex, Annotation, ArtifactSummary,
    AttemptKind, AttemptRecord, CompletionMeta, PromptMeta, RequirementDir, SpecRef, Timestamps, RECORD_VERSION,
    REQUIREMENT_FILE,
};
pub use suite::{entry_from_json, Suite, SuiteEntry};

use crate::gateway::{ChatProvider, GatewayError, GatewayMode, LlmGateway, OpenAiChatProvider};
use crate::harness::{CommandRunner, EnvBindings, HarnessError, MockRunner, RunnerPlugin};
use crate::ingest::{load_spec, serialize_document, simplify, IngestError, Tokenizer, TokenizerRegistry};
use crate::parser::{CommandChecker, SyntaxChecker};
use crate::prompting::{route, ContextMode, EnvVarDoc, PromptError, PromptTemplateSet, DEFAULT_TEST_EXAMPLE};
use crate::rag::{chunk_text, index, EmbeddingProvider, HashingEmbedder, HttpEmbedder, RagError, VectorStore};

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("suite manifest has no requirements")]
    EmptySuite,
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("output directory {0} already holds attempt records")]
    OutputExists(String),
    #[error("malformed record: {0}")]
    Record(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Rag(#[from] RagError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

impl OrchestratorError {
    /// Errors caused by configuration or inputs rather than by a pipeline
    /// run.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            OrchestratorError::Config(_)
                | OrchestratorError::EmptySuite
                | OrchestratorError::Ingest(_)
                | OrchestratorError::Gateway(GatewayError::Config(_))
                | OrchestratorError::Prompt(PromptError::Template { .. } | PromptError::Io { .. })
                | OrchestratorError::Harness(HarnessError::Env(_))
        )
    }
}

/// Configured components shared by every flow.
pub struct Pipeline {
    pub config: Config,
    pub gateway: LlmGateway,
    pub tokenizer: Arc<dyn Tokenizer>,
    pub embedder: Arc<dyn EmbeddingProvider>,
    pub runner: Arc<dyn RunnerPlugin>,
    pub checker: Option<Arc<dyn SyntaxChecker>>,
    pub templates: PromptTemplateSet,
    pub test_example: String,
    pub env: EnvBindings,
    pub keep_artifacts: bool,
}

fn cfg_err(e: impl std::fmt::Display) -> OrchestratorError {
    OrchestratorError::Config(e.to_string())
}

impl Pipeline {
    pub fn from_config(config: Config) -> Result<Self, OrchestratorError> {
        config.validate()?;
        let provider: Option<Arc<dyn ChatProvider>> = match config.llm.mode {
            GatewayMode::Replay => None,
            _ => match config.llm.provider_id.as_str() {
                "openai" => Some(Arc::new(OpenAiChatProvider)),
                other => return Err(cfg_err(format!("unknown llm.provider_id {other}"))),
            },
        };
        let gateway = LlmGateway::new(config.llm.clone(), provider)?;
        Self::with_gateway(config, gateway)
    }

    /// Build with an explicit gateway, e.g. one over a scripted provider.
    pub fn with_gateway(config: Config, gateway: LlmGateway) -> Result<Self, OrchestratorError> {
        config.validate()?;
        let tokenizer = TokenizerRegistry::default().get(&config.tokenizer)?;
        let embedder: Arc<dyn EmbeddingProvider> = match config.rag.embedder.kind {
            EmbedderKind::Hashing => Arc::new(HashingEmbedder),
            EmbedderKind::Http => {
                let e = &config.rag.embedder;
                Arc::new(HttpEmbedder {
                    base_url: e.base_url.clone(),
                    model: e.model.clone(),
                    dim: e.dim,
                    api_key_env: e.api_key_env.clone(),
                    timeout: Duration::from_secs_f64(e.timeout_s.max(0.0)),
                })
            }
        };
        let runner: Arc<dyn RunnerPlugin> = match config.runner.kind {
            RunnerKind::Mock => match &config.runner.fixtures {
                Some(p) => Arc::new(MockRunner::from_file(p)?),
                None => Arc::new(MockRunner::default()),
            },
            RunnerKind::Command => Arc::new(CommandRunner::new(&config.runner.command)?),
        };
        let checker: Option<Arc<dyn SyntaxChecker>> = if config.checker.command.is_empty() {
            None
        } else {
            let mut c = CommandChecker::new(&config.checker.command).map_err(cfg_err)?;
            if let Some(t) = config.checker.timeout_s {
                c.timeout = Duration::from_secs_f64(t.max(0.0));
            }
            Some(Arc::new(c))
        };
        let templates = match &config.generation.templates_dir {
            Some(dir) => PromptTemplateSet::load_dir(dir)?,
            None => PromptTemplateSet::default(),
        };
        let test_example = match &config.generation.test_example {
            Some(p) => std::fs::read_to_string(p).map_err(|e| cfg_err(format!("{}: {e}", p.display())))?,
            None => DEFAULT_TEST_EXAMPLE.to_string(),
        };
        let mut env = EnvBindings::default();
        if let Some(f) = &config.env.file {
            env = env.merge(EnvBindings::from_file(f)?);
        }
        if !config.env.from_environment.is_empty() {
            env = env.merge(EnvBindings::from_environment(&config.env.from_environment)?);
        }
        Ok(Self {
            config,
            gateway,
            tokenizer,
            embedder,
            runner,
            checker,
            templates,
            test_example,
            env,
            keep_artifacts: false,
        })
    }

    pub fn with_runner(mut self, runner: Arc<dyn RunnerPlugin>) -> Self {
        self.runner = runner;
        self
    }

    pub fn with_env(mut self, env: EnvBindings) -> Self {
        self.env = env;
        self
    }

    pub fn env_docs(&self) -> Vec<EnvVarDoc> {
        self.env
            .names()
            .map(|n| EnvVarDoc {
                name: n.to_string(),
                description: self.config.env.describe.get(n).cloned().unwrap_or_default(),
            })
            .collect()
    }
}

/// A loaded, simplified and (when large) indexed specification.
#[derive(Debug)]
pub struct PreparedSpec {
    pub path: PathBuf,
    pub source_name: String,
    /// Serialized simplified document, as sent to the model.
    pub text: String,
    pub sha256: String,
    pub original_tokens: usize,
    pub simplified_tokens: usize,
    pub tokenizer_id: String,
    pub store: Option<VectorStore>,
}

impl PreparedSpec {
    pub fn prepare(path: &Path, pipeline: &Pipeline) -> Result<Self, OrchestratorError> {
        let spec = load_spec(path)?;
        let original = serialize_document(&spec.document);
        let simplified = simplify(&spec, &pipeline.config.simplification);
        let text = crate::ingest::serialize(&simplified);
        let tok = pipeline.tokenizer.as_ref();
        let simplified_tokens = tok.count(&text);
        let store = match route(simplified_tokens, pipeline.config.rag.threshold_tokens) {
            ContextMode::FullSpec => None,
            ContextMode::Rag => {
                let chunks = chunk_text(&spec.source_name, &text, tok, pipeline.config.rag.bounds())?;
                Some(index(chunks, pipeline.embedder.as_ref())?)
            }
        };
        Ok(Self {
            path: path.to_path_buf(),
            source_name: spec.source_name.clone(),
            sha256: sha256_hex(&original),
            original_tokens: tok.count(&original),
            simplified_tokens,
            tokenizer_id: tok.id().to_string(),
            text,
            store,
        })
    }

    pub fn spec_ref(&self) -> SpecRef {
        SpecRef {
            source_name: self.source_name.clone(),
            sha256: self.sha256.clone(),
            original_tokens: self.original_tokens,
            simplified_tokens: self.simplified_tokens,
            tokenizer_id: self.tokenizer_id.clone(),
        }
    }
}
