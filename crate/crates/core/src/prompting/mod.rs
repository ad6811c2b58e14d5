//! System, user and improvement prompt assembly.
//!
//! The system prompt is the Context, Performance and Output sections in
//! that order. In full-spec mode the serialized specification goes into the
//! user prompt's API section; in RAG mode the retrieved chunks are appended
//! to the system prompt after the Output section, under a delimiter line.

mod context;
mod templates;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expand::Requirement;
use crate::gateway::ChatRequest;
use crate::harness::ExecutionReport;
use crate::ingest::{count_tokens, TokenCount, Tokenizer};
use crate::parser::GeneratedArtifact;

pub use context::{route, select_context, RagComponents, SelectedContext, DEFAULT_RAG_THRESHOLD};
pub use templates::{render, PromptTemplateSet, TemplateKind, DEFAULT_TEMPLATE_VERSION};

/// Line separating the Output section from retrieved documentation.
pub const RAG_DELIMITER: &str = "===== RETRIEVED API DOCUMENTATION =====";
/// API section text when the specification travels in the system prompt.
pub const RAG_USER_MARKER: &str =
    "(The relevant parts of the API specification are provided in the system prompt under RETRIEVED API DOCUMENTATION.)";
/// Example script shown in the system prompt when none is configured.
pub const DEFAULT_TEST_EXAMPLE: &str = include_str!("templates/example.test.ts");
/// API section text when no API context is available.
pub const NO_API_CONTEXT: &str = "(no API context available)";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("missing value for placeholder {{{0}}}")]
    MissingPlaceholderValue(&'static str),
    #[error("template {template}: {message}")]
    Template { template: &'static str, message: String },
    #[error("prompt needs {needed} tokens but the budget is {budget}")]
    BudgetExceeded { needed: usize, budget: usize },
    #[error("retrieval returned no chunks")]
    EmptyRetrieval,
    #[error("retrieval failed: {0}")]
    Retrieval(#[from] crate::rag::RagError),
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextMode {
    FullSpec,
    Rag,
}

/// Model context window less a reserve for templates and output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContextBudget {
    pub window_tokens: usize,
    pub reserve_tokens: usize,
}

impl Default for ContextBudget {
    fn default() -> Self {
        Self { window_tokens: 128_000, reserve_tokens: 16_000 }
    }
}

impl ContextBudget {
    pub fn limit(&self) -> usize {
        self.window_tokens.saturating_sub(self.reserve_tokens)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system: String,
    pub user: String,
    pub context_mode: ContextMode,
    pub token_estimate: TokenCount,
    pub template_version: String,
}

impl PromptBundle {
    pub fn request(&self) -> ChatRequest {
        ChatRequest { system: self.system.clone(), user: self.user.clone() }
    }

    /// Check the token estimate against the budget and wrap up.
    pub fn assemble(
        system: String,
        user: String,
        context_mode: ContextMode,
        templates: &PromptTemplateSet,
        tokenizer: &dyn Tokenizer,
        budget: ContextBudget,
    ) -> Result<Self, PromptError> {
        let estimate = TokenCount {
            count: tokenizer.count(&system) + tokenizer.count(&user),
            tokenizer_id: tokenizer.id().to_string(),
        };
        if estimate.count > budget.limit() {
            return Err(PromptError::BudgetExceeded { needed: estimate.count, budget: budget.limit() });
        }
        Ok(Self { system, user, context_mode, token_estimate: estimate, template_version: templates.version.clone() })
    }
}

/// A named environment variable the generated script may read.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvVarDoc {
    pub name: String,
    pub description: String,
}

fn render_env_vars(env_vars: &[EnvVarDoc]) -> String {
    if env_vars.is_empty() {
        return String::new();
    }
    let mut s = String::from("\nAvailable environment variables (read them with process.env.NAME):\n");
    for v in env_vars {
        if v.description.is_empty() {
            s.push_str(&format!("- {}\n", v.name));
        } else {
            s.push_str(&format!("- {}: {}\n", v.name, v.description));
        }
    }
    s
}

pub fn build_system_prompt(
    templates: &PromptTemplateSet,
    test_example: Option<&str>,
    env_vars: &[EnvVarDoc],
) -> Result<String, PromptError> {
    let example = test_example.ok_or(PromptError::MissingPlaceholderValue("test_example"))?;
    let env = render_env_vars(env_vars);
    let context = render(&templates.context, &[("test_example", example), ("env_vars", &env)]);
    Ok(format!("{context}\n{}\n{}", templates.performance, templates.output))
}

/// Recover the Context, Performance and Output sections from a system
/// prompt built with `templates` (retrieved documentation is dropped).
pub fn split_system_sections<'a>(
    prompt: &'a str,
    templates: &PromptTemplateSet,
) -> Option<(&'a str, &'a str, &'a str)> {
    let perf_start = prompt.find(templates.performance.lines().next()?)?;
    let out_start = prompt.find(templates.output.lines().next()?)?;
    if perf_start >= out_start {
        return None;
    }
    let output_end = prompt.find(&format!("\n\n{RAG_DELIMITER}")).unwrap_or(prompt.len());
    Some((&prompt[..perf_start], &prompt[perf_start..out_start], &prompt[out_start..output_end]))
}

/// Append retrieved documentation after the Output section.
pub fn append_rag_context(system: &str, rag_context: &str) -> String {
    format!("{system}\n\n{RAG_DELIMITER}\n{rag_context}")
}

pub fn build_user_prompt(templates: &PromptTemplateSet, req: &Requirement, api_context: &str) -> String {
    let api = if api_context.trim().is_empty() { NO_API_CONTEXT } else { api_context };
    render(&templates.user, &[("requirement", &req.text), ("api_context", api)])
}

/// Text appended to the user prompt of retry attempts so each attempt has
/// its own fingerprint. Attempt 1 carries no salt.
pub fn attempt_salt(attempt_index: u32) -> String {
    if attempt_index <= 1 {
        String::new()
    } else {
        format!("\n[attempt {attempt_index}]\n")
    }
}

pub struct ImprovementInputs<'a> {
    pub system: &'a str,
    pub context_mode: ContextMode,
    pub requirement: &'a Requirement,
    pub api_context: &'a str,
    pub previous: &'a GeneratedArtifact,
    pub report: &'a ExecutionReport,
    pub feedback: Option<&'a str>,
}

pub fn build_improvement_prompt(
    templates: &PromptTemplateSet,
    inputs: &ImprovementInputs<'_>,
    tokenizer: &dyn Tokenizer,
    budget: ContextBudget,
) -> Result<PromptBundle, PromptError> {
    let feedback = match inputs.feedback.map(str::trim) {
        Some(f) if !f.is_empty() => format!("\nUSER FEEDBACK:\n{f}\n"),
        _ => String::new(),
    };
    let api = if inputs.api_context.trim().is_empty() { NO_API_CONTEXT } else { inputs.api_context };
    let report = inputs.report.render_for_prompt();
    let script = inputs.previous.script.strip_suffix('\n').unwrap_or(&inputs.previous.script);
    let user = render(
        &templates.improvement,
        &[
            ("requirement", &inputs.requirement.text),
            ("api_context", api),
            ("previous_script", script),
            ("execution_report", &report),
            ("user_feedback", &feedback),
        ],
    );
    PromptBundle::assemble(inputs.system.to_string(), user, inputs.context_mode, templates, tokenizer, budget)
}

pub fn prompt_tokens(bundle: &PromptBundle, tokenizer: &dyn Tokenizer) -> TokenCount {
    count_tokens(&format!("{}\n{}", bundle.system, bundle.user), tokenizer)
}
