use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use super::metrics::{compute_metrics, MetricsReport, RowSummary};
use super::records::{
    load_record, sha256_hex, ArtifactSummary, AttemptKind, AttemptRecord, CompletionMeta, PromptMeta, RequirementDir,
    Timestamps, RECORD_VERSION,
};
use super::suite::{Suite, SuiteEntry};
use super::{OrchestratorError, Pipeline, PreparedSpec};
use crate::harness::{classify, execute, ChainOutcome, ExecuteOptions, ExecutionReport};
use crate::parser::{parse_output, static_check, structural_check, CheckError, GeneratedArtifact, ParseError};
use crate::prompting::{
    append_rag_context, attempt_salt, build_improvement_prompt, build_system_prompt, build_user_prompt, select_context,
    ContextMode, ImprovementInputs, PromptBundle, RagComponents, RAG_DELIMITER, RAG_USER_MARKER,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowMode {
    /// Retry only non-executable outcomes; stop at the first other class.
    StopOnSuccess,
    /// Always run every attempt, independently.
    AllAttempts,
}

#[derive(Debug, Clone)]
pub struct FlowResult {
    pub dir: PathBuf,
    pub records: Vec<AttemptRecord>,
}

impl FlowResult {
    pub fn final_record(&self) -> Option<&AttemptRecord> {
        self.records.last()
    }

    /// The last attempt produced an executable script whose tests ran to
    /// a verdict.
    pub fn succeeded(&self) -> bool {
        use crate::harness::AutoClass::*;
        self.final_record().is_some_and(|r| matches!(r.outcome.auto, Passed | TestFailed))
    }

    pub fn final_script(&self) -> Option<PathBuf> {
        let r = self.final_record()?;
        r.artifact.as_ref().map(|a| self.dir.join(&a.script_file))
    }
}

/// System prompt and API section shared by the attempts of one requirement.
struct PromptPlan {
    system: String,
    api_context: String,
    mode: ContextMode,
    chunk_ids: Vec<String>,
    query_variants: Vec<String>,
    expansion_degraded: Option<String>,
}

fn plan_prompt(p: &Pipeline, entry: &SuiteEntry, spec: &PreparedSpec) -> Result<PromptPlan, OrchestratorError> {
    let tok = p.tokenizer.as_ref();
    let system = build_system_prompt(&p.templates, Some(&p.test_example), &p.env_docs())?;
    let limit = p.config.budget.limit();
    // room left for retrieved chunks once the fixed parts are in
    let fixed = tok.count(&system)
        + tok.count(&build_user_prompt(&p.templates, &entry.requirement, RAG_USER_MARKER))
        + tok.count(RAG_DELIMITER)
        + tok.count(&attempt_salt(p.config.generation.max_attempts.max(2)));
    let rag_budget = limit.saturating_sub(fixed);
    let rag = RagComponents {
        tokenizer: tok,
        embedder: p.embedder.as_ref(),
        gateway: &p.gateway,
        n_variants: p.config.rag.variants,
        top_k: p.config.rag.top_k,
        bounds: p.config.rag.bounds(),
        store: spec.store.as_ref(),
    };
    let sel = select_context(
        &spec.source_name,
        &spec.text,
        &entry.requirement,
        p.config.rag.threshold_tokens,
        rag_budget,
        &rag,
    )?;
    let plan = match sel.mode {
        ContextMode::FullSpec => PromptPlan {
            system,
            api_context: sel.text,
            mode: sel.mode,
            chunk_ids: vec![],
            query_variants: vec![],
            expansion_degraded: None,
        },
        ContextMode::Rag => PromptPlan {
            system: append_rag_context(&system, &sel.text),
            api_context: RAG_USER_MARKER.to_string(),
            mode: sel.mode,
            chunk_ids: sel.chunk_ids,
            query_variants: sel.variants.map(|v| v.variants).unwrap_or_default(),
            expansion_degraded: sel.degraded,
        },
    };
    Ok(plan)
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

struct AttemptSlot<'a> {
    kind: AttemptKind,
    index: u32,
    parent: Option<String>,
    dir: &'a RequirementDir,
}

/// Complete, parse, check, execute, classify and persist one attempt.
fn run_attempt(
    p: &Pipeline,
    entry: &SuiteEntry,
    spec: &PreparedSpec,
    plan: &PromptPlan,
    bundle: PromptBundle,
    slot: AttemptSlot<'_>,
) -> Result<AttemptRecord, OrchestratorError> {
    let started_at = now();
    let request = bundle.request();
    let stem = format!("{}-{:02}", if slot.kind == AttemptKind::Generate { "attempt" } else { "improve" }, slot.index);
    let mut errors: Vec<String> = Vec::new();
    let mut completion_meta = None;
    let mut artifact_summary = None;
    let mut script: Option<String> = None;
    let mut check = None;
    let mut execution: Option<ExecutionReport> = None;
    let mut execution_s = None;

    let chain = match p.gateway.complete(&request) {
        Err(e) => {
            errors.push(e.to_string());
            ChainOutcome::EmptyScript { reason: format!("no completion: {e}") }
        }
        Ok(c) => {
            completion_meta = Some(CompletionMeta {
                usage: c.usage,
                latency_s: c.latency_s,
                cost: c.reporting_cost(),
                replayed: c.replayed,
            });
            match parse_output(&c.text) {
                Err(ParseError::EmptyScript(reason)) => ChainOutcome::EmptyScript { reason },
                Ok(parsed) => {
                    let a = parsed.artifact;
                    artifact_summary = Some(ArtifactSummary {
                        requirement_summary: a.requirement_summary,
                        endpoints: a.endpoints,
                        warnings: parsed.warnings,
                        script_file: format!("{stem}.ts"),
                        script_sha256: sha256_hex(&a.script),
                    });
                    let result = match static_check(&a.script, p.checker.as_deref()) {
                        Ok(r) => r,
                        Err(CheckError::CheckerUnavailable(m)) => {
                            errors.push(format!("syntax checker unavailable, used structural check: {m}"));
                            structural_check(&a.script)
                        }
                        Err(CheckError::EmptyScript) => unreachable!("parser never yields a blank script"),
                    };
                    let chain = if !result.ok {
                        ChainOutcome::SyntaxRejected { diagnostics: result.syntax_errors.clone() }
                    } else {
                        let opts = ExecuteOptions {
                            timeout: Duration::from_secs_f64(p.config.runner.timeout_s),
                            keep_artifacts: p.keep_artifacts.then(|| slot.dir.path.join(format!("{stem}.run"))),
                        };
                        match execute(&a.script, &p.env, p.runner.as_ref(), &opts) {
                            Ok(report) => {
                                execution_s = Some(report.duration.as_secs_f64());
                                execution = Some(report.clone());
                                ChainOutcome::Executed { report }
                            }
                            Err(e) => {
                                errors.push(e.to_string());
                                ChainOutcome::RunnerUnavailable { message: e.to_string() }
                            }
                        }
                    };
                    check = Some(result);
                    script = Some(a.script);
                    chain
                }
            }
        }
    };
    let outcome = classify(&chain);
    tracing::info!(
        requirement = %entry.id,
        attempt = %stem,
        outcome = %outcome.auto,
        "attempt finished"
    );
    let record = AttemptRecord {
        record_version: RECORD_VERSION,
        requirement_id: entry.id.clone(),
        kind: slot.kind,
        attempt_index: slot.index,
        max_attempts: p.config.generation.max_attempts,
        parent: slot.parent,
        spec: spec.spec_ref(),
        prompt: PromptMeta {
            fingerprint: p.gateway.fingerprint(&request),
            model_id: p.gateway.config().model_id.clone(),
            context_mode: bundle.context_mode,
            template_version: bundle.template_version.clone(),
            token_estimate: bundle.token_estimate.clone(),
            chunk_ids: plan.chunk_ids.clone(),
            query_variants: plan.query_variants.clone(),
            expansion_degraded: plan.expansion_degraded.clone(),
        },
        completion: completion_meta,
        error: (!errors.is_empty()).then(|| p.env.redact_text(&errors.join("; "))),
        artifact: artifact_summary,
        check,
        execution,
        runner_id: p.runner.id().to_string(),
        env: p.env.redacted(),
        outcome,
        timestamps: Timestamps { started_at, finished_at: now(), execution_s },
    };
    slot.dir.persist(&record, script.as_deref())?;
    Ok(record)
}

/// Generate a script for one requirement, retrying non-executable results
/// up to the configured number of attempts.
pub fn generate_flow(
    p: &Pipeline,
    entry: &SuiteEntry,
    spec: &PreparedSpec,
    out: &Path,
    mode: FlowMode,
) -> Result<FlowResult, OrchestratorError> {
    let dir = RequirementDir::create_for_generation(out, entry)?;
    let plan = plan_prompt(p, entry, spec)?;
    let base_user = build_user_prompt(&p.templates, &entry.requirement, &plan.api_context);
    let mut records = Vec::new();
    for index in 1..=p.config.generation.max_attempts {
        let user = format!("{base_user}{}", attempt_salt(index));
        let bundle = PromptBundle::assemble(
            plan.system.clone(),
            user,
            plan.mode,
            &p.templates,
            p.tokenizer.as_ref(),
            p.config.budget,
        )?;
        let slot = AttemptSlot { kind: AttemptKind::Generate, index, parent: None, dir: &dir };
        let record = run_attempt(p, entry, spec, &plan, bundle, slot)?;
        let regenerable = record.outcome.auto.is_regenerable();
        records.push(record);
        if mode == FlowMode::StopOnSuccess && !regenerable {
            break;
        }
    }
    Ok(FlowResult { dir: dir.path, records })
}

/// Revise a prior attempt using its execution report and optional user
/// feedback. The new record links to the prior one.
pub fn improve_flow(
    p: &Pipeline,
    prior_path: &Path,
    spec: &PreparedSpec,
    feedback: Option<&str>,
) -> Result<AttemptRecord, OrchestratorError> {
    let prior = load_record(prior_path)?;
    let report = prior
        .execution
        .clone()
        .ok_or_else(|| OrchestratorError::Precondition("the prior attempt has no execution report".into()))?;
    let summary = prior
        .artifact
        .as_ref()
        .ok_or_else(|| OrchestratorError::Precondition("the prior attempt has no script".into()))?;
    let dir_path = prior_path.parent().unwrap_or(Path::new("."));
    let script_path = dir_path.join(&summary.script_file);
    let script = std::fs::read_to_string(&script_path)
        .map_err(|e| OrchestratorError::Io { path: script_path.display().to_string(), message: e.to_string() })?;
    let dir = RequirementDir { path: dir_path.to_path_buf() };
    let entry = dir.entry()?;
    if spec.sha256 != prior.spec.sha256 {
        tracing::warn!(prior = %prior.spec.sha256, now = %spec.sha256, "specification changed since the prior attempt");
    }
    let plan = plan_prompt(p, &entry, spec)?;
    let previous = GeneratedArtifact {
        requirement_summary: summary.requirement_summary.clone(),
        endpoints: summary.endpoints.clone(),
        script,
        raw: String::new(),
    };
    let inputs = ImprovementInputs {
        system: &plan.system,
        context_mode: plan.mode,
        requirement: &entry.requirement,
        api_context: &plan.api_context,
        previous: &previous,
        report: &report,
        feedback,
    };
    let bundle = build_improvement_prompt(&p.templates, &inputs, p.tokenizer.as_ref(), p.config.budget)?;
    let slot = AttemptSlot {
        kind: AttemptKind::Improve,
        index: dir.next_index(AttemptKind::Improve),
        parent: Some(prior.file_stem()),
        dir: &dir,
    };
    run_attempt(p, &entry, spec, &plan, bundle, slot)
}

#[derive(Debug)]
pub struct EvalResult {
    pub report: MetricsReport,
    pub rows: Vec<RowSummary>,
}

/// Run every suite requirement for exactly `max_attempts` independent
/// attempts and aggregate. Row failures are reported, never fatal.
pub fn eval_flow(p: &Pipeline, suite: &Suite, out: &Path) -> Result<EvalResult, OrchestratorError> {
    suite.validate()?;
    let mut paths: Vec<&Path> = suite.requirements.iter().map(|e| e.spec.as_path()).collect();
    paths.sort();
    paths.dedup();
    let prepared = crate::par::map(&paths, crate::par::Execution::default(), |path| {
        PreparedSpec::prepare(path, p).map_err(|e| e.to_string())
    });
    let specs: BTreeMap<&Path, Result<PreparedSpec, String>> = paths.into_iter().zip(prepared).collect();

    let rows = crate::par::map_bounded(&suite.requirements, p.config.generation.parallelism, |entry| {
        let spec = match &specs[entry.spec.as_path()] {
            Ok(s) => s,
            Err(e) => return RowSummary::failed(entry.clone(), format!("spec {}: {e}", entry.spec.display())),
        };
        match generate_flow(p, entry, spec, out, FlowMode::AllAttempts) {
            Ok(r) => RowSummary::from_records(entry.clone(), &r.records),
            Err(e) => {
                tracing::warn!(requirement = %entry.id, error = %e, "suite row failed");
                let mut row = RowSummary::failed(entry.clone(), e.to_string());
                row.original_tokens = spec.original_tokens;
                row.simplified_tokens = spec.simplified_tokens;
                row
            }
        }
    });
    Ok(EvalResult { report: compute_metrics(&rows)?, rows })
}
