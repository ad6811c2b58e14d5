//! Attempt records and their on-disk layout.
//!
//! ```text
//! <out>/<requirement-id>/requirement.json
//! <out>/<requirement-id>/attempt-01.json      record
//! <out>/<requirement-id>/attempt-01.ts        script
//! <out>/<requirement-id>/attempt-01.annotation.json
//! <out>/<requirement-id>/improve-01.json
//! ```
//!
//! Records are never rewritten; manual verdicts go to annotation sidecars.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::suite::SuiteEntry;
use super::OrchestratorError;
use crate::gateway::Usage;
use crate::harness::{annotate, ExecutionReport, ManualLabel, OutcomeClass, RedactedEnv};
use crate::ingest::{serialize_document, TokenCount};
use crate::parser::{CheckResult, Endpoint, ParseWarning};
use crate::prompting::ContextMode;

pub const RECORD_VERSION: u32 = 1;
pub const REQUIREMENT_FILE: &str = "requirement.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttemptKind {
    Generate,
    Improve,
}

impl AttemptKind {
    fn prefix(self) -> &'static str {
        match self {
            AttemptKind::Generate => "attempt",
            AttemptKind::Improve => "improve",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecRef {
    pub source_name: String,
    pub sha256: String,
    pub original_tokens: usize,
    pub simplified_tokens: usize,
    pub tokenizer_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptMeta {
    pub fingerprint: String,
    pub model_id: String,
    pub context_mode: ContextMode,
    pub template_version: String,
    pub token_estimate: TokenCount,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub chunk_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub query_variants: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expansion_degraded: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionMeta {
    pub usage: Usage,
    pub latency_s: f64,
    /// Live cost, or the recorded cost of a replayed completion.
    pub cost: f64,
    pub replayed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactSummary {
    pub requirement_summary: String,
    pub endpoints: Vec<Endpoint>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<ParseWarning>,
    /// Script file name, relative to the record.
    pub script_file: String,
    pub script_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timestamps {
    pub started_at: String,
    pub finished_at: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub execution_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub record_version: u32,
    pub requirement_id: String,
    pub kind: AttemptKind,
    pub attempt_index: u32,
    pub max_attempts: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    pub spec: SpecRef,
    pub prompt: PromptMeta,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion: Option<CompletionMeta>,
    /// Gateway or runner failure surfaced for this attempt.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub artifact: Option<ArtifactSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check: Option<CheckResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub execution: Option<ExecutionReport>,
    pub runner_id: String,
    pub env: RedactedEnv,
    pub outcome: OutcomeClass,
    pub timestamps: Timestamps,
}

impl AttemptRecord {
    pub fn file_stem(&self) -> String {
        format!("{}-{:02}", self.kind.prefix(), self.attempt_index)
    }

    pub fn to_canonical_json(&self) -> String {
        serialize_document(&serde_json::to_value(self).expect("record serializes"))
    }
}

pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Directory name for a requirement id: anything outside `[A-Za-z0-9._-]`
/// becomes `_`.
pub fn requirement_dir_name(id: &str) -> String {
    let s: String =
        id.chars().map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') { c } else { '_' }).collect();
    if s.is_empty() || s.chars().all(|c| c == '.') {
        format!("_{s}")
    } else {
        s
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OrchestratorError + '_ {
    move |e| OrchestratorError::Io { path: path.display().to_string(), message: e.to_string() }
}

fn write_new(path: &Path, contents: &str) -> Result<(), OrchestratorError> {
    use std::io::Write;
    let mut f = std::fs::OpenOptions::new().write(true).create_new(true).open(path).map_err(io_err(path))?;
    f.write_all(contents.as_bytes()).map_err(io_err(path))
}

/// One requirement's output directory.
#[derive(Debug, Clone)]
pub struct RequirementDir {
    pub path: PathBuf,
}

impl RequirementDir {
    pub fn new(out: &Path, requirement_id: &str) -> Self {
        Self { path: out.join(requirement_dir_name(requirement_id)) }
    }

    /// Create the directory for a fresh generation run. Existing attempt
    /// records are never overwritten.
    pub fn create_for_generation(out: &Path, entry: &SuiteEntry) -> Result<Self, OrchestratorError> {
        let dir = Self::new(out, &entry.requirement.id);
        std::fs::create_dir_all(&dir.path).map_err(io_err(&dir.path))?;
        if dir.path.join("attempt-01.json").exists() {
            return Err(OrchestratorError::OutputExists(dir.path.display().to_string()));
        }
        let req_path = dir.path.join(REQUIREMENT_FILE);
        let json = serialize_document(&serde_json::to_value(entry).expect("entry serializes"));
        std::fs::write(&req_path, json).map_err(io_err(&req_path))?;
        Ok(dir)
    }

    pub fn entry(&self) -> Result<SuiteEntry, OrchestratorError> {
        let p = self.path.join(REQUIREMENT_FILE);
        let raw = std::fs::read_to_string(&p).map_err(io_err(&p))?;
        super::suite::entry_from_json(&raw).map_err(|e| OrchestratorError::Record(format!("{}: {e}", p.display())))
    }

    pub fn next_index(&self, kind: AttemptKind) -> u32 {
        (1..).find(|i| !self.path.join(format!("{}-{i:02}.json", kind.prefix())).exists()).expect("unbounded range")
    }

    /// Write the script first, then the record, both create-only.
    pub fn persist(&self, record: &AttemptRecord, script: Option<&str>) -> Result<PathBuf, OrchestratorError> {
        if let (Some(script), Some(a)) = (script, &record.artifact) {
            write_new(&self.path.join(&a.script_file), script)?;
        }
        let path = self.path.join(format!("{}.json", record.file_stem()));
        write_new(&path, &record.to_canonical_json())?;
        Ok(path)
    }

    /// Records of the given kind in index order, with annotations applied.
    pub fn records(&self, kind: AttemptKind) -> Result<Vec<AttemptRecord>, OrchestratorError> {
        let mut out = Vec::new();
        for i in 1.. {
            let p = self.path.join(format!("{}-{i:02}.json", kind.prefix()));
            if !p.exists() {
                break;
            }
            out.push(load_record(&p)?);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub label: ManualLabel,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
    pub annotated_at: String,
}

pub fn annotation_path(record_path: &Path) -> PathBuf {
    let stem = record_path.file_stem().and_then(|s| s.to_str()).unwrap_or("record");
    record_path.with_file_name(format!("{stem}.annotation.json"))
}

fn read_record(path: &Path) -> Result<AttemptRecord, OrchestratorError> {
    let raw = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&raw).map_err(|e| OrchestratorError::Record(format!("{}: {e}", path.display())))
}

/// Read a record and apply its annotation sidecar, if any.
pub fn load_record(path: &Path) -> Result<AttemptRecord, OrchestratorError> {
    let mut record = read_record(path)?;
    let ap = annotation_path(path);
    if ap.exists() {
        let raw = std::fs::read_to_string(&ap).map_err(io_err(&ap))?;
        let a: Annotation =
            serde_json::from_str(&raw).map_err(|e| OrchestratorError::Record(format!("{}: {e}", ap.display())))?;
        record.outcome = annotate(&record.outcome, a.label, &a.note)?;
    }
    Ok(record)
}

/// Record a manual verdict next to `record_path`, replacing an earlier one.
pub fn annotate_record(record_path: &Path, label: ManualLabel, note: &str) -> Result<OutcomeClass, OrchestratorError> {
    let record = read_record(record_path)?;
    let outcome = annotate(&record.outcome, label, note)?;
    let a = Annotation {
        label,
        note: note.to_string(),
        annotated_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
    };
    let ap = annotation_path(record_path);
    let json = serialize_document(&serde_json::to_value(&a).expect("annotation serializes"));
    std::fs::write(&ap, json).map_err(io_err(&ap))?;
    Ok(outcome)
}
