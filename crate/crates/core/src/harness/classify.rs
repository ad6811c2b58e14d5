//! Outcome taxonomy for generation attempts.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{ExecutionReport, HarnessError, RunStatus, TestOutcome};
use crate::parser::Diagnostic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutoClass {
    EmptyScript,
    SyntaxError,
    SemanticError,
    Passed,
    TestFailed,
}

impl AutoClass {
    /// Non-executable outcomes that a fresh attempt may fix unattended.
    pub fn is_regenerable(self) -> bool {
        matches!(self, AutoClass::EmptyScript | AutoClass::SyntaxError)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AutoClass::EmptyScript => "empty_script",
            AutoClass::SyntaxError => "syntax_error",
            AutoClass::SemanticError => "semantic_error",
            AutoClass::Passed => "passed",
            AutoClass::TestFailed => "test_failed",
        }
    }
}

impl std::fmt::Display for AutoClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManualLabel {
    ApiDefect,
    InsufficientDocumentation,
    EnvironmentIssue,
    InvalidSemantics,
}

impl std::str::FromStr for ManualLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "api_defect" => Ok(ManualLabel::ApiDefect),
            "insufficient_documentation" => Ok(ManualLabel::InsufficientDocumentation),
            "environment_issue" => Ok(ManualLabel::EnvironmentIssue),
            "invalid_semantics" => Ok(ManualLabel::InvalidSemantics),
            other => Err(format!(
                "unknown label {other}; expected api_defect, insufficient_documentation, environment_issue or invalid_semantics"
            )),
        }
    }
}

/// Rows of the assessment table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TableRow {
    #[serde(rename = "a")]
    EmptyScript,
    #[serde(rename = "b")]
    SyntaxError,
    #[serde(rename = "c")]
    SemanticError,
    #[serde(rename = "d")]
    Pass,
    #[serde(rename = "e")]
    ApiDefect,
    #[serde(rename = "f")]
    InsufficientDocumentation,
    #[serde(rename = "g")]
    EnvironmentIssue,
}

impl TableRow {
    pub fn letter(self) -> char {
        match self {
            TableRow::EmptyScript => 'a',
            TableRow::SyntaxError => 'b',
            TableRow::SemanticError => 'c',
            TableRow::Pass => 'd',
            TableRow::ApiDefect => 'e',
            TableRow::InsufficientDocumentation => 'f',
            TableRow::EnvironmentIssue => 'g',
        }
    }

    pub fn is_valid(self) -> bool {
        self >= TableRow::Pass
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeClass {
    pub auto: AutoClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manual: Option<ManualLabel>,
    pub rationale: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl OutcomeClass {
    fn auto(auto: AutoClass, rationale: impl Into<String>) -> Self {
        Self { auto, manual: None, rationale: rationale.into(), note: None }
    }

    /// The table row this outcome lands in; `None` while a failed test
    /// awaits its manual verdict.
    pub fn table_row(&self) -> Option<TableRow> {
        match (self.auto, self.manual) {
            (AutoClass::EmptyScript, _) => Some(TableRow::EmptyScript),
            (AutoClass::SyntaxError, _) => Some(TableRow::SyntaxError),
            (AutoClass::Passed, _) => Some(TableRow::Pass),
            (_, Some(ManualLabel::ApiDefect)) => Some(TableRow::ApiDefect),
            (_, Some(ManualLabel::InsufficientDocumentation)) => Some(TableRow::InsufficientDocumentation),
            (_, Some(ManualLabel::EnvironmentIssue)) => Some(TableRow::EnvironmentIssue),
            (_, Some(ManualLabel::InvalidSemantics)) => Some(TableRow::SemanticError),
            (AutoClass::SemanticError, None) => Some(TableRow::SemanticError),
            (AutoClass::TestFailed, None) => None,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.table_row().is_some_and(TableRow::is_valid)
    }

    pub fn awaiting_review(&self) -> bool {
        self.table_row().is_none()
    }
}

/// What happened along parse, check and execute for one attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChainOutcome {
    /// No usable script: empty completion, no code block, or no completion.
    EmptyScript {
        reason: String,
    },
    /// The syntax check rejected the script.
    SyntaxRejected {
        diagnostics: Vec<Diagnostic>,
    },
    /// The runner could not be started.
    RunnerUnavailable {
        message: String,
    },
    Executed {
        report: ExecutionReport,
    },
}

fn syntax_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\bSyntaxError\b|\berror TS1\d{3}\b|\bTS1\d{3}:").unwrap())
}

fn assertion_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^\s*(?:Error:\s*)?(?:expect\(|AssertionError\b|JestAssertionError\b|assert\b|Expected\b)").unwrap()
    })
}

/// Runner-reported failure text counts as an assertion when its first
/// non-blank line is an assertion message.
pub fn is_assertion_failure(message: &str) -> bool {
    message.lines().find(|l| !l.trim().is_empty()).is_some_and(|l| assertion_re().is_match(l))
}

fn first_line(s: &str) -> &str {
    s.lines().find(|l| !l.trim().is_empty()).unwrap_or("").trim()
}

/// Map a chain outcome to exactly one automatic class.
pub fn classify(outcome: &ChainOutcome) -> OutcomeClass {
    match outcome {
        ChainOutcome::EmptyScript { reason } => OutcomeClass::auto(AutoClass::EmptyScript, reason.clone()),
        ChainOutcome::SyntaxRejected { diagnostics } => {
            let first = diagnostics
                .first()
                .map(|d| format!("{}:{} {}", d.line, d.column, d.message))
                .unwrap_or_else(|| "syntax check failed".into());
            OutcomeClass::auto(AutoClass::SyntaxError, format!("{} syntax error(s); first: {first}", diagnostics.len()))
        }
        ChainOutcome::RunnerUnavailable { message } => {
            OutcomeClass::auto(AutoClass::SemanticError, format!("runner unavailable: {message}"))
        }
        ChainOutcome::Executed { report } => classify_report(report),
    }
}

fn classify_report(report: &ExecutionReport) -> OutcomeClass {
    use AutoClass::*;
    // syntax diagnostics only count when no test got to run; a SyntaxError
    // thrown inside a test is a runtime failure (e.g. parsing a response)
    if report.tests.is_empty() && syntax_re().is_match(&report.stderr_excerpt) {
        let line = report.stderr_excerpt.lines().find(|l| syntax_re().is_match(l)).unwrap_or_default().trim();
        return OutcomeClass::auto(SyntaxError, format!("runner reported a syntax error: {line}"));
    }
    match report.status {
        RunStatus::Timeout => return OutcomeClass::auto(SemanticError, "execution timed out"),
        RunStatus::RunnerCrash => {
            return OutcomeClass::auto(SemanticError, format!("runner crashed: {}", first_line(&report.stderr_excerpt)))
        }
        RunStatus::Completed => {}
    }
    if report.tests.is_empty() {
        return OutcomeClass::auto(SemanticError, "no tests were executed");
    }
    let failed: Vec<_> = report.tests.iter().filter(|t| t.outcome == TestOutcome::Failed).collect();
    if failed.is_empty() {
        if report.exit_code != 0 {
            return OutcomeClass::auto(
                SemanticError,
                format!("all tests passed but the run exited with {}", report.exit_code),
            );
        }
        return OutcomeClass::auto(Passed, format!("{} test(s) passed", report.tests.len()));
    }
    let runtime = failed.iter().find(|t| !t.failure_message.as_deref().is_some_and(is_assertion_failure));
    match runtime {
        Some(t) => OutcomeClass::auto(
            SemanticError,
            format!(
                "test '{}' failed with a runtime error: {}",
                t.name,
                first_line(t.failure_message.as_deref().unwrap_or("no failure message"))
            ),
        ),
        None => OutcomeClass::auto(
            TestFailed,
            format!(
                "{} of {} test(s) failed on assertions; first: {}: {}",
                failed.len(),
                report.tests.len(),
                failed[0].name,
                first_line(failed[0].failure_message.as_deref().unwrap_or_default())
            ),
        ),
    }
}

/// Record a human verdict on an executed attempt; the automatic class is
/// kept.
pub fn annotate(outcome: &OutcomeClass, label: ManualLabel, note: &str) -> Result<OutcomeClass, HarnessError> {
    if !matches!(outcome.auto, AutoClass::TestFailed | AutoClass::SemanticError) {
        return Err(HarnessError::InvalidAnnotationTarget(outcome.auto));
    }
    Ok(OutcomeClass { manual: Some(label), note: (!note.is_empty()).then(|| note.to_string()), ..outcome.clone() })
}
