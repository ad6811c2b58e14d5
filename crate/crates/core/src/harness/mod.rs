//! Executing generated scripts through a runner plugin and classifying the
//! result.

mod classify;
mod env;
mod runner;

use std::path::PathBuf;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use classify::{annotate, classify, AutoClass, ChainOutcome, ManualLabel, OutcomeClass, TableRow};
pub use env::{EnvBindings, EnvSource, RedactedEnv};
pub use runner::{CommandRunner, MockRunner, RunJob, RunnerPlugin, RunnerResult, WireTest, PROTOCOL_VERSION};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);
const STDERR_EXCERPT_CHARS: usize = 4000;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("runner unavailable: {0}")]
    RunnerUnavailable(String),
    #[error("runner protocol violation: {0}")]
    Protocol(String),
    #[error("nothing to execute: script is empty")]
    EmptyScript,
    #[error("annotation is only allowed on test_failed or semantic_error outcomes, not {0}")]
    InvalidAnnotationTarget(AutoClass),
    #[error("environment bindings: {0}")]
    Env(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    RunnerCrash,
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestOutcome {
    Passed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCaseResult {
    pub name: String,
    pub outcome: TestOutcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_message: Option<String>,
    #[serde(default)]
    pub duration_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionReport {
    pub status: RunStatus,
    pub tests: Vec<TestCaseResult>,
    pub stderr_excerpt: String,
    /// Wall-clock time; kept out of serialized reports so records stay
    /// reproducible. Attempt records carry it with their timestamps.
    #[serde(skip)]
    pub duration: Duration,
    pub exit_code: i32,
}

impl ExecutionReport {
    pub fn passed(&self) -> usize {
        self.tests.iter().filter(|t| t.outcome == TestOutcome::Passed).count()
    }

    pub fn failed(&self) -> usize {
        self.tests.iter().filter(|t| t.outcome == TestOutcome::Failed).count()
    }

    /// Plain-text rendering for the improvement prompt.
    pub fn render_for_prompt(&self) -> String {
        let status = match self.status {
            RunStatus::Completed => "completed",
            RunStatus::RunnerCrash => "runner crashed",
            RunStatus::Timeout => "timed out",
        };
        let mut s = format!(
            "Status: {status} (exit code {})\nTests: {} passed, {} failed\n",
            self.exit_code,
            self.passed(),
            self.failed()
        );
        for t in &self.tests {
            match t.outcome {
                TestOutcome::Passed => s.push_str(&format!("PASSED: {}\n", t.name)),
                TestOutcome::Failed => {
                    s.push_str(&format!("FAILED: {}\n", t.name));
                    if let Some(m) = &t.failure_message {
                        for line in m.lines() {
                            s.push_str("    ");
                            s.push_str(line);
                            s.push('\n');
                        }
                    }
                }
            }
        }
        if !self.stderr_excerpt.trim().is_empty() {
            s.push_str("Standard error:\n");
            s.push_str(self.stderr_excerpt.trim_end());
            s.push('\n');
        }
        s
    }
}

/// Keep the tail of `text`, where errors usually are.
pub fn excerpt(text: &str) -> String {
    let n = text.chars().count();
    if n <= STDERR_EXCERPT_CHARS {
        return text.to_string();
    }
    let skip = text.char_indices().nth(n - STDERR_EXCERPT_CHARS).map_or(0, |(i, _)| i);
    format!("...{}", &text[skip..])
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecuteOptions {
    pub timeout: Duration,
    /// Keep the working directory (script, env manifest, runner output) here.
    pub keep_artifacts: Option<PathBuf>,
}

impl Default for ExecuteOptions {
    fn default() -> Self {
        Self { timeout: DEFAULT_TIMEOUT, keep_artifacts: None }
    }
}

pub const SCRIPT_FILE: &str = "generated.test.ts";
pub const ENV_MANIFEST_FILE: &str = "env.json";

/// Run `script` in a fresh working directory. Secret values are redacted
/// from the returned report.
pub fn execute(
    script: &str,
    env: &EnvBindings,
    runner: &dyn RunnerPlugin,
    options: &ExecuteOptions,
) -> Result<ExecutionReport, HarnessError> {
    if script.trim().is_empty() {
        return Err(HarnessError::EmptyScript);
    }
    let io = |path: &std::path::Path| {
        let path = path.display().to_string();
        move |source| HarnessError::Io { path, source }
    };
    let dir = tempfile::Builder::new().prefix("specprobe-run-").tempdir().map_err(io(&std::env::temp_dir()))?;
    let script_path = dir.path().join(SCRIPT_FILE);
    let manifest_path = dir.path().join(ENV_MANIFEST_FILE);
    std::fs::write(&script_path, script).map_err(io(&script_path))?;
    std::fs::write(&manifest_path, env.manifest_json()).map_err(io(&manifest_path))?;

    let started = Instant::now();
    let result = runner.run(&RunJob {
        workdir: dir.path(),
        script_path: &script_path,
        env_manifest_path: &manifest_path,
        env,
        timeout: options.timeout,
    });
    let duration = started.elapsed();

    if let Some(keep) = &options.keep_artifacts {
        std::fs::create_dir_all(keep).map_err(io(keep))?;
        let dst = keep.join(SCRIPT_FILE);
        std::fs::copy(dir.path().join(SCRIPT_FILE), &dst).map_err(io(&dst))?;
        let dst = keep.join(ENV_MANIFEST_FILE);
        std::fs::write(&dst, env.redacted().manifest_json()).map_err(io(&dst))?;
    }
    drop(dir);

    let result = result?;
    let mut report = result.into_report(duration);
    env.redact_report(&mut report);
    Ok(report)
}
