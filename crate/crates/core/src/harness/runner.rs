//! The runner plugin boundary and its wire protocol.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::OnceLock;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use wait_timeout::ChildExt;

use super::{excerpt, EnvBindings, ExecutionReport, HarnessError, RunStatus, TestCaseResult, TestOutcome};

pub const PROTOCOL_VERSION: u32 = 1;

/// The single result document a runner prints on standard output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunnerResult {
    pub protocol_version: u32,
    pub status: RunStatus,
    pub tests: Vec<WireTest>,
    pub stderr_excerpt: String,
    pub exit_code: i32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireTest {
    pub name: String,
    pub outcome: TestOutcome,
    pub failure_message: Option<String>,
    pub duration_ms: u64,
}

impl RunnerResult {
    pub fn parse(document: &str) -> Result<Self, HarnessError> {
        let r: RunnerResult =
            serde_json::from_str(document.trim()).map_err(|e| HarnessError::Protocol(e.to_string()))?;
        if r.protocol_version != PROTOCOL_VERSION {
            return Err(HarnessError::Protocol(format!(
                "unsupported protocol_version {} (expected {PROTOCOL_VERSION})",
                r.protocol_version
            )));
        }
        Ok(r)
    }

    pub fn into_report(self, duration: Duration) -> ExecutionReport {
        ExecutionReport {
            status: self.status,
            tests: self
                .tests
                .into_iter()
                .map(|t| TestCaseResult {
                    name: t.name,
                    outcome: t.outcome,
                    failure_message: t.failure_message,
                    duration_ms: t.duration_ms,
                })
                .collect(),
            stderr_excerpt: excerpt(&self.stderr_excerpt),
            duration,
            exit_code: self.exit_code,
        }
    }

    fn failure(status: RunStatus, stderr: &str, exit_code: i32) -> Self {
        Self {
            protocol_version: PROTOCOL_VERSION,
            status,
            tests: Vec::new(),
            stderr_excerpt: excerpt(stderr),
            exit_code,
        }
    }
}

pub struct RunJob<'a> {
    pub workdir: &'a Path,
    pub script_path: &'a Path,
    pub env_manifest_path: &'a Path,
    pub env: &'a EnvBindings,
    pub timeout: Duration,
}

pub trait RunnerPlugin: Send + Sync {
    fn id(&self) -> &str;
    fn run(&self, job: &RunJob<'_>) -> Result<RunnerResult, HarnessError>;
}

/// An external runner invoked as
/// `<program> <args..> run <script-path> <env-manifest-path>`.
#[derive(Debug, Clone)]
pub struct CommandRunner {
    pub program: PathBuf,
    pub args: Vec<String>,
}

impl CommandRunner {
    pub fn new(command: &[String]) -> Result<Self, HarnessError> {
        let (program, args) =
            command.split_first().ok_or_else(|| HarnessError::RunnerUnavailable("empty runner command".into()))?;
        Ok(Self { program: program.into(), args: args.to_vec() })
    }
}

fn drain<R: Read + Send + 'static>(r: Option<R>) -> std::thread::JoinHandle<String> {
    std::thread::spawn(move || {
        let mut buf = Vec::new();
        if let Some(mut r) = r {
            let _ = r.read_to_end(&mut buf);
        }
        String::from_utf8_lossy(&buf).into_owned()
    })
}

impl RunnerPlugin for CommandRunner {
    fn id(&self) -> &str {
        "command"
    }

    fn run(&self, job: &RunJob<'_>) -> Result<RunnerResult, HarnessError> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .arg("run")
            .arg(job.script_path)
            .arg(job.env_manifest_path)
            .current_dir(job.workdir)
            .envs(job.env.variables())
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| HarnessError::RunnerUnavailable(format!("{}: {e}", self.program.display())))?;
        let out = drain(child.stdout.take());
        let err = drain(child.stderr.take());
        let waited = child.wait_timeout(job.timeout).map_err(|e| HarnessError::RunnerUnavailable(e.to_string()))?;
        let status = match waited {
            Some(s) => s,
            None => {
                let _ = child.kill();
                let _ = child.wait();
                // grandchildren may still hold the pipes open, so the
                // readers are left detached rather than joined
                let msg = format!("runner killed after {}s timeout", job.timeout.as_secs_f64());
                return Ok(RunnerResult::failure(RunStatus::Timeout, &msg, -1));
            }
        };
        let stdout = out.join().unwrap_or_default();
        let stderr = err.join().unwrap_or_default();
        let code = status.code().unwrap_or(-1);
        match RunnerResult::parse(&stdout) {
            Ok(mut r) => {
                if r.stderr_excerpt.is_empty() {
                    r.stderr_excerpt = excerpt(&stderr);
                }
                Ok(r)
            }
            Err(e) => {
                let msg = format!("{stderr}\n{e}");
                Ok(RunnerResult::failure(RunStatus::RunnerCrash, msg.trim_start(), if code == 0 { -1 } else { code }))
            }
        }
    }
}

/// Offline runner: answers from named fixture results. A script line
/// `// mock-result: <name>` selects a fixture; otherwise every `test(...)`
/// or `it(...)` in the script is reported as passed.
#[derive(Debug, Clone, Default)]
pub struct MockRunner {
    fixtures: BTreeMap<String, RunnerResult>,
}

fn directive_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?m)^\s*//\s*mock-result:\s*(\S+)\s*$").unwrap())
}

fn test_name_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#"\b(?:test|it)\s*\(\s*(?:'([^'\n]*)'|"([^"\n]*)"|`([^`\n]*)`)"#).unwrap())
}

impl MockRunner {
    pub fn new(fixtures: BTreeMap<String, RunnerResult>) -> Self {
        Self { fixtures }
    }

    /// Load a JSON object mapping fixture names to result documents.
    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|source| HarnessError::Io { path: path.display().to_string(), source })?;
        let fixtures: BTreeMap<String, RunnerResult> =
            serde_json::from_str(&raw).map_err(|e| HarnessError::Protocol(format!("{}: {e}", path.display())))?;
        for (name, r) in &fixtures {
            if r.protocol_version != PROTOCOL_VERSION {
                return Err(HarnessError::Protocol(format!("fixture {name}: unsupported protocol_version")));
            }
        }
        Ok(Self { fixtures })
    }

    pub fn result_for(&self, script: &str) -> Result<RunnerResult, HarnessError> {
        if let Some(c) = directive_re().captures(script) {
            let name = &c[1];
            return self
                .fixtures
                .get(name)
                .cloned()
                .ok_or_else(|| HarnessError::RunnerUnavailable(format!("mock runner has no fixture named {name}")));
        }
        let tests = test_name_re()
            .captures_iter(script)
            .map(|c| {
                let name = c.get(1).or(c.get(2)).or(c.get(3)).map_or("", |m| m.as_str());
                WireTest { name: name.to_string(), outcome: TestOutcome::Passed, failure_message: None, duration_ms: 0 }
            })
            .collect();
        Ok(RunnerResult {
            protocol_version: PROTOCOL_VERSION,
            status: RunStatus::Completed,
            tests,
            stderr_excerpt: String::new(),
            exit_code: 0,
        })
    }
}

impl RunnerPlugin for MockRunner {
    fn id(&self) -> &str {
        "mock"
    }

    fn run(&self, job: &RunJob<'_>) -> Result<RunnerResult, HarnessError> {
        let script = std::fs::read_to_string(job.script_path)
            .map_err(|source| HarnessError::Io { path: job.script_path.display().to_string(), source })?;
        self.result_for(&script)
    }
}
