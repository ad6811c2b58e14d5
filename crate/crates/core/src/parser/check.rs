//! Syntax checking: an external checker command or a structural pre-check.

use std::io::Read;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use wait_timeout::ChildExt;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckResult {
    pub ok: bool,
    pub syntax_errors: Vec<Diagnostic>,
    /// Only the structural pre-check ran.
    pub structural_only: bool,
}

#[derive(Debug, Error)]
pub enum CheckError {
    #[error("nothing to check: script is empty")]
    EmptyScript,
    #[error("syntax checker unavailable: {0}")]
    CheckerUnavailable(String),
}

pub trait SyntaxChecker: Send + Sync {
    fn id(&self) -> &str;
    fn check(&self, script: &str) -> Result<CheckResult, CheckError>;
}

/// Check `script` with `checker`, or with the structural pre-check when no
/// checker is configured.
pub fn static_check(script: &str, checker: Option<&dyn SyntaxChecker>) -> Result<CheckResult, CheckError> {
    if script.trim().is_empty() {
        return Err(CheckError::EmptyScript);
    }
    match checker {
        Some(c) => c.check(script),
        None => Ok(structural_check(script)),
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StructuralChecker;

impl SyntaxChecker for StructuralChecker {
    fn id(&self) -> &str {
        "structural"
    }

    fn check(&self, script: &str) -> Result<CheckResult, CheckError> {
        Ok(structural_check(script))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Open {
    Paren,
    Bracket,
    Brace,
    /// `${` inside a template literal.
    Interp,
}

impl Open {
    fn closer(self) -> char {
        match self {
            Open::Paren => ')',
            Open::Bracket => ']',
            Open::Brace | Open::Interp => '}',
        }
    }
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
    line: usize,
    col: usize,
    errors: Vec<Diagnostic>,
}

impl<'a> Lexer<'a> {
    fn bump(&mut self) -> Option<char> {
        let (_, c) = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn peek(&mut self) -> Option<char> {
        self.chars.peek().map(|(_, c)| *c)
    }

    fn error(&mut self, line: usize, column: usize, message: impl Into<String>) {
        self.errors.push(Diagnostic { line, column, message: message.into() });
    }

    fn quoted(&mut self, quote: char, line: usize, col: usize) {
        while let Some(c) = self.bump() {
            match c {
                '\\' => {
                    self.bump();
                }
                '\n' => {
                    self.error(line, col, "unterminated string literal");
                    return;
                }
                c if c == quote => return,
                _ => {}
            }
        }
        self.error(line, col, "unterminated string literal");
    }

    /// Returns true when the template ended; false when it paused at `${`.
    fn template(&mut self, line: usize, col: usize) -> bool {
        while let Some(c) = self.bump() {
            match c {
                '\\' => {
                    self.bump();
                }
                '`' => return true,
                '$' if self.peek() == Some('{') => {
                    self.bump();
                    return false;
                }
                _ => {}
            }
        }
        self.error(line, col, "unterminated template literal");
        true
    }

    fn regex(&mut self, line: usize, col: usize) {
        let mut class = false;
        while let Some(c) = self.bump() {
            match c {
                '\\' => {
                    self.bump();
                }
                '[' => class = true,
                ']' => class = false,
                '/' if !class => {
                    while self.peek().is_some_and(|c| c.is_ascii_alphabetic()) {
                        self.bump();
                    }
                    return;
                }
                '\n' => break,
                _ => {}
            }
        }
        self.error(line, col, "unterminated regular expression literal");
    }
}

const REGEX_KEYWORDS: [&str; 9] = ["return", "typeof", "case", "do", "else", "in", "of", "void", "yield"];

/// Lexical pre-check for TypeScript/JavaScript: balanced brackets, closed
/// strings, template literals, comments and regex literals, and no stray
/// markdown fences.
pub fn structural_check(script: &str) -> CheckResult {
    let mut lx = Lexer { chars: script.char_indices().peekable(), line: 1, col: 1, errors: Vec::new() };
    let mut stack: Vec<(Open, usize, usize)> = Vec::new();
    // last significant token, for the regex-versus-division decision
    let mut prev_sig: Option<char> = None;
    let mut word = String::new();
    let mut last_word = String::new();
    let mut at_line_start = true;

    for (i, line) in script.lines().enumerate() {
        if line.trim_start().starts_with("```") {
            lx.errors.push(Diagnostic {
                line: i + 1,
                column: line.len() - line.trim_start().len() + 1,
                message: "stray markdown code fence".into(),
            });
        }
    }

    while let Some(c) = lx.peek() {
        let (line, col) = (lx.line, lx.col);
        if c.is_alphanumeric() || c == '_' || c == '$' {
            lx.bump();
            word.push(c);
            at_line_start = false;
            continue;
        }
        if !word.is_empty() {
            last_word = std::mem::take(&mut word);
            prev_sig = Some('a');
        }
        lx.bump();
        match c {
            '\n' => {
                at_line_start = true;
                continue;
            }
            c if c.is_whitespace() => continue,
            '#' if at_line_start && line == 1 && lx.peek() == Some('!') => {
                while lx.peek().is_some_and(|c| c != '\n') {
                    lx.bump();
                }
            }
            '/' => match lx.peek() {
                Some('/') => {
                    while lx.peek().is_some_and(|c| c != '\n') {
                        lx.bump();
                    }
                    continue;
                }
                Some('*') => {
                    lx.bump();
                    let mut closed = false;
                    while let Some(c) = lx.bump() {
                        if c == '*' && lx.peek() == Some('/') {
                            lx.bump();
                            closed = true;
                            break;
                        }
                    }
                    if !closed {
                        lx.error(line, col, "unterminated block comment");
                    }
                    continue;
                }
                _ => {
                    let regex_allowed = match prev_sig {
                        None => true,
                        Some('a') => REGEX_KEYWORDS.contains(&last_word.as_str()),
                        Some(p) => !matches!(p, ')' | ']' | '}' | '"' | '\'' | '`'),
                    };
                    if regex_allowed {
                        lx.regex(line, col);
                        prev_sig = Some('"');
                    } else {
                        prev_sig = Some('/');
                    }
                }
            },
            '"' | '\'' => {
                lx.quoted(c, line, col);
                prev_sig = Some('"');
            }
            '`' => {
                if !lx.template(line, col) {
                    stack.push((Open::Interp, line, col));
                    prev_sig = Some('{');
                } else {
                    prev_sig = Some('`');
                }
            }
            '(' | '[' | '{' => {
                let kind = match c {
                    '(' => Open::Paren,
                    '[' => Open::Bracket,
                    _ => Open::Brace,
                };
                stack.push((kind, line, col));
                prev_sig = Some(c);
            }
            ')' | ']' | '}' => {
                match stack.pop() {
                    None => lx.error(line, col, format!("unexpected '{c}'")),
                    Some((Open::Interp, l, k)) if c == '}' => {
                        if !lx.template(l, k) {
                            stack.push((Open::Interp, l, k));
                            prev_sig = Some('{');
                            continue;
                        }
                        prev_sig = Some('`');
                        continue;
                    }
                    Some((open, l, k)) if open.closer() != c => {
                        lx.error(
                            line,
                            col,
                            format!("expected '{}' to close the bracket opened at {l}:{k}, found '{c}'", open.closer()),
                        );
                        // keep the outer context aligned with what was actually closed
                        if let Some(pos) = stack.iter().rposition(|(o, _, _)| o.closer() == c) {
                            stack.truncate(pos);
                        } else {
                            stack.push((open, l, k));
                        }
                    }
                    Some(_) => {}
                }
                prev_sig = Some(c);
            }
            _ => prev_sig = Some(c),
        }
        at_line_start = false;
    }
    for (open, l, k) in stack {
        let what = if open == Open::Interp { "template literal" } else { "bracket" };
        lx.error(l, k, format!("unclosed {what}; expected '{}'", open.closer()));
    }
    lx.errors.sort_by_key(|d| (d.line, d.column));
    CheckResult { ok: lx.errors.is_empty(), syntax_errors: lx.errors, structural_only: true }
}

/// An external checker invoked as `<program> <args..> check <script-path>`.
///
/// Exit status 0 means the script compiles, 1 means syntax errors reported
/// as JSON on standard output, 2 is a usage error and 3 means the
/// toolchain is missing.
#[derive(Debug, Clone)]
pub struct CommandChecker {
    pub program: PathBuf,
    pub args: Vec<String>,
    pub timeout: Duration,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum DiagnosticsDoc {
    Wrapped { diagnostics: Vec<Diagnostic> },
    Bare(Vec<Diagnostic>),
}

impl CommandChecker {
    pub fn new(command: &[String]) -> Result<Self, CheckError> {
        let (program, args) =
            command.split_first().ok_or_else(|| CheckError::CheckerUnavailable("empty checker command".into()))?;
        Ok(Self { program: program.into(), args: args.to_vec(), timeout: Duration::from_secs(60) })
    }
}

impl SyntaxChecker for CommandChecker {
    fn id(&self) -> &str {
        "command"
    }

    fn check(&self, script: &str) -> Result<CheckResult, CheckError> {
        let unavailable = |m: String| CheckError::CheckerUnavailable(m);
        let dir = tempfile::tempdir().map_err(|e| unavailable(e.to_string()))?;
        let path = dir.path().join("generated.test.ts");
        std::fs::write(&path, script).map_err(|e| unavailable(e.to_string()))?;
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .arg("check")
            .arg(&path)
            .current_dir(dir.path())
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| unavailable(format!("{}: {e}", self.program.display())))?;
        let mut out = child.stdout.take().expect("piped stdout");
        let reader = std::thread::spawn(move || {
            let mut s = String::new();
            let _ = out.read_to_string(&mut s);
            s
        });
        let status = match child.wait_timeout(self.timeout).map_err(|e| unavailable(e.to_string()))? {
            Some(s) => s,
            None => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(unavailable(format!("checker timed out after {:?}", self.timeout)));
            }
        };
        let stdout = reader.join().unwrap_or_default();
        match status.code() {
            Some(0) => Ok(CheckResult { ok: true, syntax_errors: vec![], structural_only: false }),
            Some(1) => {
                let syntax_errors = match serde_json::from_str::<DiagnosticsDoc>(stdout.trim()) {
                    Ok(DiagnosticsDoc::Wrapped { diagnostics }) | Ok(DiagnosticsDoc::Bare(diagnostics)) => diagnostics,
                    Err(_) => vec![Diagnostic { line: 0, column: 0, message: stdout.trim().to_string() }],
                };
                Ok(CheckResult { ok: false, syntax_errors, structural_only: false })
            }
            Some(2) => Err(unavailable("checker reported a usage error".into())),
            other => Err(unavailable(format!("checker exited with {other:?}"))),
        }
    }
}
