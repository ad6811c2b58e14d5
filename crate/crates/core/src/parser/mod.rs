//! Turning raw completions into a structured artifact and checking the
//! extracted script.

mod check;

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use check::{
    static_check, structural_check, CheckError, CheckResult, CommandChecker, Diagnostic, StructuralChecker,
    SyntaxChecker,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("empty script: {0}")]
    EmptyScript(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseWarning {
    /// One or more of the section headers were not found.
    MalformedOutput,
    /// The ENDPOINTS section named no `METHOD /path` pairs.
    NoEndpoints,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Endpoint {
    pub method: String,
    pub path: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub notes: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedArtifact {
    pub requirement_summary: String,
    pub endpoints: Vec<Endpoint>,
    pub script: String,
    pub raw: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedOutput {
    pub artifact: GeneratedArtifact,
    pub warnings: Vec<ParseWarning>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Header {
    Requirement,
    Endpoints,
    Test,
}

#[derive(Debug)]
struct Fence {
    /// Byte offset of the first content line.
    start: usize,
    /// Byte offset of the closing fence line (or end of text).
    end: usize,
}

#[derive(Debug)]
struct Layout {
    headers: Vec<(Header, usize, usize)>,
    fences: Vec<Fence>,
}

fn header_of(line: &str) -> Option<(Header, usize)> {
    let trimmed = line.trim_start_matches(|c: char| c.is_whitespace() || matches!(c, '#' | '*' | '_'));
    let skip = line.len() - trimmed.len();
    for (name, h) in [("REQUIREMENT:", Header::Requirement), ("ENDPOINTS:", Header::Endpoints), ("TEST:", Header::Test)]
    {
        if let Some(rest) = trimmed.strip_prefix(name) {
            let rest_trim = rest.trim_start_matches(['*', '_']);
            return Some((h, skip + name.len() + (rest.len() - rest_trim.len())));
        }
    }
    None
}

fn fence_ticks(line: &str) -> usize {
    line.trim_start().bytes().take_while(|b| *b == b'`').count()
}

/// One pass over the lines: headers are only recognized outside fences.
fn scan(text: &str) -> Layout {
    let mut headers = Vec::new();
    let mut fences = Vec::new();
    let mut open: Option<(usize, usize)> = None;
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let next = offset + line.len();
        let body = line.trim_end_matches(['\n', '\r']);
        let ticks = fence_ticks(body);
        match open {
            Some((start, n)) => {
                if ticks >= n && body.trim().bytes().all(|b| b == b'`') {
                    fences.push(Fence { start, end: offset });
                    open = None;
                }
            }
            None => {
                if ticks >= 3 {
                    open = Some((next, ticks));
                } else if let Some((h, content)) = header_of(body) {
                    headers.push((h, offset, offset + content));
                }
            }
        }
        offset = next;
    }
    if let Some((start, _)) = open {
        fences.push(Fence { start, end: text.len() });
    }
    Layout { headers, fences }
}

fn endpoint_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"\b(GET|POST|PUT|PATCH|DELETE|HEAD|OPTIONS|TRACE)\b[`*\s]+(/[^\s`'\x22,;)*]*)(.*)").unwrap()
    })
}

/// Best-effort `METHOD /path` extraction, one endpoint per line at most,
/// duplicates dropped.
pub fn parse_endpoints(section: &str) -> Vec<Endpoint> {
    let mut out: Vec<Endpoint> = Vec::new();
    for line in section.lines() {
        let Some(c) = endpoint_re().captures(line) else { continue };
        let method = c[1].to_string();
        let path = c[2].trim_end_matches(['.', ':']).to_string();
        if out.iter().any(|e| e.method == method && e.path == path) {
            continue;
        }
        let notes = c[3]
            .trim()
            .trim_start_matches(|ch: char| matches!(ch, '`' | '*' | ':' | '-' | ')') || ch.is_whitespace())
            .trim()
            .to_string();
        out.push(Endpoint { method, path, notes });
    }
    out
}

/// Split a completion into summary, endpoints and script.
///
/// The script is the first fenced block after `TEST:`; without the headers
/// the first fenced block anywhere is used and the output is flagged.
pub fn parse_output(text: &str) -> Result<ParsedOutput, ParseError> {
    if text.trim().is_empty() {
        return Err(ParseError::EmptyScript("completion is empty".into()));
    }
    let layout = scan(text);
    let find = |h: Header| layout.headers.iter().find(|(k, _, _)| *k == h).copied();
    let req = find(Header::Requirement);
    let eps = find(Header::Endpoints);
    let test = find(Header::Test);

    let mut warnings = Vec::new();
    if req.is_none() || eps.is_none() || test.is_none() {
        warnings.push(ParseWarning::MalformedOutput);
    }

    let fence = match test {
        Some((_, _, content)) => layout.fences.iter().find(|f| f.start > content),
        None => layout.fences.first(),
    };
    let Some(fence) = fence else {
        return Err(ParseError::EmptyScript("no fenced code block".into()));
    };
    let script = &text[fence.start..fence.end];
    if script.trim().is_empty() {
        return Err(ParseError::EmptyScript("fenced code block is blank".into()));
    }

    // a section runs from its header to the next header or fence
    let section_end = |from: usize| {
        let next_header = layout.headers.iter().map(|(_, s, _)| *s).filter(|s| *s > from);
        let next_fence = layout
            .fences
            .iter()
            .map(|f| text[..f.start].trim_end_matches(['\n', '\r']).rfind('\n').map_or(0, |i| i + 1));
        next_header.chain(next_fence.filter(|s| *s > from)).min().unwrap_or(text.len())
    };
    let section = |h: Option<(Header, usize, usize)>| match h {
        Some((_, _, content)) => text[content..section_end(content)].trim().to_string(),
        None => String::new(),
    };

    let requirement_summary = section(req);
    let endpoints = parse_endpoints(&section(eps));
    if endpoints.is_empty() {
        warnings.push(ParseWarning::NoEndpoints);
    }
    if warnings.contains(&ParseWarning::MalformedOutput) {
        tracing::warn!("completion is missing section headers; using the first code block as the script");
    }
    Ok(ParsedOutput {
        artifact: GeneratedArtifact {
            requirement_summary,
            endpoints,
            script: script.to_string(),
            raw: text.to_string(),
        },
        warnings,
    })
}
