//! Token-bounded chunking of serialized specifications.
//!
//! Chunks are contiguous, non-overlapping slices of the source, so their
//! in-order concatenation is the source byte for byte. Split points are
//! chosen in this order of preference: the start of a top-level path entry
//! or component schema, any line break, and finally a hard cut at the
//! token limit inside an oversized line.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::RagError;
use crate::ingest::Tokenizer;

pub const DEFAULT_MIN_TOKENS: usize = 800;
pub const DEFAULT_MAX_TOKENS: usize = 1200;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub id: String,
    pub text: String,
    pub token_count: usize,
    /// Path or schema name in effect where the chunk begins; empty when the
    /// chunk starts before the first such entry.
    pub anchor: String,
}

pub fn chunk_id(source_name: &str, ordinal: usize) -> String {
    format!("{source_name}#{ordinal:05}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkBounds {
    pub min_tokens: usize,
    pub max_tokens: usize,
}

impl Default for ChunkBounds {
    fn default() -> Self {
        Self { min_tokens: DEFAULT_MIN_TOKENS, max_tokens: DEFAULT_MAX_TOKENS }
    }
}

struct Line {
    start: usize,
    end: usize,
    tokens: usize,
    /// Set when this line opens a path entry or component schema.
    structural: Option<String>,
}

fn key_line() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#"^( *)"((?:[^"\\]|\\.)*)"\s*:"#).unwrap())
}

/// Scan canonical pretty JSON and flag the lines that open a path entry
/// (`paths.*`, `definitions.*`) or a component (`components.*.*`).
fn scan_lines(text: &str, tokenizer: &dyn Tokenizer) -> Vec<Line> {
    let mut lines = Vec::new();
    let mut keys: Vec<String> = Vec::new();
    let mut start = 0;
    for piece in text.split_inclusive('\n') {
        let end = start + piece.len();
        let mut structural = None;
        if let Some(caps) = key_line().captures(piece) {
            let indent = caps[1].len();
            if indent % 2 == 0 && indent >= 2 {
                let depth = indent / 2;
                keys.truncate(depth - 1);
                keys.push(caps[2].to_string());
                let opens_entry = matches!(
                    (depth, keys.first().map(String::as_str)),
                    (2, Some("paths" | "definitions")) | (3, Some("components"))
                );
                if opens_entry {
                    structural = Some(caps[2].to_string());
                }
            }
        }
        lines.push(Line { start, end, tokens: tokenizer.count(piece), structural });
        start = end;
    }
    lines
}

/// Split `text` into chunks whose token counts (under `tokenizer`) lie in
/// `[min_tokens, max_tokens]`, except the final chunk which may be smaller.
pub fn chunk_text(
    source_name: &str,
    text: &str,
    tokenizer: &dyn Tokenizer,
    bounds: ChunkBounds,
) -> Result<Vec<Chunk>, RagError> {
    if text.is_empty() {
        return Err(RagError::EmptyInput);
    }
    if bounds.min_tokens == 0 || bounds.min_tokens >= bounds.max_tokens {
        return Err(RagError::InvalidBounds { min: bounds.min_tokens, max: bounds.max_tokens });
    }
    let lines = scan_lines(text, tokenizer);
    let mut anchors: Vec<(usize, &str)> = Vec::new();
    for line in &lines {
        if let Some(a) = &line.structural {
            anchors.push((line.start, a));
        }
    }
    let anchor_at = |offset: usize| -> String {
        match anchors.partition_point(|(s, _)| *s <= offset) {
            0 => String::new(),
            i => anchors[i - 1].1.to_string(),
        }
    };

    let mut chunks = Vec::new();
    let mut pos = 0;
    // Index of the first line that ends after `pos`.
    let mut line_idx = 0;
    while pos < text.len() {
        while lines[line_idx].end <= pos {
            line_idx += 1;
        }
        let rest = &text[pos..];
        if let Some(rest_tokens) = bounded_count(tokenizer, rest, bounds.max_tokens) {
            if rest_tokens > 0 || chunks.is_empty() {
                chunks.push(make_chunk(source_name, chunks.len(), rest, rest_tokens, anchor_at(pos)));
            } else {
                // A token-free tail is folded into the previous chunk so
                // every chunk keeps a positive count.
                let last: &mut Chunk = chunks.last_mut().expect("non-empty");
                last.text.push_str(rest);
            }
            break;
        }
        let cut = next_cut(text, pos, line_idx, &lines, tokenizer, bounds);
        let body = &text[pos..cut];
        let tokens = tokenizer.count(body);
        chunks.push(make_chunk(source_name, chunks.len(), body, tokens, anchor_at(pos)));
        pos = cut;
    }
    Ok(chunks)
}

/// Count tokens in `s` unless the count exceeds `max`, in which case only
/// a prefix proportional to the budget is examined.
fn bounded_count(tokenizer: &dyn Tokenizer, s: &str, max: usize) -> Option<usize> {
    let mut len = 4096.max(max * 8);
    loop {
        let end = floor_boundary(s, len.min(s.len()));
        let count = tokenizer.count(&s[..end]);
        if count > max {
            return None;
        }
        if end == s.len() {
            return Some(count);
        }
        len = len.saturating_mul(4);
    }
}

fn floor_boundary(s: &str, mut i: usize) -> usize {
    while !s.is_char_boundary(i) {
        i -= 1;
    }
    i
}

fn next_boundary(s: &str, mut i: usize) -> usize {
    i += 1;
    while i < s.len() && !s.is_char_boundary(i) {
        i += 1;
    }
    i.min(s.len())
}

fn make_chunk(source: &str, ordinal: usize, body: &str, tokens: usize, anchor: String) -> Chunk {
    Chunk { id: chunk_id(source, ordinal), text: body.to_string(), token_count: tokens, anchor }
}

/// Choose the end of the chunk starting at `pos`.
fn next_cut(
    text: &str,
    pos: usize,
    first_line: usize,
    lines: &[Line],
    tokenizer: &dyn Tokenizer,
    bounds: ChunkBounds,
) -> usize {
    let in_window = |t: usize| t >= bounds.min_tokens && t <= bounds.max_tokens;

    // Line-break candidates with an additive running estimate; the first
    // line may be partial when a previous hard cut landed inside it.
    let mut structural = Vec::new();
    let mut breaks = Vec::new();
    let mut estimate = 0;
    let mut overflow_end = text.len();
    for (i, line) in lines.iter().enumerate().skip(first_line) {
        let seg_start = line.start.max(pos);
        let seg_tokens = if seg_start == line.start {
            Some(line.tokens)
        } else {
            bounded_count(tokenizer, &text[seg_start..line.end], bounds.max_tokens)
        };
        estimate += seg_tokens.unwrap_or(usize::MAX / 2);
        if estimate > bounds.max_tokens {
            overflow_end = line.end;
            break;
        }
        let cut = line.end;
        if cut >= text.len() {
            break;
        }
        if in_window(estimate) {
            if lines.get(i + 1).is_some_and(|l| l.structural.is_some()) {
                structural.push(cut);
            }
            breaks.push(cut);
        }
    }

    // Prefer the latest structural boundary, then the latest line break;
    // confirm each against an exact count of the slice.
    for cut in structural.iter().rev().chain(breaks.iter().rev()) {
        if in_window(tokenizer.count(&text[pos..*cut])) {
            return *cut;
        }
    }
    hard_cut(&text[..overflow_end], pos, tokenizer, bounds.max_tokens)
}

/// Largest char boundary `cut > pos` with `count(text[pos..cut]) <= max`,
/// found by galloping then bisecting over prefix lengths.
fn hard_cut(text: &str, pos: usize, tokenizer: &dyn Tokenizer, max: usize) -> usize {
    let fits = |end: usize| tokenizer.count(&text[pos..end]) <= max;
    let mut good = pos;
    let mut step = 256;
    let mut bad = loop {
        let probe = floor_boundary(text, (pos + step).min(text.len()));
        if probe > good {
            if !fits(probe) {
                break probe;
            }
            good = probe;
        }
        if probe == text.len() {
            return text.len();
        }
        step *= 2;
    };
    loop {
        let next = next_boundary(text, good);
        if next >= bad {
            break;
        }
        let mut mid = floor_boundary(text, good + (bad - good) / 2);
        if mid <= good {
            mid = next;
        }
        if fits(mid) {
            good = mid;
        } else {
            bad = mid;
        }
    }
    if good == pos {
        // A single character over budget; take it to make progress.
        next_boundary(text, pos)
    } else {
        good
    }
}
