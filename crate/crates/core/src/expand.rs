//! Requirement expansion: rephrase a business requirement into several
//! equivalent variants so retrieval does not hinge on one wording.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::gateway::{ChatRequest, LlmGateway};

pub const DEFAULT_VARIANTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetailTag {
    ConcreteData,
    Procedural,
}

/// A natural-language business requirement, typically a user story.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Requirement {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub detail_tags: BTreeSet<DetailTag>,
}

impl Requirement {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self { id: id.into(), text: text.into(), detail_tags: BTreeSet::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequirementVariantSet {
    pub original: Requirement,
    /// Element 0 is the original text, verbatim.
    pub variants: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expansion {
    pub set: RequirementVariantSet,
    /// Why expansion fell back to the original alone, if it did.
    pub degraded: Option<String>,
}

const EXPANSION_SYSTEM: &str = "You rewrite software business requirements. \
Produce {n} alternative phrasings of the requirement given by the user. \
Each phrasing must keep the exact meaning, mention the same entities and data, \
and use different wording. Reply with one phrasing per line and nothing else.";

pub fn expansion_request(req: &Requirement, rephrasings: usize) -> ChatRequest {
    ChatRequest { system: EXPANSION_SYSTEM.replace("{n}", &rephrasings.to_string()), user: req.text.clone() }
}

/// Split a completion into candidate phrasings: one per line, trimmed, with
/// leading list markers (`-`, `*`, `1.`, `2)`) removed.
pub fn parse_variant_lines(text: &str) -> Vec<String> {
    text.lines().map(strip_marker).map(str::to_string).collect()
}

fn strip_marker(line: &str) -> &str {
    let line = line.trim();
    if let Some(rest) = line.strip_prefix("- ").or_else(|| line.strip_prefix("* ")) {
        return rest.trim();
    }
    let digits = line.bytes().take_while(u8::is_ascii_digit).count();
    if digits > 0 {
        let rest = &line[digits..];
        if let Some(r) = rest.strip_prefix(". ").or_else(|| rest.strip_prefix(") ")) {
            return r.trim();
        }
    }
    line
}

/// Assemble the variant set from the original and provider lines: empties
/// and exact duplicates (including of the original) are dropped, and at
/// most `n_variants - 1` rephrasings are kept.
pub fn build_variant_set(req: &Requirement, n_variants: usize, lines: &[String]) -> RequirementVariantSet {
    let n = n_variants.max(1);
    let mut seen: HashSet<&str> = HashSet::new();
    let mut variants = vec![req.text.clone()];
    seen.insert(req.text.trim());
    for line in lines {
        if variants.len() >= n {
            break;
        }
        let line = line.trim();
        if line.is_empty() || !seen.insert(line) {
            continue;
        }
        variants.push(line.to_string());
    }
    RequirementVariantSet { original: req.clone(), variants }
}

/// Expand `req` into up to `n_variants` phrasings. Provider failure is not
/// fatal: the set degrades to the original alone.
pub fn expand(req: &Requirement, n_variants: usize, gateway: &LlmGateway) -> Expansion {
    if n_variants <= 1 {
        return Expansion { set: build_variant_set(req, 1, &[]), degraded: None };
    }
    match gateway.complete(&expansion_request(req, n_variants - 1)) {
        Ok(c) => Expansion { set: build_variant_set(req, n_variants, &parse_variant_lines(&c.text)), degraded: None },
        Err(e) => {
            tracing::warn!(requirement = %req.id, error = %e, "requirement expansion failed; using original only");
            Expansion { set: build_variant_set(req, 1, &[]), degraded: Some(e.to_string()) }
        }
    }
}
