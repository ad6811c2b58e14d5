//! Rule-driven reduction of an OpenAPI document.
//!
//! Every rule only removes nodes or shortens strings, so the token count of
//! the canonical rendering can only go down. Each rule is applied until it
//! reaches a fixed point, which makes the whole pass idempotent.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{ApiSpec, HTTP_METHODS};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimplificationRules {
    pub strip_image_tags: bool,
    pub strip_deprecated: bool,
    /// Operations carrying any of these tags (case-insensitive) are dropped.
    pub strip_tag_names: Vec<String>,
    /// Path items whose template starts with any of these prefixes are dropped.
    pub strip_path_prefixes: Vec<String>,
    pub strip_extension_keys: bool,
    pub max_description_length: Option<usize>,
}

impl Default for SimplificationRules {
    fn default() -> Self {
        Self {
            strip_image_tags: true,
            strip_deprecated: true,
            strip_tag_names: vec!["admin".into(), "internal".into(), "management".into()],
            strip_path_prefixes: vec!["/admin".into(), "/internal".into(), "/management".into()],
            strip_extension_keys: false,
            max_description_length: None,
        }
    }
}

impl SimplificationRules {
    pub fn none() -> Self {
        Self {
            strip_image_tags: false,
            strip_deprecated: false,
            strip_tag_names: Vec::new(),
            strip_path_prefixes: Vec::new(),
            strip_extension_keys: false,
            max_description_length: None,
        }
    }
}

/// Counts of removed nodes by category.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemovalReport {
    pub images: usize,
    pub deprecated_operations: usize,
    pub deprecated_parameters: usize,
    pub administrative_operations: usize,
    pub administrative_paths: usize,
    pub tag_definitions: usize,
    pub extension_keys: usize,
    pub truncated_descriptions: usize,
    pub empty_paths: usize,
}

impl RemovalReport {
    pub fn total(&self) -> usize {
        self.images
            + self.deprecated_operations
            + self.deprecated_parameters
            + self.administrative_operations
            + self.administrative_paths
            + self.tag_definitions
            + self.extension_keys
            + self.truncated_descriptions
            + self.empty_paths
    }

    pub fn by_category(&self) -> BTreeMap<&'static str, usize> {
        BTreeMap::from([
            ("images", self.images),
            ("deprecated_operations", self.deprecated_operations),
            ("deprecated_parameters", self.deprecated_parameters),
            ("administrative_operations", self.administrative_operations),
            ("administrative_paths", self.administrative_paths),
            ("tag_definitions", self.tag_definitions),
            ("extension_keys", self.extension_keys),
            ("truncated_descriptions", self.truncated_descriptions),
            ("empty_paths", self.empty_paths),
        ])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplifiedSpec {
    pub spec: ApiSpec,
    pub rules: SimplificationRules,
    pub report: RemovalReport,
}

fn image_patterns() -> &'static [Regex; 3] {
    static PATTERNS: OnceLock<[Regex; 3]> = OnceLock::new();
    PATTERNS.get_or_init(|| {
        [
            Regex::new(r"(?is)<img\b[^>]*>(?:\s*</img>)?").unwrap(),
            Regex::new(r"!\[[^\]\n]*\]\([^)\n]*\)").unwrap(),
            Regex::new(r"(?i)data:[a-z]+/[a-z0-9.+\-]+(?:;[a-z0-9\-]+=[a-z0-9\-]+)*;base64,[A-Za-z0-9+/=]+").unwrap(),
        ]
    })
}

// Subtrees whose keys are user data (property names, example payloads), not
// OpenAPI keywords.
const DATA_CONTAINERS: [&str; 7] =
    ["properties", "patternProperties", "example", "examples", "default", "enum", "const"];

pub fn simplify(spec: &ApiSpec, rules: &SimplificationRules) -> SimplifiedSpec {
    let mut document = spec.document.clone();
    let mut report = RemovalReport::default();

    if rules.strip_deprecated || !rules.strip_tag_names.is_empty() || !rules.strip_path_prefixes.is_empty() {
        prune_paths(&mut document, rules, &mut report);
    }
    if !rules.strip_tag_names.is_empty() {
        prune_tag_definitions(&mut document, rules, &mut report);
    }
    if rules.strip_extension_keys {
        strip_extensions(&mut document, &mut report);
    }
    if rules.strip_image_tags || rules.max_description_length.is_some() {
        rewrite_descriptions(&mut document, rules, &mut report, false);
    }

    SimplifiedSpec {
        spec: ApiSpec { format: spec.format, document, source_name: spec.source_name.clone() },
        rules: rules.clone(),
        report,
    }
}

fn is_deprecated(node: &Value) -> bool {
    node.get("deprecated").and_then(Value::as_bool) == Some(true)
}

fn has_denied_tag(op: &Value, denied: &[String]) -> bool {
    op.get("tags").and_then(Value::as_array).is_some_and(|tags| {
        tags.iter().filter_map(Value::as_str).any(|t| denied.iter().any(|d| d.eq_ignore_ascii_case(t)))
    })
}

fn prune_paths(document: &mut Value, rules: &SimplificationRules, report: &mut RemovalReport) {
    let Some(paths) = document.get_mut("paths").and_then(Value::as_object_mut) else {
        return;
    };
    let names: Vec<String> = paths.keys().cloned().collect();
    for name in names {
        if rules.strip_path_prefixes.iter().any(|p| !p.is_empty() && path_has_prefix(&name, p)) {
            paths.remove(&name);
            report.administrative_paths += 1;
            continue;
        }
        let Some(item) = paths.get_mut(&name).and_then(Value::as_object_mut) else {
            continue;
        };
        let mut had_operations = false;
        for method in HTTP_METHODS {
            let Some(op) = item.get(method) else { continue };
            had_operations = true;
            if rules.strip_deprecated && is_deprecated(op) {
                item.remove(method);
                report.deprecated_operations += 1;
            } else if has_denied_tag(op, &rules.strip_tag_names) {
                item.remove(method);
                report.administrative_operations += 1;
            }
        }
        if rules.strip_deprecated {
            if let Some(params) = item.get_mut("parameters").and_then(Value::as_array_mut) {
                report.deprecated_parameters += drop_deprecated(params);
            }
            for method in HTTP_METHODS {
                if let Some(params) =
                    item.get_mut(method).and_then(|op| op.get_mut("parameters")).and_then(Value::as_array_mut)
                {
                    report.deprecated_parameters += drop_deprecated(params);
                }
            }
        }
        let has_operations = HTTP_METHODS.iter().any(|m| item.contains_key(*m));
        if had_operations && !has_operations {
            paths.remove(&name);
            report.empty_paths += 1;
        }
    }
}

fn path_has_prefix(path: &str, prefix: &str) -> bool {
    let prefix = prefix.trim_end_matches('/');
    path == prefix || path.strip_prefix(prefix).is_some_and(|rest| rest.starts_with('/'))
}

fn drop_deprecated(params: &mut Vec<Value>) -> usize {
    let before = params.len();
    params.retain(|p| !is_deprecated(p));
    before - params.len()
}

fn prune_tag_definitions(document: &mut Value, rules: &SimplificationRules, report: &mut RemovalReport) {
    let Some(tags) = document.get_mut("tags").and_then(Value::as_array_mut) else {
        return;
    };
    let before = tags.len();
    tags.retain(|t| {
        let name = t.get("name").and_then(Value::as_str).unwrap_or_default();
        !rules.strip_tag_names.iter().any(|d| d.eq_ignore_ascii_case(name))
    });
    report.tag_definitions += before - tags.len();
}

fn strip_extensions(value: &mut Value, report: &mut RemovalReport) {
    match value {
        Value::Object(map) => {
            let before = map.len();
            map.retain(|k, _| !k.starts_with("x-"));
            report.extension_keys += before - map.len();
            for (key, child) in map.iter_mut() {
                if DATA_CONTAINERS.contains(&key.as_str()) {
                    strip_extensions_in_data(key, child, report);
                } else {
                    strip_extensions(child, report);
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(|v| strip_extensions(v, report)),
        _ => {}
    }
}

// Under `properties` the keys are names but the values are schemas again;
// under example-like keys the whole subtree is payload.
fn strip_extensions_in_data(container: &str, value: &mut Value, report: &mut RemovalReport) {
    if container == "properties" || container == "patternProperties" {
        if let Value::Object(map) = value {
            for child in map.values_mut() {
                strip_extensions(child, report);
            }
        }
    }
}

fn rewrite_descriptions(value: &mut Value, rules: &SimplificationRules, report: &mut RemovalReport, in_data: bool) {
    match value {
        Value::Object(map) => rewrite_map(map, rules, report, in_data),
        Value::Array(items) => items.iter_mut().for_each(|v| rewrite_descriptions(v, rules, report, in_data)),
        _ => {}
    }
}

fn rewrite_map(map: &mut Map<String, Value>, rules: &SimplificationRules, report: &mut RemovalReport, in_data: bool) {
    for (key, child) in map.iter_mut() {
        if !in_data && (key == "description" || key == "summary") {
            if let Value::String(text) = child {
                if rules.strip_image_tags {
                    report.images += strip_images(text);
                }
                if key == "description" {
                    if let Some(limit) = rules.max_description_length {
                        if text.chars().count() > limit {
                            let cut = text.char_indices().nth(limit).map(|(i, _)| i).unwrap_or(text.len());
                            text.truncate(cut);
                            report.truncated_descriptions += 1;
                        }
                    }
                }
                continue;
            }
        }
        let data = in_data || matches!(key.as_str(), "example" | "examples" | "default" | "enum" | "const");
        rewrite_descriptions(child, rules, report, data);
    }
}

/// Remove image embeds until none remain; returns the number removed.
fn strip_images(text: &mut String) -> usize {
    let mut removed = 0;
    loop {
        let mut changed = false;
        for re in image_patterns() {
            let n = re.find_iter(text).count();
            if n > 0 {
                *text = re.replace_all(text, "").into_owned();
                removed += n;
                changed = true;
            }
        }
        if !changed {
            return removed;
        }
    }
}
