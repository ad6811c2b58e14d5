//! OpenAPI document ingestion: parsing, simplification, canonical
//! serialization and token counting.

mod simplify;
mod tokenize;

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use simplify::{simplify, RemovalReport, SimplificationRules, SimplifiedSpec};
pub use tokenize::{
    count_tokens, ApproxTokenizer, TokenCount, Tokenizer, TokenizerRegistry, APPROX_TOKENIZER_ID, CL100K_TOKENIZER_ID,
};

#[cfg(feature = "tiktoken")]
pub use tokenize::Cl100kTokenizer;

/// HTTP methods that may key an operation inside a path item.
pub const HTTP_METHODS: [&str; 8] = ["get", "put", "post", "delete", "options", "head", "patch", "trace"];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed document: {0}")]
    MalformedDocument(String),
    #[error("not an OpenAPI document: {0}")]
    NotAnOpenApiDocument(String),
    #[error("unknown tokenizer `{0}`")]
    UnknownTokenizer(String),
    #[error("failed to initialise tokenizer `{id}`: {message}")]
    TokenizerInit { id: String, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpecFormat {
    Json,
    Yaml,
}

impl SpecFormat {
    /// Leading `{` means JSON; anything else is treated as YAML.
    pub fn detect(raw: &str) -> Self {
        if raw.trim_start().starts_with('{') {
            SpecFormat::Json
        } else {
            SpecFormat::Yaml
        }
    }

    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "json" => Some(SpecFormat::Json),
            "yaml" | "yml" => Some(SpecFormat::Yaml),
            _ => None,
        }
    }
}

/// A parsed OpenAPI (3.x) or Swagger (2.0) document.
#[derive(Debug, Clone, PartialEq)]
pub struct ApiSpec {
    pub format: SpecFormat,
    pub document: Value,
    pub source_name: String,
}

/// One `(path, method)` pair and the operation node it keys.
#[derive(Debug, Clone, Copy)]
pub struct OperationRef<'a> {
    pub path: &'a str,
    pub method: &'a str,
    pub node: &'a Value,
}

impl ApiSpec {
    pub fn version_marker(&self) -> Option<&str> {
        self.document.get("openapi").or_else(|| self.document.get("swagger")).and_then(Value::as_str)
    }

    pub fn operations(&self) -> Vec<OperationRef<'_>> {
        operations_of(&self.document)
    }

    pub fn operation_count(&self) -> usize {
        self.operations().len()
    }
}

pub(crate) fn operations_of(document: &Value) -> Vec<OperationRef<'_>> {
    let Some(paths) = document.get("paths").and_then(Value::as_object) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for (path, item) in paths {
        let Some(item) = item.as_object() else { continue };
        for method in HTTP_METHODS {
            if let Some(node) = item.get(method) {
                out.push(OperationRef { path, method, node });
            }
        }
    }
    out
}

/// Parse raw text into an [`ApiSpec`]. Without a hint the format is sniffed.
pub fn parse_spec(raw: &str, format_hint: Option<SpecFormat>, source_name: &str) -> Result<ApiSpec, IngestError> {
    if raw.trim().is_empty() {
        return Err(IngestError::MalformedDocument("empty input".into()));
    }
    let format = format_hint.unwrap_or_else(|| SpecFormat::detect(raw));
    let document = match format {
        SpecFormat::Json => {
            serde_json::from_str::<Value>(raw).map_err(|e| IngestError::MalformedDocument(e.to_string()))?
        }
        SpecFormat::Yaml => {
            let yaml: serde_yaml::Value =
                serde_yaml::from_str(raw).map_err(|e| IngestError::MalformedDocument(e.to_string()))?;
            yaml_to_json(yaml)?
        }
    };
    let Some(root) = document.as_object() else {
        return Err(IngestError::NotAnOpenApiDocument("top level is not a mapping".into()));
    };
    let has_marker =
        root.get("openapi").is_some_and(Value::is_string) || root.get("swagger").is_some_and(Value::is_string);
    let has_paths = root.get("paths").is_some_and(Value::is_object);
    if !has_marker && !has_paths {
        return Err(IngestError::NotAnOpenApiDocument("neither a version marker nor a paths section".into()));
    }
    let mut document = document;
    if !has_paths {
        document.as_object_mut().expect("checked above").insert("paths".into(), Value::Object(Default::default()));
    }
    Ok(ApiSpec { format, document, source_name: source_name.to_string() })
}

pub fn load_spec(path: &Path) -> Result<ApiSpec, IngestError> {
    let raw =
        std::fs::read_to_string(path).map_err(|source| IngestError::Io { path: path.display().to_string(), source })?;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("spec").to_string();
    parse_spec(&raw, SpecFormat::from_path(path), &name)
}

// YAML allows non-string keys (`200:` under responses); JSON does not.
fn yaml_to_json(value: serde_yaml::Value) -> Result<Value, IngestError> {
    use serde_yaml::Value as Y;
    Ok(match value {
        Y::Null => Value::Null,
        Y::Bool(b) => Value::Bool(b),
        Y::Number(n) => {
            if let Some(i) = n.as_i64() {
                Value::from(i)
            } else if let Some(u) = n.as_u64() {
                Value::from(u)
            } else {
                let f = n.as_f64().unwrap_or(f64::NAN);
                serde_json::Number::from_f64(f)
                    .map(Value::Number)
                    .ok_or_else(|| IngestError::MalformedDocument(format!("non-finite number {f}")))?
            }
        }
        Y::String(s) => Value::String(s),
        Y::Sequence(seq) => Value::Array(seq.into_iter().map(yaml_to_json).collect::<Result<_, _>>()?),
        Y::Mapping(map) => {
            let mut out = serde_json::Map::new();
            for (k, v) in map {
                let key = match k {
                    Y::String(s) => s,
                    Y::Number(n) => n.to_string(),
                    Y::Bool(b) => b.to_string(),
                    Y::Null => "null".to_string(),
                    other => return Err(IngestError::MalformedDocument(format!("unsupported mapping key {other:?}"))),
                };
                out.insert(key, yaml_to_json(v)?);
            }
            Value::Object(out)
        }
        Y::Tagged(tagged) => yaml_to_json(tagged.value)?,
    })
}

/// Canonical rendering: pretty JSON, two-space indent, keys sorted
/// lexicographically at every level.
pub fn serialize_document(document: &Value) -> String {
    // serde_json's default map is ordered, so re-keying through
    // `canonicalize` is what makes input key order irrelevant.
    let mut out = serde_json::to_string_pretty(&canonicalize(document)).expect("serialising a Value cannot fail");
    out.push('\n');
    out
}

fn canonicalize(value: &Value) -> Value {
    match value {
        Value::Object(map) => {
            let mut entries: Vec<(&String, &Value)> = map.iter().collect();
            entries.sort_by(|a, b| a.0.cmp(b.0));
            Value::Object(entries.into_iter().map(|(k, v)| (k.clone(), canonicalize(v))).collect())
        }
        Value::Array(items) => Value::Array(items.iter().map(canonicalize).collect()),
        other => other.clone(),
    }
}

pub fn serialize(spec: &SimplifiedSpec) -> String {
    serialize_document(&spec.spec.document)
}
