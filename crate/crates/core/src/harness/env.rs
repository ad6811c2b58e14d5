use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ExecutionReport, HarnessError};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvSource {
    #[default]
    ConfigFile,
    Environment,
}

/// Variables handed to generated scripts: base URLs, access tokens.
#[derive(Clone, Default, PartialEq, Eq)]
pub struct EnvBindings {
    variables: BTreeMap<String, String>,
    source: EnvSource,
}

impl std::fmt::Debug for EnvBindings {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EnvBindings")
            .field("variables", &self.redacted().variables)
            .field("source", &self.source)
            .finish()
    }
}

/// What may be persisted: names and value fingerprints.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RedactedEnv {
    pub variables: BTreeMap<String, String>,
    pub source: EnvSource,
}

impl RedactedEnv {
    pub fn manifest_json(&self) -> String {
        serde_json::to_string_pretty(&self.variables).expect("string map serializes") + "\n"
    }
}

pub fn value_fingerprint(value: &str) -> String {
    format!("sha256:{}", &hex::encode(Sha256::digest(value.as_bytes()))[..16])
}

impl EnvBindings {
    pub fn from_pairs<I, K, V>(source: EnvSource, pairs: I) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        Self { variables: pairs.into_iter().map(|(k, v)| (k.into(), v.into())).collect(), source }
    }

    /// Read the named variables from the process environment; absent names
    /// are an error.
    pub fn from_environment(names: &[String]) -> Result<Self, HarnessError> {
        let mut variables = BTreeMap::new();
        for name in names {
            let value = std::env::var(name)
                .map_err(|_| HarnessError::Env(format!("environment variable {name} is not set")))?;
            variables.insert(name.clone(), value);
        }
        Ok(Self { variables, source: EnvSource::Environment })
    }

    /// A JSON object of string values.
    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|source| HarnessError::Io { path: path.display().to_string(), source })?;
        let variables: BTreeMap<String, String> =
            serde_json::from_str(&raw).map_err(|e| HarnessError::Env(format!("{}: {e}", path.display())))?;
        Ok(Self { variables, source: EnvSource::ConfigFile })
    }

    pub fn merge(mut self, other: EnvBindings) -> Self {
        self.variables.extend(other.variables);
        self.source = other.source;
        self
    }

    pub fn variables(&self) -> &BTreeMap<String, String> {
        &self.variables
    }

    pub fn source(&self) -> EnvSource {
        self.source
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.variables.keys().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn manifest_json(&self) -> String {
        serde_json::to_string_pretty(&self.variables).expect("string map serializes") + "\n"
    }

    pub fn redacted(&self) -> RedactedEnv {
        RedactedEnv {
            variables: self.variables.iter().map(|(k, v)| (k.clone(), value_fingerprint(v))).collect(),
            source: self.source,
        }
    }

    /// Replace every occurrence of a bound value with a placeholder.
    pub fn redact_text(&self, text: &str) -> String {
        let mut values: Vec<(&String, &String)> = self.variables.iter().filter(|(_, v)| !v.is_empty()).collect();
        // longer values first so a value containing another is removed whole
        values.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then(a.0.cmp(b.0)));
        let mut out = text.to_string();
        for (name, value) in values {
            if out.contains(value.as_str()) {
                out = out.replace(value.as_str(), &format!("[redacted:{name}]"));
            }
        }
        out
    }

    pub fn redact_report(&self, report: &mut ExecutionReport) {
        if self.variables.is_empty() {
            return;
        }
        report.stderr_excerpt = self.redact_text(&report.stderr_excerpt);
        for t in &mut report.tests {
            t.name = self.redact_text(&t.name);
            if let Some(m) = &mut t.failure_message {
                *m = self.redact_text(m);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{RunStatus, TestCaseResult, TestOutcome};

    #[test]
    fn debug_and_redaction_hide_values() {
        let env = EnvBindings::from_pairs(EnvSource::ConfigFile, [("TOKEN", "abc123secret"), ("BASE_URL", "http://x")]);
        assert!(!format!("{env:?}").contains("abc123secret"));
        let r = env.redacted();
        assert_eq!(r.variables["TOKEN"], value_fingerprint("abc123secret"));
        assert!(r.variables["TOKEN"].starts_with("sha256:"));
        let mut report = ExecutionReport {
            status: RunStatus::Completed,
            tests: vec![TestCaseResult {
                name: "t".into(),
                outcome: TestOutcome::Failed,
                failure_message: Some("401 for token abc123secret".into()),
                duration_ms: 0,
            }],
            stderr_excerpt: "Authorization: Bearer abc123secret".into(),
            duration: Default::default(),
            exit_code: 1,
        };
        env.redact_report(&mut report);
        let json = serde_json::to_string(&report).unwrap();
        assert!(!json.contains("abc123secret"));
        assert!(json.contains("[redacted:TOKEN]"));
    }

    #[test]
    fn missing_environment_variable() {
        let err = EnvBindings::from_environment(&["SPECPROBE_SURELY_UNSET_VAR".into()]).unwrap_err();
        assert!(err.to_string().contains("SPECPROBE_SURELY_UNSET_VAR"));
    }
}
