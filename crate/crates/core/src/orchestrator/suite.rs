//! Evaluation suite manifests.

use std::collections::{BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::OrchestratorError;
use crate::expand::{DetailTag, Requirement};

/// One requirement of a suite, with the API it targets and grouping tags.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteEntry {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub detail_tags: BTreeSet<DetailTag>,
    /// API label used for the per-API rows.
    pub api: String,
    pub spec: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_complexity: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub documentation: Option<String>,
    #[serde(skip)]
    pub requirement: Requirement,
}

impl SuiteEntry {
    pub fn new(requirement: Requirement, api: impl Into<String>, spec: impl Into<PathBuf>) -> Self {
        Self {
            id: requirement.id.clone(),
            text: requirement.text.clone(),
            detail_tags: requirement.detail_tags.clone(),
            api: api.into(),
            spec: spec.into(),
            api_complexity: None,
            documentation: None,
            requirement,
        }
    }

    fn sync_requirement(&mut self) {
        self.requirement =
            Requirement { id: self.id.clone(), text: self.text.clone(), detail_tags: self.detail_tags.clone() };
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Suite {
    #[serde(default)]
    pub name: String,
    pub requirements: Vec<SuiteEntry>,
}

impl Suite {
    /// YAML or JSON; spec paths are resolved against the manifest's folder.
    pub fn load(path: &Path) -> Result<Self, OrchestratorError> {
        let raw =
            std::fs::read_to_string(path).map_err(|e| OrchestratorError::Config(format!("{}: {e}", path.display())))?;
        let mut suite = Self::parse(&raw)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for e in &mut suite.requirements {
            if e.spec.is_relative() {
                e.spec = base.join(&e.spec);
            }
        }
        Ok(suite)
    }

    pub fn parse(raw: &str) -> Result<Self, OrchestratorError> {
        let mut suite: Suite = serde_yaml::from_str(raw).map_err(|e| OrchestratorError::Config(e.to_string()))?;
        for e in &mut suite.requirements {
            e.sync_requirement();
        }
        suite.validate()?;
        Ok(suite)
    }

    pub fn validate(&self) -> Result<(), OrchestratorError> {
        if self.requirements.is_empty() {
            return Err(OrchestratorError::EmptySuite);
        }
        let mut seen = HashSet::new();
        for e in &self.requirements {
            if e.id.trim().is_empty() || e.text.trim().is_empty() {
                return Err(OrchestratorError::Config("suite entries need an id and a text".into()));
            }
            if !seen.insert(super::records::requirement_dir_name(&e.id)) {
                return Err(OrchestratorError::Config(format!("duplicate requirement id {}", e.id)));
            }
        }
        Ok(())
    }
}

/// Load a single requirement entry as written to `requirement.json`.
pub fn entry_from_json(raw: &str) -> Result<SuiteEntry, serde_json::Error> {
    let mut e: SuiteEntry = serde_json::from_str(raw)?;
    e.sync_requirement();
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SUITE: &str = r#"
name: demo
requirements:
  - id: CF-1
    api: CF.1
    text: As a user, I want to receive a new and random cat fact
    spec: specs/catfact.json
    api_complexity: low
    documentation: high
  - id: V-2
    api: V.4
    text: As a user, I want to retrieve all available models in Germany
    spec: /abs/vehicles.json
    detail_tags: [concrete_data]
"#;

    #[test]
    fn parses_and_resolves() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("suite.yaml");
        std::fs::write(&p, SUITE).unwrap();
        let s = Suite::load(&p).unwrap();
        assert_eq!(s.requirements[0].spec, dir.path().join("specs/catfact.json"));
        assert_eq!(s.requirements[1].spec, PathBuf::from("/abs/vehicles.json"));
        assert_eq!(s.requirements[1].requirement.detail_tags, BTreeSet::from([DetailTag::ConcreteData]));
        assert_eq!(s.requirements[0].requirement.id, "CF-1");
    }

    #[test]
    fn rejects_empty_and_duplicates() {
        assert!(matches!(Suite::parse("requirements: []"), Err(OrchestratorError::EmptySuite)));
        let dup = "requirements:\n  - {id: a, api: x, text: t, spec: s}\n  - {id: a, api: x, text: u, spec: s}\n";
        assert!(Suite::parse(dup).is_err());
    }
}
