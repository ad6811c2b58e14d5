//! Prompt templates with `{name}` placeholders.

use std::path::Path;

use sha2::{Digest, Sha256};

use super::PromptError;

pub const DEFAULT_TEMPLATE_VERSION: &str = "default-v1";

const CONTEXT: &str = include_str!("templates/context.txt");
const PERFORMANCE: &str = include_str!("templates/performance.txt");
const OUTPUT: &str = include_str!("templates/output.txt");
const USER: &str = include_str!("templates/user.txt");
const IMPROVEMENT: &str = include_str!("templates/improvement.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemplateKind {
    Context,
    Performance,
    Output,
    User,
    Improvement,
}

impl TemplateKind {
    pub const ALL: [TemplateKind; 5] = [
        TemplateKind::Context,
        TemplateKind::Performance,
        TemplateKind::Output,
        TemplateKind::User,
        TemplateKind::Improvement,
    ];

    pub fn file_name(self) -> &'static str {
        match self {
            TemplateKind::Context => "context.txt",
            TemplateKind::Performance => "performance.txt",
            TemplateKind::Output => "output.txt",
            TemplateKind::User => "user.txt",
            TemplateKind::Improvement => "improvement.txt",
        }
    }

    /// Placeholders the build operations substitute into this template.
    pub fn placeholders(self) -> &'static [&'static str] {
        match self {
            TemplateKind::Context => &["test_example", "env_vars"],
            TemplateKind::Performance | TemplateKind::Output => &[],
            TemplateKind::User => &["requirement", "api_context"],
            TemplateKind::Improvement => {
                &["requirement", "api_context", "previous_script", "execution_report", "user_feedback"]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplateSet {
    pub context: String,
    pub performance: String,
    pub output: String,
    pub user: String,
    pub improvement: String,
    pub version: String,
}

impl Default for PromptTemplateSet {
    fn default() -> Self {
        Self {
            context: CONTEXT.into(),
            performance: PERFORMANCE.into(),
            output: OUTPUT.into(),
            user: USER.into(),
            improvement: IMPROVEMENT.into(),
            version: DEFAULT_TEMPLATE_VERSION.into(),
        }
    }
}

impl PromptTemplateSet {
    pub fn get(&self, kind: TemplateKind) -> &str {
        match kind {
            TemplateKind::Context => &self.context,
            TemplateKind::Performance => &self.performance,
            TemplateKind::Output => &self.output,
            TemplateKind::User => &self.user,
            TemplateKind::Improvement => &self.improvement,
        }
    }

    fn get_mut(&mut self, kind: TemplateKind) -> &mut String {
        match kind {
            TemplateKind::Context => &mut self.context,
            TemplateKind::Performance => &mut self.performance,
            TemplateKind::Output => &mut self.output,
            TemplateKind::User => &mut self.user,
            TemplateKind::Improvement => &mut self.improvement,
        }
    }

    /// Load overrides from `dir`; files that are absent keep the default.
    /// The version becomes a content hash when anything was overridden.
    pub fn load_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut set = Self::default();
        let mut overridden = false;
        for kind in TemplateKind::ALL {
            let path = dir.join(kind.file_name());
            if path.exists() {
                *set.get_mut(kind) = std::fs::read_to_string(&path)
                    .map_err(|e| PromptError::Io { path: path.display().to_string(), message: e.to_string() })?;
                overridden = true;
            }
        }
        if overridden {
            let mut h = Sha256::new();
            for kind in TemplateKind::ALL {
                h.update(set.get(kind).as_bytes());
                h.update([0]);
            }
            set.version = format!("custom-{}", &hex::encode(h.finalize())[..12]);
        }
        set.validate()?;
        Ok(set)
    }

    /// Every placeholder a template is rendered with occurs exactly once.
    pub fn validate(&self) -> Result<(), PromptError> {
        for kind in TemplateKind::ALL {
            let text = self.get(kind);
            for name in kind.placeholders() {
                let n = text.matches(&format!("{{{name}}}")).count();
                if n != 1 {
                    return Err(PromptError::Template {
                        template: kind.file_name(),
                        message: format!("placeholder {{{name}}} occurs {n} times, expected once"),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Substitute `{name}` for each `(name, value)` in a single pass, so
/// placeholders appearing inside substituted values are left as-is.
/// Braces that do not spell a known placeholder are copied verbatim.
pub fn render(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + values.iter().map(|(_, v)| v.len()).sum::<usize>());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let hit = after.find('}').and_then(|close| {
            let name = &after[..close];
            values.iter().find(|(n, _)| *n == name).map(|(_, v)| (close, *v))
        });
        match hit {
            Some((close, value)) => {
                out.push_str(value);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        PromptTemplateSet::default().validate().unwrap();
    }

    #[test]
    fn render_is_single_pass() {
        let out = render("a {x} b {y} {unknown} {", &[("x", "{y}"), ("y", "Y")]);
        assert_eq!(out, "a {y} b Y {unknown} {");
    }

    #[test]
    fn duplicate_placeholder_is_rejected() {
        let set = PromptTemplateSet {
            user: "{requirement} {requirement} {api_context}".into(),
            ..PromptTemplateSet::default()
        };
        assert!(matches!(set.validate(), Err(PromptError::Template { template: "user.txt", .. })));
    }

    #[test]
    fn load_dir_overrides_and_versions() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("user.txt"), "R: {requirement}\nA: {api_context}\n").unwrap();
        let set = PromptTemplateSet::load_dir(dir.path()).unwrap();
        assert!(set.user.starts_with("R: "));
        assert_eq!(set.context, PromptTemplateSet::default().context);
        assert!(set.version.starts_with("custom-"));
        let empty = tempfile::tempdir().unwrap();
        assert_eq!(PromptTemplateSet::load_dir(empty.path()).unwrap().version, DEFAULT_TEMPLATE_VERSION);
    }
}
