//! Aggregating attempt outcomes into per-API rows, tag subtotals and a
//! total.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::records::{AttemptKind, AttemptRecord, RequirementDir, REQUIREMENT_FILE};
use super::suite::SuiteEntry;
use super::OrchestratorError;
use crate::harness::OutcomeClass;

/// One requirement's generation attempts, reduced to what metrics need.
#[derive(Debug, Clone, PartialEq)]
pub struct RowSummary {
    pub entry: SuiteEntry,
    pub outcomes: Vec<OutcomeClass>,
    pub generation_s: Vec<f64>,
    pub costs: Vec<f64>,
    pub original_tokens: usize,
    pub simplified_tokens: usize,
    pub error: Option<String>,
}

impl RowSummary {
    pub fn from_records(entry: SuiteEntry, records: &[AttemptRecord]) -> Self {
        let gen: Vec<&AttemptRecord> = records.iter().filter(|r| r.kind == AttemptKind::Generate).collect();
        Self {
            outcomes: gen.iter().map(|r| r.outcome.clone()).collect(),
            generation_s: gen.iter().filter_map(|r| r.completion.as_ref().map(|c| c.latency_s)).collect(),
            costs: gen.iter().filter_map(|r| r.completion.as_ref().map(|c| c.cost)).collect(),
            original_tokens: gen.first().map_or(0, |r| r.spec.original_tokens),
            simplified_tokens: gen.first().map_or(0, |r| r.spec.simplified_tokens),
            error: None,
            entry,
        }
    }

    pub fn failed(entry: SuiteEntry, error: String) -> Self {
        Self {
            entry,
            outcomes: vec![],
            generation_s: vec![],
            costs: vec![],
            original_tokens: 0,
            simplified_tokens: 0,
            error: Some(error),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub label: String,
    pub original_tokens: usize,
    pub simplified_tokens: usize,
    pub requirements: usize,
    pub attempts: usize,
    pub valid_attempts: usize,
    pub requirements_with_valid: usize,
    /// Failed-test attempts still waiting for a manual verdict.
    pub pending_review: usize,
    pub failed_requirements: usize,
    /// Attempts per assessment-table row letter.
    pub by_row: BTreeMap<char, usize>,
    pub completions: usize,
    pub generation_s_sum: f64,
    pub cost_sum: f64,
}

impl MetricsRow {
    fn new(label: impl Into<String>) -> Self {
        Self { label: label.into(), ..Self::default() }
    }

    fn add_requirement(&mut self, row: &RowSummary) {
        self.requirements += 1;
        self.attempts += row.outcomes.len();
        let valid = row.outcomes.iter().filter(|o| o.is_valid()).count();
        self.valid_attempts += valid;
        self.requirements_with_valid += usize::from(valid > 0);
        self.pending_review += row.outcomes.iter().filter(|o| o.awaiting_review()).count();
        self.failed_requirements += usize::from(row.error.is_some());
        for o in &row.outcomes {
            if let Some(r) = o.table_row() {
                *self.by_row.entry(r.letter()).or_default() += 1;
            }
        }
        self.completions += row.generation_s.len();
        self.generation_s_sum += row.generation_s.iter().sum::<f64>();
        self.cost_sum += row.costs.iter().sum::<f64>();
    }

    fn absorb(&mut self, other: &MetricsRow) {
        self.original_tokens += other.original_tokens;
        self.simplified_tokens += other.simplified_tokens;
        self.requirements += other.requirements;
        self.attempts += other.attempts;
        self.valid_attempts += other.valid_attempts;
        self.requirements_with_valid += other.requirements_with_valid;
        self.pending_review += other.pending_review;
        self.failed_requirements += other.failed_requirements;
        for (k, v) in &other.by_row {
            *self.by_row.entry(*k).or_default() += v;
        }
        self.completions += other.completions;
        self.generation_s_sum += other.generation_s_sum;
        self.cost_sum += other.cost_sum;
    }

    pub fn valid_rate(&self) -> Option<f64> {
        (self.attempts > 0).then(|| self.valid_attempts as f64 / self.attempts as f64)
    }

    pub fn requirement_rate(&self) -> Option<f64> {
        (self.requirements > 0).then(|| self.requirements_with_valid as f64 / self.requirements as f64)
    }

    pub fn mean_generation_s(&self) -> Option<f64> {
        (self.completions > 0).then(|| self.generation_s_sum / self.completions as f64)
    }

    pub fn mean_cost(&self) -> Option<f64> {
        (self.completions > 0).then(|| self.cost_sum / self.completions as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subtotal {
    /// `api_complexity`, `documentation` or `detail`.
    pub key: String,
    pub value: String,
    pub row: MetricsRow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<MetricsRow>,
    pub subtotals: Vec<Subtotal>,
    pub total: MetricsRow,
    pub errors: Vec<(String, String)>,
}

impl MetricsReport {
    /// The Total row equals the sum of the per-API rows, field by field.
    pub fn is_consistent(&self) -> bool {
        let mut sum = MetricsRow::new("Total");
        for r in &self.rows {
            sum.absorb(r);
        }
        sum.requirements == self.total.requirements
            && sum.attempts == self.total.attempts
            && sum.valid_attempts == self.total.valid_attempts
            && sum.requirements_with_valid == self.total.requirements_with_valid
            && sum.pending_review == self.total.pending_review
            && sum.by_row == self.total.by_row
            && sum.completions == self.total.completions
            && sum.original_tokens == self.total.original_tokens
            && sum.simplified_tokens == self.total.simplified_tokens
            && self.total.valid_attempts <= self.total.attempts
            && self.total.requirements_with_valid <= self.total.requirements
    }

    pub fn subtotal(&self, key: &str, value: &str) -> Option<&MetricsRow> {
        self.subtotals.iter().find(|s| s.key == key && s.value == value).map(|s| &s.row)
    }
}

const UNTAGGED: &str = "untagged";

/// Per-API rows in first-appearance order; subtotals per API complexity,
/// documentation detail and requirement detail tag; and a total.
pub fn compute_metrics(rows: &[RowSummary]) -> Result<MetricsReport, OrchestratorError> {
    if rows.is_empty() {
        return Err(OrchestratorError::EmptySuite);
    }
    let mut apis: Vec<(String, MetricsRow)> = Vec::new();
    for r in rows {
        let idx = match apis.iter().position(|(a, _)| *a == r.entry.api) {
            Some(i) => i,
            None => {
                apis.push((r.entry.api.clone(), MetricsRow::new(&r.entry.api)));
                apis.len() - 1
            }
        };
        let row = &mut apis[idx].1;
        row.add_requirement(r);
        row.original_tokens = row.original_tokens.max(r.original_tokens);
        row.simplified_tokens = row.simplified_tokens.max(r.simplified_tokens);
    }

    let mut groups: BTreeMap<(String, String), MetricsRow> = BTreeMap::new();
    let mut group_apis: BTreeMap<(String, String), Vec<&str>> = BTreeMap::new();
    for r in rows {
        let mut keys = vec![
            ("api_complexity".to_string(), r.entry.api_complexity.clone().unwrap_or_else(|| UNTAGGED.into())),
            ("documentation".to_string(), r.entry.documentation.clone().unwrap_or_else(|| UNTAGGED.into())),
        ];
        if r.entry.detail_tags.is_empty() {
            keys.push(("detail".into(), UNTAGGED.into()));
        }
        for t in &r.entry.detail_tags {
            let v = serde_json::to_value(t).expect("tag serializes");
            keys.push(("detail".into(), v.as_str().unwrap_or_default().to_string()));
        }
        for k in keys {
            let label = format!("Subtotal {} {}", k.1, k.0.replace('_', " "));
            groups.entry(k.clone()).or_insert_with(|| MetricsRow::new(label)).add_requirement(r);
            let seen = group_apis.entry(k).or_default();
            if !seen.contains(&r.entry.api.as_str()) {
                seen.push(&r.entry.api);
            }
        }
    }
    let subtotals = groups
        .into_iter()
        .map(|(k, mut row)| {
            for api in &group_apis[&k] {
                let a = &apis.iter().find(|(n, _)| n == api).expect("api row").1;
                row.original_tokens += a.original_tokens;
                row.simplified_tokens += a.simplified_tokens;
            }
            Subtotal { key: k.0, value: k.1, row }
        })
        .collect();

    let mut total = MetricsRow::new("Total");
    for (_, r) in &apis {
        total.absorb(r);
    }
    let errors = rows.iter().filter_map(|r| r.error.as_ref().map(|e| (r.entry.id.clone(), e.clone()))).collect();
    Ok(MetricsReport { rows: apis.into_iter().map(|(_, r)| r).collect(), subtotals, total, errors })
}

/// Rebuild row summaries from a persisted output directory, applying any
/// annotations.
pub fn rows_from_dir(out: &Path) -> Result<Vec<RowSummary>, OrchestratorError> {
    let io = |e: std::io::Error| OrchestratorError::Io { path: out.display().to_string(), message: e.to_string() };
    let mut dirs: Vec<_> = std::fs::read_dir(out)
        .map_err(io)?
        .filter_map(Result::ok)
        .map(|d| d.path())
        .filter(|p| p.join(REQUIREMENT_FILE).is_file())
        .collect();
    dirs.sort();
    let mut rows = Vec::new();
    for path in dirs {
        let dir = RequirementDir { path };
        let entry = dir.entry()?;
        let records = dir.records(AttemptKind::Generate)?;
        rows.push(if records.is_empty() {
            RowSummary::failed(entry, "no attempts recorded".into())
        } else {
            RowSummary::from_records(entry, &records)
        });
    }
    Ok(rows)
}

fn pct(n: usize, rate: Option<f64>) -> String {
    match rate {
        Some(r) => format!("{n} ({:.1}%)", r * 100.0),
        None => n.to_string(),
    }
}

fn opt(v: Option<f64>, unit: &str) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.2}{unit}"))
}

/// Plain-text table: API rows, subtotals, total.
pub fn render_table(report: &MetricsReport) -> String {
    let header = [
        "API",
        "Original tokens",
        "Simplified tokens",
        "BR",
        "Valid TS",
        "BR with >=1 valid TS",
        "Pending review",
        "Generation time (avg.)",
        "Cost (avg.)",
    ];
    let line = |r: &MetricsRow| {
        vec![
            r.label.clone(),
            r.original_tokens.to_string(),
            r.simplified_tokens.to_string(),
            r.requirements.to_string(),
            pct(r.valid_attempts, r.valid_rate()),
            pct(r.requirements_with_valid, r.requirement_rate()),
            r.pending_review.to_string(),
            opt(r.mean_generation_s(), "s"),
            opt(r.mean_cost(), ""),
        ]
    };
    let mut table: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
    table.extend(report.rows.iter().map(line));
    table.extend(report.subtotals.iter().map(|s| line(&s.row)));
    table.push(line(&report.total));
    let widths: Vec<usize> =
        (0..header.len()).map(|i| table.iter().map(|r| r[i].chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    let sep_after = [0, report.rows.len(), report.rows.len() + report.subtotals.len()];
    for (i, row) in table.iter().enumerate() {
        let cells: Vec<String> = row.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        out.push_str(cells.join(" | ").trim_end());
        out.push('\n');
        if sep_after.contains(&i) {
            out.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-"));
            out.push('\n');
        }
    }
    for (id, e) in &report.errors {
        out.push_str(&format!("error in {id}: {e}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expand::Requirement;
    use crate::harness::{annotate, AutoClass, ManualLabel};

    fn outcome(auto: AutoClass) -> OutcomeClass {
        OutcomeClass { auto, manual: None, rationale: String::new(), note: None }
    }

    fn row(id: &str, api: &str, complexity: &str, autos: &[AutoClass]) -> RowSummary {
        let mut e = SuiteEntry::new(Requirement::new(id, "text"), api, "spec.json");
        e.api_complexity = Some(complexity.into());
        RowSummary {
            entry: e,
            outcomes: autos.iter().map(|a| outcome(*a)).collect(),
            generation_s: vec![2.0; autos.len()],
            costs: vec![0.5; autos.len()],
            original_tokens: 100,
            simplified_tokens: 80,
            error: None,
        }
    }

    #[test]
    fn counts_and_totals() {
        use AutoClass::*;
        let mut r2 = row("b", "PS", "low", &[Passed, TestFailed, EmptyScript]);
        r2.outcomes[1] = annotate(&r2.outcomes[1], ManualLabel::ApiDefect, "").unwrap();
        let rows = vec![
            row("a", "PS", "low", &[Passed, SyntaxError, SemanticError]),
            r2,
            row("c", "V", "high", &[SemanticError, SemanticError, TestFailed]),
        ];
        let m = compute_metrics(&rows).unwrap();
        assert_eq!(m.rows.len(), 2);
        assert_eq!((m.rows[0].attempts, m.rows[0].valid_attempts, m.rows[0].requirements_with_valid), (6, 3, 2));
        assert_eq!(m.rows[0].original_tokens, 100);
        assert_eq!((m.total.attempts, m.total.valid_attempts, m.total.requirements_with_valid), (9, 3, 2));
        assert_eq!(m.total.pending_review, 1);
        assert_eq!(m.total.original_tokens, 200);
        assert_eq!(m.subtotal("api_complexity", "low").unwrap().requirements, 2);
        assert_eq!(m.subtotal("api_complexity", "high").unwrap().valid_attempts, 0);
        assert_eq!(m.subtotal("detail", "untagged").unwrap().requirements, 3);
        assert_eq!(m.total.by_row[&'e'], 1);
        assert!(m.is_consistent());
        assert_eq!(m.total.mean_generation_s(), Some(2.0));
        let t = render_table(&m);
        assert!(t.contains("Subtotal low api complexity"));
        assert!(t.contains("3 (33.3%)"));
    }

    #[test]
    fn empty_rows_error() {
        assert!(matches!(compute_metrics(&[]), Err(OrchestratorError::EmptySuite)));
    }
}
