use std::collections::BTreeSet;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::AgentRole;
use crate::pool::PoolEntry;
use crate::rsa::ServicePlan;

use super::plan::TemplateId;

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const SOFT_BUDGET_S: f64 = 20.0;

static NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"-?\d+(?:\.\d+)?").expect("valid regex"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SectionKind {
    Performance,
    ErrorAnalysis,
    Suggestions,
}

impl SectionKind {
    pub const ALL: [SectionKind; 3] = [SectionKind::Performance, SectionKind::ErrorAnalysis, SectionKind::Suggestions];

    pub fn title(self) -> &'static str {
        match self {
            SectionKind::Performance => "performance evaluation",
            SectionKind::ErrorAnalysis => "error analysis",
            SectionKind::Suggestions => "suggestions",
        }
    }
}

/// One named quantity computed by an expert. Labels carry no digits so a
/// rendered claim's only numbers are cited values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub section: SectionKind,
    pub name: String,
    pub label: String,
    pub value: f64,
    pub unit: String,
    pub decimals: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub title: String,
    pub author: AgentRole,
    pub metrics: Vec<Metric>,
    pub notes: Vec<String>,
    pub feasible: Option<bool>,
    pub plan: Option<ServicePlan>,
}

impl AnalysisReport {
    pub fn new(title: &str, author: AgentRole) -> Self {
        AnalysisReport { title: title.to_string(), author, metrics: vec![], notes: vec![], feasible: None, plan: None }
    }

    pub fn push(&mut self, section: SectionKind, name: &str, label: &str, value: f64, unit: &str, decimals: u8) {
        self.metrics.push(Metric {
            section,
            name: name.to_string(),
            label: label.to_string(),
            value,
            unit: unit.to_string(),
            decimals,
        });
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|m| m.name == name).map(|m| m.value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Citation {
    pub entry_id: u64,
    /// JSON pointer into the entry's serialized content.
    pub pointer: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub text: String,
    pub citations: Vec<Citation>,
}

/// Builds claim text and citations together.
#[derive(Debug, Default)]
pub struct ClaimBuilder {
    text: String,
    citations: Vec<Citation>,
}

impl ClaimBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn text(mut self, s: &str) -> Self {
        self.text.push_str(s);
        self
    }

    pub fn num(mut self, value: f64, decimals: u8, entry_id: u64, pointer: impl Into<String>) -> Self {
        self.text.push_str(&format_value(value, decimals));
        self.citations.push(Citation { entry_id, pointer: pointer.into(), value });
        self
    }

    pub fn build(self) -> Claim {
        Claim { text: self.text, citations: self.citations }
    }
}

pub fn format_value(value: f64, decimals: u8) -> String {
    let s = format!("{value:.*}", decimals as usize);
    // avoid "-0.00"
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSection {
    pub kind: SectionKind,
    pub title: String,
    pub claims: Vec<Claim>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    pub step_id: String,
    pub action: String,
    pub division: AgentRole,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalReport {
    pub schema_version: u32,
    pub task_id: String,
    pub template: Option<TemplateId>,
    pub task_target: String,
    pub planner: String,
    pub planner_fallback: Option<String>,
    pub steps: Vec<StepSummary>,
    pub steps_completed: usize,
    pub steps_total: usize,
    pub completion: f64,
    pub sections: Vec<ReportSection>,
    pub cited_entries: Vec<u64>,
    pub wall_time_s: f64,
    pub soft_budget_s: f64,
    pub within_budget: bool,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReportError {
    #[error("citation violation: {0}")]
    Citation(String),
}

impl FinalReport {
    /// Structured text with stable field order.
    pub fn to_structured(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Structured text with the wall time removed, for byte comparison.
    pub fn to_structured_without_wall_time(&self) -> String {
        let mut v = serde_json::to_value(self).expect("report serializes");
        if let Some(o) = v.as_object_mut() {
            o.remove("wall_time_s");
        }
        serde_json::to_string_pretty(&v).expect("report serializes")
    }

    pub fn from_structured(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    pub fn claims(&self) -> impl Iterator<Item = &Claim> {
        self.sections.iter().flat_map(|s| &s.claims)
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("Task {} [{}]\n", self.task_id, self.template.map_or("none".into(), |t| t.to_string())));
        out.push_str(&format!("Target: {}\n", self.task_target));
        out.push_str(&format!("Planner: {}", self.planner));
        if let Some(f) = &self.planner_fallback {
            out.push_str(&format!(" (fallback: {f})"));
        }
        out.push('\n');
        out.push_str("Steps:\n");
        for s in &self.steps {
            out.push_str(&format!("  {} {:<22} {:<20} {}\n", s.step_id, s.action, s.division.name(), s.status));
        }
        out.push_str(&format!(
            "Completion: {}/{} ({:.0}%), wall time {:.2} s (budget {:.0} s{})\n",
            self.steps_completed,
            self.steps_total,
            self.completion * 100.0,
            self.wall_time_s,
            self.soft_budget_s,
            if self.within_budget { "" } else { ", exceeded" }
        ));
        for sec in &self.sections {
            out.push_str(&format!("\n{}:\n", capitalize(&sec.title)));
            if sec.claims.is_empty() {
                out.push_str("  (none)\n");
            }
            for c in &sec.claims {
                let ids: BTreeSet<u64> = c.citations.iter().map(|x| x.entry_id).collect();
                let refs: Vec<String> = ids.iter().map(|i| format!("#{i}")).collect();
                if refs.is_empty() {
                    out.push_str(&format!("  - {}\n", c.text));
                } else {
                    out.push_str(&format!("  - {} [{}]\n", c.text, refs.join(", ")));
                }
            }
        }
        out
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().collect::<String>() + c.as_str(),
        None => String::new(),
    }
}

fn decimals_of(token: &str) -> u8 {
    token.split_once('.').map_or(0, |(_, d)| d.len() as u8)
}

/// Mechanical factuality check: every numeric token in every claim equals a
/// cited value at the token's precision, every citation resolves to the same
/// number in a pool entry, and every cited entry is listed.
pub fn validate_citations(report: &FinalReport, entries: &[PoolEntry]) -> Result<(), ReportError> {
    let listed: BTreeSet<u64> = report.cited_entries.iter().copied().collect();
    for claim in report.claims() {
        for c in &claim.citations {
            let entry = entries
                .iter()
                .find(|e| e.entry_id == c.entry_id)
                .ok_or_else(|| ReportError::Citation(format!("entry {} not in pool", c.entry_id)))?;
            let v = entry.content.to_value();
            let found = v
                .pointer(&c.pointer)
                .and_then(|x| x.as_f64())
                .ok_or_else(|| ReportError::Citation(format!("entry {} has no number at {}", c.entry_id, c.pointer)))?;
            if found != c.value {
                return Err(ReportError::Citation(format!(
                    "entry {} {} holds {found}, claim cites {}",
                    c.entry_id, c.pointer, c.value
                )));
            }
            if !listed.contains(&c.entry_id) {
                return Err(ReportError::Citation(format!("entry {} cited but not listed", c.entry_id)));
            }
        }
        for m in NUMBER.find_iter(&claim.text) {
            let tok = m.as_str();
            let d = decimals_of(tok);
            if !claim.citations.iter().any(|c| format_value(c.value, d) == tok || format_value(c.value, d) == tok.trim_start_matches('-')) {
                return Err(ReportError::Citation(format!("uncited number {tok} in \"{}\"", claim.text)));
            }
        }
    }
    Ok(())
}

/// Numeric tokens in a piece of text.
pub fn numeric_tokens(text: &str) -> Vec<String> {
    NUMBER.find_iter(text).map(|m| m.as_str().to_string()).collect()
}
