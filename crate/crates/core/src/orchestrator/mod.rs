//! The director: workflow templates, step execution through the divisions and
//! the shared pool, the security gate and the final report.

mod exec;
mod plan;
mod report;
mod security;

pub use exec::*;
pub use plan::{template_plan, PlanError, StepAction, TaskParameters, TemplateId, WorkflowPlan, WorkflowStep};
pub use report::{
    format_value, numeric_tokens, validate_citations, AnalysisReport, Citation, Claim, ClaimBuilder, FinalReport, Metric,
    ReportError, ReportSection, SectionKind, StepSummary, REPORT_SCHEMA_VERSION, SOFT_BUDGET_S,
};
pub use security::{
    security_gate, InstructionSet, RuleResult, SecurityPolicy, SecurityVerdict, MAX_LAUNCH_DBM, MIN_LAUNCH_DBM,
};
