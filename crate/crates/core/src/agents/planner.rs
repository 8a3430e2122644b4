//! Task-target classification and plan generation.
//!
//! The deterministic backend maps a task target onto one of the workflow
//! templates with keyword rules and pulls parameters out with patterns. The
//! generative backend posts the target to an HTTP endpoint and accepts the
//! returned plan only if it passes schema validation; anything else falls
//! back to the deterministic plan with a flag.

use std::sync::LazyLock;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orchestrator::{template_plan, TaskParameters, TemplateId, WorkflowPlan};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlannerError {
    #[error("unrecognized intent")]
    UnrecognizedIntent,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum PlannerConfig {
    #[default]
    Deterministic,
    Generative {
        endpoint: Option<String>,
    },
}

impl PlannerConfig {
    pub fn name(&self) -> &'static str {
        match self {
            PlannerConfig::Deterministic => "deterministic",
            PlannerConfig::Generative { .. } => "generative",
        }
    }
}

static DROP: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\bdrop(?:ping|s|ped)?\b").expect("regex"));
static UPGRADE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(?:upgrad\w*|add(?:ing)?\s+(?:an?\s+)?(?:new\s+)?(?:\d+\s*G\w*\s+)?signal|capacity)").expect("regex"));
static QOT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(?:qot|model(?:l)?ing|gsnr|estimat\w*)\b").expect("regex"));
static PATHS_AFTER_DROP: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)drop\w*\s+(?:the\s+)?(?:signals?\s+)?(?:on\s+)?((?:path\s+[A-Z]\b(?:\s*(?:,|and|&)\s*)?)+)").expect("regex")
});
static PATHS_AFTER_KEEP: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)(?:retain|keep)\w*\s+(?:the\s+)?(?:signals?\s+)?(?:on\s+)?((?:path\s+[A-Z]\b(?:\s*(?:,|and|&)\s*)?)+)").expect("regex")
});
static PATH_LABEL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)path\s+([A-Z])\b").expect("regex"));
static RATE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(\d{2,4})\s*G(?:b/?s|bps|\b)").expect("regex"));
static FREQ: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(\d{3}(?:\.\d+)?)\s*THz\b").expect("regex"));
static COUNT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(\d+)\s+(?:signals|channels|services)\b").expect("regex"));

fn labels(re: &Regex, text: &str) -> Vec<String> {
    let mut out: Vec<String> = re
        .captures_iter(text)
        .flat_map(|c| PATH_LABEL.captures_iter(c.get(1).map_or("", |m| m.as_str())).map(|l| l[1].to_uppercase()).collect::<Vec<_>>())
        .collect();
    out.sort();
    out.dedup();
    out
}

fn parameters(text: &str) -> TaskParameters {
    TaskParameters {
        signal_count: COUNT.captures(text).and_then(|c| c[1].parse().ok()),
        drop_paths: labels(&PATHS_AFTER_DROP, text),
        keep_paths: labels(&PATHS_AFTER_KEEP, text),
        rate_gbps: RATE.captures(text).and_then(|c| c[1].parse().ok()),
        frequency_thz: FREQ.captures(text).and_then(|c| c[1].parse().ok()),
    }
}

/// Template and parameters for a task target. Pure and total.
pub fn classify(task_target: &str) -> Result<(TemplateId, TaskParameters), PlannerError> {
    let template = if DROP.is_match(task_target) {
        TemplateId::OpReconfig
    } else if UPGRADE.is_match(task_target) {
        TemplateId::Upgrade
    } else if QOT.is_match(task_target) {
        TemplateId::PlanQot
    } else {
        return Err(PlannerError::UnrecognizedIntent);
    };
    Ok((template, parameters(task_target)))
}

pub fn deterministic_plan(task_id: &str, task_target: &str) -> Result<WorkflowPlan, PlannerError> {
    let (template, params) = classify(task_target)?;
    Ok(template_plan(task_id, template, task_target, params))
}

/// Request body of the generative planner protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRequest {
    pub task_id: String,
    pub task_target: String,
    pub context: String,
    pub templates: Vec<TemplateId>,
}

/// Response body: `{"plan": WorkflowPlan}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResponse {
    pub plan: WorkflowPlan,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutcome {
    pub plan: WorkflowPlan,
    /// Set when the generative backend was asked but its plan was not used.
    pub fallback: Option<String>,
}

fn request_plan(endpoint: &str, req: &PlanRequest) -> Result<WorkflowPlan, String> {
    let agent: ureq::Agent = ureq::Agent::config_builder().timeout_global(Some(Duration::from_secs(5))).build().into();
    let body = serde_json::to_string(req).map_err(|e| e.to_string())?;
    let mut resp = agent
        .post(endpoint)
        .header("content-type", "application/json")
        .send(body.as_str())
        .map_err(|e| format!("endpoint unreachable: {e}"))?;
    let text = resp.body_mut().read_to_string().map_err(|e| format!("unreadable response: {e}"))?;
    let parsed: PlanResponse = serde_json::from_str(&text).map_err(|e| format!("schema-invalid response: {e}"))?;
    parsed.plan.validate().map_err(|e| format!("schema-invalid plan: {e}"))?;
    if parsed.plan.task_id != req.task_id {
        return Err("schema-invalid plan: task id mismatch".into());
    }
    Ok(parsed.plan)
}

/// Plan from the configured backend. The deterministic plan is always
/// computed first so a generative failure has something to fall back to.
pub fn generate_plan(config: &PlannerConfig, task_id: &str, task_target: &str, context: &str) -> Result<PlanOutcome, PlannerError> {
    let fallback_plan = deterministic_plan(task_id, task_target);
    match config {
        PlannerConfig::Deterministic | PlannerConfig::Generative { endpoint: None } => {
            Ok(PlanOutcome { plan: fallback_plan?, fallback: None })
        }
        PlannerConfig::Generative { endpoint: Some(url) } => {
            let req = PlanRequest {
                task_id: task_id.to_string(),
                task_target: task_target.to_string(),
                context: context.to_string(),
                templates: TemplateId::ALL.to_vec(),
            };
            match request_plan(url, &req) {
                Ok(plan) => Ok(PlanOutcome { plan, fallback: None }),
                Err(reason) => Ok(PlanOutcome { plan: fallback_plan?, fallback: Some(reason) }),
            }
        }
    }
}
