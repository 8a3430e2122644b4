use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::AgentRole;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TemplateId {
    PlanQot,
    OpReconfig,
    Upgrade,
}

impl TemplateId {
    pub const ALL: [TemplateId; 3] = [TemplateId::PlanQot, TemplateId::OpReconfig, TemplateId::Upgrade];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::PlanQot => "PLAN_QOT",
            TemplateId::OpReconfig => "OP_RECONFIG",
            TemplateId::Upgrade => "UPGRADE",
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepAction {
    CollectAndPackage,
    DtModeling,
    QotEstimation,
    DtRehearsal,
    ResourceAnalysis,
    UpgradeStrategy,
    GenerateInstructions,
    SecurityCheck,
    ApplyChange,
    Recollect,
    AnalyzeAndReport,
}

impl StepAction {
    pub fn as_str(self) -> &'static str {
        match self {
            StepAction::CollectAndPackage => "collect_and_package",
            StepAction::DtModeling => "dt_modeling",
            StepAction::QotEstimation => "qot_estimation",
            StepAction::DtRehearsal => "dt_rehearsal",
            StepAction::ResourceAnalysis => "resource_analysis",
            StepAction::UpgradeStrategy => "upgrade_strategy",
            StepAction::GenerateInstructions => "generate_instructions",
            StepAction::SecurityCheck => "security_check",
            StepAction::ApplyChange => "apply_change",
            StepAction::Recollect => "recollect",
            StepAction::AnalyzeAndReport => "analyze_and_report",
        }
    }

    /// Division that owns the action.
    pub fn division(self) -> AgentRole {
        use StepAction::*;
        match self {
            CollectAndPackage | GenerateInstructions | ApplyChange | Recollect => AgentRole::OpticalLayerAgent,
            DtModeling | QotEstimation | DtRehearsal => AgentRole::DtAgent,
            ResourceAnalysis | AnalyzeAndReport => AgentRole::ControlAgent,
            UpgradeStrategy | SecurityCheck => AgentRole::SupportAgent,
        }
    }

    /// Expert hint recorded in the plan (the lead expert of the step).
    pub fn lead_expert(self) -> AgentRole {
        use StepAction::*;
        match self {
            CollectAndPackage | Recollect => AgentRole::DataCollector,
            DtModeling => AgentRole::ModelingEngineer,
            QotEstimation | DtRehearsal => AgentRole::ValidationSpecialist,
            ResourceAnalysis => AgentRole::ResourceCoordinator,
            UpgradeStrategy => AgentRole::FullLifecycleManager,
            GenerateInstructions | ApplyChange => AgentRole::ConfigurationDeployer,
            SecurityCheck => AgentRole::SecuritySupporter,
            AnalyzeAndReport => AgentRole::StatisticalAnalyst,
        }
    }

    fn goal(self) -> &'static str {
        use StepAction::*;
        match self {
            CollectAndPackage => "collect current performance and deployed services and package them",
            DtModeling => "calibrate the digital twin against the collected data",
            QotEstimation => "estimate QoT of the current services on the calibrated twin",
            DtRehearsal => "calibrate the twin and rehearse the requested change",
            ResourceAnalysis => "analyze margin and spectrum feasibility of the change",
            UpgradeStrategy => "derive a path and channel for the new service",
            GenerateInstructions => "generate configuration instructions for the change",
            SecurityCheck => "verify authenticity, integrity and policy compliance of the instructions",
            ApplyChange => "apply the approved instructions through the NMS",
            Recollect => "collect updated performance after the change",
            AnalyzeAndReport => "analyze results and report to the director",
        }
    }
}

impl fmt::Display for StepAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkflowStep {
    pub step_id: String,
    pub action: StepAction,
    pub goal: String,
    pub division: AgentRole,
    #[serde(default)]
    pub expert_hint: Option<AgentRole>,
    #[serde(default)]
    pub depends_on: Vec<String>,
}

/// Parameters extracted from the task target.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskParameters {
    #[serde(default)]
    pub signal_count: Option<usize>,
    #[serde(default)]
    pub drop_paths: Vec<String>,
    #[serde(default)]
    pub keep_paths: Vec<String>,
    #[serde(default)]
    pub rate_gbps: Option<u32>,
    #[serde(default)]
    pub frequency_thz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkflowPlan {
    pub task_id: String,
    pub template: TemplateId,
    pub task_target: String,
    #[serde(default)]
    pub parameters: TaskParameters,
    pub steps: Vec<WorkflowStep>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("plan has no steps")]
    Empty,
    #[error("duplicate step id {0}")]
    DuplicateStep(String),
    #[error("step {0}: {1} is not a division")]
    NotDivision(String, AgentRole),
    #[error("step {0}: action belongs to {1}")]
    WrongDivision(String, AgentRole),
    #[error("step {0}: expert {1} is not in its division")]
    ExpertOutsideDivision(String, AgentRole),
    #[error("step {0}: dependency {1} is not an earlier step")]
    BadDependency(String, String),
}

impl WorkflowPlan {
    /// Schema check: non-empty, valid divisions, dependencies on earlier steps
    /// only (which makes the graph acyclic).
    pub fn validate(&self) -> Result<(), PlanError> {
        if self.steps.is_empty() {
            return Err(PlanError::Empty);
        }
        let mut seen = BTreeSet::new();
        for s in &self.steps {
            if !s.division.is_division() {
                return Err(PlanError::NotDivision(s.step_id.clone(), s.division));
            }
            if s.action.division() != s.division {
                return Err(PlanError::WrongDivision(s.step_id.clone(), s.action.division()));
            }
            if let Some(e) = s.expert_hint {
                if e.division() != Some(s.division) {
                    return Err(PlanError::ExpertOutsideDivision(s.step_id.clone(), e));
                }
            }
            for d in &s.depends_on {
                if !seen.contains(d.as_str()) {
                    return Err(PlanError::BadDependency(s.step_id.clone(), d.clone()));
                }
            }
            if !seen.insert(s.step_id.as_str()) {
                return Err(PlanError::DuplicateStep(s.step_id.clone()));
            }
        }
        Ok(())
    }

    pub fn step(&self, step_id: &str) -> Option<&WorkflowStep> {
        self.steps.iter().find(|s| s.step_id == step_id)
    }

    pub fn divisions(&self) -> Vec<AgentRole> {
        self.steps.iter().map(|s| s.division).collect()
    }

    /// Copy of the plan holding only one step, used as an assignment.
    pub fn assignment(&self, step_id: &str) -> WorkflowPlan {
        WorkflowPlan { steps: self.steps.iter().filter(|s| s.step_id == step_id).cloned().collect(), ..self.clone() }
    }
}

/// Instantiates a template.
pub fn template_plan(task_id: &str, template: TemplateId, task_target: &str, parameters: TaskParameters) -> WorkflowPlan {
    use StepAction::*;
    let (actions, deps): (Vec<StepAction>, Vec<Vec<usize>>) = match template {
        TemplateId::PlanQot => (
            vec![CollectAndPackage, DtModeling, QotEstimation, AnalyzeAndReport],
            vec![vec![], vec![1], vec![2], vec![1, 2, 3]],
        ),
        // recollect and the report only need the initial collection, so they
        // still run when the change itself fails
        TemplateId::OpReconfig => (
            vec![
                CollectAndPackage,
                DtRehearsal,
                ResourceAnalysis,
                GenerateInstructions,
                SecurityCheck,
                ApplyChange,
                Recollect,
                AnalyzeAndReport,
            ],
            vec![vec![], vec![1], vec![2], vec![3], vec![4], vec![4, 5], vec![1], vec![1, 2, 7]],
        ),
        TemplateId::Upgrade => (
            vec![
                CollectAndPackage,
                UpgradeStrategy,
                DtRehearsal,
                GenerateInstructions,
                SecurityCheck,
                ApplyChange,
                Recollect,
                AnalyzeAndReport,
            ],
            vec![vec![], vec![1], vec![2], vec![3], vec![4], vec![4, 5], vec![1], vec![1, 2, 7]],
        ),
    };
    let steps = actions
        .iter()
        .zip(deps)
        .enumerate()
        .map(|(i, (a, d))| WorkflowStep {
            step_id: format!("s{}", i + 1),
            action: *a,
            goal: a.goal().to_string(),
            division: a.division(),
            expert_hint: Some(a.lead_expert()),
            depends_on: d.iter().map(|n| format!("s{n}")).collect(),
        })
        .collect();
    WorkflowPlan { task_id: task_id.to_string(), template, task_target: task_target.to_string(), parameters, steps }
}
