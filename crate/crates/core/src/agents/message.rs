use serde::{Deserialize, Serialize};

use crate::orchestrator::{StepAction, TaskParameters, TemplateId};
use crate::pool::{ContentKind, Payload};

use super::AgentRole;

/// How an input arrived from the pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(clippy::large_enum_variant)]
pub enum InputContent {
    Intact(Payload),
    /// Bytes failed the transport digest or did not decode.
    Corrupted { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRef {
    /// Forwarded copy in the pool.
    pub entry_id: u64,
    /// The result entry the copy was made from.
    pub source_entry_id: u64,
    pub kind: ContentKind,
    pub content: InputContent,
}

/// Division to expert instruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskMessage {
    pub task_id: String,
    pub step_id: String,
    pub action: StepAction,
    pub template: TemplateId,
    pub instruction: String,
    pub parameters: TaskParameters,
    pub inputs: Vec<InputRef>,
    pub expected_output_kind: ContentKind,
    pub issuer: AgentRole,
}

impl TaskMessage {
    /// Intact payloads of one kind in pool order.
    pub fn all(&self, kind: ContentKind) -> Vec<&Payload> {
        self.inputs
            .iter()
            .filter(|i| i.kind == kind)
            .filter_map(|i| match &i.content {
                InputContent::Intact(p) => Some(p),
                InputContent::Corrupted { .. } => None,
            })
            .collect()
    }

    pub fn latest(&self, kind: ContentKind) -> Option<&Payload> {
        self.all(kind).into_iter().last()
    }

    pub fn earliest(&self, kind: ContentKind) -> Option<&Payload> {
        self.all(kind).into_iter().next()
    }

    /// The last input of a kind, corrupted or not.
    pub fn last_input(&self, kind: ContentKind) -> Option<&InputRef> {
        self.inputs.iter().rev().find(|i| i.kind == kind)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ResultStatus {
    Ok,
    Error(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task_id: String,
    pub step_id: String,
    pub expert: AgentRole,
    pub status: ResultStatus,
    pub output: Option<Payload>,
    pub notes: String,
}

impl TaskResult {
    pub fn ok(msg: &TaskMessage, expert: AgentRole, output: Payload, notes: impl Into<String>) -> Self {
        TaskResult {
            task_id: msg.task_id.clone(),
            step_id: msg.step_id.clone(),
            expert,
            status: ResultStatus::Ok,
            output: Some(output),
            notes: notes.into(),
        }
    }

    pub fn error(msg: &TaskMessage, expert: AgentRole, reason: impl Into<String>) -> Self {
        TaskResult {
            task_id: msg.task_id.clone(),
            step_id: msg.step_id.clone(),
            expert,
            status: ResultStatus::Error(reason.into()),
            output: None,
            notes: String::new(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == ResultStatus::Ok
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Review {
    Accept,
    Reject(String),
}
