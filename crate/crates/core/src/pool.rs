//! The shared pool: an append-only, permissioned blackboard of typed entries
//! with an audit trail that can rebuild the pool on its own.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AgentRole, Tier};
use crate::field::TelemetrySnapshot;
use crate::gn::{MarginReport, QotReport};
use crate::orchestrator::{AnalysisReport, FinalReport, InstructionSet, SecurityVerdict, WorkflowPlan};
use crate::twin::{CalibrationReport, RehearsalResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "body")]
pub enum Payload {
    WorkflowPlan(WorkflowPlan),
    TelemetrySnapshot(TelemetrySnapshot),
    QotReport(QotReport),
    CalibrationReport(CalibrationReport),
    RehearsalResult(RehearsalResult),
    MarginReport(MarginReport),
    InstructionSet(InstructionSet),
    AnalysisReport(AnalysisReport),
    SecurityVerdict(SecurityVerdict),
    FinalReport(FinalReport),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ContentKind {
    WorkflowPlan,
    TelemetrySnapshot,
    QotReport,
    CalibrationReport,
    RehearsalResult,
    MarginReport,
    InstructionSet,
    AnalysisReport,
    SecurityVerdict,
    FinalReport,
}

impl fmt::Display for ContentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl Payload {
    pub fn kind(&self) -> ContentKind {
        match self {
            Payload::WorkflowPlan(_) => ContentKind::WorkflowPlan,
            Payload::TelemetrySnapshot(_) => ContentKind::TelemetrySnapshot,
            Payload::QotReport(_) => ContentKind::QotReport,
            Payload::CalibrationReport(_) => ContentKind::CalibrationReport,
            Payload::RehearsalResult(_) => ContentKind::RehearsalResult,
            Payload::MarginReport(_) => ContentKind::MarginReport,
            Payload::InstructionSet(_) => ContentKind::InstructionSet,
            Payload::AnalysisReport(_) => ContentKind::AnalysisReport,
            Payload::SecurityVerdict(_) => ContentKind::SecurityVerdict,
            Payload::FinalReport(_) => ContentKind::FinalReport,
        }
    }

    /// Canonical wire bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("payload serializes")
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, String> {
        serde_json::from_slice(bytes).map_err(|e| e.to_string())
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("payload serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EntryStatus {
    Posted,
    Claimed,
    Completed,
    Failed,
}

impl EntryStatus {
    pub fn can_become(self, next: EntryStatus) -> bool {
        matches!(
            (self, next),
            (EntryStatus::Posted, EntryStatus::Claimed)
                | (EntryStatus::Claimed, EntryStatus::Completed)
                | (EntryStatus::Claimed, EntryStatus::Failed)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub entry_id: u64,
    pub task_id: String,
    pub step_id: Option<String>,
    pub instruction: String,
    pub sender: AgentRole,
    pub receiver: AgentRole,
    pub status: EntryStatus,
    pub content: Payload,
}

/// What a writer supplies; id, sender and status are assigned by the pool.
#[derive(Debug, Clone, PartialEq)]
pub struct NewEntry {
    pub task_id: String,
    pub step_id: Option<String>,
    pub instruction: String,
    pub receiver: AgentRole,
    pub content: Payload,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReadScope {
    All,
    /// Entries addressed to or posted by the reader.
    Own,
    Nothing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Permission {
    pub read: ReadScope,
    pub write: bool,
}

/// Fixed role permissions derived from the hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PermissionMatrix;

impl PermissionMatrix {
    pub fn of(&self, role: AgentRole) -> Permission {
        match role.tier() {
            Tier::Director => Permission { read: ReadScope::All, write: true },
            Tier::Division => Permission { read: ReadScope::Own, write: true },
            Tier::Expert => Permission { read: ReadScope::Nothing, write: false },
        }
    }

    pub fn can_read(&self, role: AgentRole, entry: &PoolEntry) -> bool {
        match self.of(role).read {
            ReadScope::All => true,
            ReadScope::Own => entry.receiver == role || entry.sender == role,
            ReadScope::Nothing => false,
        }
    }

    pub fn is_principal(&self, role: AgentRole) -> bool {
        self.of(role).write
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AuditAction {
    Put,
    Get,
    StatusChange,
    Denied,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub seq: u64,
    /// Logical clock; equal to `seq` because the pool serializes all access.
    pub timestamp: u64,
    pub actor: AgentRole,
    pub action: AuditAction,
    pub entry_id: Option<u64>,
    /// Full entry for `Put`, so replay needs nothing else.
    pub entry: Option<PoolEntry>,
    /// New status for `StatusChange`.
    pub status: Option<EntryStatus>,
    pub detail: Option<String>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PoolError {
    #[error("permission denied: {0} may not {1}")]
    PermissionDenied(AgentRole, String),
    #[error("illegal status transition {0:?} -> {1:?}")]
    IllegalTransition(EntryStatus, EntryStatus),
    #[error("unknown entry {0}")]
    UnknownEntry(u64),
    #[error("receiver {0} is not a pool principal")]
    InvalidReceiver(AgentRole),
    #[error("audit replay failed: {0}")]
    Replay(String),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Filter {
    pub task_id: Option<String>,
    pub step_id: Option<String>,
    pub receiver: Option<AgentRole>,
    pub sender: Option<AgentRole>,
    pub status: Option<EntryStatus>,
    pub kind: Option<ContentKind>,
}

impl Filter {
    pub fn task(task_id: &str) -> Self {
        Filter { task_id: Some(task_id.to_string()), ..Default::default() }
    }

    fn matches(&self, e: &PoolEntry) -> bool {
        self.task_id.as_ref().is_none_or(|t| *t == e.task_id)
            && self.step_id.as_ref().is_none_or(|s| e.step_id.as_ref() == Some(s))
            && self.receiver.is_none_or(|r| r == e.receiver)
            && self.sender.is_none_or(|r| r == e.sender)
            && self.status.is_none_or(|s| s == e.status)
            && self.kind.is_none_or(|k| k == e.content.kind())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SharedPool {
    entries: Vec<PoolEntry>,
    audit: Vec<AuditRecord>,
    matrix: PermissionMatrix,
}

impl SharedPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[PoolEntry] {
        &self.entries
    }

    pub fn audit(&self) -> &[AuditRecord] {
        &self.audit
    }

    pub fn permissions(&self) -> PermissionMatrix {
        self.matrix
    }

    fn log(&mut self, actor: AgentRole, action: AuditAction, entry_id: Option<u64>) -> &mut AuditRecord {
        let seq = self.audit.len() as u64 + 1;
        self.audit.push(AuditRecord { seq, timestamp: seq, actor, action, entry_id, entry: None, status: None, detail: None });
        self.audit.last_mut().expect("just pushed")
    }

    fn deny(&mut self, actor: AgentRole, what: &str, entry_id: Option<u64>) -> PoolError {
        self.log(actor, AuditAction::Denied, entry_id).detail = Some(what.to_string());
        PoolError::PermissionDenied(actor, what.to_string())
    }

    fn next_id(&self) -> u64 {
        self.entries.last().map_or(1, |e| e.entry_id + 1)
    }

    pub fn put(&mut self, actor: AgentRole, new: NewEntry) -> Result<u64, PoolError> {
        if !self.matrix.of(actor).write {
            return Err(self.deny(actor, "put", None));
        }
        if !self.matrix.is_principal(new.receiver) {
            return Err(PoolError::InvalidReceiver(new.receiver));
        }
        let entry = PoolEntry {
            entry_id: self.next_id(),
            task_id: new.task_id,
            step_id: new.step_id,
            instruction: new.instruction,
            sender: actor,
            receiver: new.receiver,
            status: EntryStatus::Posted,
            content: new.content,
        };
        let id = entry.entry_id;
        self.log(actor, AuditAction::Put, Some(id)).entry = Some(entry.clone());
        self.entries.push(entry);
        Ok(id)
    }

    /// Entries matching `filter` within the actor's read scope, by id.
    pub fn query(&mut self, actor: AgentRole, filter: &Filter) -> Result<Vec<PoolEntry>, PoolError> {
        let perm = self.matrix.of(actor);
        let out_of_scope = match perm.read {
            ReadScope::All => false,
            ReadScope::Own => filter.receiver.is_some_and(|r| r != actor) && filter.sender.is_none_or(|s| s != actor),
            ReadScope::Nothing => true,
        };
        if out_of_scope {
            return Err(self.deny(actor, "query", None));
        }
        let found: Vec<PoolEntry> =
            self.entries.iter().filter(|e| filter.matches(e) && self.matrix.can_read(actor, e)).cloned().collect();
        for e in &found {
            self.log(actor, AuditAction::Get, Some(e.entry_id));
        }
        Ok(found)
    }

    pub fn get(&mut self, actor: AgentRole, entry_id: u64) -> Result<PoolEntry, PoolError> {
        // roles without pool access learn nothing, not even whether the id exists
        if self.matrix.of(actor).read == ReadScope::Nothing {
            return Err(self.deny(actor, "get", Some(entry_id)));
        }
        let Some(e) = self.entries.iter().find(|e| e.entry_id == entry_id).cloned() else {
            return Err(PoolError::UnknownEntry(entry_id));
        };
        if !self.matrix.can_read(actor, &e) {
            return Err(self.deny(actor, "get", Some(entry_id)));
        }
        self.log(actor, AuditAction::Get, Some(entry_id));
        Ok(e)
    }

    pub fn update_status(&mut self, actor: AgentRole, entry_id: u64, status: EntryStatus) -> Result<(), PoolError> {
        if !self.matrix.is_principal(actor) {
            return Err(self.deny(actor, "update_status", Some(entry_id)));
        }
        let Some(pos) = self.entries.iter().position(|e| e.entry_id == entry_id) else {
            return Err(PoolError::UnknownEntry(entry_id));
        };
        let e = &self.entries[pos];
        let allowed = actor == AgentRole::NetworkDirector || (self.matrix.of(actor).write && e.receiver == actor);
        if !allowed {
            return Err(self.deny(actor, "update_status", Some(entry_id)));
        }
        if !e.status.can_become(status) {
            return Err(PoolError::IllegalTransition(e.status, status));
        }
        self.entries[pos].status = status;
        self.log(actor, AuditAction::StatusChange, Some(entry_id)).status = Some(status);
        Ok(())
    }

    /// Rebuilds a pool by folding the Put and StatusChange records of `audit`.
    pub fn replay(audit: &[AuditRecord]) -> Result<Vec<PoolEntry>, PoolError> {
        let mut entries: Vec<PoolEntry> = Vec::new();
        for r in audit {
            match r.action {
                AuditAction::Put => {
                    let e = r.entry.clone().ok_or_else(|| PoolError::Replay(format!("put {} without entry", r.seq)))?;
                    entries.push(e);
                }
                AuditAction::StatusChange => {
                    let id = r.entry_id.ok_or_else(|| PoolError::Replay(format!("status {} without id", r.seq)))?;
                    let s = r.status.ok_or_else(|| PoolError::Replay(format!("status {} without value", r.seq)))?;
                    let e = entries.iter_mut().find(|e| e.entry_id == id).ok_or(PoolError::UnknownEntry(id))?;
                    e.status = s;
                }
                AuditAction::Get | AuditAction::Denied => {}
            }
        }
        Ok(entries)
    }

    /// Line-delimited JSON: every entry, then every audit record.
    pub fn dump(&self) -> String {
        #[derive(Serialize)]
        #[serde(tag = "record", rename_all = "snake_case")]
        enum Line<'a> {
            Entry(&'a PoolEntry),
            Audit(&'a AuditRecord),
        }
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(&Line::Entry(e)).expect("entry serializes"));
            out.push('\n');
        }
        for a in &self.audit {
            out.push_str(&serde_json::to_string(&Line::Audit(a)).expect("audit serializes"));
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gn::QotReport;

    fn entry(receiver: AgentRole) -> NewEntry {
        NewEntry {
            task_id: "t1".into(),
            step_id: None,
            instruction: "x".into(),
            receiver,
            content: Payload::QotReport(QotReport::from_channels(vec![])),
        }
    }

    #[test]
    fn put_and_ids() {
        let mut p = SharedPool::new();
        assert_eq!(p.put(AgentRole::NetworkDirector, entry(AgentRole::DtAgent)).unwrap(), 1);
        assert_eq!(p.put(AgentRole::DtAgent, entry(AgentRole::NetworkDirector)).unwrap(), 2);
        let before = p.entries().to_vec();
        assert!(matches!(p.put(AgentRole::DataCollector, entry(AgentRole::DtAgent)), Err(PoolError::PermissionDenied(..))));
        assert_eq!(p.entries(), &before[..]);
        assert_eq!(p.audit().last().unwrap().action, AuditAction::Denied);
    }

    #[test]
    fn read_scopes() {
        let mut p = SharedPool::new();
        p.put(AgentRole::NetworkDirector, entry(AgentRole::DtAgent)).unwrap();
        p.put(AgentRole::NetworkDirector, entry(AgentRole::ControlAgent)).unwrap();
        let mine = p.query(AgentRole::DtAgent, &Filter { receiver: Some(AgentRole::DtAgent), ..Default::default() }).unwrap();
        assert_eq!(mine.len(), 1);
        assert!(p.query(AgentRole::DtAgent, &Filter { receiver: Some(AgentRole::ControlAgent), ..Default::default() }).is_err());
        assert_eq!(p.query(AgentRole::DtAgent, &Filter::default()).unwrap().len(), 1);
        assert_eq!(p.query(AgentRole::NetworkDirector, &Filter::task("t1")).unwrap().len(), 2);
        assert!(p.query(AgentRole::ModelingEngineer, &Filter::default()).is_err());
        assert!(p.get(AgentRole::DtAgent, 2).is_err());
    }

    #[test]
    fn status_transitions() {
        let mut p = SharedPool::new();
        let id = p.put(AgentRole::NetworkDirector, entry(AgentRole::DtAgent)).unwrap();
        assert!(matches!(p.update_status(AgentRole::DtAgent, id, EntryStatus::Completed), Err(PoolError::IllegalTransition(..))));
        assert!(p.update_status(AgentRole::ControlAgent, id, EntryStatus::Claimed).is_err());
        p.update_status(AgentRole::DtAgent, id, EntryStatus::Claimed).unwrap();
        p.update_status(AgentRole::DtAgent, id, EntryStatus::Completed).unwrap();
        assert!(matches!(p.update_status(AgentRole::DtAgent, id, EntryStatus::Claimed), Err(PoolError::IllegalTransition(..))));
        assert_eq!(SharedPool::replay(p.audit()).unwrap(), p.entries());
    }

    #[test]
    fn dump_is_line_per_record() {
        let mut p = SharedPool::new();
        p.put(AgentRole::NetworkDirector, entry(AgentRole::DtAgent)).unwrap();
        let d = p.dump();
        assert_eq!(d.lines().count(), 2);
        assert!(d.lines().next().unwrap().starts_with("{\"record\":\"entry\""));
    }
}
