use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::agents::{dispatch, review, AgentRole, InputContent, InputRef, Review, TaskMessage, ToolSettings, Toolbox};
use crate::field::{sha256_hex, FieldState};
use crate::pool::{ContentKind, EntryStatus, Filter, NewEntry, Payload, PoolEntry, SharedPool};
use crate::twin::TwinModel;

use super::plan::{StepAction, WorkflowPlan, WorkflowStep};
use super::report::{
    validate_citations, ClaimBuilder, FinalReport, ReportError, ReportSection, SectionKind, StepSummary,
    REPORT_SCHEMA_VERSION, SOFT_BUDGET_S,
};

/// Where a forwarded payload is on its way to.
#[derive(Debug, Clone, PartialEq)]
pub struct WireContext {
    pub step_id: String,
    pub action: StepAction,
    pub kind: ContentKind,
    pub source_entry_id: u64,
}

/// Hook that sees (and may alter) the bytes of every forwarded payload.
pub type Interceptor = Box<dyn FnMut(&WireContext, &mut Vec<u8>) + Send>;

pub struct Environment {
    pub pool: SharedPool,
    pub field: FieldState,
    pub twin: TwinModel,
    pub settings: ToolSettings,
    pub interceptor: Option<Interceptor>,
}

impl Environment {
    pub fn new(field: FieldState, twin: TwinModel, settings: ToolSettings) -> Self {
        Environment { pool: SharedPool::new(), field, twin, settings, interceptor: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StepStatus {
    Completed,
    Failed(String),
}

impl StepStatus {
    pub fn is_completed(&self) -> bool {
        *self == StepStatus::Completed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchRecord {
    pub expert: AgentRole,
    pub attempt: u8,
    pub expected: ContentKind,
    pub review: Review,
    pub notes: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub step_id: String,
    pub action: StepAction,
    pub division: AgentRole,
    pub status: StepStatus,
    pub assignment_entry: Option<u64>,
    pub input_entries: Vec<u64>,
    pub output_entries: Vec<u64>,
    pub dispatches: Vec<DispatchRecord>,
    #[serde(skip)]
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub task_id: String,
    pub plan_entry: Option<u64>,
    pub steps: Vec<StepTrace>,
}

impl ExecutionTrace {
    pub fn completed(&self) -> usize {
        self.steps.iter().filter(|s| s.status.is_completed()).count()
    }

    pub fn completion(&self) -> f64 {
        if self.steps.is_empty() {
            0.0
        } else {
            self.completed() as f64 / self.steps.len() as f64
        }
    }

    pub fn step(&self, action: StepAction) -> Option<&StepTrace> {
        self.steps.iter().find(|s| s.action == action)
    }

    pub fn to_structured(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }
}

/// Experts a step dispatches, in order, with the kind each must return.
pub fn step_experts(action: StepAction) -> Vec<(AgentRole, ContentKind)> {
    use AgentRole::*;
    use StepAction::*;
    match action {
        CollectAndPackage | Recollect => vec![(DataCollector, ContentKind::TelemetrySnapshot)],
        DtModeling => vec![(ModelingEngineer, ContentKind::CalibrationReport)],
        QotEstimation => vec![(ValidationSpecialist, ContentKind::QotReport)],
        DtRehearsal => vec![
            (ModelingEngineer, ContentKind::CalibrationReport),
            (ValidationSpecialist, ContentKind::RehearsalResult),
        ],
        ResourceAnalysis => vec![(ResourceCoordinator, ContentKind::AnalysisReport)],
        UpgradeStrategy => vec![(FullLifecycleManager, ContentKind::AnalysisReport)],
        GenerateInstructions | ApplyChange => vec![(ConfigurationDeployer, ContentKind::InstructionSet)],
        SecurityCheck => vec![(SecuritySupporter, ContentKind::SecurityVerdict)],
        AnalyzeAndReport => vec![
            (ResourceCoordinator, ContentKind::MarginReport),
            (StatisticalAnalyst, ContentKind::AnalysisReport),
        ],
    }
}

pub const MAX_ATTEMPTS: u8 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub trace: ExecutionTrace,
    pub report: Result<FinalReport, ReportError>,
    pub report_entry: Option<u64>,
}

/// Planner provenance recorded in the report.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlannerInfo {
    pub name: String,
    pub fallback: Option<String>,
}

fn payload_of(entries: &[PoolEntry], id: u64) -> Option<&Payload> {
    entries.iter().find(|e| e.entry_id == id).map(|e| &e.content)
}

/// Director-side gate: the instructions about to be applied must carry an
/// approved verdict with the same digest.
fn gate_allows(entries: &[PoolEntry], outputs: &BTreeMap<String, Vec<u64>>, order: &[String]) -> Result<(), String> {
    let mut set_digest = None;
    let mut verdict = None;
    for sid in order {
        for id in outputs.get(sid).into_iter().flatten() {
            match payload_of(entries, *id) {
                Some(Payload::InstructionSet(s)) => set_digest = Some(s.digest.clone()),
                Some(Payload::SecurityVerdict(v)) => verdict = Some(v.clone()),
                _ => {}
            }
        }
    }
    let digest = set_digest.ok_or("gated: no instruction set")?;
    let v = verdict.ok_or("gated: no security verdict")?;
    if !v.approved {
        return Err("gated: security verdict not approved".into());
    }
    if v.instruction_digest.as_deref() != Some(digest.as_str()) {
        return Err("gated: verdict digest does not match the instructions".into());
    }
    Ok(())
}

fn forward(
    env: &mut Environment,
    task_id: &str,
    step: &WorkflowStep,
    source: u64,
) -> Result<InputRef, String> {
    let entry = env.pool.get(AgentRole::NetworkDirector, source).map_err(|e| e.to_string())?;
    let kind = entry.content.kind();
    let mut bytes = entry.content.to_bytes();
    let sent = sha256_hex(&bytes);
    if let Some(hook) = env.interceptor.as_mut() {
        let ctx = WireContext { step_id: step.step_id.clone(), action: step.action, kind, source_entry_id: source };
        hook(&ctx, &mut bytes);
    }
    let intact = sha256_hex(&bytes) == sent;
    let (payload, content) = if intact {
        (Some(entry.content.clone()), InputContent::Intact(entry.content))
    } else {
        match Payload::from_bytes(&bytes) {
            Ok(p) => (Some(p), InputContent::Corrupted { reason: "transport digest mismatch".into() }),
            Err(e) => (None, InputContent::Corrupted { reason: format!("undecodable payload: {e}") }),
        }
    };
    let entry_id = match payload {
        Some(p) => env
            .pool
            .put(
                AgentRole::NetworkDirector,
                NewEntry {
                    task_id: task_id.to_string(),
                    step_id: Some(step.step_id.clone()),
                    instruction: format!("input for {}", step.action),
                    receiver: step.division,
                    content: p,
                },
            )
            .map_err(|e| e.to_string())?,
        None => source,
    };
    Ok(InputRef { entry_id, source_entry_id: source, kind, content })
}

struct StepRun {
    status: StepStatus,
    assignment: Option<u64>,
    inputs: Vec<u64>,
    outputs: Vec<u64>,
    dispatches: Vec<DispatchRecord>,
}

fn run_step(env: &mut Environment, plan: &WorkflowPlan, step: &WorkflowStep, prior: &[u64]) -> StepRun {
    let mut run = StepRun { status: StepStatus::Completed, assignment: None, inputs: vec![], outputs: vec![], dispatches: vec![] };
    let fail = |run: &mut StepRun, why: String| run.status = StepStatus::Failed(why);
    let director = AgentRole::NetworkDirector;
    let division = step.division;

    let assignment = env.pool.put(
        director,
        NewEntry {
            task_id: plan.task_id.clone(),
            step_id: Some(step.step_id.clone()),
            instruction: step.goal.clone(),
            receiver: division,
            content: Payload::WorkflowPlan(plan.assignment(&step.step_id)),
        },
    );
    let assignment = match assignment {
        Ok(id) => id,
        Err(e) => {
            fail(&mut run, e.to_string());
            return run;
        }
    };
    run.assignment = Some(assignment);

    let mut inputs = Vec::new();
    for &src in prior {
        match forward(env, &plan.task_id, step, src) {
            Ok(r) => {
                run.inputs.push(r.entry_id);
                inputs.push(r);
            }
            Err(e) => {
                fail(&mut run, e);
                return run;
            }
        }
    }

    if let Err(e) = env.pool.update_status(division, assignment, EntryStatus::Claimed) {
        fail(&mut run, e.to_string());
        return run;
    }
    // the division reads its package from the pool (audited)
    let visible = env
        .pool
        .query(division, &Filter { task_id: Some(plan.task_id.clone()), step_id: Some(step.step_id.clone()), receiver: Some(division), ..Default::default() })
        .map(|v| v.len())
        .unwrap_or(0);
    debug_assert!(visible >= 1);

    for (expert, kind) in step_experts(step.action) {
        let msg = TaskMessage {
            task_id: plan.task_id.clone(),
            step_id: step.step_id.clone(),
            action: step.action,
            template: plan.template,
            instruction: step.goal.clone(),
            parameters: plan.parameters.clone(),
            inputs: inputs.clone(),
            expected_output_kind: kind,
            issuer: division,
        };
        let mut accepted = None;
        let mut last_reason = String::new();
        for attempt in 1..=MAX_ATTEMPTS {
            let mut tools = Toolbox { nms: &mut env.field, twin: &mut env.twin, settings: &env.settings };
            let result = dispatch(&mut tools, division, expert, &msg);
            let verdict = review(division, &result, &msg);
            run.dispatches.push(DispatchRecord {
                expert,
                attempt,
                expected: kind,
                review: verdict.clone(),
                notes: result.notes.clone(),
            });
            log::debug!("{} {} attempt {attempt}: {:?}", step.step_id, expert.name(), verdict);
            match verdict {
                Review::Accept => {
                    accepted = result.output;
                    break;
                }
                Review::Reject(r) => last_reason = r,
            }
        }
        let Some(output) = accepted else {
            fail(&mut run, format!("{}: {last_reason}", expert.name()));
            break;
        };
        let posted = env.pool.put(
            division,
            NewEntry {
                task_id: plan.task_id.clone(),
                step_id: Some(step.step_id.clone()),
                instruction: format!("{} result from {}", step.action, expert.name()),
                receiver: director,
                content: output.clone(),
            },
        );
        let id = match posted {
            Ok(id) => id,
            Err(e) => {
                fail(&mut run, e.to_string());
                break;
            }
        };
        let _ = env.pool.update_status(director, id, EntryStatus::Claimed);
        let _ = env.pool.update_status(director, id, EntryStatus::Completed);
        run.outputs.push(id);
        inputs.push(InputRef { entry_id: id, source_entry_id: id, kind: output.kind(), content: InputContent::Intact(output) });
    }
    let end = if run.status.is_completed() { EntryStatus::Completed } else { EntryStatus::Failed };
    let _ = env.pool.update_status(division, assignment, end);
    run
}

/// Runs `plan` step by step and consolidates the report.
pub fn execute(plan: &WorkflowPlan, env: &mut Environment, planner: &PlannerInfo) -> RunResult {
    let started = Instant::now();
    let director = AgentRole::NetworkDirector;
    let mut trace = ExecutionTrace { task_id: plan.task_id.clone(), plan_entry: None, steps: vec![] };
    let plan_entry = env
        .pool
        .put(
            director,
            NewEntry {
                task_id: plan.task_id.clone(),
                step_id: None,
                instruction: plan.task_target.clone(),
                receiver: director,
                content: Payload::WorkflowPlan(plan.clone()),
            },
        )
        .ok();
    if let Some(id) = plan_entry {
        let _ = env.pool.update_status(director, id, EntryStatus::Claimed);
    }
    trace.plan_entry = plan_entry;

    let mut outputs: BTreeMap<String, Vec<u64>> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    let mut failed: BTreeSet<String> = BTreeSet::new();
    for step in &plan.steps {
        let t0 = Instant::now();
        let blocked = step.depends_on.iter().find(|d| failed.contains(*d));
        let run = if let Some(d) = blocked {
            StepRun {
                status: StepStatus::Failed(format!("aborted: dependency {d} failed")),
                assignment: None,
                inputs: vec![],
                outputs: vec![],
                dispatches: vec![],
            }
        } else if step.action == StepAction::ApplyChange {
            match gate_allows(env.pool.entries(), &outputs, &order) {
                Ok(()) => {
                    let prior: Vec<u64> = order.iter().flat_map(|s| outputs[s].clone()).collect();
                    run_step(env, plan, step, &prior)
                }
                Err(why) => StepRun { status: StepStatus::Failed(why), assignment: None, inputs: vec![], outputs: vec![], dispatches: vec![] },
            }
        } else {
            let prior: Vec<u64> = order.iter().flat_map(|s| outputs[s].clone()).collect();
            run_step(env, plan, step, &prior)
        };
        match &run.status {
            StepStatus::Completed => log::info!("{} {} completed", step.step_id, step.action),
            StepStatus::Failed(why) => log::warn!("{} {} failed: {why}", step.step_id, step.action),
        }
        if run.status.is_completed() {
            outputs.insert(step.step_id.clone(), run.outputs.clone());
            order.push(step.step_id.clone());
        } else {
            failed.insert(step.step_id.clone());
        }
        trace.steps.push(StepTrace {
            step_id: step.step_id.clone(),
            action: step.action,
            division: step.division,
            status: run.status,
            assignment_entry: run.assignment,
            input_entries: run.inputs,
            output_entries: run.outputs,
            dispatches: run.dispatches,
            duration_s: t0.elapsed().as_secs_f64(),
        });
    }
    if let Some(id) = plan_entry {
        let end = if failed.is_empty() { EntryStatus::Completed } else { EntryStatus::Failed };
        let _ = env.pool.update_status(director, id, end);
    }

    let wall = started.elapsed().as_secs_f64();
    let report = summarize(plan, &trace, env.pool.entries(), wall, planner);
    let report_entry = report.as_ref().ok().and_then(|r| {
        env.pool
            .put(
                director,
                NewEntry {
                    task_id: plan.task_id.clone(),
                    step_id: None,
                    instruction: "final report".into(),
                    receiver: director,
                    content: Payload::FinalReport(r.clone()),
                },
            )
            .ok()
    });
    RunResult { trace, report, report_entry }
}

fn status_text(s: &StepStatus) -> String {
    match s {
        StepStatus::Completed => "Completed".into(),
        StepStatus::Failed(r) => format!("Failed ({r})"),
    }
}

/// Consolidates the step outputs named in `trace` into a report whose every
/// number is cited. Fails if a traced entry is missing from `entries`.
pub fn summarize(
    plan: &WorkflowPlan,
    trace: &ExecutionTrace,
    entries: &[PoolEntry],
    wall_time_s: f64,
    planner: &PlannerInfo,
) -> Result<FinalReport, ReportError> {
    let mut sections: BTreeMap<SectionKind, Vec<crate::orchestrator::Claim>> = BTreeMap::new();
    for st in &trace.steps {
        for &id in &st.output_entries {
            let payload = payload_of(entries, id)
                .ok_or_else(|| ReportError::Citation(format!("traced entry {id} missing from the pool")))?;
            let claims = claims_for(st.action, id, payload);
            for (k, c) in claims {
                sections.entry(k).or_default().push(c);
            }
        }
    }
    let sections: Vec<ReportSection> = SectionKind::ALL
        .iter()
        .map(|k| ReportSection { kind: *k, title: k.title().to_string(), claims: sections.remove(k).unwrap_or_default() })
        .collect();
    let cited: BTreeSet<u64> = sections.iter().flat_map(|s| &s.claims).flat_map(|c| &c.citations).map(|c| c.entry_id).collect();
    let report = FinalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        task_id: plan.task_id.clone(),
        template: Some(plan.template),
        task_target: plan.task_target.clone(),
        planner: planner.name.clone(),
        planner_fallback: planner.fallback.clone(),
        steps: trace
            .steps
            .iter()
            .map(|s| StepSummary {
                step_id: s.step_id.clone(),
                action: s.action.to_string(),
                division: s.division,
                status: status_text(&s.status),
            })
            .collect(),
        steps_completed: trace.completed(),
        steps_total: trace.steps.len(),
        completion: trace.completion(),
        sections,
        cited_entries: cited.into_iter().collect(),
        wall_time_s,
        soft_budget_s: SOFT_BUDGET_S,
        within_budget: wall_time_s <= SOFT_BUDGET_S,
    };
    validate_citations(&report, entries)?;
    Ok(report)
}

fn claims_for(action: StepAction, id: u64, payload: &Payload) -> Vec<(SectionKind, crate::orchestrator::Claim)> {
    let mut out = Vec::new();
    match payload {
        Payload::CalibrationReport(c) => {
            out.push((
                SectionKind::ErrorAnalysis,
                ClaimBuilder::new()
                    .text("twin GSNR residual on calibration data: ")
                    .num(c.initial_max_gsnr_error_db, 2, id, "/body/initial_max_gsnr_error_db")
                    .text(" dB before calibration, ")
                    .num(c.final_max_gsnr_error_db, 2, id, "/body/final_max_gsnr_error_db")
                    .text(" dB after")
                    .build(),
            ));
        }
        Payload::QotReport(q) => {
            for (i, ch) in q.channels.iter().enumerate() {
                out.push((
                    SectionKind::Performance,
                    ClaimBuilder::new()
                        .text("estimated GSNR at ")
                        .num(ch.center_frequency_thz, 2, id, format!("/body/channels/{i}/center_frequency_thz"))
                        .text(" THz: ")
                        .num(ch.gsnr_db, 2, id, format!("/body/channels/{i}/gsnr_db"))
                        .text(" dB")
                        .build(),
                ));
            }
        }
        Payload::RehearsalResult(r) => {
            let feas = if r.feasible { "feasible" } else { "not feasible" };
            out.push((
                SectionKind::Performance,
                ClaimBuilder::new()
                    .text(&format!("rehearsal on the twin: change {feas}, predicted minimum margin "))
                    .num(r.margins.min_margin_db, 2, id, "/body/margins/min_margin_db")
                    .text(" dB")
                    .build(),
            ));
        }
        Payload::SecurityVerdict(v) => {
            let text = if v.approved {
                "security gate approved the instructions (authenticity, integrity and policy checks passed)"
            } else {
                "security gate rejected the instructions"
            };
            out.push((SectionKind::Suggestions, ClaimBuilder::new().text(text).build()));
        }
        Payload::InstructionSet(s) => {
            let tags = s.policy_tags.join(", ");
            let text = if action == StepAction::ApplyChange {
                format!("approved instructions ({tags}) applied to the field network")
            } else {
                format!("configuration instructions ({tags}) prepared by {}", s.issuer.name())
            };
            out.push((SectionKind::Performance, ClaimBuilder::new().text(&text).build()));
        }
        Payload::AnalysisReport(a) => {
            for (i, m) in a.metrics.iter().enumerate() {
                let unit = if m.unit.is_empty() { String::new() } else { format!(" {}", m.unit) };
                out.push((
                    m.section,
                    ClaimBuilder::new()
                        .text(&format!("{}: ", m.label))
                        .num(m.value, m.decimals, id, format!("/body/metrics/{i}/value"))
                        .text(&unit)
                        .build(),
                ));
            }
            for n in &a.notes {
                out.push((SectionKind::Suggestions, ClaimBuilder::new().text(n).build()));
            }
        }
        Payload::MarginReport(_) | Payload::TelemetrySnapshot(_) | Payload::WorkflowPlan(_) | Payload::FinalReport(_) => {}
    }
    out
}

/// Gate-before-apply: every completed apply step applied exactly the
/// instructions approved by an earlier security step.
pub fn gate_before_apply_holds(trace: &ExecutionTrace, entries: &[PoolEntry]) -> bool {
    let mut approved: BTreeSet<String> = BTreeSet::new();
    for st in &trace.steps {
        match st.action {
            StepAction::SecurityCheck if st.status.is_completed() => {
                for id in &st.output_entries {
                    if let Some(Payload::SecurityVerdict(v)) = payload_of(entries, *id) {
                        if v.approved {
                            approved.extend(v.instruction_digest.clone());
                        }
                    }
                }
            }
            StepAction::ApplyChange if st.status.is_completed() => {
                for id in &st.output_entries {
                    match payload_of(entries, *id) {
                        Some(Payload::InstructionSet(s)) if approved.contains(&s.digest) && s.verify() => {}
                        _ => return false,
                    }
                }
            }
            _ => {}
        }
    }
    true
}
