//! Expert tool bindings and division review.
//!
//! Experts never see the shared pool: they get a [`TaskMessage`] from their
//! division and a [`Toolbox`] holding the NMS and the twin.

use std::collections::{BTreeMap, BTreeSet};

use crate::field::{apply_to_roster, CommandPayload, Nms, NmsCommand, Telemetry, TelemetrySnapshot};
use crate::gn::{self, MarginReport, QotReport};
use crate::orchestrator::{
    security_gate, AnalysisReport, InstructionSet, SectionKind, SecurityPolicy, SecurityVerdict, StepAction, TemplateId,
};
use crate::pool::{ContentKind, Payload};
use crate::rsa::{plan_service, OccupancyMap, PlanOptions, ServiceRequest};
use crate::topology::{Rate, Service, SiteId};
use crate::twin::{self, RehearsalResult, TwinModel, DEFAULT_MIN_MARGIN_DB};

use super::message::{InputContent, Review, TaskMessage, TaskResult};
use super::AgentRole;

pub const DEFAULT_BATCH_SAMPLES: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct ToolSettings {
    /// Records per telemetry collection; the first half calibrates, the
    /// second half is held out.
    pub batch_samples: usize,
    pub min_margin_db: f64,
    /// Named paths referenced by task targets ("Path A").
    pub path_labels: BTreeMap<String, Vec<SiteId>>,
    pub k_paths: usize,
}

impl Default for ToolSettings {
    fn default() -> Self {
        ToolSettings {
            batch_samples: DEFAULT_BATCH_SAMPLES,
            min_margin_db: DEFAULT_MIN_MARGIN_DB,
            path_labels: BTreeMap::new(),
            k_paths: crate::rsa::DEFAULT_K,
        }
    }
}

pub struct Toolbox<'a> {
    pub nms: &'a mut dyn Nms,
    pub twin: &'a mut TwinModel,
    pub settings: &'a ToolSettings,
}

type ToolResult = Result<(Payload, String), String>;

/// Runs `expert`'s tool for `msg` on behalf of `division`.
pub fn dispatch(tools: &mut Toolbox<'_>, division: AgentRole, expert: AgentRole, msg: &TaskMessage) -> TaskResult {
    if expert.division() != Some(division) {
        return TaskResult::error(msg, expert, "expert not in division");
    }
    if msg.issuer != division {
        return TaskResult::error(msg, expert, "message not issued by the expert's division");
    }
    let out = match expert {
        AgentRole::DataCollector => collect(tools, msg),
        AgentRole::ModelingEngineer => model(tools, msg),
        AgentRole::ValidationSpecialist => validate(tools, msg),
        AgentRole::ResourceCoordinator => coordinate(tools, msg),
        AgentRole::ConfigurationDeployer => deploy(tools, msg),
        AgentRole::SecuritySupporter => secure(tools, msg),
        AgentRole::FullLifecycleManager => lifecycle(tools, msg),
        AgentRole::StatisticalAnalyst => analyse(msg),
        _ => stub(expert, msg),
    };
    match out {
        Ok((payload, notes)) => TaskResult::ok(msg, expert, payload, notes),
        Err(reason) => TaskResult::error(msg, expert, reason),
    }
}

fn expect_kind(msg: &TaskMessage, kinds: &[ContentKind]) -> Result<(), String> {
    if kinds.contains(&msg.expected_output_kind) {
        Ok(())
    } else {
        Err(format!("cannot produce {}", msg.expected_output_kind))
    }
}

fn latest_snapshot(msg: &TaskMessage) -> Result<&TelemetrySnapshot, String> {
    match msg.latest(ContentKind::TelemetrySnapshot) {
        Some(Payload::TelemetrySnapshot(s)) => Ok(s),
        _ => Err("no telemetry snapshot in inputs".into()),
    }
}

fn earliest_snapshot(msg: &TaskMessage) -> Option<&TelemetrySnapshot> {
    match msg.earliest(ContentKind::TelemetrySnapshot) {
        Some(Payload::TelemetrySnapshot(s)) => Some(s),
        _ => None,
    }
}

fn snapshot_count(msg: &TaskMessage) -> usize {
    msg.all(ContentKind::TelemetrySnapshot).len()
}

fn latest_rehearsal(msg: &TaskMessage) -> Option<&RehearsalResult> {
    match msg.latest(ContentKind::RehearsalResult) {
        Some(Payload::RehearsalResult(r)) => Some(r),
        _ => None,
    }
}

fn latest_margins(msg: &TaskMessage) -> Option<&MarginReport> {
    match msg.latest(ContentKind::MarginReport) {
        Some(Payload::MarginReport(r)) => Some(r),
        _ => None,
    }
}

fn strategy(msg: &TaskMessage) -> Option<&AnalysisReport> {
    msg.all(ContentKind::AnalysisReport).into_iter().rev().find_map(|p| match p {
        Payload::AnalysisReport(a) if a.plan.is_some() => Some(a),
        _ => None,
    })
}

fn on_path(s: &Service, path: &[SiteId]) -> bool {
    s.path == path || s.path.iter().rev().eq(path.iter())
}

/// Services on the labelled paths, in roster order.
fn services_on(settings: &ToolSettings, services: &[Service], labels: &[String]) -> Result<Vec<Service>, String> {
    let mut out = Vec::new();
    for l in labels {
        let path = settings.path_labels.get(l).ok_or_else(|| format!("unknown path label {l}"))?;
        out.extend(services.iter().filter(|s| on_path(s, path)).cloned());
    }
    out.sort_by_key(|s| services.iter().position(|x| x.id == s.id));
    out.dedup_by(|a, b| a.id == b.id);
    Ok(out)
}

/// Commands the task calls for, issued by `issuer`.
fn change_commands(tools: &Toolbox<'_>, msg: &TaskMessage, issuer: AgentRole) -> Result<Vec<NmsCommand>, String> {
    match msg.template {
        TemplateId::OpReconfig => {
            let snap = latest_snapshot(msg)?;
            let drops = services_on(tools.settings, &snap.services, &msg.parameters.drop_paths)?;
            if drops.is_empty() {
                return Err("no services on the paths to drop".into());
            }
            Ok(drops
                .iter()
                .map(|s| NmsCommand::new(CommandPayload::DropService { service_id: s.id.clone() }, issuer))
                .collect())
        }
        TemplateId::Upgrade => {
            let plan = strategy(msg).and_then(|a| a.plan.as_ref()).ok_or("no upgrade strategy in inputs")?;
            Ok(vec![NmsCommand::new(CommandPayload::AddService { service: plan.service.clone() }, issuer)])
        }
        TemplateId::PlanQot => Err("task requests no network change".into()),
    }
}

fn collect(tools: &mut Toolbox<'_>, msg: &TaskMessage) -> ToolResult {
    expect_kind(msg, &[ContentKind::TelemetrySnapshot])?;
    let services = tools.nms.list_services();
    let records = (0..tools.settings.batch_samples.max(1))
        .map(|_| tools.nms.collect_performance())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let n = records.len();
    Ok((Payload::TelemetrySnapshot(TelemetrySnapshot { services, records }), format!("collected {n} records")))
}

fn model(tools: &mut Toolbox<'_>, msg: &TaskMessage) -> ToolResult {
    expect_kind(msg, &[ContentKind::CalibrationReport])?;
    let (fit, _) = latest_snapshot(msg)?.halves();
    let report = twin::calibrate(tools.twin, &fit).map_err(|e| e.to_string())?;
    Ok((Payload::CalibrationReport(report), "staged calibration on the leading half of the batch".into()))
}

fn validate(tools: &mut Toolbox<'_>, msg: &TaskMessage) -> ToolResult {
    expect_kind(msg, &[ContentKind::QotReport, ContentKind::RehearsalResult])?;
    let snap = latest_snapshot(msg)?;
    if msg.expected_output_kind == ContentKind::QotReport {
        let q = twin::estimate_qot(tools.twin, &snap.services).map_err(|e| e.to_string())?;
        return Ok((Payload::QotReport(q), "QoT of the current services on the twin".into()));
    }
    let commands = match msg.latest(ContentKind::InstructionSet) {
        Some(Payload::InstructionSet(set)) => set.commands.clone(),
        _ => change_commands(tools, msg, AgentRole::ValidationSpecialist)?,
    };
    let r = twin::rehearse(tools.twin, &commands, &snap.services, tools.settings.min_margin_db).map_err(|e| e.to_string())?;
    Ok((Payload::RehearsalResult(r), format!("rehearsed {} commands", commands.len())))
}

fn coordinate(tools: &mut Toolbox<'_>, msg: &TaskMessage) -> ToolResult {
    expect_kind(msg, &[ContentKind::MarginReport, ContentKind::AnalysisReport])?;
    if msg.expected_output_kind == ContentKind::MarginReport {
        let snap = latest_snapshot(msg)?;
        let mean = snap.mean().ok_or("empty telemetry snapshot")?;
        let m = gn::margin_from(
            mean.channels.iter().map(|c| (c.service_id.as_str(), c.center_frequency_thz, c.gsnr_db)),
            &gn::rates_of(&snap.services),
        )
        .map_err(|e| e.to_string())?;
        return Ok((Payload::MarginReport(m), "margins of measured GSNR".into()));
    }
    let r = latest_rehearsal(msg).ok_or("no rehearsal in inputs")?;
    let mut a = AnalysisReport::new("resource allocation analysis", AgentRole::ResourceCoordinator);
    a.push(
        SectionKind::Performance,
        "predicted_min_margin_db",
        "predicted minimum margin after the change",
        r.margins.min_margin_db,
        "dB",
        2,
    );
    a.push(SectionKind::Suggestions, "required_margin_db", "required margin", r.min_margin_required_db, "dB", 2);
    if let Some(d) = survivor_change(&r.baseline, &r.predicted) {
        a.push(
            SectionKind::Performance,
            "predicted_min_survivor_change_db",
            "predicted smallest GSNR change of remaining channels",
            d,
            "dB",
            2,
        );
    }
    a.feasible = Some(r.feasible);
    a.notes.push(if r.feasible {
        "rehearsal keeps every channel above the required margin; the change is feasible".into()
    } else {
        "rehearsal shows a channel below the required margin; the change is not feasible".into()
    });
    let _ = tools;
    Ok((Payload::AnalysisReport(a), String::new()))
}

/// Smallest (after - before) GSNR over channels present in both.
fn survivor_change(before: &QotReport, after: &QotReport) -> Option<f64> {
    after
        .channels
        .iter()
        .filter_map(|c| before.gsnr(&c.service_id).map(|b| c.gsnr_db - b))
        .reduce(f64::min)
}

fn deploy(tools: &mut Toolbox<'_>, msg: &TaskMessage) -> ToolResult {
    expect_kind(msg, &[ContentKind::InstructionSet])?;
    match msg.action {
        StepAction::ApplyChange => apply(tools, msg),
        _ => {
            let feasible = match msg.latest(ContentKind::AnalysisReport) {
                Some(Payload::AnalysisReport(a)) if a.feasible.is_some() => a.feasible == Some(true),
                _ => latest_rehearsal(msg).is_some_and(|r| r.feasible),
            };
            if !feasible {
                return Err("change not feasible per analysis".into());
            }
            let commands = change_commands(tools, msg, AgentRole::ConfigurationDeployer)?;
            let tag = match msg.template {
                TemplateId::Upgrade => "add",
                _ => "drop",
            };
            let set = InstructionSet::new(&msg.task_id, commands, AgentRole::ConfigurationDeployer, vec![tag.into()]);
            let n = set.commands.len();
            Ok((Payload::InstructionSet(set), format!("{n} commands")))
        }
    }
}

/// Applies an instruction set only under a matching approved verdict.
fn apply(tools: &mut Toolbox<'_>, msg: &TaskMessage) -> ToolResult {
    let set = match msg.last_input(ContentKind::InstructionSet).map(|i| &i.content) {
        Some(InputContent::Intact(Payload::InstructionSet(s))) => s,
        Some(InputContent::Corrupted { reason }) => return Err(format!("instruction set corrupted in transit: {reason}")),
        _ => return Err("no instruction set in inputs".into()),
    };
    let verdict = match msg.last_input(ContentKind::SecurityVerdict).map(|i| &i.content) {
        Some(InputContent::Intact(Payload::SecurityVerdict(v))) => v,
        _ => return Err("no security verdict in inputs".into()),
    };
    if !verdict.approved {
        return Err("not approved by security gate".into());
    }
    if !set.verify() || verdict.instruction_digest.as_deref() != Some(set.digest.as_str()) {
        return Err("instruction digest does not match the approved verdict".into());
    }
    let mut roster = tools.nms.list_services();
    for c in &set.commands {
        roster = apply_to_roster(&tools.twin.topology, &roster, c).map_err(|e| e.to_string())?;
    }
    for c in &set.commands {
        tools.nms.apply_command(c).map_err(|e| e.to_string())?;
    }
    Ok((Payload::InstructionSet(set.clone()), format!("applied {} commands", set.commands.len())))
}

fn secure(tools: &mut Toolbox<'_>, msg: &TaskMessage) -> ToolResult {
    expect_kind(msg, &[ContentKind::SecurityVerdict])?;
    let services = latest_snapshot(msg).map(|s| s.services.clone()).unwrap_or_default();
    let policy = SecurityPolicy::new(tools.twin.topology.grid, &services);
    let verdict = match msg.last_input(ContentKind::InstructionSet).map(|i| &i.content) {
        Some(InputContent::Intact(Payload::InstructionSet(set))) => security_gate(set, &policy),
        Some(InputContent::Corrupted { reason }) => SecurityVerdict::unreadable(reason),
        _ => SecurityVerdict::unreadable("no instruction set supplied"),
    };
    let note = if verdict.approved { "approved" } else { "rejected" };
    Ok((Payload::SecurityVerdict(verdict), note.into()))
}

/// Endpoints shared by most services; ties go to the smallest pair.
fn dominant_endpoints(services: &[Service]) -> Option<(SiteId, SiteId)> {
    let mut count: BTreeMap<(SiteId, SiteId), usize> = BTreeMap::new();
    for s in services {
        if let (Some(a), Some(b)) = (s.path.first(), s.path.last()) {
            *count.entry((*a, *b)).or_default() += 1;
        }
    }
    count.into_iter().max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0))).map(|(k, _)| k)
}

fn lifecycle(tools: &mut Toolbox<'_>, msg: &TaskMessage) -> ToolResult {
    expect_kind(msg, &[ContentKind::AnalysisReport])?;
    let snap = latest_snapshot(msg)?;
    let rate = Rate::try_from(msg.parameters.rate_gbps.unwrap_or(800)).map_err(|e| e.to_string())?;
    let (src, dst) = dominant_endpoints(&snap.services).ok_or("no deployed services to extend")?;
    let occupancy = OccupancyMap::from_services(&tools.twin.topology, &snap.services).map_err(|e| e.to_string())?;
    let request = ServiceRequest {
        id: format!("{}-{}g-new", msg.task_id, rate.gbps()),
        src,
        dst,
        rate,
        launch_power_dbm: None,
    };
    let opts = PlanOptions { k: tools.settings.k_paths, min_margin_db: tools.settings.min_margin_db };
    let plan = plan_service(&occupancy, tools.twin, &snap.services, &request, opts).map_err(|e| e.to_string())?;
    let mut a = AnalysisReport::new("upgrade strategy", AgentRole::FullLifecycleManager);
    a.push(SectionKind::Performance, "center_frequency_thz", "selected channel center", plan.center_frequency_thz, "THz", 2);
    a.push(SectionKind::Performance, "path_length_km", "selected path length", plan.path.length_km, "km", 1);
    let new_gsnr = plan.rehearsal.predicted.gsnr(&plan.service.id).unwrap_or(f64::NAN);
    a.push(SectionKind::Performance, "predicted_new_gsnr_db", "predicted GSNR of the new signal", new_gsnr, "dB", 2);
    a.push(
        SectionKind::Suggestions,
        "predicted_min_margin_db",
        "predicted minimum margin with the new signal",
        plan.rehearsal.margins.min_margin_db,
        "dB",
        2,
    );
    a.feasible = Some(plan.rehearsal.feasible);
    a.notes.push("lowest free window on the shortest candidate path that passes rehearsal".into());
    a.plan = Some(plan);
    Ok((Payload::AnalysisReport(a), String::new()))
}

fn min_max(t: &Telemetry) -> Option<(f64, f64)> {
    let g: Vec<f64> = t.channels.iter().map(|c| c.gsnr_db).collect();
    if g.is_empty() {
        return None;
    }
    Some((g.iter().copied().fold(f64::INFINITY, f64::min), g.iter().copied().fold(f64::NEG_INFINITY, f64::max)))
}

fn max_abs_error(predicted: &QotReport, observed: &Telemetry) -> Option<(f64, f64)> {
    let errs: Vec<f64> = predicted
        .channels
        .iter()
        .filter_map(|p| observed.gsnr(&p.service_id).map(|o| (p.gsnr_db - o).abs()))
        .collect();
    if errs.is_empty() {
        return None;
    }
    Some((errs.iter().copied().fold(0.0, f64::max), errs.iter().sum::<f64>() / errs.len() as f64))
}

fn margin_note(a: &mut AnalysisReport, min_margin: f64, required: f64) {
    a.notes.push(if min_margin >= required + 2.0 {
        "margins are sufficient; keep periodic twin recalibration to track ageing".into()
    } else if min_margin >= required {
        "margins are acceptable but thin; rehearse any change next to the weakest signal first".into()
    } else {
        "margin is below the safety threshold; reduce load on the weakest path or regenerate it".into()
    });
}

fn analyse(msg: &TaskMessage) -> ToolResult {
    expect_kind(msg, &[ContentKind::AnalysisReport])?;
    let mut a = AnalysisReport::new("result analysis", AgentRole::StatisticalAnalyst);
    let last = latest_snapshot(msg)?;
    match msg.template {
        TemplateId::PlanQot => {
            let (fit, hold) = last.halves();
            let hold = if hold.records.is_empty() { fit } else { hold };
            let mean = hold.mean().ok_or("empty telemetry snapshot")?;
            if let Some((lo, hi)) = min_max(&mean) {
                a.push(SectionKind::Performance, "channel_count", "signals evaluated", mean.channels.len() as f64, "", 0);
                a.push(SectionKind::Performance, "measured_min_gsnr_db", "lowest measured GSNR", lo, "dB", 2);
                a.push(SectionKind::Performance, "measured_max_gsnr_db", "highest measured GSNR", hi, "dB", 2);
            }
            if let Some(Payload::QotReport(q)) = msg.latest(ContentKind::QotReport) {
                if let Some((max, avg)) = max_abs_error(q, &mean) {
                    a.push(
                        SectionKind::ErrorAnalysis,
                        "holdout_max_abs_error_db",
                        "largest absolute GSNR error of the twin against hold-out telemetry",
                        max,
                        "dB",
                        2,
                    );
                    a.push(
                        SectionKind::ErrorAnalysis,
                        "holdout_mean_abs_error_db",
                        "mean absolute GSNR error against hold-out telemetry",
                        avg,
                        "dB",
                        2,
                    );
                }
            }
        }
        TemplateId::OpReconfig | TemplateId::Upgrade => {
            let first = earliest_snapshot(msg).ok_or("no telemetry snapshot in inputs")?;
            let pre = first.mean().ok_or("empty telemetry snapshot")?;
            if let Some((lo, hi)) = min_max(&pre) {
                a.push(SectionKind::Performance, "pre_min_gsnr_db", "lowest measured GSNR before the change", lo, "dB", 2);
                a.push(SectionKind::Performance, "pre_max_gsnr_db", "highest measured GSNR before the change", hi, "dB", 2);
            }
            if snapshot_count(msg) >= 2 {
                let post = last.mean().ok_or("empty telemetry snapshot")?;
                let before: BTreeSet<&str> = first.services.iter().map(|s| s.id.as_str()).collect();
                let after: BTreeSet<&str> = last.services.iter().map(|s| s.id.as_str()).collect();
                a.push(SectionKind::Performance, "dropped_count", "signals removed", before.difference(&after).count() as f64, "", 0);
                a.push(SectionKind::Performance, "added_count", "signals added", after.difference(&before).count() as f64, "", 0);
                a.push(SectionKind::Performance, "retained_count", "signals retained", before.intersection(&after).count() as f64, "", 0);
                if let Some((lo, hi)) = min_max(&post) {
                    a.push(SectionKind::Performance, "post_min_gsnr_db", "lowest measured GSNR after the change", lo, "dB", 2);
                    a.push(SectionKind::Performance, "post_max_gsnr_db", "highest measured GSNR after the change", hi, "dB", 2);
                }
                let changes: Vec<f64> = post
                    .channels
                    .iter()
                    .filter_map(|c| pre.gsnr(&c.service_id).map(|b| c.gsnr_db - b))
                    .collect();
                if let Some(min) = changes.iter().copied().reduce(f64::min) {
                    a.push(
                        SectionKind::Performance,
                        "max_degradation_db",
                        "largest measured GSNR degradation of retained signals",
                        (-min).max(0.0),
                        "dB",
                        2,
                    );
                }
                for id in after.difference(&before) {
                    if let Some(c) = post.channel(id) {
                        a.push(SectionKind::Performance, "added_center_thz", "new signal center", c.center_frequency_thz, "THz", 2);
                        a.push(SectionKind::Performance, "added_gsnr_db", "measured GSNR of the new signal", c.gsnr_db, "dB", 2);
                    }
                }
                if let Some(r) = latest_rehearsal(msg) {
                    if let Some((max, avg)) = max_abs_error(&r.predicted, &post) {
                        a.push(
                            SectionKind::ErrorAnalysis,
                            "post_change_max_abs_error_db",
                            "largest absolute error between rehearsed and measured GSNR",
                            max,
                            "dB",
                            2,
                        );
                        a.push(
                            SectionKind::ErrorAnalysis,
                            "post_change_mean_abs_error_db",
                            "mean absolute error between rehearsed and measured GSNR",
                            avg,
                            "dB",
                            2,
                        );
                    }
                }
            }
        }
    }
    if let Some(m) = latest_margins(msg) {
        a.push(SectionKind::Suggestions, "min_margin_db", "minimum measured margin above the rate threshold", m.min_margin_db, "dB", 2);
        margin_note(&mut a, m.min_margin_db, DEFAULT_MIN_MARGIN_DB);
    }
    Ok((Payload::AnalysisReport(a), String::new()))
}

fn stub(expert: AgentRole, msg: &TaskMessage) -> ToolResult {
    expect_kind(msg, &[ContentKind::AnalysisReport])?;
    let mut a = AnalysisReport::new("no-op", expert);
    a.notes.push(format!("{} has no tool binding in this deployment", expert.name()));
    Ok((Payload::AnalysisReport(a), "no-op".into()))
}

/// Kind-specific completeness predicate used by [`review`].
pub fn completeness(payload: &Payload, msg: &TaskMessage) -> Result<(), String> {
    let finite = |x: f64| x.is_finite();
    match payload {
        Payload::TelemetrySnapshot(s) => {
            if s.records.is_empty() {
                return Err("empty telemetry batch".into());
            }
            let ids: BTreeSet<&str> = s.services.iter().map(|x| x.id.as_str()).collect();
            for r in &s.records {
                let got: BTreeSet<&str> = r.channels.iter().map(|c| c.service_id.as_str()).collect();
                if got != ids {
                    return Err("telemetry does not cover every service".into());
                }
            }
            Ok(())
        }
        Payload::CalibrationReport(c) => {
            if c.stages.is_empty() || !finite(c.final_max_gsnr_error_db) {
                return Err("calibration report incomplete".into());
            }
            Ok(())
        }
        Payload::QotReport(q) => {
            let want: BTreeSet<&str> = latest_snapshot(msg)?.services.iter().map(|s| s.id.as_str()).collect();
            let got: BTreeSet<&str> = q.channels.iter().map(|c| c.service_id.as_str()).collect();
            if want != got {
                return Err("incomplete channels".into());
            }
            if q.channels.iter().any(|c| !finite(c.gsnr_db)) {
                return Err("non-finite GSNR".into());
            }
            Ok(())
        }
        Payload::RehearsalResult(r) => {
            let p: BTreeSet<&str> = r.predicted.channels.iter().map(|c| c.service_id.as_str()).collect();
            let m: BTreeSet<&str> = r.margins.channels.iter().map(|c| c.service_id.as_str()).collect();
            if p != m {
                return Err("margins do not cover the predicted channels".into());
            }
            Ok(())
        }
        Payload::MarginReport(m) => {
            if m.channels.iter().any(|c| !finite(c.margin_db)) {
                return Err("non-finite margin".into());
            }
            Ok(())
        }
        Payload::InstructionSet(s) => {
            if s.commands.is_empty() {
                return Err("instruction set is empty".into());
            }
            if !s.verify() {
                return Err("instruction set digest mismatch".into());
            }
            Ok(())
        }
        Payload::SecurityVerdict(v) => {
            if !v.is_consistent() {
                return Err("verdict inconsistent with its checks".into());
            }
            Ok(())
        }
        Payload::AnalysisReport(a) => {
            if a.title.is_empty() {
                return Err("analysis has no title".into());
            }
            for m in &a.metrics {
                if !finite(m.value) {
                    return Err(format!("metric {} is not finite", m.name));
                }
                if m.label.chars().any(|c| c.is_ascii_digit()) {
                    return Err(format!("metric {} label carries digits", m.name));
                }
            }
            if a.notes.iter().any(|n| n.chars().any(|c| c.is_ascii_digit())) {
                return Err("analysis notes carry digits".into());
            }
            Ok(())
        }
        Payload::WorkflowPlan(p) => p.validate().map_err(|e| e.to_string()),
        Payload::FinalReport(_) => Ok(()),
    }
}

/// Division review before anything reaches the pool.
pub fn review(division: AgentRole, result: &TaskResult, msg: &TaskMessage) -> Review {
    if result.task_id != msg.task_id || result.step_id != msg.step_id {
        return Review::Reject("result does not answer this message".into());
    }
    if result.expert.division() != Some(division) {
        return Review::Reject("result from outside the division".into());
    }
    if let super::message::ResultStatus::Error(reason) = &result.status {
        return Review::Reject(reason.clone());
    }
    let Some(out) = &result.output else {
        return Review::Reject("missing output".into());
    };
    if out.kind() != msg.expected_output_kind {
        return Review::Reject(format!("expected {}, got {}", msg.expected_output_kind, out.kind()));
    }
    match completeness(out, msg) {
        Ok(()) => Review::Accept,
        Err(reason) => Review::Reject(reason),
    }
}
