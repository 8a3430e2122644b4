use ztnet_core::agents::{
    classify, dispatch, review, AgentRole, InputContent, InputRef, PlannerError, Review, TaskMessage, TaskResult,
    ToolSettings, Toolbox,
};
use ztnet_core::field::{init_field, CommandPayload, FieldState, NmsCommand};
use ztnet_core::gn::QotReport;
use ztnet_core::orchestrator::{InstructionSet, StepAction, TaskParameters, TemplateId};
use ztnet_core::pool::{ContentKind, Payload};
use ztnet_core::scenario::{CASE1_SERVICES, CASE1_TARGET, CASE2_TARGET, CASE3_TARGET};
use ztnet_core::topology::{load_services, NetworkTopology, Rate, Service};
use ztnet_core::twin::TwinModel;

struct Rig {
    field: FieldState,
    twin: TwinModel,
    settings: ToolSettings,
}

impl Rig {
    fn new() -> Self {
        let topo = NetworkTopology::default_topology();
        let mut field = init_field(&topo, 0, 0.1);
        field.provision(load_services(CASE1_SERVICES, &topo).unwrap()).unwrap();
        Rig { field, twin: TwinModel::new(topo), settings: ToolSettings::default() }
    }

    fn run(&mut self, division: AgentRole, expert: AgentRole, msg: &TaskMessage) -> TaskResult {
        let mut tools = Toolbox { nms: &mut self.field, twin: &mut self.twin, settings: &self.settings };
        dispatch(&mut tools, division, expert, msg)
    }
}

fn message(action: StepAction, issuer: AgentRole, expected: ContentKind, inputs: Vec<Payload>) -> TaskMessage {
    TaskMessage {
        task_id: "t".into(),
        step_id: "s1".into(),
        action,
        template: TemplateId::PlanQot,
        instruction: action.to_string(),
        parameters: TaskParameters::default(),
        inputs: inputs
            .into_iter()
            .enumerate()
            .map(|(i, p)| InputRef { entry_id: i as u64 + 1, source_entry_id: i as u64 + 1, kind: p.kind(), content: InputContent::Intact(p) })
            .collect(),
        expected_output_kind: expected,
        issuer,
    }
}

fn collect(rig: &mut Rig) -> Payload {
    let msg = message(StepAction::CollectAndPackage, AgentRole::OpticalLayerAgent, ContentKind::TelemetrySnapshot, vec![]);
    rig.run(AgentRole::OpticalLayerAgent, AgentRole::DataCollector, &msg).output.unwrap()
}

#[test]
fn data_collector_returns_a_snapshot() {
    let mut rig = Rig::new();
    let msg = message(StepAction::CollectAndPackage, AgentRole::OpticalLayerAgent, ContentKind::TelemetrySnapshot, vec![]);
    let r = rig.run(AgentRole::OpticalLayerAgent, AgentRole::DataCollector, &msg);
    assert!(r.is_ok());
    match r.output.as_ref().unwrap() {
        Payload::TelemetrySnapshot(s) => assert_eq!(s.records.len(), rig.settings.batch_samples),
        other => panic!("got {:?}", other.kind()),
    }
    assert_eq!(review(AgentRole::OpticalLayerAgent, &r, &msg), Review::Accept);
}

#[test]
fn experts_only_serve_their_division() {
    let mut rig = Rig::new();
    let msg = message(StepAction::DtModeling, AgentRole::DtAgent, ContentKind::TelemetrySnapshot, vec![]);
    let r = rig.run(AgentRole::DtAgent, AgentRole::DataCollector, &msg);
    assert_eq!(r.status, ztnet_core::agents::ResultStatus::Error("expert not in division".into()));
    assert_eq!(review(AgentRole::DtAgent, &r, &msg), Review::Reject("result from outside the division".into()));
}

#[test]
fn rehearsal_errors_propagate() {
    let mut rig = Rig::new();
    let snap = collect(&mut rig);
    let Payload::TelemetrySnapshot(s) = &snap else { unreachable!() };
    let clash = Service::new("clash", s.services[0].path.clone(), s.services[0].center_frequency_thz, Rate::G100);
    let cmd = NmsCommand::new(CommandPayload::AddService { service: clash }, AgentRole::ConfigurationDeployer);
    let set = InstructionSet::new("t", vec![cmd], AgentRole::ConfigurationDeployer, vec![]);
    let msg = message(
        StepAction::DtRehearsal,
        AgentRole::DtAgent,
        ContentKind::RehearsalResult,
        vec![snap.clone(), Payload::InstructionSet(set)],
    );
    let r = rig.run(AgentRole::DtAgent, AgentRole::ValidationSpecialist, &msg);
    match &r.status {
        ztnet_core::agents::ResultStatus::Error(e) => assert!(e.contains("slice collision"), "{e}"),
        s => panic!("{s:?}"),
    }
    match review(AgentRole::DtAgent, &r, &msg) {
        Review::Reject(why) => assert!(why.contains("slice collision")),
        Review::Accept => panic!("accepted an error"),
    }
}

#[test]
fn review_rejects_incomplete_qot() {
    let mut rig = Rig::new();
    let snap = collect(&mut rig);
    let msg = message(StepAction::QotEstimation, AgentRole::DtAgent, ContentKind::QotReport, vec![snap]);
    let mut r = rig.run(AgentRole::DtAgent, AgentRole::ValidationSpecialist, &msg);
    assert_eq!(review(AgentRole::DtAgent, &r, &msg), Review::Accept);
    let Some(Payload::QotReport(q)) = &r.output else { panic!() };
    assert_eq!(q.channels.len(), 10);
    let short = QotReport::from_channels(q.channels[..8].to_vec());
    r.output = Some(Payload::QotReport(short));
    assert_eq!(review(AgentRole::DtAgent, &r, &msg), Review::Reject("incomplete channels".into()));
    r.output = None;
    assert!(matches!(review(AgentRole::DtAgent, &r, &msg), Review::Reject(_)));
}

#[test]
fn corrupted_inputs_are_invisible_to_tools() {
    let mut rig = Rig::new();
    let mut msg = message(StepAction::QotEstimation, AgentRole::DtAgent, ContentKind::QotReport, vec![]);
    msg.inputs.push(InputRef {
        entry_id: 1,
        source_entry_id: 1,
        kind: ContentKind::TelemetrySnapshot,
        content: InputContent::Corrupted { reason: "transport digest mismatch".into() },
    });
    let r = rig.run(AgentRole::DtAgent, AgentRole::ValidationSpecialist, &msg);
    assert!(!r.is_ok());
}

#[test]
fn task_targets_classify() {
    assert_eq!(classify(CASE1_TARGET).unwrap().0, TemplateId::PlanQot);
    let (t, p) = classify(CASE2_TARGET).unwrap();
    assert_eq!(t, TemplateId::OpReconfig);
    assert_eq!((p.drop_paths, p.keep_paths), (vec!["A".to_string(), "C".to_string()], vec!["B".to_string()]));
    let (t, p) = classify(CASE3_TARGET).unwrap();
    assert_eq!((t, p.rate_gbps), (TemplateId::Upgrade, Some(800)));
    assert_eq!(classify("please order a pizza"), Err(PlannerError::UnrecognizedIntent));
    assert_eq!(classify(CASE2_TARGET), classify(CASE2_TARGET));
}
