//! Seeded generators shared by the integration suites.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ztnet_core::agents::AgentRole;
use ztnet_core::gn::CombChannel;
use ztnet_core::orchestrator::{AnalysisReport, SectionKind};
use ztnet_core::pool::{EntryStatus, Filter, NewEntry, Payload, PoolError, SharedPool};
use ztnet_core::rsa::OccupancyMap;
use ztnet_core::topology::{Amplifier, Element, FiberSpan, NetworkTopology, Rate, Service};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_span<R: Rng>(r: &mut R) -> FiberSpan {
    FiberSpan {
        length_km: r.random_range(20.0..130.0),
        attenuation_db_per_km: r.random_range(0.17..0.25),
        dispersion_ps_nm_km: r.random_range(2.0..20.0),
        gamma_per_w_km: r.random_range(0.8..1.8),
        connector_loss_in_db: r.random_range(0.0..0.5),
        connector_loss_out_db: r.random_range(0.0..0.5),
    }
}

/// Span plus a flat amplifier that exactly compensates it.
pub fn random_element<R: Rng>(r: &mut R) -> Element {
    let span = random_span(r);
    Element { span, amp: Amplifier { gain_db: span.loss_db(), noise_figure_db: r.random_range(4.0..7.0), tilt_db: 0.0 } }
}

pub fn random_comb<R: Rng>(r: &mut R) -> Vec<CombChannel> {
    let n = r.random_range(1..=6);
    let mut slots: Vec<u32> = (0..60).collect();
    (0..n)
        .map(|_| {
            let k = slots.swap_remove(r.random_range(0..slots.len()));
            CombChannel {
                center_thz: 191.05 + k as f64 * 0.1,
                symbol_rate_gbd: [32.0, 64.0, 96.0][r.random_range(0..3)],
                power_mw: 10f64.powf(r.random_range(-3.0..3.0) / 10.0),
            }
        })
        .collect()
}

/// A small instance: the 1-2 line system rebuilt from 1 to 4 random
/// elements, carrying 1 to 6 services on non-overlapping windows.
pub fn random_line_instance<R: Rng>(r: &mut R) -> (NetworkTopology, Vec<Service>) {
    let mut topo = NetworkTopology::default_topology();
    let oms = topo.omses.iter_mut().find(|o| o.connects(1, 2)).expect("1-2 line system");
    oms.elements = (0..r.random_range(1..=4)).map(|_| random_element(r)).collect();
    let n = r.random_range(1..=6);
    let mut slots: Vec<u32> = (0..60).collect();
    let services = (0..n)
        .map(|i| {
            let k = slots.swap_remove(r.random_range(0..slots.len()));
            let rate = [Rate::G100, Rate::G400, Rate::G800][r.random_range(0..3)];
            let mut s = Service::new(format!("s{i}"), vec![1, 2], topo.grid.center_of(k * 8, 8), rate);
            s.launch_power_dbm = r.random_range(-3.0..3.0);
            s
        })
        .collect();
    (topo, services)
}

/// Random per-line-system occupancy of the default topology.
pub fn random_occupancy<R: Rng>(r: &mut R, topo: &NetworkTopology) -> OccupancyMap {
    let mut occ = OccupancyMap::empty(topo);
    let fill = r.random_range(0.0..1.0);
    for i in 0..topo.omses.len() {
        for s in 0..occ.slice_count() {
            if r.random_bool(fill * 0.9) {
                occ.set(i, s, true);
            }
        }
    }
    occ
}

pub const PRINCIPALS: [AgentRole; 5] = [
    AgentRole::NetworkDirector,
    AgentRole::OpticalLayerAgent,
    AgentRole::DtAgent,
    AgentRole::ControlAgent,
    AgentRole::SupportAgent,
];

#[derive(Debug, Clone)]
pub enum Op {
    Put { actor: AgentRole, receiver: AgentRole, task: u8 },
    Get { actor: AgentRole, id: u64 },
    Query { actor: AgentRole, receiver: Option<AgentRole>, task: Option<u8> },
    Update { actor: AgentRole, id: u64, status: EntryStatus },
}

fn any_role<R: Rng>(r: &mut R) -> AgentRole {
    AgentRole::ALL[r.random_range(0..AgentRole::ALL.len())]
}

/// Biased towards principals so that most operations do something.
fn some_role<R: Rng>(r: &mut R) -> AgentRole {
    if r.random_bool(0.75) {
        PRINCIPALS[r.random_range(0..PRINCIPALS.len())]
    } else {
        any_role(r)
    }
}

pub fn random_ops<R: Rng>(r: &mut R, len: usize) -> Vec<Op> {
    let statuses = [EntryStatus::Posted, EntryStatus::Claimed, EntryStatus::Completed, EntryStatus::Failed];
    (0..len)
        .map(|_| match r.random_range(0..4) {
            0 => Op::Put { actor: some_role(r), receiver: some_role(r), task: r.random_range(0..3) },
            1 => Op::Get { actor: some_role(r), id: r.random_range(1..12) },
            2 => Op::Query {
                actor: some_role(r),
                receiver: r.random_bool(0.5).then(|| some_role(r)),
                task: r.random_bool(0.5).then(|| r.random_range(0..3)),
            },
            _ => Op::Update { actor: some_role(r), id: r.random_range(1..12), status: statuses[r.random_range(0..4)] },
        })
        .collect()
}

pub fn payload(actor: AgentRole, n: usize) -> Payload {
    let mut a = AnalysisReport::new("note", actor);
    a.push(SectionKind::Performance, "n", "sequence", n as f64, "", 0);
    Payload::AnalysisReport(a)
}

pub fn apply(pool: &mut SharedPool, op: &Op, n: usize) -> Result<(), PoolError> {
    match op {
        Op::Put { actor, receiver, task } => pool
            .put(
                *actor,
                NewEntry {
                    task_id: format!("t{task}"),
                    step_id: None,
                    instruction: format!("op {n}"),
                    receiver: *receiver,
                    content: payload(*actor, n),
                },
            )
            .map(|_| ()),
        Op::Get { actor, id } => pool.get(*actor, *id).map(|_| ()),
        Op::Query { actor, receiver, task } => pool
            .query(*actor, &Filter { receiver: *receiver, task_id: task.map(|t| format!("t{t}")), ..Default::default() })
            .map(|_| ()),
        Op::Update { actor, id, status } => pool.update_status(*actor, *id, *status),
    }
}

pub fn actor_of(op: &Op) -> AgentRole {
    match op {
        Op::Put { actor, .. } | Op::Get { actor, .. } | Op::Query { actor, .. } | Op::Update { actor, .. } => *actor,
    }
}
