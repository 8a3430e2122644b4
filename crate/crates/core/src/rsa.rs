//! Routing and spectrum assignment: Yen's loopless k-shortest paths over
//! kilometres, first-fit slice windows and rehearsal-checked planning.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use bitvec::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{CommandPayload, NmsCommand};
use crate::agents::AgentRole;
use crate::topology::{NetworkTopology, Rate, Service, ServiceState, SiteId, TopologyError};
use crate::twin::{rehearse, RehearsalResult, TwinError, TwinModel, DEFAULT_MIN_MARGIN_DB};

pub const DEFAULT_K: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RsaError {
    #[error("src equals dst")]
    SrcEqualsDst,
    #[error("unknown node {0}")]
    UnknownNode(SiteId),
    #[error("no path {0}->{1}")]
    NoPath(SiteId, SiteId),
    #[error("spectrum exhausted")]
    SpectrumExhausted,
    #[error("no feasible path/window; best rejected margin {:?} dB", .0.as_ref().map(|d| d.min_margin_db))]
    Infeasible(Option<Box<RejectedCandidate>>),
    #[error("invalid occupancy: {0}")]
    Occupancy(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Twin(#[from] TwinError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathCandidate {
    pub path: Vec<SiteId>,
    pub length_km: f64,
    pub hops: usize,
}

impl PathCandidate {
    fn new(topology: &NetworkTopology, path: Vec<SiteId>) -> Self {
        let length_km = topology.path_length_km(&path).expect("path built from OMS adjacency");
        PathCandidate { hops: path.len() - 1, path, length_km }
    }

    /// Total order used everywhere: (length, hops, node list).
    pub fn cmp_key(&self, other: &Self) -> Ordering {
        self.length_km
            .total_cmp(&other.length_km)
            .then(self.hops.cmp(&other.hops))
            .then_with(|| self.path.cmp(&other.path))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Label {
    length: u64,
    hops: usize,
    path: Vec<SiteId>,
}

impl Ord for Label {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed for the max-heap
        (other.length, other.hops, &other.path).cmp(&(self.length, self.hops, &self.path))
    }
}

impl PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Lengths are compared in micro-km integers so Dijkstra's key is exact.
fn micro_km(km: f64) -> u64 {
    (km * 1e6).round() as u64
}

/// Best path under the (length, hops, nodes) order avoiding removed nodes and
/// edges. Prefix extension preserves that order, so label-setting is exact.
fn dijkstra(
    adj: &BTreeMap<SiteId, Vec<(SiteId, u64)>>,
    src: SiteId,
    dst: SiteId,
    banned_nodes: &BTreeSet<SiteId>,
    banned_edges: &BTreeSet<(SiteId, SiteId)>,
) -> Option<Vec<SiteId>> {
    let mut done: BTreeSet<SiteId> = BTreeSet::new();
    let mut heap = BinaryHeap::new();
    heap.push(Label { length: 0, hops: 0, path: vec![src] });
    while let Some(l) = heap.pop() {
        let at = *l.path.last().expect("non-empty");
        if !done.insert(at) {
            continue;
        }
        if at == dst {
            return Some(l.path);
        }
        for &(n, w) in adj.get(&at).into_iter().flatten() {
            if done.contains(&n) || banned_nodes.contains(&n) || banned_edges.contains(&(at, n)) {
                continue;
            }
            let mut path = l.path.clone();
            path.push(n);
            heap.push(Label { length: l.length + w, hops: l.hops + 1, path });
        }
    }
    None
}

fn adjacency(topology: &NetworkTopology) -> BTreeMap<SiteId, Vec<(SiteId, u64)>> {
    topology
        .sites
        .iter()
        .map(|s| (s.id, topology.neighbours(s.id).into_iter().map(|(n, km)| (n, micro_km(km))).collect()))
        .collect()
}

fn check_endpoints(topology: &NetworkTopology, src: SiteId, dst: SiteId) -> Result<(), RsaError> {
    for n in [src, dst] {
        if !topology.has_site(n) {
            return Err(RsaError::UnknownNode(n));
        }
    }
    if src == dst {
        return Err(RsaError::SrcEqualsDst);
    }
    Ok(())
}

/// Up to `k` loopless paths ordered by (length, hops, lexicographic nodes).
pub fn k_shortest_paths(topology: &NetworkTopology, src: SiteId, dst: SiteId, k: usize) -> Result<Vec<PathCandidate>, RsaError> {
    check_endpoints(topology, src, dst)?;
    let adj = adjacency(topology);
    let key = |p: &Vec<SiteId>| -> (u64, usize, Vec<SiteId>) {
        let len = p.windows(2).map(|w| adj[&w[0]].iter().find(|(n, _)| *n == w[1]).expect("edge").1).sum();
        (len, p.len(), p.clone())
    };
    let first = dijkstra(&adj, src, dst, &BTreeSet::new(), &BTreeSet::new()).ok_or(RsaError::NoPath(src, dst))?;
    let mut found: Vec<Vec<SiteId>> = vec![first];
    let mut pending: BTreeSet<(u64, usize, Vec<SiteId>)> = BTreeSet::new();
    while found.len() < k {
        let last = found.last().expect("non-empty").clone();
        for i in 0..last.len() - 1 {
            let root = &last[..=i];
            let mut banned_edges = BTreeSet::new();
            for p in &found {
                if p.len() > i + 1 && &p[..=i] == root {
                    banned_edges.insert((p[i], p[i + 1]));
                    banned_edges.insert((p[i + 1], p[i]));
                }
            }
            let banned_nodes: BTreeSet<SiteId> = root[..i].iter().copied().collect();
            if let Some(spur) = dijkstra(&adj, root[i], dst, &banned_nodes, &banned_edges) {
                let mut total = root[..i].to_vec();
                total.extend(spur);
                if !found.contains(&total) {
                    pending.insert(key(&total));
                }
            }
        }
        match pending.pop_first() {
            Some((_, _, p)) => found.push(p),
            None => break,
        }
    }
    Ok(found.into_iter().map(|p| PathCandidate::new(topology, p)).collect())
}

/// Per-OMS slice bitmaps; occupancy is shared by both directions of an OMS.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccupancyMap {
    slots: Vec<BitVec>,
    slice_count: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OccupancyEntry {
    endpoints: [SiteId; 2],
    /// Half-open `[start, end)` slice ranges.
    ranges: Vec<[u32; 2]>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OccupancyFile {
    #[serde(default)]
    oms: Vec<OccupancyEntry>,
}

impl OccupancyMap {
    pub fn empty(topology: &NetworkTopology) -> Self {
        let n = topology.grid.slice_count;
        OccupancyMap { slots: vec![bitvec![0; n as usize]; topology.omses.len()], slice_count: n }
    }

    /// Occupancy implied by the active services.
    pub fn from_services(topology: &NetworkTopology, services: &[Service]) -> Result<Self, RsaError> {
        let mut m = Self::empty(topology);
        for s in services.iter().filter(|s| s.state == ServiceState::Active) {
            let (lo, hi) = s.slice_range(&topology.grid).map_err(TopologyError::from)?;
            let omses: Vec<usize> = topology.oms_chain(&s.path)?.iter().map(|h| h.index).collect();
            m.occupy(&omses, lo, hi - lo)?;
        }
        Ok(m)
    }

    pub fn slice_count(&self) -> u32 {
        self.slice_count
    }

    pub fn is_taken(&self, oms: usize, slice: u32) -> bool {
        self.slots[oms][slice as usize]
    }

    pub fn set(&mut self, oms: usize, slice: u32, taken: bool) {
        self.slots[oms].set(slice as usize, taken);
    }

    pub fn occupy(&mut self, omses: &[usize], start: u32, width: u32) -> Result<(), RsaError> {
        if start + width > self.slice_count {
            return Err(RsaError::Occupancy(format!("window {start}+{width} out of band")));
        }
        for &o in omses {
            if self.slots[o][start as usize..(start + width) as usize].any() {
                return Err(RsaError::Occupancy(format!("slice collision on OMS {o} at {start}")));
            }
            self.slots[o][start as usize..(start + width) as usize].fill(true);
        }
        Ok(())
    }

    pub fn window_free(&self, omses: &[usize], start: u32, width: u32) -> bool {
        start + width <= self.slice_count
            && omses.iter().all(|&o| self.slots[o][start as usize..(start + width) as usize].not_any())
    }

    /// All free starts on the path, ascending.
    pub fn free_windows(&self, omses: &[usize], width: u32) -> Vec<u32> {
        if width == 0 || width > self.slice_count {
            return vec![];
        }
        (0..=self.slice_count - width).filter(|&s| self.window_free(omses, s, width)).collect()
    }

    pub fn load(text: &str, topology: &NetworkTopology) -> Result<Self, RsaError> {
        let file: OccupancyFile = toml::from_str(text).map_err(|e| RsaError::Occupancy(e.to_string()))?;
        let mut m = Self::empty(topology);
        for e in file.oms {
            let (idx, _) = topology
                .find_oms(e.endpoints[0], e.endpoints[1])
                .ok_or(TopologyError::NoOms(e.endpoints[0], e.endpoints[1]))?;
            for [lo, hi] in e.ranges {
                if hi <= lo {
                    return Err(RsaError::Occupancy(format!("empty range {lo}..{hi}")));
                }
                m.occupy(&[idx], lo, hi - lo)?;
            }
        }
        Ok(m)
    }

    pub fn to_config_string(&self, topology: &NetworkTopology) -> String {
        let oms = topology
            .omses
            .iter()
            .enumerate()
            .filter_map(|(i, o)| {
                let mut ranges = Vec::new();
                let bits = &self.slots[i];
                let mut s = 0;
                while s < bits.len() {
                    if bits[s] {
                        let e = bits[s..].first_zero().map_or(bits.len(), |z| s + z);
                        ranges.push([s as u32, e as u32]);
                        s = e;
                    } else {
                        s += 1;
                    }
                }
                (!ranges.is_empty()).then_some(OccupancyEntry { endpoints: [o.endpoints.0, o.endpoints.1], ranges })
            })
            .collect();
        toml::to_string(&OccupancyFile { oms }).expect("occupancy serialize")
    }
}

pub fn path_omses(topology: &NetworkTopology, path: &[SiteId]) -> Result<Vec<usize>, RsaError> {
    Ok(topology.oms_chain(path)?.iter().map(|h| h.index).collect())
}

/// Lowest start slice whose window is free on every OMS of `path`.
pub fn first_fit(topology: &NetworkTopology, occupancy: &OccupancyMap, path: &[SiteId], width_slices: u32) -> Result<u32, RsaError> {
    let omses = path_omses(topology, path)?;
    if width_slices == 0 || width_slices > occupancy.slice_count {
        return Err(RsaError::SpectrumExhausted);
    }
    (0..=occupancy.slice_count - width_slices)
        .find(|&s| occupancy.window_free(&omses, s, width_slices))
        .ok_or(RsaError::SpectrumExhausted)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceRequest {
    pub id: String,
    pub src: SiteId,
    pub dst: SiteId,
    pub rate: Rate,
    pub launch_power_dbm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedCandidate {
    pub path: PathCandidate,
    pub start_slice: u32,
    pub center_frequency_thz: f64,
    pub min_margin_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServicePlan {
    pub path: PathCandidate,
    pub start_slice: u32,
    pub center_frequency_thz: f64,
    pub service: Service,
    pub rehearsal: RehearsalResult,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanOptions {
    pub k: usize,
    pub min_margin_db: f64,
}

impl Default for PlanOptions {
    fn default() -> Self {
        PlanOptions { k: DEFAULT_K, min_margin_db: DEFAULT_MIN_MARGIN_DB }
    }
}

/// First (path, first-fit window) whose rehearsal on the twin is feasible.
pub fn plan_service(
    occupancy: &OccupancyMap,
    twin: &TwinModel,
    current: &[Service],
    request: &ServiceRequest,
    opts: PlanOptions,
) -> Result<ServicePlan, RsaError> {
    let topology = &twin.topology;
    let width = request.rate.width_slices();
    let mut best: Option<RejectedCandidate> = None;
    let mut any_window = false;
    for cand in k_shortest_paths(topology, request.src, request.dst, opts.k)? {
        let omses = path_omses(topology, &cand.path)?;
        for start in occupancy.free_windows(&omses, width) {
            any_window = true;
            let center = topology.grid.center_of(start, width);
            let mut service = Service::new(request.id.clone(), cand.path.clone(), center, request.rate);
            if let Some(p) = request.launch_power_dbm {
                service.launch_power_dbm = p;
            }
            let cmd = NmsCommand::new(CommandPayload::AddService { service: service.clone() }, AgentRole::FullLifecycleManager);
            let rehearsal = rehearse(twin, &[cmd], current, opts.min_margin_db)?;
            if rehearsal.feasible {
                return Ok(ServicePlan { path: cand, start_slice: start, center_frequency_thz: center, service, rehearsal });
            }
            let m = rehearsal.margins.min_margin_db;
            if best.as_ref().is_none_or(|b| m > b.min_margin_db) {
                best = Some(RejectedCandidate {
                    path: cand.clone(),
                    start_slice: start,
                    center_frequency_thz: center,
                    min_margin_db: m,
                });
            }
        }
    }
    if !any_window {
        return Err(RsaError::SpectrumExhausted);
    }
    Err(RsaError::Infeasible(best.map(Box::new)))
}
