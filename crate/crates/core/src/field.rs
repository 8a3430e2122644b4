//! Simulated field network and its NMS.
//!
//! The field holds a hidden copy of the plant whose parameters are the nominal
//! ones plus seeded perturbations. Telemetry is the GN kernel evaluated on the
//! hidden plant plus Gaussian noise on every measured dB quantity. Noise for
//! record `seq` comes from its own ChaCha stream keyed by (seed, seq), so the
//! telemetry stream does not depend on how calls are interleaved.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agents::AgentRole;
use crate::gn::{self, QotError, QotReport};
use crate::topology::{GridError, NetworkTopology, Service, ServiceState, TopologyError};

pub const DEFAULT_NOISE_SIGMA_DB: f64 = 0.1;

const NOISE_STREAM: u64 = 0x6e6d_735f_6e6f_6973;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("integrity check failed for command on {0}")]
    Integrity(String),
    #[error("unknown service id {0}")]
    UnknownService(String),
    #[error("duplicate service id {0}")]
    DuplicateService(String),
    #[error("slice collision between {0} and {1}")]
    SliceCollision(String, String),
    #[error("off-grid frequency: {0}")]
    OffGrid(GridError),
    #[error("invalid service: {0}")]
    InvalidService(TopologyError),
    #[error(transparent)]
    Qot(QotError),
}

/// How far the hidden plant departs from nominal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Perturbation {
    None,
    Default,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum CommandPayload {
    AddService { service: Service },
    DropService { service_id: String },
    AdjustPower { service_id: String, launch_power_dbm: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CommandKind {
    AddService,
    DropService,
    AdjustPower,
}

impl CommandPayload {
    pub fn kind(&self) -> CommandKind {
        match self {
            CommandPayload::AddService { .. } => CommandKind::AddService,
            CommandPayload::DropService { .. } => CommandKind::DropService,
            CommandPayload::AdjustPower { .. } => CommandKind::AdjustPower,
        }
    }

    pub fn service_id(&self) -> &str {
        match self {
            CommandPayload::AddService { service } => &service.id,
            CommandPayload::DropService { service_id } | CommandPayload::AdjustPower { service_id, .. } => service_id,
        }
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("command payload serializes")
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmsCommand {
    pub kind: CommandKind,
    pub payload: CommandPayload,
    pub issuer: AgentRole,
    /// SHA-256 over the canonical payload bytes, hex.
    pub digest: String,
}

impl NmsCommand {
    pub fn new(payload: CommandPayload, issuer: AgentRole) -> Self {
        let digest = sha256_hex(&payload.canonical_bytes());
        NmsCommand { kind: payload.kind(), payload, issuer, digest }
    }

    pub fn verify(&self) -> bool {
        self.kind == self.payload.kind() && sha256_hex(&self.payload.canonical_bytes()) == self.digest
    }
}

/// Applies one command to a service roster without touching anything else.
pub fn apply_to_roster(
    topology: &NetworkTopology,
    services: &[Service],
    cmd: &NmsCommand,
) -> Result<Vec<Service>, FieldError> {
    if !cmd.verify() {
        return Err(FieldError::Integrity(cmd.payload.service_id().to_string()));
    }
    let mut next = services.to_vec();
    match &cmd.payload {
        CommandPayload::AddService { service } => {
            if next.iter().any(|s| s.id == service.id) {
                return Err(FieldError::DuplicateService(service.id.clone()));
            }
            topology.validate_service(service).map_err(|e| match e {
                TopologyError::Grid(g) => FieldError::OffGrid(g),
                other => FieldError::InvalidService(other),
            })?;
            let mut s = service.clone();
            s.state = ServiceState::Active;
            next.push(s);
            gn::check_overlaps(topology, &next).map_err(|e| match e {
                QotError::ChannelOverlap(a, b) => FieldError::SliceCollision(a, b),
                other => FieldError::Qot(other),
            })?;
        }
        CommandPayload::DropService { service_id } => {
            let pos = next
                .iter()
                .position(|s| &s.id == service_id)
                .ok_or_else(|| FieldError::UnknownService(service_id.clone()))?;
            next.remove(pos);
        }
        CommandPayload::AdjustPower { service_id, launch_power_dbm } => {
            let s = next
                .iter_mut()
                .find(|s| &s.id == service_id)
                .ok_or_else(|| FieldError::UnknownService(service_id.clone()))?;
            s.launch_power_dbm = *launch_power_dbm;
        }
    }
    Ok(next)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelTelemetry {
    pub service_id: String,
    pub center_frequency_thz: f64,
    pub received_power_dbm: f64,
    pub gsnr_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmsTelemetry {
    pub oms_index: usize,
    pub from: u32,
    pub to: u32,
    /// Total power at the OMS output.
    pub total_power_dbm: f64,
    /// Launch setpoint total at the OMS input (not a measurement).
    pub launch_total_dbm: f64,
    pub amp_input_total_dbm: Vec<f64>,
    pub amp_output_total_dbm: Vec<f64>,
    pub channel_output_dbm: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Telemetry {
    pub seq: u64,
    pub channels: Vec<ChannelTelemetry>,
    pub oms: Vec<OmsTelemetry>,
}

impl Telemetry {
    pub fn channel(&self, service_id: &str) -> Option<&ChannelTelemetry> {
        self.channels.iter().find(|c| c.service_id == service_id)
    }

    pub fn gsnr(&self, service_id: &str) -> Option<f64> {
        self.channel(service_id).map(|c| c.gsnr_db)
    }

    fn from_propagation(seq: u64, prop: gn::Propagation) -> Self {
        let channels = prop
            .channels
            .into_iter()
            .map(|c| ChannelTelemetry {
                received_power_dbm: crate::units::mw_to_dbm(c.signal_power_mw),
                service_id: c.service_id,
                center_frequency_thz: c.center_frequency_thz,
                gsnr_db: c.gsnr_db,
            })
            .collect();
        let oms = prop
            .oms
            .into_iter()
            .map(|o| OmsTelemetry {
                total_power_dbm: o.total_output_dbm(),
                oms_index: o.oms_index,
                from: o.from,
                to: o.to,
                launch_total_dbm: o.launch_total_dbm,
                amp_input_total_dbm: o.amp_input_total_dbm,
                amp_output_total_dbm: o.amp_output_total_dbm,
                channel_output_dbm: o.channel_output_dbm,
            })
            .collect();
        Telemetry { seq, channels, oms }
    }

    /// Visits every measured dB quantity in a fixed order.
    fn measured_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        for c in &mut self.channels {
            f(&mut c.received_power_dbm);
            f(&mut c.gsnr_db);
        }
        for o in &mut self.oms {
            f(&mut o.total_power_dbm);
            o.amp_input_total_dbm.iter_mut().for_each(&mut f);
            o.amp_output_total_dbm.iter_mut().for_each(&mut f);
            o.channel_output_dbm.iter_mut().for_each(|(_, v)| f(v));
        }
    }
}

/// A batch of telemetry records together with the roster they were taken on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetrySnapshot {
    pub services: Vec<Service>,
    pub records: Vec<Telemetry>,
}

impl TelemetrySnapshot {
    /// Splits the records into a leading and a trailing half (the leading half
    /// gets the extra record when the count is odd).
    pub fn halves(&self) -> (TelemetrySnapshot, TelemetrySnapshot) {
        let mid = self.records.len().div_ceil(2);
        let part = |r: &[Telemetry]| TelemetrySnapshot { services: self.services.clone(), records: r.to_vec() };
        (part(&self.records[..mid]), part(&self.records[mid..]))
    }

    /// Record-wise mean of every dB quantity; `seq` is the last record's.
    pub fn mean(&self) -> Option<Telemetry> {
        let first = self.records.first()?;
        let mut out = first.clone();
        let n = self.records.len() as f64;
        let mut sums: Vec<f64> = Vec::new();
        for (k, rec) in self.records.iter().enumerate() {
            let mut r = rec.clone();
            let mut i = 0;
            r.measured_mut(|v| {
                if k == 0 {
                    sums.push(*v);
                } else {
                    sums[i] += *v;
                }
                i += 1;
            });
        }
        let mut i = 0;
        out.measured_mut(|v| {
            *v = sums[i] / n;
            i += 1;
        });
        out.seq = self.records.last().map(|r| r.seq).unwrap_or(0);
        Some(out)
    }
}

/// NMS surface used by the agents; a real-NMS adapter implements the same.
pub trait Nms {
    fn collect_performance(&mut self) -> Result<Telemetry, FieldError>;
    fn apply_command(&mut self, cmd: &NmsCommand) -> Result<(), FieldError>;
    fn list_services(&self) -> Vec<Service>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    true_topology: NetworkTopology,
    services: Vec<Service>,
    seed: u64,
    noise_sigma_db: f64,
    seq: u64,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn clipped_normal(rng: &mut ChaCha8Rng, sigma: f64, clip: f64) -> f64 {
    let v: f64 = Normal::new(0.0, sigma).expect("positive sigma").sample(rng);
    v.clamp(-clip, clip)
}

/// Builds the field with default perturbations.
pub fn init_field(topology: &NetworkTopology, seed: u64, noise_sigma_db: f64) -> FieldState {
    init_field_with(topology, seed, noise_sigma_db, Perturbation::Default)
}

pub fn init_field_with(
    topology: &NetworkTopology,
    seed: u64,
    noise_sigma_db: f64,
    perturbation: Perturbation,
) -> FieldState {
    let mut truth = topology.clone();
    if perturbation == Perturbation::Default {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for oms in &mut truth.omses {
            for el in &mut oms.elements {
                el.span.attenuation_db_per_km += clipped_normal(&mut rng, 0.01, 0.03);
                el.span.connector_loss_in_db += rng.random_range(0.0..0.5);
                el.span.connector_loss_out_db += rng.random_range(0.0..0.5);
                el.amp.noise_figure_db += clipped_normal(&mut rng, 0.4, 1.0);
                el.amp.tilt_db += Normal::new(0.0, 0.2).expect("positive sigma").sample(&mut rng);
            }
        }
    }
    FieldState { true_topology: truth, services: Vec::new(), seed, noise_sigma_db, seq: 0 }
}

impl FieldState {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn noise_sigma_db(&self) -> f64 {
        self.noise_sigma_db
    }

    pub fn seq(&self) -> u64 {
        self.seq
    }

    /// Hidden ground truth; only simulation harnesses should look at this.
    pub fn true_topology(&self) -> &NetworkTopology {
        &self.true_topology
    }

    pub fn services(&self) -> &[Service] {
        &self.services
    }

    /// Installs services directly (initial deployment before any workflow).
    pub fn provision(&mut self, services: Vec<Service>) -> Result<(), FieldError> {
        let mut next = self.services.clone();
        for s in services {
            let cmd = NmsCommand::new(CommandPayload::AddService { service: s }, AgentRole::ConfigurationDeployer);
            next = apply_to_roster(&self.true_topology, &next, &cmd)?;
        }
        self.services = next;
        Ok(())
    }

    /// Noise-free QoT of the active services on the hidden plant.
    pub fn noise_free_qot(&self) -> Result<QotReport, FieldError> {
        gn::estimate_path_qot(&self.true_topology, &self.services, &[]).map_err(FieldError::Qot)
    }

    pub fn collect_batch(&mut self, samples: usize) -> Result<TelemetrySnapshot, FieldError> {
        let records = (0..samples.max(1)).map(|_| self.collect_performance()).collect::<Result<Vec<_>, _>>()?;
        Ok(TelemetrySnapshot { services: self.services.clone(), records })
    }

    fn noise_rng(&self, seq: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(splitmix(self.seed ^ NOISE_STREAM) ^ splitmix(seq))
    }
}

impl Nms for FieldState {
    fn collect_performance(&mut self) -> Result<Telemetry, FieldError> {
        let prop = gn::propagate(&self.true_topology, &self.services).map_err(FieldError::Qot)?;
        self.seq += 1;
        let mut t = Telemetry::from_propagation(self.seq, prop);
        if self.noise_sigma_db > 0.0 {
            let normal = Normal::new(0.0, self.noise_sigma_db).expect("positive sigma");
            let mut rng = self.noise_rng(self.seq);
            t.measured_mut(|v| *v += normal.sample(&mut rng));
        }
        Ok(t)
    }

    fn apply_command(&mut self, cmd: &NmsCommand) -> Result<(), FieldError> {
        self.services = apply_to_roster(&self.true_topology, &self.services, cmd)?;
        Ok(())
    }

    fn list_services(&self) -> Vec<Service> {
        self.services.clone()
    }
}

/// Parameter snapshot of a topology keyed by element, used for golden checks.
pub fn parameter_table(topology: &NetworkTopology) -> BTreeMap<(usize, usize), [f64; 5]> {
    let mut out = BTreeMap::new();
    for (i, o) in topology.omses.iter().enumerate() {
        for (j, e) in o.elements.iter().enumerate() {
            out.insert(
                (i, j),
                [
                    e.span.attenuation_db_per_km,
                    e.span.connector_loss_in_db,
                    e.span.connector_loss_out_db,
                    e.amp.noise_figure_db,
                    e.amp.tilt_db,
                ],
            );
        }
    }
    out
}
