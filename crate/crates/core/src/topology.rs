//! Physical plant: ROADM sites, fiber spans with their post-amplifiers, the
//! flex-grid channel plan and lightpath service records.
//!
//! Topologies are loaded from a versioned TOML document. Every span may
//! override the fiber defaults and carry an explicit amplifier block; a span
//! without an explicit gain gets a transparent amplifier (gain equal to the
//! span loss including both connectors).

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

/// Topology shipped with the crate.
pub const DEFAULT_TOPOLOGY: &str = include_str!("../data/topology.toml");

const GRID_EPS: f64 = 1e-6;

pub type SiteId = u32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unsupported schema_version {0} (expected {SCHEMA_VERSION})")]
    Schema(u32),
    #[error("graph not connected / no links")]
    NoLinks,
    #[error("graph not connected: site {0} unreachable")]
    Disconnected(SiteId),
    #[error("self-loop OMS at site {0}")]
    SelfLoop(SiteId),
    #[error("unknown site reference {0}")]
    UnknownSite(SiteId),
    #[error("duplicate site id {0}")]
    DuplicateSite(SiteId),
    #[error("duplicate OMS {0}-{1}")]
    DuplicateOms(SiteId, SiteId),
    #[error("OMS {0}-{1} has no spans")]
    EmptyOms(SiteId, SiteId),
    #[error("invalid span: {0}")]
    InvalidSpan(String),
    #[error("invalid amplifier: {0}")]
    InvalidAmplifier(String),
    #[error("path too short")]
    PathTooShort,
    #[error("path revisits site {0}")]
    RepeatedSite(SiteId),
    #[error("no OMS {0}-{1}")]
    NoOms(SiteId, SiteId),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("center frequency {center} THz is off-grid for a {width}-slice channel")]
    OffGrid { center: f64, width: u32 },
    #[error("channel at {center} THz ({width} slices) exceeds the band edge")]
    OutOfBand { center: f64, width: u32 },
    #[error("channel width must be at least one slice")]
    ZeroWidth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub id: SiteId,
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiberSpan {
    pub length_km: f64,
    pub attenuation_db_per_km: f64,
    pub dispersion_ps_nm_km: f64,
    pub gamma_per_w_km: f64,
    pub connector_loss_in_db: f64,
    pub connector_loss_out_db: f64,
}

impl FiberSpan {
    /// Total span loss in dB, connectors included.
    pub fn loss_db(&self) -> f64 {
        self.attenuation_db_per_km * self.length_km + self.connector_loss_in_db + self.connector_loss_out_db
    }

    fn validate(&self) -> Result<(), TopologyError> {
        if !(self.length_km > 0.0) {
            return Err(TopologyError::InvalidSpan(format!("span length {} km must be > 0", self.length_km)));
        }
        if !(self.attenuation_db_per_km > 0.0) {
            return Err(TopologyError::InvalidSpan(format!(
                "attenuation {} dB/km must be > 0",
                self.attenuation_db_per_km
            )));
        }
        if !(self.gamma_per_w_km >= 0.0) {
            return Err(TopologyError::InvalidSpan(format!("gamma {} must be >= 0", self.gamma_per_w_km)));
        }
        if !(self.connector_loss_in_db >= 0.0 && self.connector_loss_out_db >= 0.0) {
            return Err(TopologyError::InvalidSpan("connector losses must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Amplifier {
    pub gain_db: f64,
    pub noise_figure_db: f64,
    /// Linear tilt across the band in dB, low edge to high edge.
    pub tilt_db: f64,
}

impl Amplifier {
    fn validate(&self, nf_floor_db: f64) -> Result<(), TopologyError> {
        if !(self.gain_db >= 0.0) {
            return Err(TopologyError::InvalidAmplifier(format!("gain {} dB must be >= 0", self.gain_db)));
        }
        if !(self.noise_figure_db >= nf_floor_db) {
            return Err(TopologyError::InvalidAmplifier(format!(
                "noise figure {} dB below the {} dB floor",
                self.noise_figure_db, nf_floor_db
            )));
        }
        if !self.tilt_db.is_finite() {
            return Err(TopologyError::InvalidAmplifier("tilt must be finite".into()));
        }
        Ok(())
    }
}

/// A fiber span followed by its post-amplifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Element {
    pub span: FiberSpan,
    pub amp: Amplifier,
}

/// Optical multiplex section between two ROADMs.
#[derive(Debug, Clone, PartialEq)]
pub struct Oms {
    pub endpoints: (SiteId, SiteId),
    pub elements: Vec<Element>,
}

impl Oms {
    pub fn connects(&self, a: SiteId, b: SiteId) -> bool {
        self.endpoints == (a, b) || self.endpoints == (b, a)
    }

    pub fn length_km(&self) -> f64 {
        self.elements.iter().map(|e| e.span.length_km).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelGrid {
    pub base_frequency_thz: f64,
    pub slice_width_ghz: f64,
    pub slice_count: u32,
}

impl Default for ChannelGrid {
    fn default() -> Self {
        ChannelGrid { base_frequency_thz: 191.0, slice_width_ghz: 12.5, slice_count: 480 }
    }
}

impl ChannelGrid {
    pub fn slice_width_thz(&self) -> f64 {
        self.slice_width_ghz / 1000.0
    }

    pub fn upper_edge_thz(&self) -> f64 {
        self.base_frequency_thz + self.slice_width_thz() * self.slice_count as f64
    }

    /// Center frequency of a `width`-slice channel starting at slice `start`.
    pub fn center_of(&self, start: u32, width: u32) -> f64 {
        self.base_frequency_thz + (start as f64 + width as f64 / 2.0) * self.slice_width_thz()
    }

    /// First slice of a `width`-slice channel centered at `center_thz`.
    pub fn slice_index_of(&self, center_thz: f64, width: u32) -> Result<u32, GridError> {
        if width == 0 {
            return Err(GridError::ZeroWidth);
        }
        let offset = (center_thz - self.base_frequency_thz) / self.slice_width_thz() - width as f64 / 2.0;
        let start = offset.round();
        if (offset - start).abs() > GRID_EPS {
            return Err(GridError::OffGrid { center: center_thz, width });
        }
        if start < 0.0 || start + width as f64 > self.slice_count as f64 {
            return Err(GridError::OutOfBand { center: center_thz, width });
        }
        Ok(start as u32)
    }

    /// Slice position of a frequency relative to the band middle, in [-0.5, 0.5].
    pub fn band_position(&self, freq_thz: f64) -> f64 {
        (freq_thz - self.base_frequency_thz) / (self.slice_width_thz() * self.slice_count as f64) - 0.5
    }

    pub fn contains(&self, freq_thz: f64) -> bool {
        freq_thz >= self.base_frequency_thz && freq_thz <= self.upper_edge_thz()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTopology {
    pub sites: Vec<Site>,
    pub omses: Vec<Oms>,
    pub grid: ChannelGrid,
    pub nf_floor_db: f64,
}

/// One OMS as seen from a path: `reversed` is true when the path traverses it
/// from its second endpoint to its first.
#[derive(Debug, Clone, Copy)]
pub struct OmsHop<'a> {
    pub index: usize,
    pub oms: &'a Oms,
    pub reversed: bool,
}

impl<'a> OmsHop<'a> {
    pub fn from_site(&self) -> SiteId {
        if self.reversed { self.oms.endpoints.1 } else { self.oms.endpoints.0 }
    }

    pub fn to_site(&self) -> SiteId {
        if self.reversed { self.oms.endpoints.0 } else { self.oms.endpoints.1 }
    }

    /// Element indices in traversal order.
    pub fn element_order(&self) -> Vec<usize> {
        let n = self.oms.elements.len();
        if self.reversed { (0..n).rev().collect() } else { (0..n).collect() }
    }

    pub fn elements(&self) -> impl Iterator<Item = &'a Element> + '_ {
        self.element_order().into_iter().map(move |i| &self.oms.elements[i])
    }
}

impl NetworkTopology {
    pub fn default_topology() -> Self {
        load_topology(DEFAULT_TOPOLOGY).expect("bundled topology is valid")
    }

    pub fn has_site(&self, id: SiteId) -> bool {
        self.sites.iter().any(|s| s.id == id)
    }

    pub fn find_oms(&self, a: SiteId, b: SiteId) -> Option<(usize, bool)> {
        self.omses.iter().position(|o| o.connects(a, b)).map(|i| (i, self.omses[i].endpoints != (a, b)))
    }

    /// Neighbours of `site` with the OMS length in km, sorted by neighbour id.
    pub fn neighbours(&self, site: SiteId) -> Vec<(SiteId, f64)> {
        let mut out: Vec<(SiteId, f64)> = self
            .omses
            .iter()
            .filter_map(|o| {
                if o.endpoints.0 == site {
                    Some((o.endpoints.1, o.length_km()))
                } else if o.endpoints.1 == site {
                    Some((o.endpoints.0, o.length_km()))
                } else {
                    None
                }
            })
            .collect();
        out.sort_by_key(|(n, _)| *n);
        out
    }

    /// OMS hops traversed by `path`, spans oriented source to destination.
    pub fn oms_chain(&self, path: &[SiteId]) -> Result<Vec<OmsHop<'_>>, TopologyError> {
        if path.len() < 2 {
            return Err(TopologyError::PathTooShort);
        }
        let mut seen = BTreeSet::new();
        for &s in path {
            if !self.has_site(s) {
                return Err(TopologyError::UnknownSite(s));
            }
            if !seen.insert(s) {
                return Err(TopologyError::RepeatedSite(s));
            }
        }
        path.windows(2)
            .map(|w| {
                let (index, reversed) = self.find_oms(w[0], w[1]).ok_or(TopologyError::NoOms(w[0], w[1]))?;
                Ok(OmsHop { index, oms: &self.omses[index], reversed })
            })
            .collect()
    }

    pub fn path_length_km(&self, path: &[SiteId]) -> Result<f64, TopologyError> {
        Ok(self.oms_chain(path)?.iter().map(|h| h.oms.length_km()).sum())
    }

    pub fn validate_service(&self, service: &Service) -> Result<(), TopologyError> {
        self.oms_chain(&service.path)?;
        self.grid.slice_index_of(service.center_frequency_thz, service.width_slices)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), TopologyError> {
        let mut ids = BTreeSet::new();
        for s in &self.sites {
            if !ids.insert(s.id) {
                return Err(TopologyError::DuplicateSite(s.id));
            }
        }
        if self.omses.is_empty() {
            return Err(TopologyError::NoLinks);
        }
        let mut pairs = BTreeSet::new();
        for o in &self.omses {
            let (a, b) = o.endpoints;
            if a == b {
                return Err(TopologyError::SelfLoop(a));
            }
            for s in [a, b] {
                if !ids.contains(&s) {
                    return Err(TopologyError::UnknownSite(s));
                }
            }
            if !pairs.insert((a.min(b), a.max(b))) {
                return Err(TopologyError::DuplicateOms(a, b));
            }
            if o.elements.is_empty() {
                return Err(TopologyError::EmptyOms(a, b));
            }
            for e in &o.elements {
                e.span.validate()?;
                e.amp.validate(self.nf_floor_db)?;
            }
        }
        if self.grid.slice_count == 0 || !(self.grid.slice_width_ghz > 0.0) {
            return Err(TopologyError::Parse("grid needs a positive slice width and count".into()));
        }
        // connectivity
        let start = self.sites[0].id;
        let mut reached = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(s) = queue.pop_front() {
            for (n, _) in self.neighbours(s) {
                if reached.insert(n) {
                    queue.push_back(n);
                }
            }
        }
        if let Some(missing) = ids.iter().find(|id| !reached.contains(id)) {
            return Err(TopologyError::Disconnected(*missing));
        }
        Ok(())
    }

    /// Fully explicit configuration text; reparses to an equal topology.
    pub fn to_config_string(&self) -> String {
        let cfg = ConfigFile {
            schema_version: SCHEMA_VERSION,
            grid: Some(self.grid),
            limits: Some(Limits { noise_figure_floor_db: self.nf_floor_db }),
            defaults: None,
            sites: self.sites.clone(),
            omses: self
                .omses
                .iter()
                .map(|o| OmsConfig {
                    endpoints: [o.endpoints.0, o.endpoints.1],
                    spans: o
                        .elements
                        .iter()
                        .map(|e| SpanConfig {
                            length_km: e.span.length_km,
                            attenuation_db_per_km: Some(e.span.attenuation_db_per_km),
                            dispersion_ps_nm_km: Some(e.span.dispersion_ps_nm_km),
                            gamma_per_w_km: Some(e.span.gamma_per_w_km),
                            connector_loss_in_db: Some(e.span.connector_loss_in_db),
                            connector_loss_out_db: Some(e.span.connector_loss_out_db),
                            amplifier: Some(AmpConfig {
                                gain_db: Some(e.amp.gain_db),
                                noise_figure_db: Some(e.amp.noise_figure_db),
                                tilt_db: Some(e.amp.tilt_db),
                            }),
                        })
                        .collect(),
                })
                .collect(),
        };
        toml::to_string(&cfg).expect("topology config serializes")
    }
}

// ---- configuration document ----

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grid: Option<ChannelGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    limits: Option<Limits>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    defaults: Option<Defaults>,
    #[serde(default)]
    sites: Vec<Site>,
    #[serde(default)]
    omses: Vec<OmsConfig>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Limits {
    noise_figure_floor_db: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Defaults {
    #[serde(default)]
    fiber: Option<FiberDefaults>,
    #[serde(default)]
    amplifier: Option<AmpConfig>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FiberDefaults {
    attenuation_db_per_km: f64,
    dispersion_ps_nm_km: f64,
    gamma_per_w_km: f64,
    #[serde(default)]
    connector_loss_in_db: f64,
    #[serde(default)]
    connector_loss_out_db: f64,
}

impl Default for FiberDefaults {
    fn default() -> Self {
        FiberDefaults {
            attenuation_db_per_km: 0.20,
            dispersion_ps_nm_km: 16.7,
            gamma_per_w_km: 1.3,
            connector_loss_in_db: 0.0,
            connector_loss_out_db: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AmpConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gain_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    noise_figure_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tilt_db: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OmsConfig {
    endpoints: [SiteId; 2],
    spans: Vec<SpanConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpanConfig {
    length_km: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    attenuation_db_per_km: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dispersion_ps_nm_km: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gamma_per_w_km: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    connector_loss_in_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    connector_loss_out_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    amplifier: Option<AmpConfig>,
}

/// Parses and validates a topology configuration document.
pub fn load_topology(config_text: &str) -> Result<NetworkTopology, TopologyError> {
    let cfg: ConfigFile = toml::from_str(config_text).map_err(|e| TopologyError::Parse(e.to_string()))?;
    if cfg.schema_version != SCHEMA_VERSION {
        return Err(TopologyError::Schema(cfg.schema_version));
    }
    let defaults = cfg.defaults.unwrap_or_default();
    let fiber = defaults.fiber.unwrap_or_default();
    let amp_default = defaults.amplifier.unwrap_or_default();
    let nf_floor_db = cfg.limits.map(|l| l.noise_figure_floor_db).unwrap_or(3.0);

    let omses = cfg
        .omses
        .iter()
        .map(|o| {
            let elements = o
                .spans
                .iter()
                .map(|s| {
                    let span = FiberSpan {
                        length_km: s.length_km,
                        attenuation_db_per_km: s.attenuation_db_per_km.unwrap_or(fiber.attenuation_db_per_km),
                        dispersion_ps_nm_km: s.dispersion_ps_nm_km.unwrap_or(fiber.dispersion_ps_nm_km),
                        gamma_per_w_km: s.gamma_per_w_km.unwrap_or(fiber.gamma_per_w_km),
                        connector_loss_in_db: s.connector_loss_in_db.unwrap_or(fiber.connector_loss_in_db),
                        connector_loss_out_db: s.connector_loss_out_db.unwrap_or(fiber.connector_loss_out_db),
                    };
                    let a = s.amplifier.unwrap_or_default();
                    let amp = Amplifier {
                        gain_db: a.gain_db.or(amp_default.gain_db).unwrap_or_else(|| span.loss_db()),
                        noise_figure_db: a.noise_figure_db.or(amp_default.noise_figure_db).unwrap_or(5.0),
                        tilt_db: a.tilt_db.or(amp_default.tilt_db).unwrap_or(0.0),
                    };
                    Element { span, amp }
                })
                .collect();
            Oms { endpoints: (o.endpoints[0], o.endpoints[1]), elements }
        })
        .collect();

    let topology = NetworkTopology { sites: cfg.sites, omses, grid: cfg.grid.unwrap_or_default(), nf_floor_db };
    if topology.sites.is_empty() {
        return Err(TopologyError::NoLinks);
    }
    topology.validate()?;
    Ok(topology)
}

// ---- services ----

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum Rate {
    G100,
    G400,
    G800,
}

impl Rate {
    pub fn gbps(self) -> u32 {
        match self {
            Rate::G100 => 100,
            Rate::G400 => 400,
            Rate::G800 => 800,
        }
    }

    pub fn format(self) -> &'static str {
        match self {
            Rate::G100 => "DP-QPSK",
            Rate::G400 => "DP-16QAM",
            Rate::G800 => "DP-PCS-64QAM",
        }
    }

    pub fn symbol_rate_gbd(self) -> f64 {
        match self {
            Rate::G100 => 32.0,
            Rate::G400 => 64.0,
            Rate::G800 => 96.0,
        }
    }

    /// Slices occupied by the media channel.
    pub fn width_slices(self) -> u32 {
        8
    }
}

impl TryFrom<u32> for Rate {
    type Error = String;
    fn try_from(v: u32) -> Result<Self, Self::Error> {
        match v {
            100 => Ok(Rate::G100),
            400 => Ok(Rate::G400),
            800 => Ok(Rate::G800),
            other => Err(format!("unknown rate {other}G")),
        }
    }
}

impl From<Rate> for u32 {
    fn from(r: Rate) -> u32 {
        r.gbps()
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}G", self.gbps())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ServiceState {
    Planned,
    Active,
    Dropped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Service {
    pub id: String,
    pub path: Vec<SiteId>,
    pub center_frequency_thz: f64,
    pub width_slices: u32,
    pub rate: Rate,
    pub format: String,
    pub symbol_rate_gbd: f64,
    pub launch_power_dbm: f64,
    #[serde(default)]
    pub protected: bool,
    pub state: ServiceState,
}

pub const DEFAULT_LAUNCH_POWER_DBM: f64 = 0.0;

impl Service {
    /// Active service with the rate table's format, symbol rate and width.
    pub fn new(id: impl Into<String>, path: Vec<SiteId>, center_frequency_thz: f64, rate: Rate) -> Self {
        Service {
            id: id.into(),
            path,
            center_frequency_thz,
            width_slices: rate.width_slices(),
            rate,
            format: rate.format().to_string(),
            symbol_rate_gbd: rate.symbol_rate_gbd(),
            launch_power_dbm: DEFAULT_LAUNCH_POWER_DBM,
            protected: false,
            state: ServiceState::Active,
        }
    }

    /// Half-open slice range `[start, end)`.
    pub fn slice_range(&self, grid: &ChannelGrid) -> Result<(u32, u32), GridError> {
        let s = grid.slice_index_of(self.center_frequency_thz, self.width_slices)?;
        Ok((s, s + self.width_slices))
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct ServicesFile {
    #[serde(default)]
    services: Vec<Service>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ServiceEntry {
    id: String,
    path: Vec<SiteId>,
    center_frequency_thz: f64,
    rate: Rate,
    #[serde(default)]
    launch_power_dbm: Option<f64>,
    #[serde(default)]
    protected: bool,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ServiceEntriesFile {
    #[serde(default)]
    services: Vec<ServiceEntry>,
}

/// Parses a services document (`[[services]]` with id, path, center, rate and
/// optional launch power / protection) and validates it against `topology`.
pub fn load_services(text: &str, topology: &NetworkTopology) -> Result<Vec<Service>, TopologyError> {
    let file: ServiceEntriesFile = toml::from_str(text).map_err(|e| TopologyError::Parse(e.to_string()))?;
    let services: Vec<Service> = file
        .services
        .into_iter()
        .map(|e| {
            let mut s = Service::new(e.id, e.path, e.center_frequency_thz, e.rate);
            if let Some(p) = e.launch_power_dbm {
                s.launch_power_dbm = p;
            }
            s.protected = e.protected;
            s
        })
        .collect();
    for s in &services {
        topology.validate_service(s)?;
    }
    Ok(services)
}

pub fn services_to_string(services: &[Service]) -> String {
    toml::to_string(&ServicesFile { services: services.to_vec() }).expect("services serialize")
}

/// Site labels keyed by id.
pub fn site_labels(topology: &NetworkTopology) -> BTreeMap<SiteId, String> {
    topology.sites.iter().map(|s| (s.id, s.label.clone())).collect()
}
