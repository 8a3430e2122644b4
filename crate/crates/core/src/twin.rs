//! Digital twin: an editable copy of the plant, staged calibration against
//! field telemetry, QoT estimation and what-if rehearsal.
//!
//! Calibration runs four stages by default, each a sequence of bounded scalar
//! golden-section fits, one parameter of one element at a time:
//!
//! 1. span loss from the per-amplifier total power monitors,
//! 2. amplifier gain (total powers) and tilt (per-channel OMS output powers),
//! 3. amplifier noise figure from GSNR residuals,
//! 4. one global nonlinear coefficient from the remaining GSNR residuals.
//!
//! A coordinate update is kept only if it lowers the stage objective, and a
//! stage whose own max-abs residual got worse is rolled back, so residuals
//! never increase from one stage to the next.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{apply_to_roster, FieldError, NmsCommand, Telemetry, TelemetrySnapshot};
use crate::gn::{self, MarginReport, Propagation, QotError, QotReport};
use crate::topology::{load_topology, NetworkTopology, Service, TopologyError};

pub const DEFAULT_MIN_MARGIN_DB: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TwinError {
    #[error("empty telemetry")]
    EmptyTelemetry,
    #[error("channel mismatch: {0}")]
    ChannelMismatch(String),
    #[error(transparent)]
    Command(#[from] FieldError),
    #[error(transparent)]
    Qot(#[from] QotError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("twin state parse error: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterBounds {
    pub attenuation_db_per_km: (f64, f64),
    pub noise_figure_db: (f64, f64),
    pub connector_loss_db: (f64, f64),
    pub gamma_per_w_km: (f64, f64),
    pub gain_db: (f64, f64),
    pub tilt_db: (f64, f64),
}

impl Default for ParameterBounds {
    fn default() -> Self {
        ParameterBounds {
            attenuation_db_per_km: (0.15, 0.25),
            noise_figure_db: (3.0, 8.0),
            connector_loss_db: (0.0, 2.0),
            gamma_per_w_km: (0.8, 1.8),
            gain_db: (0.0, 40.0),
            tilt_db: (-3.0, 3.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state")]
pub enum CalibrationState {
    Uncalibrated,
    Calibrated { stages: Vec<String> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwinModel {
    pub topology: NetworkTopology,
    pub calibration: CalibrationState,
    pub bounds: ParameterBounds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    SpanLoss,
    GainTilt,
    NoiseFigure,
    Gamma,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::SpanLoss => "span_loss",
            Stage::GainTilt => "gain_tilt",
            Stage::NoiseFigure => "noise_figure",
            Stage::Gamma => "gamma",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationConfig {
    pub stages: Vec<Stage>,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub stop_below_db: f64,
    /// Coordinate sweeps per stage.
    pub max_sweeps: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            stages: vec![Stage::SpanLoss, Stage::GainTilt, Stage::NoiseFigure, Stage::Gamma],
            tolerance: 1e-4,
            max_iterations: 100,
            stop_below_db: 0.05,
            max_sweeps: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub name: String,
    pub parameters_touched: Vec<String>,
    pub residual_before_db: f64,
    pub residual_after_db: f64,
    pub iterations: usize,
    pub skipped: bool,
    pub rolled_back: bool,
    /// Every fitted element ended on a bound.
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub stages: Vec<StageReport>,
    pub initial_max_gsnr_error_db: f64,
    pub final_max_gsnr_error_db: f64,
    pub channel_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RehearsalResult {
    pub baseline: QotReport,
    pub predicted: QotReport,
    pub margins: MarginReport,
    pub min_margin_required_db: f64,
    pub feasible: bool,
    pub command_digests: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelError {
    pub service_id: String,
    pub center_frequency_thz: f64,
    pub predicted_gsnr_db: f64,
    pub observed_gsnr_db: f64,
    pub abs_error_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionError {
    pub channels: Vec<ChannelError>,
    pub max_abs_error_db: f64,
}

/// Golden-section minimisation of `f` on `[lo, hi]`.
/// Returns (argmin, min, iterations).
pub fn golden_section(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, tol: f64, max_iter: usize) -> (f64, f64, usize) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut iters = 0;
    while (b - a).abs() > tol && iters < max_iter {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
        iters += 1;
    }
    // the bracket ends are candidates too, so bound-pinned optima are reachable
    let mut best = if fc < fd { (c, fc) } else { (d, fd) };
    for x in [lo, hi] {
        if (x - best.0).abs() <= 2.0 * tol {
            let fx = f(x);
            if fx < best.1 {
                best = (x, fx);
            }
        }
    }
    (best.0, best.1, iters)
}

/// Element handle: (oms index, element index).
type ElementKey = (usize, usize);

#[derive(Debug, Clone, Copy)]
enum Param {
    Attenuation,
    ConnectorOut,
    Gain,
    Tilt,
    NoiseFigure,
}

impl Param {
    fn label(self) -> &'static str {
        match self {
            Param::Attenuation => "attenuation",
            Param::ConnectorOut => "connector_loss_out",
            Param::Gain => "gain",
            Param::Tilt => "tilt",
            Param::NoiseFigure => "noise_figure",
        }
    }
}

impl TwinModel {
    pub fn new(topology: NetworkTopology) -> Self {
        TwinModel { topology, calibration: CalibrationState::Uncalibrated, bounds: ParameterBounds::default() }
    }

    fn get(&self, key: ElementKey, p: Param) -> f64 {
        let el = &self.topology.omses[key.0].elements[key.1];
        match p {
            Param::Attenuation => el.span.attenuation_db_per_km,
            Param::ConnectorOut => el.span.connector_loss_out_db,
            Param::Gain => el.amp.gain_db,
            Param::Tilt => el.amp.tilt_db,
            Param::NoiseFigure => el.amp.noise_figure_db,
        }
    }

    fn set(&mut self, key: ElementKey, p: Param, v: f64) {
        let el = &mut self.topology.omses[key.0].elements[key.1];
        match p {
            Param::Attenuation => el.span.attenuation_db_per_km = v,
            Param::ConnectorOut => el.span.connector_loss_out_db = v,
            Param::Gain => el.amp.gain_db = v,
            Param::Tilt => el.amp.tilt_db = v,
            Param::NoiseFigure => el.amp.noise_figure_db = v,
        }
    }

    fn bounds_of(&self, p: Param) -> (f64, f64) {
        match p {
            Param::Attenuation => self.bounds.attenuation_db_per_km,
            Param::ConnectorOut => self.bounds.connector_loss_db,
            Param::Gain => self.bounds.gain_db,
            Param::Tilt => self.bounds.tilt_db,
            Param::NoiseFigure => self.bounds.noise_figure_db,
        }
    }

    fn param_name(&self, key: ElementKey, p: Param) -> String {
        let (a, b) = self.topology.omses[key.0].endpoints;
        format!("{a}-{b}#{}.{}", key.1, p.label())
    }

    fn set_gamma(&mut self, g: f64) {
        for o in &mut self.topology.omses {
            for e in &mut o.elements {
                e.span.gamma_per_w_km = g;
            }
        }
    }

    /// Writes the twin as topology configuration plus a calibration block.
    pub fn export(&self) -> String {
        #[derive(Serialize)]
        struct Block<'a> {
            calibration: &'a CalibrationState,
            bounds: &'a ParameterBounds,
        }
        let mut text = self.topology.to_config_string();
        text.push('\n');
        text.push_str(&toml::to_string(&Block { calibration: &self.calibration, bounds: &self.bounds }).expect("twin block"));
        text
    }

    pub fn import(text: &str) -> Result<Self, TwinError> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| TwinError::Parse(e.to_string()))?;
        let calibration = match table.remove("calibration") {
            Some(v) => v.try_into().map_err(|e: toml::de::Error| TwinError::Parse(e.to_string()))?,
            None => CalibrationState::Uncalibrated,
        };
        let bounds = match table.remove("bounds") {
            Some(v) => v.try_into().map_err(|e: toml::de::Error| TwinError::Parse(e.to_string()))?,
            None => ParameterBounds::default(),
        };
        let topology = load_topology(&toml::to_string(&table).map_err(|e| TwinError::Parse(e.to_string()))?)?;
        Ok(TwinModel { topology, calibration, bounds })
    }
}

/// Averaged telemetry and the element layout needed by every stage.
struct Fit<'a> {
    services: &'a [Service],
    target: Telemetry,
    /// For each OMS record: traversal-ordered element keys.
    oms_order: Vec<Vec<ElementKey>>,
    elements: Vec<ElementKey>,
    /// Channel indices (into target.channels) whose path uses each element.
    users: BTreeMap<ElementKey, Vec<usize>>,
}

impl<'a> Fit<'a> {
    fn new(topology: &NetworkTopology, services: &'a [Service], target: Telemetry) -> Result<Self, TwinError> {
        let mut oms_order = Vec::new();
        let mut elements = Vec::new();
        for o in &target.oms {
            let oms = &topology.omses[o.oms_index];
            let n = oms.elements.len();
            let order: Vec<ElementKey> = if oms.endpoints.0 == o.from {
                (0..n).map(|j| (o.oms_index, j)).collect()
            } else {
                (0..n).rev().map(|j| (o.oms_index, j)).collect()
            };
            for k in &order {
                if !elements.contains(k) {
                    elements.push(*k);
                }
            }
            oms_order.push(order);
        }
        elements.sort();
        let mut users: BTreeMap<ElementKey, Vec<usize>> = BTreeMap::new();
        for (ci, c) in target.channels.iter().enumerate() {
            let svc = services
                .iter()
                .find(|s| s.id == c.service_id)
                .ok_or_else(|| TwinError::ChannelMismatch(c.service_id.clone()))?;
            for hop in topology.oms_chain(&svc.path)? {
                for j in 0..hop.oms.elements.len() {
                    users.entry((hop.index, j)).or_default().push(ci);
                }
            }
        }
        Ok(Fit { services, target, oms_order, elements, users })
    }

    fn propagate(&self, twin: &TwinModel) -> Propagation {
        gn::propagate(&twin.topology, self.services).expect("roster validated before calibration")
    }

    fn gsnr_residuals(&self, prop: &Propagation) -> Vec<f64> {
        self.target
            .channels
            .iter()
            .map(|c| {
                let m = prop.channels.iter().find(|p| p.service_id == c.service_id).expect("same roster");
                m.gsnr_db - c.gsnr_db
            })
            .collect()
    }

    fn max_gsnr_error(&self, twin: &TwinModel) -> f64 {
        max_abs(&self.gsnr_residuals(&self.propagate(twin)))
    }

    fn model_oms<'p>(&self, prop: &'p Propagation, rec: usize) -> &'p gn::OmsPowers {
        let o = &self.target.oms[rec];
        prop.oms
            .iter()
            .find(|m| m.oms_index == o.oms_index && m.from == o.from)
            .expect("same roster gives same OMS records")
    }

    /// (element, measured loss dB) pairs from the power monitors.
    fn loss_measurements(&self) -> Vec<(ElementKey, f64)> {
        let mut out = Vec::new();
        for (r, o) in self.target.oms.iter().enumerate() {
            for (p, key) in self.oms_order[r].iter().enumerate() {
                let input = if p == 0 { o.launch_total_dbm } else { o.amp_output_total_dbm[p - 1] };
                out.push((*key, input - o.amp_input_total_dbm[p]));
            }
        }
        out
    }

    /// Residuals (model - measured) of total amplifier gains, optionally only
    /// for one element.
    fn gain_residuals(&self, prop: &Propagation, only: Option<ElementKey>) -> Vec<f64> {
        let mut out = Vec::new();
        for (r, o) in self.target.oms.iter().enumerate() {
            let m = self.model_oms(prop, r);
            for (p, key) in self.oms_order[r].iter().enumerate() {
                if only.is_some_and(|k| k != *key) {
                    continue;
                }
                let meas = o.amp_output_total_dbm[p] - o.amp_input_total_dbm[p];
                let model = m.amp_output_total_dbm[p] - m.amp_input_total_dbm[p];
                out.push(model - meas);
            }
        }
        out
    }

    /// Residuals of per-channel OMS output power, optionally restricted to the
    /// OMS records that traverse `only`.
    fn channel_power_residuals(&self, prop: &Propagation, only: Option<ElementKey>) -> Vec<f64> {
        let mut out = Vec::new();
        for (r, o) in self.target.oms.iter().enumerate() {
            if only.is_some_and(|k| !self.oms_order[r].contains(&k)) {
                continue;
            }
            let m = self.model_oms(prop, r);
            for ((_, meas), (_, model)) in o.channel_output_dbm.iter().zip(&m.channel_output_dbm) {
                out.push(model - meas);
            }
        }
        out
    }
}

fn sse(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

fn max_abs(r: &[f64]) -> f64 {
    r.iter().fold(0.0, |m, x| m.max(x.abs()))
}

struct StageRun {
    touched: Vec<String>,
    iterations: usize,
    pinned: usize,
    fitted: usize,
}

impl StageRun {
    fn new() -> Self {
        StageRun { touched: Vec::new(), iterations: 0, pinned: 0, fitted: 0 }
    }
}

/// One bounded scalar fit of `param` on `key`, kept only if it improves.
fn fit_scalar(
    twin: &mut TwinModel,
    key: ElementKey,
    param: Param,
    cfg: &CalibrationConfig,
    run: &mut StageRun,
    objective: &dyn Fn(&TwinModel) -> f64,
) -> bool {
    let current = twin.get(key, param);
    let base = objective(twin);
    let (lo, hi) = twin.bounds_of(param);
    let mut scratch = twin.clone();
    let (x, fx, iters) = golden_section(
        |v| {
            scratch.set(key, param, v);
            objective(&scratch)
        },
        lo,
        hi,
        cfg.tolerance,
        cfg.max_iterations,
    );
    run.iterations += iters;
    run.fitted += 1;
    let pinned = (x - lo).abs() <= 2.0 * cfg.tolerance || (hi - x).abs() <= 2.0 * cfg.tolerance;
    if pinned {
        run.pinned += 1;
    }
    if fx < base && x != current {
        twin.set(key, param, x);
        let name = twin.param_name(key, param);
        if !run.touched.contains(&name) {
            run.touched.push(name);
        }
        true
    } else {
        false
    }
}

fn run_span_loss(twin: &mut TwinModel, fit: &Fit, cfg: &CalibrationConfig, run: &mut StageRun) {
    let meas = fit.loss_measurements();
    for &key in &fit.elements {
        let mine: Vec<f64> = meas.iter().filter(|(k, _)| *k == key).map(|(_, v)| *v).collect();
        let obj = |t: &TwinModel| {
            let model = t.topology.omses[key.0].elements[key.1].span.loss_db();
            mine.iter().map(|m| (model - m).powi(2)).sum::<f64>()
        };
        fit_scalar(twin, key, Param::Attenuation, cfg, run, &obj);
        let a = twin.get(key, Param::Attenuation);
        let (lo, hi) = twin.bounds.attenuation_db_per_km;
        if (a - lo).abs() <= 2.0 * cfg.tolerance || (hi - a).abs() <= 2.0 * cfg.tolerance {
            fit_scalar(twin, key, Param::ConnectorOut, cfg, run, &obj);
        }
    }
}

fn span_loss_residual(twin: &TwinModel, fit: &Fit) -> f64 {
    let r: Vec<f64> = fit
        .loss_measurements()
        .iter()
        .map(|(k, m)| twin.topology.omses[k.0].elements[k.1].span.loss_db() - m)
        .collect();
    max_abs(&r)
}

fn gain_tilt_residual(twin: &TwinModel, fit: &Fit) -> f64 {
    let prop = fit.propagate(twin);
    max_abs(&fit.gain_residuals(&prop, None)).max(max_abs(&fit.channel_power_residuals(&prop, None)))
}

fn run_gain_tilt(twin: &mut TwinModel, fit: &Fit, cfg: &CalibrationConfig, run: &mut StageRun) {
    let total = |t: &TwinModel| {
        let p = fit.propagate(t);
        sse(&fit.gain_residuals(&p, None)) + sse(&fit.channel_power_residuals(&p, None))
    };
    let mut last = total(twin);
    for _ in 0..cfg.max_sweeps {
        for &key in &fit.elements {
            let gain_obj = |t: &TwinModel| sse(&fit.gain_residuals(&fit.propagate(t), Some(key)));
            fit_scalar(twin, key, Param::Gain, cfg, run, &gain_obj);
            let tilt_obj = |t: &TwinModel| {
                let p = fit.propagate(t);
                sse(&fit.channel_power_residuals(&p, Some(key))) + sse(&fit.gain_residuals(&p, Some(key)))
            };
            fit_scalar(twin, key, Param::Tilt, cfg, run, &tilt_obj);
        }
        let now = total(twin);
        if last - now < 1e-9 {
            break;
        }
        last = now;
    }
}

fn run_noise_figure(twin: &mut TwinModel, fit: &Fit, cfg: &CalibrationConfig, run: &mut StageRun) {
    // channels whose modelled noise is ASE-dominated carry the NF information
    let prop = fit.propagate(twin);
    let low_nli: Vec<bool> = fit
        .target
        .channels
        .iter()
        .map(|c| {
            let m = prop.channels.iter().find(|p| p.service_id == c.service_id).expect("same roster");
            m.nli_power_mw < m.ase_power_mw
        })
        .collect();
    let mut last = sse(&fit.gsnr_residuals(&prop));
    for _ in 0..cfg.max_sweeps {
        for &key in &fit.elements {
            let users = fit.users.get(&key).cloned().unwrap_or_default();
            let mut chosen: Vec<usize> = users.iter().copied().filter(|&i| low_nli[i]).collect();
            if chosen.is_empty() {
                chosen = users;
            }
            if chosen.is_empty() {
                continue;
            }
            let obj = |t: &TwinModel| {
                let r = fit.gsnr_residuals(&fit.propagate(t));
                chosen.iter().map(|&i| r[i] * r[i]).sum::<f64>()
            };
            fit_scalar(twin, key, Param::NoiseFigure, cfg, run, &obj);
        }
        let now = sse(&fit.gsnr_residuals(&fit.propagate(twin)));
        if last - now < 1e-9 {
            break;
        }
        last = now;
    }
}

fn run_gamma(twin: &mut TwinModel, fit: &Fit, cfg: &CalibrationConfig, run: &mut StageRun) {
    let obj = |t: &TwinModel| sse(&fit.gsnr_residuals(&fit.propagate(t)));
    let base = obj(twin);
    let (lo, hi) = twin.bounds.gamma_per_w_km;
    let mut scratch = twin.clone();
    let (g, fg, iters) = golden_section(
        |v| {
            scratch.set_gamma(v);
            obj(&scratch)
        },
        lo,
        hi,
        cfg.tolerance,
        cfg.max_iterations,
    );
    run.iterations += iters;
    run.fitted += 1;
    if (g - lo).abs() <= 2.0 * cfg.tolerance || (hi - g).abs() <= 2.0 * cfg.tolerance {
        run.pinned += 1;
    }
    if fg < base {
        twin.set_gamma(g);
        run.touched.push("gamma".into());
    }
}

fn stage_residual(stage: Stage, twin: &TwinModel, fit: &Fit) -> f64 {
    match stage {
        Stage::SpanLoss => span_loss_residual(twin, fit),
        Stage::GainTilt => gain_tilt_residual(twin, fit),
        Stage::NoiseFigure | Stage::Gamma => fit.max_gsnr_error(twin),
    }
}

/// Calibrates `twin` against a telemetry batch with the default stage plan.
pub fn calibrate(twin: &mut TwinModel, snapshot: &TelemetrySnapshot) -> Result<CalibrationReport, TwinError> {
    calibrate_with(twin, snapshot, &CalibrationConfig::default())
}

pub fn calibrate_with(
    twin: &mut TwinModel,
    snapshot: &TelemetrySnapshot,
    cfg: &CalibrationConfig,
) -> Result<CalibrationReport, TwinError> {
    let target = snapshot.mean().ok_or(TwinError::EmptyTelemetry)?;
    if target.channels.is_empty() {
        return Err(TwinError::EmptyTelemetry);
    }
    gn::check_overlaps(&twin.topology, &snapshot.services)?;
    let fit = Fit::new(&twin.topology, &snapshot.services, target)?;
    let initial = fit.max_gsnr_error(twin);
    let mut stages = Vec::new();
    let mut done = Vec::new();

    for &stage in &cfg.stages {
        let current = fit.max_gsnr_error(twin);
        let before = stage_residual(stage, twin, &fit);
        if current < cfg.stop_below_db {
            stages.push(StageReport {
                name: stage.name().into(),
                parameters_touched: vec![],
                residual_before_db: before,
                residual_after_db: before,
                iterations: 0,
                skipped: true,
                rolled_back: false,
                diverged: false,
            });
            continue;
        }
        let saved = twin.clone();
        let mut run = StageRun::new();
        match stage {
            Stage::SpanLoss => run_span_loss(twin, &fit, cfg, &mut run),
            Stage::GainTilt => run_gain_tilt(twin, &fit, cfg, &mut run),
            Stage::NoiseFigure => run_noise_figure(twin, &fit, cfg, &mut run),
            Stage::Gamma => run_gamma(twin, &fit, cfg, &mut run),
        }
        let mut after = stage_residual(stage, twin, &fit);
        let rolled_back = after > before;
        if rolled_back {
            *twin = saved;
            after = before;
            run.touched.clear();
        }
        done.push(stage.name().to_string());
        stages.push(StageReport {
            name: stage.name().into(),
            parameters_touched: run.touched,
            residual_before_db: before,
            residual_after_db: after,
            iterations: run.iterations,
            skipped: false,
            rolled_back,
            diverged: run.fitted > 0 && run.pinned == run.fitted,
        });
    }
    twin.calibration = CalibrationState::Calibrated { stages: done };
    Ok(CalibrationReport {
        stages,
        initial_max_gsnr_error_db: initial,
        final_max_gsnr_error_db: fit.max_gsnr_error(twin),
        channel_count: fit.target.channels.len(),
    })
}

/// QoT of `services` on the twin's parameters.
pub fn estimate_qot(twin: &TwinModel, services: &[Service]) -> Result<QotReport, TwinError> {
    if services.is_empty() {
        return Ok(QotReport::from_channels(vec![]));
    }
    Ok(gn::estimate_path_qot(&twin.topology, services, &[])?)
}

/// Predicts the network after `commands` without touching the twin.
pub fn rehearse(
    twin: &TwinModel,
    commands: &[NmsCommand],
    current: &[Service],
    min_margin_db: f64,
) -> Result<RehearsalResult, TwinError> {
    let baseline = estimate_qot(twin, current)?;
    let mut roster = current.to_vec();
    for cmd in commands {
        roster = apply_to_roster(&twin.topology, &roster, cmd)?;
    }
    let predicted = estimate_qot(twin, &roster)?;
    let margins = gn::margin(&predicted, &gn::rates_of(&roster))?;
    let feasible = margins.channels.iter().all(|c| c.margin_db >= min_margin_db);
    Ok(RehearsalResult {
        baseline,
        predicted,
        margins,
        min_margin_required_db: min_margin_db,
        feasible,
        command_digests: commands.iter().map(|c| c.digest.clone()).collect(),
    })
}

/// Per-channel absolute GSNR error between a prediction and telemetry.
pub fn prediction_error(predicted: &QotReport, observed: &Telemetry) -> Result<PredictionError, TwinError> {
    if predicted.channels.len() != observed.channels.len() {
        return Err(TwinError::ChannelMismatch(format!(
            "{} predicted vs {} observed channels",
            predicted.channels.len(),
            observed.channels.len()
        )));
    }
    let channels = predicted
        .channels
        .iter()
        .map(|p| {
            let o = observed.channel(&p.service_id).ok_or_else(|| TwinError::ChannelMismatch(p.service_id.clone()))?;
            Ok(ChannelError {
                service_id: p.service_id.clone(),
                center_frequency_thz: p.center_frequency_thz,
                predicted_gsnr_db: p.gsnr_db,
                observed_gsnr_db: o.gsnr_db,
                abs_error_db: (p.gsnr_db - o.gsnr_db).abs(),
            })
        })
        .collect::<Result<Vec<_>, TwinError>>()?;
    let max_abs_error_db = channels.iter().map(|c| c.abs_error_db).fold(0.0, f64::max);
    Ok(PredictionError { channels, max_abs_error_db })
}
