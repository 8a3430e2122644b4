//! GN-model quality-of-transmission kernel.
//!
//! Channels are launched into every OMS at their service launch power (the
//! ROADM equalizes per channel), then propagate span by span: connector and
//! fiber loss, nonlinear interference generated at the span input, amplifier
//! gain with a linear tilt across the band, and ASE added at the amplifier
//! output. Noise contributions are accumulated incoherently as noise-to-signal
//! ratios, which is equivalent to carrying absolute noise powers through the
//! same gains and ROADM equalization.
//!
//! Nonlinear interference uses the incoherent closed-form GN model: for a
//! target channel the PSD is a sum over every co-propagating channel of
//! `G_i^2 * psi(df_i, B_i)`, with the self term reducing to the classic
//! `asinh(pi^2/2 |beta2| L_eff,a B^2)` expression.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::{self, ExecMode};
use crate::topology::{Amplifier, ChannelGrid, FiberSpan, NetworkTopology, Rate, Service, TopologyError};
use crate::units::{db_to_lin, dbm_to_mw, lin_to_db, mw_to_dbm, LIGHT_SPEED, PLANCK};

/// ASE reference bandwidth, GHz.
pub const B_REF_GHZ: f64 = 12.5;
/// Upper bound reported for GSNR, dB.
pub const GSNR_CAP_DB: f64 = 60.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QotError {
    #[error("empty path")]
    EmptyPath,
    #[error("channel overlap between {0} and {1}")]
    ChannelOverlap(String, String),
    #[error("empty comb")]
    EmptyComb,
    #[error("zero bandwidth")]
    ZeroBandwidth,
    #[error("unknown rate {0}G")]
    UnknownRate(u32),
    #[error("unknown service {0}")]
    UnknownService(String),
    #[error("no rate given for service {0}")]
    MissingRate(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

/// Effective gain in dB seen by a channel at `freq_thz` (nominal gain plus the
/// tilt share at that position of the band).
pub fn effective_gain_db(amp: &Amplifier, grid: &ChannelGrid, freq_thz: f64) -> f64 {
    amp.gain_db + amp.tilt_db * grid.band_position(freq_thz)
}

/// ASE power (mW) of an amplifier at `gain_db` in `ref_bandwidth_ghz`:
/// `h * nu * NF * (G - 1) * B`.
pub fn ase_power_at_gain(gain_db: f64, noise_figure_db: f64, center_thz: f64, ref_bandwidth_ghz: f64) -> f64 {
    let excess = (db_to_lin(gain_db) - 1.0).max(0.0);
    PLANCK * center_thz * 1e12 * db_to_lin(noise_figure_db) * excess * ref_bandwidth_ghz * 1e9 * 1e3
}

/// ASE power (mW) of `amp` at its nominal gain.
pub fn ase_power(amp: &Amplifier, center_thz: f64, ref_bandwidth_ghz: f64) -> f64 {
    ase_power_at_gain(amp.gain_db, amp.noise_figure_db, center_thz, ref_bandwidth_ghz)
}

/// A channel as seen by the NLI kernel at a span input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CombChannel {
    pub center_thz: f64,
    pub symbol_rate_gbd: f64,
    pub power_mw: f64,
}

/// Group-velocity dispersion in s^2/m at `freq_thz` for `dispersion` ps/(nm km).
pub fn beta2(dispersion_ps_nm_km: f64, freq_thz: f64) -> f64 {
    let lambda = LIGHT_SPEED / (freq_thz * 1e12);
    let d = dispersion_ps_nm_km * 1e-6; // s/m^2
    -d * lambda * lambda / (2.0 * PI * LIGHT_SPEED)
}

/// `psi / (2 pi |beta2| L_eff,a)` with the beta2 -> 0 limit handled.
fn psi_scaled(df_hz: f64, baud_hz: f64, beta2_abs: f64, asym_len_m: f64) -> f64 {
    let denom = 2.0 * PI * beta2_abs * asym_len_m;
    if df_hz == 0.0 {
        let x = 0.5 * PI * PI * asym_len_m * beta2_abs * baud_hz * baud_hz;
        if x < 1e-12 {
            return PI * baud_hz * baud_hz / 4.0;
        }
        x.asinh() / denom
    } else {
        let cuc = PI * PI * asym_len_m * beta2_abs * baud_hz;
        if cuc * (df_hz.abs() + baud_hz) < 1e-12 {
            return PI * baud_hz * baud_hz / 2.0;
        }
        ((cuc * (df_hz + baud_hz / 2.0)).asinh() - (cuc * (df_hz - baud_hz / 2.0)).asinh()) / denom
    }
}

/// NLI power (mW) generated in one span on `comb[target]`, referred to the
/// span input, in the target's symbol-rate bandwidth.
pub fn nli_power_per_span(span: &FiberSpan, comb: &[CombChannel], target: usize) -> Result<f64, QotError> {
    let cut = comb.get(target).ok_or(QotError::EmptyComb)?;
    if !(cut.symbol_rate_gbd > 0.0) {
        return Err(QotError::ZeroBandwidth);
    }
    if span.gamma_per_w_km == 0.0 {
        return Ok(0.0);
    }
    let alpha = span.attenuation_db_per_km * std::f64::consts::LN_10 / 10.0 / 1e3; // 1/m
    let length = span.length_km * 1e3;
    let l_eff = (1.0 - (-alpha * length).exp()) / alpha;
    let l_eff_a = 1.0 / alpha;
    let gamma = span.gamma_per_w_km / 1e3; // 1/(W m)
    let b2 = beta2(span.dispersion_ps_nm_km, cut.center_thz).abs();

    let cut_baud = cut.symbol_rate_gbd * 1e9;
    let mut acc = 0.0;
    for (i, ch) in comb.iter().enumerate() {
        let baud = ch.symbol_rate_gbd * 1e9;
        if !(baud > 0.0) {
            return Err(QotError::ZeroBandwidth);
        }
        let psd = ch.power_mw * 1e-3 / baud;
        let df = if i == target { 0.0 } else { (ch.center_thz - cut.center_thz) * 1e12 };
        acc += psd * psd * psi_scaled(df, baud, b2, l_eff_a);
    }
    let cut_psd = cut.power_mw * 1e-3 / cut_baud;
    let g_nli = (16.0 / 27.0) * (gamma * l_eff).powi(2) * cut_psd * acc;
    Ok(g_nli * cut_baud * 1e3)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelQot {
    pub service_id: String,
    pub center_frequency_thz: f64,
    /// Received signal power, mW.
    pub signal_power_mw: f64,
    /// ASE in the signal bandwidth, mW.
    pub ase_power_mw: f64,
    pub nli_power_mw: f64,
    pub gsnr_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QotReport {
    pub channels: Vec<ChannelQot>,
    pub min_gsnr_db: f64,
    pub mean_gsnr_db: f64,
}

impl QotReport {
    pub fn from_channels(channels: Vec<ChannelQot>) -> Self {
        let (min, mean) = if channels.is_empty() {
            (0.0, 0.0)
        } else {
            let min = channels.iter().map(|c| c.gsnr_db).fold(f64::INFINITY, f64::min);
            let mean = channels.iter().map(|c| c.gsnr_db).sum::<f64>() / channels.len() as f64;
            (min, mean)
        };
        QotReport { channels, min_gsnr_db: min, mean_gsnr_db: mean }
    }

    pub fn channel(&self, service_id: &str) -> Option<&ChannelQot> {
        self.channels.iter().find(|c| c.service_id == service_id)
    }

    pub fn gsnr(&self, service_id: &str) -> Option<f64> {
        self.channel(service_id).map(|c| c.gsnr_db)
    }
}

/// Power monitors along one traversal direction of an OMS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmsPowers {
    pub oms_index: usize,
    pub from: u32,
    pub to: u32,
    pub launch_total_dbm: f64,
    pub amp_input_total_dbm: Vec<f64>,
    pub amp_output_total_dbm: Vec<f64>,
    /// Per-channel power at the OMS output, before the next ROADM.
    pub channel_output_dbm: Vec<(String, f64)>,
}

impl OmsPowers {
    pub fn total_output_dbm(&self) -> f64 {
        *self.amp_output_total_dbm.last().expect("OMS has at least one amplifier")
    }
}

/// Full propagation result for a set of co-existing services.
#[derive(Debug, Clone, PartialEq)]
pub struct Propagation {
    /// One entry per input service, in input order.
    pub channels: Vec<ChannelQot>,
    pub oms: Vec<OmsPowers>,
}

#[derive(Debug, Clone, Copy, Default)]
struct Accum {
    nsr_ase_ref: f64,
    nsr_nli: f64,
    received_mw: f64,
}

/// Checks that no two services share a slice on a common OMS.
pub fn check_overlaps(topology: &NetworkTopology, services: &[Service]) -> Result<(), QotError> {
    let mut per_oms: BTreeMap<usize, Vec<(u32, u32, usize)>> = BTreeMap::new();
    for (i, s) in services.iter().enumerate() {
        if s.path.len() < 2 {
            return Err(QotError::EmptyPath);
        }
        let (lo, hi) = s.slice_range(&topology.grid).map_err(TopologyError::from)?;
        for hop in topology.oms_chain(&s.path)? {
            per_oms.entry(hop.index).or_default().push((lo, hi, i));
        }
    }
    for ranges in per_oms.values_mut() {
        ranges.sort();
        for w in ranges.windows(2) {
            if w[1].0 < w[0].1 {
                return Err(QotError::ChannelOverlap(services[w[0].2].id.clone(), services[w[1].2].id.clone()));
            }
        }
    }
    Ok(())
}

struct GroupResult {
    powers: OmsPowers,
    per_channel: Vec<(usize, f64, f64, f64)>, // (service idx, nsr_ase_ref, nsr_nli, output mW)
}

fn propagate_group(
    topology: &NetworkTopology,
    oms_index: usize,
    reversed: bool,
    members: &[usize],
    services: &[Service],
) -> Result<GroupResult, QotError> {
    let oms = &topology.omses[oms_index];
    let grid = &topology.grid;
    let order: Vec<usize> =
        if reversed { (0..oms.elements.len()).rev().collect() } else { (0..oms.elements.len()).collect() };
    let mut power: Vec<f64> = members.iter().map(|&i| dbm_to_mw(services[i].launch_power_dbm)).collect();
    let mut nsr_ase = vec![0.0; members.len()];
    let mut nsr_nli = vec![0.0; members.len()];
    let launch_total: f64 = power.iter().sum();
    let mut amp_in = Vec::with_capacity(order.len());
    let mut amp_out = Vec::with_capacity(order.len());

    for &ei in &order {
        let el = &oms.elements[ei];
        let comb: Vec<CombChannel> = members
            .iter()
            .zip(&power)
            .map(|(&i, &p)| CombChannel {
                center_thz: services[i].center_frequency_thz,
                symbol_rate_gbd: services[i].symbol_rate_gbd,
                power_mw: p,
            })
            .collect();
        for t in 0..members.len() {
            let nli = nli_power_per_span(&el.span, &comb, t)?;
            nsr_nli[t] += nli / power[t];
        }
        let span_lin = db_to_lin(-el.span.loss_db());
        let mut total_in = 0.0;
        let mut total_out = 0.0;
        for (t, &i) in members.iter().enumerate() {
            let f = services[i].center_frequency_thz;
            let p_in = power[t] * span_lin;
            let g_db = effective_gain_db(&el.amp, grid, f);
            let p_out = p_in * db_to_lin(g_db);
            let ase = ase_power_at_gain(g_db, el.amp.noise_figure_db, f, B_REF_GHZ);
            nsr_ase[t] += ase / p_out;
            total_in += p_in;
            total_out += p_out;
            power[t] = p_out;
        }
        amp_in.push(mw_to_dbm(total_in));
        amp_out.push(mw_to_dbm(total_out));
    }

    let (from, to) = if reversed { (oms.endpoints.1, oms.endpoints.0) } else { oms.endpoints };
    Ok(GroupResult {
        powers: OmsPowers {
            oms_index,
            from,
            to,
            launch_total_dbm: mw_to_dbm(launch_total),
            amp_input_total_dbm: amp_in,
            amp_output_total_dbm: amp_out,
            channel_output_dbm: members.iter().zip(&power).map(|(&i, &p)| (services[i].id.clone(), mw_to_dbm(p))).collect(),
        },
        per_channel: members
            .iter()
            .enumerate()
            .map(|(t, &i)| (i, nsr_ase[t], nsr_nli[t], power[t]))
            .collect(),
    })
}

fn finish_channel(s: &Service, acc: Accum) -> ChannelQot {
    let nsr_ase = acc.nsr_ase_ref * s.symbol_rate_gbd / B_REF_GHZ;
    let total = nsr_ase + acc.nsr_nli;
    let gsnr_db = if total > 0.0 { (-lin_to_db(total)).min(GSNR_CAP_DB) } else { GSNR_CAP_DB };
    ChannelQot {
        service_id: s.id.clone(),
        center_frequency_thz: s.center_frequency_thz,
        signal_power_mw: acc.received_mw,
        ase_power_mw: nsr_ase * acc.received_mw,
        nli_power_mw: acc.nsr_nli * acc.received_mw,
        gsnr_db,
    }
}

/// Propagates every service through the plant and returns per-channel QoT
/// plus the OMS power monitors.
pub fn propagate_with(mode: ExecMode, topology: &NetworkTopology, services: &[Service]) -> Result<Propagation, QotError> {
    check_overlaps(topology, services)?;
    let mut groups: BTreeMap<(usize, bool), Vec<usize>> = BTreeMap::new();
    let mut last_hop: Vec<(usize, bool)> = Vec::with_capacity(services.len());
    for (i, s) in services.iter().enumerate() {
        let chain = topology.oms_chain(&s.path)?;
        for hop in &chain {
            groups.entry((hop.index, hop.reversed)).or_default().push(i);
        }
        let last = chain.last().expect("validated path has a hop");
        last_hop.push((last.index, last.reversed));
    }
    let keys: Vec<((usize, bool), Vec<usize>)> = groups.into_iter().collect();
    let results = par::map(mode, &keys, |((oms, rev), members)| propagate_group(topology, *oms, *rev, members, services));

    let mut acc = vec![Accum::default(); services.len()];
    let mut oms = Vec::with_capacity(results.len());
    for (key, r) in keys.iter().zip(results) {
        let r = r?;
        for (i, a, n, out) in r.per_channel {
            acc[i].nsr_ase_ref += a;
            acc[i].nsr_nli += n;
            if last_hop[i] == key.0 {
                acc[i].received_mw = out;
            }
        }
        oms.push(r.powers);
    }
    let channels = services.iter().zip(acc).map(|(s, a)| finish_channel(s, a)).collect();
    Ok(Propagation { channels, oms })
}

pub fn propagate(topology: &NetworkTopology, services: &[Service]) -> Result<Propagation, QotError> {
    propagate_with(ExecMode::default(), topology, services)
}

/// QoT of `targets` (service ids) with all of `services` lit. An empty target
/// list reports every service.
pub fn estimate_path_qot(topology: &NetworkTopology, services: &[Service], targets: &[&str]) -> Result<QotReport, QotError> {
    for t in targets {
        if !services.iter().any(|s| s.id == *t) {
            return Err(QotError::UnknownService(t.to_string()));
        }
    }
    let prop = propagate(topology, services)?;
    let channels = if targets.is_empty() {
        prop.channels
    } else {
        prop.channels.into_iter().filter(|c| targets.contains(&c.service_id.as_str())).collect()
    };
    Ok(QotReport::from_channels(channels))
}

/// Minimum GSNR (dB) for error-free operation after FEC at each line rate.
pub fn required_gsnr_db(rate_gbps: u32) -> Result<f64, QotError> {
    match Rate::try_from(rate_gbps) {
        Ok(Rate::G100) => Ok(10.0),
        Ok(Rate::G400) => Ok(17.0),
        Ok(Rate::G800) => Ok(20.0),
        Err(_) => Err(QotError::UnknownRate(rate_gbps)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelMargin {
    pub service_id: String,
    pub center_frequency_thz: f64,
    pub rate_gbps: u32,
    pub gsnr_db: f64,
    pub required_gsnr_db: f64,
    pub margin_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginReport {
    pub channels: Vec<ChannelMargin>,
    pub min_margin_db: f64,
}

impl MarginReport {
    pub fn margin(&self, service_id: &str) -> Option<f64> {
        self.channels.iter().find(|c| c.service_id == service_id).map(|c| c.margin_db)
    }
}

/// Margin of every channel of `report` against its rate threshold. `rates`
/// maps service id to line rate in Gb/s.
pub fn margin(report: &QotReport, rates: &BTreeMap<String, u32>) -> Result<MarginReport, QotError> {
    margin_from(report.channels.iter().map(|c| (c.service_id.as_str(), c.center_frequency_thz, c.gsnr_db)), rates)
}

/// Margins from (service id, center THz, GSNR dB) triples, e.g. measured ones.
pub fn margin_from<'a>(
    channels: impl IntoIterator<Item = (&'a str, f64, f64)>,
    rates: &BTreeMap<String, u32>,
) -> Result<MarginReport, QotError> {
    let channels = channels
        .into_iter()
        .map(|(id, center, gsnr)| {
            let rate = *rates.get(id).ok_or_else(|| QotError::MissingRate(id.to_string()))?;
            let required = required_gsnr_db(rate)?;
            Ok(ChannelMargin {
                service_id: id.to_string(),
                center_frequency_thz: center,
                rate_gbps: rate,
                gsnr_db: gsnr,
                required_gsnr_db: required,
                margin_db: gsnr - required,
            })
        })
        .collect::<Result<Vec<_>, QotError>>()?;
    let min_margin_db = channels.iter().map(|c| c.margin_db).fold(f64::INFINITY, f64::min);
    Ok(MarginReport { channels, min_margin_db: if min_margin_db.is_finite() { min_margin_db } else { 0.0 } })
}

pub fn rates_of(services: &[Service]) -> BTreeMap<String, u32> {
    services.iter().map(|s| (s.id.clone(), s.rate.gbps())).collect()
}
