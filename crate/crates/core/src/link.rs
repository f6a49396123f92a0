//! Packet-level data plane between the secondary transmitter and receiver.
//!
//! Packets are scored, not synthesized. Each packet's SINR comes from the
//! primary-user power falling inside the secondary channel; above the
//! capture threshold it is received intact, below the detection margin it
//! is never seen, and in between a logistic curve decides between a valid
//! and a corrupted CRC.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rf_env::{Emitter, EmitterKind};
use crate::rng;
use crate::time::SimTime;

const PACKET_STREAM: u64 = 0x6c69_6e6b;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinkError {
    #[error("invalid link configuration: {0}")]
    InvalidConfig(String),
    #[error("frequency plan is empty")]
    EmptyPlan,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkConfig {
    /// Bytes.
    pub packet_size: u32,
    /// Seconds between packet starts.
    pub inter_packet_time: f64,
    pub total_packets: u32,
    /// Bits per second.
    pub data_rate: f64,
    pub su_channel_bandwidth: f64,
    pub su_signal_power: f64,
    /// In-channel noise power.
    pub noise_power: f64,
    pub sinr_capture_db: f64,
    /// Packets below `-detect_margin_db` SINR are not detected.
    pub detect_margin_db: f64,
    /// dB of SINR per decade of CRC-valid odds in the transition zone.
    pub logistic_slope_db: f64,
    /// Carriers inside `[low, high]` use `fallback_data_rate`.
    pub fallback_band: [f64; 2],
    pub fallback_data_rate: f64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig {
            packet_size: 133,
            inter_packet_time: 0.05,
            total_packets: 7519,
            data_rate: 250e3,
            su_channel_bandwidth: 0.4e6,
            su_signal_power: 1.0,
            noise_power: 1e-6,
            sinr_capture_db: 2.5,
            detect_margin_db: 1.0,
            logistic_slope_db: 2.0,
            fallback_band: [863e6, 928e6],
            fallback_data_rate: 20e3,
        }
    }
}

impl LinkConfig {
    pub fn validate(&self) -> Result<(), LinkError> {
        let bad = |m: &str| Err(LinkError::InvalidConfig(m.to_string()));
        if self.packet_size == 0 || !(self.data_rate > 0.0) || !(self.fallback_data_rate > 0.0) {
            return bad("packet_size and data rates must be > 0");
        }
        if !(self.inter_packet_time >= self.airtime(self.data_rate)) {
            return bad("inter_packet_time must cover the packet airtime");
        }
        if !(self.su_channel_bandwidth > 0.0) {
            return bad("su_channel_bandwidth must be > 0");
        }
        if !(self.su_signal_power > 0.0) || !(self.noise_power >= 0.0) {
            return bad("su_signal_power must be > 0 and noise_power >= 0");
        }
        if !(self.sinr_capture_db > -self.detect_margin_db) {
            return bad("sinr_capture_db must exceed -detect_margin_db");
        }
        if !(self.logistic_slope_db > 0.0) {
            return bad("logistic_slope_db must be > 0");
        }
        Ok(())
    }

    pub fn airtime(&self, rate: f64) -> f64 {
        f64::from(self.packet_size) * 8.0 / rate
    }

    pub fn rate_at(&self, freq: f64) -> f64 {
        let [low, high] = self.fallback_band;
        if freq >= low && freq <= high {
            self.fallback_data_rate
        } else {
            self.data_rate
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PacketOutcome {
    CrcValid,
    CrcError,
    NotReceived,
    DroppedDuringSensing,
}

impl fmt::Display for PacketOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacketRecord {
    pub seq: u32,
    pub sent_at: SimTime,
    pub outcome: PacketOutcome,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LinkStats {
    pub sent: u32,
    /// CrcValid + CrcError.
    pub received: u32,
    pub crc_valid: u32,
    pub dropped_sensing: u32,
    pub psr: f64,
    pub prr: f64,
}

impl LinkStats {
    pub fn from_records(records: &[PacketRecord]) -> Self {
        let count = |o: PacketOutcome| records.iter().filter(|r| r.outcome == o).count() as u32;
        let crc_valid = count(PacketOutcome::CrcValid);
        let received = crc_valid + count(PacketOutcome::CrcError);
        let sent = records.len() as u32;
        let ratio = |n: u32| if sent == 0 { 0.0 } else { f64::from(n) / f64::from(sent) };
        LinkStats {
            sent,
            received,
            crc_valid,
            dropped_sensing: count(PacketOutcome::DroppedDuringSensing),
            psr: ratio(crc_valid),
            prr: ratio(received),
        }
    }

    /// One-row CSV `sent,received,crc_valid,psr,prr`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["sent", "received", "crc_valid", "psr", "prr"])?;
        w.write_record([
            self.sent.to_string(),
            self.received.to_string(),
            self.crc_valid.to_string(),
            self.psr.to_string(),
            self.prr.to_string(),
        ])?;
        w.flush()?;
        Ok(())
    }
}

/// CSV `seq,sent_at,outcome`.
pub fn write_packets_csv<W: Write>(records: &[PacketRecord], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["seq", "sent_at", "outcome"])?;
    for r in records {
        w.write_record([r.seq.to_string(), r.sent_at.to_string(), r.outcome.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Length of `[a_lo, a_hi] ∩ [b_lo, b_hi]`.
pub fn overlap_hz(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.1.min(b.1) - a.0.max(b.0)).max(0.0)
}

fn su_band(su_freq: f64, su_bw: f64) -> (f64, f64) {
    (su_freq - su_bw / 2.0, su_freq + su_bw / 2.0)
}

/// Share of the secondary channel covered by the emitter's band.
pub fn overlap_fraction(su_freq: f64, su_bw: f64, center: f64, bandwidth: f64) -> f64 {
    overlap_hz(
        su_band(su_freq, su_bw),
        (center - bandwidth / 2.0, center + bandwidth / 2.0),
    ) / su_bw
}

/// Power of `emitter` (centered at `center`) landing inside the secondary
/// channel. Band noise has flat density, so the share is the overlap over
/// the emitter's own bandwidth; a tone counts fully when inside.
pub fn interference(su_freq: f64, su_bw: f64, emitter: &Emitter, center: f64) -> f64 {
    let power = emitter.power * emitter.power;
    match emitter.kind {
        EmitterKind::Tone => {
            let (lo, hi) = su_band(su_freq, su_bw);
            if center >= lo && center <= hi {
                power
            } else {
                0.0
            }
        }
        EmitterKind::BandNoise | EmitterKind::SweepingBandNoise => {
            let half = emitter.bandwidth / 2.0;
            power * overlap_hz(su_band(su_freq, su_bw), (center - half, center + half)) / emitter.bandwidth
        }
    }
}

pub fn sinr_db(cfg: &LinkConfig, interference: f64) -> f64 {
    10.0 * (cfg.su_signal_power / (cfg.noise_power + interference)).log10()
}

/// Probability that a packet in the transition zone has a valid CRC.
pub fn crc_valid_probability(cfg: &LinkConfig, sinr_db: f64) -> f64 {
    let mid = (cfg.sinr_capture_db - cfg.detect_margin_db) / 2.0;
    1.0 / (1.0 + 10f64.powf(-(sinr_db - mid) / cfg.logistic_slope_db))
}

/// Scores one packet. `u` is a uniform draw in `[0, 1)` used only in the
/// transition zone.
pub fn packet_outcome(su_freq: f64, emitters: &[(&Emitter, f64)], cfg: &LinkConfig, u: f64) -> PacketOutcome {
    let i: f64 = emitters
        .iter()
        .map(|&(e, center)| interference(su_freq, cfg.su_channel_bandwidth, e, center))
        .sum();
    let sinr = sinr_db(cfg, i);
    if sinr >= cfg.sinr_capture_db {
        PacketOutcome::CrcValid
    } else if sinr < -cfg.detect_margin_db {
        PacketOutcome::NotReceived
    } else if u < crc_valid_probability(cfg, sinr) {
        PacketOutcome::CrcValid
    } else {
        PacketOutcome::CrcError
    }
}

/// Secondary carrier over time: `(from, freq)` steps, ascending in time.
/// Times before the first step use the first frequency.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrequencyPlan {
    pub steps: Vec<(SimTime, f64)>,
}

impl FrequencyPlan {
    pub fn fixed(freq: f64) -> Self {
        FrequencyPlan {
            steps: vec![(SimTime::ZERO, freq)],
        }
    }

    pub fn push(&mut self, from: SimTime, freq: f64) {
        self.steps.push((from, freq));
    }

    pub fn freq_at(&self, t: SimTime) -> Option<f64> {
        let idx = self.steps.partition_point(|&(from, _)| from <= t);
        self.steps.get(idx.saturating_sub(1)).map(|&(_, f)| f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkRun {
    pub records: Vec<PacketRecord>,
    pub stats: LinkStats,
}

/// Sends `total_packets` packets starting at `start`, one every
/// `inter_packet_time`. Packets whose airtime touches any half-open outage
/// `[from, to)` are dropped; the rest are scored against the emitters on
/// air during their airtime.
pub fn run_link(
    cfg: &LinkConfig,
    plan: &FrequencyPlan,
    outages: &[(SimTime, SimTime)],
    emitters: &[Emitter],
    start: SimTime,
    seed: u64,
) -> Result<LinkRun, LinkError> {
    cfg.validate()?;
    if plan.steps.is_empty() {
        return Err(LinkError::EmptyPlan);
    }
    let spacing = SimTime::from_secs_f64(cfg.inter_packet_time);
    let mut outages = outages.to_vec();
    outages.sort_by_key(|o| o.0);
    let mut first_live = 0;
    let mut on_air = Vec::with_capacity(emitters.len());
    let mut records = Vec::with_capacity(cfg.total_packets as usize);

    for seq in 0..cfg.total_packets {
        let sent_at = start + spacing * u64::from(seq);
        let freq = plan.freq_at(sent_at).expect("non-empty plan");
        let air = SimTime::from_secs_f64(cfg.airtime(cfg.rate_at(freq)));
        let end = sent_at + air;

        while first_live < outages.len() && outages[first_live].1 <= sent_at {
            first_live += 1;
        }
        let dropped = outages[first_live..]
            .iter()
            .take_while(|o| o.0 < end)
            .any(|o| o.0 < end && sent_at < o.1);

        let outcome = if dropped {
            PacketOutcome::DroppedDuringSensing
        } else {
            let (t0, t1) = (sent_at.as_secs_f64(), end.as_secs_f64());
            on_air.clear();
            on_air.extend(
                emitters
                    .iter()
                    .filter(|e| e.is_active_during(t0, t1))
                    .map(|e| (e, e.current_center(t0))),
            );
            let u = rng::unit_from_hash(rng::derive_seed(seed, &[PACKET_STREAM, u64::from(seq)]));
            packet_outcome(freq, &on_air, cfg, u)
        };
        records.push(PacketRecord { seq, sent_at, outcome });
    }
    let stats = LinkStats::from_records(&records);
    Ok(LinkRun { records, stats })
}
