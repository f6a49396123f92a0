use std::collections::BTreeMap;

use super::config::ScenarioConfig;
use super::ScenarioError;
use crate::link::{run_link, FrequencyPlan, LinkRun, LinkStats, PacketOutcome, PacketRecord};
use crate::protocol::{rendezvous, Outcome, RendezvousReport, TraceRecord};
use crate::rf_env::{Emitter, Environment};
use crate::rng;
use crate::sensor::{sweep, BandSweeper, EnergyMap};
use crate::time::SimTime;

const CHANNEL_STREAM: u64 = 0x6374_726c;

/// PSR/PRR at one spectral distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub spectral_distance: f64,
    pub psr: f64,
    pub prr: f64,
    pub dropped_sensing: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeedRow {
    pub seed: u64,
    pub pu_offset: f64,
    pub row: SweepRow,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepResult {
    pub per_seed: Vec<SeedRow>,
    /// Averaged over seeds and over both sides of the SU carrier, ascending
    /// in spectral distance.
    pub summary: Vec<SweepRow>,
}

impl SweepResult {
    fn from_seed_rows(per_seed: Vec<SeedRow>) -> Self {
        let mut groups: BTreeMap<u64, (SweepRow, u32)> = BTreeMap::new();
        for r in &per_seed {
            let key = r.row.spectral_distance.round() as u64;
            let slot = groups.entry(key).or_insert((
                SweepRow {
                    spectral_distance: r.row.spectral_distance,
                    psr: 0.0,
                    prr: 0.0,
                    dropped_sensing: 0.0,
                },
                0,
            ));
            slot.0.psr += r.row.psr;
            slot.0.prr += r.row.prr;
            slot.0.dropped_sensing += r.row.dropped_sensing;
            slot.1 += 1;
        }
        let summary = groups
            .into_values()
            .map(|(mut row, n)| {
                let n = f64::from(n);
                row.psr /= n;
                row.prr /= n;
                row.dropped_sensing /= n;
                row
            })
            .collect();
        SweepResult { per_seed, summary }
    }

    pub fn psr_at(&self, distance: f64) -> Option<f64> {
        self.summary
            .iter()
            .find(|r| (r.spectral_distance - distance).abs() < 1.0)
            .map(|r| r.psr)
    }
}

fn row_of(offset: f64, stats: &LinkStats) -> SweepRow {
    SweepRow {
        spectral_distance: offset.abs(),
        psr: stats.psr,
        prr: stats.prr,
        dropped_sensing: f64::from(stats.dropped_sensing),
    }
}

fn base_env(cfg: &ScenarioConfig, seed: u64) -> Result<Environment, ScenarioError> {
    Ok(Environment::new(
        cfg.environment.emitters.clone(),
        cfg.environment.frontend,
        seed,
    )?)
}

fn link_cfg(cfg: &ScenarioConfig) -> crate::link::LinkConfig {
    crate::link::LinkConfig {
        total_packets: cfg.pu_sweep.packets_per_point,
        ..cfg.link
    }
}

/// Sweeps each scan band once at t = 0.
pub fn run_scan(cfg: &ScenarioConfig, seed: u64) -> Result<Vec<EnergyMap>, ScenarioError> {
    let env = base_env(cfg, seed)?;
    cfg.scan
        .bands
        .iter()
        .map(|b| Ok(sweep(&env, (b[0], b[1]), &cfg.sensor, 0.0)?))
        .collect()
}

/// Fixed carrier, PU parked at each sweep offset for the whole run.
pub fn run_static_point(cfg: &ScenarioConfig, seed: u64, offset: f64) -> Result<LinkRun, ScenarioError> {
    let su = cfg.mode.static_freq;
    let mut emitters = cfg.environment.emitters.clone();
    if cfg.pu.enabled {
        emitters.push(cfg.pu_emitter("pu".into(), su + offset, 0.0, f64::INFINITY));
    }
    Ok(run_link(
        &link_cfg(cfg),
        &FrequencyPlan::fixed(su),
        &[],
        &emitters,
        SimTime::ZERO,
        seed,
    )?)
}

pub fn run_static(cfg: &ScenarioConfig) -> Result<SweepResult, ScenarioError> {
    let mut rows = Vec::new();
    for &seed in &cfg.seeds {
        for offset in cfg.pu_sweep.offsets() {
            let run = run_static_point(cfg, seed, offset)?;
            rows.push(SeedRow {
                seed,
                pu_offset: offset,
                row: row_of(offset, &run.stats),
            });
        }
    }
    Ok(SweepResult::from_seed_rows(rows))
}

fn bands_of(cfg: &ScenarioConfig) -> Vec<(f64, f64)> {
    cfg.mode.dsa_bands.iter().map(|b| (b[0], b[1])).collect()
}

fn channel_for(cfg: &ScenarioConfig, seed: u64) -> crate::protocol::ControlChannel {
    let s = rng::derive_seed(cfg.channel.rng_seed, &[CHANNEL_STREAM, seed]);
    cfg.channel.clone().with_seed(s)
}

/// The first rendezvous of a DSA run. The PU is silent until the SU has
/// picked a carrier, so this depends on the seed only.
pub fn initial_rendezvous(cfg: &ScenarioConfig, seed: u64) -> Result<RendezvousReport, ScenarioError> {
    let env = base_env(cfg, seed)?;
    let mut sensor = BandSweeper {
        env: &env,
        bands: bands_of(cfg),
        cfg: cfg.sensor,
    };
    Ok(rendezvous(
        &cfg.protocol,
        &mut sensor,
        &channel_for(cfg, seed),
        SimTime::ZERO,
    )?)
}

/// Band-aligned sensing chunk holding `freq`.
pub fn chunk_containing(cfg: &ScenarioConfig, freq: f64) -> Result<(f64, f64), ScenarioError> {
    let chunk = cfg.sensor.chunk_bandwidth()?;
    for (lo, hi) in bands_of(cfg) {
        if freq >= lo && freq < hi {
            let i = ((freq - lo) / chunk).floor();
            let start = lo + i * chunk;
            return Ok((start, (start + chunk).min(hi)));
        }
    }
    Ok((freq - chunk / 2.0, freq + chunk / 2.0))
}

#[derive(Debug, Clone)]
pub struct DsaRun {
    pub seed: u64,
    pub pu_offset: f64,
    pub link: LinkRun,
    /// Rendezvous rounds after the initial one.
    pub rerendezvous: u32,
    pub failures: u32,
    /// Sensor dwells spent after the link came up.
    pub dwells: u64,
    /// Simulated seconds of those dwells.
    pub sensing_time: f64,
    pub converged_at: Option<SimTime>,
    pub trace: Vec<TraceRecord>,
}

fn not_received(n: u32) -> LinkRun {
    let records: Vec<_> = (0..n)
        .map(|seq| PacketRecord {
            seq,
            sent_at: SimTime::ZERO,
            outcome: PacketOutcome::NotReceived,
        })
        .collect();
    let stats = LinkStats::from_records(&records);
    LinkRun { records, stats }
}

/// One DSA run: the link starts on the initially agreed carrier; every
/// resense period the receiver senses the chunk around its carrier and, if
/// the carrier is occupied, runs a new rendezvous inside that chunk. The
/// PU follows each new carrier after its reaction latency.
pub fn run_dsa_point(
    cfg: &ScenarioConfig,
    seed: u64,
    offset: f64,
    initial: &RendezvousReport,
) -> Result<DsaRun, ScenarioError> {
    let lcfg = link_cfg(cfg);
    let mut trace = initial.trace.clone();
    let (mut freq, t_c) = match initial.outcome {
        Outcome::Converged { freq, elapsed } => (freq, initial.started_at + elapsed),
        Outcome::Failed { .. } => {
            return Ok(DsaRun {
                seed,
                pu_offset: offset,
                link: not_received(lcfg.total_packets),
                rerendezvous: 0,
                failures: 1,
                dwells: 0,
                sensing_time: 0.0,
                converged_at: None,
                trace,
            })
        }
    };

    let mut env = base_env(cfg, seed)?;
    let latency = cfg.reaction_latency();
    let period = SimTime::from_secs_f64(cfg.protocol.resense_period);
    let channel = channel_for(cfg, seed);
    let end = t_c + SimTime::from_secs_f64(lcfg.inter_packet_time) * u64::from(lcfg.total_packets);

    let mut pu_id = 0usize;
    let mut place_pu = |env: &mut Environment, at: SimTime, freq: f64| -> Result<(), ScenarioError> {
        if !cfg.pu.enabled {
            return Ok(());
        }
        let arrive = at.as_secs_f64() + latency;
        if pu_id > 0 {
            let prev = format!("pu#{}", pu_id - 1);
            if let Some(e) = env.emitter_mut(&prev) {
                e.active_interval[1] = arrive;
            }
        }
        env.push_emitter(cfg.pu_emitter(format!("pu#{pu_id}"), freq + offset, arrive, f64::INFINITY))?;
        pu_id += 1;
        Ok(())
    };
    place_pu(&mut env, t_c, freq)?;

    let mut plan = FrequencyPlan::fixed(freq);
    let mut outages = Vec::new();
    let mut dwells = 0u64;
    let mut sensing_time = 0.0;
    let mut rerendezvous = 0;
    let mut failures = 0;
    let mut check = t_c + period;

    while check < end {
        let chunk = chunk_containing(cfg, freq)?;
        let map = sweep(&env, chunk, &cfg.sensor, check.as_secs_f64())?;
        let occupied = map.nearest(freq).is_some_and(|e| e.energy > cfg.protocol.threshold);
        if !occupied {
            dwells += cfg.sensor.dwells_for(chunk.0, chunk.1)? as u64;
            sensing_time += map.sensing_time;
            outages.push((check, check + SimTime::from_secs_f64(map.sensing_time)));
            check += period;
            continue;
        }

        // The occupancy check doubles as the first sweep of the new round.
        let mut first = Some(map);
        let mut sensor = |at: f64| match first.take() {
            Some(m) if m.sensed_at == at => Ok(m),
            _ => sweep(&env, chunk, &cfg.sensor, at),
        };
        let report = rendezvous(&cfg.protocol, &mut sensor, &channel, check)?;
        rerendezvous += 1;
        dwells += u64::from(report.rx.sweeps) * cfg.sensor.dwells_for(chunk.0, chunk.1)? as u64;
        sensing_time += report.sensing_time;
        trace.extend(report.trace.iter().cloned());
        match report.outcome {
            Outcome::Converged { freq: f, elapsed } => {
                let at = check + elapsed;
                outages.push((check, at));
                freq = f;
                plan.push(at, f);
                place_pu(&mut env, at, f)?;
                check = at + period;
            }
            Outcome::Failed { .. } => {
                failures += 1;
                outages.push((check, report.finished_at));
                check = report.finished_at + period;
            }
        }
    }

    let emitters: Vec<Emitter> = env.emitters().to_vec();
    let link = run_link(&lcfg, &plan, &outages, &emitters, t_c, seed)?;
    Ok(DsaRun {
        seed,
        pu_offset: offset,
        link,
        rerendezvous,
        failures,
        dwells,
        sensing_time,
        converged_at: Some(t_c),
        trace,
    })
}

#[derive(Debug, Clone, Default)]
pub struct DsaResult {
    pub sweep: SweepResult,
    pub runs: Vec<DsaRun>,
}

pub fn run_dsa(cfg: &ScenarioConfig) -> Result<DsaResult, ScenarioError> {
    let mut runs = Vec::new();
    for &seed in &cfg.seeds {
        let initial = initial_rendezvous(cfg, seed)?;
        for offset in cfg.pu_sweep.offsets() {
            runs.push(run_dsa_point(cfg, seed, offset, &initial)?);
        }
    }
    let rows = runs
        .iter()
        .map(|r| SeedRow {
            seed: r.seed,
            pu_offset: r.pu_offset,
            row: row_of(r.pu_offset, &r.link.stats),
        })
        .collect();
    Ok(DsaResult {
        sweep: SweepResult::from_seed_rows(rows),
        runs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompareRow {
    pub spectral_distance: f64,
    pub static_psr: f64,
    pub dsa_psr: f64,
}

impl CompareRow {
    pub fn improvement(&self) -> f64 {
        self.dsa_psr - self.static_psr
    }
}

pub fn compare(static_result: &SweepResult, dsa: &SweepResult) -> Vec<CompareRow> {
    static_result
        .summary
        .iter()
        .zip(&dsa.summary)
        .map(|(s, d)| CompareRow {
            spectral_distance: s.spectral_distance,
            static_psr: s.psr,
            dsa_psr: d.psr,
        })
        .collect()
}
