//! Receiver/transmitter carrier-frequency rendezvous.
//!
//! The receiver senses until the quietest carrier is under the threshold,
//! proposes it with `NewFreq` until a matching `FreqAck` comes back, then
//! repeats `ClearToReceive` for the whole `timeout` window and starts
//! receiving. The transmitter waits for `NewFreq`, acknowledges it every
//! `retry_interval` until `ClearToReceive` arrives (then transmits) or its
//! `timeout` expires (then fails).
//!
//! Both machines run on one event queue. Events at the same instant are
//! ordered deliveries first, then retry timers, then deadlines, each in
//! scheduling order, which makes every run a pure function of its inputs.

mod channel;
mod trace;

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sensor::{min_energy_frequency, SensorError, SpectrumSensor};
use crate::time::SimTime;

pub use channel::ControlChannel;
pub use trace::{write_trace, TraceEvent, TraceRecord, TRACE_HEADER};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("spectrum sensing failed: {0}")]
    Sensing(#[from] SensorError),
    #[error("invalid protocol configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Actor {
    Rx,
    Tx,
}

impl fmt::Display for Actor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Actor::Rx => "rx",
            Actor::Tx => "tx",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MessageKind {
    NewFreq,
    FreqAck,
    ClearToReceive,
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolMessage {
    pub kind: MessageKind,
    pub sender: Actor,
    /// The proposed carrier; acknowledgements echo it.
    pub carrier_freq: f64,
    pub seq: u64,
    pub sent_at: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolConfig {
    /// Linear energy a carrier must not exceed to be selectable.
    pub threshold: f64,
    /// Seconds. Length of the clear-to-receive window and of the
    /// transmitter's acknowledgement window.
    pub timeout: f64,
    pub retry_interval: f64,
    /// Full sweeps the receiver attempts before reporting no clear channel.
    pub sensing_budget: u32,
    /// Seconds the receiver keeps proposing before giving up.
    pub propose_budget: f64,
    /// Seconds between occupancy checks once a link is up.
    pub resense_period: f64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            threshold: 1e-4,
            timeout: 0.5,
            retry_interval: 0.01,
            sensing_budget: 4,
            propose_budget: 2.0,
            resense_period: 1.8,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        let bad = |m: &str| Err(ProtocolError::InvalidConfig(m.to_string()));
        if !(self.retry_interval > 0.0) {
            return bad("retry_interval must be > 0");
        }
        if !(self.timeout >= 0.0) || !(self.propose_budget >= 0.0) {
            return bad("timeout and propose_budget must be >= 0");
        }
        if self.sensing_budget == 0 {
            return bad("sensing_budget must be >= 1");
        }
        if !(self.threshold >= 0.0) {
            return bad("threshold must be >= 0");
        }
        if !(self.resense_period > 0.0) {
            return bad("resense_period must be > 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RxPhase {
    Sensing,
    ProposingFreq,
    ConfirmingClear,
    Receiving,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxPhase {
    AwaitingFreq,
    Acking,
    Transmitting,
    Failed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RxState {
    pub phase: RxPhase,
    pub current_freq: Option<f64>,
    pub since: SimTime,
    pub sweeps: u32,
    /// Set when the receiver stops trying (sensing or proposing budget).
    pub gave_up: Option<FailureReason>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TxState {
    pub phase: TxPhase,
    pub current_freq: Option<f64>,
    pub since: SimTime,
    pub saw_clear_to_receive: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FailureReason {
    NoClearChannel { sweeps: u32 },
    ProposeBudgetExhausted,
    ClearToReceiveTimeout,
    FrequencyMismatch,
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FailureReason::NoClearChannel { sweeps } => write!(f, "no clear channel after {sweeps} sweeps"),
            FailureReason::ProposeBudgetExhausted => {
                f.write_str("no frequency acknowledgement within the proposing budget")
            }
            FailureReason::ClearToReceiveTimeout => f.write_str("clear-to-receive not received before timeout"),
            FailureReason::FrequencyMismatch => f.write_str("final frequencies differ"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    Converged { freq: f64, elapsed: SimTime },
    Failed { actor: Actor, reason: FailureReason },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MessageCounts {
    pub new_freq: u32,
    pub freq_ack: u32,
    pub clear_to_receive: u32,
}

impl MessageCounts {
    pub fn total(&self) -> u32 {
        self.new_freq + self.freq_ack + self.clear_to_receive
    }

    fn bump(&mut self, kind: MessageKind) {
        match kind {
            MessageKind::NewFreq => self.new_freq += 1,
            MessageKind::FreqAck => self.freq_ack += 1,
            MessageKind::ClearToReceive => self.clear_to_receive += 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RendezvousReport {
    pub outcome: Outcome,
    pub rx: RxState,
    pub tx: TxState,
    pub sent: MessageCounts,
    pub started_at: SimTime,
    /// Time of the last state change of either machine.
    pub finished_at: SimTime,
    /// Simulated seconds spent in spectrum sensing.
    pub sensing_time: f64,
    pub trace: Vec<TraceRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Timer {
    RetryNewFreq,
    RetryClear,
    ClearWindowEnd,
    ProposeDeadline,
    RetryAck,
    AckDeadline,
}

impl Timer {
    fn class(self) -> u8 {
        match self {
            Timer::RetryNewFreq | Timer::RetryClear | Timer::RetryAck => 1,
            Timer::ClearWindowEnd | Timer::ProposeDeadline | Timer::AckDeadline => 2,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum EventKind {
    Deliver(ProtocolMessage),
    Fire(Timer),
}

#[derive(Debug, Clone, Copy)]
struct Event {
    at: SimTime,
    class: u8,
    order: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // Reversed: BinaryHeap pops the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.at, other.class, other.order).cmp(&(self.at, self.class, self.order))
    }
}

struct Sim<'a> {
    cfg: &'a ProtocolConfig,
    channel: &'a ControlChannel,
    retry: SimTime,
    timeout: SimTime,
    queue: BinaryHeap<Event>,
    next_order: u64,
    rx: RxState,
    tx: TxState,
    rx_seq: u64,
    tx_seq: u64,
    propose_deadline: SimTime,
    clear_end: SimTime,
    ack_deadline: SimTime,
    sent: MessageCounts,
    trace: Vec<TraceRecord>,
}

impl<'a> Sim<'a> {
    fn schedule(&mut self, at: SimTime, kind: EventKind) {
        let class = match kind {
            EventKind::Deliver(_) => 0,
            EventKind::Fire(t) => t.class(),
        };
        self.queue.push(Event {
            at,
            class,
            order: self.next_order,
            kind,
        });
        self.next_order += 1;
    }

    fn record(
        &mut self,
        time: SimTime,
        actor: Actor,
        event: TraceEvent,
        kind: String,
        freq: Option<f64>,
        seq: Option<u64>,
    ) {
        self.trace.push(TraceRecord {
            time,
            actor,
            event,
            kind,
            freq,
            seq,
        });
    }

    fn send(&mut self, now: SimTime, sender: Actor, kind: MessageKind, carrier_freq: f64) {
        let seq = match sender {
            Actor::Rx => &mut self.rx_seq,
            Actor::Tx => &mut self.tx_seq,
        };
        let msg = ProtocolMessage {
            kind,
            sender,
            carrier_freq,
            seq: *seq,
            sent_at: now,
        };
        *seq += 1;
        self.sent.bump(kind);
        self.record(
            now,
            sender,
            TraceEvent::Send,
            kind.to_string(),
            Some(carrier_freq),
            Some(msg.seq),
        );
        if self.channel.is_lost(sender, msg.seq, kind) {
            self.record(
                now,
                sender,
                TraceEvent::Lost,
                kind.to_string(),
                Some(carrier_freq),
                Some(msg.seq),
            );
        } else {
            self.schedule(now + self.channel.delay(), EventKind::Deliver(msg));
        }
    }

    fn rx_phase(&mut self, now: SimTime, phase: RxPhase) {
        self.rx.phase = phase;
        self.rx.since = now;
        self.record(
            now,
            Actor::Rx,
            TraceEvent::Phase,
            format!("{phase:?}"),
            self.rx.current_freq,
            None,
        );
    }

    fn tx_phase(&mut self, now: SimTime, phase: TxPhase) {
        self.tx.phase = phase;
        self.tx.since = now;
        self.record(
            now,
            Actor::Tx,
            TraceEvent::Phase,
            format!("{phase:?}"),
            self.tx.current_freq,
            None,
        );
    }

    fn start_proposing(&mut self, now: SimTime, freq: f64) {
        self.rx.current_freq = Some(freq);
        self.rx_phase(now, RxPhase::ProposingFreq);
        self.propose_deadline = now + SimTime::from_secs_f64(self.cfg.propose_budget);
        self.schedule(self.propose_deadline, EventKind::Fire(Timer::ProposeDeadline));
        self.send(now, Actor::Rx, MessageKind::NewFreq, freq);
        self.schedule(now + self.retry, EventKind::Fire(Timer::RetryNewFreq));
    }

    fn start_confirming(&mut self, now: SimTime) {
        self.rx_phase(now, RxPhase::ConfirmingClear);
        self.clear_end = now + self.timeout;
        self.schedule(self.clear_end, EventKind::Fire(Timer::ClearWindowEnd));
        self.send_clear(now);
    }

    fn send_clear(&mut self, now: SimTime) {
        if now >= self.clear_end {
            return;
        }
        let freq = self.rx.current_freq.expect("confirming without a frequency");
        self.send(now, Actor::Rx, MessageKind::ClearToReceive, freq);
        if now + self.retry < self.clear_end {
            self.schedule(now + self.retry, EventKind::Fire(Timer::RetryClear));
        }
    }

    fn send_ack(&mut self, now: SimTime) {
        let freq = self.tx.current_freq.expect("acking without a frequency");
        self.send(now, Actor::Tx, MessageKind::FreqAck, freq);
        if now + self.retry <= self.ack_deadline {
            self.schedule(now + self.retry, EventKind::Fire(Timer::RetryAck));
        }
    }

    fn deliver(&mut self, now: SimTime, msg: ProtocolMessage) {
        let receiver = match msg.sender {
            Actor::Rx => Actor::Tx,
            Actor::Tx => Actor::Rx,
        };
        let accepted = match (receiver, msg.kind) {
            (Actor::Tx, MessageKind::NewFreq) if self.tx.phase == TxPhase::AwaitingFreq => {
                self.tx.current_freq = Some(msg.carrier_freq);
                self.tx_phase(now, TxPhase::Acking);
                self.ack_deadline = now + self.timeout;
                self.schedule(self.ack_deadline, EventKind::Fire(Timer::AckDeadline));
                self.record(
                    now,
                    receiver,
                    TraceEvent::Recv,
                    msg.kind.to_string(),
                    Some(msg.carrier_freq),
                    Some(msg.seq),
                );
                self.send_ack(now);
                return;
            }
            (Actor::Tx, MessageKind::ClearToReceive) => {
                self.tx.phase == TxPhase::Acking && self.tx.current_freq == Some(msg.carrier_freq)
            }
            (Actor::Rx, MessageKind::FreqAck) => {
                self.rx.phase == RxPhase::ProposingFreq && self.rx.current_freq == Some(msg.carrier_freq)
            }
            _ => false,
        };
        let event = if accepted { TraceEvent::Recv } else { TraceEvent::Stale };
        self.record(
            now,
            receiver,
            event,
            msg.kind.to_string(),
            Some(msg.carrier_freq),
            Some(msg.seq),
        );
        if !accepted {
            return;
        }
        match msg.kind {
            MessageKind::ClearToReceive => {
                self.tx.saw_clear_to_receive = true;
                self.tx_phase(now, TxPhase::Transmitting);
            }
            MessageKind::FreqAck => self.start_confirming(now),
            MessageKind::NewFreq => unreachable!(),
        }
    }

    fn fire(&mut self, now: SimTime, timer: Timer) {
        match timer {
            Timer::RetryNewFreq => {
                if self.rx.phase == RxPhase::ProposingFreq && self.rx.gave_up.is_none() && now < self.propose_deadline {
                    let freq = self.rx.current_freq.expect("proposing without a frequency");
                    self.send(now, Actor::Rx, MessageKind::NewFreq, freq);
                    self.schedule(now + self.retry, EventKind::Fire(Timer::RetryNewFreq));
                }
            }
            Timer::ProposeDeadline => {
                if self.rx.phase == RxPhase::ProposingFreq && self.rx.gave_up.is_none() {
                    self.rx.gave_up = Some(FailureReason::ProposeBudgetExhausted);
                    self.record(
                        now,
                        Actor::Rx,
                        TraceEvent::Phase,
                        "GaveUp".into(),
                        self.rx.current_freq,
                        None,
                    );
                }
            }
            Timer::RetryClear => {
                if self.rx.phase == RxPhase::ConfirmingClear {
                    self.send_clear(now);
                }
            }
            Timer::ClearWindowEnd => {
                if self.rx.phase == RxPhase::ConfirmingClear {
                    self.rx_phase(now, RxPhase::Receiving);
                }
            }
            Timer::RetryAck => {
                if self.tx.phase == TxPhase::Acking && now <= self.ack_deadline {
                    self.send_ack(now);
                }
            }
            Timer::AckDeadline => {
                if self.tx.phase == TxPhase::Acking {
                    self.tx_phase(now, TxPhase::Failed);
                }
            }
        }
    }

    fn rx_done(&self) -> bool {
        self.rx.phase == RxPhase::Receiving || self.rx.gave_up.is_some()
    }

    fn tx_done(&self) -> bool {
        matches!(self.tx.phase, TxPhase::Transmitting | TxPhase::Failed)
    }
}

/// Runs one full rendezvous round starting at `start`: receiver sensing,
/// frequency proposal and clear-to-receive confirmation, co-simulated with
/// the transmitter over `channel`.
pub fn rendezvous<S: SpectrumSensor + ?Sized>(
    cfg: &ProtocolConfig,
    sensor: &mut S,
    channel: &ControlChannel,
    start: SimTime,
) -> Result<RendezvousReport, ProtocolError> {
    cfg.validate()?;
    let mut sim = Sim {
        cfg,
        channel,
        retry: SimTime::from_secs_f64(cfg.retry_interval),
        timeout: SimTime::from_secs_f64(cfg.timeout),
        queue: BinaryHeap::new(),
        next_order: 0,
        rx: RxState {
            phase: RxPhase::Sensing,
            current_freq: None,
            since: start,
            sweeps: 0,
            gave_up: None,
        },
        tx: TxState {
            phase: TxPhase::AwaitingFreq,
            current_freq: None,
            since: start,
            saw_clear_to_receive: false,
        },
        rx_seq: 0,
        tx_seq: 0,
        propose_deadline: SimTime::MAX,
        clear_end: SimTime::MAX,
        ack_deadline: SimTime::MAX,
        sent: MessageCounts::default(),
        trace: Vec::new(),
    };

    // Sensing loop: keep sweeping while the quietest carrier is too loud.
    let mut now = start;
    let mut sensing_time = 0.0;
    let mut selected = None;
    while sim.rx.sweeps < cfg.sensing_budget {
        let map = sensor.sense(now.as_secs_f64())?;
        sensing_time += map.sensing_time;
        now += SimTime::from_secs_f64(map.sensing_time);
        sim.rx.sweeps += 1;
        let best = min_energy_frequency(&map, &[])?;
        sim.record(
            now,
            Actor::Rx,
            TraceEvent::Sense,
            "sweep".into(),
            Some(best.carrier_freq),
            Some(u64::from(sim.rx.sweeps)),
        );
        if best.energy <= cfg.threshold {
            selected = Some(best.carrier_freq);
            break;
        }
    }

    match selected {
        None => {
            let reason = FailureReason::NoClearChannel { sweeps: sim.rx.sweeps };
            sim.rx.gave_up = Some(reason);
        }
        Some(freq) => {
            sim.start_proposing(now, freq);
            while let Some(ev) = sim.queue.pop() {
                now = ev.at;
                match ev.kind {
                    EventKind::Deliver(msg) => sim.deliver(now, msg),
                    EventKind::Fire(t) => sim.fire(now, t),
                }
                if sim.rx_done() && sim.tx_done() {
                    break;
                }
            }
        }
    }

    let finished_at = now.max(sim.rx.since).max(sim.tx.since);
    let outcome = match (&sim.rx, &sim.tx) {
        (
            RxState {
                gave_up: Some(reason), ..
            },
            _,
        ) => Outcome::Failed {
            actor: Actor::Rx,
            reason: *reason,
        },
        (rx, tx) if rx.phase == RxPhase::Receiving && tx.phase == TxPhase::Transmitting => {
            if rx.current_freq == tx.current_freq {
                Outcome::Converged {
                    freq: rx.current_freq.expect("receiving without a frequency"),
                    elapsed: rx.since.max(tx.since) - start,
                }
            } else {
                Outcome::Failed {
                    actor: Actor::Tx,
                    reason: FailureReason::FrequencyMismatch,
                }
            }
        }
        _ => Outcome::Failed {
            actor: Actor::Tx,
            reason: FailureReason::ClearToReceiveTimeout,
        },
    };

    Ok(RendezvousReport {
        outcome,
        rx: sim.rx,
        tx: sim.tx,
        sent: sim.sent,
        started_at: start,
        finished_at,
        sensing_time,
        trace: sim.trace,
    })
}
