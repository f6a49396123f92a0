use std::fmt;
use std::io::Write;

use super::Actor;
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceEvent {
    Sense,
    Send,
    Lost,
    Recv,
    Stale,
    Phase,
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TraceEvent::Sense => "sense",
            TraceEvent::Send => "send",
            TraceEvent::Lost => "lost",
            TraceEvent::Recv => "recv",
            TraceEvent::Stale => "stale",
            TraceEvent::Phase => "phase",
        })
    }
}

/// One line of a protocol trace: `time,actor,event,kind,freq,seq`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub time: SimTime,
    pub actor: Actor,
    pub event: TraceEvent,
    /// Message kind, phase name, or `sweep`.
    pub kind: String,
    pub freq: Option<f64>,
    pub seq: Option<u64>,
}

pub const TRACE_HEADER: [&str; 6] = ["time", "actor", "event", "kind", "freq", "seq"];

impl TraceRecord {
    pub fn fields(&self) -> [String; 6] {
        [
            self.time.to_string(),
            self.actor.to_string(),
            self.event.to_string(),
            self.kind.clone(),
            self.freq.map(|f| f.to_string()).unwrap_or_default(),
            self.seq.map(|s| s.to_string()).unwrap_or_default(),
        ]
    }
}

pub fn write_trace<W: Write>(records: &[TraceRecord], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for r in records {
        w.write_record(r.fields())?;
    }
    w.flush()?;
    Ok(())
}
