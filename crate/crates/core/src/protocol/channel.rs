use serde::{Deserialize, Serialize};

use super::{Actor, MessageKind};
use crate::rng;
use crate::time::SimTime;

/// The out-of-band control link carrying rendezvous messages.
///
/// Every message sees the same fixed delay, so per-sender order is
/// preserved. Whether a message is lost depends only on the seed, the
/// sender and its sequence number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControlChannel {
    pub loss_probability: f64,
    /// Seconds.
    pub delay: f64,
    pub rng_seed: u64,
    /// Kinds dropped unconditionally.
    pub drop_kinds: Vec<MessageKind>,
}

impl Default for ControlChannel {
    fn default() -> Self {
        ControlChannel {
            loss_probability: 0.0,
            delay: 0.001,
            rng_seed: 0,
            drop_kinds: Vec::new(),
        }
    }
}

impl ControlChannel {
    pub fn lossless(delay: f64) -> Self {
        ControlChannel {
            delay,
            ..ControlChannel::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn delay(&self) -> SimTime {
        SimTime::from_secs_f64(self.delay)
    }

    pub fn is_lost(&self, sender: Actor, seq: u64, kind: MessageKind) -> bool {
        if self.drop_kinds.contains(&kind) {
            return true;
        }
        if self.loss_probability <= 0.0 {
            return false;
        }
        let h = rng::derive_seed(self.rng_seed, &[sender as u64, seq]);
        rng::unit_from_hash(h) < self.loss_probability
    }
}
