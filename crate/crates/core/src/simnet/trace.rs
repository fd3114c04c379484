use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;

use super::SimError;
use crate::compute::Phase;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Delivery {
    Delivered,
    Offline,
    Dropped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum TraceEvent {
    Action {
        seq: u64,
        tick: u64,
        index: usize,
        name: String,
        actor: String,
        outcome: String,
    },
    Message {
        seq: u64,
        tick: u64,
        from: String,
        to: String,
        op: String,
        /// Sender phase, for worker senders.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        phase: Option<Phase>,
        bytes: usize,
        digest: String,
        delivery: Delivery,
        /// Fingerprints of plaintexts found in the payload.
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        taint: Vec<String>,
    },
    Worker {
        seq: u64,
        tick: u64,
        actor: String,
        phase: Phase,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        task: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        note: Option<String>,
    },
}

impl TraceEvent {
    pub fn seq(&self) -> u64 {
        match self {
            TraceEvent::Action { seq, .. } | TraceEvent::Message { seq, .. } | TraceEvent::Worker { seq, .. } => *seq,
        }
    }

    pub fn tick(&self) -> u64 {
        match self {
            TraceEvent::Action { tick, .. } | TraceEvent::Message { tick, .. } | TraceEvent::Worker { tick, .. } => *tick,
        }
    }
}

/// Ordered record of a run. Message payloads are kept in memory for taint
/// scanning but only their digests are serialized.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub events: Vec<TraceEvent>,
    pub(crate) payloads: BTreeMap<u64, Vec<u8>>,
}

impl Trace {
    pub(crate) fn push(&mut self, event: TraceEvent) {
        self.events.push(event);
    }

    pub fn next_seq(&self) -> u64 {
        self.events.len() as u64
    }

    pub fn payload(&self, seq: u64) -> Option<&[u8]> {
        self.payloads.get(&seq).map(Vec::as_slice)
    }

    pub fn messages(&self) -> impl Iterator<Item = &TraceEvent> {
        self.events.iter().filter(|e| matches!(e, TraceEvent::Message { .. }))
    }

    pub fn to_ndjson(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for e in &self.events {
            out.extend(serde_json::to_vec(e).expect("trace events serialize"));
            out.push(b'\n');
        }
        out
    }

    /// Lowercase hex SHA-256 of the NDJSON form.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_ndjson()))
    }

    pub fn from_ndjson(text: &[u8]) -> Result<Self, SimError> {
        let mut events = Vec::new();
        for (i, line) in text.split(|b| *b == b'\n').enumerate() {
            if line.iter().all(u8::is_ascii_whitespace) {
                continue;
            }
            events.push(
                serde_json::from_slice(line).map_err(|e| SimError::Trace(format!("line {}: {e}", i + 1)))?,
            );
        }
        Ok(Trace {
            events,
            payloads: BTreeMap::new(),
        })
    }

    /// Message count per worker actor while it was in the isolated phase.
    pub fn isolated_message_counts(&self) -> BTreeMap<String, usize> {
        let mut out: BTreeMap<String, usize> = BTreeMap::new();
        for e in &self.events {
            match e {
                TraceEvent::Worker { actor, .. } => {
                    out.entry(actor.clone()).or_insert(0);
                }
                TraceEvent::Message {
                    from,
                    phase: Some(Phase::IsolatedRunning),
                    ..
                } => *out.entry(from.clone()).or_insert(0) += 1,
                _ => {}
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceReport {
    pub events: usize,
    pub messages: usize,
    pub digest: String,
    /// Structural problems: sequence gaps, ticks going backwards.
    pub problems: Vec<String>,
    /// Worker actors that exchanged messages while isolated.
    pub isolation_breaches: Vec<String>,
    /// Sequence numbers of messages carrying tainted payloads.
    pub tainted_messages: Vec<u64>,
}

impl TraceReport {
    pub fn is_clean(&self) -> bool {
        self.problems.is_empty() && self.isolation_breaches.is_empty() && self.tainted_messages.is_empty()
    }
}

/// Re-checks a serialized trace: sequence numbering, tick monotonicity,
/// worker isolation and recorded taint hits.
pub fn verify_trace(text: &[u8]) -> Result<TraceReport, SimError> {
    let trace = Trace::from_ndjson(text)?;
    let mut problems = Vec::new();
    let mut last_tick = 0;
    for (i, e) in trace.events.iter().enumerate() {
        if e.seq() != i as u64 {
            problems.push(format!("event {i} has seq {}", e.seq()));
        }
        if e.tick() < last_tick {
            problems.push(format!("event {i}: tick {} after {last_tick}", e.tick()));
        }
        last_tick = e.tick();
    }
    let isolation_breaches = trace
        .isolated_message_counts()
        .into_iter()
        .filter(|(_, n)| *n > 0)
        .map(|(a, _)| a)
        .collect();
    let tainted_messages = trace
        .events
        .iter()
        .filter_map(|e| match e {
            TraceEvent::Message { seq, taint, .. } if !taint.is_empty() => Some(*seq),
            _ => None,
        })
        .collect();
    Ok(TraceReport {
        events: trace.events.len(),
        messages: trace.messages().count(),
        digest: trace.digest(),
        problems,
        isolation_breaches,
        tainted_messages,
    })
}
