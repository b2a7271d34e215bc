//! Run traces: one JSON object per line plus a 64-bit digest over the lines.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::identity::{fnv1a, NodeId, QueryId};
use crate::qos::Metric;
use crate::simcore::Time;
use crate::srp::{DiscoveryEvent, Packet, RouteRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Primitive {
    SendL,
    BcastL,
    ReceiveL,
    Overheard,
    Tunnel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Transmitted,
    Delivered,
    Dropped,
    FailureReported,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "ev", rename_all = "snake_case")]
pub enum TraceEvent {
    /// A frame leaving `node`. `to` is empty for broadcasts.
    Transmit {
        t: Time,
        node: NodeId,
        prim: Primitive,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        to: Option<NodeId>,
        digest: u64,
        packet: Packet,
        outcome: Outcome,
    },
    /// A frame arriving at `node` from `from`.
    Receive {
        t: Time,
        node: NodeId,
        from: NodeId,
        prim: Primitive,
        digest: u64,
    },
    /// The protocol step a node's processing ended in.
    Step {
        t: Time,
        node: NodeId,
        digest: u64,
        step: String,
    },
    ForwardList {
        t: Time,
        node: NodeId,
        src: NodeId,
        qid: QueryId,
        neighbor: NodeId,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        metric: Option<Metric>,
    },
    Discovery {
        t: Time,
        node: NodeId,
        #[serde(flatten)]
        event: DiscoveryEvent,
    },
    Accept {
        t: Time,
        node: NodeId,
        record: RouteRecord,
    },
    /// An adversary action, for reading traces.
    Adversary {
        t: Time,
        node: NodeId,
        action: String,
    },
    LinkChange {
        t: Time,
        a: NodeId,
        b: NodeId,
        up: bool,
    },
}

impl TraceEvent {
    pub fn time(&self) -> Time {
        match self {
            TraceEvent::Transmit { t, .. }
            | TraceEvent::Receive { t, .. }
            | TraceEvent::Step { t, .. }
            | TraceEvent::ForwardList { t, .. }
            | TraceEvent::Discovery { t, .. }
            | TraceEvent::Accept { t, .. }
            | TraceEvent::Adversary { t, .. }
            | TraceEvent::LinkChange { t, .. } => *t,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub events: Vec<TraceEvent>,
}

impl Trace {
    pub fn push(&mut self, ev: TraceEvent) {
        self.events.push(ev);
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Routes accepted at any source, in acceptance order.
    pub fn accepted(&self) -> Vec<RouteRecord> {
        self.events
            .iter()
            .filter_map(|e| match e {
                TraceEvent::Accept { record, .. } => Some(record.clone()),
                _ => None,
            })
            .collect()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for ev in &self.events {
            // TraceEvent has no map keys that could fail to serialize
            let line = serde_json::to_string(ev).expect("trace event serializes");
            let _ = writeln!(out, "{line}");
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Trace, serde_json::Error> {
        let events = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()?;
        Ok(Trace { events })
    }

    /// FNV-1a over the JSONL rendering.
    pub fn digest(&self) -> u64 {
        fnv1a(self.to_jsonl().as_bytes())
    }

    /// Every delivery must follow a transmission of the same frame by the
    /// same node at an earlier or equal time.
    pub fn check_causality(&self) -> Result<(), String> {
        use std::collections::BTreeMap;
        let mut sent: BTreeMap<(NodeId, u64), Time> = BTreeMap::new();
        for ev in &self.events {
            match ev {
                TraceEvent::Transmit { t, node, digest, .. } => {
                    sent.entry((*node, *digest)).or_insert(*t);
                }
                TraceEvent::Receive { t, from, digest, node, .. } => match sent.get(&(*from, *digest)) {
                    Some(ts) if ts <= t => {}
                    _ => {
                        return Err(format!(
                            "delivery to {node} at {t} of {digest:016x} from {from} has no earlier transmission"
                        ))
                    }
                },
                _ => {}
            }
        }
        Ok(())
    }
}
