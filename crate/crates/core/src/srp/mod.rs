//! Per-node route discovery state machine, basic and augmented.
//!
//! Every check is a pure function of the node state and the received frame
//! ([`NodeState::check_rreq`], [`NodeState::check_rrep`]); the processing
//! functions run the same checks and then mutate. Adversaries reuse the
//! checks in observer mode to decide whether a frame is compliant.

mod message;

pub use message::{Packet, RouteRecord, Rrep, Rreq};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::identity::{Authenticator, KeyRing, NodeId, QueryId};
use crate::qos::{aggregate, LinkMetricModel, Metric};
use crate::simcore::Time;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Basic,
    Augmented,
}

/// Bounds for the ReplyWait timer. Failed discoveries double the value,
/// concluded ones reset it to `min`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplyWaitPolicy {
    pub min: Time,
    pub max: Time,
}

impl ReplyWaitPolicy {
    pub fn for_network(max_link_delay: Time, max_hops: usize) -> Self {
        let min = 4 * max_link_delay * (max_hops.max(1) as Time);
        ReplyWaitPolicy { min, max: 16 * min }
    }

    pub fn after_failure(&self, previous: Time) -> Time {
        previous.saturating_mul(2).clamp(self.min, self.max)
    }
}

/// Why a frame was discarded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reason {
    Seen,
    PrecursorMismatch,
    Loop,
    MetricCount,
    NoMeasurement,
    NoKey,
    AuthFail,
    SuccessorMismatch,
    NotOnRoute,
    NotForwarded,
    EdgeMetric,
    PrefixMetric,
    Malformed,
    Stale,
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Reason::Seen => "seen",
            Reason::PrecursorMismatch => "precursor-mismatch",
            Reason::Loop => "loop",
            Reason::MetricCount => "length-mismatch",
            Reason::NoMeasurement => "no-measurement",
            Reason::NoKey => "no-key",
            Reason::AuthFail => "auth-fail",
            Reason::SuccessorMismatch => "successor-mismatch",
            Reason::NotOnRoute => "not-on-route",
            Reason::NotForwarded => "not-forwarded",
            Reason::EdgeMetric => "edge-metric",
            Reason::PrefixMetric => "prefix-metric",
            Reason::Malformed => "malformed",
            Reason::Stale => "stale",
        };
        f.write_str(s)
    }
}

/// A failed protocol check: the numbered step that fired and the reason.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rejection {
    pub step: &'static str,
    pub reason: Reason,
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.step, self.reason)
    }
}

fn reject<T>(step: &'static str, reason: Reason) -> Result<T, Rejection> {
    Err(Rejection { step, reason })
}

/// Shared, read-only protocol context of a run.
#[derive(Debug, Clone, Copy)]
pub struct Protocol<'a> {
    pub mode: Mode,
    pub keys: &'a KeyRing,
    pub metrics: Option<&'a LinkMetricModel>,
    pub reply_wait: ReplyWaitPolicy,
}

impl<'a> Protocol<'a> {
    pub fn augmented(&self) -> bool {
        self.mode == Mode::Augmented
    }

    /// `node`'s measurement of its link to `peer`, if it has one.
    pub fn measure(&self, node: NodeId, peer: NodeId) -> Option<Metric> {
        self.metrics?.measure(node, node, peer).ok()
    }

    fn consistent(&self, own: Metric, reported: Metric) -> bool {
        self.metrics.is_some_and(|m| m.consistent(own, reported))
    }

    fn prefix(&self, metrics: &[Metric]) -> Option<Metric> {
        aggregate(self.metrics?.kind, metrics)
    }
}

/// State kept per relayed (or originated) query: the NodeList as this node
/// broadcast it, and the neighbors overheard relaying it further.
#[derive(Debug, Clone, PartialEq)]
pub struct RelayRecord {
    pub node_list: Vec<NodeId>,
    pub metric_list: Option<Vec<Metric>>,
    pub forward_list: BTreeMap<NodeId, Option<Metric>>,
    /// Route prefix metric from S to this node.
    pub prefix: Option<Metric>,
    pub precursor: NodeId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Discovery {
    pub target: NodeId,
    pub qid: QueryId,
    pub t1: Time,
    pub reply_wait: Time,
    pub accepted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum DiscoveryEvent {
    Started { target: NodeId, qid: QueryId, reply_wait: Time },
    Deferred { target: NodeId },
    Failed { target: NodeId, qid: QueryId },
    Concluded { target: NodeId, qid: QueryId, accepted: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Effect {
    Bcast(Packet),
    Send(NodeId, Packet),
    Timer { at: Time, token: u64 },
    Discovery(DiscoveryEvent),
}

/// Result of processing one frame.
#[derive(Debug, Clone, PartialEq)]
pub enum Decision {
    /// Appended self and rebroadcast.
    Relay(Rreq),
    /// Destination answered with a reply sent to `to`.
    Reply { rrep: Rrep, to: NodeId },
    /// Intermediate node passed the reply on to `to`.
    Forward { rrep: Rrep, to: NodeId },
    /// S accepted the reply.
    Accept {
        record: RouteRecord,
        conclude_at: Option<(Time, u64)>,
    },
    /// S heard its own query relayed; only the ForwardList may change.
    Observe,
    Discard(Rejection),
}

impl Decision {
    pub fn effects(&self) -> Vec<Effect> {
        match self {
            Decision::Relay(r) => vec![Effect::Bcast(Packet::Rreq(r.clone()))],
            Decision::Reply { rrep, to } | Decision::Forward { rrep, to } => {
                vec![Effect::Send(*to, Packet::Rrep(rrep.clone()))]
            }
            Decision::Accept { conclude_at, .. } => conclude_at
                .map(|(at, token)| vec![Effect::Timer { at, token }])
                .unwrap_or_default(),
            Decision::Observe | Decision::Discard(_) => Vec::new(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Decision::Relay(_) => "2.2.4 relay".into(),
            Decision::Reply { .. } => "3.2 reply".into(),
            Decision::Forward { .. } => "4.4 forward".into(),
            Decision::Accept { .. } => "4.6 accept".into(),
            Decision::Observe => "2.1 observe".into(),
            Decision::Discard(r) => format!("{r} discard"),
        }
    }
}

/// Duplicate entries in `list`, or an entry equal to one of `implicit`.
fn has_loop(list: &[NodeId], implicit: &[NodeId]) -> bool {
    let mut seen = BTreeSet::new();
    list.iter()
        .any(|n| !seen.insert(*n) || implicit.contains(n))
}

#[derive(Debug, Clone)]
pub struct NodeState {
    pub id: NodeId,
    seen: BTreeSet<(NodeId, QueryId)>,
    relayed: BTreeMap<(NodeId, QueryId), RelayRecord>,
    next_qid: QueryId,
    discoveries: BTreeMap<NodeId, Discovery>,
    deferred: BTreeMap<NodeId, u32>,
    reply_wait: BTreeMap<NodeId, Time>,
    next_token: u64,
    timers: BTreeMap<u64, (NodeId, QueryId)>,
}

impl NodeState {
    pub fn new(id: NodeId) -> Self {
        NodeState {
            id,
            seen: BTreeSet::new(),
            relayed: BTreeMap::new(),
            next_qid: 1,
            discoveries: BTreeMap::new(),
            deferred: BTreeMap::new(),
            reply_wait: BTreeMap::new(),
            next_token: 0,
            timers: BTreeMap::new(),
        }
    }

    pub fn has_seen(&self, src: NodeId, qid: QueryId) -> bool {
        self.seen.contains(&(src, qid))
    }

    pub fn mark_seen(&mut self, src: NodeId, qid: QueryId) {
        self.seen.insert((src, qid));
    }

    pub fn relay_record(&self, src: NodeId, qid: QueryId) -> Option<&RelayRecord> {
        self.relayed.get(&(src, qid))
    }

    pub fn forward_list(&self, src: NodeId, qid: QueryId) -> Option<&BTreeMap<NodeId, Option<Metric>>> {
        self.relayed.get(&(src, qid)).map(|r| &r.forward_list)
    }

    pub fn discovery(&self, target: NodeId) -> Option<&Discovery> {
        self.discoveries.get(&target)
    }

    pub fn current_reply_wait(&self, p: &Protocol<'_>, target: NodeId) -> Time {
        self.reply_wait
            .get(&target)
            .copied()
            .unwrap_or(p.reply_wait.min)
    }

    pub fn deferred(&self, target: NodeId) -> u32 {
        self.deferred.get(&target).copied().unwrap_or(0)
    }

    /// Records what this node broadcast for `(src, qid)` so later overheard
    /// relays and replies can be matched against it. Keeps an existing record
    /// unless `overwrite` is set.
    pub fn record_relay(&mut self, p: &Protocol<'_>, rreq: &Rreq, precursor: NodeId, overwrite: bool) {
        let key = (rreq.src, rreq.qid);
        if !overwrite && self.relayed.contains_key(&key) {
            return;
        }
        let prefix = rreq
            .metric_list
            .as_deref()
            .and_then(|m| p.prefix(m));
        self.relayed.insert(
            key,
            RelayRecord {
                node_list: rreq.node_list.clone(),
                metric_list: rreq.metric_list.clone(),
                forward_list: BTreeMap::new(),
                prefix,
                precursor,
            },
        );
    }

    fn token(&mut self, target: NodeId, qid: QueryId) -> u64 {
        let t = self.next_token;
        self.next_token += 1;
        self.timers.insert(t, (target, qid));
        t
    }

    /// Starts a discovery for `target`, or defers it while one is under way.
    pub fn initiate_discovery(
        &mut self,
        p: &Protocol<'_>,
        target: NodeId,
        now: Time,
    ) -> Result<Vec<Effect>, SimError> {
        if target == self.id {
            return Err(SimError::InvalidRoute("discovery for self".into()));
        }
        if self.discoveries.contains_key(&target) {
            *self.deferred.entry(target).or_default() += 1;
            return Ok(vec![Effect::Discovery(DiscoveryEvent::Deferred { target })]);
        }
        let reply_wait = self.current_reply_wait(p, target);
        self.start(p, target, now, reply_wait)
    }

    fn start(
        &mut self,
        p: &Protocol<'_>,
        target: NodeId,
        now: Time,
        reply_wait: Time,
    ) -> Result<Vec<Effect>, SimError> {
        let auth = p
            .keys
            .authenticate(self.id, target, &Rreq::auth_fields(self.id, target, self.next_qid))?;
        let qid = self.next_qid;
        self.next_qid += 1;
        let rreq = Rreq {
            src: self.id,
            dst: target,
            qid,
            auth,
            node_list: Vec::new(),
            metric_list: p.augmented().then(Vec::new),
        };
        self.record_relay(p, &rreq, self.id, true);
        self.mark_seen(self.id, qid);
        self.discoveries.insert(
            target,
            Discovery {
                target,
                qid,
                t1: now,
                reply_wait,
                accepted: 0,
            },
        );
        let token = self.token(target, qid);
        Ok(vec![
            Effect::Discovery(DiscoveryEvent::Started {
                target,
                qid,
                reply_wait,
            }),
            Effect::Bcast(Packet::Rreq(rreq)),
            Effect::Timer {
                at: now + reply_wait,
                token,
            },
        ])
    }

    /// ReplyWait expiry: retry on failure, conclude after an acceptance.
    pub fn on_replywait_timeout(
        &mut self,
        p: &Protocol<'_>,
        token: u64,
        now: Time,
    ) -> Result<Vec<Effect>, SimError> {
        let Some((target, qid)) = self.timers.remove(&token) else {
            return Ok(Vec::new());
        };
        let Some(d) = self.discoveries.get(&target).cloned() else {
            return Ok(Vec::new());
        };
        if d.qid != qid {
            return Ok(Vec::new());
        }
        if d.accepted > 0 {
            if now < d.t1 + p.reply_wait.min {
                let token = self.token(target, qid);
                return Ok(vec![Effect::Timer {
                    at: d.t1 + p.reply_wait.min,
                    token,
                }]);
            }
            self.discoveries.remove(&target);
            self.reply_wait.insert(target, p.reply_wait.min);
            let mut out = vec![Effect::Discovery(DiscoveryEvent::Concluded {
                target,
                qid,
                accepted: d.accepted,
            })];
            if let Some(n) = self.deferred.get_mut(&target).filter(|n| **n > 0) {
                *n -= 1;
                out.extend(self.start(p, target, now, p.reply_wait.min)?);
            }
            return Ok(out);
        }
        if now < d.t1 + d.reply_wait {
            return Ok(Vec::new());
        }
        self.discoveries.remove(&target);
        let next = p.reply_wait.after_failure(d.reply_wait);
        self.reply_wait.insert(target, next);
        let mut out = vec![Effect::Discovery(DiscoveryEvent::Failed { target, qid })];
        out.extend(self.start(p, target, now, next)?);
        Ok(out)
    }

    /// ForwardList maintenance: a neighbor `transmitter` heard relaying a
    /// query this node relayed (or originated) with exactly one more entry.
    /// Returns the admitted neighbor, if any.
    pub fn observe_rreq(
        &mut self,
        p: &Protocol<'_>,
        rreq: &Rreq,
        transmitter: NodeId,
    ) -> Option<NodeId> {
        let id = self.id;
        let record = self.relayed.get_mut(&(rreq.src, rreq.qid))?;
        let (last, head) = rreq.node_list.split_last()?;
        if *last != transmitter || head != record.node_list.as_slice() {
            return None;
        }
        let annotation = if p.augmented() {
            let m = rreq.metric_list.as_deref()?.last()?;
            let own = p.measure(id, transmitter)?;
            if !p.consistent(own, *m) {
                return None;
            }
            Some(*m)
        } else {
            None
        };
        record.forward_list.insert(transmitter, annotation);
        Some(transmitter)
    }

    /// Compliance of a RREQ heard from `transmitter`, without side effects.
    pub fn check_rreq(
        &self,
        p: &Protocol<'_>,
        rreq: &Rreq,
        transmitter: NodeId,
    ) -> Result<(), Rejection> {
        if rreq.src == rreq.dst {
            return reject("1.1", Reason::Malformed);
        }
        if self.id == rreq.src {
            return Ok(());
        }
        let at_dst = self.id == rreq.dst;
        let steps = if at_dst {
            ["2.3.1", "2.3.2", "2.3.3", "2.3.4.a"]
        } else {
            ["2.2.1", "2.2.2", "2.2.3", "2.2.4.a"]
        };
        if self.has_seen(rreq.src, rreq.qid) {
            return reject(steps[0], Reason::Seen);
        }
        let precursor = rreq.node_list.last().copied().unwrap_or(rreq.src);
        if precursor != transmitter {
            return reject(steps[1], Reason::PrecursorMismatch);
        }
        let implicit = [rreq.src, rreq.dst, self.id];
        if has_loop(&rreq.node_list, &implicit) {
            return reject(steps[2], Reason::Loop);
        }
        if p.augmented()
            && rreq
                .metric_list
                .as_ref()
                .is_none_or(|m| m.len() != rreq.node_list.len())
        {
            return reject(steps[3], Reason::MetricCount);
        }
        if at_dst {
            let Ok(expected) = p
                .keys
                .authenticate(self.id, rreq.src, &Rreq::auth_fields(rreq.src, rreq.dst, rreq.qid))
            else {
                return reject("2.3.4", Reason::NoKey);
            };
            if expected != rreq.auth {
                return reject("2.3.4", Reason::AuthFail);
            }
        }
        if p.augmented() && p.measure(self.id, transmitter).is_none() {
            return reject(if at_dst { "3" } else { "2.2.4" }, Reason::NoMeasurement);
        }
        Ok(())
    }

    /// Full RREQ processing for a frame broadcast by `transmitter`.
    pub fn process_rreq(&mut self, p: &Protocol<'_>, rreq: &Rreq, transmitter: NodeId) -> Decision {
        self.handle_rreq(p, rreq, transmitter).1
    }

    /// [`Self::process_rreq`], also reporting a ForwardList admission.
    pub fn handle_rreq(
        &mut self,
        p: &Protocol<'_>,
        rreq: &Rreq,
        transmitter: NodeId,
    ) -> (Option<NodeId>, Decision) {
        let admitted = self.observe_rreq(p, rreq, transmitter);
        let d = if self.id == rreq.src {
            Decision::Observe
        } else if self.id == rreq.dst {
            self.process_rreq_destination(p, rreq, transmitter)
        } else {
            self.process_rreq_intermediate(p, rreq, transmitter)
        };
        (admitted, d)
    }

    pub fn process_rreq_intermediate(
        &mut self,
        p: &Protocol<'_>,
        rreq: &Rreq,
        precursor: NodeId,
    ) -> Decision {
        if let Err(r) = self.check_rreq(p, rreq, precursor) {
            return Decision::Discard(r);
        }
        self.mark_seen(rreq.src, rreq.qid);
        let mut out = rreq.clone();
        out.node_list.push(self.id);
        if p.augmented() {
            // checked above
            let m = p.measure(self.id, precursor).unwrap_or(Metric::ZERO);
            if let Some(list) = out.metric_list.as_mut() {
                list.push(m);
            }
        }
        self.record_relay(p, &out, precursor, true);
        Decision::Relay(out)
    }

    pub fn process_rreq_destination(
        &mut self,
        p: &Protocol<'_>,
        rreq: &Rreq,
        precursor: NodeId,
    ) -> Decision {
        if let Err(r) = self.check_rreq(p, rreq, precursor) {
            return Decision::Discard(r);
        }
        self.mark_seen(rreq.src, rreq.qid);
        let route: Vec<NodeId> = rreq.node_list.iter().rev().copied().collect();
        let metric_list = if p.augmented() {
            let mut ms = rreq.metric_list.clone().unwrap_or_default();
            ms.push(p.measure(self.id, precursor).unwrap_or(Metric::ZERO));
            ms.reverse();
            Some(ms)
        } else {
            None
        };
        let auth = p
            .keys
            .authenticate(
                self.id,
                rreq.src,
                &Rrep::auth_fields(rreq.src, rreq.dst, rreq.qid, &route, metric_list.as_deref()),
            )
            .unwrap_or(Authenticator(0));
        let to = route.first().copied().unwrap_or(rreq.src);
        Decision::Reply {
            rrep: Rrep {
                src: rreq.src,
                dst: rreq.dst,
                qid: rreq.qid,
                route,
                metric_list,
                auth,
            },
            to,
        }
    }

    /// Compliance of a RREP forwarded by `forwarder`, without side effects.
    /// Returns the next hop for intermediate nodes, `None` at S.
    pub fn check_rrep(
        &self,
        p: &Protocol<'_>,
        rrep: &Rrep,
        forwarder: NodeId,
    ) -> Result<Option<NodeId>, Rejection> {
        let at_src = self.id == rrep.src;
        let (position, qid) = if at_src {
            match self.discoveries.get(&rrep.dst) {
                Some(d) => (None, d.qid),
                None => return reject("5.2", Reason::Stale),
            }
        } else {
            match rrep.route.iter().position(|n| *n == self.id) {
                Some(i) => (Some(i), rrep.qid),
                None => return reject("4.1", Reason::NotOnRoute),
            }
        };
        let successor = match position {
            Some(0) => rrep.dst,
            Some(i) => rrep.route[i - 1],
            None => rrep.route.last().copied().unwrap_or(rrep.dst),
        };
        if successor != forwarder {
            return reject("4.1", Reason::SuccessorMismatch);
        }
        if successor != rrep.dst {
            let admitted = self
                .forward_list(rrep.src, qid)
                .is_some_and(|fl| fl.contains_key(&successor));
            if !admitted {
                return reject("4.2", Reason::NotForwarded);
            }
        }
        if p.augmented() {
            let Some(ms) = rrep
                .metric_list
                .as_deref()
                .filter(|m| m.len() == rrep.route.len() + 1)
            else {
                return reject("4.2.1", Reason::Malformed);
            };
            if successor == rrep.dst {
                let ok = p
                    .measure(self.id, rrep.dst)
                    .is_some_and(|own| p.consistent(own, ms[0]));
                if !ok {
                    return reject("4.2.1", Reason::EdgeMetric);
                }
            }
            if let Some(i) = position {
                // links S..V_k are the last k entries of the reversed list
                let k = rrep.route.len() - i;
                let reported = p.prefix(&ms[ms.len() - k..]);
                let stored = self.relay_record(rrep.src, qid).and_then(|r| r.prefix);
                if reported.is_none() || reported != stored {
                    return reject("4.2.2", Reason::PrefixMetric);
                }
            }
        }
        if has_loop(&rrep.route, &[rrep.src, rrep.dst]) {
            return reject("4.3", Reason::Loop);
        }
        match position {
            Some(i) => Ok(Some(rrep.route.get(i + 1).copied().unwrap_or(rrep.src))),
            None => {
                let fields =
                    Rrep::auth_fields(rrep.src, rrep.dst, qid, &rrep.route, rrep.metric_list.as_deref());
                match p.keys.authenticate(self.id, rrep.dst, &fields) {
                    Ok(a) if a == rrep.auth => Ok(None),
                    Ok(_) => reject("4.5", Reason::AuthFail),
                    Err(_) => reject("4.5", Reason::NoKey),
                }
            }
        }
    }

    pub fn process_rrep(
        &mut self,
        p: &Protocol<'_>,
        rrep: &Rrep,
        forwarder: NodeId,
        now: Time,
    ) -> Decision {
        match self.check_rrep(p, rrep, forwarder) {
            Err(r) => Decision::Discard(r),
            Ok(Some(to)) => Decision::Forward {
                rrep: rrep.clone(),
                to,
            },
            Ok(None) => {
                let Some(d) = self.discoveries.get_mut(&rrep.dst) else {
                    return Decision::Discard(Rejection {
                        step: "5.2",
                        reason: Reason::Stale,
                    });
                };
                d.accepted += 1;
                let first = d.accepted == 1;
                let (t1, qid) = (d.t1, d.qid);
                let record = RouteRecord {
                    src: rrep.src,
                    dst: rrep.dst,
                    qid,
                    route: rrep.full_route(),
                    t1,
                    t2: now,
                    metrics: rrep
                        .metric_list
                        .as_ref()
                        .map(|m| m.iter().rev().copied().collect()),
                };
                let conclude_at = first.then(|| {
                    let at = now.max(t1 + p.reply_wait.min);
                    (at, self.token(rrep.dst, qid))
                });
                Decision::Accept {
                    record,
                    conclude_at,
                }
            }
        }
    }

    pub fn process(&mut self, p: &Protocol<'_>, packet: &Packet, from: NodeId, now: Time) -> Decision {
        match packet {
            Packet::Rreq(r) => self.process_rreq(p, r, from),
            Packet::Rrep(r) => self.process_rrep(p, r, from, now),
        }
    }

    /// Compliance check for any frame, as the node would judge it.
    pub fn check(&self, p: &Protocol<'_>, packet: &Packet, from: NodeId) -> Result<(), Rejection> {
        match packet {
            Packet::Rreq(r) => self.check_rreq(p, r, from),
            Packet::Rrep(r) => self.check_rrep(p, r, from).map(|_| ()),
        }
    }
}
