//! Scripted malicious nodes.
//!
//! An adversary keeps a shadow [`NodeState`] so it can behave honestly when
//! its script says so, and so its compliance with the protocol can be judged
//! with the exact checks correct nodes run. Independent adversaries pass
//! every received frame through that judgement first and silently drop
//! anything that fails it.

mod catalog;
mod fuzz;

pub use catalog::{attack, attack_for, catalog, AttackParams, CatalogEntry};
pub use fuzz::{fuzz_script, FuzzBounds};

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::AttackError;
use crate::identity::{fnv1a, Authenticator, NodeId, QueryId};
use crate::qos::Metric;
use crate::simcore::Time;
use crate::srp::{Decision, NodeState, Packet, Protocol, Rejection, Rrep, Rreq};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdversaryClass {
    Independent,
    Arbitrary,
}

impl fmt::Display for AdversaryClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AdversaryClass::Independent => "independent",
            AdversaryClass::Arbitrary => "arbitrary",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ClassRequirement {
    #[default]
    Any,
    ArbitraryOnly,
}

/// What kind of reception a rule reacts to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    Rreq,
    Rrep,
    OverheardRreq,
    OverheardRrep,
    TunnelRreq,
    TunnelRrep,
}

impl Trigger {
    pub fn is_tunnel(self) -> bool {
        matches!(self, Trigger::TunnelRreq | Trigger::TunnelRrep)
    }

    pub fn is_addressed(self) -> bool {
        matches!(self, Trigger::Rreq | Trigger::Rrep)
    }
}

/// In-place modification of the working copy. List edits apply to the
/// NodeList of a request or the Route of a reply; metric indices may be
/// negative to count from the end.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Edit {
    InsertAfter { after: NodeId, node: NodeId },
    InsertBeforeSelf(NodeId),
    PushNode(NodeId),
    Remove(NodeId),
    Replace { from: NodeId, to: NodeId },
    Duplicate(NodeId),
    DuplicateSelf,
    /// Drop every list entry ahead of this node's own entry.
    DropBeforeSelf,
    SetMetric { index: i32, value: Metric },
    OffsetMetric { index: i32, delta: Metric },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Drop,
    /// Run the correct protocol on the received frame.
    Honest,
    /// Append own identity (and a metric) to a request without any check.
    Append,
    Edit(Edit),
    Bcast,
    /// Unicast along the reply path; broadcast for requests.
    SendNext,
    SendTo(NodeId),
    Tunnel(NodeId),
    Store,
    /// Re-send every stored reply with an older query id.
    Replay,
    /// Fabricate a reply to the request, with `prefix` as invented
    /// nodes between this node and T. The authenticator is a guess.
    ForgeRrep { prefix: Vec<NodeId> },
    /// Delay later transmissions of this reaction by one link delay.
    Wait,
}

impl Action {
    fn is_tunnel(&self) -> bool {
        matches!(self, Action::Tunnel(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    pub on: Trigger,
    /// Only the first frame of each (S, Q) seen on this trigger.
    #[serde(default)]
    pub fresh_only: bool,
    #[serde(default)]
    pub min_qid: QueryId,
    pub actions: Vec<Action>,
}

impl Rule {
    pub fn new(on: Trigger, actions: Vec<Action>) -> Self {
        Rule {
            on,
            fresh_only: false,
            min_qid: 0,
            actions,
        }
    }

    pub fn fresh(mut self) -> Self {
        self.fresh_only = true;
        self
    }

    pub fn from_qid(mut self, q: QueryId) -> Self {
        self.min_qid = q;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackScript {
    pub name: String,
    #[serde(default)]
    pub requirement: ClassRequirement,
    pub rules: Vec<Rule>,
    /// Offset added to every link measurement this node makes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric_bias: Option<Metric>,
}

impl AttackScript {
    pub fn new(name: impl Into<String>, rules: Vec<Rule>) -> Self {
        AttackScript {
            name: name.into(),
            requirement: ClassRequirement::Any,
            rules,
            metric_bias: None,
        }
    }

    pub fn arbitrary_only(mut self) -> Self {
        self.requirement = ClassRequirement::ArbitraryOnly;
        self
    }

    pub fn uses_tunnel(&self) -> bool {
        self.rules
            .iter()
            .any(|r| r.on.is_tunnel() || r.actions.iter().any(Action::is_tunnel))
    }

    pub fn tunnel_peers(&self) -> BTreeSet<NodeId> {
        self.rules
            .iter()
            .flat_map(|r| r.actions.iter())
            .filter_map(|a| match a {
                Action::Tunnel(p) => Some(*p),
                _ => None,
            })
            .collect()
    }

    /// Independent nodes may not run arbitrary-only or tunnelling scripts.
    pub fn validate(&self, class: AdversaryClass) -> Result<(), AttackError> {
        if class == AdversaryClass::Arbitrary {
            return Ok(());
        }
        if self.requirement == ClassRequirement::ArbitraryOnly {
            return Err(AttackError::ClassMismatch {
                name: self.name.clone(),
                what: "run an arbitrary-only script".into(),
            });
        }
        if self.uses_tunnel() {
            return Err(AttackError::ClassMismatch {
                name: self.name.clone(),
                what: "use the tunnel channel".into(),
            });
        }
        Ok(())
    }

    /// The same script with every tunnel rule and action removed, usable by
    /// an independent node.
    pub fn demote(&self) -> AttackScript {
        let rules = self
            .rules
            .iter()
            .filter(|r| !r.on.is_tunnel())
            .map(|r| Rule {
                actions: r.actions.iter().filter(|a| !a.is_tunnel()).cloned().collect(),
                ..r.clone()
            })
            .collect();
        AttackScript {
            name: self.name.clone(),
            requirement: ClassRequirement::Any,
            rules,
            metric_bias: self.metric_bias,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmitKind {
    Bcast,
    Send(NodeId),
    Tunnel(NodeId),
}

/// A transmission requested by an adversary, `delay` after the reaction.
#[derive(Debug, Clone, PartialEq)]
pub struct Emit {
    pub delay: Time,
    pub kind: EmitKind,
    pub packet: Packet,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Reaction {
    pub emits: Vec<Emit>,
    pub notes: Vec<String>,
    /// Outcome of an `Honest` action, if one ran.
    pub decision: Option<Decision>,
    /// The compliance verdict, for independent nodes.
    pub rejected: Option<Rejection>,
}

/// Default transmission budget per adversary and run.
pub const DEFAULT_BUDGET: u32 = 64;

#[derive(Debug, Clone)]
pub struct Adversary {
    pub class: AdversaryClass,
    pub script: AttackScript,
    pub node: NodeState,
    handled: BTreeSet<(Trigger, NodeId, QueryId)>,
    stored: Vec<Rrep>,
    budget: u32,
}

fn insert_at(list: &mut Vec<NodeId>, ms: &mut Option<&mut Vec<Metric>>, i: usize, n: NodeId) {
    list.insert(i, n);
    if let Some(ms) = ms.as_deref_mut() {
        // the metric for the new link is made up
        ms.insert(i.min(ms.len()), Metric::from_f64(1.0));
    }
}

// Metric index i is aligned with list index i: requests keep one metric per
// entry, replies one per link with the link to T first.
fn edit_list(list: &mut Vec<NodeId>, mut ms: Option<&mut Vec<Metric>>, me: NodeId, edit: &Edit) {
    let find = |list: &[NodeId], x: NodeId| list.iter().position(|n| *n == x);
    match edit {
        Edit::InsertAfter { after, node } => {
            if let Some(i) = find(list, *after) {
                insert_at(list, &mut ms, i + 1, *node);
            }
        }
        Edit::InsertBeforeSelf(node) => {
            let i = find(list, me).unwrap_or(list.len());
            insert_at(list, &mut ms, i, *node);
        }
        Edit::PushNode(node) => {
            let i = list.len();
            insert_at(list, &mut ms, i, *node);
        }
        Edit::Duplicate(node) => {
            if let Some(i) = find(list, *node) {
                insert_at(list, &mut ms, i + 1, *node);
            }
        }
        Edit::DuplicateSelf => {
            if let Some(i) = find(list, me) {
                insert_at(list, &mut ms, i + 1, me);
            }
        }
        Edit::Remove(node) => {
            while let Some(i) = find(list, *node) {
                list.remove(i);
                if let Some(ms) = ms.as_deref_mut().filter(|m| i < m.len()) {
                    ms.remove(i);
                }
            }
        }
        Edit::Replace { from, to } => {
            for n in list.iter_mut().filter(|n| **n == *from) {
                *n = *to;
            }
        }
        Edit::DropBeforeSelf => {
            if let Some(i) = find(list, me) {
                list.drain(..i);
                if let Some(ms) = ms {
                    ms.drain(..i.min(ms.len()));
                }
            }
        }
        Edit::SetMetric { index, value } => {
            if let Some(m) = ms.and_then(|ms| metric_at(ms, *index)) {
                *m = *value;
            }
        }
        Edit::OffsetMetric { index, delta } => {
            if let Some(m) = ms.and_then(|ms| metric_at(ms, *index)) {
                *m = m.saturating_add(*delta);
            }
        }
    }
}

fn metric_at(ms: &mut [Metric], index: i32) -> Option<&mut Metric> {
    let i = if index < 0 {
        ms.len().checked_sub(index.unsigned_abs() as usize)?
    } else {
        index as usize
    };
    ms.get_mut(i)
}

/// Next hop of a reply from `me`: toward S along the route.
fn reply_next_hop(rrep: &Rrep, me: NodeId) -> NodeId {
    match rrep.route.iter().position(|n| *n == me) {
        Some(i) => rrep.route.get(i + 1).copied().unwrap_or(rrep.src),
        None => rrep.route.last().copied().unwrap_or(rrep.src),
    }
}

impl Adversary {
    pub fn new(id: NodeId, class: AdversaryClass, script: AttackScript) -> Self {
        Adversary {
            class,
            script,
            node: NodeState::new(id),
            handled: BTreeSet::new(),
            stored: Vec::new(),
            budget: DEFAULT_BUDGET,
        }
    }

    pub fn id(&self) -> NodeId {
        self.node.id
    }

    pub fn with_budget(mut self, budget: u32) -> Self {
        self.budget = budget;
        self
    }

    /// Judges a frame with the correct protocol checks, as an observer.
    pub fn compliance(&self, p: &Protocol<'_>, packet: &Packet, from: NodeId) -> Result<(), Rejection> {
        self.node.check(p, packet, from)
    }

    fn pick_rule(&mut self, trigger: Trigger, packet: &Packet) -> Option<Vec<Action>> {
        let key = (trigger, packet.src(), packet.qid());
        let first = !self.handled.contains(&key);
        self.handled.insert(key);
        self.script
            .rules
            .iter()
            .find(|r| r.on == trigger && (!r.fresh_only || first) && packet.qid() >= r.min_qid)
            .map(|r| r.actions.clone())
    }

    /// Reaction to a received frame. `from` is the link-layer transmitter,
    /// or the tunnel peer for tunnel deliveries.
    pub fn react(
        &mut self,
        p: &Protocol<'_>,
        trigger: Trigger,
        packet: &Packet,
        from: NodeId,
        now: Time,
        link_delay: Time,
    ) -> Reaction {
        let mut out = Reaction::default();
        if let (Packet::Rreq(r), false) = (packet, trigger.is_tunnel()) {
            if let Some(n) = self.node.observe_rreq(p, r, from) {
                out.notes.push(format!("forward-list {n}"));
            }
        }
        if self.class == AdversaryClass::Independent {
            if let Err(r) = self.compliance(p, packet, from) {
                out.rejected = Some(r);
                out.notes.push(format!("non-compliant ({r}), dropped"));
                return out;
            }
        }
        let actions = match self.pick_rule(trigger, packet) {
            Some(a) => a,
            None if trigger.is_addressed() => vec![Action::Honest],
            None => return out,
        };
        let me = self.id();
        let mut cur = packet.clone();
        let mut delay = 0;
        for action in actions {
            match action {
                Action::Drop => {
                    out.notes.push("drop".into());
                    break;
                }
                Action::Honest => {
                    let d = self.node.process(p, packet, from, now);
                    match &d {
                        Decision::Relay(r) => self.emit(&mut out, delay, EmitKind::Bcast, Packet::Rreq(r.clone())),
                        Decision::Reply { rrep, to } | Decision::Forward { rrep, to } => {
                            self.emit(&mut out, delay, EmitKind::Send(*to), Packet::Rrep(rrep.clone()))
                        }
                        _ => {}
                    }
                    out.decision = Some(d);
                }
                Action::Append => {
                    if let Packet::Rreq(r) = &mut cur {
                        let precursor = r.node_list.last().copied().unwrap_or(r.src);
                        r.node_list.push(me);
                        if let Some(ms) = r.metric_list.as_mut() {
                            let m = p.measure(me, precursor).unwrap_or(Metric::from_f64(1.0));
                            ms.push(m);
                        }
                    }
                }
                Action::Edit(e) => {
                    match &mut cur {
                        Packet::Rreq(r) => edit_list(&mut r.node_list, r.metric_list.as_mut(), me, &e),
                        Packet::Rrep(r) => edit_list(&mut r.route, r.metric_list.as_mut(), me, &e),
                    }
                    out.notes.push(format!("edit {e:?}"));
                }
                Action::Bcast => {
                    if let Packet::Rreq(r) = &cur {
                        if r.node_list.last() == Some(&me) {
                            let precursor = r.node_list.iter().rev().nth(1).copied().unwrap_or(r.src);
                            self.node.record_relay(p, r, precursor, false);
                        }
                    }
                    self.emit(&mut out, delay, EmitKind::Bcast, cur.clone());
                }
                Action::SendNext => match &cur {
                    Packet::Rreq(_) => self.emit(&mut out, delay, EmitKind::Bcast, cur.clone()),
                    Packet::Rrep(r) => {
                        let to = reply_next_hop(r, me);
                        if to != me {
                            self.emit(&mut out, delay, EmitKind::Send(to), cur.clone());
                        }
                    }
                },
                Action::SendTo(to) => {
                    if to != me {
                        self.emit(&mut out, delay, EmitKind::Send(to), cur.clone());
                    }
                }
                Action::Tunnel(peer) => {
                    if peer != me {
                        self.emit(&mut out, delay, EmitKind::Tunnel(peer), cur.clone());
                    }
                }
                Action::Store => {
                    if let Packet::Rrep(r) = &cur {
                        if !self.stored.contains(r) {
                            self.stored.push(r.clone());
                        }
                    }
                }
                Action::Replay => {
                    let (src, qid) = (packet.src(), packet.qid());
                    let old: Vec<Rrep> = self
                        .stored
                        .iter()
                        .filter(|r| r.src == src && r.qid < qid)
                        .cloned()
                        .collect();
                    for r in old {
                        let to = reply_next_hop(&r, me);
                        out.notes.push(format!("replay Q={}", r.qid));
                        self.emit(&mut out, delay, EmitKind::Send(to), Packet::Rrep(r));
                    }
                }
                Action::ForgeRrep { prefix } => {
                    if let Packet::Rreq(r) = &cur {
                        cur = Packet::Rrep(forge(r, me, &prefix));
                        out.notes.push("forged reply".into());
                    }
                }
                Action::Wait => delay += link_delay,
            }
        }
        out
    }

    fn emit(&mut self, out: &mut Reaction, delay: Time, kind: EmitKind, packet: Packet) {
        if let EmitKind::Send(to) | EmitKind::Tunnel(to) = kind {
            if to == self.id() {
                out.notes.push("self-addressed frame dropped".into());
                return;
            }
        }
        if self.budget == 0 {
            out.notes.push("budget exhausted".into());
            return;
        }
        self.budget -= 1;
        out.emits.push(Emit { delay, kind, packet });
    }
}

/// A reply for `rreq` claiming the route `prefix, me, reversed NodeList`.
/// Without K(S,T) the authenticator can only be guessed.
fn forge(rreq: &Rreq, me: NodeId, prefix: &[NodeId]) -> Rrep {
    let mut route: Vec<NodeId> = prefix.to_vec();
    if !route.contains(&me) {
        route.push(me);
    }
    route.extend(rreq.node_list.iter().rev().filter(|n| **n != me));
    let metric_list = rreq
        .metric_list
        .as_ref()
        .map(|_| vec![Metric::from_f64(1.0); route.len() + 1]);
    let guess = fnv1a(&[me.0.to_be_bytes(), (rreq.qid as u32).to_be_bytes()].concat());
    Rrep {
        src: rreq.src,
        dst: rreq.dst,
        qid: rreq.qid,
        route,
        metric_list,
        auth: Authenticator(guess),
    }
}
