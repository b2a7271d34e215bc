//! Runs a scenario: correct nodes and adversaries exchanging frames over the
//! scheduled links, driven by one seeded event queue.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::adversary::{Adversary, AdversaryClass, EmitKind, Trigger};
use crate::error::SimError;
use crate::identity::NodeId;
use crate::qos::LinkMetricModel;
use crate::scenario::{Role, Scenario};
use crate::simcore::{EventKind, EventQueue, LinkLayer, SendOutcome, Time};
use crate::srp::{Decision, Effect, NodeState, Packet, Protocol, RouteRecord};
use crate::trace::{Outcome, Primitive, Trace, TraceEvent};

/// Guard against runaway scripts; correct nodes alone always terminate.
const MAX_EVENTS: usize = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Via {
    Link,
    Tunnel,
}

#[derive(Debug, Clone)]
struct Frame {
    packet: Packet,
    via: Via,
}

#[derive(Debug, Clone)]
enum NodeAct {
    Discover(NodeId),
    Transmit(EmitKind, Packet),
}

enum Slot {
    Correct(NodeState),
    Adversary(Box<Adversary>),
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub seed: u64,
    pub trace: Trace,
    pub accepted: Vec<RouteRecord>,
    pub digest: u64,
}

struct Ctx<'a> {
    sc: &'a Scenario,
    p: Protocol<'a>,
    link: LinkLayer<'a>,
}

struct State {
    slots: BTreeMap<NodeId, Slot>,
    queue: EventQueue<Frame, NodeAct>,
    trace: Trace,
    rng: ChaCha8Rng,
    accepted: Vec<RouteRecord>,
}

/// Simulates `sc` with `seed`. The same pair always yields the same trace.
pub fn run(sc: &Scenario, seed: u64) -> Result<RunOutput, SimError> {
    let model: Option<LinkMetricModel> = sc.metrics.clone().map(|m| m.with_seed(seed));
    let ctx = Ctx {
        sc,
        p: Protocol {
            mode: sc.mode,
            keys: &sc.keys,
            metrics: model.as_ref(),
            reply_wait: sc.reply_wait,
        },
        link: LinkLayer::new(&sc.topology, &sc.config),
    };
    let slots = sc
        .nodes
        .iter()
        .map(|n| {
            let slot = match &n.role {
                Role::Correct => Slot::Correct(NodeState::new(n.id)),
                Role::Adversary { class, script } => {
                    Slot::Adversary(Box::new(Adversary::new(n.id, *class, script.clone())))
                }
            };
            (n.id, slot)
        })
        .collect();
    let mut st = State {
        slots,
        queue: EventQueue::new(),
        trace: Trace::default(),
        rng: ChaCha8Rng::seed_from_u64(seed),
        accepted: Vec::new(),
    };

    let end = sc.config.end_time;
    for s in sc.topology.schedules() {
        for &(from, to) in &s.up {
            st.queue.schedule(from, EventKind::LinkChange { a: s.a, b: s.b, up: true })?;
            if to < end {
                st.queue.schedule(to, EventKind::LinkChange { a: s.a, b: s.b, up: false })?;
            }
        }
    }
    for d in &sc.discoveries {
        st.queue.schedule(
            d.at,
            EventKind::NodeAction {
                node: d.src,
                action: NodeAct::Discover(d.dst),
            },
        )?;
    }

    let mut handled = 0usize;
    while let Some(ev) = st.queue.pop() {
        if ev.time > end {
            break;
        }
        handled += 1;
        if handled > MAX_EVENTS {
            return Err(SimError::InvalidConfig(format!(
                "run exceeded {MAX_EVENTS} events"
            )));
        }
        let now = ev.time;
        match ev.kind {
            EventKind::LinkChange { a, b, up } => st.trace.push(TraceEvent::LinkChange { t: now, a, b, up }),
            EventKind::NodeAction { node, action } => match action {
                NodeAct::Discover(target) => {
                    let effects = match st.slots.get_mut(&node) {
                        Some(Slot::Correct(ns)) => ns.initiate_discovery(&ctx.p, target, now)?,
                        _ => Vec::new(),
                    };
                    apply(&ctx, &mut st, node, effects, now)?;
                }
                NodeAct::Transmit(kind, packet) => transmit(&ctx, &mut st, node, kind, packet, now)?,
            },
            EventKind::TimerFire { node, token } => {
                let effects = match st.slots.get_mut(&node) {
                    Some(Slot::Correct(ns)) => ns.on_replywait_timeout(&ctx.p, token, now)?,
                    _ => Vec::new(),
                };
                apply(&ctx, &mut st, node, effects, now)?;
            }
            EventKind::Deliver {
                to,
                from,
                msg,
                addressed,
            } => deliver(&ctx, &mut st, to, from, msg, addressed, now)?,
        }
    }

    let digest = st.trace.digest();
    Ok(RunOutput {
        seed,
        trace: st.trace,
        accepted: st.accepted,
        digest,
    })
}

fn apply(ctx: &Ctx<'_>, st: &mut State, node: NodeId, effects: Vec<Effect>, now: Time) -> Result<(), SimError> {
    for e in effects {
        match e {
            Effect::Bcast(p) => transmit(ctx, st, node, EmitKind::Bcast, p, now)?,
            Effect::Send(to, p) => transmit(ctx, st, node, EmitKind::Send(to), p, now)?,
            Effect::Timer { at, token } => {
                st.queue.schedule(at, EventKind::TimerFire { node, token })?;
            }
            Effect::Discovery(event) => st.trace.push(TraceEvent::Discovery { t: now, node, event }),
        }
    }
    Ok(())
}

fn schedule_frame(
    st: &mut State,
    at: Time,
    to: NodeId,
    from: NodeId,
    frame: &Frame,
    addressed: bool,
) -> Result<(), SimError> {
    st.queue.schedule(
        at,
        EventKind::Deliver {
            to,
            from,
            msg: frame.clone(),
            addressed,
        },
    )?;
    Ok(())
}

fn transmit(
    ctx: &Ctx<'_>,
    st: &mut State,
    node: NodeId,
    kind: EmitKind,
    packet: Packet,
    now: Time,
) -> Result<(), SimError> {
    let digest = packet.digest();
    let frame = Frame {
        packet: packet.clone(),
        via: Via::Link,
    };
    let (prim, to, outcome) = match kind {
        EmitKind::Bcast => {
            for d in ctx.link.bcast_l(node, now, &mut st.rng) {
                schedule_frame(st, d.at, d.to, node, &frame, true)?;
            }
            (Primitive::BcastL, None, Outcome::Transmitted)
        }
        EmitKind::Send(to) => {
            let (outcome, overheard) = match ctx.link.send_l(node, to, now, &mut st.rng)? {
                SendOutcome::Delivered { delivery, overheard } => {
                    schedule_frame(st, delivery.at, delivery.to, node, &frame, true)?;
                    (Outcome::Delivered, overheard)
                }
                SendOutcome::Failed { overheard } => (Outcome::FailureReported, overheard),
            };
            for d in overheard {
                schedule_frame(st, d.at, d.to, node, &frame, false)?;
            }
            (Primitive::SendL, Some(to), outcome)
        }
        EmitKind::Tunnel(peer) => {
            let outcome = match ctx.sc.tunnel_path(node, peer) {
                None => Outcome::Dropped,
                Some(path) => {
                    let mut t = now;
                    let mut ok = true;
                    for w in path.windows(2) {
                        if !ctx.sc.topology.up_throughout(w[0], w[1], t, t + ctx.sc.config.tx_time) {
                            ok = false;
                            break;
                        }
                        t += ctx.link.draw_delay(&mut st.rng);
                    }
                    if ok {
                        let tunneled = Frame {
                            packet: packet.clone(),
                            via: Via::Tunnel,
                        };
                        schedule_frame(st, t, peer, node, &tunneled, true)?;
                        Outcome::Delivered
                    } else {
                        Outcome::Dropped
                    }
                }
            };
            (Primitive::Tunnel, Some(peer), outcome)
        }
    };
    st.trace.push(TraceEvent::Transmit {
        t: now,
        node,
        prim,
        to,
        digest,
        packet,
        outcome,
    });
    Ok(())
}

fn deliver(
    ctx: &Ctx<'_>,
    st: &mut State,
    node: NodeId,
    from: NodeId,
    frame: Frame,
    addressed: bool,
    now: Time,
) -> Result<(), SimError> {
    let digest = frame.packet.digest();
    let prim = match (frame.via, addressed) {
        (Via::Tunnel, _) => Primitive::Tunnel,
        (Via::Link, true) => Primitive::ReceiveL,
        (Via::Link, false) => Primitive::Overheard,
    };
    st.trace.push(TraceEvent::Receive {
        t: now,
        node,
        from,
        prim,
        digest,
    });
    let packet = &frame.packet;
    let Some(slot) = st.slots.get_mut(&node) else {
        return Ok(());
    };
    match slot {
        Slot::Correct(ns) => {
            let (admitted, decision) = match (packet, addressed) {
                (Packet::Rreq(r), true) => {
                    let (adm, d) = ns.handle_rreq(&ctx.p, r, from);
                    (adm, Some(d))
                }
                (Packet::Rreq(r), false) => (ns.observe_rreq(&ctx.p, r, from), None),
                (Packet::Rrep(r), true) => (None, Some(ns.process_rrep(&ctx.p, r, from, now))),
                (Packet::Rrep(_), false) => (None, None),
            };
            if let Some(neighbor) = admitted {
                let metric = ns
                    .forward_list(packet.src(), packet.qid())
                    .and_then(|f| f.get(&neighbor).copied().flatten());
                st.trace.push(TraceEvent::ForwardList {
                    t: now,
                    node,
                    src: packet.src(),
                    qid: packet.qid(),
                    neighbor,
                    metric,
                });
            }
            if let Some(d) = decision {
                decided(ctx, st, node, digest, d, now)?;
            }
        }
        Slot::Adversary(adv) => {
            let trigger = match (frame.via, packet, addressed) {
                (Via::Tunnel, Packet::Rreq(_), _) => Trigger::TunnelRreq,
                (Via::Tunnel, Packet::Rrep(_), _) => Trigger::TunnelRrep,
                (Via::Link, Packet::Rreq(_), true) => Trigger::Rreq,
                (Via::Link, Packet::Rrep(_), true) => Trigger::Rrep,
                (Via::Link, Packet::Rreq(_), false) => Trigger::OverheardRreq,
                (Via::Link, Packet::Rrep(_), false) => Trigger::OverheardRrep,
            };
            let link_delay = ctx.link.draw_delay(&mut st.rng);
            let reaction = adv.react(&ctx.p, trigger, packet, from, now, link_delay);
            for action in reaction.notes {
                st.trace.push(TraceEvent::Adversary { t: now, node, action });
            }
            if let Some(r) = reaction.rejected {
                st.trace.push(TraceEvent::Step {
                    t: now,
                    node,
                    digest,
                    step: format!("{r} discard"),
                });
            }
            if let Some(d) = reaction.decision {
                // emissions from Honest actions already sit in `emits`
                st.trace.push(TraceEvent::Step {
                    t: now,
                    node,
                    digest,
                    step: d.label(),
                });
                if let Decision::Accept { record, .. } = d {
                    record_accept(st, node, record, now);
                }
            }
            for e in reaction.emits {
                if e.delay == 0 {
                    transmit(ctx, st, node, e.kind, e.packet, now)?;
                } else {
                    st.queue.schedule(
                        now + e.delay,
                        EventKind::NodeAction {
                            node,
                            action: NodeAct::Transmit(e.kind, e.packet),
                        },
                    )?;
                }
            }
        }
    }
    Ok(())
}

fn record_accept(st: &mut State, node: NodeId, record: RouteRecord, now: Time) {
    st.trace.push(TraceEvent::Accept {
        t: now,
        node,
        record: record.clone(),
    });
    st.accepted.push(record);
}

fn decided(ctx: &Ctx<'_>, st: &mut State, node: NodeId, digest: u64, d: Decision, now: Time) -> Result<(), SimError> {
    st.trace.push(TraceEvent::Step {
        t: now,
        node,
        digest,
        step: d.label(),
    });
    let effects = d.effects();
    if let Decision::Accept { record, .. } = d {
        record_accept(st, node, record, now);
    }
    apply(ctx, st, node, effects, now)
}

/// Same scenario with every adversary restricted to the independent class;
/// tunnel behaviour is stripped from their scripts.
pub fn demote(sc: &Scenario) -> Scenario {
    let mut out = sc.clone();
    for n in &mut out.nodes {
        if let Role::Adversary { class, script } = &mut n.role {
            *class = AdversaryClass::Independent;
            *script = script.demote();
        }
    }
    out.tunnels.clear();
    out
}
