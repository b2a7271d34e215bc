//! One check per numbered processing step, each on the smallest frame that
//! trips it. Discards must carry the step label. Shared by the conformance
//! and acceptance targets.

use srpsim::identity::Authenticator;
use srpsim::srp::{Decision, Effect, Mode, NodeState, Protocol, Reason, Rejection, ReplyWaitPolicy, Rrep, Rreq};
use srpsim::{GKind, KeyRing, LinkMetricModel, Metric, NodeId};

const S: NodeId = NodeId(1);
const A: NodeId = NodeId(2);
const B: NodeId = NodeId(3);
const T: NodeId = NodeId(4);
const X: NodeId = NodeId(9);

fn keys() -> KeyRing {
    let mut k = KeyRing::new();
    k.share(S, T);
    k
}

fn metrics() -> LinkMetricModel {
    let mut m = LinkMetricModel::new(GKind::Add, 0.5, 0.0);
    m.set_actual(S, A, Metric::from_f64(1.0));
    m.set_actual(A, B, Metric::from_f64(2.0));
    m.set_actual(B, T, Metric::from_f64(3.0));
    m.set_actual(S, T, Metric::from_f64(4.0));
    m
}

fn proto<'a>(keys: &'a KeyRing, metrics: Option<&'a LinkMetricModel>) -> Protocol<'a> {
    Protocol {
        mode: if metrics.is_some() { Mode::Augmented } else { Mode::Basic },
        keys,
        metrics,
        reply_wait: ReplyWaitPolicy { min: 10, max: 40 },
    }
}

fn start(p: &Protocol<'_>, s: &mut NodeState) -> Rreq {
    s.initiate_discovery(p, T, 0)
        .unwrap()
        .into_iter()
        .find_map(|e| match e {
            Effect::Bcast(srpsim::srp::Packet::Rreq(r)) => Some(r),
            _ => None,
        })
        .unwrap()
}

fn relayed(d: Decision) -> Rreq {
    match d {
        Decision::Relay(r) => r,
        other => panic!("expected relay, got {other:?}"),
    }
}

fn discarded(d: Decision) -> Rejection {
    match d {
        Decision::Discard(r) => r,
        other => panic!("expected discard, got {other:?}"),
    }
}

fn reply(d: Decision) -> (Rrep, NodeId) {
    match d {
        Decision::Reply { rrep, to } => (rrep, to),
        other => panic!("expected reply, got {other:?}"),
    }
}

struct Line {
    s: NodeState,
    a: NodeState,
    b: NodeState,
    t: NodeState,
    q: [Rreq; 3],
}

/// S-A-B-T up to the point where T holds the request, nothing observed yet.
fn line(p: &Protocol<'_>) -> Line {
    let mut s = NodeState::new(S);
    let mut a = NodeState::new(A);
    let mut b = NodeState::new(B);
    let q0 = start(p, &mut s);
    let q1 = relayed(a.process_rreq(p, &q0, S));
    let q2 = relayed(b.process_rreq(p, &q1, A));
    Line {
        s,
        a,
        b,
        t: NodeState::new(T),
        q: [q0, q1, q2],
    }
}

/// Same line with every ForwardList filled and T's reply in hand.
fn replied(p: &Protocol<'_>) -> (Line, Rrep) {
    let mut l = line(p);
    l.s.observe_rreq(p, &l.q[1], A);
    l.a.observe_rreq(p, &l.q[2], B);
    let (rrep, to) = reply(l.t.process_rreq(p, &l.q[2], B));
    assert_eq!(to, B);
    (l, rrep)
}

fn assert_step(r: Rejection, step: &str, reason: Reason) {
    assert_eq!((r.step, r.reason), (step, reason));
}

pub fn step_2_2_1_second_copy_is_discarded() {
    let k = keys();
    let p = proto(&k, None);
    let mut l = line(&p);
    assert_step(discarded(l.a.process_rreq(&p, &l.q[0], S)), "2.2.1", Reason::Seen);
}

pub fn step_2_2_2_precursor_must_be_last_entry_or_source() {
    let k = keys();
    let p = proto(&k, None);
    let mut s = NodeState::new(S);
    let mut a = NodeState::new(A);
    let q0 = start(&p, &mut s);
    // empty list: only S may have sent it
    assert_step(discarded(a.process_rreq(&p, &q0, X)), "2.2.2", Reason::PrecursorMismatch);
    let mut q = q0.clone();
    q.node_list = vec![X];
    assert_step(discarded(a.process_rreq(&p, &q, B)), "2.2.2", Reason::PrecursorMismatch);
    // a rejected copy does not mark the query as seen
    assert!(matches!(a.process_rreq(&p, &q0, S), Decision::Relay(_)));
}

pub fn step_2_2_3_repeated_entry_is_discarded() {
    let k = keys();
    let p = proto(&k, None);
    let mut s = NodeState::new(S);
    let q0 = start(&p, &mut s);
    let mut q = q0.clone();
    q.node_list = vec![X, A, X];
    assert_step(discarded(NodeState::new(B).process_rreq(&p, &q, X)), "2.2.3", Reason::Loop);
    q.node_list = vec![B, X];
    assert_step(discarded(NodeState::new(B).process_rreq(&p, &q, X)), "2.2.3", Reason::Loop);
    q.node_list = vec![S];
    assert_step(discarded(NodeState::new(B).process_rreq(&p, &q, S)), "2.2.3", Reason::Loop);
}

pub fn step_2_2_4_relay_appends_own_identity() {
    let k = keys();
    let m = metrics();
    let p = proto(&k, Some(&m));
    let l = line(&p);
    assert_eq!(l.q[1].node_list, vec![A]);
    assert_eq!(l.q[2].node_list, vec![A, B]);
    let ms: Vec<f64> = l.q[2].metric_list.as_ref().unwrap().iter().map(|m| m.to_f64()).collect();
    assert_eq!(ms, vec![1.0, 2.0]);
    assert_eq!((l.q[2].qid, l.q[2].auth), (l.q[0].qid, l.q[0].auth));
}

pub fn step_2_2_4_a_metric_count_must_match() {
    let k = keys();
    let m = metrics();
    let p = proto(&k, Some(&m));
    let l = line(&p);
    let mut q = l.q[1].clone();
    q.metric_list.as_mut().unwrap().push(Metric::from_f64(1.0));
    assert_step(discarded(NodeState::new(B).process_rreq(&p, &q, A)), "2.2.4.a", Reason::MetricCount);
    q.metric_list = None;
    assert_step(discarded(NodeState::new(B).process_rreq(&p, &q, A)), "2.2.4.a", Reason::MetricCount);
}

pub fn step_2_2_5_forward_list_admits_exact_extensions_only() {
    let k = keys();
    let p = proto(&k, None);
    let mut l = line(&p);
    let qid = l.q[0].qid;
    let mut other = l.q[2].clone();
    other.node_list = vec![X, B];
    assert_eq!(l.a.observe_rreq(&p, &other, B), None);
    assert_eq!(l.a.observe_rreq(&p, &l.q[2], X), None);
    assert_eq!(l.a.observe_rreq(&p, &l.q[2], B), Some(B));
    assert_eq!(l.a.forward_list(S, qid).unwrap().keys().copied().collect::<Vec<_>>(), vec![B]);
}

pub fn step_2_2_5_augmented_admission_needs_consistent_metric() {
    let k = keys();
    let m = metrics();
    let p = proto(&k, Some(&m));
    let mut l = line(&p);
    let qid = l.q[0].qid;
    // A measures A-B as 2.0; a claim off by exactly ε is refused
    let mut off = l.q[2].clone();
    off.metric_list.as_mut().unwrap()[1] = Metric::from_f64(2.5);
    assert_eq!(l.a.observe_rreq(&p, &off, B), None);
    assert!(l.a.forward_list(S, qid).unwrap().is_empty());
    let mut near = l.q[2].clone();
    near.metric_list.as_mut().unwrap()[1] = Metric::from_f64(2.25);
    assert_eq!(l.a.observe_rreq(&p, &near, B), Some(B));
    assert_eq!(l.a.forward_list(S, qid).unwrap()[&B], Some(Metric::from_f64(2.25)));
}

pub fn step_2_3_1_target_answers_first_copy_only() {
    let k = keys();
    let p = proto(&k, None);
    let mut l = line(&p);
    reply(l.t.process_rreq(&p, &l.q[2], B));
    assert_step(discarded(l.t.process_rreq(&p, &l.q[2], B)), "2.3.1", Reason::Seen);
}

pub fn step_2_3_2_target_checks_precursor() {
    let k = keys();
    let p = proto(&k, None);
    let mut l = line(&p);
    assert_step(discarded(l.t.process_rreq(&p, &l.q[2], A)), "2.3.2", Reason::PrecursorMismatch);
}

pub fn step_2_3_3_target_rejects_loops() {
    let k = keys();
    let p = proto(&k, None);
    let mut l = line(&p);
    let mut q = l.q[2].clone();
    q.node_list = vec![T, B];
    assert_step(discarded(l.t.process_rreq(&p, &q, B)), "2.3.3", Reason::Loop);
    q.node_list = vec![B, A, B];
    assert_step(discarded(l.t.process_rreq(&p, &q, B)), "2.3.3", Reason::Loop);
}

pub fn step_2_3_4_target_authenticates_request() {
    let k = keys();
    let p = proto(&k, None);
    let mut l = line(&p);
    let mut q = l.q[2].clone();
    q.auth = Authenticator(q.auth.0 ^ 1);
    assert_step(discarded(l.t.process_rreq(&p, &q, B)), "2.3.4", Reason::AuthFail);
    let none = KeyRing::new();
    let p2 = proto(&none, None);
    assert_step(discarded(NodeState::new(T).process_rreq(&p2, &l.q[2], B)), "2.3.4", Reason::NoKey);
}

pub fn step_2_3_4_a_target_checks_metric_count() {
    let k = keys();
    let m = metrics();
    let p = proto(&k, Some(&m));
    let mut l = line(&p);
    let mut q = l.q[2].clone();
    q.metric_list.as_mut().unwrap().pop();
    assert_step(discarded(l.t.process_rreq(&p, &q, B)), "2.3.4.a", Reason::MetricCount);
}

pub fn step_2_3_single_hop_reply_goes_straight_to_source() {
    let k = keys();
    let m = metrics();
    let p = proto(&k, Some(&m));
    let mut s = NodeState::new(S);
    let q0 = start(&p, &mut s);
    let (rrep, to) = reply(NodeState::new(T).process_rreq(&p, &q0, S));
    assert_eq!(to, S);
    assert!(rrep.route.is_empty());
    assert_eq!(rrep.metric_list, Some(vec![Metric::from_f64(4.0)]));
    assert!(matches!(s.process_rrep(&p, &rrep, T, 3), Decision::Accept { .. }));
}

pub fn step_4_1_reply_must_come_from_successor() {
    let k = keys();
    let p = proto(&k, None);
    let (mut l, rrep) = replied(&p);
    assert_step(discarded(l.a.process_rrep(&p, &rrep, T, 5)), "4.1", Reason::SuccessorMismatch);
    assert_step(discarded(l.b.process_rrep(&p, &rrep, A, 5)), "4.1", Reason::SuccessorMismatch);
    assert_step(discarded(l.s.process_rrep(&p, &rrep, B, 5)), "4.1", Reason::SuccessorMismatch);
}

pub fn step_4_2_successor_must_have_forwarded_the_request() {
    let k = keys();
    let p = proto(&k, None);
    let mut l = line(&p);
    let (rrep, _) = reply(l.t.process_rreq(&p, &l.q[2], B));
    // A never overheard B relay the request
    assert_step(discarded(l.a.process_rrep(&p, &rrep, B, 5)), "4.2", Reason::NotForwarded);
    assert_step(discarded(l.s.process_rrep(&p, &rrep, A, 5)), "4.2", Reason::NotForwarded);
}

pub fn step_4_2_1_edge_metric_next_to_target() {
    let k = keys();
    let m = metrics();
    let p = proto(&k, Some(&m));
    let (mut l, rrep) = replied(&p);
    let mut r = rrep.clone();
    r.metric_list.as_mut().unwrap()[0] = Metric::from_f64(3.5);
    assert_step(discarded(l.b.process_rrep(&p, &r, T, 5)), "4.2.1", Reason::EdgeMetric);
    r.metric_list.as_mut().unwrap().pop();
    assert_step(discarded(l.b.process_rrep(&p, &r, T, 5)), "4.2.1", Reason::Malformed);
}

pub fn step_4_2_2_prefix_must_match_exactly() {
    let k = keys();
    let m = metrics();
    let p = proto(&k, Some(&m));
    let (mut l, rrep) = replied(&p);
    let mut r = rrep.clone();
    // one fixed-point unit off on the S-A link
    let last = r.metric_list.as_ref().unwrap().len() - 1;
    let shifted = Metric::from_f64(1.0 + 1e-6);
    assert_ne!(shifted, Metric::from_f64(1.0));
    r.metric_list.as_mut().unwrap()[last] = shifted;
    assert_step(discarded(l.a.process_rrep(&p, &r, B, 5)), "4.2.2", Reason::PrefixMetric);
    assert_step(discarded(l.b.process_rrep(&p, &r, T, 5)), "4.2.2", Reason::PrefixMetric);
}

pub fn step_4_3_route_loops_are_discarded() {
    let k = keys();
    let p = proto(&k, None);
    let (mut l, rrep) = replied(&p);
    let mut r = rrep.clone();
    r.route = vec![B, A, B];
    assert_step(discarded(l.b.process_rrep(&p, &r, T, 5)), "4.3", Reason::Loop);
    r.route = vec![B, S, A];
    assert_step(discarded(l.b.process_rrep(&p, &r, T, 5)), "4.3", Reason::Loop);
}

pub fn step_4_4_reply_is_forwarded_to_the_predecessor() {
    let k = keys();
    let p = proto(&k, None);
    let (mut l, rrep) = replied(&p);
    assert!(matches!(l.b.process_rrep(&p, &rrep, T, 5), Decision::Forward { to: A, .. }));
    assert!(matches!(l.a.process_rrep(&p, &rrep, B, 6), Decision::Forward { to: S, .. }));
}

pub fn step_4_5_source_authenticates_reply() {
    let k = keys();
    let p = proto(&k, None);
    let (mut l, rrep) = replied(&p);
    let mut r = rrep.clone();
    r.auth = Authenticator(r.auth.0 ^ 1);
    assert_step(discarded(l.s.process_rrep(&p, &r, A, 7)), "4.5", Reason::AuthFail);
    match l.s.process_rrep(&p, &rrep, A, 7) {
        Decision::Accept { record, .. } => assert_eq!(record.route, vec![S, A, B, T]),
        other => panic!("{other:?}"),
    }
}

/// Step label and check, in protocol order.
pub const STEPS: &[(&str, fn())] = &[
    ("2.2.1", step_2_2_1_second_copy_is_discarded),
    ("2.2.2", step_2_2_2_precursor_must_be_last_entry_or_source),
    ("2.2.3", step_2_2_3_repeated_entry_is_discarded),
    ("2.2.4", step_2_2_4_relay_appends_own_identity),
    ("2.2.4.a", step_2_2_4_a_metric_count_must_match),
    ("2.2.5", step_2_2_5_forward_list_admits_exact_extensions_only),
    ("2.2.5", step_2_2_5_augmented_admission_needs_consistent_metric),
    ("2.3.1", step_2_3_1_target_answers_first_copy_only),
    ("2.3.2", step_2_3_2_target_checks_precursor),
    ("2.3.3", step_2_3_3_target_rejects_loops),
    ("2.3.4", step_2_3_4_target_authenticates_request),
    ("2.3.4.a", step_2_3_4_a_target_checks_metric_count),
    ("2.3", step_2_3_single_hop_reply_goes_straight_to_source),
    ("4.1", step_4_1_reply_must_come_from_successor),
    ("4.2", step_4_2_successor_must_have_forwarded_the_request),
    ("4.2.1", step_4_2_1_edge_metric_next_to_target),
    ("4.2.2", step_4_2_2_prefix_must_match_exactly),
    ("4.3", step_4_3_route_loops_are_discarded),
    ("4.4", step_4_4_reply_is_forwarded_to_the_predecessor),
    ("4.5", step_4_5_source_authenticates_reply),
];
