//! Ground-truth checks for accepted routes. Everything here is a pure
//! function of the route, its discovery interval and the link schedules.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::identity::{NodeId, QueryId};
use crate::qos::{delta_good, metric_error, LinkMetricModel, Metric};
use crate::simcore::{Time, Topology};
use crate::srp::RouteRecord;
use crate::trace::Trace;

pub const ENDPOINTS_FAULTY: &str = "endpoints-faulty";
pub const NOT_EVALUABLE: &str = "accuracy-not-evaluable";

/// Weak-freshness witness: route links before index `j` and from index `k`
/// on are fresh, and `detour` connects V_j to V_k over fresh links.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeakWitness {
    pub j: usize,
    pub k: usize,
    pub detour: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub route_id: usize,
    pub src: NodeId,
    pub dst: NodeId,
    pub qid: QueryId,
    pub route: Vec<NodeId>,
    pub t1: Time,
    pub t2: Time,
    pub loop_free: bool,
    pub fresh: bool,
    /// Route links never up during (t1, t2).
    pub stale_links: Vec<(NodeId, NodeId)>,
    pub weakly_fresh: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<WeakWitness>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accurate: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_good: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tags: Vec<String>,
}

impl Verdict {
    pub fn endpoints_faulty(&self) -> bool {
        self.tags.iter().any(|t| t == ENDPOINTS_FAULTY)
    }

    pub fn contains_link(&self, a: NodeId, b: NodeId) -> bool {
        self.route
            .windows(2)
            .any(|w| (w[0], w[1]) == (a, b) || (w[0], w[1]) == (b, a))
    }
}

pub fn check_loop_free(route: &[NodeId]) -> bool {
    let mut seen = BTreeSet::new();
    route.iter().all(|n| seen.insert(*n))
}

fn check_interval(t1: Time, t2: Time) -> Result<(), SimError> {
    if t1 >= t2 {
        return Err(SimError::InvalidRoute(format!("empty discovery interval ({t1}, {t2})")));
    }
    Ok(())
}

/// Every route link up at some instant of the open interval `(t1, t2)`.
/// Returns the failing links.
pub fn check_fresh(
    route: &[NodeId],
    topology: &Topology,
    t1: Time,
    t2: Time,
) -> Result<(bool, Vec<(NodeId, NodeId)>), SimError> {
    check_interval(t1, t2)?;
    let stale: Vec<_> = route
        .windows(2)
        .filter(|w| !topology.up_within(w[0], w[1], t1, t2))
        .map(|w| (w[0], w[1]))
        .collect();
    Ok((stale.is_empty(), stale))
}

/// Adjacency of all links up at some instant of `(t1, t2)`.
pub fn fresh_graph(topology: &Topology, t1: Time, t2: Time) -> BTreeMap<NodeId, Vec<NodeId>> {
    let mut g: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    for s in topology.schedules() {
        if s.up_within(t1, t2) {
            g.entry(s.a).or_default().push(s.b);
            g.entry(s.b).or_default().push(s.a);
        }
    }
    for adj in g.values_mut() {
        adj.sort();
    }
    g
}

fn bfs(g: &BTreeMap<NodeId, Vec<NodeId>>, from: NodeId, to: NodeId) -> Option<Vec<NodeId>> {
    let mut prev: BTreeMap<NodeId, NodeId> = BTreeMap::new();
    let mut queue = VecDeque::from([from]);
    let mut seen = BTreeSet::from([from]);
    while let Some(u) = queue.pop_front() {
        if u == to {
            let mut path = vec![to];
            let mut cur = to;
            while let Some(p) = prev.get(&cur) {
                path.push(*p);
                cur = *p;
            }
            path.reverse();
            return Some(path);
        }
        for &v in g.get(&u).map(Vec::as_slice).unwrap_or(&[]) {
            if seen.insert(v) {
                prev.insert(v, u);
                queue.push_back(v);
            }
        }
    }
    None
}

/// Fresh, or fresh except for one contiguous segment V_j..V_k
/// (1 <= j < k <= n-1) whose endpoints are joined by fresh links.
pub fn check_weakly_fresh(
    route: &[NodeId],
    topology: &Topology,
    t1: Time,
    t2: Time,
) -> Result<(bool, Option<WeakWitness>), SimError> {
    let (fresh, _) = check_fresh(route, topology, t1, t2)?;
    let n = route.len().saturating_sub(1);
    if fresh {
        return Ok((
            true,
            Some(WeakWitness {
                j: 0,
                k: n,
                detour: route.to_vec(),
            }),
        ));
    }
    let link_ok: Vec<bool> = route
        .windows(2)
        .map(|w| topology.up_within(w[0], w[1], t1, t2))
        .collect();
    // prefix_ok[j]: links 0..j all fresh; suffix_ok[k]: links k..n all fresh
    let mut prefix_ok = vec![true; n + 1];
    for i in 0..n {
        prefix_ok[i + 1] = prefix_ok[i] && link_ok[i];
    }
    let mut suffix_ok = vec![true; n + 1];
    for i in (0..n).rev() {
        suffix_ok[i] = suffix_ok[i + 1] && link_ok[i];
    }
    let g = fresh_graph(topology, t1, t2);
    // narrowest replaced segment first
    for width in 1..n.saturating_sub(1) {
        for j in 1..n - width {
            let k = j + width;
            if !prefix_ok[j] || !suffix_ok[k] {
                continue;
            }
            if let Some(detour) = bfs(&g, route[j], route[k]) {
                return Ok((true, Some(WeakWitness { j, k, detour })));
            }
        }
    }
    Ok((false, None))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Accuracy {
    /// `None` when some route link has no declared actual metric.
    pub accurate: Option<bool>,
    pub metric_error: Option<f64>,
    pub delta_good: f64,
}

/// Reported route metric against the ground truth. A zero tolerance
/// (ε = δ̃ = 0) demands an exact match.
pub fn check_accuracy(
    route: &[NodeId],
    reported: &[Metric],
    model: &LinkMetricModel,
) -> Result<Accuracy, SimError> {
    let n = route.len().saturating_sub(1);
    if reported.len() != n {
        return Err(SimError::InvalidMetric(format!(
            "{} reported metrics for a route of {n} links",
            reported.len()
        )));
    }
    let bound = delta_good(model.kind, n, model.epsilon, model.delta_tilde);
    let actual: Option<Vec<Metric>> = route.windows(2).map(|w| model.actual(w[0], w[1])).collect();
    let Some(actual) = actual else {
        return Ok(Accuracy {
            accurate: None,
            metric_error: None,
            delta_good: bound,
        });
    };
    let err = metric_error(model.kind, reported, &actual)?;
    let ok = if bound == 0.0 { err == 0.0 } else { err < bound };
    Ok(Accuracy {
        accurate: Some(ok),
        metric_error: Some(err),
        delta_good: bound,
    })
}

/// One verdict per route accepted in `trace`. Routes whose S or T is in
/// `faulty` are tagged and should not count toward property summaries.
pub fn verdict_all(
    trace: &Trace,
    topology: &Topology,
    model: Option<&LinkMetricModel>,
    faulty: &BTreeSet<NodeId>,
) -> Result<Vec<Verdict>, SimError> {
    trace
        .accepted()
        .iter()
        .enumerate()
        .map(|(i, r)| verdict(i, r, topology, model, faulty))
        .collect()
}

pub fn verdict(
    route_id: usize,
    r: &RouteRecord,
    topology: &Topology,
    model: Option<&LinkMetricModel>,
    faulty: &BTreeSet<NodeId>,
) -> Result<Verdict, SimError> {
    let (fresh, stale_links) = check_fresh(&r.route, topology, r.t1, r.t2)?;
    let (weakly_fresh, witness) = check_weakly_fresh(&r.route, topology, r.t1, r.t2)?;
    let mut tags = Vec::new();
    if faulty.contains(&r.src) || faulty.contains(&r.dst) {
        tags.push(ENDPOINTS_FAULTY.to_string());
    }
    let (mut accurate, mut metric_error, mut bound) = (None, None, None);
    if let (Some(model), Some(reported)) = (model, r.metrics.as_deref()) {
        let acc = check_accuracy(&r.route, reported, model)?;
        if acc.accurate.is_none() {
            tags.push(NOT_EVALUABLE.to_string());
        }
        accurate = acc.accurate;
        metric_error = acc.metric_error;
        bound = Some(acc.delta_good);
    }
    Ok(Verdict {
        route_id,
        src: r.src,
        dst: r.dst,
        qid: r.qid,
        route: r.route.clone(),
        t1: r.t1,
        t2: r.t2,
        loop_free: check_loop_free(&r.route),
        fresh,
        stale_links,
        weakly_fresh,
        witness,
        accurate,
        metric_error,
        delta_good: bound,
        tags,
    })
}

/// Property counts over the verdicts with correct endpoints.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub routes: usize,
    pub excluded: usize,
    pub loop_free: usize,
    pub fresh: usize,
    pub weakly_fresh: usize,
    pub accuracy_evaluated: usize,
    pub accurate: usize,
}

impl Summary {
    pub fn of(verdicts: &[Verdict]) -> Summary {
        let mut s = Summary::default();
        for v in verdicts {
            if v.endpoints_faulty() {
                s.excluded += 1;
                continue;
            }
            s.routes += 1;
            s.loop_free += usize::from(v.loop_free);
            s.fresh += usize::from(v.fresh);
            s.weakly_fresh += usize::from(v.weakly_fresh);
            if let Some(a) = v.accurate {
                s.accuracy_evaluated += 1;
                s.accurate += usize::from(a);
            }
        }
        s
    }

    pub fn merge(&mut self, o: &Summary) {
        self.routes += o.routes;
        self.excluded += o.excluded;
        self.loop_free += o.loop_free;
        self.fresh += o.fresh;
        self.weakly_fresh += o.weakly_fresh;
        self.accuracy_evaluated += o.accuracy_evaluated;
        self.accurate += o.accurate;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qos::GKind;
    use crate::simcore::LinkSchedule;

    fn n(i: u32) -> NodeId {
        NodeId(i)
    }

    fn route(ids: &[u32]) -> Vec<NodeId> {
        ids.iter().map(|i| n(*i)).collect()
    }

    #[test]
    fn loop_freedom_examples() {
        assert!(check_loop_free(&route(&[1, 2, 3, 4])));
        assert!(!check_loop_free(&route(&[1, 2, 3, 2, 4])));
        assert!(check_loop_free(&route(&[1, 4])));
    }

    #[test]
    fn freshness_uses_the_open_interval() {
        let topo = Topology::new([
            LinkSchedule::new(n(1), n(2), vec![(0, 100)]),
            LinkSchedule::new(n(2), n(3), vec![(21, 22)]),
            LinkSchedule::new(n(3), n(4), vec![(31, 32)]),
        ])
        .unwrap();
        assert_eq!(check_fresh(&route(&[1, 2, 3]), &topo, 10, 30).unwrap(), (true, vec![]));
        let (ok, stale) = check_fresh(&route(&[1, 2, 3, 4]), &topo, 10, 30).unwrap();
        assert!(!ok);
        assert_eq!(stale, vec![(n(3), n(4))]);
        // touching only the endpoint t1 does not count
        assert!(!check_fresh(&route(&[2, 3]), &topo, 22, 30).unwrap().0);
        assert!(check_fresh(&route(&[1, 2]), &topo, 5, 5).is_err());
    }

    #[test]
    fn detour_makes_a_stale_link_weakly_fresh() {
        // S=1 A=2 M1=3 M2=4 B=5 T=6, detour 3-7-8-4
        let mut links = vec![
            LinkSchedule::new(n(3), n(4), vec![]),
        ];
        for (a, b) in [(1, 2), (2, 3), (4, 5), (5, 6), (3, 7), (7, 8), (8, 4)] {
            links.push(LinkSchedule::always(n(a), n(b), 100));
        }
        let topo = Topology::new(links).unwrap();
        let r = route(&[1, 2, 3, 4, 5, 6]);
        assert!(!check_fresh(&r, &topo, 0, 50).unwrap().0);
        let (ok, w) = check_weakly_fresh(&r, &topo, 0, 50).unwrap();
        assert!(ok);
        let w = w.unwrap();
        assert_eq!((w.j, w.k), (2, 3));
        assert_eq!(w.detour, route(&[3, 7, 8, 4]));
    }

    #[test]
    fn isolated_fake_link_is_not_weakly_fresh() {
        let topo = Topology::new([
            LinkSchedule::always(n(1), n(2), 100),
            LinkSchedule::new(n(2), n(3), vec![]),
            LinkSchedule::always(n(3), n(4), 100),
            LinkSchedule::always(n(4), n(5), 100),
        ])
        .unwrap();
        assert!(!check_weakly_fresh(&route(&[1, 2, 3, 4, 5]), &topo, 0, 50).unwrap().0);
        // single-link routes are weakly fresh only when fresh
        assert!(!check_weakly_fresh(&route(&[2, 3]), &topo, 0, 50).unwrap().0);
        assert!(check_weakly_fresh(&route(&[1, 2]), &topo, 0, 50).unwrap().0);
    }

    #[test]
    fn accuracy_examples() {
        let mut m = LinkMetricModel::new(GKind::Add, 0.1, 0.05);
        m.set_actual(n(1), n(2), Metric::from_f64(1.0));
        m.set_actual(n(2), n(3), Metric::from_f64(1.0));
        let r = route(&[1, 2, 3]);
        let a = check_accuracy(&r, &[Metric::from_f64(1.0), Metric::from_f64(1.1)], &m).unwrap();
        assert_eq!(a.accurate, Some(true));
        assert!((a.metric_error.unwrap() - 0.1).abs() < 1e-12);
        assert!((a.delta_good - 0.5).abs() < 1e-12);
        let exact = check_accuracy(&r, &[Metric::from_f64(1.0); 2], &m).unwrap();
        assert_eq!(exact.metric_error, Some(0.0));
        assert!(check_accuracy(&r, &[Metric::from_f64(1.0)], &m).is_err());
        let missing = check_accuracy(&route(&[1, 2, 9]), &[Metric::from_f64(1.0); 2], &m).unwrap();
        assert_eq!(missing.accurate, None);
    }
}
