//! Built-in scenarios: every catalog attack in each class it supports, the
//! two arbitrary-adversary configurations, and biased metric chains.

use std::collections::BTreeMap;

use crate::adversary::{catalog, AdversaryClass, AttackParams, ClassRequirement};
use crate::identity::NodeId;
use crate::qos::{GKind, MetricSource};
use crate::scenario::{
    AdversaryEntry, DiscoverySpec, Expectations, LinkEntry, MetricsSection, NodeEntry, Quantifier,
    ScenarioFile, TunnelSpec,
};
use crate::simcore::{SimConfig, Time};
use crate::srp::Mode;

const END: Time = 600;

fn config() -> SimConfig {
    SimConfig {
        radius: 1.0,
        max_link_delay: 3,
        seed: 0,
        end_time: END,
        tx_time: 1,
    }
}

fn nodes(named: &[(u32, &str)]) -> Vec<NodeEntry> {
    named
        .iter()
        .map(|(id, name)| NodeEntry {
            id: NodeId(*id),
            name: name.to_string(),
        })
        .collect()
}

fn up(a: u32, b: u32) -> LinkEntry {
    LinkEntry {
        a: NodeId(a),
        b: NodeId(b),
        up: None,
    }
}

fn never(a: u32, b: u32) -> LinkEntry {
    LinkEntry {
        a: NodeId(a),
        b: NodeId(b),
        up: Some(Vec::new()),
    }
}

fn adversary(class: AdversaryClass, attack: &str, params: AttackParams) -> AdversaryEntry {
    AdversaryEntry {
        class,
        attack: attack.into(),
        params,
    }
}

fn discover(src: u32, dst: u32, at: Time) -> DiscoverySpec {
    DiscoverySpec {
        src: NodeId(src),
        dst: NodeId(dst),
        at,
    }
}

fn blank(name: String, description: &str) -> ScenarioFile {
    ScenarioFile {
        name,
        description: description.into(),
        config: config(),
        mode: Mode::Basic,
        nodes: Vec::new(),
        links: Vec::new(),
        keys: Vec::new(),
        metrics: None,
        adversaries: BTreeMap::new(),
        tunnels: Vec::new(),
        discoveries: Vec::new(),
        reply_wait: None,
        expect: Expectations::default(),
    }
}

// Chain S=1 A=2 B=3 M=4 C=5 T=6 with the adversary at M, plus X=7 whose links
// never come up, and a never-up shortcut M-T.
const S: u32 = 1;
const A: u32 = 2;
const B: u32 = 3;
const M: u32 = 4;
const C: u32 = 5;
const T: u32 = 6;
const X: u32 = 7;

fn chain(name: String, description: &str) -> ScenarioFile {
    let mut f = blank(name, description);
    f.nodes = nodes(&[(S, "S"), (A, "A"), (B, "B"), (M, "M"), (C, "C"), (T, "T"), (X, "X")]);
    f.links = vec![up(S, A), up(A, B), up(B, M), up(M, C), up(C, T)];
    f.links.extend([never(A, X), never(B, X), never(M, X), never(C, X), never(T, X), never(M, T)]);
    f.keys = vec![(NodeId(S), NodeId(T))];
    f.discoveries = vec![discover(S, T, 5)];
    f
}

fn augment(f: &mut ScenarioFile, kind: GKind, epsilon: f64, delta_tilde: f64) {
    f.mode = Mode::Augmented;
    f.metrics = Some(MetricsSection {
        kind,
        epsilon,
        delta_tilde,
        source: MetricSource::Measured,
        default_value: Some(1.0),
        actual: Vec::new(),
    });
}

fn victim(a: u32, b: u32) -> Option<(NodeId, NodeId)> {
    Some((NodeId(a), NodeId(b)))
}

/// Parameters and victim link used for `attack` on the chain.
fn chain_setup(attack: &str) -> (AttackParams, Option<(NodeId, NodeId)>) {
    let mut p = AttackParams::default();
    let v = match attack {
        "loop_inject" => {
            p.node = Some(NodeId(A));
            None
        }
        "tamper_nodelist_downstream" => {
            p.victim = victim(A, X);
            victim(A, X)
        }
        "shortcut_relay" => {
            p.victim = victim(B, X);
            p.to = Some(NodeId(B));
            victim(B, X)
        }
        "tamper_nodelist_upstream" => {
            p.node = Some(NodeId(X));
            victim(M, X)
        }
        "tamper_rrep_route" => {
            p.victim = victim(C, X);
            victim(C, X)
        }
        "impersonate_T" => victim(M, T),
        "forge_rrep" => {
            p.node = Some(NodeId(X));
            victim(X, T)
        }
        // the C-T link goes down before the second discovery
        "replay_stale_rrep" => victim(C, T),
        "tamper_metriclist_rrep" => {
            p.index = Some(0);
            p.delta = Some(0.5);
            None
        }
        "tamper_metriclist_rreq_upstream" => {
            p.index = Some(0);
            p.delta = Some(0.5);
            None
        }
        "tamper_metriclist_rreq_downstream" => {
            p.delta = Some(0.5);
            None
        }
        "biased_metric" => {
            p.bias = Some(0.05);
            None
        }
        _ => None,
    };
    (p, v)
}

fn is_metric_attack(attack: &str) -> bool {
    attack.starts_with("tamper_metriclist") || attack == "biased_metric"
}

/// `attack` run by M on the chain, with the expectations the protocol
/// guarantees for a single adversary of either class.
pub fn chain_attack(attack: &str, class: AdversaryClass) -> ScenarioFile {
    let summary = catalog()
        .iter()
        .find(|e| e.name == attack)
        .map(|e| e.summary)
        .unwrap_or("");
    let mut f = chain(format!("{attack}_{class}"), summary);
    let (params, v) = chain_setup(attack);
    f.adversaries.insert(M.to_string(), adversary(class, attack, params));
    f.expect.loop_free = Some(Quantifier::All);
    f.expect.fresh = Some(Quantifier::All);
    f.expect.victim = v;
    if is_metric_attack(attack) {
        augment(&mut f, GKind::Add, 0.1, 0.0);
        f.expect.accurate = Some(Quantifier::All);
    }
    match attack {
        "replay_stale_rrep" => {
            f.links.retain(|l| (l.a, l.b) != (NodeId(C), NodeId(T)));
            f.links.push(LinkEntry {
                a: NodeId(C),
                b: NodeId(T),
                up: Some(vec![(0, 80)]),
            });
            f.discoveries.push(discover(S, T, 150));
            f.expect.min_accepted = Some(1);
        }
        "biased_metric" => f.expect.min_accepted = Some(1),
        "forge_rrep" => f.expect.min_accepted = Some(1),
        _ => {}
    }
    f
}

/// The unattacked chain, as a baseline.
pub fn chain_benign(mode: Mode) -> ScenarioFile {
    let mut f = chain(format!("benign_chain_{}", mode_name(mode)), "no adversaries");
    if mode == Mode::Augmented {
        augment(&mut f, GKind::Add, 0.1, 0.0);
        f.expect.accurate = Some(Quantifier::All);
    }
    f.expect.loop_free = Some(Quantifier::All);
    f.expect.fresh = Some(Quantifier::All);
    f.expect.min_accepted = Some(1);
    f
}

fn mode_name(m: Mode) -> &'static str {
    match m {
        Mode::Basic => "basic",
        Mode::Augmented => "augmented",
    }
}

/// Two colluders M1=3 and M2=4 joined by a tunnel over Y1=5, Y2=6, with the
/// direct M1-M2 link never up. Route S=1 A=2 M1 M2 B=7 T=8.
pub fn fig1a() -> ScenarioFile {
    let (s, a, m1, m2, y1, y2, b, t) = (1, 2, 3, 4, 5, 6, 7, 8);
    let mut f = blank(
        "fig1a_tunnel".into(),
        "two arbitrary adversaries tunnel the request and reply over a relay path",
    );
    f.nodes = nodes(&[
        (s, "S"),
        (a, "A"),
        (m1, "M1"),
        (m2, "M2"),
        (y1, "Y1"),
        (y2, "Y2"),
        (b, "B"),
        (t, "T"),
    ]);
    f.links = vec![up(s, a), up(a, m1), up(m1, y1), up(y1, y2), up(y2, m2), up(m2, b), up(b, t), never(m1, m2)];
    f.keys = vec![(NodeId(s), NodeId(t))];
    f.discoveries = vec![discover(s, t, 5)];
    let role = |r: &str, peer: u32| AttackParams {
        peer: Some(NodeId(peer)),
        role: Some(r.into()),
        ..Default::default()
    };
    f.adversaries.insert(m1.to_string(), adversary(AdversaryClass::Arbitrary, "fig1a_tunnel", role("head", m2)));
    f.adversaries.insert(m2.to_string(), adversary(AdversaryClass::Arbitrary, "fig1a_tunnel", role("tail", m1)));
    f.tunnels = vec![TunnelSpec {
        a: NodeId(m1),
        b: NodeId(m2),
        path: [m1, y1, y2, m2].map(NodeId).to_vec(),
    }];
    f.expect = Expectations {
        loop_free: Some(Quantifier::All),
        fresh: Some(Quantifier::NotAll),
        weakly_fresh: Some(Quantifier::All),
        min_accepted: Some(1),
        victim: victim(m1, m2),
        victim_routes: Some(Quantifier::Any),
        ..Default::default()
    };
    f
}

/// Node id of the identity fabricated by the interior adversary in [`fig1b`].
pub const FIG1B_FAKE: NodeId = NodeId(20);

/// Chain S=1 V=2 M1..Mk (ids 10..) V'=3 T=4. M2 inserts the fabricated
/// identity 20 before itself; M3..Mk relay without checking. Needs k >= 3.
pub fn fig1b(k: usize) -> ScenarioFile {
    assert!(k >= 3, "the chain needs an interior adversary");
    let (s, v, vp, t) = (1, 2, 3, 4);
    let ms: Vec<u32> = (0..k as u32).map(|i| 10 + i).collect();
    let mut f = blank(
        format!("fig1b_chain_k{k}"),
        "a chain of arbitrary adversaries relays a request carrying a fabricated identity",
    );
    let mut named = vec![(s, "S".to_string()), (v, "V".to_string()), (vp, "V'".to_string()), (t, "T".to_string())];
    named.extend(ms.iter().enumerate().map(|(i, m)| (*m, format!("M{}", i + 1))));
    f.nodes = named
        .into_iter()
        .map(|(id, name)| NodeEntry { id: NodeId(id), name })
        .collect();
    f.nodes.push(NodeEntry {
        id: FIG1B_FAKE,
        name: "F".into(),
    });
    f.links = vec![up(s, v), up(v, ms[0])];
    f.links.extend(ms.windows(2).map(|w| up(w[0], w[1])));
    f.links.extend([up(ms[k - 1], vp), up(vp, t)]);
    f.keys = vec![(NodeId(s), NodeId(t))];
    f.discoveries = vec![discover(s, t, 5)];
    for (i, m) in ms.iter().enumerate() {
        let params = match i {
            0 => AttackParams {
                role: Some("head".into()),
                ..Default::default()
            },
            1 => AttackParams {
                role: Some("fabricator".into()),
                node: Some(FIG1B_FAKE),
                peer: Some(NodeId(ms[0])),
                ..Default::default()
            },
            _ => AttackParams {
                role: Some("tail".into()),
                ..Default::default()
            },
        };
        f.adversaries.insert(m.to_string(), adversary(AdversaryClass::Arbitrary, "fig1b_chain", params));
    }
    f.expect = Expectations {
        loop_free: Some(Quantifier::All),
        fresh: Some(Quantifier::NotAll),
        weakly_fresh: Some(Quantifier::All),
        min_accepted: Some(1),
        victim: Some((NodeId(ms[0]), FIG1B_FAKE)),
        victim_routes: Some(Quantifier::Any),
        ..Default::default()
    };
    f
}

/// Per-node bias for position `i` of an `n`-link chain: a tent that keeps
/// neighbors `step` apart and the end nodes unbiased.
pub fn tent_bias(i: usize, n: usize, step: f64) -> f64 {
    i.min(n - i) as f64 * step
}

/// S=1, V_1..V_{n-1} = 2..n, T = n+1 in a line, every relay an independent
/// adversary with a [`tent_bias`] offset just under `epsilon` per step.
pub fn biased_chain(kind: GKind, n: usize, epsilon: f64, delta_tilde: f64) -> ScenarioFile {
    assert!(n >= 1);
    let ids: Vec<u32> = (1..=n as u32 + 1).collect();
    let mut f = blank(
        format!("biased_chain_{kind:?}_n{n}").to_lowercase(),
        "every relay reports link metrics skewed as far as the consistency checks allow",
    );
    f.nodes = ids
        .iter()
        .map(|i| NodeEntry {
            id: NodeId(*i),
            name: String::new(),
        })
        .collect();
    f.links = ids.windows(2).map(|w| up(w[0], w[1])).collect();
    f.keys = vec![(NodeId(1), NodeId(n as u32 + 1))];
    f.discoveries = vec![discover(1, n as u32 + 1, 5)];
    let base = if kind == GKind::Mul { 0.5 } else { 2.0 };
    augment(&mut f, kind, epsilon, delta_tilde);
    if let Some(m) = f.metrics.as_mut() {
        m.default_value = Some(base);
    }
    // room for the noise of both endpoints plus fixed-point rounding
    let step = (epsilon - 2.0 * delta_tilde - 1e-5).max(0.0);
    for i in 1..n {
        let params = AttackParams {
            bias: Some(tent_bias(i, n, step)),
            ..Default::default()
        };
        f.adversaries.insert(
            (i as u32 + 1).to_string(),
            adversary(AdversaryClass::Independent, "biased_metric", params),
        );
    }
    f.expect = Expectations {
        loop_free: Some(Quantifier::All),
        fresh: Some(Quantifier::All),
        accurate: Some(Quantifier::All),
        min_accepted: Some(1),
        ..Default::default()
    };
    f
}

/// Every bundled scenario, in a stable order.
pub fn corpus() -> Vec<ScenarioFile> {
    let mut out = vec![chain_benign(Mode::Basic), chain_benign(Mode::Augmented)];
    for e in catalog() {
        if e.requirement == ClassRequirement::Any {
            for class in [AdversaryClass::Independent, AdversaryClass::Arbitrary] {
                out.push(chain_attack(e.name, class));
            }
        }
    }
    out.push(fig1a());
    out.push(fig1b(3));
    out.push(biased_chain(GKind::Add, 5, 0.1, 0.0));
    out.push(biased_chain(GKind::Max, 4, 0.1, 0.02));
    out.push(biased_chain(GKind::Min, 4, 0.1, 0.02));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Scenario;

    #[test]
    fn every_corpus_entry_validates() {
        let all = corpus();
        for f in &all {
            Scenario::from_file(f.clone()).unwrap_or_else(|e| panic!("{}: {e}", f.name));
        }
        let mut names: Vec<&str> = all.iter().map(|f| f.name.as_str()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), all.len());
    }

    #[test]
    fn tent_peaks_in_the_middle() {
        let b: Vec<f64> = (0..=5).map(|i| tent_bias(i, 5, 1.0)).collect();
        assert_eq!(b, vec![0.0, 1.0, 2.0, 2.0, 1.0, 0.0]);
    }
}
