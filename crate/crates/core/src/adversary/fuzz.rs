use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Action, AdversaryClass, AttackScript, Edit, Rule, Trigger};
use crate::identity::NodeId;
use crate::qos::Metric;

/// Limits for generated scripts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FuzzBounds {
    pub max_rules: usize,
    pub max_actions: usize,
    /// Identities edits may insert or target.
    pub nodes: Vec<NodeId>,
    /// Colluders reachable over the tunnel channel.
    pub peers: Vec<NodeId>,
    /// Largest metric offset an edit or bias may use.
    pub max_delta: f64,
}

impl Default for FuzzBounds {
    fn default() -> Self {
        FuzzBounds {
            max_rules: 4,
            max_actions: 4,
            nodes: (1..=8).map(NodeId).collect(),
            peers: Vec::new(),
            max_delta: 1.0,
        }
    }
}

fn pick_node(rng: &mut ChaCha8Rng, b: &FuzzBounds) -> NodeId {
    b.nodes.choose(rng).copied().unwrap_or(NodeId(0))
}

fn random_metric(rng: &mut ChaCha8Rng, b: &FuzzBounds) -> Metric {
    if b.max_delta <= 0.0 {
        return Metric::ZERO;
    }
    Metric::from_f64(rng.gen_range(-b.max_delta..=b.max_delta))
}

fn random_edit(rng: &mut ChaCha8Rng, b: &FuzzBounds) -> Edit {
    match rng.gen_range(0..10) {
        0 => Edit::InsertAfter {
            after: pick_node(rng, b),
            node: pick_node(rng, b),
        },
        1 => Edit::InsertBeforeSelf(pick_node(rng, b)),
        2 => Edit::PushNode(pick_node(rng, b)),
        3 => Edit::Remove(pick_node(rng, b)),
        4 => Edit::Replace {
            from: pick_node(rng, b),
            to: pick_node(rng, b),
        },
        5 => Edit::Duplicate(pick_node(rng, b)),
        6 => Edit::DuplicateSelf,
        7 => Edit::DropBeforeSelf,
        8 => Edit::SetMetric {
            index: rng.gen_range(-3..4),
            value: random_metric(rng, b).saturating_add(Metric::from_f64(b.max_delta)),
        },
        _ => Edit::OffsetMetric {
            index: rng.gen_range(-3..4),
            delta: random_metric(rng, b),
        },
    }
}

fn random_action(rng: &mut ChaCha8Rng, class: AdversaryClass, b: &FuzzBounds) -> Action {
    let tunnels = class == AdversaryClass::Arbitrary && !b.peers.is_empty();
    loop {
        return match rng.gen_range(0..13) {
            0 => Action::Drop,
            1 => Action::Honest,
            2 => Action::Append,
            3 | 4 => Action::Edit(random_edit(rng, b)),
            5 => Action::Bcast,
            6 => Action::SendNext,
            7 => Action::SendTo(pick_node(rng, b)),
            8 if tunnels => Action::Tunnel(*b.peers.choose(rng).expect("peers non-empty")),
            8 => continue,
            9 => Action::Store,
            10 => Action::Replay,
            11 => {
                let k = rng.gen_range(0..3);
                Action::ForgeRrep {
                    prefix: (0..k).map(|_| pick_node(rng, b)).collect(),
                }
            }
            _ => Action::Wait,
        };
    }
}

fn pick_peer(rng: &mut ChaCha8Rng, b: &FuzzBounds) -> NodeId {
    b.peers.choose(rng).copied().unwrap_or_else(|| pick_node(rng, b))
}

// Rule sets shaped like the catalog attacks, with random parameters, so that
// colluders sometimes line up the way coordinated attacks need.
fn template(rng: &mut ChaCha8Rng, class: AdversaryClass, b: &FuzzBounds) -> Vec<Rule> {
    use Action::*;
    use Trigger::{Rrep as OnRrep, Rreq as OnRreq};
    let tunnels = class == AdversaryClass::Arbitrary && !b.peers.is_empty();
    let reply = |rng: &mut ChaCha8Rng| -> Action {
        if rng.gen_bool(0.5) {
            SendNext
        } else {
            SendTo(pick_peer(rng, b))
        }
    };
    match rng.gen_range(0..8) {
        // relay with a list or metric edit
        0 => vec![
            Rule::new(OnRreq, vec![Append, Edit(random_edit(rng, b)), Bcast]).fresh(),
            Rule::new(OnRreq, vec![Drop]),
            Rule::new(OnRrep, vec![reply(rng)]),
        ],
        // fabricate an identity before self
        1 => vec![
            Rule::new(OnRreq, vec![Append, Edit(super::Edit::InsertBeforeSelf(pick_node(rng, b))), Bcast]).fresh(),
            Rule::new(OnRreq, vec![Drop]),
            Rule::new(OnRrep, vec![reply(rng)]),
        ],
        // relay unconditionally, pass replies on unchecked
        2 => vec![
            Rule::new(OnRreq, vec![Append, Bcast]).fresh(),
            Rule::new(OnRreq, vec![Drop]),
            Rule::new(OnRrep, vec![SendNext]),
        ],
        3 => vec![Rule::new(OnRrep, vec![Edit(random_edit(rng, b)), reply(rng)])],
        4 => vec![Rule::new(
            OnRreq,
            vec![Honest, ForgeRrep { prefix: vec![pick_node(rng, b)] }, SendNext],
        )
        .fresh()],
        5 => vec![
            Rule::new(OnRrep, vec![Store, Honest]),
            Rule::new(OnRreq, vec![Honest, Replay]).fresh().from_qid(2),
        ],
        6 if tunnels => {
            let peer = pick_peer(rng, b);
            vec![
                Rule::new(OnRreq, vec![Append, Bcast, Tunnel(peer)]).fresh(),
                Rule::new(OnRreq, vec![Drop]),
                Rule::new(Trigger::TunnelRrep, vec![SendNext]),
            ]
        }
        7 if tunnels => {
            let peer = pick_peer(rng, b);
            vec![
                Rule::new(OnRreq, vec![Drop]),
                Rule::new(Trigger::TunnelRreq, vec![Append, Bcast]).fresh(),
                Rule::new(OnRrep, vec![Tunnel(peer)]),
            ]
        }
        _ => vec![Rule::new(OnRrep, vec![SendNext])],
    }
}

/// A reproducible random script. Independent-class scripts never use the
/// tunnel channel; whether they act on non-compliant input is decided at run
/// time by the compliance filter, not by the script.
pub fn fuzz_script(seed: u64, class: AdversaryClass, bounds: &FuzzBounds) -> AttackScript {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut triggers = vec![
        Trigger::Rreq,
        Trigger::Rrep,
        Trigger::OverheardRreq,
        Trigger::OverheardRrep,
    ];
    if class == AdversaryClass::Arbitrary && !bounds.peers.is_empty() {
        triggers.extend([Trigger::TunnelRreq, Trigger::TunnelRrep]);
    }
    let mut rules = if rng.gen_bool(0.7) {
        template(&mut rng, class, bounds)
    } else {
        Vec::new()
    };
    let n_rules = rng.gen_range(1..=bounds.max_rules.max(1));
    let random: Vec<Rule> = (0..n_rules)
        .map(|_| {
            let on = *triggers.choose(&mut rng).expect("triggers non-empty");
            let n_actions = rng.gen_range(1..=bounds.max_actions.max(1));
            let actions = (0..n_actions)
                .map(|_| random_action(&mut rng, class, bounds))
                .collect();
            Rule {
                on,
                fresh_only: rng.gen_bool(0.5),
                min_qid: 0,
                actions,
            }
        })
        .collect();
    rules.extend(random);
    let mut script = AttackScript::new(format!("fuzz-{seed}"), rules);
    if rng.gen_bool(0.3) {
        script.metric_bias = Some(random_metric(&mut rng, bounds));
    }
    script
}
