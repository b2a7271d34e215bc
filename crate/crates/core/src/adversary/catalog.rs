use serde::{Deserialize, Serialize};

use super::{
    fuzz_script, Action, AdversaryClass, AttackScript, ClassRequirement, Edit, FuzzBounds, Rule,
    Trigger,
};
use crate::error::AttackError;
use crate::identity::NodeId;
use crate::qos::Metric;

/// Parameters of a named attack. Each attack reads only the fields it needs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackParams {
    /// A link the attack tries to get into an accepted route.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub victim: Option<(NodeId, NodeId)>,
    /// Identity to duplicate, fabricate or insert.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<NodeId>,
    /// Colluding adversary.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peer: Option<NodeId>,
    /// Neighbor to send replies to directly.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<FuzzBounds>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub requirement: ClassRequirement,
    pub params: &'static [&'static str],
    pub summary: &'static str,
}

const fn entry(
    name: &'static str,
    requirement: ClassRequirement,
    params: &'static [&'static str],
    summary: &'static str,
) -> CatalogEntry {
    CatalogEntry {
        name,
        requirement,
        params,
        summary,
    }
}

use ClassRequirement::{Any, ArbitraryOnly};

const CATALOG: &[CatalogEntry] = &[
    entry("loop_inject", Any, &["node"], "repeat an identity in NodeList and Route"),
    entry("tamper_nodelist_downstream", Any, &["victim"], "splice a never-up link into NodeList upstream of self"),
    entry("shortcut_relay", Any, &["victim", "to"], "splice a fake hop before self, then hand the reply straight to `to`"),
    entry("tamper_nodelist_upstream", Any, &["node"], "append a hop after self to NodeList"),
    entry("tamper_rrep_route", Any, &["victim"], "splice a link into the Route of a passing reply"),
    entry("impersonate_T", Any, &[], "strip Route entries ahead of self so the successor looks like T"),
    entry("forge_rrep", Any, &["node"], "answer a request with an invented reply and a guessed authenticator"),
    entry("replay_stale_rrep", Any, &[], "store replies and send them again during a later discovery"),
    entry("tamper_metriclist_rrep", Any, &["index", "delta"], "shift a MetricList entry of a passing reply"),
    entry("tamper_metriclist_rreq_upstream", Any, &["index", "delta"], "shift an earlier MetricList entry of a request"),
    entry("tamper_metriclist_rreq_downstream", Any, &["delta"], "shift the entry this node appends to a request"),
    entry("biased_metric", Any, &["bias"], "measure every link with a fixed offset, otherwise behave"),
    entry("fig1a_tunnel", ArbitraryOnly, &["peer", "role"], "carry request and reply between two colluders over a relay path"),
    entry("fig1b_chain", ArbitraryOnly, &["role", "node", "peer"], "colluding chain that fabricates a segment and skips checks"),
];

pub fn catalog() -> &'static [CatalogEntry] {
    CATALOG
}

fn need<T: Clone>(name: &str, v: &Option<T>, param: &'static str) -> Result<T, AttackError> {
    v.clone().ok_or(AttackError::MissingParam {
        name: name.into(),
        param,
    })
}

fn metric(name: &str, v: &Option<f64>, param: &'static str) -> Result<Metric, AttackError> {
    Ok(Metric::from_f64(need(name, v, param)?))
}

use Action::*;
use Trigger::{Rrep as OnRrep, Rreq as OnRreq, TunnelRrep, TunnelRreq};

/// Builds the named script.
pub fn attack(name: &str, params: &AttackParams) -> Result<AttackScript, AttackError> {
    let script = match name {
        "loop_inject" => {
            let node = need(name, &params.node, "node")?;
            AttackScript::new(
                name,
                vec![
                    Rule::new(OnRreq, vec![Append, Edit(Edit::Duplicate(node)), Bcast]).fresh(),
                    Rule::new(OnRreq, vec![Drop]),
                    Rule::new(OnRrep, vec![Edit(Edit::Duplicate(node)), SendNext]),
                ],
            )
        }
        "tamper_nodelist_downstream" => {
            let (a, b) = need(name, &params.victim, "victim")?;
            AttackScript::new(
                name,
                vec![
                    Rule::new(OnRreq, vec![Append, Edit(Edit::InsertAfter { after: a, node: b }), Bcast]).fresh(),
                    Rule::new(OnRreq, vec![Drop]),
                    Rule::new(OnRrep, vec![SendNext]),
                ],
            )
        }
        "shortcut_relay" => {
            let (a, b) = need(name, &params.victim, "victim")?;
            let to = params.to.unwrap_or(a);
            AttackScript::new(
                name,
                vec![
                    Rule::new(OnRreq, vec![Append, Edit(Edit::InsertAfter { after: a, node: b }), Bcast]).fresh(),
                    Rule::new(OnRreq, vec![Drop]),
                    Rule::new(OnRrep, vec![SendTo(to)]),
                ],
            )
        }
        "tamper_nodelist_upstream" => {
            let node = need(name, &params.node, "node")?;
            AttackScript::new(
                name,
                vec![
                    Rule::new(OnRreq, vec![Append, Edit(Edit::PushNode(node)), Bcast]).fresh(),
                    Rule::new(OnRreq, vec![Drop]),
                ],
            )
        }
        "tamper_rrep_route" => {
            let (a, b) = need(name, &params.victim, "victim")?;
            AttackScript::new(
                name,
                vec![Rule::new(OnRrep, vec![Edit(Edit::InsertAfter { after: a, node: b }), SendNext])],
            )
        }
        "impersonate_T" => AttackScript::new(
            name,
            vec![Rule::new(OnRrep, vec![Edit(Edit::DropBeforeSelf), SendNext])],
        ),
        "forge_rrep" => {
            let node = need(name, &params.node, "node")?;
            AttackScript::new(
                name,
                vec![Rule::new(OnRreq, vec![Honest, ForgeRrep { prefix: vec![node] }, SendNext]).fresh()],
            )
        }
        "replay_stale_rrep" => AttackScript::new(
            name,
            vec![
                Rule::new(OnRrep, vec![Store, Honest]),
                Rule::new(OnRreq, vec![Honest, Replay]).fresh().from_qid(2),
            ],
        ),
        "tamper_metriclist_rrep" => {
            let index = params.index.unwrap_or(0);
            let delta = metric(name, &params.delta, "delta")?;
            AttackScript::new(
                name,
                vec![Rule::new(OnRrep, vec![Edit(Edit::OffsetMetric { index, delta }), SendNext])],
            )
        }
        "tamper_metriclist_rreq_upstream" => {
            let index = params.index.unwrap_or(0);
            let delta = metric(name, &params.delta, "delta")?;
            AttackScript::new(
                name,
                vec![
                    Rule::new(OnRreq, vec![Append, Edit(Edit::OffsetMetric { index, delta }), Bcast]).fresh(),
                    Rule::new(OnRreq, vec![Drop]),
                ],
            )
        }
        "tamper_metriclist_rreq_downstream" => {
            let delta = metric(name, &params.delta, "delta")?;
            AttackScript::new(
                name,
                vec![
                    Rule::new(OnRreq, vec![Append, Edit(Edit::OffsetMetric { index: -1, delta }), Bcast]).fresh(),
                    Rule::new(OnRreq, vec![Drop]),
                ],
            )
        }
        "biased_metric" => {
            let mut s = AttackScript::new(name, Vec::new());
            s.metric_bias = Some(metric(name, &params.bias, "bias")?);
            s
        }
        "fig1a_tunnel" => {
            let peer = need(name, &params.peer, "peer")?;
            let rules = match need(name, &params.role, "role")?.as_str() {
                // M1: keeps its ForwardList standing by broadcasting too
                "head" => vec![
                    Rule::new(OnRreq, vec![Append, Bcast, Tunnel(peer)]).fresh(),
                    Rule::new(OnRreq, vec![Drop]),
                    Rule::new(TunnelRrep, vec![SendNext]),
                ],
                "tail" => vec![
                    Rule::new(OnRreq, vec![Drop]),
                    Rule::new(TunnelRreq, vec![Append, Bcast]).fresh(),
                    Rule::new(OnRrep, vec![Tunnel(peer)]),
                ],
                other => {
                    return Err(AttackError::InvalidParam {
                        name: name.into(),
                        msg: format!("unknown role {other:?}, expected head or tail"),
                    })
                }
            };
            AttackScript::new(name, rules).arbitrary_only()
        }
        "fig1b_chain" => {
            let rules = match need(name, &params.role, "role")?.as_str() {
                "head" => vec![Rule::new(OnRrep, vec![SendNext])],
                "fabricator" => {
                    let fake = need(name, &params.node, "node")?;
                    let peer = need(name, &params.peer, "peer")?;
                    vec![
                        Rule::new(OnRreq, vec![Append, Edit(Edit::InsertBeforeSelf(fake)), Bcast]).fresh(),
                        Rule::new(OnRreq, vec![Drop]),
                        Rule::new(OnRrep, vec![SendTo(peer)]),
                    ]
                }
                "tail" => vec![
                    Rule::new(OnRreq, vec![Append, Bcast]).fresh(),
                    Rule::new(OnRreq, vec![Drop]),
                    Rule::new(OnRrep, vec![SendNext]),
                ],
                other => {
                    return Err(AttackError::InvalidParam {
                        name: name.into(),
                        msg: format!("unknown role {other:?}, expected head, fabricator or tail"),
                    })
                }
            };
            AttackScript::new(name, rules).arbitrary_only()
        }
        "fuzz" => {
            let seed = need(name, &params.seed, "seed")?;
            let bounds = params.bounds.clone().unwrap_or_default();
            fuzz_script(seed, AdversaryClass::Arbitrary, &bounds)
        }
        _ => return Err(AttackError::UnknownAttack(name.into())),
    };
    Ok(script)
}

/// [`attack`] plus class validation; fuzz scripts are generated for `class`.
pub fn attack_for(
    name: &str,
    params: &AttackParams,
    class: AdversaryClass,
) -> Result<AttackScript, AttackError> {
    let script = if name == "fuzz" {
        let seed = need(name, &params.seed, "seed")?;
        fuzz_script(seed, class, &params.bounds.clone().unwrap_or_default())
    } else {
        attack(name, params)?
    };
    script.validate(class)?;
    Ok(script)
}
