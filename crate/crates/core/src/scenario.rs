//! Scenario files: JSON documents describing nodes, link schedules, keys,
//! metrics, adversaries, discoveries and the expected verdicts.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adversary::{attack_for, AdversaryClass, AttackParams, AttackScript};
use crate::error::ScenarioError;
use crate::identity::{KeyRing, NodeId};
use crate::qos::{GKind, LinkMetricModel, Metric, MetricSource};
use crate::simcore::{LinkSchedule, SimConfig, Time, Topology};
use crate::srp::{Mode, ReplyWaitPolicy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeEntry {
    pub id: NodeId,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkEntry {
    pub a: NodeId,
    pub b: NodeId,
    /// Half-open up intervals; omitted means up for the whole run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub up: Option<Vec<(Time, Time)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricEntry {
    pub a: NodeId,
    pub b: NodeId,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSection {
    pub kind: GKind,
    pub epsilon: f64,
    #[serde(default)]
    pub delta_tilde: f64,
    #[serde(default)]
    pub source: MetricSource,
    /// Actual value for links not listed in `actual`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_value: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub actual: Vec<MetricEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversaryEntry {
    pub class: AdversaryClass,
    pub attack: String,
    #[serde(default)]
    pub params: AttackParams,
}

/// Relay path for the colluders' private channel, `path[0] == a` and
/// `path.last() == b`. Usable in both directions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TunnelSpec {
    pub a: NodeId,
    pub b: NodeId,
    pub path: Vec<NodeId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscoverySpec {
    pub src: NodeId,
    pub dst: NodeId,
    pub at: Time,
}

/// How many accepted routes must have a property.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quantifier {
    /// Every route (vacuously true with no routes).
    All,
    /// No route.
    None,
    /// At least one route lacks it.
    NotAll,
    /// At least one route has it.
    Any,
}

impl Quantifier {
    pub fn holds(self, with: usize, total: usize) -> bool {
        match self {
            Quantifier::All => with == total,
            Quantifier::None => with == 0,
            Quantifier::NotAll => with < total,
            Quantifier::Any => with > 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectations {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loop_free: Option<Quantifier>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fresh: Option<Quantifier>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weakly_fresh: Option<Quantifier>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accurate: Option<Quantifier>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_accepted: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_accepted: Option<usize>,
    /// A link whose presence in accepted routes is checked with
    /// `victim_routes` (default `none`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub victim: Option<(NodeId, NodeId)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub victim_routes: Option<Quantifier>,
}

/// The on-disk form of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    #[serde(default)]
    pub config: SimConfig,
    #[serde(default)]
    pub mode: Mode,
    pub nodes: Vec<NodeEntry>,
    #[serde(default)]
    pub links: Vec<LinkEntry>,
    #[serde(default)]
    pub keys: Vec<(NodeId, NodeId)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsSection>,
    /// Keyed by node id.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub adversaries: BTreeMap<String, AdversaryEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tunnels: Vec<TunnelSpec>,
    #[serde(default)]
    pub discoveries: Vec<DiscoverySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply_wait: Option<ReplyWaitPolicy>,
    #[serde(default)]
    pub expect: Expectations,
}

#[derive(Debug, Clone)]
pub enum Role {
    Correct,
    Adversary {
        class: AdversaryClass,
        script: AttackScript,
    },
}

#[derive(Debug, Clone)]
pub struct NodeSpec {
    pub id: NodeId,
    pub name: String,
    pub role: Role,
}

/// A validated scenario, ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub config: SimConfig,
    pub mode: Mode,
    pub nodes: Vec<NodeSpec>,
    pub topology: Topology,
    pub keys: KeyRing,
    pub metrics: Option<LinkMetricModel>,
    pub tunnels: Vec<TunnelSpec>,
    pub discoveries: Vec<DiscoverySpec>,
    pub reply_wait: ReplyWaitPolicy,
}

impl Scenario {
    pub fn name(&self) -> &str {
        &self.file.name
    }

    pub fn expect(&self) -> &Expectations {
        &self.file.expect
    }

    pub fn adversaries(&self) -> impl Iterator<Item = (NodeId, AdversaryClass, &AttackScript)> {
        self.nodes.iter().filter_map(|n| match &n.role {
            Role::Adversary { class, script } => Some((n.id, *class, script)),
            Role::Correct => None,
        })
    }

    pub fn faulty(&self) -> BTreeSet<NodeId> {
        self.adversaries().map(|(id, _, _)| id).collect()
    }

    /// The strongest adversary class present, if any.
    pub fn adversary_class(&self) -> Option<AdversaryClass> {
        self.adversaries().map(|(_, c, _)| c).max()
    }

    /// Tunnel relay path from `from` to `to`, oriented.
    pub fn tunnel_path(&self, from: NodeId, to: NodeId) -> Option<Vec<NodeId>> {
        self.tunnels.iter().find_map(|t| {
            if (t.a, t.b) == (from, to) {
                Some(t.path.clone())
            } else if (t.b, t.a) == (from, to) {
                Some(t.path.iter().rev().copied().collect())
            } else {
                None
            }
        })
    }

    pub fn from_file(file: ScenarioFile) -> Result<Scenario, ScenarioError> {
        resolve(file)
    }

    pub fn to_json(&self) -> String {
        // ScenarioFile holds only string map keys
        serde_json::to_string_pretty(&self.file).expect("scenario serializes")
    }
}

fn invalid(location: impl Into<String>, msg: impl Into<String>) -> ScenarioError {
    ScenarioError::validation(location, msg)
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let file: ScenarioFile = serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
        path: "<memory>".into(),
        line: e.line(),
        column: e.column(),
        msg: e.to_string(),
    })?;
    resolve(file)
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: shown.clone(),
        source,
    })?;
    parse_scenario(&text).map_err(|e| e.with_path(&shown))
}

fn resolve(file: ScenarioFile) -> Result<Scenario, ScenarioError> {
    let config = file.config;
    config.validate().map_err(|e| invalid("config", e.to_string()))?;

    let mut ids = BTreeSet::new();
    for (i, n) in file.nodes.iter().enumerate() {
        if !ids.insert(n.id) {
            return Err(invalid(format!("nodes[{i}]"), format!("duplicate node id {}", n.id)));
        }
    }
    let known = |loc: &str, n: NodeId| -> Result<(), ScenarioError> {
        if ids.contains(&n) {
            Ok(())
        } else {
            Err(invalid(loc, format!("undeclared node {n}")))
        }
    };

    let mut topology = Topology::default();
    for (i, l) in file.links.iter().enumerate() {
        let loc = format!("links[{i}]");
        known(&loc, l.a)?;
        known(&loc, l.b)?;
        let up = l.up.clone().unwrap_or_else(|| vec![(0, config.end_time)]);
        let schedule = LinkSchedule::new(l.a, l.b, up);
        schedule
            .validate(config.tx_time)
            .map_err(|e| invalid(&loc, e.to_string()))?;
        topology.insert(schedule).map_err(|e| invalid(&loc, e.to_string()))?;
    }

    let mut keys = KeyRing::new();
    for (i, (a, b)) in file.keys.iter().enumerate() {
        let loc = format!("keys[{i}]");
        known(&loc, *a)?;
        known(&loc, *b)?;
        if a == b {
            return Err(invalid(loc, "a node cannot share a key with itself"));
        }
        keys.share(*a, *b);
    }

    let mut metrics = match &file.metrics {
        None if file.mode == Mode::Augmented => {
            return Err(invalid("metrics", "augmented mode needs a metrics section"))
        }
        None => None,
        Some(m) => Some(resolve_metrics(m, &topology)?),
    };

    let mut roles: BTreeMap<NodeId, Role> = BTreeMap::new();
    for (key, entry) in &file.adversaries {
        let loc = format!("adversaries.{key}");
        let id = key
            .parse::<u32>()
            .map(NodeId)
            .map_err(|_| invalid(&loc, "adversary keys must be node ids"))?;
        known(&loc, id)?;
        let script = attack_for(&entry.attack, &entry.params, entry.class)
            .map_err(|e| invalid(&loc, e.to_string()))?;
        // without metrics a bias has nothing to skew
        if let (Some(bias), Some(m)) = (script.metric_bias, metrics.as_mut()) {
            m.set_bias(id, bias);
        }
        for peer in script.tunnel_peers() {
            let declared = file
                .tunnels
                .iter()
                .any(|t| (t.a, t.b) == (id, peer) || (t.b, t.a) == (id, peer));
            if !declared {
                return Err(invalid(&loc, format!("no tunnel declared between {id} and {peer}")));
            }
        }
        roles.insert(
            id,
            Role::Adversary {
                class: entry.class,
                script,
            },
        );
    }

    for (i, t) in file.tunnels.iter().enumerate() {
        let loc = format!("tunnels[{i}]");
        for end in [t.a, t.b] {
            match roles.get(&end) {
                Some(Role::Adversary {
                    class: AdversaryClass::Arbitrary,
                    ..
                }) => {}
                _ => {
                    return Err(invalid(
                        &loc,
                        format!("tunnel endpoint {end} must be an arbitrary adversary"),
                    ))
                }
            }
        }
        if t.path.first() != Some(&t.a) || t.path.last() != Some(&t.b) || t.path.len() < 2 {
            return Err(invalid(&loc, "path must run from a to b"));
        }
        for w in t.path.windows(2) {
            if topology.schedule(w[0], w[1]).is_none() {
                return Err(invalid(&loc, format!("path hop {}-{} is not a declared link", w[0], w[1])));
            }
        }
    }

    for (i, d) in file.discoveries.iter().enumerate() {
        let loc = format!("discoveries[{i}]");
        known(&loc, d.src)?;
        known(&loc, d.dst)?;
        if roles.contains_key(&d.src) {
            return Err(invalid(&loc, "discoveries are initiated by correct nodes"));
        }
        if d.src == d.dst {
            return Err(invalid(&loc, "source and target must differ"));
        }
        if !keys.shares(d.src, d.dst) {
            return Err(invalid(&loc, format!("no key declared for {}-{}", d.src, d.dst)));
        }
        if d.at >= config.end_time {
            return Err(invalid(&loc, "discovery starts after end_time"));
        }
    }

    if let Some((a, b)) = file.expect.victim {
        known("expect.victim", a)?;
        known("expect.victim", b)?;
    }

    let reply_wait = match file.reply_wait {
        Some(rw) if rw.min == 0 || rw.max < rw.min => {
            return Err(invalid("reply_wait", "need 0 < min <= max"))
        }
        Some(rw) => rw,
        None => ReplyWaitPolicy::for_network(config.max_link_delay, file.nodes.len().saturating_sub(1)),
    };

    let nodes = file
        .nodes
        .iter()
        .map(|n| NodeSpec {
            id: n.id,
            name: if n.name.is_empty() { n.id.to_string() } else { n.name.clone() },
            role: roles.remove(&n.id).unwrap_or(Role::Correct),
        })
        .collect();

    Ok(Scenario {
        config,
        mode: file.mode,
        nodes,
        topology,
        keys,
        metrics,
        tunnels: file.tunnels.clone(),
        discoveries: file.discoveries.clone(),
        reply_wait,
        file,
    })
}

fn resolve_metrics(m: &MetricsSection, topology: &Topology) -> Result<LinkMetricModel, ScenarioError> {
    if !m.source.is_link_metric() {
        return Err(invalid(
            "metrics.source",
            "only measured or administrative link metrics fit the route metric model",
        ));
    }
    let administrative = m.source == MetricSource::Administrative;
    if !(m.epsilon > 0.0 || administrative && m.epsilon >= 0.0) || !m.epsilon.is_finite() {
        return Err(invalid("metrics.epsilon", "epsilon must be positive"));
    }
    if !(m.delta_tilde >= 0.0 && m.delta_tilde.is_finite()) {
        return Err(invalid("metrics.delta_tilde", "delta_tilde must be non-negative"));
    }
    let mut model = LinkMetricModel::new(m.kind, m.epsilon, m.delta_tilde);
    if administrative {
        model = model.administrative();
    }
    let positive = |loc: &str, v: f64| -> Result<(), ScenarioError> {
        if !v.is_finite() || (m.kind == GKind::Mul && v <= 0.0) {
            return Err(invalid(loc, format!("metric value {v} not allowed for {:?}", m.kind)));
        }
        Ok(())
    };
    if let Some(v) = m.default_value {
        positive("metrics.default_value", v)?;
        for s in topology.schedules() {
            model.set_actual(s.a, s.b, Metric::from_f64(v));
        }
    }
    for (i, e) in m.actual.iter().enumerate() {
        let loc = format!("metrics.actual[{i}]");
        if topology.schedule(e.a, e.b).is_none() {
            return Err(invalid(&loc, format!("{}-{} is not a declared link", e.a, e.b)));
        }
        positive(&loc, e.value)?;
        model.set_actual(e.a, e.b, Metric::from_f64(e.value));
    }
    for s in topology.schedules() {
        if !s.up.is_empty() && model.actual(s.a, s.b).is_none() {
            return Err(invalid(
                "metrics.actual",
                format!("no actual value for link {}-{}", s.a, s.b),
            ));
        }
    }
    Ok(model)
}
