//! Link metrics, route-metric aggregation and the accuracy bounds used by the
//! augmented protocol.
//!
//! Metrics travel as fixed-point integers (micro-units) so that the prefix
//! comparison on the return path is an exact equality and authenticators are
//! computed over a bit-exact encoding.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::identity::NodeId;

pub const METRIC_SCALE: i64 = 1_000_000;

/// Fixed-point link metric, 1 unit = 10^-6.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Metric(i64);

impl Metric {
    pub const ZERO: Metric = Metric(0);

    pub fn from_micros(m: i64) -> Self {
        Metric(m)
    }

    pub fn from_f64(v: f64) -> Self {
        Metric((v * METRIC_SCALE as f64).round() as i64)
    }

    pub fn micros(self) -> i64 {
        self.0
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / METRIC_SCALE as f64
    }

    pub fn saturating_add(self, other: Metric) -> Metric {
        Metric(self.0.saturating_add(other.0))
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_f64())
    }
}

/// Route-metric aggregate g.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GKind {
    Add,
    Max,
    Min,
    /// Product, handled as a sum of logarithms.
    Mul,
}

impl GKind {
    pub const ALL: [GKind; 4] = [GKind::Add, GKind::Max, GKind::Min, GKind::Mul];
}

/// What the link metric measures. Node-local quantities cannot be checked by
/// the neighbor at the other end of the link and are refused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MetricSource {
    #[default]
    Measured,
    Administrative,
    RelayWillingness,
    Battery,
}

impl MetricSource {
    pub fn is_link_metric(self) -> bool {
        matches!(self, MetricSource::Measured | MetricSource::Administrative)
    }
}

/// |m_own - m_reported| < ε.
pub fn check_metric_consistency(m_own: f64, m_reported: f64, epsilon: f64) -> bool {
    (m_own - m_reported).abs() < epsilon
}

/// Route metric g over a list of link metrics.
pub fn route_metric(kind: GKind, metrics: &[f64]) -> Result<f64, SimError> {
    if metrics.is_empty() {
        return Err(SimError::InvalidMetric("empty metric list".into()));
    }
    Ok(match kind {
        GKind::Add => metrics.iter().sum(),
        GKind::Max => metrics.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        GKind::Min => metrics.iter().copied().fold(f64::INFINITY, f64::min),
        GKind::Mul => {
            if metrics.iter().any(|m| *m <= 0.0) {
                return Err(SimError::InvalidMetric(
                    "product aggregate requires strictly positive metrics".into(),
                ));
            }
            let logs: Vec<f64> = metrics.iter().map(|m| m.ln()).collect();
            route_metric(GKind::Add, &logs)?.exp()
        }
    })
}

/// Accuracy tolerance for a route of `n` links.
pub fn delta_good(kind: GKind, n: usize, epsilon: f64, delta_tilde: f64) -> f64 {
    let n = n as f64;
    match kind {
        // for products the additive bound applies to the log-metrics
        GKind::Add | GKind::Mul => n * n * epsilon + n * delta_tilde,
        GKind::Max | GKind::Min => n * epsilon + delta_tilde,
    }
}

/// Aggregate over fixed-point metrics, used for the stored prefix metric.
/// Exact for add/max/min; products are quantized after the log-domain sum.
pub fn aggregate(kind: GKind, metrics: &[Metric]) -> Option<Metric> {
    if metrics.is_empty() {
        return None;
    }
    Some(match kind {
        GKind::Add => metrics
            .iter()
            .fold(Metric::ZERO, |acc, m| acc.saturating_add(*m)),
        GKind::Max => *metrics.iter().max()?,
        GKind::Min => *metrics.iter().min()?,
        GKind::Mul => {
            // sorted so the result does not depend on list orientation
            let mut sorted = metrics.to_vec();
            sorted.sort();
            let vals: Vec<f64> = sorted.iter().map(|m| m.to_f64()).collect();
            Metric::from_f64(route_metric(GKind::Mul, &vals).unwrap_or(f64::NAN))
        }
    })
}

/// |g(reported) - g(actual)|, computed exactly in fixed point for add/max/min
/// and in the log domain for products.
pub fn metric_error(kind: GKind, reported: &[Metric], actual: &[Metric]) -> Result<f64, SimError> {
    if reported.len() != actual.len() {
        return Err(SimError::InvalidMetric(format!(
            "reported {} metrics for {} links",
            reported.len(),
            actual.len()
        )));
    }
    if reported.is_empty() {
        return Err(SimError::InvalidMetric("empty metric list".into()));
    }
    match kind {
        GKind::Mul => {
            let log_sum = |ms: &[Metric]| -> Result<f64, SimError> {
                let logs = ms
                    .iter()
                    .map(|m| {
                        if m.micros() <= 0 {
                            Err(SimError::InvalidMetric(
                                "product aggregate requires strictly positive metrics".into(),
                            ))
                        } else {
                            Ok(m.to_f64().ln())
                        }
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                route_metric(GKind::Add, &logs)
            };
            Ok((log_sum(reported)? - log_sum(actual)?).abs())
        }
        _ => {
            let r = i128::from(aggregate_micros(kind, reported));
            let a = i128::from(aggregate_micros(kind, actual));
            Ok((r - a).unsigned_abs() as f64 / METRIC_SCALE as f64)
        }
    }
}

fn aggregate_micros(kind: GKind, ms: &[Metric]) -> i64 {
    match kind {
        GKind::Add => ms.iter().map(|m| m.micros()).sum(),
        GKind::Max => ms.iter().map(|m| m.micros()).max().unwrap_or(0),
        GKind::Min => ms.iter().map(|m| m.micros()).min().unwrap_or(0),
        GKind::Mul => unreachable!(),
    }
}

fn edge(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Ground-truth link metrics plus the measurement behavior of every node.
#[derive(Debug, Clone)]
pub struct LinkMetricModel {
    pub kind: GKind,
    pub epsilon: f64,
    pub delta_tilde: f64,
    pub source: MetricSource,
    actual: BTreeMap<(NodeId, NodeId), Metric>,
    noise_seed: u64,
    bias: BTreeMap<NodeId, Metric>,
}

impl LinkMetricModel {
    pub fn new(kind: GKind, epsilon: f64, delta_tilde: f64) -> Self {
        LinkMetricModel {
            kind,
            epsilon,
            delta_tilde,
            source: MetricSource::Measured,
            actual: BTreeMap::new(),
            noise_seed: 0,
            bias: BTreeMap::new(),
        }
    }

    pub fn administrative(mut self) -> Self {
        self.source = MetricSource::Administrative;
        self
    }

    pub fn is_administrative(&self) -> bool {
        self.source == MetricSource::Administrative
    }

    pub fn set_actual(&mut self, a: NodeId, b: NodeId, value: Metric) {
        self.actual.insert(edge(a, b), value);
    }

    pub fn actual(&self, a: NodeId, b: NodeId) -> Option<Metric> {
        self.actual.get(&edge(a, b)).copied()
    }

    pub fn actual_values(&self) -> impl Iterator<Item = ((NodeId, NodeId), Metric)> + '_ {
        self.actual.iter().map(|(k, v)| (*k, *v))
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.noise_seed = seed;
        self
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.noise_seed = seed;
    }

    /// Measurement offset applied to every link `node` measures. Used for
    /// adversaries that report a consistently skewed metric.
    pub fn set_bias(&mut self, node: NodeId, bias: Metric) {
        self.bias.insert(node, bias);
    }

    pub fn epsilon_micros(&self) -> i64 {
        Metric::from_f64(self.epsilon).micros()
    }

    fn noise(&self, node: NodeId, a: NodeId, b: NodeId) -> i64 {
        let bound = Metric::from_f64(self.delta_tilde).micros();
        if bound <= 0 || self.is_administrative() {
            return 0;
        }
        let h = mix(
            self.noise_seed
                ^ mix(u64::from(node.0) << 42 ^ u64::from(a.0) << 21 ^ u64::from(b.0)),
        );
        let span = (2 * bound + 1) as u64;
        (h % span) as i64 - bound
    }

    /// The value `node` computes for its incident link `(a, b)`.
    pub fn measure(&self, node: NodeId, a: NodeId, b: NodeId) -> Result<Metric, SimError> {
        if node != a && node != b {
            return Err(SimError::NotIncident { node, a, b });
        }
        let (a, b) = edge(a, b);
        let actual = self
            .actual(a, b)
            .ok_or_else(|| SimError::InvalidMetric(format!("no metric declared for {a}-{b}")))?;
        let bias = self.bias.get(&node).copied().unwrap_or(Metric::ZERO);
        Ok(Metric::from_micros(
            actual.micros() + self.noise(node, a, b) + bias.micros(),
        ))
    }

    /// The ε check between a node's own measurement and a reported value.
    pub fn consistent(&self, own: Metric, reported: Metric) -> bool {
        if self.is_administrative() {
            return own == reported;
        }
        match self.kind {
            GKind::Mul => {
                if own.micros() <= 0 || reported.micros() <= 0 {
                    return false;
                }
                check_metric_consistency(own.to_f64().ln(), reported.to_f64().ln(), self.epsilon)
            }
            _ => (own.micros() - reported.micros()).abs() < self.epsilon_micros(),
        }
    }
}
