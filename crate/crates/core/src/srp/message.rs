use std::fmt;

use serde::{Deserialize, Serialize};

use crate::identity::{encode_fields, fnv1a, Authenticator, Field, NodeId, QueryId};
use crate::qos::Metric;
use crate::simcore::Time;

/// Route request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rreq {
    pub src: NodeId,
    pub dst: NodeId,
    pub qid: QueryId,
    pub auth: Authenticator,
    pub node_list: Vec<NodeId>,
    /// Present only in the augmented protocol.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric_list: Option<Vec<Metric>>,
}

/// Route reply. `route` lists the intermediate nodes from T's side to S's
/// side; S and T themselves are implicit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rrep {
    pub src: NodeId,
    pub dst: NodeId,
    pub qid: QueryId,
    pub route: Vec<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric_list: Option<Vec<Metric>>,
    pub auth: Authenticator,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Packet {
    Rreq(Rreq),
    Rrep(Rrep),
}

impl Rreq {
    pub fn auth_fields(src: NodeId, dst: NodeId, qid: QueryId) -> [Field<'static>; 3] {
        [Field::Node(src), Field::Node(dst), Field::Query(qid)]
    }
}

impl Rrep {
    pub fn auth_fields<'a>(
        src: NodeId,
        dst: NodeId,
        qid: QueryId,
        route: &'a [NodeId],
        metrics: Option<&'a [Metric]>,
    ) -> Vec<Field<'a>> {
        let mut f = vec![
            Field::Node(src),
            Field::Node(dst),
            Field::Query(qid),
            Field::Nodes(route),
        ];
        if let Some(m) = metrics {
            f.push(Field::Metrics(m));
        }
        f
    }

    /// The full `{S, V1, ..., V(n-1), T}` sequence this reply describes.
    pub fn full_route(&self) -> Vec<NodeId> {
        let mut r = Vec::with_capacity(self.route.len() + 2);
        r.push(self.src);
        r.extend(self.route.iter().rev());
        r.push(self.dst);
        r
    }
}

impl Packet {
    pub fn src(&self) -> NodeId {
        match self {
            Packet::Rreq(r) => r.src,
            Packet::Rrep(r) => r.src,
        }
    }

    pub fn qid(&self) -> QueryId {
        match self {
            Packet::Rreq(r) => r.qid,
            Packet::Rrep(r) => r.qid,
        }
    }

    /// Wire encoding, length-prefixed like the authenticator input.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            Packet::Rreq(r) => {
                out.push(b'Q');
                let mut f = vec![
                    Field::Node(r.src),
                    Field::Node(r.dst),
                    Field::Query(r.qid),
                    Field::Query(r.auth.0),
                    Field::Nodes(&r.node_list),
                ];
                if let Some(m) = &r.metric_list {
                    f.push(Field::Metrics(m));
                }
                encode_fields(&f, &mut out);
            }
            Packet::Rrep(r) => {
                out.push(b'P');
                let mut f = Rrep::auth_fields(
                    r.src,
                    r.dst,
                    r.qid,
                    &r.route,
                    r.metric_list.as_deref(),
                );
                f.push(Field::Query(r.auth.0));
                encode_fields(&f, &mut out);
            }
        }
        out
    }

    pub fn digest(&self) -> u64 {
        fnv1a(&self.encode())
    }
}

fn list(f: &mut fmt::Formatter<'_>, ns: &[NodeId]) -> fmt::Result {
    f.write_str("[")?;
    for (i, n) in ns.iter().enumerate() {
        if i > 0 {
            f.write_str(",")?;
        }
        write!(f, "{}", n.0)?;
    }
    f.write_str("]")
}

impl fmt::Display for Packet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Packet::Rreq(r) => {
                write!(f, "RREQ({},{},Q={},", r.src.0, r.dst.0, r.qid)?;
                list(f, &r.node_list)?;
                f.write_str(")")
            }
            Packet::Rrep(r) => {
                write!(f, "RREP({},{},Q={},", r.src.0, r.dst.0, r.qid)?;
                list(f, &r.route)?;
                f.write_str(")")
            }
        }
    }
}

/// Output of a completed discovery at S.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteRecord {
    pub src: NodeId,
    pub dst: NodeId,
    pub qid: QueryId,
    /// `{S, V1, ..., V(n-1), T}`.
    pub route: Vec<NodeId>,
    /// Transmission time of the RREQ carrying `qid`.
    pub t1: Time,
    /// Acceptance time.
    pub t2: Time,
    /// Reported link metrics in S-to-T order (augmented mode only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Vec<Metric>>,
}

impl RouteRecord {
    pub fn link_count(&self) -> usize {
        self.route.len().saturating_sub(1)
    }

    pub fn links(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.route.windows(2).map(|w| (w[0], w[1]))
    }

    pub fn contains_link(&self, a: NodeId, b: NodeId) -> bool {
        self.links()
            .any(|(u, v)| (u, v) == (a, b) || (u, v) == (b, a))
    }
}
