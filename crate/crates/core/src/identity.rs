//! Node identities, the end-to-end key ring and the keyed authenticator.
//!
//! Authenticators are a 64-bit keyed digest over a length-prefixed field
//! encoding. Unforgeability is a property of the model rather than of the
//! mixer: the only way to obtain a [`SymKey`] is through [`KeyRing::key`],
//! which refuses callers that do not hold the pair key.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::qos::Metric;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Query identifier Q.
pub type QueryId = u64;

/// Symmetric key shared by exactly two end nodes.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct SymKey(u64);

impl fmt::Debug for SymKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SymKey(..)")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Authenticator(pub u64);

impl fmt::Display for Authenticator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

/// One field of an authenticated message.
#[derive(Debug, Clone, Copy)]
pub enum Field<'a> {
    Node(NodeId),
    Query(QueryId),
    Nodes(&'a [NodeId]),
    Metrics(&'a [Metric]),
}

const TAG_NODE: u8 = 1;
const TAG_QUERY: u8 = 2;
const TAG_NODES: u8 = 3;
const TAG_METRICS: u8 = 4;

/// Canonical length-prefixed encoding. Each field is `tag || u32 len || payload`,
/// which makes the encoding injective over field lists.
pub fn encode_fields(fields: &[Field<'_>], out: &mut Vec<u8>) {
    for field in fields {
        match field {
            Field::Node(n) => {
                out.push(TAG_NODE);
                out.extend_from_slice(&4u32.to_be_bytes());
                out.extend_from_slice(&n.0.to_be_bytes());
            }
            Field::Query(q) => {
                out.push(TAG_QUERY);
                out.extend_from_slice(&8u32.to_be_bytes());
                out.extend_from_slice(&q.to_be_bytes());
            }
            Field::Nodes(ns) => {
                out.push(TAG_NODES);
                out.extend_from_slice(&((ns.len() * 4) as u32).to_be_bytes());
                for n in ns.iter() {
                    out.extend_from_slice(&n.0.to_be_bytes());
                }
            }
            Field::Metrics(ms) => {
                out.push(TAG_METRICS);
                out.extend_from_slice(&((ms.len() * 8) as u32).to_be_bytes());
                for m in ms.iter() {
                    out.extend_from_slice(&m.micros().to_be_bytes());
                }
            }
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Keyed digest f_K over the canonical encoding of `fields`.
pub fn f_k(key: &SymKey, fields: &[Field<'_>]) -> Authenticator {
    let mut bytes = Vec::with_capacity(64);
    encode_fields(fields, &mut bytes);
    let mut h = splitmix64(key.0);
    for chunk in bytes.chunks(8) {
        let mut word = [0u8; 8];
        word[..chunk.len()].copy_from_slice(chunk);
        h = splitmix64(h ^ u64::from_be_bytes(word)).rotate_left(17) ^ key.0;
    }
    Authenticator(splitmix64(h ^ (bytes.len() as u64)))
}

/// Unkeyed 64-bit FNV-1a, used for message and trace digests.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Which node pairs share an end-to-end key. Immutable after scenario load.
#[derive(Debug, Clone, Default)]
pub struct KeyRing {
    pairs: BTreeSet<(NodeId, NodeId)>,
}

fn ordered(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl KeyRing {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn share(&mut self, a: NodeId, b: NodeId) {
        if a != b {
            self.pairs.insert(ordered(a, b));
        }
    }

    pub fn shares(&self, a: NodeId, b: NodeId) -> bool {
        self.pairs.contains(&ordered(a, b))
    }

    pub fn pairs(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.pairs.iter().copied()
    }

    /// Hands `holder` the key it shares with `peer`. K(S,T) = K(T,S).
    pub fn key(&self, holder: NodeId, peer: NodeId) -> Result<SymKey, SimError> {
        if !self.shares(holder, peer) {
            return Err(SimError::KeyAccess { node: holder, peer });
        }
        let (a, b) = ordered(holder, peer);
        Ok(SymKey(splitmix64(
            (u64::from(a.0) << 32 | u64::from(b.0)) ^ 0x5eed_c0de_d00d_f00d,
        )))
    }

    pub fn authenticate(
        &self,
        holder: NodeId,
        peer: NodeId,
        fields: &[Field<'_>],
    ) -> Result<Authenticator, SimError> {
        Ok(f_k(&self.key(holder, peer)?, fields))
    }
}
