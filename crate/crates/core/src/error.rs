use thiserror::Error;

use crate::identity::NodeId;
use crate::simcore::Time;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid edge: a node cannot link to itself ({0})")]
    InvalidEdge(NodeId),

    #[error("unknown node {0}")]
    UnknownNode(NodeId),

    #[error("invalid schedule for {a}-{b}: {reason}")]
    InvalidSchedule { a: NodeId, b: NodeId, reason: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("event scheduled at {at} before current time {now}")]
    Ordering { at: Time, now: Time },

    #[error("node {node} has no key shared with {peer}")]
    KeyAccess { node: NodeId, peer: NodeId },

    #[error("node {node} is not incident to link {a}-{b}")]
    NotIncident { node: NodeId, a: NodeId, b: NodeId },

    #[error("invalid metric input: {0}")]
    InvalidMetric(String),

    #[error("invalid route: {0}")]
    InvalidRoute(String),

    #[error("discovery for {0} already under way")]
    DiscoveryActive(NodeId),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AttackError {
    #[error("unknown attack `{0}`")]
    UnknownAttack(String),

    #[error("attack `{name}` requires the arbitrary adversary class (independent adversaries cannot {what})")]
    ClassMismatch { name: String, what: String },

    #[error("attack `{name}` is missing parameter `{param}`")]
    MissingParam { name: String, param: &'static str },

    #[error("attack `{name}`: {msg}")]
    InvalidParam { name: String, msg: String },
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: parse error at line {line}, column {column}: {msg}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        msg: String,
    },

    #[error("{path}: {location}: {msg}")]
    Validation {
        path: String,
        location: String,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ScenarioError {
    pub(crate) fn validation(location: impl Into<String>, msg: impl Into<String>) -> Self {
        ScenarioError::Validation {
            path: "<memory>".into(),
            location: location.into(),
            msg: msg.into(),
        }
    }

    pub(crate) fn with_path(self, p: &str) -> Self {
        match self {
            ScenarioError::Parse {
                line, column, msg, ..
            } => ScenarioError::Parse {
                path: p.into(),
                line,
                column,
                msg,
            },
            ScenarioError::Validation { location, msg, .. } => ScenarioError::Validation {
                path: p.into(),
                location,
                msg,
            },
            ScenarioError::Io { source, .. } => ScenarioError::Io {
                path: p.into(),
                source,
            },
        }
    }
}
