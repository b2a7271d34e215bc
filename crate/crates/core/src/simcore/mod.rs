//! Data-link layer model and the deterministic event queue.
//!
//! Topology is a set of per-edge up-interval schedules. A transmission started
//! at `t` occupies `[t, t + tx_time)` and reaches a neighbor only if the link
//! is up for that whole window; delivery happens after a delay drawn from the
//! seeded generator, never later than `max_link_delay`.

mod queue;

pub use queue::{Event, EventKind, EventQueue};

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::identity::NodeId;

pub type Time = u64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Nominal radio range. Connectivity comes from the link schedules.
    #[serde(default = "default_radius")]
    pub radius: f64,
    pub max_link_delay: Time,
    #[serde(default)]
    pub seed: u64,
    pub end_time: Time,
    #[serde(default = "default_tx_time")]
    pub tx_time: Time,
}

fn default_radius() -> f64 {
    1.0
}

fn default_tx_time() -> Time {
    1
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            radius: 1.0,
            max_link_delay: 2,
            seed: 0,
            end_time: 1_000,
            tx_time: 1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.max_link_delay == 0 {
            return Err(SimError::InvalidConfig("max_link_delay must be > 0".into()));
        }
        if self.end_time == 0 {
            return Err(SimError::InvalidConfig("end_time must be > 0".into()));
        }
        if self.tx_time == 0 {
            return Err(SimError::InvalidConfig("tx_time must be > 0".into()));
        }
        if self.tx_time > self.max_link_delay {
            return Err(SimError::InvalidConfig(
                "tx_time must not exceed max_link_delay".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkState {
    Up,
    Down,
}

/// Half-open up intervals `[start, end)` of one undirected link.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkSchedule {
    pub a: NodeId,
    pub b: NodeId,
    pub up: Vec<(Time, Time)>,
}

impl LinkSchedule {
    pub fn new(a: NodeId, b: NodeId, up: Vec<(Time, Time)>) -> Self {
        LinkSchedule { a, b, up }
    }

    pub fn always(a: NodeId, b: NodeId, until: Time) -> Self {
        LinkSchedule::new(a, b, vec![(0, until)])
    }

    /// Sorted, disjoint, non-empty intervals.
    pub fn check_well_formed(&self) -> Result<(), SimError> {
        let bad = |reason: String| SimError::InvalidSchedule {
            a: self.a,
            b: self.b,
            reason,
        };
        if self.a == self.b {
            return Err(SimError::InvalidEdge(self.a));
        }
        for (i, &(s, e)) in self.up.iter().enumerate() {
            if s >= e {
                return Err(bad(format!("interval {i} [{s}, {e}) is empty")));
            }
            if i > 0 && self.up[i - 1].1 > s {
                return Err(bad(format!("interval {i} overlaps or is out of order")));
            }
        }
        Ok(())
    }

    /// Well-formed and no up or down period shorter than one transmission.
    pub fn validate(&self, tx_time: Time) -> Result<(), SimError> {
        self.check_well_formed()?;
        for (i, &(s, e)) in self.up.iter().enumerate() {
            if e - s < tx_time {
                return Err(SimError::InvalidSchedule {
                    a: self.a,
                    b: self.b,
                    reason: format!("up period [{s}, {e}) shorter than a transmission"),
                });
            }
            if i > 0 && s - self.up[i - 1].1 < tx_time {
                return Err(SimError::InvalidSchedule {
                    a: self.a,
                    b: self.b,
                    reason: format!("down period before [{s}, {e}) shorter than a transmission"),
                });
            }
        }
        Ok(())
    }

    pub fn is_up(&self, t: Time) -> bool {
        self.up.iter().any(|&(s, e)| s <= t && t < e)
    }

    /// Up during the whole of `[start, end)`.
    pub fn up_throughout(&self, start: Time, end: Time) -> bool {
        self.up.iter().any(|&(s, e)| s <= start && end <= e)
    }

    /// Up at some instant of the open interval `(t1, t2)`.
    pub fn up_within(&self, t1: Time, t2: Time) -> bool {
        self.up.iter().any(|&(s, e)| s < t2 && t1 < e && s.max(t1) < e.min(t2))
    }
}

pub(crate) fn edge_key(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// All link schedules of a run.
#[derive(Debug, Clone, Default)]
pub struct Topology {
    schedules: BTreeMap<(NodeId, NodeId), LinkSchedule>,
    adjacency: BTreeMap<NodeId, Vec<NodeId>>,
}

impl Topology {
    pub fn new(schedules: impl IntoIterator<Item = LinkSchedule>) -> Result<Self, SimError> {
        let mut topo = Topology::default();
        for s in schedules {
            topo.insert(s)?;
        }
        Ok(topo)
    }

    pub fn insert(&mut self, schedule: LinkSchedule) -> Result<(), SimError> {
        schedule.check_well_formed()?;
        let key = edge_key(schedule.a, schedule.b);
        if self.schedules.contains_key(&key) {
            return Err(SimError::InvalidSchedule {
                a: key.0,
                b: key.1,
                reason: "duplicate schedule".into(),
            });
        }
        for (u, v) in [(key.0, key.1), (key.1, key.0)] {
            let adj = self.adjacency.entry(u).or_default();
            adj.push(v);
            adj.sort();
        }
        self.schedules.insert(key, schedule);
        Ok(())
    }

    pub fn schedule(&self, u: NodeId, v: NodeId) -> Option<&LinkSchedule> {
        self.schedules.get(&edge_key(u, v))
    }

    pub fn schedules(&self) -> impl Iterator<Item = &LinkSchedule> {
        self.schedules.values()
    }

    /// Nodes that share a schedule with `u`, whatever its current state.
    pub fn potential_neighbors(&self, u: NodeId) -> &[NodeId] {
        self.adjacency.get(&u).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn link_state(&self, u: NodeId, v: NodeId, t: Time) -> Result<LinkState, SimError> {
        if u == v {
            return Err(SimError::InvalidEdge(u));
        }
        Ok(match self.schedule(u, v) {
            Some(s) if s.is_up(t) => LinkState::Up,
            _ => LinkState::Down,
        })
    }

    pub fn up_throughout(&self, u: NodeId, v: NodeId, start: Time, end: Time) -> bool {
        u != v && self.schedule(u, v).is_some_and(|s| s.up_throughout(start, end))
    }

    pub fn up_within(&self, u: NodeId, v: NodeId, t1: Time, t2: Time) -> bool {
        u != v && self.schedule(u, v).is_some_and(|s| s.up_within(t1, t2))
    }
}

/// A frame arriving at `to` at time `at`. `addressed` is false for frames
/// overheard in promiscuous mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Delivery {
    pub to: NodeId,
    pub at: Time,
    pub addressed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SendOutcome {
    Delivered {
        delivery: Delivery,
        overheard: Vec<Delivery>,
    },
    /// The link was down during the transmission window; the sender's upper
    /// layer gets a failure report. Other neighbors may still overhear.
    Failed { overheard: Vec<Delivery> },
}

/// Data-link layer bound to one topology and configuration.
pub struct LinkLayer<'a> {
    pub topology: &'a Topology,
    pub config: &'a SimConfig,
}

impl<'a> LinkLayer<'a> {
    pub fn new(topology: &'a Topology, config: &'a SimConfig) -> Self {
        LinkLayer { topology, config }
    }

    /// One per-hop delay, uniform over `[tx_time, max_link_delay]`.
    pub fn draw_delay<R: Rng>(&self, rng: &mut R) -> Time {
        rng.gen_range(self.config.tx_time..=self.config.max_link_delay)
    }

    fn hears(&self, sender: NodeId, v: NodeId, now: Time) -> bool {
        self.topology
            .up_throughout(sender, v, now, now + self.config.tx_time)
    }

    /// Bcast_L: one delivery per neighbor whose link stays up for the window.
    pub fn bcast_l<R: Rng>(&self, sender: NodeId, now: Time, rng: &mut R) -> Vec<Delivery> {
        let mut out = Vec::new();
        for &v in self.topology.potential_neighbors(sender) {
            if self.hears(sender, v, now) {
                out.push(Delivery {
                    to: v,
                    at: now + self.draw_delay(rng),
                    addressed: true,
                });
            }
        }
        out
    }

    /// Send_L to one neighbor; other neighbors in range overhear it.
    pub fn send_l<R: Rng>(
        &self,
        sender: NodeId,
        receiver: NodeId,
        now: Time,
        rng: &mut R,
    ) -> Result<SendOutcome, SimError> {
        if sender == receiver {
            return Err(SimError::InvalidEdge(sender));
        }
        let mut delivery = None;
        let mut overheard = Vec::new();
        for &v in self.topology.potential_neighbors(sender) {
            if !self.hears(sender, v, now) {
                continue;
            }
            let d = Delivery {
                to: v,
                at: now + self.draw_delay(rng),
                addressed: v == receiver,
            };
            if v == receiver {
                delivery = Some(d);
            } else {
                overheard.push(d);
            }
        }
        Ok(match delivery {
            Some(delivery) => SendOutcome::Delivered {
                delivery,
                overheard,
            },
            None => SendOutcome::Failed { overheard },
        })
    }
}
