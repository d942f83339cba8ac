//! Per-agent protocol memory.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

/// A local port label, or `-1` for "no port" (did not move / not yet set).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Port(i32);

impl Port {
    pub const NONE: Port = Port(-1);

    pub const fn new(p: i32) -> Self {
        Port(p)
    }

    pub const fn get(self) -> i32 {
        self.0
    }

    pub fn is_none(self) -> bool {
        self.0 < 0
    }

    pub fn index(self) -> Option<usize> {
        usize::try_from(self.0).ok()
    }

    /// `(self + 1) mod degree`, evaluated literally so that `NONE` maps to 0.
    pub fn next(self, degree: usize) -> Port {
        debug_assert!(degree > 0);
        Port((self.0 + 1).rem_euclid(degree as i32))
    }
}

impl fmt::Display for Port {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u32);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Leader → Zombie → Settled; Settled is terminal. Rules that only need
/// settled/unsettled use `Leader` for unsettled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentMode {
    Leader,
    Zombie,
    Settled,
}

impl AgentMode {
    /// Position in the only allowed transition order.
    pub fn rank(self) -> u8 {
        match self {
            AgentMode::Leader => 0,
            AgentMode::Zombie => 1,
            AgentMode::Settled => 2,
        }
    }
}

/// `(level, leaderid)` compared lexicographically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Strength {
    pub level: u32,
    pub leader: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentState {
    pub id: AgentId,
    pub mode: AgentMode,
    pub slot: u8,
    pub level: u32,
    pub leaderid: u32,
    pub last: Port,
    pub inport: Port,
    pub pin: Port,
    pub pout: Port,
    /// Group identifier used by the zombie baseline only; `-1` when unset.
    #[serde(default = "unset_group")]
    pub groupid: i64,
}

fn unset_group() -> i64 {
    -1
}

impl AgentState {
    /// The common initial state: a level-0 leader that has not moved.
    pub fn initial(id: AgentId) -> Self {
        AgentState {
            id,
            mode: AgentMode::Leader,
            slot: 0,
            level: 0,
            leaderid: id.0,
            last: Port::new(0),
            inport: Port::NONE,
            pin: Port::NONE,
            pout: Port::NONE,
            groupid: -1,
        }
    }

    pub fn strength(&self) -> Strength {
        Strength {
            level: self.level,
            leader: self.leaderid,
        }
    }

    pub fn is_settled(&self) -> bool {
        self.mode == AgentMode::Settled
    }

    pub fn is_leader(&self) -> bool {
        self.mode == AgentMode::Leader
    }

    pub fn is_zombie(&self) -> bool {
        self.mode == AgentMode::Zombie
    }

    pub fn stronger_than(&self, other: &AgentState) -> bool {
        self.strength().cmp(&other.strength()) == Ordering::Greater
    }
}
