//! The local rules: simple DFS, the zombie baseline, and the level-based
//! algorithm (`svl`) that needs no global knowledge.

mod simple_dfs;
mod svl;
mod zombie;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::LocalRule;

pub use simple_dfs::SimpleDfs;
pub use svl::Svl;
pub use zombie::ZombieBaseline;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "simple-dfs")]
    SimpleDfs,
    #[serde(rename = "zombie")]
    Zombie,
    #[serde(rename = "svl")]
    Svl,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::SimpleDfs, Algorithm::Zombie, Algorithm::Svl];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::SimpleDfs => "simple-dfs",
            Algorithm::Zombie => "zombie",
            Algorithm::Svl => "svl",
        }
    }

    pub fn rule(self) -> &'static dyn LocalRule {
        match self {
            Algorithm::SimpleDfs => &SimpleDfs,
            Algorithm::Zombie => &ZombieBaseline,
            Algorithm::Svl => &Svl,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown algorithm {s:?} (expected simple-dfs, zombie or svl)"))
    }
}

/// Index of the unique settled agent, if any.
pub(crate) fn settled_index(agents: &[crate::state::AgentState]) -> Option<usize> {
    agents.iter().position(|a| a.is_settled())
}
