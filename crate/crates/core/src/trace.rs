//! JSON Lines trace of an execution: one record per configuration.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::engine::{Agent, Configuration};
use crate::graph::NodeId;
use crate::state::{AgentId, AgentMode, AgentState, Port};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceAgent {
    pub id: AgentId,
    pub node: NodeId,
    pub mode: AgentMode,
    pub slot: u8,
    pub level: u32,
    pub leaderid: u32,
    pub last: Port,
    pub inport: Port,
    pub pin: Port,
    pub pout: Port,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: u64,
    pub agents: Vec<TraceAgent>,
}

impl From<&Configuration> for TraceRecord {
    fn from(c: &Configuration) -> Self {
        TraceRecord {
            t: c.t,
            agents: c
                .agents
                .iter()
                .map(|a| TraceAgent {
                    id: a.state.id,
                    node: a.node,
                    mode: a.state.mode,
                    slot: a.state.slot,
                    level: a.state.level,
                    leaderid: a.state.leaderid,
                    last: a.state.last,
                    inport: a.state.inport,
                    pin: a.state.pin,
                    pout: a.state.pout,
                })
                .collect(),
        }
    }
}

impl TraceRecord {
    pub fn write_line(&self, w: &mut dyn Write) -> std::io::Result<()> {
        serde_json::to_writer(&mut *w, self)?;
        w.write_all(b"\n")
    }

    /// Rebuilds the configuration. The zombie baseline's group ids are not
    /// traced and come back unset.
    pub fn to_configuration(&self) -> Configuration {
        let mut agents: Vec<Agent> = self
            .agents
            .iter()
            .map(|a| Agent {
                state: AgentState {
                    id: a.id,
                    mode: a.mode,
                    slot: a.slot,
                    level: a.level,
                    leaderid: a.leaderid,
                    last: a.last,
                    inport: a.inport,
                    pin: a.pin,
                    pout: a.pout,
                    groupid: -1,
                },
                node: a.node,
            })
            .collect();
        agents.sort_by_key(|a| a.state.id);
        Configuration { t: self.t, agents }
    }
}

pub fn read_trace<R: BufRead>(r: R) -> Result<Vec<TraceRecord>, serde_json::Error> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line.map_err(serde_json::Error::io)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}
