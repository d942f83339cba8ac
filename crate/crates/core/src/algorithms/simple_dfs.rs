use crate::engine::LocalRule;
use crate::state::{AgentMode, AgentState, Port};

use super::settled_index;

/// Depth-first dispersion for agents that all start on one node.
///
/// Unsettled agents travel as one group. At an unsettled node the smallest
/// id settles and records the outgoing port in `last`. At a settled node the
/// group backtracks if it arrived through a port other than `last`,
/// otherwise it advances `last` and leaves through it.
#[derive(Debug, Clone, Copy, Default)]
pub struct SimpleDfs;

impl LocalRule for SimpleDfs {
    fn name(&self) -> &'static str {
        "simple-dfs"
    }

    fn apply(&self, degree: usize, agents: &mut [AgentState]) {
        for a in agents.iter_mut() {
            a.pout = Port::NONE;
        }
        if agents.len() < 2 {
            return;
        }
        let out = match settled_index(agents) {
            None => {
                // agents are sorted by id
                let b = &mut agents[0];
                b.mode = AgentMode::Settled;
                b.last = b.pin.next(degree);
                b.last
            }
            Some(s) => {
                // The group moves together, so its members share one pin;
                // take the smallest-id unsettled agent's when they do not.
                let p = agents
                    .iter()
                    .find(|a| !a.is_settled())
                    .map(|a| a.pin)
                    .expect("at least two agents, one settled");
                let settled = &mut agents[s];
                if settled.last != p {
                    p
                } else {
                    settled.last = settled.last.next(degree);
                    settled.last
                }
            }
        };
        for a in agents.iter_mut().filter(|a| !a.is_settled()) {
            a.pout = out;
        }
    }
}
