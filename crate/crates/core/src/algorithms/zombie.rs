use crate::engine::LocalRule;
use crate::state::{AgentMode, AgentState, Port};

use super::settled_index;

/// The `O(m′ℓ)` zombie baseline.
///
/// Agents sharing a start node form a group named by their largest id. Each
/// group runs simple DFS, but a settled agent keeps a single
/// `(groupid, last)` slot, owned by the largest group id it has seen. A group
/// member that meets a larger group id becomes a zombie: it chases along
/// `last` pointers every step, and once it shares a node with members of a
/// group at least as large as its own it adopts that group and moves with it.
///
/// Baseline-approximate choices (the protocol is only sketched in prose):
/// zombies move every step; only group members (leaders) claim a settled
/// agent's slot; at an unsettled node the smallest id present settles, except
/// that a group's last leader is kept moving while zombies accompany it.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZombieBaseline;

impl LocalRule for ZombieBaseline {
    fn name(&self) -> &'static str {
        "zombie"
    }

    fn apply(&self, degree: usize, agents: &mut [AgentState]) {
        for a in agents.iter_mut() {
            a.pout = Port::NONE;
        }
        // Group formation on first activation: everyone starting here takes
        // the largest id among them.
        if let Some(g) = agents
            .iter()
            .filter(|a| a.groupid < 0)
            .map(|a| a.id.0)
            .max()
        {
            for a in agents.iter_mut().filter(|a| a.groupid < 0) {
                a.groupid = i64::from(g);
            }
        }
        if agents.len() < 2 {
            return;
        }
        let settled = settled_index(agents);
        let top = agents.iter().map(|a| a.groupid).max().expect("non-empty");
        let group_here = agents.iter().any(|a| a.is_leader() && a.groupid == top);

        for a in agents.iter_mut().filter(|a| !a.is_settled()) {
            if a.groupid < top {
                if a.is_leader() {
                    a.mode = AgentMode::Zombie;
                }
                if group_here {
                    a.groupid = top;
                }
            }
        }

        if group_here {
            explore(degree, agents, settled, top);
        } else {
            follow(degree, agents, settled, top);
        }
    }
}

/// Group `top` is present: one DFS step with every unsettled agent in tow.
fn explore(degree: usize, agents: &mut [AgentState], settled: Option<usize>, top: i64) {
    let pin = agents
        .iter()
        .find(|a| a.is_leader() && a.groupid == top)
        .map(|a| a.pin)
        .expect("group present");
    let out = match settled {
        None => {
            let s = settler(agents);
            let b = &mut agents[s];
            b.mode = AgentMode::Settled;
            b.groupid = top;
            b.last = pin.next(degree);
            b.last
        }
        Some(s) if agents[s].groupid < top => {
            let b = &mut agents[s];
            b.groupid = top;
            b.last = pin.next(degree);
            b.last
        }
        Some(s) => {
            let b = &mut agents[s];
            if b.last != pin {
                pin
            } else {
                b.last = b.last.next(degree);
                b.last
            }
        }
    };
    for a in agents.iter_mut().filter(|a| !a.is_settled()) {
        a.pout = out;
    }
}

/// Smallest id present, unless that is the only leader and zombies are
/// with it; then the smallest-id zombie.
fn settler(agents: &[AgentState]) -> usize {
    let leaders = agents.iter().filter(|a| a.is_leader()).count();
    if leaders == 1 && agents[0].is_leader() {
        agents
            .iter()
            .position(|a| a.is_zombie())
            .expect("at least two agents")
    } else {
        0
    }
}

/// No group member here: zombies chase via the settled agent's pointer.
fn follow(degree: usize, agents: &mut [AgentState], settled: Option<usize>, top: i64) {
    let out = match settled {
        Some(s) => agents[s].last,
        None => {
            let b = &mut agents[0];
            b.mode = AgentMode::Settled;
            b.groupid = top;
            b.last = b.pin.next(degree);
            b.last
        }
    };
    for a in agents.iter_mut().filter(|a| !a.is_settled()) {
        a.pout = out;
    }
}
