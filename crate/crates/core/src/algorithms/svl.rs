use crate::engine::LocalRule;
use crate::state::{AgentMode, AgentState, Port};

use super::settled_index;

/// Dispersion without global knowledge in `O(m′ log ℓ)` steps.
///
/// Every agent starts as a leader. When leaders meet, the strongest one
/// (by `(level, leaderid)`) turns the others into zombies; it gains a level
/// whenever it meets a zombie of its own level. A leader runs a DFS using the
/// `last` pointers of its minions (settled agents stamped with its level and
/// id), settling one zombie on each unsettled node it reaches. Zombies chase
/// leaders along `last` pointers. Movement is split over four timeslots:
/// leaders advance in slot 0 and backtrack in slot 1, zombies at a node with
/// a zombie as strong as the settled agent move in slot 2, and weaker
/// zombies move in slots 2 and 3.
#[derive(Debug, Clone, Copy, Default)]
pub struct Svl;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Anchor {
    Leader(usize),
    Settled(usize),
}

/// The agent that drives the node: the unique leader among the strongest
/// agents, else the settled agent. `None` when neither exists, which happens
/// only if zombies outrank every leader on an unsettled node.
fn anchor(agents: &[AgentState], settled: Option<usize>) -> Option<Anchor> {
    let top = agents.iter().map(AgentState::strength).max()?;
    let mut leaders = agents
        .iter()
        .enumerate()
        .filter(|(_, a)| a.is_leader() && a.strength() == top)
        .map(|(i, _)| i);
    match leaders.next() {
        Some(i) => {
            assert!(
                leaders.next().is_none(),
                "two leaders share strength {top:?}; leader ids must be distinct"
            );
            Some(Anchor::Leader(i))
        }
        None => settled.map(Anchor::Settled),
    }
}

fn is_minion(settled: &AgentState, leader: &AgentState) -> bool {
    settled.level == leader.level && settled.leaderid == leader.leaderid
}

impl LocalRule for Svl {
    fn name(&self) -> &'static str {
        "svl"
    }

    fn apply(&self, degree: usize, agents: &mut [AgentState]) {
        let settled = settled_index(agents);
        let Some(anchor) = anchor(agents, settled) else {
            // No defined action for zombies alone above every leader on an
            // unsettled node; the no-strong-zombie monitor reports it.
            for a in agents.iter_mut() {
                a.pout = Port::NONE;
                a.slot = (a.slot + 1) % 4;
            }
            return;
        };
        for a in agents.iter_mut() {
            a.pout = Port::NONE;
        }
        let head = match anchor {
            Anchor::Leader(i) | Anchor::Settled(i) => i,
        };
        for (i, a) in agents.iter_mut().enumerate() {
            if i != head && a.is_leader() {
                a.mode = AgentMode::Zombie;
            }
        }
        if let Anchor::Leader(l) = anchor {
            let leader = &mut agents[l];
            if !leader.pin.is_none() {
                leader.inport = leader.pin;
            }
        }

        if agents.len() >= 2 {
            match anchor {
                Anchor::Leader(l) => lead(degree, agents, l, settled),
                Anchor::Settled(s) => chase(agents, s),
            }
        }

        for a in agents.iter_mut() {
            a.slot = (a.slot + 1) % 4;
        }
    }
}

/// Active leader `l`: level up, then settle, recruit, backtrack or advance.
fn lead(degree: usize, agents: &mut [AgentState], l: usize, settled: Option<usize>) {
    let level = agents[l].level;
    if agents.iter().any(|a| a.is_zombie() && a.level == level) {
        agents[l].level += 1;
    }
    let leader = agents[l].clone();
    let stamp = |s: &mut AgentState| {
        s.level = leader.level;
        s.leaderid = leader.leaderid;
        s.last = leader.inport;
    };
    match settled {
        None => {
            // Any zombie will do; the smallest id keeps runs reproducible.
            let z = agents
                .iter()
                .position(|a| a.is_zombie())
                .expect("every non-leader on an unsettled node is a zombie");
            agents[z].mode = AgentMode::Settled;
            stamp(&mut agents[z]);
        }
        Some(s) if !is_minion(&agents[s], &leader) => stamp(&mut agents[s]),
        Some(s) if leader.inport != agents[s].last => {
            set_pout_except(agents, s, leader.inport);
        }
        Some(s) if leader.slot == 0 => {
            let out = leader.inport.next(degree);
            set_pout_except(agents, s, out);
            agents[s].last = out;
        }
        Some(_) => {}
    }
}

/// Settled agent `s` leads: zombies follow its `last` pointer in slot 2, and
/// also in slot 3 when every zombie here is weaker than `s`.
fn chase(agents: &mut [AgentState], s: usize) {
    let top_zombie = agents
        .iter()
        .filter(|a| a.is_zombie())
        .map(|a| a.level)
        .max()
        .expect("co-located leaders were just turned into zombies");
    let anchor = &agents[s];
    let go = (top_zombie < anchor.level && matches!(anchor.slot, 2 | 3))
        || (top_zombie == anchor.level && anchor.slot == 2);
    if go {
        let out = anchor.last;
        set_pout_except(agents, s, out);
    }
}

fn set_pout_except(agents: &mut [AgentState], skip: usize, port: Port) {
    for (i, a) in agents.iter_mut().enumerate() {
        if i != skip {
            a.pout = port;
        }
    }
}
