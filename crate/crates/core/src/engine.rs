//! Synchronous execution: the map from one configuration to the next.
//!
//! Every step applies the local rule once per occupied node (ascending node
//! index), validates the emitted ports, then relocates all movers at once.

use std::collections::HashSet;
use std::io::Write;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{NodeId, PortGraph};
use crate::monitor::{Monitor, Verdict};
use crate::state::{AgentId, AgentState, Port};
use crate::trace::TraceRecord;

/// A deterministic local rule.
///
/// `agents` holds every agent at one node, sorted by id, with `pin` already
/// set. The rule sees only the node degree and these states.
pub trait LocalRule: Sync {
    fn name(&self) -> &'static str;
    fn apply(&self, degree: usize, agents: &mut [AgentState]);
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SetupError {
    #[error("{ids} ids for {k} agents")]
    LengthMismatch { ids: usize, k: usize },
    #[error("duplicate agent id {0}")]
    DuplicateId(u32),
    #[error("agent ids must be positive")]
    ZeroId,
    #[error("node {node} does not exist (n = {n})")]
    BadNode { node: usize, n: usize },
    #[error("k = {k} exceeds n = {n}")]
    KExceedsN { k: usize, n: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StepError {
    #[error("rule emitted port {port} for agent {agent} at node {node} (degree {degree})")]
    RuleEmittedInvalidPort {
        agent: AgentId,
        node: NodeId,
        port: Port,
        degree: usize,
    },
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Step(#[from] StepError),
    #[error("trace output failed: {0}")]
    Trace(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Agent {
    pub state: AgentState,
    pub node: NodeId,
}

/// One global state: every agent's memory and location, plus the step index.
/// Agents are kept sorted by id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Configuration {
    pub t: u64,
    pub agents: Vec<Agent>,
}

impl Configuration {
    pub fn k(&self) -> usize {
        self.agents.len()
    }

    pub fn agent(&self, id: AgentId) -> Option<&Agent> {
        self.agents
            .binary_search_by_key(&id, |a| a.state.id)
            .ok()
            .map(|i| &self.agents[i])
    }

    pub fn all_distinct(&self) -> bool {
        let mut seen = HashSet::with_capacity(self.agents.len());
        self.agents.iter().all(|a| seen.insert(a.node))
    }

    /// Agent indices grouped by node, nodes ascending, ids ascending within.
    pub fn by_node(&self) -> Vec<(NodeId, Vec<usize>)> {
        let mut order: Vec<usize> = (0..self.agents.len()).collect();
        order.sort_by_key(|&i| self.agents[i].node);
        let mut out: Vec<(NodeId, Vec<usize>)> = Vec::new();
        for i in order {
            let node = self.agents[i].node;
            match out.last_mut() {
                Some((v, list)) if *v == node => list.push(i),
                _ => out.push((node, vec![i])),
            }
        }
        out
    }

    /// Number of distinct occupied nodes.
    pub fn occupied(&self) -> usize {
        self.agents
            .iter()
            .map(|a| a.node)
            .collect::<HashSet<_>>()
            .len()
    }

    pub fn max_level(&self) -> u32 {
        self.agents.iter().map(|a| a.state.level).max().unwrap_or(0)
    }
}

/// Start node for each agent, by agent index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub nodes: Vec<NodeId>,
}

impl Placement {
    pub fn k(&self) -> usize {
        self.nodes.len()
    }

    /// Number of distinct start nodes.
    pub fn l(&self) -> usize {
        self.nodes.iter().collect::<HashSet<_>>().len()
    }

    /// All agents on one node.
    pub fn rooted(k: usize, node: NodeId) -> Self {
        Placement {
            nodes: vec![node; k],
        }
    }

    /// Chooses `l` distinct nodes uniformly, gives each one agent, and spreads
    /// the remaining `k - l` agents uniformly over them.
    pub fn random(g: &PortGraph, k: usize, l: usize, seed: u64) -> Result<Self, SetupError> {
        let n = g.node_count();
        if !(1 <= l && l <= k && k <= n) {
            return Err(SetupError::InvalidParams(format!(
                "need 1 <= l <= k <= n, got l = {l}, k = {k}, n = {n}"
            )));
        }
        let mut rng = stream(seed, 1);
        let starts: Vec<NodeId> = index::sample(&mut rng, n, l)
            .into_iter()
            .map(NodeId)
            .collect();
        let mut nodes = starts.clone();
        for _ in l..k {
            nodes.push(starts[rng.gen_range(0..l)]);
        }
        nodes.shuffle(&mut rng);
        Ok(Placement { nodes })
    }
}

/// How agent identifiers are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IdScheme {
    /// A random permutation of `1..=k`.
    Perm,
    /// Distinct random values in `1..=k²`.
    Poly,
}

impl IdScheme {
    pub fn idmax(self, k: usize) -> u32 {
        match self {
            IdScheme::Perm => k as u32,
            IdScheme::Poly => (k * k) as u32,
        }
    }

    pub fn assign(self, k: usize, seed: u64) -> Vec<AgentId> {
        let mut rng = stream(seed, 2);
        match self {
            IdScheme::Perm => {
                let mut ids: Vec<u32> = (1..=k as u32).collect();
                ids.shuffle(&mut rng);
                ids.into_iter().map(AgentId).collect()
            }
            IdScheme::Poly => index::sample(&mut rng, k * k, k)
                .into_iter()
                .map(|i| AgentId(i as u32 + 1))
                .collect(),
        }
    }
}

impl std::str::FromStr for IdScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "perm" => Ok(IdScheme::Perm),
            "poly" => Ok(IdScheme::Poly),
            other => Err(format!(
                "unknown id scheme {other:?} (expected perm or poly)"
            )),
        }
    }
}

fn stream(seed: u64, which: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which);
    rng
}

/// Every agent in the initial state at its start node, `t = 0`.
pub fn initial_configuration(
    g: &PortGraph,
    placement: &Placement,
    ids: &[AgentId],
) -> Result<Configuration, SetupError> {
    let k = placement.k();
    let n = g.node_count();
    if ids.len() != k {
        return Err(SetupError::LengthMismatch { ids: ids.len(), k });
    }
    if k > n {
        return Err(SetupError::KExceedsN { k, n });
    }
    let mut seen = HashSet::with_capacity(k);
    for id in ids {
        if id.0 == 0 {
            return Err(SetupError::ZeroId);
        }
        if !seen.insert(*id) {
            return Err(SetupError::DuplicateId(id.0));
        }
    }
    let mut agents = Vec::with_capacity(k);
    for (id, node) in ids.iter().zip(&placement.nodes) {
        if node.0 >= n {
            return Err(SetupError::BadNode { node: node.0, n });
        }
        agents.push(Agent {
            state: AgentState::initial(*id),
            node: *node,
        });
    }
    agents.sort_by_key(|a| a.state.id);
    Ok(Configuration { t: 0, agents })
}

/// Computes `C_{t+1}` from `C_t`.
pub fn step(
    g: &PortGraph,
    c: &Configuration,
    rule: &dyn LocalRule,
) -> Result<Configuration, StepError> {
    let mut next = c.clone();
    next.t += 1;
    let mut buf: Vec<AgentState> = Vec::new();
    for (node, members) in c.by_node() {
        let degree = g.degree(node);
        buf.clear();
        buf.extend(members.iter().map(|&i| c.agents[i].state.clone()));
        rule.apply(degree, &mut buf);
        for (&i, s) in members.iter().zip(buf.drain(..)) {
            if s.pout.get() < -1 || s.pout.get() >= degree as i32 {
                return Err(StepError::RuleEmittedInvalidPort {
                    agent: s.id,
                    node,
                    port: s.pout,
                    degree,
                });
            }
            next.agents[i].state = s;
        }
    }
    for a in &mut next.agents {
        if a.state.pout.is_none() {
            a.state.pin = Port::NONE;
        } else {
            let (to, back) = g
                .neighbor_via(a.node, a.state.pout)
                .expect("pout validated against degree");
            a.node = to;
            a.state.pin = back;
        }
    }
    Ok(next)
}

fn moved(c: &Configuration) -> bool {
    c.agents.iter().any(|a| !a.state.pin.is_none())
}

/// All agents on distinct nodes and a probe step moves nobody. `c` is not
/// modified.
pub fn is_legitimate(g: &PortGraph, c: &Configuration, rule: &dyn LocalRule) -> bool {
    c.all_distinct() && matches!(step(g, c, rule), Ok(next) if !moved(&next))
}

/// Default step cap: `64 · m′ · (⌊log2 ℓ⌋ + 2)`, at least 1000.
pub fn default_max_steps(m_prime: usize, l: usize) -> u64 {
    let bound = 64 * m_prime as u64 * (floor_log2(l) as u64 + 2);
    bound.max(1000)
}

pub fn floor_log2(x: usize) -> u32 {
    if x == 0 {
        0
    } else {
        usize::BITS - 1 - x.leading_zeros()
    }
}

/// Metrics of one execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    /// Least `t` with `C_t` legitimate; `None` on timeout.
    pub steps_to_dispersion: Option<u64>,
    pub timed_out: bool,
    pub max_level_observed: u32,
    pub m_prime: usize,
    pub l: usize,
    pub invariant_verdicts: Vec<Verdict>,
    pub moves_total: u64,
}

impl RunResult {
    pub fn all_pass(&self) -> bool {
        self.invariant_verdicts.iter().all(|v| v.pass)
    }

    pub fn failed(&self) -> impl Iterator<Item = &Verdict> {
        self.invariant_verdicts.iter().filter(|v| !v.pass)
    }
}

/// A finished execution.
#[derive(Debug, Clone)]
pub struct Run {
    pub result: RunResult,
    pub last: Configuration,
}

/// Steps until legitimate or `max_steps`, feeding every configuration to the
/// monitors and, if given, to the trace sink.
pub fn run(
    g: &PortGraph,
    c0: Configuration,
    rule: &dyn LocalRule,
    max_steps: u64,
    monitors: &mut [Box<dyn Monitor>],
    mut trace: Option<&mut dyn Write>,
) -> Result<Run, RunError> {
    let k = c0.k();
    let l = c0.occupied();
    let mut cur = c0;
    let mut max_level = cur.max_level();
    let mut moves_total = 0u64;
    for m in monitors.iter_mut() {
        m.observe(g, None, &cur);
    }
    if let Some(w) = trace.as_deref_mut() {
        TraceRecord::from(&cur).write_line(w)?;
    }
    let steps = loop {
        let next = step(g, &cur, rule)?;
        let any_moved = moved(&next);
        if !any_moved && cur.all_distinct() {
            break Some(cur.t);
        }
        if cur.t >= max_steps {
            break None;
        }
        moves_total += next
            .agents
            .iter()
            .filter(|a| !a.state.pin.is_none())
            .count() as u64;
        max_level = max_level.max(next.max_level());
        for m in monitors.iter_mut() {
            m.observe(g, Some(&cur), &next);
        }
        if let Some(w) = trace.as_deref_mut() {
            TraceRecord::from(&next).write_line(w)?;
        }
        cur = next;
    };
    for m in monitors.iter_mut() {
        m.finish(g, &cur);
    }
    let result = RunResult {
        steps_to_dispersion: steps,
        timed_out: steps.is_none(),
        max_level_observed: max_level,
        m_prime: g.m_prime(k),
        l,
        invariant_verdicts: monitors.iter().map(|m| m.verdict()).collect(),
        moves_total,
    };
    Ok(Run { result, last: cur })
}
