//! Per-step invariant checks and the level metrics they rely on.
//!
//! A monitor sees each configuration once, paired with its predecessor, and
//! records the first violation it finds. Monitors never touch the
//! configurations they observe.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algorithms::Algorithm;
use crate::engine::Configuration;
use crate::graph::{NodeId, PortGraph};
use crate::state::{AgentId, AgentState, Port, Strength};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub first_failure_step: Option<u64>,
    pub details: Option<String>,
}

/// Run-level facts monitors need but cannot read from a configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MonitorContext {
    /// Number of initially occupied nodes.
    pub l: usize,
    pub idmax: u32,
    pub max_degree: usize,
}

pub trait Monitor: Send {
    fn name(&self) -> &'static str;
    /// `prev` is `None` only for the initial configuration.
    fn observe(&mut self, g: &PortGraph, prev: Option<&Configuration>, cur: &Configuration);
    fn finish(&mut self, _g: &PortGraph, _last: &Configuration) {}
    fn verdict(&self) -> Verdict;
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MonitorError {
    #[error("unknown rule {0:?}")]
    UnknownRule(String),
    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),
}

/// Largest level `λ` with `λ ≤ log2 ℓ + 1`.
pub fn level_cap(l: usize) -> u32 {
    crate::engine::floor_log2(l.max(1)) + 1
}

/// Max level among the agents sharing `a`'s node, `a` included.
pub fn vlevel(c: &Configuration, a: AgentId) -> Result<u32, MonitorError> {
    let node = c.agent(a).ok_or(MonitorError::UnknownAgent(a))?.node;
    Ok(c.agents
        .iter()
        .filter(|b| b.node == node)
        .map(|b| b.state.level)
        .max()
        .unwrap_or(0))
}

/// Virtual level of every agent, in configuration order.
pub fn vlevels(c: &Configuration) -> Vec<u32> {
    let mut top: HashMap<NodeId, u32> = HashMap::new();
    for a in &c.agents {
        let e = top.entry(a.node).or_insert(0);
        *e = (*e).max(a.state.level);
    }
    c.agents.iter().map(|a| top[&a.node]).collect()
}

/// Minimum virtual level over zombies and active leaders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Lmin {
    Finite(u32),
    /// No active leader and no zombie exists.
    Infinite,
}

pub fn lmin(c: &Configuration) -> Lmin {
    let vl = vlevels(c);
    let mut count: HashMap<NodeId, usize> = HashMap::new();
    for a in &c.agents {
        *count.entry(a.node).or_insert(0) += 1;
    }
    c.agents
        .iter()
        .zip(vl)
        .filter(|(a, _)| a.state.is_zombie() || (a.state.is_leader() && count[&a.node] >= 2))
        .map(|(_, v)| v)
        .min()
        .map_or(Lmin::Infinite, Lmin::Finite)
}

/// First-failure bookkeeping shared by all monitors.
#[derive(Debug, Clone, Default)]
struct Record {
    failure: Option<(u64, String)>,
}

impl Record {
    fn fail(&mut self, t: u64, details: impl FnOnce() -> String) {
        if self.failure.is_none() {
            self.failure = Some((t, details()));
        }
    }

    fn verdict(&self, name: &str) -> Verdict {
        Verdict {
            name: name.to_string(),
            pass: self.failure.is_none(),
            first_failure_step: self.failure.as_ref().map(|f| f.0),
            details: self.failure.as_ref().map(|f| f.1.clone()),
        }
    }
}

macro_rules! verdict_impl {
    ($name:literal) => {
        fn name(&self) -> &'static str {
            $name
        }
        fn verdict(&self) -> Verdict {
            self.record.verdict($name)
        }
    };
}

/// Level never exceeds `log2 ℓ + 1`.
pub struct LevelBound {
    cap: u32,
    record: Record,
}

impl Monitor for LevelBound {
    verdict_impl!("level-bound");

    fn observe(&mut self, _: &PortGraph, _: Option<&Configuration>, cur: &Configuration) {
        if let Some(a) = cur.agents.iter().find(|a| a.state.level > self.cap) {
            let cap = self.cap;
            self.record.fail(cur.t, || {
                format!("agent {} at level {} > {cap}", a.state.id, a.state.level)
            });
        }
    }
}

pub struct SettledImmobility {
    record: Record,
}

impl Monitor for SettledImmobility {
    verdict_impl!("settled-immobility");

    fn observe(&mut self, _: &PortGraph, prev: Option<&Configuration>, cur: &Configuration) {
        let Some(prev) = prev else { return };
        for (p, c) in prev.agents.iter().zip(&cur.agents) {
            if p.state.is_settled() && (!c.state.is_settled() || c.node != p.node) {
                self.record.fail(cur.t, || {
                    format!(
                        "settled agent {} went from node {} to node {} as {:?}",
                        p.state.id, p.node, c.node, c.state.mode
                    )
                });
            }
        }
    }
}

pub struct UniqueSettled {
    record: Record,
}

impl Monitor for UniqueSettled {
    verdict_impl!("unique-settled");

    fn observe(&mut self, _: &PortGraph, _: Option<&Configuration>, cur: &Configuration) {
        let mut seen: HashMap<NodeId, AgentId> = HashMap::new();
        for a in cur.agents.iter().filter(|a| a.state.is_settled()) {
            if let Some(other) = seen.insert(a.node, a.state.id) {
                self.record.fail(cur.t, || {
                    format!(
                        "agents {other} and {} both settled at node {}",
                        a.state.id, a.node
                    )
                });
            }
        }
    }
}

pub struct ModeOrder {
    record: Record,
}

impl Monitor for ModeOrder {
    verdict_impl!("mode-order");

    fn observe(&mut self, _: &PortGraph, prev: Option<&Configuration>, cur: &Configuration) {
        let Some(prev) = prev else { return };
        for (p, c) in prev.agents.iter().zip(&cur.agents) {
            if c.state.mode.rank() < p.state.mode.rank() {
                self.record.fail(cur.t, || {
                    format!(
                        "agent {} went {:?} -> {:?}",
                        p.state.id, p.state.mode, c.state.mode
                    )
                });
            }
        }
    }
}

/// Every agent's virtual level is non-decreasing.
pub struct VlevelMonotone {
    record: Record,
}

impl Monitor for VlevelMonotone {
    verdict_impl!("vlevel-monotone");

    fn observe(&mut self, _: &PortGraph, prev: Option<&Configuration>, cur: &Configuration) {
        let Some(prev) = prev else { return };
        let before = vlevels(prev);
        let after = vlevels(cur);
        for ((a, b), c) in before.iter().zip(&after).zip(&cur.agents) {
            if b < a {
                self.record.fail(cur.t, || {
                    format!("agent {} virtual level {a} -> {b}", c.state.id)
                });
            }
        }
    }
}

/// `lmin` never decreases and is infinite once the run ends.
#[derive(Default)]
pub struct LminProgress {
    record: Record,
    last: Option<Lmin>,
    distinct: Vec<Lmin>,
}

impl LminProgress {
    /// Distinct `lmin` values seen so far, in order of appearance.
    pub fn distinct_values(&self) -> &[Lmin] {
        &self.distinct
    }
}

impl Monitor for LminProgress {
    verdict_impl!("lmin-monotone-progress");

    fn observe(&mut self, _: &PortGraph, _: Option<&Configuration>, cur: &Configuration) {
        let now = lmin(cur);
        if let Some(before) = self.last {
            if now < before {
                self.record
                    .fail(cur.t, || format!("lmin dropped from {before:?} to {now:?}"));
            }
        }
        if self.distinct.last() != Some(&now) {
            self.distinct.push(now);
        }
        self.last = Some(now);
    }

    fn finish(&mut self, _: &PortGraph, last: &Configuration) {
        let end = lmin(last);
        if end != Lmin::Infinite {
            self.record
                .fail(last.t, || format!("run ended with lmin = {end:?}"));
        }
    }
}

/// Leaders move in slots 0/1 (backtracks in slot 1 only); moves without a
/// leader happen in slots 2/3 only.
pub struct SlotDiscipline {
    record: Record,
}

impl Monitor for SlotDiscipline {
    verdict_impl!("slot-discipline");

    fn observe(&mut self, _: &PortGraph, prev: Option<&Configuration>, cur: &Configuration) {
        let Some(prev) = prev else { return };
        for (node, members) in prev.by_node() {
            let after: Vec<&AgentState> = members.iter().map(|&i| &cur.agents[i].state).collect();
            if after.iter().all(|s| s.pin.is_none()) {
                continue;
            }
            let slot = prev.agents[members[0]].state.slot;
            let leader = after.iter().find(|s| s.is_leader());
            let settled = after.iter().find(|s| s.is_settled());
            match leader {
                Some(l) => {
                    let backtrack = settled.is_some_and(|s| s.last != l.pout);
                    let ok = if backtrack { slot == 1 } else { slot == 0 };
                    if !ok {
                        self.record.fail(cur.t, || {
                            format!(
                                "leader {} {} from node {node} in slot {slot}",
                                l.id,
                                if backtrack { "backtracked" } else { "advanced" }
                            )
                        });
                    }
                }
                None => {
                    if !matches!(slot, 2 | 3) {
                        self.record.fail(cur.t, || {
                            format!("leaderless move from node {node} in slot {slot}")
                        });
                    }
                }
            }
        }
    }
}

/// No zombie is strictly stronger than every leader and settled agent on its
/// node. A node holding only zombies counts as a violation.
pub struct NoStrongZombie {
    record: Record,
}

impl Monitor for NoStrongZombie {
    verdict_impl!("no-strong-zombie");

    fn observe(&mut self, _: &PortGraph, _: Option<&Configuration>, cur: &Configuration) {
        let mut best: HashMap<NodeId, Strength> = HashMap::new();
        for a in cur.agents.iter().filter(|a| !a.state.is_zombie()) {
            let e = best.entry(a.node).or_insert(a.state.strength());
            *e = (*e).max(a.state.strength());
        }
        for a in cur.agents.iter().filter(|a| a.state.is_zombie()) {
            let dominated = best.get(&a.node).is_some_and(|&b| a.state.strength() <= b);
            if !dominated {
                self.record.fail(cur.t, || {
                    format!("zombie {} is strongest at node {}", a.state.id, a.node)
                });
            }
        }
    }
}

/// With all agents starting together, each edge is crossed at most four
/// times (a group crossing together counts once).
pub struct EdgeBudget {
    applicable: bool,
    crossings: HashMap<(NodeId, NodeId), u32>,
    record: Record,
}

impl Monitor for EdgeBudget {
    verdict_impl!("edge-budget");

    fn observe(&mut self, _: &PortGraph, prev: Option<&Configuration>, cur: &Configuration) {
        let Some(prev) = prev else { return };
        if !self.applicable {
            return;
        }
        let mut this_step: Vec<(NodeId, NodeId)> = prev
            .agents
            .iter()
            .zip(&cur.agents)
            .filter(|(_, c)| !c.state.pin.is_none())
            .map(|(p, c)| (p.node, c.node))
            .collect();
        this_step.sort();
        this_step.dedup();
        for (from, to) in this_step {
            let key = (from.min(to), from.max(to));
            let n = self.crossings.entry(key).or_insert(0);
            *n += 1;
            if *n > 4 {
                let n = *n;
                self.record.fail(cur.t, || {
                    format!("edge {{{}, {}}} crossed {n} times", key.0, key.1)
                });
            }
        }
    }
}

/// Every stored value stays in its declared range.
pub struct MemoryAudit {
    ctx: MonitorContext,
    record: Record,
}

impl Monitor for MemoryAudit {
    verdict_impl!("memory-audit");

    fn observe(&mut self, _: &PortGraph, _: Option<&Configuration>, cur: &Configuration) {
        let cap = level_cap(self.ctx.l);
        let port_hi = self.ctx.max_degree.max(1) as i32;
        let port_ok = |p: Port| (-1..port_hi).contains(&p.get());
        for a in &cur.agents {
            let s = &a.state;
            let problem = if s.level > cap {
                Some(format!("level {} > {cap}", s.level))
            } else if !(1..=self.ctx.idmax).contains(&s.leaderid) {
                Some(format!(
                    "leaderid {} outside [1, {}]",
                    s.leaderid, self.ctx.idmax
                ))
            } else if s.groupid > i64::from(self.ctx.idmax) {
                Some(format!("groupid {} > {}", s.groupid, self.ctx.idmax))
            } else if s.slot > 3 {
                Some(format!("slot {}", s.slot))
            } else {
                [
                    ("last", s.last),
                    ("inport", s.inport),
                    ("pin", s.pin),
                    ("pout", s.pout),
                ]
                .into_iter()
                .find(|(_, p)| !port_ok(*p))
                .map(|(what, p)| format!("{what} = {p} outside [-1, {port_hi})"))
            };
            if let Some(msg) = problem {
                self.record.fail(cur.t, || format!("agent {}: {msg}", s.id));
            }
        }
    }
}

/// The monitor set for a rule, by rule name.
pub fn standard_monitors(
    rule: &str,
    ctx: MonitorContext,
) -> Result<Vec<Box<dyn Monitor>>, MonitorError> {
    let alg: Algorithm = rule
        .parse()
        .map_err(|_| MonitorError::UnknownRule(rule.to_string()))?;
    Ok(monitors_for(alg, ctx))
}

pub fn monitors_for(alg: Algorithm, ctx: MonitorContext) -> Vec<Box<dyn Monitor>> {
    let r = Record::default;
    let mut out: Vec<Box<dyn Monitor>> = Vec::new();
    if alg == Algorithm::Svl {
        out.push(Box::new(LevelBound {
            cap: level_cap(ctx.l),
            record: r(),
        }));
    }
    out.push(Box::new(SettledImmobility { record: r() }));
    out.push(Box::new(UniqueSettled { record: r() }));
    out.push(Box::new(ModeOrder { record: r() }));
    if alg == Algorithm::Svl {
        out.push(Box::new(VlevelMonotone { record: r() }));
        out.push(Box::new(LminProgress::default()));
        out.push(Box::new(SlotDiscipline { record: r() }));
        out.push(Box::new(NoStrongZombie { record: r() }));
    }
    if alg == Algorithm::SimpleDfs {
        out.push(Box::new(EdgeBudget {
            applicable: ctx.l == 1,
            crossings: HashMap::new(),
            record: r(),
        }));
    }
    out.push(Box::new(MemoryAudit { ctx, record: r() }));
    out
}

/// Feeds a recorded sequence of configurations through a monitor set.
pub fn replay(
    g: &PortGraph,
    configs: &[Configuration],
    monitors: &mut [Box<dyn Monitor>],
) -> Vec<Verdict> {
    let mut prev: Option<&Configuration> = None;
    for c in configs {
        for m in monitors.iter_mut() {
            m.observe(g, prev, c);
        }
        prev = Some(c);
    }
    if let Some(last) = configs.last() {
        for m in monitors.iter_mut() {
            m.finish(g, last);
        }
    }
    monitors.iter().map(|m| m.verdict()).collect()
}
