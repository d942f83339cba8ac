//! Acceptance checks, one line per criterion.
//!
//! Runs as a plain binary (`harness = false`) and fails if any criterion
//! fails.

use std::io::BufReader;
use std::process::ExitCode;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use dispersion::algorithms::{SimpleDfs, Svl};
use dispersion::engine::{floor_log2, initial_configuration, run, step, IdScheme, Run};
use dispersion::experiment::{bound_ratio, Instance, RunConfig};
use dispersion::graph::PortEdge;
use dispersion::monitor::{level_cap, monitors_for, replay, MonitorContext};
use dispersion::trace::read_trace;
use dispersion::{AgentId, Algorithm, Family, NodeId, Placement, PortGraph};

/// Runs in the randomized svl suite.
const SUITE_RUNS: usize = 240;
/// Runs in the simple DFS suite.
const DFS_RUNS: usize = 200;
const SUITE_SEED: u64 = 20_240_601;
/// Steps ≤ STEP_CONSTANT · m′ · (⌊log2 ℓ⌋ + 2).
const STEP_CONSTANT: u64 = 64;
/// Simple DFS: steps ≤ DFS_CONSTANT · m′, each edge crossed ≤ 4 times.
const DFS_CONSTANT: u64 = 4;
const CLOSURE_RUNS: usize = 10;
const CLOSURE_STEPS: u64 = 100;
const SEPARATION_LS: [usize; 5] = [2, 4, 8, 16, 32];
const SEPARATION_SEEDS: u64 = 10;

struct Outcome {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn suite_configs(n_runs: usize, algorithm: Algorithm, seed: u64) -> Vec<RunConfig> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_runs)
        .map(|i| {
            let n = rng.gen_range(8..=256);
            let family = match i % 5 {
                0 => Family::Path { n },
                1 => Family::Ring { n },
                2 => Family::Tree { n },
                3 => Family::Grid { n },
                _ => Family::ErdosRenyi {
                    n,
                    p: (3.0 * (n as f64).ln() / n as f64).min(1.0),
                },
            };
            let k = rng.gen_range(2..=n);
            let l = if algorithm == Algorithm::SimpleDfs {
                1
            } else {
                rng.gen_range(1..=k)
            };
            let mut cfg = RunConfig::new(algorithm, family, k, l, rng.gen());
            cfg.ids = if rng.gen_bool(0.5) {
                IdScheme::Perm
            } else {
                IdScheme::Poly
            };
            cfg
        })
        .collect()
}

fn execute(cfgs: &[RunConfig]) -> Vec<(Instance, Run)> {
    cfgs.par_iter()
        .map(|cfg| {
            let inst = Instance::build(cfg).expect("suite configs are valid");
            let run = inst
                .execute(cfg.algorithm, None, true, None)
                .expect("rules emit valid ports");
            (inst, run)
        })
        .collect()
}

fn verdict<'a>(run: &'a Run, name: &str) -> Option<&'a dispersion::monitor::Verdict> {
    run.result
        .invariant_verdicts
        .iter()
        .find(|v| v.name == name)
}

fn micro_traces() -> Outcome {
    let p3 = PortGraph::from_edge_list(3, &[PortEdge::new(0, 0, 1, 0), PortEdge::new(1, 1, 2, 0)])
        .unwrap();
    let p2 = PortGraph::from_edge_list(2, &[PortEdge::new(0, 0, 1, 0)]).unwrap();
    let ids = |v: &[u32]| v.iter().copied().map(AgentId).collect::<Vec<_>>();
    let c3 =
        initial_configuration(&p3, &Placement::rooted(3, NodeId(0)), &ids(&[1, 2, 3])).unwrap();
    let c2 = initial_configuration(&p2, &Placement::rooted(2, NodeId(0)), &ids(&[1, 2])).unwrap();
    let dfs = run(&p3, c3, &SimpleDfs, 100, &mut [], None).unwrap().result;
    let svl = run(&p2, c2, &Svl, 100, &mut [], None).unwrap().result;
    let pass = dfs.steps_to_dispersion == Some(2)
        && svl.steps_to_dispersion == Some(5)
        && svl.max_level_observed == 1;
    Outcome {
        id: 1,
        name: "micro-trace exactness",
        pass,
        detail: format!(
            "simple-dfs P3 steps {:?}; svl P2 steps {:?}, max level {}",
            dfs.steps_to_dispersion, svl.steps_to_dispersion, svl.max_level_observed
        ),
    }
}

fn level_bound(suite: &[(Instance, Run)]) -> Outcome {
    let bad: Vec<_> = suite
        .iter()
        .filter(|(i, r)| r.result.max_level_observed > level_cap(i.placement.l()))
        .collect();
    let top = suite.iter().map(|(_, r)| r.result.max_level_observed).max();
    Outcome {
        id: 2,
        name: "level bound",
        pass: suite.len() >= 200 && bad.is_empty(),
        detail: format!(
            "{} runs, {} over the cap, highest level {:?}",
            suite.len(),
            bad.len(),
            top
        ),
    }
}

fn step_bound(suite: &[(Instance, Run)]) -> Outcome {
    let mut worst = 0.0f64;
    let mut bad = 0;
    for (inst, r) in suite {
        let l = inst.placement.l();
        let cap = STEP_CONSTANT * r.result.m_prime as u64 * (u64::from(floor_log2(l)) + 2);
        match r.result.steps_to_dispersion {
            Some(s) if s <= cap => worst = worst.max(bound_ratio(s, r.result.m_prime, l)),
            _ => bad += 1,
        }
    }
    Outcome {
        id: 3,
        name: "step bound",
        pass: bad == 0,
        detail: format!(
            "{bad} runs over the bound; max bound_ratio {worst:.4} (limit {STEP_CONSTANT})"
        ),
    }
}

fn dfs_bound(dfs: &[(Instance, Run)]) -> Outcome {
    let mut bad_steps = 0;
    let mut worst = 0.0f64;
    for (_, r) in dfs {
        let m = r.result.m_prime as u64;
        match r.result.steps_to_dispersion {
            Some(s) if s <= DFS_CONSTANT * m => {
                if m > 0 {
                    worst = worst.max(s as f64 / m as f64);
                }
            }
            _ => bad_steps += 1,
        }
    }
    let bad_edges = dfs
        .iter()
        .filter(|(_, r)| !verdict(r, "edge-budget").is_some_and(|v| v.pass))
        .count();
    Outcome {
        id: 4,
        name: "simple-dfs step and edge bound",
        pass: bad_steps == 0 && bad_edges == 0,
        detail: format!(
            "{} runs; {bad_steps} over 4m', {bad_edges} edge-budget failures; max steps/m' {worst:.3}",
            dfs.len()
        ),
    }
}

fn closure_holds(inst: &Instance, r: &Run) -> bool {
    let mut cur = r.last.clone();
    for _ in 0..CLOSURE_STEPS {
        let next = step(&inst.graph, &cur, &Svl).unwrap();
        if next
            .agents
            .iter()
            .zip(&cur.agents)
            .any(|(a, b)| a.node != b.node)
        {
            return false;
        }
        cur = next;
    }
    true
}

fn invariants(suite: &[(Instance, Run)]) -> Outcome {
    const NAMES: [&str; 7] = [
        "unique-settled",
        "settled-immobility",
        "mode-order",
        "slot-discipline",
        "vlevel-monotone",
        "no-strong-zombie",
        "lmin-monotone-progress",
    ];
    let mut failures = Vec::new();
    for (i, (_, r)) in suite.iter().enumerate() {
        for name in NAMES {
            match verdict(r, name) {
                Some(v) if v.pass => {}
                Some(v) => failures.push(format!("run {i} {name} at t={:?}", v.first_failure_step)),
                None => failures.push(format!("run {i} missing {name}")),
            }
        }
    }
    let closed = suite
        .iter()
        .take(CLOSURE_RUNS)
        .filter(|(i, r)| closure_holds(i, r))
        .count();
    Outcome {
        id: 5,
        name: "step invariants and closure",
        pass: failures.is_empty() && closed == CLOSURE_RUNS,
        detail: format!(
            "{} monitor failures{}; closure {closed}/{CLOSURE_RUNS} runs still after {CLOSURE_STEPS} steps",
            failures.len(),
            failures.first().map(|f| format!(" (first: {f})")).unwrap_or_default()
        ),
    }
}

fn memory(all: &[&(Instance, Run)]) -> Outcome {
    let bad = all
        .iter()
        .filter(|(_, r)| !verdict(r, "memory-audit").is_some_and(|v| v.pass))
        .count();
    Outcome {
        id: 6,
        name: "memory audit",
        pass: bad == 0,
        detail: format!("{} runs, {bad} failures", all.len()),
    }
}

fn median(mut v: Vec<u64>) -> f64 {
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0
    }
}

fn separation() -> Outcome {
    let medians = |alg: Algorithm| -> Vec<f64> {
        SEPARATION_LS
            .iter()
            .map(|&l| {
                let steps: Vec<u64> = (0..SEPARATION_SEEDS)
                    .into_par_iter()
                    .map(|seed| {
                        let cfg = RunConfig::new(alg, Family::Ring { n: 128 }, 64, l, seed);
                        let inst = Instance::build(&cfg).unwrap();
                        let r = inst.execute(alg, None, false, None).unwrap();
                        r.result.steps_to_dispersion.expect("no timeout")
                    })
                    .collect();
                median(steps)
            })
            .collect()
    };
    let svl = medians(Algorithm::Svl);
    let zombie = medians(Algorithm::Zombie);
    let growth = |m: &[f64]| m[m.len() - 1] / m[0];
    let (gs, gz) = (growth(&svl), growth(&zombie));
    Outcome {
        id: 7,
        name: "separation trend",
        pass: gs < gz,
        detail: format!(
            "median steps l={SEPARATION_LS:?}: svl {svl:?}, zombie {zombie:?}; growth svl {gs:.3} vs zombie {gz:.3}"
        ),
    }
}

fn determinism(suite_cfgs: &[RunConfig], dfs_cfgs: &[RunConfig]) -> Outcome {
    let zombie = RunConfig::new(Algorithm::Zombie, Family::Ring { n: 40 }, 20, 5, 3);
    let picks: Vec<&RunConfig> = suite_cfgs
        .iter()
        .step_by(24)
        .chain(dfs_cfgs.iter().step_by(40))
        .chain(std::iter::once(&zombie))
        .collect();
    let mismatches: Vec<String> = picks
        .par_iter()
        .filter_map(|cfg| {
            let go = || {
                let inst = Instance::build(cfg).unwrap();
                let mut trace = Vec::new();
                let r = inst
                    .execute(cfg.algorithm, None, true, Some(&mut trace))
                    .unwrap();
                (inst, serde_json::to_vec(&r.result).unwrap(), trace, r)
            };
            let (inst, json_a, trace_a, live) = go();
            let (_, json_b, trace_b, _) = go();
            let configs: Vec<_> = read_trace(BufReader::new(&trace_a[..]))
                .unwrap()
                .iter()
                .map(|r| r.to_configuration())
                .collect();
            let ctx: MonitorContext = inst.monitor_context();
            let replayed = replay(&inst.graph, &configs, &mut monitors_for(cfg.algorithm, ctx));
            if json_a != json_b || trace_a != trace_b {
                Some(format!("{cfg:?}: output differs"))
            } else if replayed != live.result.invariant_verdicts {
                Some(format!("{cfg:?}: replay differs"))
            } else {
                None
            }
        })
        .collect();
    Outcome {
        id: 8,
        name: "determinism and replay",
        pass: mismatches.is_empty(),
        detail: format!(
            "{} runs repeated and replayed, {} mismatches",
            picks.len(),
            mismatches.len()
        ),
    }
}

fn main() -> ExitCode {
    let suite_cfgs = suite_configs(SUITE_RUNS, Algorithm::Svl, SUITE_SEED);
    let dfs_cfgs = suite_configs(DFS_RUNS, Algorithm::SimpleDfs, SUITE_SEED + 1);
    let suite = execute(&suite_cfgs);
    let dfs = execute(&dfs_cfgs);
    let all: Vec<&(Instance, Run)> = suite.iter().chain(&dfs).collect();

    let outcomes = [
        micro_traces(),
        level_bound(&suite),
        step_bound(&suite),
        dfs_bound(&dfs),
        invariants(&suite),
        memory(&all),
        separation(),
        determinism(&suite_cfgs, &dfs_cfgs),
    ];

    for o in &outcomes {
        let mark = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {} {}: {mark} - {}", o.id, o.name, o.detail);
    }
    let failed = outcomes.iter().filter(|o| !o.pass).count();
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
