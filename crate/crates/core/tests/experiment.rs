use std::io::BufReader;

use dispersion::experiment::{
    exit_code, run_once, sweep, write_csv, ConfigError, ExperimentError, Instance, RunConfig,
    SweepConfig, EXIT_OK,
};
use dispersion::monitor::{monitors_for, replay};
use dispersion::trace::read_trace;
use dispersion::{Algorithm, Family};

fn sweep_cfg(l: Vec<usize>, reps: u32) -> SweepConfig {
    SweepConfig {
        algorithms: vec![Algorithm::Svl],
        families: vec!["ring".into()],
        n: vec![24],
        k: vec![12],
        l,
        p: None,
        ids: dispersion::engine::IdScheme::Perm,
        reps,
        base_seed: 99,
        max_steps: None,
        monitors: true,
        max_cells: 1000,
    }
}

#[test]
fn svl_on_p2_takes_five_steps() {
    let cfg = RunConfig::new(Algorithm::Svl, Family::Path { n: 2 }, 2, 1, 0);
    let run = run_once(&cfg, None).unwrap();
    assert_eq!(run.result.steps_to_dispersion, Some(5));
    assert_eq!(exit_code(&run.result), EXIT_OK);
}

#[test]
fn simple_dfs_on_p3_from_an_end_takes_two_steps() {
    let mut checked = 0;
    for seed in 0..20 {
        let cfg = RunConfig::new(Algorithm::SimpleDfs, Family::Path { n: 3 }, 3, 1, seed);
        let inst = Instance::build(&cfg).unwrap();
        let from_end = inst.graph.degree(inst.placement.nodes[0]) == 1;
        let steps = run_once(&cfg, None).unwrap().result.steps_to_dispersion;
        assert_eq!(steps, Some(if from_end { 2 } else { 3 }), "seed {seed}");
        checked += usize::from(from_end);
    }
    assert!(checked > 0);
}

#[test]
fn simple_dfs_rejects_several_starts() {
    let cfg = RunConfig::new(Algorithm::SimpleDfs, Family::Ring { n: 8 }, 4, 2, 0);
    assert!(matches!(
        run_once(&cfg, None),
        Err(ExperimentError::Config(ConfigError::Invalid(_)))
    ));
}

#[test]
fn sweep_over_l_passes() {
    let rows = sweep(&sweep_cfg(vec![1, 2, 4], 3)).unwrap();
    assert_eq!(rows.len(), 9);
    for r in &rows {
        assert_eq!(r.status, "ok", "{r:?}");
        assert_eq!(r.verdicts, "pass");
        assert!(r.bound_ratio.unwrap().is_finite());
    }
    let ls: Vec<usize> = rows.iter().map(|r| r.l).collect();
    assert_eq!(ls, [1, 1, 1, 2, 2, 2, 4, 4, 4]);
}

#[test]
fn empty_dimension_is_rejected() {
    let mut cfg = sweep_cfg(vec![], 1);
    assert!(matches!(sweep(&cfg), Err(ConfigError::Invalid(_))));
    cfg.l = vec![1];
    cfg.algorithms.clear();
    assert!(matches!(sweep(&cfg), Err(ConfigError::Invalid(_))));
}

#[test]
fn cap_limits_sweep_size() {
    let mut cfg = sweep_cfg(vec![1, 2], 10);
    cfg.max_cells = 5;
    assert!(matches!(sweep(&cfg), Err(ConfigError::Invalid(_))));
}

#[test]
fn repetitions_differ_only_in_seed() {
    let rows = sweep(&sweep_cfg(vec![3], 2)).unwrap();
    let (a, b) = (&rows[0], &rows[1]);
    assert_eq!(
        (&a.algorithm, &a.family, a.n, a.k, a.l),
        (&b.algorithm, &b.family, b.n, b.k, b.l)
    );
    assert_eq!((a.rep, b.rep), (0, 1));
    assert_ne!(a.seed, b.seed);
}

#[test]
fn invalid_cells_become_error_rows() {
    let mut cfg = sweep_cfg(vec![1, 20], 1);
    cfg.families.push("moebius".into());
    let rows = sweep(&cfg).unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0].status, "ok");
    assert!(rows[1].status.starts_with("error"));
    assert!(rows[2].status.starts_with("error"));
}

#[test]
fn csv_has_header_rows_and_footer() {
    let rows = sweep(&sweep_cfg(vec![1, 2], 2)).unwrap();
    let mut out = Vec::new();
    write_csv(&rows, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1 + rows.len() + 1);
    assert!(lines[0].starts_with("algorithm,family,n,m,k,l,m_prime,seed"));
    assert!(lines.last().unwrap().starts_with("# max_bound_ratio="));
    let again = {
        let mut o = Vec::new();
        write_csv(&sweep(&sweep_cfg(vec![1, 2], 2)).unwrap(), &mut o).unwrap();
        String::from_utf8(o).unwrap()
    };
    assert_eq!(text, again);
}

#[test]
fn trace_replay_reproduces_verdicts() {
    for (alg, fam, k, l) in [
        (Algorithm::Svl, Family::Grid { n: 36 }, 20, 7),
        (Algorithm::Svl, Family::Tree { n: 40 }, 30, 16),
        (Algorithm::Zombie, Family::Ring { n: 30 }, 20, 4),
        (
            Algorithm::SimpleDfs,
            Family::ErdosRenyi { n: 30, p: 0.2 },
            25,
            1,
        ),
    ] {
        let cfg = RunConfig::new(alg, fam, k, l, 5);
        let inst = Instance::build(&cfg).unwrap();
        let mut sink = Vec::new();
        let live = inst.execute(alg, None, true, Some(&mut sink)).unwrap();
        let records = read_trace(BufReader::new(&sink[..])).unwrap();
        let configs: Vec<_> = records.iter().map(|r| r.to_configuration()).collect();
        let mut mons = monitors_for(alg, inst.monitor_context());
        let verdicts = replay(&inst.graph, &configs, &mut mons);
        assert_eq!(verdicts, live.result.invariant_verdicts, "{alg}");
        assert_eq!(
            records.len() as u64,
            live.result.steps_to_dispersion.unwrap() + 1
        );
    }
}

#[test]
fn identical_configs_give_identical_bytes() {
    let cfg = RunConfig::new(
        Algorithm::Svl,
        Family::ErdosRenyi { n: 50, p: 0.1 },
        30,
        9,
        17,
    );
    let go = || {
        let mut trace = Vec::new();
        let r = run_once(&cfg, Some(&mut trace)).unwrap();
        (serde_json::to_vec(&r.result).unwrap(), trace)
    };
    assert_eq!(go(), go());
}
