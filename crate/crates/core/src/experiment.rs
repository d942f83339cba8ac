//! Single runs and seeded parameter sweeps.

use std::io::Write;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algorithms::Algorithm;
use crate::engine::{
    self, default_max_steps, floor_log2, initial_configuration, IdScheme, Placement, Run, RunError,
    SetupError,
};
use crate::graph::{Family, GraphError, GraphSpec, PortGraph};
use crate::monitor::{monitors_for, Monitor, MonitorContext};
use crate::state::AgentId;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_TIMEOUT: i32 = 3;
pub const EXIT_MONITOR: i32 = 4;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("graph: {0}")]
    Graph(#[from] GraphError),
    #[error("setup: {0}")]
    Setup(#[from] SetupError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Run(#[from] RunError),
}

/// Everything that determines one execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub family: Family,
    pub k: usize,
    pub l: usize,
    pub ids: IdScheme,
    pub seed: u64,
    pub max_steps: Option<u64>,
    pub monitors: bool,
}

impl RunConfig {
    pub fn new(algorithm: Algorithm, family: Family, k: usize, l: usize, seed: u64) -> Self {
        RunConfig {
            algorithm,
            family,
            k,
            l,
            ids: IdScheme::Perm,
            seed,
            max_steps: None,
            monitors: true,
        }
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if !(1 <= self.l && self.l <= self.k) {
            return Err(ConfigError::Invalid(format!(
                "need 1 <= l <= k, got l = {}, k = {}",
                self.l, self.k
            )));
        }
        if self.algorithm == Algorithm::SimpleDfs && self.l != 1 {
            return Err(ConfigError::Invalid(format!(
                "simple-dfs needs all agents on one start node (l = 1), got l = {}",
                self.l
            )));
        }
        Ok(())
    }
}

/// A concrete instance: graph, start nodes and identifiers.
#[derive(Debug, Clone)]
pub struct Instance {
    pub graph: PortGraph,
    pub placement: Placement,
    pub ids: Vec<AgentId>,
    pub idmax: u32,
}

impl Instance {
    pub fn build(cfg: &RunConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let graph = GraphSpec::new(cfg.family.clone(), cfg.seed).generate()?;
        if cfg.k > graph.node_count() {
            return Err(SetupError::KExceedsN {
                k: cfg.k,
                n: graph.node_count(),
            }
            .into());
        }
        let placement = Placement::random(&graph, cfg.k, cfg.l, cfg.seed)?;
        let ids = cfg.ids.assign(cfg.k, cfg.seed);
        Ok(Instance {
            graph,
            placement,
            ids,
            idmax: cfg.ids.idmax(cfg.k),
        })
    }

    pub fn monitor_context(&self) -> MonitorContext {
        MonitorContext {
            l: self.placement.l(),
            idmax: self.idmax,
            max_degree: self.graph.max_degree(),
        }
    }

    pub fn default_max_steps(&self) -> u64 {
        default_max_steps(self.graph.m_prime(self.placement.k()), self.placement.l())
    }

    /// Runs `alg` on this instance with the standard monitors (if enabled).
    pub fn execute(
        &self,
        alg: Algorithm,
        max_steps: Option<u64>,
        with_monitors: bool,
        trace: Option<&mut dyn Write>,
    ) -> Result<Run, ExperimentError> {
        let c0 = initial_configuration(&self.graph, &self.placement, &self.ids)
            .map_err(ConfigError::from)?;
        let mut monitors: Vec<Box<dyn Monitor>> = if with_monitors {
            monitors_for(alg, self.monitor_context())
        } else {
            Vec::new()
        };
        let cap = max_steps.unwrap_or_else(|| self.default_max_steps());
        Ok(engine::run(
            &self.graph,
            c0,
            alg.rule(),
            cap,
            &mut monitors,
            trace,
        )?)
    }
}

/// Builds the instance for `cfg` and runs it.
pub fn run_once(cfg: &RunConfig, trace: Option<&mut dyn Write>) -> Result<Run, ExperimentError> {
    let inst = Instance::build(cfg)?;
    inst.execute(cfg.algorithm, cfg.max_steps, cfg.monitors, trace)
}

/// 0 on success, 3 on timeout, 4 on any monitor violation.
pub fn exit_code(r: &engine::RunResult) -> i32 {
    if r.timed_out {
        EXIT_TIMEOUT
    } else if !r.all_pass() {
        EXIT_MONITOR
    } else {
        EXIT_OK
    }
}

/// `steps / (m′ · (⌊log2 ℓ⌋ + 2))`; zero when no step was needed.
pub fn bound_ratio(steps: u64, m_prime: usize, l: usize) -> f64 {
    if steps == 0 {
        return 0.0;
    }
    steps as f64 / (m_prime as f64 * (floor_log2(l) as f64 + 2.0))
}

fn default_true() -> bool {
    true
}

fn default_cap() -> usize {
    100_000
}

fn default_ids() -> IdScheme {
    IdScheme::Perm
}

/// A grid of run configurations, each repeated `reps` times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub algorithms: Vec<Algorithm>,
    pub families: Vec<String>,
    pub n: Vec<usize>,
    pub k: Vec<usize>,
    pub l: Vec<usize>,
    /// Edge probability for erdos-renyi; defaults to `min(1, 2 ln n / n)`.
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(default = "default_ids")]
    pub ids: IdScheme,
    pub reps: u32,
    pub base_seed: u64,
    #[serde(default)]
    pub max_steps: Option<u64>,
    #[serde(default = "default_true")]
    pub monitors: bool,
    #[serde(default = "default_cap")]
    pub max_cells: usize,
}

/// One sweep cell repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub algorithm: String,
    pub family: String,
    pub n: usize,
    pub m: Option<usize>,
    pub k: usize,
    pub l: usize,
    pub m_prime: Option<usize>,
    pub seed: u64,
    pub rep: u32,
    pub steps: Option<u64>,
    pub max_level: Option<u32>,
    pub bound_ratio: Option<f64>,
    /// `pass`, or the failing monitor names joined by `;`.
    pub verdicts: String,
    /// `ok`, `timeout`, `monitor`, or `error: <message>`.
    pub status: String,
}

/// Per-cell seed: a keyed stream of the base seed.
pub fn cell_seed(base: u64, cell: u64, rep: u32) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(cell);
    rng.set_word_pos(u128::from(rep) * 2);
    rng.next_u64()
}

pub fn family_from_name(name: &str, n: usize, p: Option<f64>) -> Result<Family, ConfigError> {
    Ok(match name {
        "path" => Family::Path { n },
        "ring" => Family::Ring { n },
        "tree" => Family::Tree { n },
        "grid" => Family::Grid { n },
        "complete" => Family::Complete { n },
        "erdos-renyi" => Family::ErdosRenyi {
            n,
            p: p.unwrap_or_else(|| default_edge_probability(n)),
        },
        other => {
            return Err(ConfigError::Invalid(format!(
                "unknown or unsupported graph family {other:?}"
            )))
        }
    })
}

pub fn default_edge_probability(n: usize) -> f64 {
    if n < 2 {
        1.0
    } else {
        (2.0 * (n as f64).ln() / n as f64).min(1.0)
    }
}

/// Cell index, repetition, and the run configuration or why it is invalid.
pub type Job = (u64, u32, Result<RunConfig, String>);

impl SweepConfig {
    /// The run configurations in cell order, with their cell and repetition.
    pub fn expand(&self) -> Result<Vec<Job>, ConfigError> {
        for (what, len) in [
            ("algorithms", self.algorithms.len()),
            ("families", self.families.len()),
            ("n", self.n.len()),
            ("k", self.k.len()),
            ("l", self.l.len()),
        ] {
            if len == 0 {
                return Err(ConfigError::Invalid(format!(
                    "sweep dimension {what} is empty"
                )));
            }
        }
        if self.reps == 0 {
            return Err(ConfigError::Invalid("reps must be at least 1".into()));
        }
        let cells = self.algorithms.len()
            * self.families.len()
            * self.n.len()
            * self.k.len()
            * self.l.len();
        let total = cells * self.reps as usize;
        if total > self.max_cells {
            return Err(ConfigError::Invalid(format!(
                "{total} runs exceed the cap of {}",
                self.max_cells
            )));
        }
        let mut out = Vec::with_capacity(total);
        let mut cell = 0u64;
        for &alg in &self.algorithms {
            for fam in &self.families {
                for &n in &self.n {
                    for &k in &self.k {
                        for &l in &self.l {
                            for rep in 0..self.reps {
                                let seed = cell_seed(self.base_seed, cell, rep);
                                let cfg = family_from_name(fam, n, self.p)
                                    .map_err(|e| e.to_string())
                                    .map(|family| RunConfig {
                                        algorithm: alg,
                                        family,
                                        k,
                                        l,
                                        ids: self.ids,
                                        seed,
                                        max_steps: self.max_steps,
                                        monitors: self.monitors,
                                    });
                                out.push((cell, rep, cfg));
                            }
                            cell += 1;
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

fn row_for(cfg: &RunConfig, rep: u32) -> SweepRow {
    let n = match &cfg.family {
        Family::Path { n }
        | Family::Ring { n }
        | Family::Tree { n }
        | Family::Grid { n }
        | Family::Complete { n }
        | Family::ErdosRenyi { n, .. } => *n,
        Family::File { .. } => 0,
    };
    let mut row = SweepRow {
        algorithm: cfg.algorithm.name().to_string(),
        family: cfg.family.name().to_string(),
        n,
        m: None,
        k: cfg.k,
        l: cfg.l,
        m_prime: None,
        seed: cfg.seed,
        rep,
        steps: None,
        max_level: None,
        bound_ratio: None,
        verdicts: String::new(),
        status: String::new(),
    };
    let inst = match Instance::build(cfg) {
        Ok(i) => i,
        Err(e) => {
            row.status = format!("error: {e}");
            return row;
        }
    };
    row.m = Some(inst.graph.edge_count());
    row.n = inst.graph.node_count();
    match inst.execute(cfg.algorithm, cfg.max_steps, cfg.monitors, None) {
        Ok(run) => {
            let r = run.result;
            row.m_prime = Some(r.m_prime);
            row.steps = r.steps_to_dispersion;
            row.max_level = Some(r.max_level_observed);
            row.bound_ratio = r
                .steps_to_dispersion
                .map(|s| bound_ratio(s, r.m_prime, r.l));
            let failed: Vec<&str> = r.failed().map(|v| v.name.as_str()).collect();
            row.verdicts = if failed.is_empty() {
                "pass".into()
            } else {
                failed.join(";")
            };
            row.status = match exit_code(&r) {
                EXIT_TIMEOUT => "timeout",
                EXIT_MONITOR => "monitor",
                _ => "ok",
            }
            .into();
        }
        Err(e) => row.status = format!("error: {e}"),
    }
    row
}

/// Runs every cell (in parallel) and returns rows in cell order.
pub fn sweep(cfg: &SweepConfig) -> Result<Vec<SweepRow>, ConfigError> {
    let jobs = cfg.expand()?;
    Ok(jobs
        .par_iter()
        .map(|(_, rep, job)| match job {
            Ok(run_cfg) => row_for(run_cfg, *rep),
            Err(msg) => SweepRow {
                algorithm: String::new(),
                family: String::new(),
                n: 0,
                m: None,
                k: 0,
                l: 0,
                m_prime: None,
                seed: 0,
                rep: *rep,
                steps: None,
                max_level: None,
                bound_ratio: None,
                verdicts: String::new(),
                status: format!("error: {msg}"),
            },
        })
        .collect())
}

/// Largest finite bound ratio over the rows.
pub fn max_bound_ratio(rows: &[SweepRow]) -> Option<f64> {
    rows.iter()
        .filter_map(|r| r.bound_ratio)
        .fold(None, |acc, x| Some(acc.map_or(x, |a: f64| a.max(x))))
}

/// Writes the rows as CSV followed by a `#`-prefixed footer line holding the
/// suite maximum of `bound_ratio`.
pub fn write_csv<W: Write>(rows: &[SweepRow], mut w: W) -> Result<(), csv::Error> {
    {
        let mut out = csv::Writer::from_writer(&mut w);
        for r in rows {
            out.serialize(r)?;
        }
        out.flush()?;
    }
    match max_bound_ratio(rows) {
        Some(x) => writeln!(w, "# max_bound_ratio={x}")?,
        None => writeln!(w, "# max_bound_ratio=none")?,
    }
    Ok(())
}

/// Worst exit code over a set of rows.
pub fn sweep_exit_code(rows: &[SweepRow]) -> i32 {
    let mut code = EXIT_OK;
    for r in rows {
        let c = match r.status.as_str() {
            "ok" => EXIT_OK,
            "timeout" => EXIT_TIMEOUT,
            "monitor" => EXIT_MONITOR,
            _ => EXIT_CONFIG,
        };
        code = code.max(c);
    }
    code
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_dfs_needs_one_start() {
        let cfg = RunConfig::new(Algorithm::SimpleDfs, Family::Path { n: 5 }, 3, 2, 0);
        assert!(matches!(
            run_once(&cfg, None),
            Err(ExperimentError::Config(ConfigError::Invalid(_)))
        ));
    }

    #[test]
    fn k_larger_than_n_is_rejected() {
        let cfg = RunConfig::new(Algorithm::Svl, Family::Path { n: 3 }, 4, 1, 0);
        assert!(matches!(
            run_once(&cfg, None),
            Err(ExperimentError::Config(ConfigError::Setup(
                SetupError::KExceedsN { .. }
            )))
        ));
    }

    #[test]
    fn cell_seeds_differ_by_rep_and_cell() {
        let a = cell_seed(42, 0, 0);
        assert_eq!(a, cell_seed(42, 0, 0));
        assert_ne!(a, cell_seed(42, 0, 1));
        assert_ne!(a, cell_seed(42, 1, 0));
        assert_ne!(a, cell_seed(43, 0, 0));
    }

    #[test]
    fn exit_codes() {
        let cfg = RunConfig::new(Algorithm::Svl, Family::Path { n: 2 }, 2, 1, 0);
        let mut r = run_once(&cfg, None).unwrap().result;
        assert_eq!(exit_code(&r), EXIT_OK);
        r.invariant_verdicts[0].pass = false;
        assert_eq!(exit_code(&r), EXIT_MONITOR);
        r.timed_out = true;
        assert_eq!(exit_code(&r), EXIT_TIMEOUT);
    }

    #[test]
    fn ratio_edge_cases() {
        assert_eq!(bound_ratio(0, 0, 1), 0.0);
        assert_eq!(bound_ratio(10, 5, 1), 1.0);
        assert_eq!(bound_ratio(12, 1, 4), 3.0);
    }
}
