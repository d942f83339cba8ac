use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use dispersion::engine::IdScheme;
use dispersion::experiment::{
    exit_code, family_from_name, run_once, sweep, sweep_exit_code, write_csv, RunConfig,
    SweepConfig, EXIT_CONFIG,
};
use dispersion::{Algorithm, Family};

/// Simulate dispersion of mobile agents on anonymous port-numbered graphs.
///
/// A single run prints its result as JSON. With --sweep, a TOML grid is run
/// and written as CSV.
#[derive(Debug, Parser)]
#[command(name = "dispersion", version)]
struct Args {
    /// simple-dfs, zombie or svl
    #[arg(long, default_value = "svl")]
    algorithm: Algorithm,

    /// path, ring, tree, grid, erdos-renyi or complete
    #[arg(long, default_value = "path", conflicts_with = "graph_file")]
    family: String,

    /// Read the graph from an edge-list file instead of generating one
    #[arg(long)]
    graph_file: Option<PathBuf>,

    /// Number of nodes
    #[arg(long, default_value_t = 16)]
    n: usize,

    /// Number of agents
    #[arg(long, default_value_t = 8)]
    k: usize,

    /// Number of distinct start nodes
    #[arg(long, default_value_t = 1)]
    l: usize,

    /// Edge probability for erdos-renyi
    #[arg(long)]
    p: Option<f64>,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// perm (1..=k) or poly (1..=k²)
    #[arg(long, default_value = "perm")]
    ids: IdScheme,

    /// Step cap; defaults to max(1000, 64·m′·(⌊log2 ℓ⌋+2))
    #[arg(long)]
    max_steps: Option<u64>,

    /// Write a JSON Lines trace of every configuration
    #[arg(long)]
    trace: Option<PathBuf>,

    /// Write the result here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,

    /// Run the sweep described by this TOML file
    #[arg(long)]
    sweep: Option<PathBuf>,

    #[arg(long)]
    no_monitors: bool,
}

fn output(path: &Option<PathBuf>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn fail(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("dispersion: {msg}");
    ExitCode::from(EXIT_CONFIG as u8)
}

fn run_sweep(args: &Args, path: &PathBuf) -> ExitCode {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => return fail(format!("{}: {e}", path.display())),
    };
    let cfg: SweepConfig = match toml::from_str(&text) {
        Ok(c) => c,
        Err(e) => return fail(format!("{}: {e}", path.display())),
    };
    let rows = match sweep(&cfg) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    let written = output(&args.out).and_then(|mut w| {
        write_csv(&rows, &mut w).map_err(io::Error::other)?;
        w.flush()
    });
    if let Err(e) = written {
        return fail(e);
    }
    ExitCode::from(sweep_exit_code(&rows) as u8)
}

fn run_single(args: &Args) -> ExitCode {
    let family = match &args.graph_file {
        Some(path) => Family::File { path: path.clone() },
        None => match family_from_name(&args.family, args.n, args.p) {
            Ok(f) => f,
            Err(e) => return fail(e),
        },
    };
    let cfg = RunConfig {
        algorithm: args.algorithm,
        family,
        k: args.k,
        l: args.l,
        ids: args.ids,
        seed: args.seed,
        max_steps: args.max_steps,
        monitors: !args.no_monitors,
    };
    let mut trace = match &args.trace {
        Some(p) => match File::create(p) {
            Ok(f) => Some(BufWriter::new(f)),
            Err(e) => return fail(format!("{}: {e}", p.display())),
        },
        None => None,
    };
    let run = match run_once(&cfg, trace.as_mut().map(|w| w as &mut dyn Write)) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    if let Some(mut t) = trace {
        if let Err(e) = t.flush() {
            return fail(e);
        }
    }
    let written = output(&args.out).and_then(|mut w| {
        serde_json::to_writer_pretty(&mut w, &run.result)?;
        writeln!(w)?;
        w.flush()
    });
    if let Err(e) = written {
        return fail(e);
    }
    ExitCode::from(exit_code(&run.result) as u8)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match &args.sweep {
        Some(path) => run_sweep(&args, path),
        None => run_single(&args),
    }
}
