use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use rsmote::metrics::TrackingAllocator;
use rsmote::oracles::{cache_dir, CacheStatus, SolverId, CACHE_ENV};
use rsmote::pde::{PdeProblem, ProblemName, Reference};
use rsmote_cli::oracles::{parse_solver, prebuild_oracles};
use rsmote_cli::plot::emit_plots;
use rsmote_cli::{execute_run, run_experiments, ExperimentConfig, RunOptions};

#[global_allocator]
static ALLOC: TrackingAllocator = TrackingAllocator;

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "rsmote", version, about = "Adaptive-sampling PINN benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every sampler × n_interior × seed combination of an experiment.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Runs executed in parallel, each in its own process.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Output directory; overrides `out` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Leave peak memory unmeasured (written as NA).
        #[arg(long)]
        no_memory_probe: bool,
    },
    /// Loss curves and solution-field heatmaps for an experiment directory.
    Plot {
        /// Experiment output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Take the output directory from this experiment config.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Build, cache and validate the reference solvers.
    Oracles {
        /// Where validation reports go; defaults to the cache directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Restrict to these solvers (repeatable).
        #[arg(long, value_parser = parse_solver)]
        solver: Vec<SolverId>,
    },
    /// Print the problem registry.
    ListProblems,
    /// Execute one prepared run directory (used by `run`).
    #[command(hide = true)]
    RunOne {
        #[arg(long)]
        run_dir: PathBuf,
    },
}

fn load_config(path: &PathBuf) -> Result<ExperimentConfig, ExitCode> {
    ExperimentConfig::load(path).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(EXIT_CONFIG)
    })
}

fn cmd_run(config: PathBuf, jobs: usize, out: Option<PathBuf>, no_memory_probe: bool) -> Result<ExitCode> {
    let cfg = match load_config(&config) {
        Ok(c) => c,
        Err(code) => return Ok(code),
    };
    if jobs == 0 {
        eprintln!("error: --jobs must be at least 1");
        return Ok(ExitCode::from(EXIT_CONFIG));
    }
    let opts = RunOptions {
        out: out.unwrap_or_else(|| cfg.out.clone()),
        jobs,
        memory_probe: !no_memory_probe,
        exe: std::env::current_exe()?,
    };
    let report = run_experiments(&cfg, &opts)?;
    print!("{}", report.table);
    let failed: Vec<_> = report.failures().collect();
    if failed.is_empty() {
        return Ok(ExitCode::SUCCESS);
    }
    eprintln!("{} of {} runs failed:", failed.len(), report.runs.len());
    for r in failed {
        eprintln!("  {}: {}", r.dir.display(), r.error.as_deref().unwrap_or(""));
    }
    Ok(ExitCode::from(EXIT_FAILURE))
}

fn cmd_plot(out: Option<PathBuf>, config: Option<PathBuf>) -> Result<ExitCode> {
    let root = match (out, config) {
        (Some(o), _) => o,
        (None, Some(c)) => match load_config(&c) {
            Ok(cfg) => cfg.out,
            Err(code) => return Ok(code),
        },
        (None, None) => {
            eprintln!("error: give --out or --config");
            return Ok(ExitCode::from(EXIT_CONFIG));
        }
    };
    let report = emit_plots(&root)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    for f in &report.files {
        println!("{}", f.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_oracles(out: Option<PathBuf>, solver: Vec<SolverId>) -> Result<ExitCode> {
    let cache = cache_dir();
    let solvers = if solver.is_empty() { SolverId::ALL.to_vec() } else { solver };
    let reports = out.unwrap_or_else(|| cache.clone());
    println!("cache: {} (set {CACHE_ENV} to change)", cache.display());
    let mut ok = true;
    for s in prebuild_oracles(&solvers, &cache, &reports)? {
        let cache_word = match s.cache {
            CacheStatus::Hit => "cache hit",
            CacheStatus::Built => "built",
            CacheStatus::Rebuilt => "rebuilt (cache was corrupt)",
        };
        let verdict = if s.report.passed() { "valid" } else { "VALIDATION FAILED" };
        let reuse = if s.validation_reused { ", stored report" } else { "" };
        println!("{}: {cache_word}, {verdict}{reuse}", s.solver);
        for c in &s.report.checks {
            let op = if c.below { "<" } else { ">=" };
            let mark = if c.passed { "ok" } else { "FAIL" };
            println!("  {mark:<4} {}: {:.3e} {op} {}", c.name, c.value, c.threshold);
        }
        ok &= s.report.passed();
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(EXIT_FAILURE) })
}

fn cmd_list_problems() -> Result<ExitCode> {
    println!("{:<20} {:<11} {:<26} {:<7} network", "name", "dimension", "reference", "inputs");
    for name in ProblemName::ALL {
        // dimensional problems are shown for d = 10 and described in terms of d
        let d = 10;
        let p = PdeProblem::<f64>::by_name(name, name.is_dimensional().then_some(d))?;
        let reference = match p.reference() {
            Reference::Exact(_) => "closed form".to_string(),
            Reference::Oracle(s) => format!("oracle {s}"),
        };
        let net = p.net_config();
        let (dim, inputs, width) = if name.is_dimensional() {
            let inputs = if net.input_dim == d { "d" } else { "d+1" };
            ("d", inputs.to_string(), "2d".to_string())
        } else {
            ("2", net.input_dim.to_string(), net.width.to_string())
        };
        println!("{:<20} {:<11} {:<26} {:<7} depth {}, width {width}", name.as_str(), dim, reference, inputs, net.depth);
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::Run { config, jobs, out, no_memory_probe } => cmd_run(config, jobs, out, no_memory_probe),
        Cmd::Plot { out, config } => cmd_plot(out, config),
        Cmd::Oracles { out, solver } => cmd_oracles(out, solver),
        Cmd::ListProblems => cmd_list_problems(),
        Cmd::RunOne { run_dir } => execute_run(&run_dir).map(|()| ExitCode::SUCCESS),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}
