//! Command-line surface. Exit status: 0 success, 1 usage error, 2 data error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::grid::validate_grid;
use crate::harness::{self, brute_force_oracle, emit_reports, summarize, DEFAULT_ORACLE_BITS};
use crate::heuristics::{run_heuristic, Algo, Problem};
use crate::io::{self, BenchmarkConfig, RunConfig};
use crate::measures::build_catalog;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "gridplan", version, about = "Meta-heuristic grid expansion planning")]
struct Cli {
    /// Print the default run and benchmark configuration and exit.
    #[arg(long)]
    print_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one algorithm on one grid and write its run record.
    Plan(PlanArgs),
    /// Run every configured algorithm on every configured grid.
    Benchmark(BenchArgs),
    /// Enumerate all candidates and print the optimum.
    Oracle(OracleArgs),
    /// Check a grid file.
    Validate(GridArg),
    /// Print the measure catalog of a grid.
    Catalog(ProblemArgs),
}

#[derive(Debug, Args)]
struct GridArg {
    #[arg(long)]
    grid: PathBuf,
}

#[derive(Debug, Args)]
struct ProblemArgs {
    #[arg(long)]
    grid: PathBuf,
    #[arg(long)]
    load_cases: Option<PathBuf>,
    /// Run configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PlanArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, value_parser = parse_algo)]
    algo: Algo,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    eval_limit: Option<u64>,
    #[arg(long)]
    time_limit: Option<f64>,
    #[arg(long)]
    powerflow_limit: Option<u64>,
    /// Record file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the effective configuration and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    print_config: bool,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, default_value_t = DEFAULT_ORACLE_BITS)]
    max_bits: usize,
}

fn parse_algo(s: &str) -> Result<Algo, String> {
    s.parse()
}

fn load_run_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => Ok(io::load_run_config(p)?),
        None => Ok(RunConfig::with_default_budget()),
    }
}

fn load_problem(args: &ProblemArgs, cfg: &RunConfig) -> Result<Problem> {
    let grid = io::load_grid(&args.grid)?;
    let load_cases = match &args.load_cases {
        Some(p) => io::load_load_cases(p)?,
        None => Vec::new(),
    };
    let catalog = build_catalog(&grid, &cfg.catalog).with_context(|| format!("{}", args.grid.display()))?;
    Ok(Problem::new(grid, load_cases, catalog, cfg.eval.clone()))
}

fn plan(args: PlanArgs, out: &mut dyn Write) -> Result<()> {
    let mut cfg = load_run_config(args.problem.config.as_deref())?;
    if args.eval_limit.is_some() || args.time_limit.is_some() || args.powerflow_limit.is_some() {
        cfg.budget.eval_limit = args.eval_limit;
        cfg.budget.time_limit_s = args.time_limit;
        cfg.budget.powerflow_limit = args.powerflow_limit;
    }
    if args.print_config {
        write!(out, "{}", toml::to_string(&cfg)?)?;
        return Ok(());
    }
    let problem = load_problem(&args.problem, &cfg)?;
    let record = run_heuristic(args.algo, &cfg.params, &problem, &cfg.budget, &cfg.run, args.seed)?;
    let mut text = serde_json::to_string_pretty(&record)?;
    text.push('\n');
    match &args.out {
        Some(path) => {
            io::write_atomic(path, text.as_bytes())?;
            match &record.best {
                Some(b) => writeln!(
                    out,
                    "{} seed {}: level {} cost {} after {} evaluations -> {}",
                    args.algo,
                    args.seed,
                    b.level,
                    b.raw_cost,
                    record.total_evals,
                    path.display()
                )?,
                None => writeln!(out, "{} seed {}: no evaluation performed", args.algo, args.seed)?,
            }
        }
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn benchmark(args: BenchArgs, out: &mut dyn Write) -> Result<()> {
    let mut cfg = io::load_benchmark_config(&args.config)?;
    if let Some(dir) = args.out {
        cfg.out_dir = dir;
    }
    if args.print_config {
        write!(out, "{}", toml::to_string(&cfg)?)?;
        return Ok(());
    }
    let outcome = harness::run_benchmark(&cfg)?;
    let tables = summarize(&outcome.runs, &cfg.checkpoints_s);
    let files = emit_reports(&tables, &outcome.runs, &cfg.out_dir)?;
    let failed = outcome.runs.iter().filter(|r| r.record.is_none()).count();
    writeln!(
        out,
        "{} runs ({} new, {} failed), {} report files in {}",
        outcome.runs.len(),
        outcome.executed,
        failed,
        files.len(),
        cfg.out_dir.display()
    )?;
    Ok(())
}

fn oracle(args: OracleArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = load_run_config(args.problem.config.as_deref())?;
    let problem = load_problem(&args.problem, &cfg)?;
    let o = brute_force_oracle(&problem, args.max_bits)?;
    writeln!(out, "candidate {}", o.candidate)?;
    writeln!(out, "level {}", o.result.level)?;
    writeln!(out, "raw_cost {}", o.result.raw_cost)?;
    writeln!(out, "investment {}", o.result.investment)?;
    writeln!(out, "evaluations {}", o.evaluations)?;
    Ok(())
}

fn validate(args: GridArg, out: &mut dyn Write) -> Result<()> {
    let text = std::fs::read_to_string(&args.grid).with_context(|| format!("{}", args.grid.display()))?;
    let grid = io::parse_grid_unchecked(&text, &args.grid)?;
    let violations = validate_grid(&grid);
    if violations.is_empty() {
        writeln!(
            out,
            "{}: ok ({} buses, {} branches, {} switches, {} injections)",
            args.grid.display(),
            grid.buses().len(),
            grid.branches().len(),
            grid.switches().len(),
            grid.injections().len()
        )?;
        return Ok(());
    }
    for v in &violations {
        writeln!(out, "{v}")?;
    }
    bail!("{}: {} violations", args.grid.display(), violations.len())
}

fn catalog(args: ProblemArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = load_run_config(args.config.as_deref())?;
    let problem = load_problem(&args, &cfg)?;
    let counts = problem.catalog.counts();
    writeln!(out, "REPL {}", counts.repl)?;
    writeln!(out, "SWITCH {}", counts.switch)?;
    writeln!(out, "AL {}", counts.al)?;
    writeln!(out, "total {}", problem.catalog.len())?;
    for m in problem.catalog.measures() {
        writeln!(out, "{:>4} {:<6} {:>14.2} {:?}", m.index, m.kind.label(), m.invest_cost, m.kind)?;
    }
    Ok(())
}

fn print_defaults(out: &mut dyn Write) -> Result<()> {
    writeln!(out, "# run configuration (plan, oracle, catalog --config)")?;
    write!(out, "{}", toml::to_string(&RunConfig::with_default_budget())?)?;
    writeln!(out, "\n# benchmark configuration (benchmark --config)")?;
    write!(out, "{}", toml::to_string(&BenchmarkConfig::default())?)?;
    Ok(())
}

/// Runs the command line with explicit output streams.
pub fn cli_run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let result = match cli.command {
        None if cli.print_config => print_defaults(out),
        None => {
            let _ = writeln!(err, "error: a subcommand is required (try --help)");
            return EXIT_USAGE;
        }
        Some(Command::Plan(a)) => plan(a, out),
        Some(Command::Benchmark(a)) => benchmark(a, out),
        Some(Command::Oracle(a)) => oracle(a, out),
        Some(Command::Validate(a)) => validate(a, out),
        Some(Command::Catalog(a)) => catalog(a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            EXIT_DATA
        }
    }
}

/// Entry point of the `gridplan` binary.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    cli_run(argv, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}
