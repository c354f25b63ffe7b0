//! Multi-run comparisons, the exhaustive oracle and report generation.

mod summary;

pub use summary::{emit_reports, summarize, CheckpointRow, RunRow, ShareRow, SummaryTables};

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::{compare_lex, EvalError, EvaluationResult};
use crate::heuristics::{run_heuristic, Algo, AlgoParams, Budget, Problem, RunOptions, RunRecord};
use crate::io::{self, BenchmarkConfig, IoError};
use crate::measures::{build_catalog, Candidate, MeasureError};

/// Environment variable capping the number of concurrent runs.
pub const WORKERS_ENV: &str = "GRIDPLAN_WORKERS";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid benchmark configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("problem '{name}': {error}")]
    Catalog { name: String, error: MeasureError },
    #[error("catalog has {bits} measures, the oracle is capped at {cap}")]
    TooLarge { bits: usize, cap: usize },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{path}: {error}")]
    Csv { path: PathBuf, error: csv::Error },
}

/// A problem with the name used in file names and reports.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedProblem {
    pub name: String,
    pub problem: Problem,
}

/// One persisted run: the record, or why the run could not start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredRun {
    pub grid: String,
    pub algorithm: Algo,
    pub run_index: u32,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record: Option<RunRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkOutcome {
    /// All runs of the benchmark in (grid, algorithm, run) order.
    pub runs: Vec<StoredRun>,
    /// Runs executed by this call; the rest were already on disk.
    pub executed: usize,
}

/// `seed_base * 10^6 + cell_index * 10^3 + run_index`, wrapping on overflow.
pub fn run_seed(seed_base: u64, cell_index: u64, run_index: u64) -> u64 {
    seed_base
        .wrapping_mul(1_000_000)
        .wrapping_add(cell_index.wrapping_mul(1_000))
        .wrapping_add(run_index)
}

fn safe_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        && !name.contains("__")
        && !name.starts_with('.')
}

/// Settings of a benchmark over already loaded problems.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkPlan {
    pub algorithms: Vec<Algo>,
    pub params: AlgoParams,
    pub runs_per_cell: u32,
    pub seed_base: u64,
    pub budget: Budget,
    pub run: RunOptions,
    pub out_dir: PathBuf,
}

impl BenchmarkPlan {
    pub fn from_config(cfg: &BenchmarkConfig) -> Self {
        Self {
            algorithms: cfg.algorithms.clone(),
            params: cfg.params.clone(),
            runs_per_cell: cfg.runs_per_cell,
            seed_base: cfg.seed_base,
            budget: cfg.budget.clone(),
            run: cfg.run.clone(),
            out_dir: cfg.out_dir.clone(),
        }
    }

    fn validate(&self, problems: &[NamedProblem]) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if !(1..=1000).contains(&self.runs_per_cell) {
            return bad(format!("runs_per_cell must be in 1..=1000, got {}", self.runs_per_cell));
        }
        if self.algorithms.is_empty() {
            return bad("no algorithms given".into());
        }
        let algos: BTreeSet<_> = self.algorithms.iter().collect();
        if algos.len() != self.algorithms.len() {
            return bad("algorithm listed twice".into());
        }
        if problems.is_empty() {
            return bad("no problems given".into());
        }
        let mut names = BTreeSet::new();
        for p in problems {
            if !safe_name(&p.name) {
                return bad(format!(
                    "problem name '{}' must be letters, digits, '-', '_' or '.' without '__'",
                    p.name
                ));
            }
            if !names.insert(&p.name) {
                return bad(format!("problem name '{}' used twice", p.name));
            }
        }
        self.budget.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.params.validate().map_err(|e| HarnessError::Config(e.to_string()))
    }
}

/// Loads every problem of a configuration; fails on the first bad file.
pub fn load_problems(cfg: &BenchmarkConfig) -> Result<Vec<NamedProblem>, HarnessError> {
    cfg.problems
        .iter()
        .map(|spec| {
            let grid = io::load_grid(&spec.grid)?;
            let load_cases = match &spec.load_cases {
                Some(p) => io::load_load_cases(p)?,
                None => Vec::new(),
            };
            let catalog_cfg = spec.catalog.as_ref().unwrap_or(&cfg.catalog);
            let catalog = build_catalog(&grid, catalog_cfg).map_err(|error| HarnessError::Catalog {
                name: spec.name.clone(),
                error,
            })?;
            Ok(NamedProblem {
                name: spec.name.clone(),
                problem: Problem::new(grid, load_cases, catalog, cfg.eval.clone()),
            })
        })
        .collect()
}

/// Loads the configured problems and runs the benchmark.
pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<BenchmarkOutcome, HarnessError> {
    let problems = load_problems(cfg)?;
    run_problems(&problems, &BenchmarkPlan::from_config(cfg))
}

pub fn run_file(out_dir: &Path, grid: &str, algo: Algo, run_index: u32) -> PathBuf {
    out_dir.join("runs").join(format!("{grid}__{algo}__{run_index:04}.json"))
}

fn read_stored(path: &Path) -> Option<StoredRun> {
    let text = fs::read_to_string(path).ok()?;
    serde_json::from_str(&text).ok()
}

fn worker_count() -> Option<usize> {
    std::env::var(WORKERS_ENV).ok()?.trim().parse().ok().filter(|&n| n > 0)
}

/// Runs every (problem, algorithm, run) cell not yet persisted under
/// `out_dir/runs`, then returns all runs read back from disk.
pub fn run_problems(problems: &[NamedProblem], plan: &BenchmarkPlan) -> Result<BenchmarkOutcome, HarnessError> {
    plan.validate(problems)?;
    struct Job<'a> {
        problem: &'a NamedProblem,
        algo: Algo,
        run_index: u32,
        seed: u64,
        path: PathBuf,
    }
    let n_algos = plan.algorithms.len() as u64;
    let mut jobs = Vec::new();
    for (gi, np) in problems.iter().enumerate() {
        for (ai, &algo) in plan.algorithms.iter().enumerate() {
            let cell = gi as u64 * n_algos + ai as u64;
            for r in 0..plan.runs_per_cell {
                jobs.push(Job {
                    problem: np,
                    algo,
                    run_index: r,
                    seed: run_seed(plan.seed_base, cell, u64::from(r)),
                    path: run_file(&plan.out_dir, &np.name, algo, r),
                });
            }
        }
    }
    let is_done = |j: &Job<'_>| {
        read_stored(&j.path).is_some_and(|s| {
            s.seed == j.seed && s.algorithm == j.algo && s.grid == j.problem.name && s.run_index == j.run_index
        })
    };
    let todo: Vec<&Job<'_>> = jobs.iter().filter(|j| !is_done(j)).collect();

    let execute = |j: &&Job<'_>| -> Result<(), HarnessError> {
        let result = run_heuristic(j.algo, &plan.params, &j.problem.problem, &plan.budget, &plan.run, j.seed);
        let (record, failure) = match result {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e.to_string())),
        };
        let stored = StoredRun {
            grid: j.problem.name.clone(),
            algorithm: j.algo,
            run_index: j.run_index,
            seed: j.seed,
            record,
            failure,
        };
        let mut text = serde_json::to_string_pretty(&stored).expect("record serializes");
        text.push('\n');
        io::write_atomic(&j.path, text.as_bytes())?;
        Ok(())
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = worker_count() {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| HarnessError::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| todo.par_iter().try_for_each(execute))?;

    let runs = jobs
        .iter()
        .map(|j| {
            read_stored(&j.path).ok_or_else(|| {
                HarnessError::Config(format!("run file {} vanished or is corrupt", j.path.display()))
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(BenchmarkOutcome {
        runs,
        executed: todo.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub candidate: Candidate,
    pub result: EvaluationResult,
    pub evaluations: u64,
}

pub const DEFAULT_ORACLE_BITS: usize = 20;

/// Evaluates all 2^M candidates and returns the `compare_lex` minimum,
/// breaking ties towards the lowest candidate integer (bit i = 2^i).
pub fn brute_force_oracle(problem: &Problem, max_bits: usize) -> Result<OracleResult, HarnessError> {
    let m = problem.catalog.len();
    if m > max_bits || m >= 64 {
        return Err(HarnessError::TooLarge { bits: m, cap: max_bits });
    }
    problem.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
    let total = 1u64 << m;
    let better = |a: (u64, EvaluationResult), b: (u64, EvaluationResult)| {
        if compare_lex(&b.1, &a.1).then(b.0.cmp(&a.0)).is_lt() {
            b
        } else {
            a
        }
    };
    let (index, result) = (0..total)
        .into_par_iter()
        .map(|i| problem.evaluate(&Candidate::from_index(i, m)).map(|r| (i, r)))
        .try_reduce_with(|a, b| Ok(better(a, b)))
        .expect("at least one candidate")?;
    Ok(OracleResult {
        candidate: Candidate::from_index(index, m),
        result,
        evaluations: total,
    })
}

#[cfg(test)]
mod tests;
