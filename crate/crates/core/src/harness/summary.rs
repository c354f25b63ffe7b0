//! Aggregation of stored runs into comparison tables and CSV reports.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::{HarnessError, StoredRun};
use crate::evaluation::{EvalClass, LEVEL_INVESTMENT};
use crate::heuristics::{Algo, RunRecord, RunStatus};

/// Normalized costs above this factor are flagged as clipped.
pub const CLIP_FACTOR: f64 = 5.0;
/// Relative tolerance for counting a result as the best one.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub grid: String,
    pub algorithm: Algo,
    pub run_index: u32,
    pub seed: u64,
    /// ok, failed, no_evaluation, infeasible (run found no feasible result)
    pub status: &'static str,
    pub best_level: Option<u8>,
    /// Best feasible investment of the run.
    pub investment: Option<f64>,
    /// Investment over the grid's global best, at least 1.
    pub normalized: Option<f64>,
    pub clipped: bool,
    pub time_to_best_s: Option<f64>,
    pub total_evals: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointRow {
    pub algorithm: Algo,
    pub checkpoint_s: f64,
    /// Runs whose best-so-far at the checkpoint ties their grid's global best.
    pub runs_best: usize,
    pub runs_total: usize,
    /// Grids where at least one run of the algorithm reached the global best.
    pub grids_best: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShareRow {
    pub grid: String,
    pub algorithm: Algo,
    pub run_index: u32,
    /// Time shares per class (topology, powerflow, cost).
    pub time_share: [f64; 3],
    /// Evaluation-count shares per class.
    pub eval_share: [f64; 3],
    pub total_evals: u64,
    pub total_time_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SummaryTables {
    /// Lowest feasible investment per grid; None if no run found one.
    pub global_best: BTreeMap<String, Option<f64>>,
    pub runs: Vec<RunRow>,
    pub checkpoints: Vec<CheckpointRow>,
    pub shares: Vec<ShareRow>,
}

fn feasible_investment(rec: &RunRecord) -> Option<f64> {
    rec.best
        .as_ref()
        .filter(|b| b.level == LEVEL_INVESTMENT)
        .map(|b| b.investment)
}

/// Best feasible investment reached by `t` seconds.
fn investment_at(rec: &RunRecord, t: f64) -> Option<f64> {
    rec.trajectory
        .iter()
        .filter(|p| p.elapsed_s <= t && p.level == LEVEL_INVESTMENT)
        .map(|p| p.investment)
        .min_by(f64::total_cmp)
}

fn ties(x: f64, best: f64) -> bool {
    (x - best).abs() <= TIE_TOLERANCE * best.abs()
}

fn sorted(runs: &[StoredRun]) -> Vec<&StoredRun> {
    let mut v: Vec<&StoredRun> = runs.iter().collect();
    v.sort_by(|a, b| (&a.grid, a.algorithm, a.run_index).cmp(&(&b.grid, b.algorithm, b.run_index)));
    v
}

pub fn summarize(runs: &[StoredRun], checkpoints_s: &[f64]) -> SummaryTables {
    let runs = sorted(runs);
    let mut global_best: BTreeMap<String, Option<f64>> = BTreeMap::new();
    for r in &runs {
        let inv = r.record.as_ref().and_then(feasible_investment);
        let slot = global_best.entry(r.grid.clone()).or_insert(None);
        if let Some(x) = inv {
            *slot = Some(slot.map_or(x, |g: f64| g.min(x)));
        }
    }

    let mut rows = Vec::with_capacity(runs.len());
    let mut shares = Vec::new();
    for r in &runs {
        let rec = r.record.as_ref();
        let investment = rec.and_then(feasible_investment);
        let (normalized, clipped) = match (investment, global_best[&r.grid]) {
            (Some(x), Some(g)) => {
                let ratio = if g > 0.0 {
                    x / g
                } else if x == 0.0 {
                    1.0
                } else {
                    f64::INFINITY
                };
                let n = ratio.max(1.0);
                (Some(n), n > CLIP_FACTOR)
            }
            _ => (None, false),
        };
        let status = match rec {
            None => "failed",
            Some(rec) if rec.status == RunStatus::NoEvaluation => "no_evaluation",
            Some(_) if investment.is_none() => "infeasible",
            Some(_) => "ok",
        };
        rows.push(RunRow {
            grid: r.grid.clone(),
            algorithm: r.algorithm,
            run_index: r.run_index,
            seed: r.seed,
            status,
            best_level: rec.and_then(|x| x.best.as_ref()).map(|b| b.level),
            investment,
            normalized,
            clipped,
            time_to_best_s: rec.and_then(RunRecord::time_to_best_s),
            total_evals: rec.map_or(0, |x| x.total_evals),
        });
        if let Some(rec) = rec.filter(|x| x.total_evals > 0) {
            let evals = rec.total_evals as f64;
            let time = rec.classes.total_time_s();
            let eval_share = EvalClass::ALL.map(|c| rec.classes.get(c).evals as f64 / evals);
            let time_share = if time > 0.0 {
                EvalClass::ALL.map(|c| rec.classes.get(c).time_s / time)
            } else {
                eval_share
            };
            shares.push(ShareRow {
                grid: r.grid.clone(),
                algorithm: r.algorithm,
                run_index: r.run_index,
                time_share,
                eval_share,
                total_evals: rec.total_evals,
                total_time_s: time,
            });
        }
    }

    let algos: Vec<Algo> = {
        let mut a: Vec<Algo> = runs.iter().map(|r| r.algorithm).collect();
        a.sort();
        a.dedup();
        a
    };
    let mut cps: Vec<f64> = checkpoints_s.to_vec();
    cps.sort_by(f64::total_cmp);
    cps.dedup();
    let mut checkpoints = Vec::new();
    for &algo in &algos {
        for &t in &cps {
            let mut runs_best = 0;
            let mut runs_total = 0;
            let mut grids: BTreeMap<&str, bool> = BTreeMap::new();
            for r in runs.iter().filter(|r| r.algorithm == algo) {
                runs_total += 1;
                let hit = match (r.record.as_ref().and_then(|x| investment_at(x, t)), global_best[&r.grid]) {
                    (Some(x), Some(g)) => ties(x, g),
                    _ => false,
                };
                runs_best += usize::from(hit);
                *grids.entry(&r.grid).or_default() |= hit;
            }
            checkpoints.push(CheckpointRow {
                algorithm: algo,
                checkpoint_s: t,
                runs_best,
                runs_total,
                grids_best: grids.values().filter(|&&h| h).count(),
            });
        }
    }
    SummaryTables {
        global_best,
        runs: rows,
        checkpoints,
        shares,
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

struct Table {
    path: PathBuf,
    w: csv::Writer<Vec<u8>>,
}

impl Table {
    fn new(path: PathBuf, header: &[&str]) -> Result<Self, HarnessError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).map_err(|error| HarnessError::Csv {
            path: path.clone(),
            error,
        })?;
        Ok(Self { path, w })
    }

    fn row(&mut self, fields: Vec<String>) -> Result<(), HarnessError> {
        self.w.write_record(&fields).map_err(|error| HarnessError::Csv {
            path: self.path.clone(),
            error,
        })
    }

    fn finish(self) -> Result<PathBuf, HarnessError> {
        let bytes = self.w.into_inner().expect("in-memory writer");
        crate::io::write_atomic(&self.path, &bytes)?;
        Ok(self.path)
    }
}

pub const RUNS_HEADER: &[&str] = &[
    "grid",
    "algorithm",
    "run_index",
    "seed",
    "status",
    "best_level",
    "investment",
    "global_best",
    "normalized",
    "clipped",
    "time_to_best_s",
    "total_evals",
];
pub const CHECKPOINT_HEADER: &[&str] = &["algorithm", "checkpoint_s", "runs_best", "runs_total", "grids_best"];
pub const SHARES_HEADER: &[&str] = &[
    "grid",
    "algorithm",
    "run_index",
    "topology_time_share",
    "powerflow_time_share",
    "cost_time_share",
    "topology_eval_share",
    "powerflow_eval_share",
    "cost_eval_share",
    "total_evals",
    "total_time_s",
];
pub const TRAJECTORY_HEADER: &[&str] = &[
    "run_index",
    "seed",
    "elapsed_s",
    "eval_count",
    "level",
    "raw_cost",
    "normalized",
    "investment",
    "candidate_hash",
];

/// Writes `normalized_costs.csv`, `checkpoint_best.csv`,
/// `eval_class_shares.csv` and one `trajectories/{grid}__{algo}.csv` per
/// cell. Returns the written paths in a fixed order.
pub fn emit_reports(tables: &SummaryTables, runs: &[StoredRun], out_dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let mut written = Vec::new();

    let mut t = Table::new(out_dir.join("normalized_costs.csv"), RUNS_HEADER)?;
    for r in &tables.runs {
        t.row(vec![
            r.grid.clone(),
            r.algorithm.to_string(),
            r.run_index.to_string(),
            r.seed.to_string(),
            r.status.to_string(),
            opt(r.best_level),
            opt(r.investment),
            opt(tables.global_best.get(&r.grid).copied().flatten()),
            opt(r.normalized),
            r.clipped.to_string(),
            opt(r.time_to_best_s),
            r.total_evals.to_string(),
        ])?;
    }
    written.push(t.finish()?);

    let mut t = Table::new(out_dir.join("checkpoint_best.csv"), CHECKPOINT_HEADER)?;
    for c in &tables.checkpoints {
        t.row(vec![
            c.algorithm.to_string(),
            c.checkpoint_s.to_string(),
            c.runs_best.to_string(),
            c.runs_total.to_string(),
            c.grids_best.to_string(),
        ])?;
    }
    written.push(t.finish()?);

    let mut t = Table::new(out_dir.join("eval_class_shares.csv"), SHARES_HEADER)?;
    for s in &tables.shares {
        let mut row = vec![s.grid.clone(), s.algorithm.to_string(), s.run_index.to_string()];
        row.extend(s.time_share.iter().chain(&s.eval_share).map(f64::to_string));
        row.push(s.total_evals.to_string());
        row.push(s.total_time_s.to_string());
        t.row(row)?;
    }
    written.push(t.finish()?);

    let mut cells: BTreeMap<(&str, Algo), Vec<&StoredRun>> = BTreeMap::new();
    for r in sorted(runs) {
        cells.entry((&r.grid, r.algorithm)).or_default().push(r);
    }
    for ((grid, algo), cell) in cells {
        let path = out_dir.join("trajectories").join(format!("{grid}__{algo}.csv"));
        let mut t = Table::new(path, TRAJECTORY_HEADER)?;
        for r in cell {
            for p in r.record.iter().flat_map(|x| &x.trajectory) {
                t.row(vec![
                    r.run_index.to_string(),
                    r.seed.to_string(),
                    p.elapsed_s.to_string(),
                    p.eval_count.to_string(),
                    p.level.to_string(),
                    p.raw_cost.to_string(),
                    p.normalized.to_string(),
                    p.investment.to_string(),
                    p.candidate_hash.clone(),
                ])?;
            }
        }
        written.push(t.finish()?);
    }
    Ok(written)
}
