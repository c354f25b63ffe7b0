//! Seeded search strategies over binary candidates.
//!
//! Every strategy runs against a [`Search`] context that owns the budget,
//! the evaluation counters and the best-so-far archive, so budget handling
//! and trajectory recording are identical across algorithms.

mod local;
mod population;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::{
    compare_lex, effective_cases, evaluate, EvalClass, EvalError, EvalOptions, EvaluationResult,
};
use crate::grid::{apply_load_case, Grid, LoadCase};
use crate::measures::{Candidate, MeasureCatalog};
use crate::topology::{generate_initial_candidates, TopologyError};

pub use local::{HcParams, IlsParams};
pub use population::{FwaParams, GaParams, GwoParams, PsoParams};

#[derive(Debug, Error, PartialEq)]
pub enum RunError {
    #[error("invalid budget: {0}")]
    Budget(String),
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("invalid problem: {0}")]
    Problem(String),
    #[error("no initial candidate: {0}")]
    Init(#[from] TopologyError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("flip count {k} outside 1..={len}")]
    FlipCount { k: usize, len: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Hc,
    Ils,
    Ga,
    Pso,
    Gwo,
    Fwa,
}

impl Algo {
    pub const ALL: [Algo; 6] = [Algo::Hc, Algo::Ils, Algo::Ga, Algo::Pso, Algo::Gwo, Algo::Fwa];

    pub fn as_str(self) -> &'static str {
        match self {
            Algo::Hc => "hc",
            Algo::Ils => "ils",
            Algo::Ga => "ga",
            Algo::Pso => "pso",
            Algo::Gwo => "gwo",
            Algo::Fwa => "fwa",
        }
    }

    /// Population methods compare by normalized cost, local search by level.
    pub fn is_population(self) -> bool {
        !matches!(self, Algo::Hc | Algo::Ils)
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algo {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Algo::ALL
            .into_iter()
            .find(|a| a.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown algorithm '{s}' (expected hc, ils, ga, pso, gwo or fwa)"))
    }
}

/// Tunables of every algorithm; only the section of the running one is read.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlgoParams {
    pub hc: HcParams,
    pub ils: IlsParams,
    pub ga: GaParams,
    pub pso: PsoParams,
    pub gwo: GwoParams,
    pub fwa: FwaParams,
}

impl AlgoParams {
    pub fn validate(&self) -> Result<(), RunError> {
        self.ils.validate()?;
        self.ga.validate()?;
        self.pso.validate()?;
        self.gwo.validate()?;
        self.fwa.validate()
    }
}

/// Limits of one run. Any limit reached stops the run; a limit of zero
/// means no evaluation is performed at all.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Budget {
    pub time_limit_s: Option<f64>,
    pub eval_limit: Option<u64>,
    /// Caps the number of power-flow solves (one per load case and
    /// evaluation that reaches the power flow).
    pub powerflow_limit: Option<u64>,
}

impl Budget {
    pub fn evals(n: u64) -> Self {
        Self {
            eval_limit: Some(n),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), RunError> {
        if self.time_limit_s.is_none() && self.eval_limit.is_none() && self.powerflow_limit.is_none() {
            return Err(RunError::Budget("no limit given".into()));
        }
        if let Some(t) = self.time_limit_s {
            if !(t >= 0.0) || !t.is_finite() {
                return Err(RunError::Budget(format!("time limit {t} is not a finite non-negative number")));
            }
        }
        Ok(())
    }

    fn is_zero(&self) -> bool {
        self.time_limit_s == Some(0.0) || self.eval_limit == Some(0) || self.powerflow_limit == Some(0)
    }
}

/// How elapsed time is measured.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClockMode {
    /// Virtual without a time limit, wall otherwise.
    #[default]
    Auto,
    Wall,
    /// Fixed charges per evaluation; makes records reproducible bit for bit.
    Virtual,
}

/// Seconds charged per evaluation in virtual mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VirtualCosts {
    /// Applying measures and the connectivity check.
    pub topology_s: f64,
    /// Each power-flow solve.
    pub powerflow_s: f64,
}

impl Default for VirtualCosts {
    fn default() -> Self {
        Self {
            topology_s: 1e-4,
            powerflow_s: 2e-3,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunOptions {
    pub clock: ClockMode,
    pub virtual_costs: VirtualCosts,
}

/// One planning problem: grid, load cases, catalog and evaluation settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub grid: Grid,
    pub load_cases: Vec<LoadCase>,
    pub catalog: MeasureCatalog,
    pub eval: EvalOptions,
    /// Start population; drawn from random spanning trees when absent.
    pub initial: Option<Vec<Candidate>>,
}

impl Problem {
    pub fn new(grid: Grid, load_cases: Vec<LoadCase>, catalog: MeasureCatalog, eval: EvalOptions) -> Self {
        Self {
            grid,
            load_cases,
            catalog,
            eval,
            initial: None,
        }
    }

    pub fn validate(&self) -> Result<(), RunError> {
        if self.grid.slack_buses().is_empty() {
            return Err(EvalError::NoSlack.into());
        }
        for lc in self.load_cases.iter() {
            apply_load_case(&self.grid, lc).map_err(EvalError::from)?;
        }
        self.eval.pf.validate().map_err(|e| RunError::Problem(e.to_string()))?;
        if !(self.eval.cost_scale > 0.0) {
            return Err(RunError::Problem("cost_scale must be positive".into()));
        }
        if let Some(init) = &self.initial {
            if let Some(c) = init.iter().find(|c| c.len() != self.catalog.len()) {
                return Err(RunError::Problem(format!(
                    "initial candidate has {} bits, catalog has {}",
                    c.len(),
                    self.catalog.len()
                )));
            }
        }
        Ok(())
    }

    pub fn evaluate(&self, c: &Candidate) -> Result<EvaluationResult, EvalError> {
        evaluate(&self.grid, &self.load_cases, &self.catalog, c, &self.eval)
    }

    pub fn n_cases(&self) -> usize {
        effective_cases(&self.load_cases).len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub elapsed_s: f64,
    pub eval_count: u64,
    pub level: u8,
    pub raw_cost: f64,
    pub normalized: f64,
    pub investment: f64,
    pub candidate_hash: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub evals: u64,
    pub time_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassTable {
    pub topology: ClassStats,
    pub powerflow: ClassStats,
    pub cost: ClassStats,
}

impl ClassTable {
    pub fn get(&self, c: EvalClass) -> &ClassStats {
        match c {
            EvalClass::Topology => &self.topology,
            EvalClass::Powerflow => &self.powerflow,
            EvalClass::Cost => &self.cost,
        }
    }

    fn get_mut(&mut self, c: EvalClass) -> &mut ClassStats {
        match c {
            EvalClass::Topology => &mut self.topology,
            EvalClass::Powerflow => &mut self.powerflow,
            EvalClass::Cost => &mut self.cost,
        }
    }

    pub fn total_evals(&self) -> u64 {
        EvalClass::ALL.iter().map(|&c| self.get(c).evals).sum()
    }

    pub fn total_time_s(&self) -> f64 {
        EvalClass::ALL.iter().map(|&c| self.get(c).time_s).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    /// The budget allowed no evaluation.
    NoEvaluation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EvalLimit,
    TimeLimit,
    PowerflowLimit,
    /// Hill climbing found no improving neighbor.
    LocalOptimum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestFound {
    /// Bits as a 0/1 string, measure 0 first.
    pub candidate: String,
    pub level: u8,
    pub raw_cost: f64,
    pub normalized: f64,
    pub investment: f64,
    pub eval_count: u64,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub algorithm: Algo,
    pub seed: u64,
    pub budget: Budget,
    pub clock: ClockMode,
    pub status: RunStatus,
    pub stop_reason: Option<StopReason>,
    pub local_optimum: bool,
    pub trajectory: Vec<TrajectoryPoint>,
    pub best: Option<BestFound>,
    pub classes: ClassTable,
    pub total_evals: u64,
    pub total_power_flows: u64,
    /// Spent generating start candidates; not part of any eval class.
    pub init_time_s: f64,
    pub elapsed_s: f64,
}

impl RunRecord {
    /// Elapsed time at which the final best was first reached.
    pub fn time_to_best_s(&self) -> Option<f64> {
        self.best.as_ref().map(|b| b.elapsed_s)
    }
}

enum Clock {
    Wall(Instant),
    Virtual(f64),
}

/// Budget-aware evaluation context shared by all algorithms.
pub(crate) struct Search<'a> {
    problem: &'a Problem,
    budget: Budget,
    costs: VirtualCosts,
    clock: Clock,
    evals: u64,
    pfs: u64,
    classes: ClassTable,
    best: Option<(Candidate, EvaluationResult)>,
    best_at: (u64, f64),
    trajectory: Vec<TrajectoryPoint>,
    stop: Option<StopReason>,
    error: Option<EvalError>,
    pub(crate) rng: ChaCha8Rng,
}

impl<'a> Search<'a> {
    fn new(problem: &'a Problem, budget: &Budget, opts: &RunOptions, seed: u64) -> Self {
        let virtual_clock = match opts.clock {
            ClockMode::Virtual => true,
            ClockMode::Wall => false,
            ClockMode::Auto => budget.time_limit_s.is_none(),
        };
        Self {
            problem,
            budget: budget.clone(),
            costs: opts.virtual_costs.clone(),
            clock: if virtual_clock {
                Clock::Virtual(0.0)
            } else {
                Clock::Wall(Instant::now())
            },
            evals: 0,
            pfs: 0,
            classes: ClassTable::default(),
            best: None,
            best_at: (0, 0.0),
            trajectory: Vec::new(),
            stop: None,
            error: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.problem.catalog.len()
    }

    fn elapsed(&self) -> f64 {
        match self.clock {
            Clock::Wall(t0) => t0.elapsed().as_secs_f64(),
            Clock::Virtual(t) => t,
        }
    }

    /// True once any limit is reached; no further evaluation will run.
    pub(crate) fn done(&mut self) -> bool {
        if self.stop.is_some() || self.error.is_some() {
            return true;
        }
        let b = &self.budget;
        self.stop = if b.eval_limit.is_some_and(|n| self.evals >= n) {
            Some(StopReason::EvalLimit)
        } else if b.powerflow_limit.is_some_and(|n| self.pfs >= n) {
            Some(StopReason::PowerflowLimit)
        } else if b.time_limit_s.is_some_and(|t| self.elapsed() >= t) {
            Some(StopReason::TimeLimit)
        } else {
            None
        };
        self.stop.is_some()
    }

    /// Fraction of the tightest limit used so far, in [0, 1].
    pub(crate) fn progress(&self) -> f64 {
        let b = &self.budget;
        let mut p: f64 = 0.0;
        if let Some(n) = b.eval_limit {
            p = p.max(self.evals as f64 / n as f64);
        }
        if let Some(n) = b.powerflow_limit {
            p = p.max(self.pfs as f64 / n as f64);
        }
        if let Some(t) = b.time_limit_s {
            p = p.max(self.elapsed() / t);
        }
        p.clamp(0.0, 1.0)
    }

    /// Evaluates a candidate unless the budget is spent.
    pub(crate) fn eval(&mut self, c: &Candidate) -> Option<EvaluationResult> {
        if self.done() {
            return None;
        }
        let started = Instant::now();
        let r = match self.problem.evaluate(c) {
            Ok(r) => r,
            Err(e) => {
                self.error = Some(e);
                return None;
            }
        };
        let spent = match &mut self.clock {
            Clock::Wall(_) => started.elapsed().as_secs_f64(),
            Clock::Virtual(t) => {
                let s = self.costs.topology_s + self.costs.powerflow_s * r.power_flows as f64;
                *t += s;
                s
            }
        };
        self.evals += 1;
        self.pfs += r.power_flows as u64;
        let class = self.classes.get_mut(r.eval_class);
        class.evals += 1;
        class.time_s += spent;

        let improved = self
            .best
            .as_ref()
            .is_none_or(|(_, b)| compare_lex(&r, b).is_lt());
        if improved {
            let elapsed = self.elapsed();
            self.trajectory.push(TrajectoryPoint {
                elapsed_s: elapsed,
                eval_count: self.evals,
                level: r.level,
                raw_cost: r.raw_cost,
                normalized: r.normalized,
                investment: r.investment,
                candidate_hash: c.digest(),
            });
            self.best = Some((c.clone(), r.clone()));
            self.best_at = (self.evals, elapsed);
        }
        Some(r)
    }

    fn charge_init(&mut self, power_flows: usize, wall_s: f64) -> f64 {
        match &mut self.clock {
            Clock::Wall(_) => wall_s,
            Clock::Virtual(t) => {
                let s = self.costs.powerflow_s * power_flows as f64;
                *t += s;
                s
            }
        }
    }

    /// `n` start candidates: the given ones, or random spanning trees.
    pub(crate) fn initial(&mut self, n: usize) -> Result<(Vec<Candidate>, f64), RunError> {
        if let Some(init) = &self.problem.initial {
            return Ok((init.iter().take(n).cloned().collect(), 0.0));
        }
        if n == 0 {
            return Ok((Vec::new(), 0.0));
        }
        let p = self.problem;
        let started = Instant::now();
        let (cands, stats) =
            generate_initial_candidates(&p.grid, &p.load_cases, &p.catalog, &p.eval.pf, n, &mut self.rng)?;
        // the closed-state check plus one check per tree and closure step
        let pfs = (1 + stats.trees + stats.closure_steps) * p.n_cases();
        let t = self.charge_init(pfs, started.elapsed().as_secs_f64());
        Ok((cands, t))
    }

    fn into_record(self, algo: Algo, seed: u64, clock: ClockMode, local_optimum: bool, init_time_s: f64) -> Result<RunRecord, RunError> {
        if let Some(e) = self.error {
            return Err(e.into());
        }
        let elapsed_s = self.elapsed();
        let stop_reason = if local_optimum {
            Some(StopReason::LocalOptimum)
        } else {
            self.stop
        };
        let best = self.best.as_ref().map(|(c, r)| BestFound {
            candidate: c.to_string(),
            level: r.level,
            raw_cost: r.raw_cost,
            normalized: r.normalized,
            investment: r.investment,
            eval_count: self.best_at.0,
            elapsed_s: self.best_at.1,
        });
        Ok(RunRecord {
            algorithm: algo,
            seed,
            budget: self.budget,
            clock,
            status: RunStatus::Completed,
            stop_reason,
            local_optimum,
            trajectory: self.trajectory,
            best,
            total_evals: self.evals,
            total_power_flows: self.pfs,
            classes: self.classes,
            init_time_s,
            elapsed_s,
        })
    }
}

/// Runs one algorithm on a problem. Deterministic for a given seed when the
/// clock is virtual.
pub fn run_heuristic(
    algo: Algo,
    params: &AlgoParams,
    problem: &Problem,
    budget: &Budget,
    opts: &RunOptions,
    seed: u64,
) -> Result<RunRecord, RunError> {
    budget.validate()?;
    params.validate()?;
    problem.validate()?;
    let clock = match opts.clock {
        ClockMode::Auto if budget.time_limit_s.is_none() => ClockMode::Virtual,
        ClockMode::Auto => ClockMode::Wall,
        m => m,
    };
    if budget.is_zero() {
        return Ok(RunRecord {
            algorithm: algo,
            seed,
            budget: budget.clone(),
            clock,
            status: RunStatus::NoEvaluation,
            stop_reason: None,
            local_optimum: false,
            trajectory: Vec::new(),
            best: None,
            classes: ClassTable::default(),
            total_evals: 0,
            total_power_flows: 0,
            init_time_s: 0.0,
            elapsed_s: 0.0,
        });
    }
    let mut s = Search::new(problem, budget, opts, seed);
    let (local_optimum, init_time) = match algo {
        Algo::Hc => (local::hill_climb_run(&mut s, &params.hc), 0.0),
        Algo::Ils => (local::iterated_local_search(&mut s, &params.hc, &params.ils), 0.0),
        Algo::Ga => (false, population::genetic(&mut s, &params.ga)?),
        Algo::Pso => (false, population::particle_swarm(&mut s, &params.pso)?),
        Algo::Gwo => (false, population::grey_wolf(&mut s, &params.gwo)?),
        Algo::Fwa => (false, population::fireworks(&mut s, &params.fwa)?),
    };
    s.into_record(algo, seed, clock, local_optimum, init_time)
}

/// All candidates at Hamming distance one, in a seeded random order.
pub fn single_bit_neighbors<R: Rng + ?Sized>(candidate: &Candidate, rng: &mut R) -> impl Iterator<Item = Candidate> {
    let mut order: Vec<usize> = (0..candidate.len()).collect();
    order.shuffle(rng);
    let base = candidate.clone();
    order.into_iter().map(move |i| {
        let mut c = base.clone();
        c.flip(i);
        c
    })
}

/// Flips `k` distinct, uniformly chosen bits.
pub fn perturb<R: Rng + ?Sized>(candidate: &Candidate, k: usize, rng: &mut R) -> Result<Candidate, RunError> {
    let len = candidate.len();
    if k == 0 || k > len {
        return Err(RunError::FlipCount { k, len });
    }
    let mut c = candidate.clone();
    for i in rand::seq::index::sample(rng, len, k) {
        c.flip(i);
    }
    Ok(c)
}
