//! Regenerates the bundled fixture grids.
//!
//! ```text
//! cargo run --example make_fixtures -- crates/core/fixtures [--check]
//! ```
//!
//! Line limits are set from a base-case power flow: the lines marked as
//! stressed get a limit below their base loading, everything else keeps
//! headroom. `--check` prints the oracle optimum, the local optima and the
//! hit rates of every algorithm (`ONLY=desk14` restricts it to one grid).
//! `SEARCH=n` scores n random 14-bus designs instead; the chosen one is
//! `Design14::chosen`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use gridplan::evaluation::{compare_lex, EvalOptions};
use gridplan::grid::{
    apply_load_case, Branch, BranchId, BranchKind, Bus, BusId, Grid, Injection, InjectionId, InjectionKind,
    InjectionOverride, LoadCase, Switch, SwitchId, SwitchKind,
};
use gridplan::harness::brute_force_oracle;
use gridplan::heuristics::{run_heuristic, Algo, AlgoParams, Budget, Problem, RunOptions};
use gridplan::io;
use gridplan::measures::{build_catalog, CatalogConfig};
use gridplan::power_flow::{solve_power_flow, PfOptions};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const R_PER_KM: f64 = 0.12;
const X_PER_KM: f64 = 0.4;
const B_PER_KM: f64 = 2.8;
const MAX_I_KA: f64 = 0.6;
const REPL_PER_KM: f64 = 250_000.0;

struct Builder {
    buses: Vec<Bus>,
    branches: Vec<Branch>,
    switches: Vec<Switch>,
    injections: Vec<Injection>,
    stressed: BTreeMap<u32, f64>,
    /// Lowest limit of an unstressed line, percent.
    floor: f64,
}

impl Builder {
    fn new() -> Self {
        Self {
            buses: vec![],
            branches: vec![],
            switches: vec![],
            injections: vec![],
            stressed: BTreeMap::new(),
            floor: 50.0,
        }
    }

    fn bus(&mut self, x: f64, y: f64) -> u32 {
        let id = self.buses.len() as u32;
        self.buses.push(Bus {
            id: BusId(id),
            name: format!("B{id}"),
            vn_kv: 110.0,
            min_vm_pu: 0.9,
            max_vm_pu: 1.1,
            geo: Some((x, y)),
            in_service: true,
        });
        id
    }

    fn line(&mut self, a: u32, b: u32, replaceable: bool) -> u32 {
        let (pa, pb) = (self.buses[a as usize].geo.unwrap(), self.buses[b as usize].geo.unwrap());
        let km = (((pa.0 - pb.0).powi(2) + (pa.1 - pb.1).powi(2)).sqrt() * 1.15 * 10.0).round() / 10.0;
        let id = self.branches.len() as u32;
        self.branches.push(Branch {
            id: BranchId(id),
            kind: BranchKind::Line,
            from_bus: BusId(a),
            to_bus: BusId(b),
            r_ohm: R_PER_KM * km,
            x_ohm: X_PER_KM * km,
            b_total_us: B_PER_KM * km,
            length_km: km,
            max_i_ka: MAX_I_KA,
            max_loading_percent: 100.0,
            parallel: 1,
            in_service: true,
            replaceable,
            repl_cost_per_km: REPL_PER_KM,
        });
        id
    }

    fn switch(&mut self, line: u32, closed: bool) {
        let id = self.switches.len() as u32;
        let bus = self.branches[line as usize].to_bus;
        self.switches.push(Switch {
            id: SwitchId(id),
            kind: SwitchKind::BusLine,
            bus,
            other: line,
            closed_default: closed,
        });
    }

    fn inj(&mut self, bus: u32, kind: InjectionKind, p: Option<f64>, q: Option<f64>, vm: Option<f64>) {
        let id = self.injections.len() as u32;
        self.injections.push(Injection {
            id: InjectionId(id),
            bus: BusId(bus),
            kind,
            p_mw: p,
            q_mvar: q,
            vm_pu: vm,
            va_degree: if kind == InjectionKind::Slack { Some(0.0) } else { None },
        });
    }

    fn load(&mut self, bus: u32, p: f64) {
        self.inj(bus, InjectionKind::Load, Some(p), Some(p * 0.2), None);
    }

    fn finish(self, cases: &[LoadCase], headroom: f64) -> Grid {
        self.try_finish(cases, headroom).expect("base case does not solve")
    }

    /// Sets limits from the worst loading over the load cases.
    fn try_finish(mut self, cases: &[LoadCase], headroom: f64) -> Option<Grid> {
        let grid = Grid::new(100.0, self.buses.clone(), self.branches.clone(), self.switches.clone(), self.injections.clone());
        let mut worst = vec![0.0f64; self.branches.len()];
        for lc in cases {
            let state = apply_load_case(&grid, lc).unwrap();
            let pf = solve_power_flow(&state, &PfOptions::default());
            if !pf.converged {
                return None;
            }
            for (w, l) in worst.iter_mut().zip(&pf.branch_loading_percent) {
                *w = w.max(*l);
            }
        }
        for (k, br) in self.branches.iter_mut().enumerate() {
            if worst[k] >= 150.0 {
                return None;
            }
            let limit = match self.stressed.get(&(k as u32)) {
                Some(f) => worst[k] * f,
                None => (worst[k] * headroom).max(self.floor),
            };
            br.max_loading_percent = (limit.clamp(5.0, 200.0) * 10.0).round() / 10.0;
        }
        Some(Grid::new(100.0, self.buses, self.branches, self.switches, self.injections))
    }
}

const DESK14_LINES: [(u32, u32); 18] = [
    (0, 1),
    (1, 2),
    (2, 3),
    (0, 4),
    (1, 5),
    (2, 6),
    (3, 7),
    (5, 6),
    (4, 8),
    (8, 9),
    (5, 9),
    (9, 10),
    (6, 10),
    (10, 11),
    (7, 11),
    (9, 12),
    (12, 13),
    (11, 13),
];

struct Design14 {
    repl: Vec<u32>,
    stressed: Vec<(u32, f64)>,
    switches: Vec<(u32, bool)>,
    floor: f64,
}

impl Design14 {
    fn chosen() -> Self {
        Self {
            repl: vec![1, 8, 9, 11, 12, 14],
            stressed: vec![(1, 0.73), (2, 0.74), (4, 0.76), (11, 0.92)],
            switches: vec![(0, true), (5, true), (6, true), (7, true), (13, false), (16, true)],
            floor: 30.0,
        }
    }

    fn random(rng: &mut ChaCha8Rng) -> Self {
        let lines: Vec<u32> = (0..DESK14_LINES.len() as u32).collect();
        let picked: Vec<u32> = lines.choose_multiple(rng, 12).copied().collect();
        let mut repl = picked[..6].to_vec();
        repl.sort();
        let mut switches: Vec<(u32, bool)> = picked[6..].iter().map(|&l| (l, rng.random_bool(0.7))).collect();
        switches.sort();
        let n_stressed = rng.random_range(3..7);
        let mut stressed: Vec<(u32, f64)> = lines
            .choose_multiple(rng, n_stressed)
            .map(|&l| (l, (rng.random_range(0.7..0.97f64) * 100.0).round() / 100.0))
            .collect();
        stressed.sort_by_key(|x| x.0);
        Self {
            repl,
            stressed,
            switches,
            floor: [30.0, 50.0, 70.0, 90.0][rng.random_range(0..4)],
        }
    }
}

fn desk14() -> (Grid, Vec<LoadCase>) {
    desk14_from(&Design14::chosen()).unwrap()
}

/// None when the design's base case does not solve.
fn desk14_from(d: &Design14) -> Option<(Grid, Vec<LoadCase>)> {
    let mut b = Builder::new();
    b.floor = d.floor;
    let pts = [
        (0.0, 0.0),
        (20.0, 5.0),
        (40.0, 0.0),
        (60.0, 5.0),
        (10.0, 25.0),
        (30.0, 25.0),
        (50.0, 25.0),
        (70.0, 25.0),
        (0.0, 45.0),
        (20.0, 45.0),
        (40.0, 45.0),
        (60.0, 45.0),
        (30.0, 65.0),
        (55.0, 65.0),
    ];
    for (x, y) in pts {
        b.bus(x, y);
    }
    for (k, &(u, v)) in DESK14_LINES.iter().enumerate() {
        b.line(u, v, d.repl.contains(&(k as u32)));
    }
    for &(l, closed) in &d.switches {
        b.switch(l, closed);
    }
    b.inj(0, InjectionKind::Slack, None, None, Some(1.02));
    b.inj(13, InjectionKind::Generator, Some(60.0), None, Some(1.01));
    for (bus, p) in [(1, 18.0), (2, 22.0), (3, 15.0), (4, 20.0), (5, 25.0), (6, 16.0), (7, 12.0), (8, 24.0), (9, 20.0), (10, 18.0), (11, 14.0), (12, 16.0)] {
        b.load(bus, p);
    }
    let mut low = LoadCase::named("low_generation");
    low.injection_overrides.insert(
        InjectionId(1),
        InjectionOverride {
            p_mw: Some(20.0),
            ..Default::default()
        },
    );
    let cases = vec![LoadCase::named("peak"), low];
    b.stressed.extend(d.stressed.iter().copied());
    let grid = b.try_finish(&cases, 1.25)?;
    Some((grid, cases))
}

/// 121 buses on a jittered 11 x 11 lattice fed from the centre. The middle
/// row and the column cores are fixed; the outer thirds of every column
/// hang on switched lines and are tied together by switched cross links.
/// Operated fully meshed, so single openings keep it connected while
/// random switching states often strand buses.
fn desk120() -> (Grid, Vec<LoadCase>) {
    let mut rng = ChaCha8Rng::seed_from_u64(120);
    let mut b = Builder::new();
    let mut at = BTreeMap::new();
    for i in 0..11 {
        for j in 0..11 {
            let x = 12.0 * i as f64 + rng.random_range(-3.0..3.0);
            let y = 12.0 * j as f64 + rng.random_range(-3.0..3.0);
            at.insert((i, j), b.bus(x, y));
        }
    }
    let n = b.buses.len();
    let mut switched = Vec::new();
    for i in 0..11 {
        if i + 1 < 11 {
            let near = i == 4 || i == 5 || i == 3 || i == 6;
            b.line(at[&(i, 5)], at[&(i + 1, 5)], near || i % 3 == 0);
        }
        for j in 0..10 {
            let (u, v) = (at[&(i, j)], at[&(i, j + 1)]);
            if j == 2 || j == 7 {
                let l = b.line(u, v, false);
                switched.push((l, true));
            } else {
                b.line(u, v, (j == 4 || j == 5) && i % 2 == 1);
            }
        }
    }
    for j in [1, 9] {
        for i in 0..10 {
            let l = b.line(at[&(i, j)], at[&(i + 1, j)], false);
            switched.push((l, true));
        }
    }
    for (l, closed) in switched {
        b.switch(l, closed);
    }
    b.inj(at[&(5, 5)], InjectionKind::Slack, None, None, Some(1.03));
    b.inj(at[&(1, 9)], InjectionKind::Generator, Some(80.0), None, Some(1.02));
    b.inj(at[&(9, 1)], InjectionKind::Generator, Some(60.0), None, Some(1.02));
    for bus in 0..n as u32 {
        if b.injections.iter().any(|i| i.bus.0 == bus) {
            continue;
        }
        let p = rng.random_range(1.5..4.5);
        b.load(bus, (p * 10.0f64).round() / 10.0);
    }
    let mut low = LoadCase::named("low_generation");
    low.injection_overrides.insert(
        InjectionId(1),
        InjectionOverride {
            p_mw: Some(40.0),
            ..Default::default()
        },
    );
    let cases = vec![LoadCase::named("peak"), low];
    let replaceable: Vec<u32> = b.branches.iter().filter(|x| x.replaceable).map(|x| x.id.0).collect();
    for (k, l) in replaceable.into_iter().enumerate() {
        if k % 3 == 0 {
            b.stressed.insert(l, 0.9);
        }
    }
    (b.finish(&cases, 1.3), cases)
}

/// Candidates (as integers) that no single flip or swap improves under
/// the lexicographic order.
fn local_optima(problem: &Problem) -> Vec<u64> {
    let m = problem.catalog.len();
    let keys: Vec<_> = (0..1u64 << m)
        .map(|i| problem.evaluate(&gridplan::measures::Candidate::from_index(i, m)).unwrap())
        .collect();
    let better = |a: u64, b: u64| compare_lex(&keys[a as usize], &keys[b as usize]) == std::cmp::Ordering::Less;
    (0..1u64 << m)
        .filter(|&i| {
            let flips = (0..m).map(|k| i ^ (1 << k));
            let swaps = (0..m).flat_map(|a| (0..m).map(move |b| (a, b))).filter(|&(a, b)| i >> a & 1 == 1 && i >> b & 1 == 0).map(|(a, b)| i ^ (1 << a) ^ (1 << b));
            !flips.chain(swaps).any(|j| better(j, i))
        })
        .collect()
}

fn check(name: &str, grid: &Grid, cases: &[LoadCase]) {
    let cat = build_catalog(grid, &CatalogConfig::default()).unwrap();
    let c = cat.counts();
    println!(
        "{name}: {} buses, {} branches, {} switches; catalog REPL {} SWITCH {} AL {}",
        grid.buses().len(),
        grid.branches().len(),
        grid.switches().len(),
        c.repl,
        c.switch,
        c.al
    );
    let problem = Problem::new(grid.clone(), cases.to_vec(), cat, EvalOptions::default());
    let zero = problem.evaluate(&gridplan::measures::Candidate::zeros(problem.catalog.len())).unwrap();
    println!("  base: level {} raw {}", zero.level, zero.raw_cost);
    if problem.catalog.len() > 16 {
        let b = Budget {
            powerflow_limit: Some(std::env::var("PFLIM").map_or(1000, |f| f.parse().unwrap())),
            ..Budget::default()
        };
        for seed in 1..=5 {
            for algo in [Algo::Ils, Algo::Ga] {
                let r = run_heuristic(algo, &AlgoParams::default(), &problem, &b, &RunOptions::default(), seed).unwrap();
                let best = r.best.unwrap();
                println!(
                    "  seed {seed} {algo}: evals {} topo {} pf {} cost {}; best level {} inv {}",
                    r.total_evals, r.classes.topology.evals, r.classes.powerflow.evals, r.classes.cost.evals, best.level, best.investment
                );
            }
        }
        return;
    }
    let o = brute_force_oracle(&problem, 20).unwrap();
    println!("  oracle {} level {} investment {}", o.candidate, o.result.level, o.result.investment);
    let lo = local_optima(&problem);
    println!("  local optima {}: {:?}", lo.len(), lo.iter().map(|&i| gridplan::measures::Candidate::from_index(i, problem.catalog.len()).to_string()).collect::<Vec<_>>());
    if std::env::var("QUICK").is_ok() {
        return;
    }
    if std::env::var("VERBOSE").is_ok() {
        let state = apply_load_case(grid, &cases[0]).unwrap();
        let pf = solve_power_flow(&state, &PfOptions::default());
        for (br, l) in grid.branches().iter().zip(&pf.branch_loading_percent) {
            println!("    line {} {}-{}: {:.1}% limit {}", br.id, br.from_bus, br.to_bus, l, br.max_loading_percent);
        }
        let mut levels = BTreeMap::new();
        for i in 0..1u64 << problem.catalog.len() {
            let r = problem.evaluate(&gridplan::measures::Candidate::from_index(i, problem.catalog.len())).unwrap();
            *levels.entry(r.level).or_insert(0) += 1;
        }
        println!("    levels {levels:?}");
    }
    for algo in Algo::ALL {
        let mut hit = 0;
        let mut within2 = 0;
        let mut ends = BTreeMap::new();
        let mut evals = 0;
        for seed in 0..50 {
            let r = run_heuristic(algo, &AlgoParams::default(), &problem, &Budget::evals(5000), &RunOptions::default(), seed).unwrap();
            evals += r.total_evals;
            let b = r.best.unwrap();
            if (b.level, b.raw_cost) == (o.result.level, o.result.raw_cost) {
                hit += 1;
            } else {
                *ends.entry((b.candidate.clone(), b.level)).or_insert(0) += 1;
            }
            if b.level == 0 && b.investment <= 2.0 * o.result.investment {
                within2 += 1;
            }
        }
        println!("  {algo}: optimum {hit}/50, within 2x {within2}/50, evals {evals}; misses {ends:?}");
    }
}

/// Scores random 14-bus designs: wanted are a feasible optimum that mixes
/// replacements and switching, and no local optimum worse than it.
fn search(n: u64) {
    for seed in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Design14::random(&mut rng);
        let Some((grid, cases)) = desk14_from(&d) else { continue };
        let Ok(cat) = build_catalog(&grid, &CatalogConfig::default()) else { continue };
        let problem = Problem::new(grid, cases, cat, EvalOptions::default());
        let m = problem.catalog.len();
        let all: Vec<_> = (0..1u64 << m)
            .map(|i| problem.evaluate(&gridplan::measures::Candidate::from_index(i, m)).unwrap())
            .collect();
        let best = (0..all.len()).min_by(|&a, &b| compare_lex(&all[a], &all[b]).then(a.cmp(&b))).unwrap();
        if all[best].level != 0 || all[0].level == 0 {
            continue;
        }
        // best without any switching
        let repl_only = (0..all.len()).filter(|i| i >> 6 == 0).min_by(|&a, &b| compare_lex(&all[a], &all[b])).unwrap();
        let switching_helps = compare_lex(&all[best], &all[repl_only]) == std::cmp::Ordering::Less;
        let lo = local_optima(&problem);
        let bad = lo.iter().filter(|&&i| compare_lex(&all[i as usize], &all[best]) == std::cmp::Ordering::Greater).count();
        let feasible = all.iter().filter(|r| r.level == 0).count();
        println!(
            "seed {seed}: bad {bad} of {} optima, feasible {feasible}, switching helps {switching_helps}, best {} inv {} | repl {:?} stressed {:?} switches {:?} floor {}",
            lo.len(),
            gridplan::measures::Candidate::from_index(best as u64, m),
            all[best].investment,
            d.repl,
            d.stressed,
            d.switches,
            d.floor
        );
    }
}

fn main() {
    if let Some(n) = std::env::var("SEARCH").ok().and_then(|v| v.parse().ok()) {
        search(n);
        return;
    }
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "crates/core/fixtures".into()));
    let check_mode = args.any(|a| a == "--check");
    std::fs::create_dir_all(&dir).unwrap();
    for (name, (grid, cases)) in [("desk14", desk14()), ("desk120", desk120())] {
        io::save_grid(&grid, &dir.join(format!("{name}.grid.json"))).unwrap();
        std::fs::write(dir.join(format!("{name}.cases.json")), io::load_cases_to_string(&cases)).unwrap();
        if check_mode && std::env::var("ONLY").map_or(true, |o| o == name) {
            check(name, &grid, &cases);
        }
    }
}
