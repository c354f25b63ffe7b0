use super::*;
use crate::evaluation::EvalOptions;
use crate::grid::tests::three_bus;
use crate::grid::Grid;
use crate::heuristics::{BestFound, ClassStats, ClassTable, ClockMode, RunStatus, TrajectoryPoint};
use crate::measures::CatalogConfig;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn record(algo: Algo, points: &[(f64, u8, f64)], classes: [(u64, f64); 3]) -> RunRecord {
    let trajectory: Vec<TrajectoryPoint> = points
        .iter()
        .enumerate()
        .map(|(i, &(t, level, inv))| TrajectoryPoint {
            elapsed_s: t,
            eval_count: i as u64 + 1,
            level,
            raw_cost: if level == 0 { inv / 1e6 } else { 1.0 },
            normalized: 0.0,
            investment: inv,
            candidate_hash: format!("{i:016x}"),
        })
        .collect();
    let best = trajectory.last().map(|p| BestFound {
        candidate: String::new(),
        level: p.level,
        raw_cost: p.raw_cost,
        normalized: p.normalized,
        investment: p.investment,
        eval_count: p.eval_count,
        elapsed_s: p.elapsed_s,
    });
    let stat = |(evals, time_s)| ClassStats { evals, time_s };
    let classes = ClassTable {
        topology: stat(classes[0]),
        powerflow: stat(classes[1]),
        cost: stat(classes[2]),
    };
    RunRecord {
        algorithm: algo,
        seed: 0,
        budget: Budget::evals(100),
        clock: ClockMode::Virtual,
        status: RunStatus::Completed,
        stop_reason: None,
        local_optimum: false,
        trajectory,
        best,
        total_evals: classes.total_evals(),
        total_power_flows: 0,
        classes,
        init_time_s: 0.0,
        elapsed_s: 10.0,
    }
}

fn stored(grid: &str, algo: Algo, run_index: u32, rec: Option<RunRecord>) -> StoredRun {
    StoredRun {
        grid: grid.into(),
        algorithm: algo,
        run_index,
        seed: u64::from(run_index),
        failure: rec.is_none().then(|| "no initial candidate".into()),
        record: rec,
    }
}

fn synthetic() -> Vec<StoredRun> {
    let c = [(5, 0.5), (3, 3.0), (2, 1.5)];
    vec![
        stored("g", Algo::Ga, 0, Some(record(Algo::Ga, &[(1.0, 2, 0.0), (50.0, 0, 6e6)], c))),
        stored("g", Algo::Ga, 1, Some(record(Algo::Ga, &[(2.0, 0, 25e6), (400.0, 0, 4e6)], c))),
        stored("g", Algo::Ils, 0, Some(record(Algo::Ils, &[(100.0, 0, 4e6 * (1.0 + 1e-12))], c))),
        stored("g", Algo::Ils, 1, Some(record(Algo::Ils, &[(1.0, 1, 0.0)], c))),
        stored("g", Algo::Hc, 0, None),
        stored("h", Algo::Ga, 0, Some(record(Algo::Ga, &[(1.0, 3, 0.0)], c))),
        stored("z", Algo::Ga, 0, Some(record(Algo::Ga, &[(5.0, 0, 0.0)], c))),
        stored("z", Algo::Ils, 0, Some(record(Algo::Ils, &[(5.0, 0, 2e6)], c))),
    ]
}

#[test]
fn normalized_costs_by_hand() {
    let t = summarize(&synthetic(), &[300.0, 1800.0]);
    assert_eq!(t.global_best["g"], Some(4e6));
    assert_eq!(t.global_best["h"], None);
    let row = |g: &str, a: Algo, i: u32| t.runs.iter().find(|r| r.grid == g && r.algorithm == a && r.run_index == i).unwrap();
    // 6 / 4
    assert_eq!(row("g", Algo::Ga, 0).normalized, Some(1.5));
    assert!(!row("g", Algo::Ga, 0).clipped);
    assert_eq!(row("g", Algo::Ga, 1).normalized, Some(1.0));
    // tiny excess above the best stays >= 1
    assert!(row("g", Algo::Ils, 0).normalized.unwrap() >= 1.0);
    assert_eq!(row("g", Algo::Ils, 1).status, "infeasible");
    assert_eq!(row("g", Algo::Ils, 1).normalized, None);
    assert_eq!(row("g", Algo::Hc, 0).status, "failed");
    assert_eq!(row("h", Algo::Ga, 0).normalized, None);
    // zero global best: the zero run is 1, the other one is clipped
    assert_eq!(row("z", Algo::Ga, 0).normalized, Some(1.0));
    assert!(row("z", Algo::Ils, 0).clipped);
    assert_eq!(row("g", Algo::Ga, 1).time_to_best_s, Some(400.0));
}

#[test]
fn run_best_at_25_is_clipped() {
    let runs = vec![
        stored("g", Algo::Ga, 0, Some(record(Algo::Ga, &[(1.0, 0, 4e6)], [(1, 1.0); 3]))),
        stored("g", Algo::Ga, 1, Some(record(Algo::Ga, &[(1.0, 0, 25e6)], [(1, 1.0); 3]))),
    ];
    let t = summarize(&runs, &[]);
    assert_eq!(t.runs[1].normalized, Some(6.25));
    assert!(t.runs[1].clipped);
    assert!(!t.runs[0].clipped);
}

#[test]
fn checkpoint_counts() {
    let t = summarize(&synthetic(), &[1800.0, 300.0]);
    let get = |a: Algo, s: f64| t.checkpoints.iter().find(|c| c.algorithm == a && c.checkpoint_s == s).unwrap();
    // GA run 1 reaches the best only at 400 s; the ILS run ties within 1e-9
    assert_eq!(get(Algo::Ga, 300.0).runs_best, 1); // grid z
    assert_eq!(get(Algo::Ga, 1800.0).runs_best, 2);
    assert_eq!(get(Algo::Ga, 1800.0).grids_best, 2);
    assert_eq!(get(Algo::Ils, 300.0).runs_best, 1);
    assert_eq!(get(Algo::Ga, 300.0).runs_total, 4);
    for a in [Algo::Ga, Algo::Hc, Algo::Ils] {
        assert!(get(a, 1800.0).runs_best >= get(a, 300.0).runs_best);
    }
}

#[test]
fn shares_sum_to_one() {
    let t = summarize(&synthetic(), &[]);
    assert!(!t.shares.is_empty());
    for s in &t.shares {
        assert!((s.time_share.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((s.eval_share.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(s.time_share, [0.1, 0.6, 0.3]);
        assert_eq!(s.eval_share, [0.5, 0.3, 0.2]);
    }
}

#[test]
fn empty_record_set_gives_headers_only() {
    let dir = tempfile::tempdir().unwrap();
    let t = summarize(&[], &[300.0]);
    let files = emit_reports(&t, &[], dir.path()).unwrap();
    assert_eq!(files.len(), 3);
    let text = std::fs::read_to_string(&files[0]).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("grid,algorithm,run_index"));
}

#[test]
fn emit_is_byte_stable() {
    let runs = synthetic();
    let mut shuffled = runs.clone();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(4));
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let fa = emit_reports(&summarize(&runs, &[300.0]), &runs, a.path()).unwrap();
    let fb = emit_reports(&summarize(&shuffled, &[300.0]), &shuffled, b.path()).unwrap();
    // 3 tables + cells (g,ga) (g,hc) (g,ils) (h,ga) (z,ga) (z,ils)
    assert_eq!(fa.len(), 9);
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap(), "{x:?}");
    }
}

fn small_problem(limit: f64) -> Problem {
    let (base, buses, mut branches, switches, inj) = three_bus().into_parts();
    for b in branches.iter_mut() {
        b.max_loading_percent = limit;
    }
    let g = Grid::new(base, buses, branches, switches, inj);
    let cat = build_catalog(&g, &CatalogConfig::default()).unwrap();
    Problem::new(g, vec![], cat, EvalOptions::default())
}

#[test]
fn oracle_small_cases() {
    let p = small_problem(10.0);
    let o = brute_force_oracle(&p, 20).unwrap();
    assert_eq!(o.evaluations, 1 << p.catalog.len());
    // independent check: shuffled enumeration, ties to the lowest integer
    let m = p.catalog.len();
    let mut order: Vec<u64> = (0..1 << m).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(9));
    let mut best: Option<(u64, EvaluationResult)> = None;
    for i in order {
        let r = p.evaluate(&Candidate::from_index(i, m)).unwrap();
        let replace = match &best {
            None => true,
            Some((j, b)) => compare_lex(&r, b).then(i.cmp(j)).is_lt(),
        };
        if replace {
            best = Some((i, r));
        }
    }
    let (i, r) = best.unwrap();
    assert_eq!(o.candidate.to_index(), Some(i));
    assert_eq!(o.result, r);
    assert!(matches!(brute_force_oracle(&p, 2), Err(HarnessError::TooLarge { cap: 2, .. })));
}

#[test]
fn oracle_on_empty_and_two_bit_catalogs() {
    let (base, buses, mut branches, switches, inj) = three_bus().into_parts();
    for b in branches.iter_mut() {
        b.replaceable = false;
    }
    let g = Grid::new(base, buses.clone(), branches.clone(), vec![], inj.clone());
    let cat = build_catalog(&g, &CatalogConfig::default()).unwrap();
    let p = Problem::new(g, vec![], cat, EvalOptions::default());
    let o = brute_force_oracle(&p, 20).unwrap();
    assert_eq!((o.candidate.len(), o.evaluations, o.result.level), (0, 1, 0));

    branches[0].replaceable = true;
    let g = Grid::new(base, buses, branches, switches, inj);
    let cat = build_catalog(&g, &CatalogConfig::default()).unwrap();
    assert_eq!(cat.len(), 2);
    let o = brute_force_oracle(&Problem::new(g, vec![], cat, EvalOptions::default()), 20).unwrap();
    assert_eq!(o.evaluations, 4);
}

#[test]
fn seed_schedule() {
    assert_eq!(run_seed(7, 3, 12), 7_003_012);
    assert_eq!(run_seed(0, 0, 0), 0);
}

fn plan(out: &Path, algos: Vec<Algo>, runs: u32) -> BenchmarkPlan {
    BenchmarkPlan {
        algorithms: algos,
        params: AlgoParams::default(),
        runs_per_cell: runs,
        seed_base: 3,
        budget: Budget::evals(60),
        run: RunOptions::default(),
        out_dir: out.to_path_buf(),
    }
}

#[test]
fn single_cell_benchmark_and_resume() {
    let dir = tempfile::tempdir().unwrap();
    let probs = vec![NamedProblem {
        name: "tiny".into(),
        problem: small_problem(10.0),
    }];
    let pl = plan(dir.path(), vec![Algo::Ils], 1);
    let first = run_problems(&probs, &pl).unwrap();
    assert_eq!((first.runs.len(), first.executed), (1, 1));
    assert_eq!(first.runs[0].seed, 3_000_000);
    let again = run_problems(&probs, &pl).unwrap();
    assert_eq!(again.executed, 0);
    assert_eq!(again.runs, first.runs);
}

#[test]
fn interrupted_benchmark_resumes_to_identical_reports() {
    let probs = vec![
        NamedProblem {
            name: "a".into(),
            problem: small_problem(10.0),
        },
        NamedProblem {
            name: "b".into(),
            problem: small_problem(100.0),
        },
    ];
    let algos = vec![Algo::Hc, Algo::Ga, Algo::Fwa];
    let full = tempfile::tempdir().unwrap();
    let out = run_problems(&probs, &plan(full.path(), algos.clone(), 3)).unwrap();
    assert_eq!(out.runs.len(), 18);
    let files_full = emit_reports(&summarize(&out.runs, &[0.01]), &out.runs, full.path()).unwrap();

    let part = tempfile::tempdir().unwrap();
    run_problems(&probs, &plan(part.path(), algos.clone(), 3)).unwrap();
    // simulate a crash: drop some run files and a half-written one
    for (g, a, r) in [("a", Algo::Ga, 2), ("b", Algo::Hc, 0), ("b", Algo::Fwa, 1)] {
        std::fs::remove_file(run_file(part.path(), g, a, r)).unwrap();
    }
    std::fs::write(run_file(part.path(), "a", Algo::Hc, 1), "{\"grid\": ").unwrap();
    let resumed = run_problems(&probs, &plan(part.path(), algos, 3)).unwrap();
    assert_eq!(resumed.executed, 4);
    let files_part = emit_reports(&summarize(&resumed.runs, &[0.01]), &resumed.runs, part.path()).unwrap();
    assert_eq!(files_full.len(), 3 + 6);
    for (x, y) in files_full.iter().zip(&files_part) {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap(), "{x:?}");
    }
}

#[test]
fn bad_plans_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let probs = vec![NamedProblem {
        name: "a__b".into(),
        problem: small_problem(10.0),
    }];
    assert!(matches!(run_problems(&probs, &plan(dir.path(), vec![Algo::Hc], 1)), Err(HarnessError::Config(_))));
    let probs = vec![NamedProblem {
        name: "ok".into(),
        problem: small_problem(10.0),
    }];
    assert!(run_problems(&probs, &plan(dir.path(), vec![Algo::Hc], 0)).is_err());
    assert!(run_problems(&probs, &plan(dir.path(), vec![], 1)).is_err());
}
