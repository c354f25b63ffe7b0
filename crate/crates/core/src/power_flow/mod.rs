//! AC power flow by Newton-Raphson on the polar mismatch equations.

mod admittance;

pub use admittance::{build_admittance, Admittance, BranchModel, SparseMatrix};

use faer::prelude::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{Argsort, Pair, SparseColMat, SymbolicSparseColMat, Triplet};
use faer::{Col, Mat};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{GridState, InjectionKind};
use crate::unionfind::UnionFind;
pub(crate) use admittance::bus_positions;

#[derive(Debug, Error, PartialEq)]
pub enum PfError {
    #[error("power flow did not converge; branch quantities are undefined")]
    NotConverged,
    #[error("invalid power flow options: {0}")]
    InvalidOptions(String),
}

/// Starting point of the Newton iteration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PfInit {
    /// 1.0 pu and 0° except at voltage-controlled buses.
    #[default]
    Flat,
    /// Per-bus magnitudes and angles of an earlier solution.
    Previous { vm_pu: Vec<f64>, va_degree: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PfOptions {
    /// Mismatch tolerance in MVA. Defaults to `1e-8 * base_mva`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_mva: Option<f64>,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub init: PfInit,
}

fn default_max_iter() -> usize {
    30
}

impl Default for PfOptions {
    fn default() -> Self {
        Self {
            tol_mva: None,
            max_iter: default_max_iter(),
            init: PfInit::Flat,
        }
    }
}

impl PfOptions {
    pub fn tolerance_mva(&self, base_mva: f64) -> f64 {
        self.tol_mva.unwrap_or(1e-8 * base_mva)
    }

    pub fn validate(&self) -> Result<(), PfError> {
        if let Some(tol) = self.tol_mva {
            if !(tol > 0.0) {
                return Err(PfError::InvalidOptions(format!(
                    "tol_mva must be positive, got {tol}"
                )));
            }
        }
        if self.max_iter < 1 {
            return Err(PfError::InvalidOptions("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// Solution of one power flow. Bus vectors follow `state.buses`, branch
/// vectors follow `state.branches`.
#[derive(Debug, Clone, PartialEq)]
pub struct PfResult {
    pub converged: bool,
    pub iterations: usize,
    pub vm_pu: Vec<f64>,
    pub va_degree: Vec<f64>,
    /// Bus belongs to an island containing a slack.
    pub energized: Vec<bool>,
    /// Zero for every branch when not converged.
    pub branch_loading_percent: Vec<f64>,
    pub p_slack_mw: f64,
    pub q_slack_mvar: f64,
    pub max_mismatch_mva: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum NodeKind {
    Pq,
    Pv,
    Slack,
}

/// Complex power injections per bus (generation positive) in per-unit.
pub fn specified_injections(state: &GridState) -> Vec<Complex64> {
    let pos = bus_positions(state);
    let mut s = vec![Complex64::default(); state.buses.len()];
    for inj in &state.injections {
        let Some(&b) = pos.get(&inj.bus) else { continue };
        let p = inj.p_mw.unwrap_or(0.0) / state.base_mva;
        let q = inj.q_mvar.unwrap_or(0.0) / state.base_mva;
        match inj.kind {
            InjectionKind::Load => s[b] -= Complex64::new(p, q),
            InjectionKind::Generator => {
                let q = if inj.vm_pu.is_some() { 0.0 } else { q };
                s[b] += Complex64::new(p, q);
            }
            InjectionKind::Slack => {}
        }
    }
    s
}

struct Setup {
    kind: Vec<NodeKind>,
    s_spec: Vec<Complex64>,
    vm: Vec<f64>,
    va: Vec<f64>,
    energized: Vec<bool>,
    unsupplied: bool,
}

fn setup(state: &GridState, adm: &Admittance, init: &PfInit) -> Setup {
    let n = adm.n_nodes();
    let pos = bus_positions(state);
    let mut kind = vec![NodeKind::Pq; n];
    let mut vm = vec![1.0; n];
    let mut va = vec![0.0; n];
    let mut s_spec = vec![Complex64::default(); n];

    if let PfInit::Previous { vm_pu, va_degree } = init {
        for (b, node) in adm.node_of_bus.iter().enumerate() {
            if let (Some(node), Some(&m), Some(&a)) = (node, vm_pu.get(b), va_degree.get(b)) {
                if m > 0.0 && m.is_finite() && a.is_finite() {
                    vm[*node] = m;
                    va[*node] = a.to_radians();
                }
            }
        }
    }

    for (b, s) in specified_injections(state).into_iter().enumerate() {
        if let Some(node) = adm.node_of_bus[b] {
            s_spec[node] += s;
        }
    }
    // slack setpoints win over generator setpoints; first injection wins within a kind
    for inj in &state.injections {
        let Some(node) = pos.get(&inj.bus).and_then(|&b| adm.node_of_bus[b]) else {
            continue;
        };
        match inj.kind {
            InjectionKind::Slack if kind[node] != NodeKind::Slack => {
                kind[node] = NodeKind::Slack;
                vm[node] = inj.vm_pu.unwrap_or(1.0);
                va[node] = inj.va_degree.unwrap_or(0.0).to_radians();
            }
            InjectionKind::Generator if kind[node] == NodeKind::Pq => {
                if let Some(v) = inj.vm_pu {
                    kind[node] = NodeKind::Pv;
                    vm[node] = v;
                }
            }
            _ => {}
        }
    }

    let mut uf = UnionFind::new(n);
    for (b, &on) in state.branches.iter().zip(&adm.active) {
        if !on {
            continue;
        }
        let f = pos.get(&b.from_bus).and_then(|&i| adm.node_of_bus[i]);
        let t = pos.get(&b.to_bus).and_then(|&i| adm.node_of_bus[i]);
        if let (Some(f), Some(t)) = (f, t) {
            uf.union(f, t);
        }
    }
    let mut island_has_slack = vec![false; n];
    for i in 0..n {
        if kind[i] == NodeKind::Slack {
            let r = uf.find(i);
            island_has_slack[r] = true;
        }
    }
    let energized: Vec<bool> = (0..n).map(|i| island_has_slack[uf.find(i)]).collect();
    let unsupplied = (0..n).any(|i| !energized[i] && s_spec[i].norm() > 0.0);
    Setup {
        kind,
        s_spec,
        vm,
        va,
        energized,
        unsupplied,
    }
}

fn polar(vm: &[f64], va: &[f64]) -> Vec<Complex64> {
    vm.iter()
        .zip(va)
        .map(|(&m, &a)| Complex64::from_polar(m, a))
        .collect()
}

/// Below this size a dense factorization is cheaper.
const DENSE_DIM: usize = 64;

/// Sparse Jacobian solver. The sparsity pattern is fixed within one power
/// flow, so the ordering and symbolic factorization are computed once.
#[derive(Default)]
struct JacobianSolver {
    pattern: Option<(SymbolicSparseColMat<usize>, Argsort<usize>, SymbolicLu<usize>)>,
}

impl JacobianSolver {
    /// Solves `J dx = -f`; None when the factorization fails or blows up.
    fn solve(&mut self, dim: usize, jac: &[Triplet<usize, usize, f64>], f: &[f64]) -> Option<Vec<f64>> {
        if dim <= DENSE_DIM {
            let mut m = Mat::<f64>::zeros(dim, dim);
            for t in jac {
                m[(t.row, t.col)] += t.val;
            }
            let dx = m.partial_piv_lu().solve(Col::from_fn(dim, |i| -f[i]));
            let dx: Vec<f64> = dx.iter().copied().collect();
            return dx.iter().all(|x| x.is_finite()).then_some(dx);
        }
        if self.pattern.is_none() {
            let idx: Vec<Pair<usize, usize>> = jac.iter().map(|t| Pair::new(t.row, t.col)).collect();
            let (sym, argsort) = SymbolicSparseColMat::try_new_from_indices(dim, dim, &idx).ok()?;
            let lu = SymbolicLu::try_new(sym.as_ref()).ok()?;
            self.pattern = Some((sym, argsort, lu));
        }
        let (sym, argsort, symbolic) = self.pattern.as_ref()?;
        let vals: Vec<f64> = jac.iter().map(|t| t.val).collect();
        let m = SparseColMat::new_from_argsort(sym.clone(), argsort, &vals).ok()?;
        let lu = Lu::try_new_with_symbolic(symbolic.clone(), m.as_ref()).ok()?;
        let dx = lu.solve(Col::from_fn(dim, |i| -f[i]));
        let dx: Vec<f64> = dx.iter().copied().collect();
        dx.iter().all(|x| x.is_finite()).then_some(dx)
    }
}

/// Solves the AC power flow of a state.
///
/// Non-convergence (iteration cap, singular Jacobian, unsupplied load in an
/// island without slack) is reported through `converged = false`.
pub fn solve_power_flow(state: &GridState, opts: &PfOptions) -> PfResult {
    let adm = build_admittance(state);
    let n = adm.n_nodes();
    let Setup {
        kind,
        s_spec,
        mut vm,
        mut va,
        energized,
        unsupplied,
    } = setup(state, &adm, &opts.init);
    let tol_pu = opts.tolerance_mva(state.base_mva) / state.base_mva;

    let pvpq: Vec<usize> = (0..n)
        .filter(|&i| energized[i] && kind[i] != NodeKind::Slack)
        .collect();
    let pq: Vec<usize> = (0..n)
        .filter(|&i| energized[i] && kind[i] == NodeKind::Pq)
        .collect();
    let mut col_angle = vec![usize::MAX; n];
    let mut col_mag = vec![usize::MAX; n];
    for (k, &i) in pvpq.iter().enumerate() {
        col_angle[i] = k;
    }
    for (k, &i) in pq.iter().enumerate() {
        col_mag[i] = pvpq.len() + k;
    }
    let dim = pvpq.len() + pq.len();

    let mut solver = JacobianSolver::default();
    let mut converged = false;
    let mut iterations = 0;
    let mut norm = f64::INFINITY;
    for it in 0..=opts.max_iter {
        let v = polar(&vm, &va);
        let current = adm.ybus.mul_vec(&v);
        let mis: Vec<Complex64> = (0..n).map(|i| v[i] * current[i].conj() - s_spec[i]).collect();
        let mut f = vec![0.0; dim];
        for &i in &pvpq {
            f[col_angle[i]] = mis[i].re;
        }
        for &i in &pq {
            f[col_mag[i]] = mis[i].im;
        }
        norm = f.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if !norm.is_finite() {
            break;
        }
        if norm < tol_pu {
            converged = true;
            iterations = it;
            break;
        }
        if it == opts.max_iter {
            iterations = it;
            break;
        }

        let mut jac: Vec<Triplet<usize, usize, f64>> = Vec::with_capacity(8 * adm.ybus.nnz());
        let vnorm: Vec<Complex64> = v.iter().map(|x| x / x.norm()).collect();
        let j = Complex64::i();
        for &i in &pvpq {
            let rp = col_angle[i];
            let rq = col_mag[i];
            let mut put = |col: usize, d: Complex64| {
                if col == usize::MAX {
                    return;
                }
                jac.push(Triplet::new(rp, col, d.re));
                if rq != usize::MAX {
                    jac.push(Triplet::new(rq, col, d.im));
                }
            };
            for (k, y) in adm.ybus.row(i) {
                put(col_angle[k], j * v[i] * (-(y * v[k])).conj());
                put(col_mag[k], v[i] * (y * vnorm[k]).conj());
            }
            put(col_angle[i], j * v[i] * current[i].conj());
            put(col_mag[i], current[i].conj() * vnorm[i]);
        }
        let Some(dx) = solver.solve(dim, &jac, &f) else {
            iterations = it;
            break;
        };
        for &i in &pvpq {
            va[i] += dx[col_angle[i]];
        }
        for &i in &pq {
            vm[i] += dx[col_mag[i]];
        }
        iterations = it + 1;
    }
    let converged = converged && !unsupplied;

    let nb = state.buses.len();
    let mut bus_vm = vec![0.0; nb];
    let mut bus_va = vec![0.0; nb];
    let mut bus_energized = vec![false; nb];
    for (b, node) in adm.node_of_bus.iter().enumerate() {
        if let Some(node) = *node {
            if energized[node] {
                bus_vm[b] = vm[node];
                bus_va[b] = va[node].to_degrees();
                bus_energized[b] = true;
            }
        }
    }

    let mut p_slack = 0.0;
    let mut q_slack = 0.0;
    if converged {
        let v = polar(&vm, &va);
        let current = adm.ybus.mul_vec(&v);
        for i in 0..n {
            if kind[i] == NodeKind::Slack && energized[i] {
                let s = v[i] * current[i].conj() - s_spec[i];
                p_slack += s.re * state.base_mva;
                q_slack += s.im * state.base_mva;
            }
        }
    }

    let mut result = PfResult {
        converged,
        iterations,
        vm_pu: bus_vm,
        va_degree: bus_va,
        energized: bus_energized,
        branch_loading_percent: vec![0.0; state.branches.len()],
        p_slack_mw: p_slack,
        q_slack_mvar: q_slack,
        max_mismatch_mva: norm * state.base_mva,
    };
    if converged {
        result.branch_loading_percent = loadings_from(&result, state, &adm);
    }
    result
}

/// Terminal quantities of one branch.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BranchFlow {
    pub s_from_mva: Complex64,
    pub s_to_mva: Complex64,
    pub i_from_ka: f64,
    /// Current at the to-terminal, referred to the from-side voltage.
    pub i_to_ka: f64,
}

fn flows_from(result: &PfResult, state: &GridState, adm: &Admittance) -> Vec<BranchFlow> {
    let pos = bus_positions(state);
    state
        .branches
        .iter()
        .zip(adm.active.iter().zip(&adm.models))
        .map(|(br, (&on, model))| {
            let (Some(m), true) = (model, on) else {
                return BranchFlow::default();
            };
            let f = pos[&br.from_bus];
            let t = pos[&br.to_bus];
            let vf = Complex64::from_polar(result.vm_pu[f], result.va_degree[f].to_radians());
            let vt = Complex64::from_polar(result.vm_pu[t], result.va_degree[t].to_radians());
            let (i_f, i_t) = m.currents(vf, vt);
            let i_base = state.base_mva / (3f64.sqrt() * state.buses[f].vn_kv);
            BranchFlow {
                s_from_mva: vf * i_f.conj() * state.base_mva,
                s_to_mva: vt * i_t.conj() * state.base_mva,
                i_from_ka: i_f.norm() * i_base,
                i_to_ka: i_t.norm() * i_base,
            }
        })
        .collect()
}

fn loadings_from(result: &PfResult, state: &GridState, adm: &Admittance) -> Vec<f64> {
    flows_from(result, state, adm)
        .iter()
        .zip(&state.branches)
        .map(|(fl, br)| fl.i_from_ka.max(fl.i_to_ka) / (br.max_i_ka * br.parallel as f64) * 100.0)
        .collect()
}

/// Terminal flows of every branch of a converged solution.
pub fn branch_flows(result: &PfResult, state: &GridState) -> Result<Vec<BranchFlow>, PfError> {
    if !result.converged {
        return Err(PfError::NotConverged);
    }
    Ok(flows_from(result, state, &build_admittance(state)))
}

/// Loading in percent of the thermal limit of all parallel circuits.
pub fn branch_loadings(result: &PfResult, state: &GridState) -> Result<Vec<f64>, PfError> {
    if !result.converged {
        return Err(PfError::NotConverged);
    }
    Ok(loadings_from(result, state, &build_admittance(state)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::tests::{bus, line, load, slack, three_bus};
    use crate::grid::{BusId, Grid, Injection, InjectionId};

    /// Slack at bus 0 and a PQ load at bus 1 over one series impedance, on a
    /// base where ohms equal per-unit.
    fn two_bus(v_slack: f64, r: f64, x: f64, p: f64, q: f64) -> GridState {
        let mut b0 = bus(0);
        let mut b1 = bus(1);
        b0.vn_kv = 10.0;
        b1.vn_kv = 10.0;
        let mut br = line(0, 0, 1);
        br.r_ohm = r;
        br.x_ohm = x;
        br.b_total_us = 0.0;
        let g = Grid::new(100.0, vec![b0, b1], vec![br], vec![], vec![slack(0, 0, v_slack), load(1, 1, p, q)]);
        GridState::from_defaults(&g)
    }

    /// Load-bus voltage from the biquadratic two-bus equation, or None when
    /// the load exceeds the loadability limit.
    fn two_bus_oracle(v1: f64, r: f64, x: f64, p: f64, q: f64) -> Option<f64> {
        let b = v1 * v1 - 2.0 * (p * r + q * x);
        let disc = b * b - 4.0 * (p * p + q * q) * (r * r + x * x);
        (disc >= 0.0).then(|| ((b + disc.sqrt()) / 2.0).sqrt())
    }

    #[test]
    fn slack_only_needs_no_iterations() {
        let mut b = bus(0);
        b.vn_kv = 20.0;
        let mut s = slack(0, 0, 1.03);
        s.va_degree = Some(-5.0);
        let g = Grid::new(100.0, vec![b], vec![], vec![], vec![s]);
        let r = solve_power_flow(&GridState::from_defaults(&g), &PfOptions::default());
        assert!(r.converged);
        assert_eq!(r.iterations, 0);
        assert_eq!(r.vm_pu, vec![1.03]);
        assert!((r.va_degree[0] + 5.0).abs() < 1e-12);
    }

    #[test]
    fn two_bus_matches_closed_form() {
        // 10 kV on 100 MVA: z_base = 1 ohm
        let (r, x, p, q) = (0.02, 0.08, 150.0, 60.0);
        let state = two_bus(1.02, r, x, p, q);
        let res = solve_power_flow(&state, &PfOptions::default());
        assert!(res.converged);
        let expected = two_bus_oracle(1.02, r, x, p / 100.0, q / 100.0).unwrap();
        assert!((res.vm_pu[1] - expected).abs() < 1e-8, "{} vs {expected}", res.vm_pu[1]);
    }

    #[test]
    fn load_beyond_loadability_does_not_converge() {
        let (r, x, p, q) = (0.02, 0.08, 15000.0, 6000.0);
        assert!(two_bus_oracle(1.02, r, x, p / 100.0, q / 100.0).is_none());
        let res = solve_power_flow(&two_bus(1.02, r, x, p, q), &PfOptions::default());
        assert!(!res.converged);
        assert_eq!(branch_loadings(&res, &two_bus(1.02, r, x, p, q)), Err(PfError::NotConverged));
    }

    #[test]
    fn zero_load_gives_zero_loading() {
        let mut state = two_bus(1.0, 0.02, 0.08, 0.0, 0.0);
        state.injections[1].q_mvar = Some(0.0);
        let res = solve_power_flow(&state, &PfOptions::default());
        assert!(res.converged);
        assert!(res.branch_loading_percent.iter().all(|&l| l.abs() < 1e-9));
    }

    #[test]
    fn rated_current_reads_one_hundred_percent() {
        let mut state = two_bus(1.0, 0.02, 0.08, 50.0, 0.0);
        let res = solve_power_flow(&state, &PfOptions::default());
        let fl = branch_flows(&res, &state).unwrap()[0];
        state.branches[0].max_i_ka = fl.i_from_ka.max(fl.i_to_ka);
        let again = solve_power_flow(&state, &PfOptions::default());
        assert!((again.branch_loading_percent[0] - 100.0).abs() < 1e-9);
    }

    #[test]
    fn pv_bus_holds_setpoint() {
        let g = three_bus();
        let (base, buses, branches, switches, mut inj) = g.into_parts();
        inj.push(Injection {
            id: InjectionId(9),
            bus: BusId(2),
            kind: InjectionKind::Generator,
            p_mw: Some(15.0),
            q_mvar: None,
            vm_pu: Some(1.01),
            va_degree: None,
        });
        let g = Grid::new(base, buses, branches, switches, inj);
        let res = solve_power_flow(&GridState::from_defaults(&g), &PfOptions::default());
        assert!(res.converged);
        assert_eq!(res.vm_pu[2], 1.01);
    }

    #[test]
    fn island_without_slack_and_load_is_ignored() {
        let (base, mut buses, branches, switches, inj) = three_bus().into_parts();
        buses.push(bus(3));
        buses.push(bus(4));
        let mut branches = branches;
        branches.push(line(3, 3, 4));
        let g = Grid::new(base, buses, branches, switches, inj);
        let res = solve_power_flow(&GridState::from_defaults(&g), &PfOptions::default());
        assert!(res.converged);
        assert_eq!(res.energized, vec![true, true, true, false, false]);
    }

    #[test]
    fn unsupplied_load_fails() {
        let (base, buses, branches, switches, inj) = three_bus().into_parts();
        let g = Grid::new(base, buses, branches, switches, inj);
        let mut s = GridState::from_defaults(&g);
        s.branches[0].in_service = false;
        s.branches[2].in_service = false;
        let res = solve_power_flow(&s, &PfOptions::default());
        assert!(!res.converged);
    }

    #[test]
    fn warm_start_reaches_same_solution() {
        let s = GridState::from_defaults(&three_bus());
        let flat = solve_power_flow(&s, &PfOptions::default());
        let warm = solve_power_flow(
            &s,
            &PfOptions {
                init: PfInit::Previous {
                    vm_pu: flat.vm_pu.clone(),
                    va_degree: flat.va_degree.clone(),
                },
                ..Default::default()
            },
        );
        assert!(warm.converged);
        assert!(warm.iterations <= 1);
        for (a, b) in flat.vm_pu.iter().zip(&warm.vm_pu) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn options_are_validated() {
        assert!(PfOptions::default().validate().is_ok());
        let bad = PfOptions {
            tol_mva: Some(0.0),
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = PfOptions {
            max_iter: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
