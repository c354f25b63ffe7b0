use num_complex::Complex64;

use crate::grid::{Branch, GridState, SwitchKind};
use crate::unionfind::UnionFind;

/// Complex matrix in compressed sparse row form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<Complex64>,
}

impl SparseMatrix {
    /// Assembles from unsorted triplets; duplicates are summed.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, Complex64)>) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0; n + 1];
        let mut cols: Vec<usize> = Vec::with_capacity(triplets.len());
        let mut vals: Vec<Complex64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
                continue;
            }
            cols.push(c);
            vals.push(v);
            row_ptr[r + 1] += 1;
            last = Some((r, c));
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[span.clone()]
            .iter()
            .copied()
            .zip(self.vals[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.row(i)
            .find(|&(c, _)| c == j)
            .map(|(_, v)| v)
            .unwrap_or_default()
    }

    pub fn mul_vec(&self, x: &[Complex64]) -> Vec<Complex64> {
        (0..self.n)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }
}

/// Per-unit pi-model parameters of one branch, including its parallel count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchModel {
    pub series: Complex64,
    /// Half of the total shunt admittance, placed at each terminal.
    pub shunt_half: Complex64,
}

impl BranchModel {
    pub fn new(branch: &Branch, from_vn_kv: f64, base_mva: f64) -> Self {
        let z_base = from_vn_kv * from_vn_kv / base_mva;
        let k = branch.parallel as f64;
        let z = Complex64::new(branch.r_ohm, branch.x_ohm) / z_base;
        Self {
            series: k / z,
            shunt_half: Complex64::new(0.0, k * branch.b_total_us * 1e-6 * z_base / 2.0),
        }
    }

    /// Terminal currents (from, to) in per-unit for terminal voltages.
    pub fn currents(&self, v_from: Complex64, v_to: Complex64) -> (Complex64, Complex64) {
        let i_from = (self.series + self.shunt_half) * v_from - self.series * v_to;
        let i_to = (self.series + self.shunt_half) * v_to - self.series * v_from;
        (i_from, i_to)
    }
}

/// Bus admittance matrix over electrical nodes.
///
/// Buses coupled by closed bus-bus switches are fused into one node.
/// Out-of-service buses have no node.
#[derive(Debug, Clone)]
pub struct Admittance {
    pub ybus: SparseMatrix,
    /// Node index per bus position of the state, `None` when out of service.
    pub node_of_bus: Vec<Option<usize>>,
    /// Branches that carry current (in service with closed switches).
    pub active: Vec<bool>,
    pub models: Vec<Option<BranchModel>>,
}

impl Admittance {
    pub fn n_nodes(&self) -> usize {
        self.ybus.dim()
    }
}

pub(crate) fn fuse_buses(state: &GridState) -> (Vec<Option<usize>>, usize) {
    let n = state.buses.len();
    let pos = bus_positions(state);
    let mut uf = UnionFind::new(n);
    for (sw, &closed) in state.switches.iter().zip(&state.switch_closed) {
        if sw.kind != SwitchKind::BusBus || !closed {
            continue;
        }
        if let (Some(&a), Some(&b)) = (
            pos.get(&sw.bus),
            pos.get(&crate::grid::BusId(sw.other)),
        ) {
            if state.buses[a].in_service && state.buses[b].in_service {
                uf.union(a, b);
            }
        }
    }
    let mut root_node = vec![usize::MAX; n];
    let mut node_of_bus = vec![None; n];
    let mut count = 0;
    for i in 0..n {
        if !state.buses[i].in_service {
            continue;
        }
        let r = uf.find(i);
        if root_node[r] == usize::MAX {
            root_node[r] = count;
            count += 1;
        }
        node_of_bus[i] = Some(root_node[r]);
    }
    (node_of_bus, count)
}

pub(crate) fn bus_positions(
    state: &GridState,
) -> std::collections::HashMap<crate::grid::BusId, usize> {
    state
        .buses
        .iter()
        .enumerate()
        .map(|(i, b)| (b.id, i))
        .collect()
}

/// Assembles the per-unit bus admittance matrix of a state.
pub fn build_admittance(state: &GridState) -> Admittance {
    let (node_of_bus, n) = fuse_buses(state);
    let pos = bus_positions(state);
    let active = state.branch_active();
    let mut triplets = Vec::with_capacity(4 * state.branches.len());
    let mut models = Vec::with_capacity(state.branches.len());
    for (br, &on) in state.branches.iter().zip(&active) {
        let (Some(&fb), Some(&tb)) = (pos.get(&br.from_bus), pos.get(&br.to_bus)) else {
            models.push(None);
            continue;
        };
        let (Some(f), Some(t)) = (node_of_bus[fb], node_of_bus[tb]) else {
            models.push(None);
            continue;
        };
        let m = BranchModel::new(br, state.buses[fb].vn_kv, state.base_mva);
        models.push(Some(m));
        if !on {
            continue;
        }
        let diag = m.series + m.shunt_half;
        triplets.push((f, f, diag));
        triplets.push((t, t, diag));
        triplets.push((f, t, -m.series));
        triplets.push((t, f, -m.series));
    }
    Admittance {
        ybus: SparseMatrix::from_triplets(n, triplets),
        node_of_bus,
        active,
        models,
    }
}
