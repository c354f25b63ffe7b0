//! Switch-aware connectivity and random spanning-tree switching states.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use thiserror::Error;

use crate::grid::{BranchId, BusId, Grid, GridState, LoadCase, SwitchKind};
use crate::measures::{apply_measures, Candidate, MeasureCatalog, MeasureError};
use crate::power_flow::{solve_power_flow, PfOptions};
use crate::unionfind::UnionFind;

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("no reference bus given")]
    NoReference,
    #[error("grid is not connected even with every switch closed")]
    Disconnected,
    #[error("the grid with every switch closed fails load case '{0}'")]
    BaseInfeasible(String),
    #[error(transparent)]
    Grid(#[from] crate::grid::GridError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// What an edge of the topology graph stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeSource {
    Branch(BranchId),
    BusBusSwitch(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopoEdge {
    /// Bus positions.
    pub a: usize,
    pub b: usize,
    /// Switch positions that must all be closed for the edge to conduct.
    pub gates: Vec<usize>,
    pub closed: bool,
    pub source: EdgeSource,
}

impl TopoEdge {
    pub fn switchable(&self) -> bool {
        !self.gates.is_empty()
    }
}

/// Undirected multigraph over in-service buses. Every in-service branch and
/// every bus-bus switch between in-service buses is an edge; `closed` marks
/// the edges that conduct in the state the graph was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct TopologyGraph {
    /// Bus positions of in-service buses.
    pub nodes: Vec<usize>,
    pub edges: Vec<TopoEdge>,
    n_buses: usize,
    n_switches: usize,
}

impl TopologyGraph {
    pub fn from_state(state: &GridState) -> Self {
        let pos = crate::power_flow::bus_positions(state);
        let live: Vec<bool> = state.buses.iter().map(|b| b.in_service).collect();
        let mut edges = Vec::new();
        let mut gates_of: std::collections::HashMap<BranchId, Vec<usize>> = Default::default();
        for (k, sw) in state.switches.iter().enumerate() {
            if sw.kind == SwitchKind::BusLine {
                gates_of.entry(BranchId(sw.other)).or_default().push(k);
            }
        }
        for br in &state.branches {
            let (Some(&a), Some(&b)) = (pos.get(&br.from_bus), pos.get(&br.to_bus)) else {
                continue;
            };
            if !br.in_service || !live[a] || !live[b] {
                continue;
            }
            let gates = gates_of.get(&br.id).cloned().unwrap_or_default();
            let closed = gates.iter().all(|&g| state.switch_closed[g]);
            edges.push(TopoEdge {
                a,
                b,
                gates,
                closed,
                source: EdgeSource::Branch(br.id),
            });
        }
        for (k, sw) in state.switches.iter().enumerate() {
            if sw.kind != SwitchKind::BusBus {
                continue;
            }
            let (Some(&a), Some(&b)) = (pos.get(&sw.bus), pos.get(&BusId(sw.other))) else {
                continue;
            };
            if live[a] && live[b] {
                edges.push(TopoEdge {
                    a,
                    b,
                    gates: vec![k],
                    closed: state.switch_closed[k],
                    source: EdgeSource::BusBusSwitch(k),
                });
            }
        }
        Self {
            nodes: (0..state.buses.len()).filter(|&i| live[i]).collect(),
            edges,
            n_buses: state.buses.len(),
            n_switches: state.switches.len(),
        }
    }

    fn components(&self, only_closed: bool) -> UnionFind {
        let mut uf = UnionFind::new(self.n_buses);
        for e in &self.edges {
            if e.closed || !only_closed {
                uf.union(e.a, e.b);
            }
        }
        uf
    }

    /// Number of in-service buses not connected to any reference bus
    /// position through closed edges.
    pub fn unreached(&self, reference: &[usize]) -> usize {
        let mut uf = self.components(true);
        let roots: BTreeSet<usize> = reference
            .iter()
            .filter(|&&r| self.nodes.binary_search(&r).is_ok())
            .map(|&r| uf.find(r))
            .collect();
        self.nodes
            .iter()
            .filter(|&&n| !roots.contains(&uf.find(n)))
            .count()
    }

    /// True when all nodes are joined with every edge closed.
    pub fn connected_when_closed(&self) -> bool {
        let mut uf = self.components(false);
        match self.nodes.first() {
            None => true,
            Some(&first) => self.nodes.iter().all(|&n| uf.same(first, n)),
        }
    }
}

/// Counts in-service buses that cannot be reached from any reference bus.
pub fn disconnected_count(
    state: &GridState,
    reference_buses: &BTreeSet<BusId>,
) -> Result<usize, TopologyError> {
    if reference_buses.is_empty() {
        return Err(TopologyError::NoReference);
    }
    let pos = crate::power_flow::bus_positions(state);
    let refs: Vec<usize> = reference_buses.iter().filter_map(|b| pos.get(b).copied()).collect();
    Ok(TopologyGraph::from_state(state).unreached(&refs))
}

/// A switching state whose conducting edges form a spanning tree.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanningTree {
    /// Closed flag per switch position.
    pub switch_closed: Vec<bool>,
    /// Indices into the graph's edges that conduct.
    pub tree_edges: Vec<usize>,
    /// Edges without switches that close a cycle. They cannot be opened and
    /// are kept, so the closed set is a tree only when this is zero.
    pub forced_cycle_edges: usize,
}

/// Draws a spanning tree by Kruskal's algorithm over uniformly random
/// weights. Edges without switches are always kept. Every switchable edge
/// outside the tree gets exactly one of its switches opened.
pub fn random_spanning_tree<R: Rng + ?Sized>(
    graph: &TopologyGraph,
    current_closed: &[bool],
    rng: &mut R,
) -> Result<SpanningTree, TopologyError> {
    if !graph.connected_when_closed() {
        return Err(TopologyError::Disconnected);
    }
    let mut uf = UnionFind::new(graph.n_buses);
    let mut tree_edges = Vec::new();
    let mut forced = 0;
    for (k, e) in graph.edges.iter().enumerate() {
        if !e.switchable() {
            if !uf.union(e.a, e.b) {
                forced += 1;
            }
            tree_edges.push(k);
        }
    }
    let mut weighted: Vec<(f64, usize)> = graph
        .edges
        .iter()
        .enumerate()
        .filter(|(_, e)| e.switchable())
        .map(|(k, _)| (rng.random::<f64>(), k))
        .collect();
    weighted.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));

    let mut switch_closed = current_closed.to_vec();
    debug_assert_eq!(switch_closed.len(), graph.n_switches);
    for (_, k) in weighted {
        let e = &graph.edges[k];
        if uf.union(e.a, e.b) {
            tree_edges.push(k);
            for &g in &e.gates {
                switch_closed[g] = true;
            }
        } else {
            let open = *e.gates.choose(rng).expect("switchable edge has a gate");
            for &g in &e.gates {
                switch_closed[g] = g != open;
            }
        }
    }
    tree_edges.sort_unstable();
    Ok(SpanningTree {
        switch_closed,
        tree_edges,
        forced_cycle_edges: forced,
    })
}

/// Whether a candidate is connected and convergent in every load case.
pub fn is_operable(
    grid: &Grid,
    load_cases: &[LoadCase],
    catalog: &MeasureCatalog,
    candidate: &Candidate,
    pf: &PfOptions,
) -> Result<Option<String>, TopologyError> {
    let overlay = apply_measures(grid, catalog, candidate)?;
    let refs = grid.slack_buses();
    for lc in crate::evaluation::effective_cases(load_cases).iter() {
        let mut state = crate::grid::apply_load_case(grid, lc)?;
        overlay.apply_to(&mut state);
        if disconnected_count(&state, &refs)? > 0 || !solve_power_flow(&state, pf).converged {
            return Ok(Some(lc.name.clone()));
        }
    }
    Ok(None)
}

/// Statistics of one call to [`generate_initial_candidates`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InitStats {
    pub trees: usize,
    pub closure_steps: usize,
}

/// Produces `n` connected, convergent switching states.
///
/// Each state starts as a random spanning tree of the default topology.
/// While it fails a load case, half of the still-open switches (rounded up)
/// are closed at random and the check repeats.
pub fn generate_initial_candidates<R: Rng + ?Sized>(
    grid: &Grid,
    load_cases: &[LoadCase],
    catalog: &MeasureCatalog,
    pf: &PfOptions,
    n: usize,
    rng: &mut R,
) -> Result<(Vec<Candidate>, InitStats), TopologyError> {
    let defaults = GridState::from_defaults(grid);
    if grid.slack_buses().is_empty() {
        return Err(TopologyError::NoReference);
    }
    let graph = TopologyGraph::from_state(&defaults);
    let to_candidate = |closed: &[bool]| {
        let mut c = Candidate::zeros(catalog.len());
        for (k, sw) in grid.switches().iter().enumerate() {
            if closed[k] != sw.closed_default {
                if let Some(bit) = catalog.switch_bit(k) {
                    c.set(bit, true);
                }
            }
        }
        c
    };
    let all_closed = vec![true; grid.switches().len()];
    if let Some(case) = is_operable(grid, load_cases, catalog, &to_candidate(&all_closed), pf)? {
        return Err(TopologyError::BaseInfeasible(case));
    }

    let mut stats = InitStats::default();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let tree = random_spanning_tree(&graph, &defaults.switch_closed, rng)?;
        stats.trees += 1;
        let mut closed = tree.switch_closed;
        loop {
            let candidate = to_candidate(&closed);
            if is_operable(grid, load_cases, catalog, &candidate, pf)?.is_none() {
                out.push(candidate);
                break;
            }
            let mut open: Vec<usize> = (0..closed.len()).filter(|&k| !closed[k]).collect();
            // the all-closed state passed above, so something is still open
            debug_assert!(!open.is_empty());
            open.shuffle(rng);
            let close = open.len().div_ceil(2);
            for &k in &open[..close] {
                closed[k] = true;
            }
            stats.closure_steps += 1;
        }
    }
    Ok((out, stats))
}
