//! Network data model and load-case overlays.
//!
//! A [`Grid`] is immutable once constructed. Everything that changes per
//! evaluation (switch states, outages, injection values, applied measures)
//! lives in a [`GridState`] snapshot derived from it.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

macro_rules! id_type {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(
            Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

id_type!(
    /// Key of a bus.
    BusId
);
id_type!(
    /// Key of a line or transformer.
    BranchId
);
id_type!(
    /// Key of a switch.
    SwitchId
);
id_type!(
    /// Key of a load, generator or slack injection.
    InjectionId
);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub id: BusId,
    #[serde(default)]
    pub name: String,
    pub vn_kv: f64,
    pub min_vm_pu: f64,
    pub max_vm_pu: f64,
    /// Planar coordinates in km.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geo: Option<(f64, f64)>,
    #[serde(default = "default_true")]
    pub in_service: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchKind {
    Line,
    Transformer,
}

/// A line or two-winding transformer modelled as a pi-section.
///
/// Impedances are totals in ohm (shunt susceptance in µS) referred to the
/// from-bus voltage. They describe a single circuit; `parallel` multiplies
/// the admittance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Branch {
    pub id: BranchId,
    pub kind: BranchKind,
    pub from_bus: BusId,
    pub to_bus: BusId,
    pub r_ohm: f64,
    pub x_ohm: f64,
    #[serde(default)]
    pub b_total_us: f64,
    #[serde(default)]
    pub length_km: f64,
    pub max_i_ka: f64,
    #[serde(default = "default_loading_limit")]
    pub max_loading_percent: f64,
    #[serde(default = "default_parallel")]
    pub parallel: u32,
    #[serde(default = "default_true")]
    pub in_service: bool,
    #[serde(default)]
    pub replaceable: bool,
    #[serde(default)]
    pub repl_cost_per_km: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchKind {
    BusBus,
    BusLine,
}

/// A bus-bus switch couples `bus` with the bus `other`; a bus-line switch
/// gates the branch `other` at its terminal on `bus`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Switch {
    pub id: SwitchId,
    pub kind: SwitchKind,
    pub bus: BusId,
    pub other: u32,
    #[serde(default = "default_true")]
    pub closed_default: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjectionKind {
    Load,
    Generator,
    Slack,
}

/// Bus injection. Loads carry `p_mw`/`q_mvar` (consumption), generators
/// carry `p_mw` and either `vm_pu` (voltage controlled) or `q_mvar`, slacks
/// carry `vm_pu` and `va_degree`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Injection {
    pub id: InjectionId,
    pub bus: BusId,
    pub kind: InjectionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_mw: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_mvar: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vm_pu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub va_degree: Option<f64>,
}

impl Injection {
    /// Voltage-controlled generator or slack.
    pub fn controls_voltage(&self) -> bool {
        match self.kind {
            InjectionKind::Slack => true,
            InjectionKind::Generator => self.vm_pu.is_some(),
            InjectionKind::Load => false,
        }
    }
}

/// Per-injection override of a load case. Absent fields keep the default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InjectionOverride {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_mw: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_mvar: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vm_pu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub va_degree: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadCase {
    pub name: String,
    #[serde(default)]
    pub switch_states: BTreeMap<SwitchId, bool>,
    #[serde(default)]
    pub outages: BTreeSet<BranchId>,
    #[serde(default)]
    pub injection_overrides: BTreeMap<InjectionId, InjectionOverride>,
}

impl LoadCase {
    pub fn named(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..Self::default()
        }
    }
}

fn default_true() -> bool {
    true
}

fn default_parallel() -> u32 {
    1
}

fn default_loading_limit() -> f64 {
    100.0
}

/// One broken invariant found by [`validate_grid`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub element: String,
    pub reason: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.element, self.reason)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GridError {
    #[error("load case '{case}' references unknown {element}")]
    Unresolved { case: String, element: String },
}

/// Immutable network description.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    base_mva: f64,
    buses: Vec<Bus>,
    branches: Vec<Branch>,
    switches: Vec<Switch>,
    injections: Vec<Injection>,
    bus_index: HashMap<BusId, usize>,
    branch_index: HashMap<BranchId, usize>,
    switch_index: HashMap<SwitchId, usize>,
    injection_index: HashMap<InjectionId, usize>,
}

fn index_of<K: std::hash::Hash + Eq + Copy, T>(
    items: &[T],
    key: impl Fn(&T) -> K,
) -> HashMap<K, usize> {
    let mut map = HashMap::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        // first occurrence wins; duplicates are reported by validate_grid
        map.entry(key(item)).or_insert(i);
    }
    map
}

impl Grid {
    /// Builds a grid without validating it; see [`validate_grid`].
    pub fn new(
        base_mva: f64,
        buses: Vec<Bus>,
        branches: Vec<Branch>,
        switches: Vec<Switch>,
        injections: Vec<Injection>,
    ) -> Self {
        Self {
            bus_index: index_of(&buses, |b| b.id),
            branch_index: index_of(&branches, |b| b.id),
            switch_index: index_of(&switches, |s| s.id),
            injection_index: index_of(&injections, |i| i.id),
            base_mva,
            buses,
            branches,
            switches,
            injections,
        }
    }

    pub fn base_mva(&self) -> f64 {
        self.base_mva
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn switches(&self) -> &[Switch] {
        &self.switches
    }

    pub fn injections(&self) -> &[Injection] {
        &self.injections
    }

    pub fn bus_pos(&self, id: BusId) -> Option<usize> {
        self.bus_index.get(&id).copied()
    }

    pub fn branch_pos(&self, id: BranchId) -> Option<usize> {
        self.branch_index.get(&id).copied()
    }

    pub fn switch_pos(&self, id: SwitchId) -> Option<usize> {
        self.switch_index.get(&id).copied()
    }

    pub fn injection_pos(&self, id: InjectionId) -> Option<usize> {
        self.injection_index.get(&id).copied()
    }

    pub fn bus(&self, id: BusId) -> Option<&Bus> {
        self.bus_pos(id).map(|i| &self.buses[i])
    }

    pub fn branch(&self, id: BranchId) -> Option<&Branch> {
        self.branch_pos(id).map(|i| &self.branches[i])
    }

    /// Buses hosting a slack injection, in bus order.
    pub fn slack_buses(&self) -> BTreeSet<BusId> {
        self.injections
            .iter()
            .filter(|i| i.kind == InjectionKind::Slack)
            .map(|i| i.bus)
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.buses.is_empty()
    }

    /// Consumes the grid, returning its element lists.
    pub fn into_parts(self) -> (f64, Vec<Bus>, Vec<Branch>, Vec<Switch>, Vec<Injection>) {
        (
            self.base_mva,
            self.buses,
            self.branches,
            self.switches,
            self.injections,
        )
    }
}

/// Checks every structural invariant of the data model. An empty report
/// means the grid is valid.
pub fn validate_grid(grid: &Grid) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |element: String, reason: String| out.push(Violation { element, reason });

    if !(grid.base_mva > 0.0) {
        push("grid".into(), format!("base_mva must be positive, got {}", grid.base_mva));
    }

    let mut seen = BTreeSet::new();
    for bus in &grid.buses {
        let el = format!("bus {}", bus.id);
        if !seen.insert(bus.id) {
            push(el.clone(), "duplicate id".into());
        }
        if !(bus.vn_kv > 0.0) {
            push(el.clone(), format!("vn_kv must be positive, got {}", bus.vn_kv));
        }
        if !(bus.min_vm_pu < bus.max_vm_pu) {
            push(
                el.clone(),
                format!(
                    "min_vm_pu {} must be below max_vm_pu {}",
                    bus.min_vm_pu, bus.max_vm_pu
                ),
            );
        }
        if let Some((x, y)) = bus.geo {
            if !x.is_finite() || !y.is_finite() {
                push(el, "coordinates must be finite".into());
            }
        }
    }

    let mut seen = BTreeSet::new();
    for br in &grid.branches {
        let el = format!("branch {}", br.id);
        if !seen.insert(br.id) {
            push(el.clone(), "duplicate id".into());
        }
        for (side, bus) in [("from_bus", br.from_bus), ("to_bus", br.to_bus)] {
            if grid.bus_pos(bus).is_none() {
                push(el.clone(), format!("{side} {bus} does not exist"));
            }
        }
        if br.from_bus == br.to_bus {
            push(el.clone(), format!("from_bus and to_bus are both {}", br.from_bus));
        }
        if br.r_ohm == 0.0 && br.x_ohm == 0.0 {
            push(el.clone(), "zero series impedance".into());
        }
        if br.r_ohm < 0.0 {
            push(el.clone(), format!("negative r_ohm {}", br.r_ohm));
        }
        if br.parallel < 1 {
            push(el.clone(), "parallel must be at least 1".into());
        }
        if !(br.max_loading_percent > 0.0 && br.max_loading_percent <= 200.0) {
            push(
                el.clone(),
                format!(
                    "max_loading_percent {} outside (0, 200]",
                    br.max_loading_percent
                ),
            );
        }
        if !(br.max_i_ka > 0.0) {
            push(el.clone(), format!("max_i_ka must be positive, got {}", br.max_i_ka));
        }
        if br.length_km < 0.0 || br.repl_cost_per_km < 0.0 {
            push(el, "length_km and repl_cost_per_km must be non-negative".into());
        }
    }

    let mut seen = BTreeSet::new();
    for sw in &grid.switches {
        let el = format!("switch {}", sw.id);
        if !seen.insert(sw.id) {
            push(el.clone(), "duplicate id".into());
        }
        if grid.bus_pos(sw.bus).is_none() {
            push(el.clone(), format!("bus {} does not exist", sw.bus));
        }
        match sw.kind {
            SwitchKind::BusBus => {
                if grid.bus_pos(BusId(sw.other)).is_none() {
                    push(el, format!("dangling reference to bus {}", sw.other));
                } else if sw.other == sw.bus.0 {
                    push(el, "bus-bus switch connects a bus to itself".into());
                }
            }
            SwitchKind::BusLine => match grid.branch(BranchId(sw.other)) {
                None => push(el, format!("dangling reference to branch {}", sw.other)),
                Some(br) if br.from_bus != sw.bus && br.to_bus != sw.bus => push(
                    el,
                    format!("branch {} is not incident to bus {}", sw.other, sw.bus),
                ),
                Some(_) => {}
            },
        }
    }

    let mut seen = BTreeSet::new();
    for inj in &grid.injections {
        let el = format!("injection {}", inj.id);
        if !seen.insert(inj.id) {
            push(el.clone(), "duplicate id".into());
        }
        if grid.bus_pos(inj.bus).is_none() {
            push(el.clone(), format!("bus {} does not exist", inj.bus));
        }
        let has = |f: Option<f64>| f.is_some();
        let fields_ok = match inj.kind {
            InjectionKind::Load => {
                has(inj.p_mw) && has(inj.q_mvar) && !has(inj.vm_pu) && !has(inj.va_degree)
            }
            InjectionKind::Generator => {
                has(inj.p_mw) && (has(inj.vm_pu) != has(inj.q_mvar)) && !has(inj.va_degree)
            }
            InjectionKind::Slack => {
                has(inj.vm_pu) && has(inj.va_degree) && !has(inj.p_mw) && !has(inj.q_mvar)
            }
        };
        if !fields_ok {
            let need = match inj.kind {
                InjectionKind::Load => "p_mw and q_mvar",
                InjectionKind::Generator => "p_mw and exactly one of vm_pu or q_mvar",
                InjectionKind::Slack => "vm_pu and va_degree",
            };
            push(el.clone(), format!("{:?} requires exactly {need}", inj.kind));
        }
        if let Some(vm) = inj.vm_pu {
            if !(vm > 0.0) {
                push(el, format!("vm_pu setpoint must be positive, got {vm}"));
            }
        }
    }

    out
}

/// Effective state of a grid under one load case plus applied measures.
///
/// `branches` holds the base branches (same order as the grid) followed by
/// any branches added through measures. `switch_closed` is indexed like
/// `grid.switches()`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridState {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub switches: Vec<Switch>,
    pub switch_closed: Vec<bool>,
    pub injections: Vec<Injection>,
}

impl GridState {
    /// State with every default in place.
    pub fn from_defaults(grid: &Grid) -> Self {
        Self {
            base_mva: grid.base_mva,
            buses: grid.buses.clone(),
            branches: grid.branches.clone(),
            switches: grid.switches.clone(),
            switch_closed: grid.switches.iter().map(|s| s.closed_default).collect(),
            injections: grid.injections.clone(),
        }
    }

    /// Positions of branches that are in service and whose bus-line switches
    /// are all closed.
    pub fn branch_active(&self) -> Vec<bool> {
        let live: BTreeSet<BusId> = self
            .buses
            .iter()
            .filter(|b| b.in_service)
            .map(|b| b.id)
            .collect();
        let mut active: Vec<bool> = self
            .branches
            .iter()
            .map(|b| b.in_service && live.contains(&b.from_bus) && live.contains(&b.to_bus))
            .collect();
        let pos: HashMap<BranchId, usize> = self
            .branches
            .iter()
            .enumerate()
            .map(|(i, b)| (b.id, i))
            .collect();
        for (sw, &closed) in self.switches.iter().zip(&self.switch_closed) {
            if sw.kind == SwitchKind::BusLine && !closed {
                if let Some(&i) = pos.get(&BranchId(sw.other)) {
                    active[i] = false;
                }
            }
        }
        active
    }

    pub fn bus_in_service(&self, id: BusId) -> bool {
        self.buses.iter().any(|b| b.id == id && b.in_service)
    }

    pub fn in_service_branches(&self) -> BTreeSet<BranchId> {
        self.branches
            .iter()
            .filter(|b| b.in_service)
            .map(|b| b.id)
            .collect()
    }
}

/// Overlays a load case on the grid defaults. The grid is not modified.
pub fn apply_load_case(grid: &Grid, lc: &LoadCase) -> Result<GridState, GridError> {
    let unresolved = |element: String| GridError::Unresolved {
        case: lc.name.clone(),
        element,
    };
    let mut state = GridState::from_defaults(grid);
    for (&id, &closed) in &lc.switch_states {
        let i = grid
            .switch_pos(id)
            .ok_or_else(|| unresolved(format!("switch {id}")))?;
        state.switch_closed[i] = closed;
    }
    for &id in &lc.outages {
        let i = grid
            .branch_pos(id)
            .ok_or_else(|| unresolved(format!("branch {id}")))?;
        state.branches[i].in_service = false;
    }
    for (&id, ov) in &lc.injection_overrides {
        let i = grid
            .injection_pos(id)
            .ok_or_else(|| unresolved(format!("injection {id}")))?;
        let inj = &mut state.injections[i];
        if ov.p_mw.is_some() {
            inj.p_mw = ov.p_mw;
        }
        if ov.q_mvar.is_some() {
            inj.q_mvar = ov.q_mvar;
        }
        if ov.vm_pu.is_some() {
            inj.vm_pu = ov.vm_pu;
        }
        if ov.va_degree.is_some() {
            inj.va_degree = ov.va_degree;
        }
    }
    Ok(state)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub fn line(id: u32, from: u32, to: u32) -> Branch {
        Branch {
            id: BranchId(id),
            kind: BranchKind::Line,
            from_bus: BusId(from),
            to_bus: BusId(to),
            r_ohm: 1.2,
            x_ohm: 4.0,
            b_total_us: 28.0,
            length_km: 10.0,
            max_i_ka: 0.6,
            max_loading_percent: 100.0,
            parallel: 1,
            in_service: true,
            replaceable: true,
            repl_cost_per_km: 100_000.0,
        }
    }

    pub fn bus(id: u32) -> Bus {
        Bus {
            id: BusId(id),
            name: format!("b{id}"),
            vn_kv: 110.0,
            min_vm_pu: 0.9,
            max_vm_pu: 1.1,
            geo: None,
            in_service: true,
        }
    }

    pub fn load(id: u32, bus: u32, p: f64, q: f64) -> Injection {
        Injection {
            id: InjectionId(id),
            bus: BusId(bus),
            kind: InjectionKind::Load,
            p_mw: Some(p),
            q_mvar: Some(q),
            vm_pu: None,
            va_degree: None,
        }
    }

    pub fn slack(id: u32, bus: u32, vm: f64) -> Injection {
        Injection {
            id: InjectionId(id),
            bus: BusId(bus),
            kind: InjectionKind::Slack,
            p_mw: None,
            q_mvar: None,
            vm_pu: Some(vm),
            va_degree: Some(0.0),
        }
    }

    pub fn three_bus() -> Grid {
        Grid::new(
            100.0,
            vec![bus(0), bus(1), bus(2)],
            vec![line(0, 0, 1), line(1, 1, 2), line(2, 0, 2)],
            vec![Switch {
                id: SwitchId(0),
                kind: SwitchKind::BusLine,
                bus: BusId(1),
                other: 1,
                closed_default: true,
            }],
            vec![slack(0, 0, 1.0), load(1, 1, 20.0, 5.0), load(2, 2, 10.0, 2.0)],
        )
    }

    fn rebuild(grid: Grid, f: impl FnOnce(&mut Vec<Bus>, &mut Vec<Branch>, &mut Vec<Switch>)) -> Grid {
        let (base, mut buses, mut branches, mut switches, inj) = grid.into_parts();
        f(&mut buses, &mut branches, &mut switches);
        Grid::new(base, buses, branches, switches, inj)
    }

    #[test]
    fn valid_grid_has_empty_report() {
        assert!(validate_grid(&three_bus()).is_empty());
    }

    #[test]
    fn self_loop_branch_is_reported() {
        let g = rebuild(three_bus(), |_, br, _| br[1].to_bus = BusId(1));
        let report = validate_grid(&g);
        assert_eq!(report.len(), 1, "{report:?}");
        assert_eq!(report[0].element, "branch 1");
    }

    #[test]
    fn dangling_switch_is_reported() {
        let g = rebuild(three_bus(), |_, _, sw| sw[0].other = 99);
        let report = validate_grid(&g);
        assert_eq!(report.len(), 1, "{report:?}");
        assert!(report[0].reason.contains("dangling reference to branch 99"));
    }

    #[test]
    fn inverted_voltage_band_is_reported() {
        let g = rebuild(three_bus(), |b, _, _| b[2].min_vm_pu = 1.2);
        let report = validate_grid(&g);
        assert_eq!(report.len(), 1);
        assert_eq!(report[0].element, "bus 2");
    }

    #[test]
    fn bus_line_switch_must_touch_its_bus() {
        let g = rebuild(three_bus(), |_, _, sw| sw[0].other = 2);
        let report = validate_grid(&g);
        assert_eq!(report.len(), 1);
        assert!(report[0].reason.contains("not incident"));
    }

    #[test]
    fn injection_fields_must_match_kind() {
        let (base, buses, branches, switches, mut inj) = three_bus().into_parts();
        inj[1].vm_pu = Some(1.0);
        let g = Grid::new(base, buses, branches, switches, inj);
        let report = validate_grid(&g);
        assert_eq!(report.len(), 1);
        assert_eq!(report[0].element, "injection 1");
    }

    #[test]
    fn empty_load_case_is_identity() {
        let g = three_bus();
        let s = apply_load_case(&g, &LoadCase::named("base")).unwrap();
        assert_eq!(s, GridState::from_defaults(&g));
    }

    #[test]
    fn outage_removes_only_that_branch() {
        let g = three_bus();
        let mut lc = LoadCase::named("n-1");
        lc.outages.insert(BranchId(2));
        let s = apply_load_case(&g, &lc).unwrap();
        let expected: BTreeSet<_> = [BranchId(0), BranchId(1)].into();
        assert_eq!(s.in_service_branches(), expected);
        assert_eq!(s.injections, g.injections());
        assert_eq!(s.switch_closed, vec![true]);
    }

    #[test]
    fn injection_override_only_touches_given_fields() {
        let g = three_bus();
        let mut lc = LoadCase::named("peak");
        lc.injection_overrides.insert(
            InjectionId(2),
            InjectionOverride {
                p_mw: Some(30.0),
                ..Default::default()
            },
        );
        let s = apply_load_case(&g, &lc).unwrap();
        assert_eq!(s.injections[2].p_mw, Some(30.0));
        assert_eq!(s.injections[2].q_mvar, Some(2.0));
        assert_eq!(s.injections[1], g.injections()[1]);
    }

    #[test]
    fn unresolved_key_names_the_element() {
        let g = three_bus();
        let mut lc = LoadCase::named("bad");
        lc.outages.insert(BranchId(42));
        let err = apply_load_case(&g, &lc).unwrap_err();
        assert_eq!(
            err,
            GridError::Unresolved {
                case: "bad".into(),
                element: "branch 42".into()
            }
        );
    }

    #[test]
    fn open_bus_line_switch_deactivates_branch() {
        let g = three_bus();
        let mut lc = LoadCase::named("open");
        lc.switch_states.insert(SwitchId(0), false);
        let s = apply_load_case(&g, &lc).unwrap();
        assert_eq!(s.branch_active(), vec![true, false, true]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn override_precedence(
                sw in proptest::option::of(any::<bool>()),
                out in proptest::collection::btree_set(0u32..3, 0..3),
                p in proptest::option::of(0.0f64..100.0),
                q in proptest::option::of(-20.0f64..20.0),
                target in 1u32..3,
            ) {
                let g = three_bus();
                let mut lc = LoadCase::named("rand");
                if let Some(c) = sw { lc.switch_states.insert(SwitchId(0), c); }
                lc.outages = out.iter().map(|&b| BranchId(b)).collect();
                lc.injection_overrides.insert(InjectionId(target), InjectionOverride { p_mw: p, q_mvar: q, ..Default::default() });
                let s1 = apply_load_case(&g, &lc).unwrap();
                let s2 = apply_load_case(&g, &lc).unwrap();
                prop_assert_eq!(&s1, &s2);
                prop_assert_eq!(s1.switch_closed[0], sw.unwrap_or(true));
                for (i, b) in s1.branches.iter().enumerate() {
                    prop_assert_eq!(b.in_service, !out.contains(&(i as u32)));
                }
                for (i, inj) in s1.injections.iter().enumerate() {
                    let base = &g.injections()[i];
                    if i as u32 == target {
                        prop_assert_eq!(inj.p_mw, p.or(base.p_mw));
                        prop_assert_eq!(inj.q_mvar, q.or(base.q_mvar));
                    } else {
                        prop_assert_eq!(inj, base);
                    }
                }
            }
        }
    }
}
