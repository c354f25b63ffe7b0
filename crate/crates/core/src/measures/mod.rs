//! Measure catalog, binary candidates and their application to a grid.
//!
//! A catalog lists every available measure in a fixed order: line
//! replacements first, then switch toggles, then additional lines. A
//! [`Candidate`] selects a subset of it.

mod delaunay;

pub use delaunay::{delaunay_edges, SiteEdge};

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::grid::{Branch, BranchId, BranchKind, BusId, Grid, GridState, SwitchId};

#[derive(Debug, Error, PartialEq)]
pub enum MeasureError {
    #[error("additional lines need coordinates, bus {0} has none")]
    MissingCoordinates(BusId),
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("candidate has {got} bits but the catalog has {expected} measures")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid catalog configuration: {0}")]
    Config(String),
}

/// Electrical and cost parameters per km for additional lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineTemplate {
    pub name: String,
    pub r_ohm_per_km: f64,
    pub x_ohm_per_km: f64,
    pub b_us_per_km: f64,
    pub max_i_ka: f64,
    pub max_loading_percent: f64,
    pub cost_per_km: f64,
}

impl Default for LineTemplate {
    /// A 110 kV overhead line, 243-AL1/39-ST1A.
    fn default() -> Self {
        Self {
            name: "243-AL1/39-ST1A 110.0".into(),
            r_ohm_per_km: 0.1188,
            x_ohm_per_km: 0.39,
            b_us_per_km: 2.89,
            max_i_ka: 0.645,
            max_loading_percent: 100.0,
            cost_per_km: 500_000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CatalogConfig {
    /// Offer new lines along Delaunay edges between bus locations.
    pub additional_lines: bool,
    /// Ratio of routed line length to straight-line distance.
    pub detour_factor: f64,
    pub switch_cost: f64,
    pub al_template: LineTemplate,
}

impl Default for CatalogConfig {
    fn default() -> Self {
        Self {
            additional_lines: false,
            detour_factor: 1.3,
            switch_cost: 0.0,
            al_template: LineTemplate::default(),
        }
    }
}

impl CatalogConfig {
    pub fn validate(&self) -> Result<(), MeasureError> {
        if !(self.detour_factor >= 1.0) {
            return Err(MeasureError::Config(format!(
                "detour_factor must be at least 1, got {}",
                self.detour_factor
            )));
        }
        if self.switch_cost < 0.0 || self.al_template.cost_per_km < 0.0 {
            return Err(MeasureError::Config("costs must be non-negative".into()));
        }
        let t = &self.al_template;
        if t.r_ohm_per_km == 0.0 && t.x_ohm_per_km == 0.0 {
            return Err(MeasureError::Config("template has zero impedance".into()));
        }
        if !(t.max_i_ka > 0.0) || !(t.max_loading_percent > 0.0 && t.max_loading_percent <= 200.0) {
            return Err(MeasureError::Config("template limits out of range".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MeasureKind {
    /// Doubles the admittance of an existing line.
    Repl { branch: BranchId },
    /// Toggles a switch relative to its load-case state.
    Switch { switch: SwitchId },
    /// Builds a new line from the catalog template.
    AdditionalLine {
        from_bus: BusId,
        to_bus: BusId,
        length_km: f64,
    },
}

impl MeasureKind {
    pub fn label(&self) -> &'static str {
        match self {
            MeasureKind::Repl { .. } => "REPL",
            MeasureKind::Switch { .. } => "SWITCH",
            MeasureKind::AdditionalLine { .. } => "AL",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measure {
    pub index: usize,
    #[serde(flatten)]
    pub kind: MeasureKind,
    pub invest_cost: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindCounts {
    pub repl: usize,
    pub switch: usize,
    pub al: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasureCatalog {
    measures: Vec<Measure>,
    template: LineTemplate,
    /// Catalog bit per grid switch position.
    switch_bits: Vec<Option<usize>>,
    first_new_branch_id: u32,
}

impl MeasureCatalog {
    pub fn measures(&self) -> &[Measure] {
        &self.measures
    }

    pub fn len(&self) -> usize {
        self.measures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measures.is_empty()
    }

    pub fn template(&self) -> &LineTemplate {
        &self.template
    }

    pub fn counts(&self) -> KindCounts {
        let mut c = KindCounts::default();
        for m in &self.measures {
            match m.kind {
                MeasureKind::Repl { .. } => c.repl += 1,
                MeasureKind::Switch { .. } => c.switch += 1,
                MeasureKind::AdditionalLine { .. } => c.al += 1,
            }
        }
        c
    }

    /// Catalog bit toggling the switch at grid position `switch_pos`.
    pub fn switch_bit(&self, switch_pos: usize) -> Option<usize> {
        self.switch_bits.get(switch_pos).copied().flatten()
    }

    /// Hex digest over the ordered catalog contents.
    pub fn fingerprint(&self) -> String {
        let text = serde_json::to_string(&self.measures).expect("measures serialize");
        hex_digest(text.as_bytes())
    }

    fn check(&self, candidate: &Candidate) -> Result<(), MeasureError> {
        if candidate.len() != self.len() {
            return Err(MeasureError::LengthMismatch {
                expected: self.len(),
                got: candidate.len(),
            });
        }
        Ok(())
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .take(8)
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Binary decision vector over a catalog; bit i set means measure i applied.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Candidate {
    bits: Vec<bool>,
}

impl Candidate {
    pub fn zeros(len: usize) -> Self {
        Self {
            bits: vec![false; len],
        }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    /// Candidate whose bit i is bit i of `value`.
    pub fn from_index(value: u64, len: usize) -> Self {
        Self {
            bits: (0..len).map(|i| i < 64 && (value >> i) & 1 == 1).collect(),
        }
    }

    /// Inverse of [`Candidate::from_index`] for candidates of at most 64 bits.
    pub fn to_index(&self) -> Option<u64> {
        (self.len() <= 64).then(|| {
            self.bits
                .iter()
                .enumerate()
                .filter(|(_, &b)| b)
                .map(|(i, _)| 1u64 << i)
                .sum()
        })
    }

    pub fn from_indices(indices: &[usize], len: usize) -> Self {
        let mut c = Self::zeros(len);
        for &i in indices {
            c.bits[i] = true;
        }
        c
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn set(&mut self, i: usize, value: bool) {
        self.bits[i] = value;
    }

    pub fn flip(&mut self, i: usize) {
        self.bits[i] = !self.bits[i];
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| i)
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn hamming(&self, other: &Candidate) -> usize {
        self.bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| a != b)
            .count()
    }

    /// Short stable digest, used to identify candidates in run records.
    pub fn digest(&self) -> String {
        let mut packed = vec![0u8; self.len().div_ceil(8)];
        for i in self.ones() {
            packed[i / 8] |= 1 << (i % 8);
        }
        packed.extend_from_slice(&(self.len() as u64).to_le_bytes());
        hex_digest(&packed)
    }
}

impl fmt::Display for Candidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Builds the ordered measure catalog of a grid.
pub fn build_catalog(grid: &Grid, cfg: &CatalogConfig) -> Result<MeasureCatalog, MeasureError> {
    cfg.validate()?;
    let mut measures = Vec::new();
    for br in grid.branches() {
        if br.kind == BranchKind::Line && br.replaceable && br.in_service {
            measures.push(Measure {
                index: measures.len(),
                kind: MeasureKind::Repl { branch: br.id },
                invest_cost: br.length_km * br.repl_cost_per_km,
            });
        }
    }
    let mut switch_bits = vec![None; grid.switches().len()];
    for (pos, sw) in grid.switches().iter().enumerate() {
        switch_bits[pos] = Some(measures.len());
        measures.push(Measure {
            index: measures.len(),
            kind: MeasureKind::Switch { switch: sw.id },
            invest_cost: cfg.switch_cost,
        });
    }
    if cfg.additional_lines && !grid.is_empty() {
        let base = measures.len();
        for mut m in delaunay_al_candidates(grid, cfg)? {
            m.index += base;
            measures.push(m);
        }
    }
    let first_new_branch_id = grid.branches().iter().map(|b| b.id.0 + 1).max().unwrap_or(0);
    Ok(MeasureCatalog {
        measures,
        template: cfg.al_template.clone(),
        switch_bits,
        first_new_branch_id,
    })
}

/// Additional-line measures along Delaunay edges of the bus locations that
/// are not yet connected. Indices start at 0.
pub fn delaunay_al_candidates(
    grid: &Grid,
    cfg: &CatalogConfig,
) -> Result<Vec<Measure>, MeasureError> {
    let edges = delaunay_edges(grid)?;
    Ok(edges
        .into_iter()
        .enumerate()
        .map(|(k, e)| {
            let length_km = e.distance_km * cfg.detour_factor;
            Measure {
                index: k,
                kind: MeasureKind::AdditionalLine {
                    from_bus: grid.buses()[e.from].id,
                    to_bus: grid.buses()[e.to].id,
                    length_km,
                },
                invest_cost: length_km * cfg.al_template.cost_per_km,
            }
        })
        .collect())
}

/// Changes a candidate makes to any load-case state of the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureOverlay {
    /// Per base branch: replaced (parallel count doubled).
    pub replaced: Vec<bool>,
    /// Per grid switch: toggled relative to the load-case state.
    pub toggled: Vec<bool>,
    pub added: Vec<Branch>,
}

impl MeasureOverlay {
    /// Applies the overlay to a state derived from the same grid.
    pub fn apply_to(&self, state: &mut GridState) {
        for (br, &r) in state.branches.iter_mut().zip(&self.replaced) {
            if r {
                br.parallel *= 2;
            }
        }
        for (closed, &t) in state.switch_closed.iter_mut().zip(&self.toggled) {
            if t {
                *closed = !*closed;
            }
        }
        state.branches.extend(self.added.iter().cloned());
    }

    pub fn is_identity(&self) -> bool {
        !self.replaced.iter().any(|&r| r) && !self.toggled.iter().any(|&t| t) && self.added.is_empty()
    }
}

/// Translates a candidate into the grid changes it stands for. The result
/// depends only on the set of applied measures.
pub fn apply_measures(
    grid: &Grid,
    catalog: &MeasureCatalog,
    candidate: &Candidate,
) -> Result<MeasureOverlay, MeasureError> {
    catalog.check(candidate)?;
    let mut overlay = MeasureOverlay {
        replaced: vec![false; grid.branches().len()],
        toggled: vec![false; grid.switches().len()],
        added: Vec::new(),
    };
    let t = &catalog.template;
    let mut al_seen = 0u32;
    for m in &catalog.measures {
        let is_al = matches!(m.kind, MeasureKind::AdditionalLine { .. });
        let applied = candidate.get(m.index);
        match &m.kind {
            MeasureKind::Repl { branch } if applied => {
                if let Some(i) = grid.branch_pos(*branch) {
                    overlay.replaced[i] = true;
                }
            }
            MeasureKind::Switch { switch } if applied => {
                if let Some(i) = grid.switch_pos(*switch) {
                    overlay.toggled[i] = true;
                }
            }
            MeasureKind::AdditionalLine {
                from_bus,
                to_bus,
                length_km,
            } if applied => overlay.added.push(Branch {
                id: BranchId(catalog.first_new_branch_id + al_seen),
                kind: BranchKind::Line,
                from_bus: *from_bus,
                to_bus: *to_bus,
                r_ohm: t.r_ohm_per_km * length_km,
                x_ohm: t.x_ohm_per_km * length_km,
                b_total_us: t.b_us_per_km * length_km,
                length_km: *length_km,
                max_i_ka: t.max_i_ka,
                max_loading_percent: t.max_loading_percent,
                parallel: 1,
                in_service: true,
                replaceable: false,
                repl_cost_per_km: 0.0,
            }),
            _ => {}
        }
        if is_al {
            al_seen += 1;
        }
    }
    Ok(overlay)
}

/// Investment of a candidate: the sum of the costs of its applied measures.
pub fn candidate_cost(catalog: &MeasureCatalog, candidate: &Candidate) -> Result<f64, MeasureError> {
    catalog.check(candidate)?;
    Ok(candidate
        .ones()
        .map(|i| catalog.measures[i].invest_cost)
        .sum())
}
