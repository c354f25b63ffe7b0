use std::collections::{BTreeMap, BTreeSet};

use spade::{DelaunayTriangulation, HasPosition, Point2, Triangulation};

use super::MeasureError;
use crate::grid::Grid;

struct Site {
    x: f64,
    y: f64,
    group: usize,
}

impl HasPosition for Site {
    type Scalar = f64;

    fn position(&self) -> Point2<f64> {
        Point2::new(self.x, self.y)
    }
}

/// A Delaunay edge between two buses with its straight-line distance in km.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiteEdge {
    pub from: usize,
    pub to: usize,
    pub distance_km: f64,
}

/// Delaunay edges between coordinate sites of in-service buses, excluding
/// site pairs already joined by an in-service branch.
///
/// Buses sharing identical coordinates form one site, represented by its
/// lowest bus position. Edges are returned as bus positions with
/// `from < to`, sorted.
pub fn delaunay_edges(grid: &Grid) -> Result<Vec<SiteEdge>, MeasureError> {
    let mut sites: Vec<(f64, f64)> = Vec::new();
    let mut site_of: BTreeMap<(u64, u64), usize> = BTreeMap::new();
    let mut bus_site = vec![usize::MAX; grid.buses().len()];
    let mut site_rep: Vec<usize> = Vec::new();
    for (i, bus) in grid.buses().iter().enumerate() {
        if !bus.in_service {
            continue;
        }
        let (x, y) = bus.geo.ok_or_else(|| MeasureError::MissingCoordinates(bus.id))?;
        // +0.0 folds -0.0 into the same site
        let key = ((x + 0.0).to_bits(), (y + 0.0).to_bits());
        let s = *site_of.entry(key).or_insert_with(|| {
            sites.push((x, y));
            site_rep.push(i);
            sites.len() - 1
        });
        bus_site[i] = s;
    }
    if sites.len() < 3 {
        return Err(MeasureError::Geometry(format!(
            "need at least 3 distinct bus locations, got {}",
            sites.len()
        )));
    }

    let mut tri: DelaunayTriangulation<Site> = DelaunayTriangulation::new();
    for (group, &(x, y)) in sites.iter().enumerate() {
        tri.insert(Site { x, y, group })
            .map_err(|e| MeasureError::Geometry(format!("cannot triangulate: {e:?}")))?;
    }
    if tri.num_inner_faces() == 0 {
        return Err(MeasureError::Geometry("all bus locations are collinear".into()));
    }

    let mut connected = BTreeSet::new();
    for br in grid.branches().iter().filter(|b| b.in_service) {
        if let (Some(f), Some(t)) = (grid.bus_pos(br.from_bus), grid.bus_pos(br.to_bus)) {
            let (a, b) = (bus_site[f], bus_site[t]);
            if a != usize::MAX && b != usize::MAX {
                connected.insert((a.min(b), a.max(b)));
            }
        }
    }

    let mut edges: Vec<SiteEdge> = tri
        .undirected_edges()
        .filter_map(|e| {
            let [a, b] = e.vertices().map(|v| v.data().group);
            let key = (a.min(b), a.max(b));
            if connected.contains(&key) {
                return None;
            }
            let (p, q) = (sites[a], sites[b]);
            let (from, to) = (site_rep[a].min(site_rep[b]), site_rep[a].max(site_rep[b]));
            Some(SiteEdge {
                from,
                to,
                distance_km: ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt(),
            })
        })
        .collect();
    edges.sort_by_key(|e| (e.from, e.to));
    Ok(edges)
}
