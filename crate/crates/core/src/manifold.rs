//! The outside set O and its boundary surface, kept 2-manifold while cells are
//! added (growing) or removed (shrinking).

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashMap, HashSet};

use crate::delaunay::{CellId, Insertion, Label, Triangulation, VertexId};
use crate::mesh::TriangleMesh;
use crate::visibility::{is_free, WeightConfig};

/// Set of cells labeled outside. Labels are mirrored in the cells themselves.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ManifoldState {
    outside: BTreeSet<CellId>,
}

/// An oriented boundary facet: cell `cell` of O and its face `face`.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Facet {
    pub cell: CellId,
    pub face: usize,
}

/// Candidate ordering for growing: heavier first, then older cells.
#[derive(Copy, Clone, Debug)]
struct Candidate {
    weight: f64,
    cell: CellId,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.weight
            .total_cmp(&other.weight)
            .then_with(|| other.cell.cmp(&self.cell))
    }
}

impl ManifoldState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn outside(&self) -> &BTreeSet<CellId> {
        &self.outside
    }

    pub fn contains(&self, c: CellId) -> bool {
        self.outside.contains(&c)
    }

    pub fn is_empty(&self) -> bool {
        self.outside.is_empty()
    }

    pub fn len(&self) -> usize {
        self.outside.len()
    }

    fn set(&mut self, tri: &mut Triangulation, c: CellId, outside: bool) {
        if outside {
            self.outside.insert(c);
            tri.cell_mut(c).label = Label::Outside;
        } else {
            self.outside.remove(&c);
            tri.cell_mut(c).label = Label::Inside;
        }
    }

    /// Link of `v` in the boundary surface: for every boundary facet through
    /// `v`, the edge opposite to it.
    pub fn link(&self, tri: &Triangulation, v: VertexId) -> Vec<(VertexId, VertexId)> {
        let mut edges = Vec::new();
        let outside = |c: CellId| tri.cell(c).label == Label::Outside;
        for &c in tri.incident_cells(v) {
            if !outside(c) {
                continue;
            }
            let cell = tri.cell(c);
            let iv = cell.index_of(v).expect("incident cell contains v");
            for i in (0..4).filter(|&i| i != iv) {
                if outside(cell.neighbors[i]) {
                    continue;
                }
                let f = cell.facet(i);
                let k = f.iter().position(|&w| w == v).unwrap();
                edges.push((f[(k + 1) % 3], f[(k + 2) % 3]));
            }
        }
        edges
    }

    /// Whether `v` is regular: its link is a single closed cycle, or empty when
    /// `v` is not on the surface.
    pub fn vertex_regular(&self, tri: &Triangulation, v: VertexId) -> bool {
        let edges = self.link(tri, v);
        single_cycle(&edges)
    }

    fn cell_vertices_regular(&self, tri: &Triangulation, c: CellId) -> bool {
        tri.cell(c)
            .vertices
            .iter()
            .all(|&v| self.vertex_regular(tri, v))
    }

    /// Adds `c` to O if the surface stays manifold.
    pub fn try_add(&mut self, tri: &mut Triangulation, c: CellId) -> bool {
        debug_assert!(!self.outside.contains(&c));
        self.set(tri, c, true);
        if self.cell_vertices_regular(tri, c) {
            true
        } else {
            self.set(tri, c, false);
            false
        }
    }

    /// Adds all of `cells` to O at once if the surface stays manifold.
    pub fn try_add_group(&mut self, tri: &mut Triangulation, cells: &[CellId]) -> bool {
        for &c in cells {
            self.set(tri, c, true);
        }
        let mut vertices: Vec<VertexId> =
            cells.iter().flat_map(|&c| tri.cell(c).vertices).collect();
        vertices.sort();
        vertices.dedup();
        if vertices.iter().all(|&v| self.vertex_regular(tri, v)) {
            true
        } else {
            for &c in cells {
                self.set(tri, c, false);
            }
            false
        }
    }

    /// Free non-O cells around finite vertex `v` reachable from `c` through
    /// facets containing `v`.
    fn free_star_component(
        &self,
        tri: &Triangulation,
        cfg: &WeightConfig,
        v: VertexId,
        c: CellId,
    ) -> Vec<CellId> {
        let mut seen = vec![c];
        let mut stack = vec![c];
        while let Some(x) = stack.pop() {
            let cell = tri.cell(x);
            let iv = cell.index_of(v).expect("star cell contains v");
            for i in (0..4).filter(|&i| i != iv) {
                let n = cell.neighbors[i];
                if !self.contains(n) && !seen.contains(&n) && is_free(tri.cell(n), cfg) {
                    seen.push(n);
                    stack.push(n);
                }
            }
        }
        seen.sort();
        seen
    }

    /// One multi-cell move for a stalled grow: the first free cell touching O
    /// through a facet, heaviest first, whose free star component around one
    /// of its vertices can join O as a whole. Returns the added cells.
    fn add_star_component(
        &mut self,
        tri: &mut Triangulation,
        cfg: &WeightConfig,
    ) -> Option<Vec<CellId>> {
        let mut stuck: Vec<CellId> = self
            .boundary(tri)
            .iter()
            .map(|f| tri.cell(f.cell).neighbors[f.face])
            .filter(|&n| is_free(tri.cell(n), cfg))
            .collect();
        stuck.sort();
        stuck.dedup();
        stuck.sort_by(|a, b| {
            tri.cell(*b)
                .weight
                .total_cmp(&tri.cell(*a).weight)
                .then(a.cmp(b))
        });
        for c in stuck {
            for v in tri.cell(c).vertices {
                if v.is_infinite() {
                    continue;
                }
                let group = self.free_star_component(tri, cfg, v, c);
                if group.len() > 1 && self.try_add_group(tri, &group) {
                    return Some(group);
                }
            }
        }
        None
    }

    /// Removes `c` from O if the surface stays manifold.
    pub fn try_remove(&mut self, tri: &mut Triangulation, c: CellId) -> bool {
        debug_assert!(self.outside.contains(&c));
        self.set(tri, c, false);
        if self.cell_vertices_regular(tri, c) {
            true
        } else {
            self.set(tri, c, true);
            false
        }
    }

    /// Greedy growing from `seeds`: the heaviest free candidate is added when
    /// that keeps the surface manifold, and its neighbors become candidates.
    pub fn grow(&mut self, tri: &mut Triangulation, cfg: &WeightConfig, seeds: &[CellId]) {
        let mut heap = BinaryHeap::new();
        let mut queued: HashSet<CellId> = HashSet::new();
        for &c in seeds {
            let cell = tri.cell(c);
            if cell.is_alive() && !self.contains(c) && is_free(cell, cfg) && queued.insert(c) {
                heap.push(Candidate {
                    weight: cell.weight,
                    cell: c,
                });
            }
        }
        while let Some(Candidate { cell: c, .. }) = heap.pop() {
            queued.remove(&c);
            if self.contains(c) || !self.try_add(tri, c) {
                continue;
            }
            for n in tri.cell(c).neighbors {
                let cell = tri.cell(n);
                if !self.contains(n) && is_free(cell, cfg) && queued.insert(n) {
                    heap.push(Candidate {
                        weight: cell.weight,
                        cell: n,
                    });
                }
            }
        }
    }

    /// Grows from the single heaviest cell of the triangulation.
    pub fn grow_from_scratch(&mut self, tri: &mut Triangulation, cfg: &WeightConfig) {
        let best = tri
            .cell_ids()
            .filter(|&c| !self.contains(c))
            .map(|c| Candidate {
                weight: tri.cell(c).weight,
                cell: c,
            })
            .max();
        if let Some(best) = best {
            self.grow(tri, cfg, &[best.cell]);
        }
    }

    /// Cells outside O that touch the boundary surface.
    pub fn boundary_adjacent(&self, tri: &Triangulation) -> Vec<CellId> {
        let mut vertices: BTreeSet<VertexId> = BTreeSet::new();
        for f in self.boundary(tri) {
            vertices.extend(tri.cell(f.cell).facet(f.face));
        }
        let mut out: Vec<CellId> = vertices
            .iter()
            .flat_map(|&v| tri.incident_cells(v).iter().copied())
            .filter(|c| !self.contains(*c))
            .collect();
        out.sort();
        out.dedup();
        out
    }

    /// Re-grows after insertions: seeded from the boundary neighborhood, or
    /// from the heaviest cell when O is empty. When single-cell growing
    /// stalls, free star components are added as a whole and growing resumes.
    pub fn regrow(&mut self, tri: &mut Triangulation, cfg: &WeightConfig) {
        if self.outside.is_empty() {
            self.grow_from_scratch(tri, cfg);
        } else {
            let seeds = self.boundary_adjacent(tri);
            self.grow(tri, cfg, &seeds);
        }
        while let Some(group) = self.add_star_component(tri, cfg) {
            let mut seeds: Vec<CellId> =
                group.iter().flat_map(|&c| tri.cell(c).neighbors).collect();
            seeds.sort();
            seeds.dedup();
            self.grow(tri, cfg, &seeds);
        }
    }

    /// Removes cells of `region` from O, lightest first, in repeated passes
    /// until no removal keeps the surface manifold.
    pub fn shrink(&mut self, tri: &mut Triangulation, region: &[CellId]) {
        loop {
            let mut candidates: Vec<CellId> = region
                .iter()
                .copied()
                .filter(|c| self.contains(*c))
                .collect();
            candidates.sort_by(|a, b| {
                tri.cell(*a)
                    .weight
                    .total_cmp(&tri.cell(*b).weight)
                    .then(a.cmp(b))
            });
            candidates.dedup();
            let mut removed = false;
            for c in candidates {
                if self.try_remove(tri, c) {
                    removed = true;
                }
            }
            if !removed {
                break;
            }
        }
    }

    /// Drops destroyed cells from O (they are expected to be absent already).
    pub fn forget(&mut self, insertion: &Insertion) {
        for c in &insertion.destroyed {
            self.outside.remove(c);
        }
    }

    /// Oriented boundary facets, sorted.
    pub fn boundary(&self, tri: &Triangulation) -> Vec<Facet> {
        let mut out = Vec::new();
        for &c in &self.outside {
            for (face, n) in tri.cell(c).neighbors.iter().enumerate() {
                if !self.outside.contains(n) {
                    out.push(Facet { cell: c, face });
                }
            }
        }
        out
    }

    /// Finite boundary facets as an indexed mesh oriented away from O.
    /// Facets through the infinite vertex are omitted.
    pub fn extract_surface(&self, tri: &Triangulation) -> TriangleMesh {
        let mut index: HashMap<VertexId, u32> = HashMap::new();
        let mut mesh = TriangleMesh::default();
        for f in self.boundary(tri) {
            let verts = tri.cell(f.cell).facet(f.face);
            if verts.iter().any(|v| v.is_infinite()) {
                continue;
            }
            let tri_idx = verts.map(|v| {
                *index.entry(v).or_insert_with(|| {
                    mesh.vertices.push(tri.point(v));
                    (mesh.vertices.len() - 1) as u32
                })
            });
            mesh.triangles.push(tri_idx);
        }
        mesh
    }

    /// Full consistency scan: labels match O, no dead cells in O, every
    /// surface vertex regular.
    pub fn audit(&self, tri: &Triangulation) -> Result<(), String> {
        for &c in &self.outside {
            if !tri.cell(c).is_alive() {
                return Err(format!("dead cell {c:?} in O"));
            }
        }
        for c in tri.cell_ids() {
            let labeled = tri.cell(c).label == Label::Outside;
            if labeled != self.contains(c) {
                return Err(format!("label of cell {c:?} disagrees with O"));
            }
        }
        let mut vertices: BTreeSet<VertexId> = BTreeSet::new();
        for f in self.boundary(tri) {
            vertices.extend(tri.cell(f.cell).facet(f.face));
        }
        for v in vertices {
            if !self.vertex_regular(tri, v) {
                return Err(format!("surface vertex {v:?} is not regular"));
            }
        }
        Ok(())
    }
}

/// `E`: the cells of `region` plus every cell sharing a vertex with them.
pub fn one_ring(tri: &Triangulation, region: &[CellId]) -> Vec<CellId> {
    let mut out: Vec<CellId> = region.to_vec();
    for &c in region {
        for &v in &tri.cell(c).vertices {
            out.extend(tri.incident_cells(v).iter().copied());
        }
    }
    out.sort();
    out.dedup();
    out.retain(|&c| tri.cell(c).is_alive());
    out
}

/// Link edges form exactly one closed cycle (or there are none).
fn single_cycle(edges: &[(VertexId, VertexId)]) -> bool {
    if edges.is_empty() {
        return true;
    }
    let mut degree: HashMap<VertexId, u32> = HashMap::with_capacity(edges.len());
    for &(a, b) in edges {
        *degree.entry(a).or_default() += 1;
        *degree.entry(b).or_default() += 1;
    }
    if degree.values().any(|&d| d != 2) {
        return false;
    }
    // All degrees are two, so the edges split into disjoint cycles; walk one.
    let mut next: HashMap<VertexId, [VertexId; 2]> = HashMap::with_capacity(edges.len());
    for &(a, b) in edges {
        for (x, y) in [(a, b), (b, a)] {
            let e = next.entry(x).or_insert([y, y]);
            e[1] = y;
        }
    }
    let start = edges[0].0;
    let mut prev = start;
    let mut cur = edges[0].1;
    let mut len = 1;
    while cur != start {
        let [p, q] = next[&cur];
        let step = if p != prev { p } else { q };
        prev = cur;
        cur = step;
        len += 1;
        if len > edges.len() {
            return false;
        }
    }
    len == edges.len()
}
