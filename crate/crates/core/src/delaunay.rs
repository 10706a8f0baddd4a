//! Incremental 3D Delaunay triangulation.
//!
//! Cells are tetrahedra over finite vertices plus one distinguished infinite
//! vertex. Every facet of the convex hull is capped by an infinite cell, so the
//! cell complex is closed: each facet is shared by exactly two cells.
//!
//! Finite cells are positively oriented (see [`crate::predicates`]). An
//! infinite cell is combinatorially oriented as if the infinite vertex were a
//! point beyond its hull facet.
//!
//! For geometric queries an infinite cell with hull facet `f` stands for the
//! region beyond `f` inside the cone from a fixed interior anchor point through
//! `f`. These regions are convex, tile the outside of the hull and meet along
//! the planes through the anchor and the hull edges, which matches the cell
//! adjacency. The anchor is fixed by the first simplex and stays interior
//! because the hull only grows.
//!
//! Insertion is Bowyer-Watson: the conflict region (cells whose circumsphere
//! strictly contains the new point, plus the infinite cells whose hull facet
//! it sees) is removed and the cavity is star-filled from the point.

use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicU32, Ordering};

use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::predicates::{in_sphere, orient3d, orient3d_approx, Sign};

/// Handle of a vertex; finite vertices index the point list.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VertexId(pub u32);

/// The infinite vertex.
pub const INFINITE: VertexId = VertexId(u32::MAX);

impl VertexId {
    #[inline]
    pub fn is_infinite(self) -> bool {
        self == INFINITE
    }

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Handle of a cell. Cells are never reused, so the id doubles as a creation
/// sequence number.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellId(pub u32);

impl CellId {
    const NONE: CellId = CellId(u32::MAX);

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Free-space classification carried by every cell.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum Label {
    Outside,
    Inside,
}

/// Points closer than this to an existing vertex are rejected as duplicates.
pub const DUPLICATE_TOLERANCE: f64 = 1e-9;

/// Vertex positions (indices into the cell's vertex array) of the facet
/// opposite each vertex, ordered counter-clockwise seen from outside the cell.
pub const FACETS: [[usize; 3]; 4] = [[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]];

#[derive(Clone, Debug)]
pub struct Cell {
    pub vertices: [VertexId; 4],
    /// `neighbors[i]` shares the facet opposite `vertices[i]`.
    pub neighbors: [CellId; 4],
    pub weight: f64,
    pub label: Label,
    alive: bool,
}

impl Cell {
    fn new(vertices: [VertexId; 4]) -> Self {
        Cell {
            vertices,
            neighbors: [CellId::NONE; 4],
            weight: 0.0,
            label: Label::Inside,
            alive: true,
        }
    }

    #[inline]
    pub fn is_alive(&self) -> bool {
        self.alive
    }

    /// Position of the infinite vertex, if any.
    #[inline]
    pub fn infinite_index(&self) -> Option<usize> {
        self.vertices.iter().position(|v| v.is_infinite())
    }

    #[inline]
    pub fn is_infinite(&self) -> bool {
        self.infinite_index().is_some()
    }

    #[inline]
    pub fn index_of(&self, v: VertexId) -> Option<usize> {
        self.vertices.iter().position(|&w| w == v)
    }

    /// Facet opposite `vertices[i]`, outward counter-clockwise.
    #[inline]
    pub fn facet(&self, i: usize) -> [VertexId; 3] {
        let f = FACETS[i];
        [
            self.vertices[f[0]],
            self.vertices[f[1]],
            self.vertices[f[2]],
        ]
    }
}

/// A point that could not be inserted because it coincides with a vertex.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct DuplicatePoint {
    pub existing: VertexId,
}

/// Result of a successful insertion.
#[derive(Clone, Debug)]
pub struct Insertion {
    pub vertex: VertexId,
    pub destroyed: Vec<CellId>,
    pub created: Vec<CellId>,
}

#[derive(Debug)]
pub struct Triangulation {
    points: Vec<Point3>,
    cells: Vec<Cell>,
    incident: Vec<Vec<CellId>>,
    infinite_incident: Vec<CellId>,
    alive: usize,
    anchor: Point3,
    hint: AtomicU32,
}

impl Clone for Triangulation {
    fn clone(&self) -> Self {
        Triangulation {
            points: self.points.clone(),
            cells: self.cells.clone(),
            incident: self.incident.clone(),
            infinite_incident: self.infinite_incident.clone(),
            alive: self.alive,
            anchor: self.anchor,
            hint: AtomicU32::new(self.hint.load(Ordering::Relaxed)),
        }
    }
}

fn collinear(a: Point3, b: Point3, c: Point3) -> bool {
    let xy = |p: Point3| robust::Coord { x: p.x, y: p.y };
    let yz = |p: Point3| robust::Coord { x: p.y, y: p.z };
    let zx = |p: Point3| robust::Coord { x: p.z, y: p.x };
    robust::orient2d(xy(a), xy(b), xy(c)) == 0.0
        && robust::orient2d(yz(a), yz(b), yz(c)) == 0.0
        && robust::orient2d(zx(a), zx(b), zx(c)) == 0.0
}

/// Indices of four affinely independent points, or `None` when the set is
/// coplanar (or smaller than four distinct points).
pub fn find_simplex(points: &[Point3]) -> Option<[usize; 4]> {
    let i0 = 0;
    let p0 = *points.first()?;
    let i1 = (1..points.len()).find(|&i| points[i].distance(p0) >= DUPLICATE_TOLERANCE)?;
    let p1 = points[i1];
    let i2 = (i1 + 1..points.len()).find(|&i| !collinear(p0, p1, points[i]))?;
    let p2 = points[i2];
    let i3 = (i2 + 1..points.len()).find(|&i| orient3d(p0, p1, p2, points[i]) != Sign::Zero)?;
    Some([i0, i1, i2, i3])
}

impl Triangulation {
    /// Delaunay triangulation of `points`. Duplicates (within
    /// [`DUPLICATE_TOLERANCE`]) are dropped.
    pub fn build(points: &[Point3]) -> Result<Self> {
        Self::build_with_ids(points).map(|(t, _)| t)
    }

    /// As [`build`](Self::build), also returning the vertex that represents
    /// each input point.
    pub fn build_with_ids(points: &[Point3]) -> Result<(Self, Vec<VertexId>)> {
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::DegenerateInput(format!("point {i} is not finite")));
        }
        if points.len() < 4 {
            return Err(Error::DegenerateInput(format!(
                "need at least 4 points, got {}",
                points.len()
            )));
        }
        let simplex = find_simplex(points).ok_or_else(|| {
            Error::DegenerateInput("points are coplanar, collinear or coincident".into())
        })?;
        let mut tri = Triangulation::from_simplex(simplex.map(|i| points[i]))?;
        let mut ids = vec![INFINITE; points.len()];
        let mut first = simplex.map(|i| i);
        // from_simplex may swap the first two to fix orientation.
        if tri.points[0] != points[simplex[0]] {
            first.swap(0, 1);
        }
        for (k, &i) in first.iter().enumerate() {
            ids[i] = VertexId(k as u32);
        }
        for (i, &p) in points.iter().enumerate() {
            if ids[i] != INFINITE {
                continue;
            }
            ids[i] = match tri.insert(p) {
                Ok(ins) => ins.vertex,
                Err(dup) => dup.existing,
            };
        }
        Ok((tri, ids))
    }

    /// One finite tetrahedron and its four infinite caps.
    fn from_simplex(mut p: [Point3; 4]) -> Result<Self> {
        match orient3d(p[0], p[1], p[2], p[3]) {
            Sign::Zero => {
                return Err(Error::DegenerateInput("initial simplex is flat".into()));
            }
            Sign::Negative => p.swap(0, 1),
            Sign::Positive => {}
        }
        let anchor = (p[0] + p[1] + p[2] + p[3]) / 4.0;
        for i in 0..4 {
            let mut q = p;
            q[i] = anchor;
            if orient3d(q[0], q[1], q[2], q[3]) != Sign::Positive {
                return Err(Error::DegenerateInput(
                    "initial simplex too flat to hold an interior anchor".into(),
                ));
            }
        }
        let mut tri = Triangulation {
            points: p.to_vec(),
            cells: Vec::new(),
            incident: vec![Vec::new(); 4],
            infinite_incident: Vec::new(),
            alive: 0,
            anchor,
            hint: AtomicU32::new(0),
        };
        let vs = [VertexId(0), VertexId(1), VertexId(2), VertexId(3)];
        let finite = tri.push_cell(vs);
        let mut caps = Vec::with_capacity(4);
        for i in 0..4 {
            let f = tri.cells[finite.index()].facet(i);
            let cap = tri.push_cell([INFINITE, f[0], f[2], f[1]]);
            tri.cells[cap.index()].neighbors[0] = finite;
            tri.cells[finite.index()].neighbors[i] = cap;
            caps.push(cap);
        }
        let mut open: HashMap<[VertexId; 3], (CellId, usize)> = HashMap::new();
        for &cap in &caps {
            for k in 1..4 {
                let mut key = tri.cells[cap.index()].facet(k);
                key.sort();
                if let Some((other, ok)) = open.remove(&key) {
                    tri.cells[cap.index()].neighbors[k] = other;
                    tri.cells[other.index()].neighbors[ok] = cap;
                } else {
                    open.insert(key, (cap, k));
                }
            }
        }
        debug_assert!(open.is_empty());
        Ok(tri)
    }

    fn push_cell(&mut self, vertices: [VertexId; 4]) -> CellId {
        let id = CellId(self.cells.len() as u32);
        for &v in &vertices {
            if v.is_infinite() {
                self.infinite_incident.push(id);
            } else {
                self.incident[v.index()].push(id);
            }
        }
        self.cells.push(Cell::new(vertices));
        self.alive += 1;
        id
    }

    fn kill_cell(&mut self, c: CellId) {
        let vertices = self.cells[c.index()].vertices;
        for v in vertices {
            let list = if v.is_infinite() {
                &mut self.infinite_incident
            } else {
                &mut self.incident[v.index()]
            };
            if let Some(pos) = list.iter().position(|&x| x == c) {
                list.swap_remove(pos);
            }
        }
        self.cells[c.index()].alive = false;
        self.alive -= 1;
    }

    // ---- accessors ------------------------------------------------------

    #[inline]
    pub fn point(&self, v: VertexId) -> Point3 {
        self.points[v.index()]
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn num_vertices(&self) -> usize {
        self.points.len()
    }

    #[inline]
    pub fn cell(&self, c: CellId) -> &Cell {
        &self.cells[c.index()]
    }

    #[inline]
    pub fn cell_mut(&mut self, c: CellId) -> &mut Cell {
        &mut self.cells[c.index()]
    }

    /// Size of the cell id space (alive and dead).
    pub fn cell_capacity(&self) -> usize {
        self.cells.len()
    }

    pub fn num_cells(&self) -> usize {
        self.alive
    }

    pub fn cell_ids(&self) -> impl Iterator<Item = CellId> + '_ {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, c)| c.alive)
            .map(|(i, _)| CellId(i as u32))
    }

    pub fn finite_cell_ids(&self) -> impl Iterator<Item = CellId> + '_ {
        self.cell_ids().filter(|&c| !self.cell(c).is_infinite())
    }

    /// Cells incident to `v` (unordered).
    pub fn incident_cells(&self, v: VertexId) -> &[CellId] {
        if v.is_infinite() {
            &self.infinite_incident
        } else {
            &self.incident[v.index()]
        }
    }

    /// Interior point that positions the infinite vertex for geometric queries.
    pub fn anchor(&self) -> Point3 {
        self.anchor
    }

    /// Index `j` such that `neighbors[j]` of `n` is `c`.
    #[inline]
    pub fn mirror_index(&self, c: CellId, i: usize) -> usize {
        let n = self.cells[c.index()].neighbors[i];
        self.cells[n.index()]
            .neighbors
            .iter()
            .position(|&x| x == c)
            .expect("neighbor relation must be symmetric")
    }

    /// Cell corner positions with the infinite vertex placed at the anchor.
    #[inline]
    pub fn geometric_corners(&self, c: CellId) -> [Point3; 4] {
        self.cells[c.index()].vertices.map(|v| {
            if v.is_infinite() {
                self.anchor
            } else {
                self.points[v.index()]
            }
        })
    }

    /// Side of `x` relative to the plane of facet `i` of `c`: positive means
    /// strictly on the cell's side.
    #[inline]
    pub fn facet_side(&self, c: CellId, i: usize, x: Point3) -> Sign {
        let mut q = self.geometric_corners(c);
        q[i] = x;
        let s = orient3d(q[0], q[1], q[2], q[3]);
        match self.cells[c.index()].infinite_index() {
            Some(j) if j != i => s.flip(),
            _ => s,
        }
    }

    /// Floating-point counterpart of [`facet_side`](Self::facet_side), scaled
    /// like six times a signed volume.
    #[inline]
    pub fn facet_side_value(&self, c: CellId, i: usize, x: Point3) -> f64 {
        let mut q = self.geometric_corners(c);
        q[i] = x;
        let s = orient3d_approx(q[0], q[1], q[2], q[3]);
        match self.cells[c.index()].infinite_index() {
            Some(j) if j != i => -s,
            _ => s,
        }
    }

    // ---- conflicts ------------------------------------------------------

    /// Whether `p` conflicts with cell `c`.
    pub fn in_conflict(&self, c: CellId, p: Point3) -> bool {
        let cell = &self.cells[c.index()];
        match cell.infinite_index() {
            None => {
                let [a, b, cc, d] = cell.vertices.map(|v| self.points[v.index()]);
                in_sphere(a, b, cc, d, p) == Sign::Positive
            }
            Some(j) => {
                let mut q = cell.vertices.map(|v| {
                    if v.is_infinite() {
                        p
                    } else {
                        self.points[v.index()]
                    }
                });
                q[j] = p;
                match orient3d(q[0], q[1], q[2], q[3]) {
                    Sign::Positive => true,
                    Sign::Negative => false,
                    Sign::Zero => {
                        let n = cell.neighbors[j];
                        let [a, b, cc, d] = self.cells[n.index()]
                            .vertices
                            .map(|v| self.points[v.index()]);
                        in_sphere(a, b, cc, d, p) == Sign::Positive
                    }
                }
            }
        }
    }

    fn start_cell(&self) -> CellId {
        let h = CellId(self.hint.load(Ordering::Relaxed));
        if h.index() < self.cells.len()
            && self.cells[h.index()].alive
            && !self.cells[h.index()].is_infinite()
        {
            return h;
        }
        self.finite_cell_ids()
            .next()
            .expect("triangulation has a finite cell")
    }

    /// Cell containing `p` (a finite cell) or an infinite cell whose hull facet
    /// `p` strictly sees. Remembering stochastic walk.
    pub fn locate(&self, p: Point3) -> CellId {
        let mut c = self.start_cell();
        let mut prev = CellId::NONE;
        let limit = 4 * self.cells.len() + 16;
        for step in 0..limit {
            if self.cells[c.index()].is_infinite() {
                return c;
            }
            let start = (c.0 as usize).wrapping_mul(2654435761).wrapping_add(step) >> 3;
            let mut next = None;
            for k in 0..4 {
                let i = (start + k) % 4;
                let n = self.cells[c.index()].neighbors[i];
                if n == prev {
                    continue;
                }
                if self.facet_side(c, i, p) == Sign::Negative {
                    next = Some(n);
                    break;
                }
            }
            match next {
                Some(n) => {
                    prev = c;
                    c = n;
                }
                None => return c,
            }
        }
        // Not expected for Delaunay triangulations; fall back to a scan.
        self.cell_ids()
            .find(|&c| self.in_conflict(c, p))
            .unwrap_or(c)
    }

    /// The conflict region of `p`, sorted by cell id.
    pub fn conflict_region(&self, p: Point3) -> std::result::Result<Vec<CellId>, DuplicatePoint> {
        let start = self.locate(p);
        if let Some(v) = self.nearby_vertex(&[start], p) {
            return Err(DuplicatePoint { existing: v });
        }
        let start = if self.in_conflict(start, p) {
            start
        } else {
            match self.cell_ids().find(|&c| self.in_conflict(c, p)) {
                Some(c) => c,
                None => {
                    return Err(DuplicatePoint {
                        existing: self.nearest_vertex(p),
                    })
                }
            }
        };
        let mut seen: HashSet<CellId> = HashSet::new();
        seen.insert(start);
        let mut stack = vec![start];
        let mut region = Vec::new();
        while let Some(c) = stack.pop() {
            region.push(c);
            for &n in &self.cells[c.index()].neighbors {
                if seen.insert(n) && self.in_conflict(n, p) {
                    stack.push(n);
                }
            }
        }
        region.sort();
        if let Some(v) = self.nearby_vertex(&region, p) {
            return Err(DuplicatePoint { existing: v });
        }
        Ok(region)
    }

    fn nearby_vertex(&self, cells: &[CellId], p: Point3) -> Option<VertexId> {
        cells
            .iter()
            .flat_map(|&c| self.cells[c.index()].vertices)
            .filter(|v| !v.is_infinite())
            .find(|&v| self.points[v.index()].distance(p) < DUPLICATE_TOLERANCE)
    }

    /// Nearest finite vertex by exhaustive search.
    pub fn nearest_vertex(&self, p: Point3) -> VertexId {
        let (i, _) = self
            .points
            .iter()
            .enumerate()
            .map(|(i, q)| (i, q.distance(p)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty triangulation");
        VertexId(i as u32)
    }

    // ---- insertion ------------------------------------------------------

    /// Inserts `p`, returning the destroyed conflict region and the cells that
    /// replace it. Duplicates leave the triangulation untouched.
    pub fn insert(&mut self, p: Point3) -> std::result::Result<Insertion, DuplicatePoint> {
        let region = self.conflict_region(p)?;
        Ok(self.insert_with_region(p, region))
    }

    /// Star-fills a conflict region previously returned by
    /// [`conflict_region`](Self::conflict_region) for the same `p`.
    pub fn insert_with_region(&mut self, p: Point3, region: Vec<CellId>) -> Insertion {
        let in_region: HashSet<CellId> = region.iter().copied().collect();
        let v = VertexId(self.points.len() as u32);
        self.points.push(p);
        self.incident.push(Vec::new());

        let mut created = Vec::new();
        for &c in &region {
            for i in 0..4 {
                let n = self.cells[c.index()].neighbors[i];
                if in_region.contains(&n) {
                    continue;
                }
                let mut verts = self.cells[c.index()].vertices;
                verts[i] = v;
                let j = self.mirror_index(c, i);
                let nc = self.push_cell(verts);
                self.cells[nc.index()].neighbors[i] = n;
                self.cells[n.index()].neighbors[j] = nc;
                created.push(nc);
            }
        }

        // Facets through v pair up along cavity-boundary edges.
        let mut open: HashMap<(VertexId, VertexId), (CellId, usize)> = HashMap::new();
        for &nc in &created {
            let verts = self.cells[nc.index()].vertices;
            let vi = verts.iter().position(|&x| x == v).unwrap();
            for k in 0..4 {
                if k == vi {
                    continue;
                }
                let mut others = [VertexId(0); 2];
                let mut m = 0;
                for (idx, &w) in verts.iter().enumerate() {
                    if idx != k && idx != vi {
                        others[m] = w;
                        m += 1;
                    }
                }
                let key = (others[0].min(others[1]), others[0].max(others[1]));
                if let Some((other, ok)) = open.remove(&key) {
                    self.cells[nc.index()].neighbors[k] = other;
                    self.cells[other.index()].neighbors[ok] = nc;
                } else {
                    open.insert(key, (nc, k));
                }
            }
        }
        debug_assert!(open.is_empty(), "cavity boundary must be closed");

        for &c in &region {
            self.kill_cell(c);
        }
        if let Some(&h) = created
            .iter()
            .find(|&&c| !self.cells[c.index()].is_infinite())
        {
            self.hint.store(h.0, Ordering::Relaxed);
        }
        debug_assert!(created.iter().all(|&c| {
            let cell = &self.cells[c.index()];
            cell.is_infinite() || {
                let [a, b, cc, d] = cell.vertices.map(|v| self.points[v.index()]);
                orient3d(a, b, cc, d) == Sign::Positive
            }
        }));
        Insertion {
            vertex: v,
            destroyed: region,
            created,
        }
    }

    // ---- validation -----------------------------------------------------

    /// Checks combinatorial and orientation invariants (not the Delaunay
    /// property). Returns a description of the first violation.
    pub fn check_structure(&self) -> std::result::Result<(), String> {
        let mut incident: Vec<Vec<CellId>> = vec![Vec::new(); self.points.len()];
        let mut inf_incident = Vec::new();
        for c in self.cell_ids() {
            let cell = self.cell(c);
            let infinite = cell.vertices.iter().filter(|v| v.is_infinite()).count();
            if infinite > 1 {
                return Err(format!("cell {c:?} has {infinite} infinite vertices"));
            }
            for (i, &n) in cell.neighbors.iter().enumerate() {
                if n == CellId::NONE || !self.cell(n).alive {
                    return Err(format!("cell {c:?} has a dead neighbor at {i}"));
                }
                let back = self.cell(n).neighbors.iter().filter(|&&x| x == c).count();
                if back != 1 {
                    return Err(format!("neighbor {n:?} of {c:?} is not mirrored"));
                }
                let mut mine = cell.facet(i);
                let j = self.mirror_index(c, i);
                let mut theirs = self.cell(n).facet(j);
                mine.sort();
                theirs.sort();
                if mine != theirs {
                    return Err(format!("cells {c:?} and {n:?} disagree on a shared facet"));
                }
            }
            let q = self.geometric_corners(c);
            let o = orient3d(q[0], q[1], q[2], q[3]);
            let expected = if cell.is_infinite() {
                Sign::Negative
            } else {
                Sign::Positive
            };
            if o != expected {
                return Err(format!("cell {c:?} has orientation {o:?}"));
            }
            for &v in &cell.vertices {
                if v.is_infinite() {
                    inf_incident.push(c);
                } else {
                    incident[v.index()].push(c);
                }
            }
        }
        for (i, list) in incident.iter_mut().enumerate() {
            let mut stored = self.incident[i].clone();
            stored.sort();
            list.sort();
            if stored != *list {
                return Err(format!("incidence index of vertex {i} is stale"));
            }
        }
        let mut stored = self.infinite_incident.clone();
        stored.sort();
        inf_incident.sort();
        if stored != inf_incident {
            return Err("incidence index of the infinite vertex is stale".into());
        }
        Ok(())
    }
}
