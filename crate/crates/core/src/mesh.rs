//! Indexed triangle meshes and their topological checks.

use std::collections::{BTreeMap, HashMap};

use crate::geometry::{signed_volume, triangle_normal, Point3};

/// Triangles with area at or below this are flagged degenerate.
pub const DEGENERATE_AREA: f64 = 1e-12;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Point3>,
    pub triangles: Vec<[u32; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Point3>, triangles: Vec<[u32; 3]>) -> Self {
        TriangleMesh {
            vertices,
            triangles,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    #[inline]
    pub fn corners(&self, t: usize) -> [Point3; 3] {
        self.triangles[t].map(|i| self.vertices[i as usize])
    }

    /// Unit normal following the counter-clockwise winding.
    pub fn normal(&self, t: usize) -> Point3 {
        let [a, b, c] = self.corners(t);
        triangle_normal(a, b, c).normalized()
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        0.5 * (b - a).cross(c - a).norm()
    }

    pub fn is_degenerate(&self, t: usize) -> bool {
        self.area(t) <= DEGENERATE_AREA
    }

    pub fn indices_in_range(&self) -> bool {
        let n = self.vertices.len() as u32;
        self.triangles.iter().flatten().all(|&i| i < n)
    }

    /// Enclosed volume for an outward-oriented closed mesh.
    pub fn signed_volume(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| {
                let [a, b, c] = self.corners(t);
                signed_volume(Point3::ZERO, a, b, c)
            })
            .sum()
    }

    /// Topological report. With `allow_boundary`, open borders are accepted as
    /// long as every vertex neighborhood is still a disk or half-disk.
    pub fn check(&self, allow_boundary: bool) -> MeshCheck {
        let mut undirected: BTreeMap<(u32, u32), usize> = BTreeMap::new();
        let mut directed: HashMap<(u32, u32), usize> = HashMap::new();
        let mut links: BTreeMap<u32, Vec<(u32, u32)>> = BTreeMap::new();
        let mut repeated_corner = Vec::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            let [a, b, c] = *tri;
            if a == b || b == c || a == c {
                repeated_corner.push(t);
                continue;
            }
            for (u, v, w) in [(a, b, c), (b, c, a), (c, a, b)] {
                *undirected.entry((u.min(v), u.max(v))).or_default() += 1;
                *directed.entry((u, v)).or_default() += 1;
                links.entry(u).or_default().push((v, w));
            }
        }
        let boundary_edges = undirected.values().filter(|&&n| n == 1).count();
        let nonmanifold_edges = undirected.values().filter(|&&n| n > 2).count();
        let inconsistent_edges = directed.values().filter(|&&n| n > 1).count();
        let irregular_vertices = links
            .iter()
            .filter(|(_, edges)| !link_is_disk(edges, allow_boundary))
            .map(|(&v, _)| v)
            .collect();
        MeshCheck {
            allow_boundary,
            boundary_edges,
            nonmanifold_edges,
            inconsistent_edges,
            repeated_corner,
            irregular_vertices,
        }
    }
}

/// Whether the link edges of a vertex form a single cycle or, if allowed, a
/// single simple path.
pub fn link_is_disk(edges: &[(u32, u32)], allow_boundary: bool) -> bool {
    if edges.is_empty() {
        return true;
    }
    let mut adj: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for &(a, b) in edges {
        if a == b {
            return false;
        }
        adj.entry(a).or_default().push(b);
        adj.entry(b).or_default().push(a);
    }
    if adj.values().any(|n| n.len() > 2) {
        return false;
    }
    let ends = adj.values().filter(|n| n.len() == 1).count();
    if !(ends == 0 || (allow_boundary && ends == 2)) {
        return false;
    }
    // Connected with degrees <= 2: one cycle, or one path when two ends exist.
    let start = *adj.keys().next().unwrap();
    let mut seen = vec![start];
    let mut stack = vec![start];
    while let Some(v) = stack.pop() {
        for &n in &adj[&v] {
            if !seen.contains(&n) {
                seen.push(n);
                stack.push(n);
            }
        }
    }
    seen.len() == adj.len()
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeshCheck {
    pub allow_boundary: bool,
    pub boundary_edges: usize,
    pub nonmanifold_edges: usize,
    /// Directed edges used by more than one triangle.
    pub inconsistent_edges: usize,
    pub repeated_corner: Vec<usize>,
    pub irregular_vertices: Vec<u32>,
}

impl MeshCheck {
    pub fn is_manifold(&self) -> bool {
        (self.allow_boundary || self.boundary_edges == 0)
            && self.nonmanifold_edges == 0
            && self.inconsistent_edges == 0
            && self.repeated_corner.is_empty()
            && self.irregular_vertices.is_empty()
    }

    /// One line per problem found.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.allow_boundary && self.boundary_edges > 0 {
            out.push(format!(
                "{} boundary edges (mesh is not closed)",
                self.boundary_edges
            ));
        }
        if self.nonmanifold_edges > 0 {
            out.push(format!(
                "{} edges shared by more than two triangles",
                self.nonmanifold_edges
            ));
        }
        if self.inconsistent_edges > 0 {
            out.push(format!(
                "{} edges traversed twice in the same direction (inconsistent orientation)",
                self.inconsistent_edges
            ));
        }
        for t in &self.repeated_corner {
            out.push(format!("triangle {t} repeats a vertex"));
        }
        for v in &self.irregular_vertices {
            out.push(format!("vertex {v} is not regular"));
        }
        out
    }
}
