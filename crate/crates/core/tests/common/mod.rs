//! Independent reference implementations used as test oracles. Nothing here
//! calls into the library's geometric kernels except for plain data access
//! and the rendered fixtures at the end.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use meshsweep::delaunay::{CellId, Label, Triangulation, VertexId};
use meshsweep::geometry::Point3;
use meshsweep::image::ImageBuffer;
use meshsweep::mesh::TriangleMesh;
use meshsweep::render::{render_textured, ValueNoise};
use meshsweep::CameraView;
use num::traits::float::FloatCore;
use num::BigInt;
use rand::Rng;

/// Exact integer images of `xs`, all scaled by the same power of two.
fn exact_ints<const N: usize>(xs: [f64; N]) -> [BigInt; N] {
    let parts = xs.map(|x| {
        assert!(x.is_finite());
        let (m, e, s) = x.integer_decode();
        (BigInt::from(m) * BigInt::from(s), e)
    });
    let min_e = parts.iter().map(|p| p.1).min().unwrap_or(0);
    parts.map(|(m, e)| m << ((e - min_e) as usize))
}

fn sign(x: &BigInt) -> i32 {
    match x.sign() {
        num::bigint::Sign::Minus => -1,
        num::bigint::Sign::NoSign => 0,
        num::bigint::Sign::Plus => 1,
    }
}

type V3 = [BigInt; 3];

fn det3(m: &[V3; 3]) -> BigInt {
    &m[0][0] * (&m[1][1] * &m[2][2] - &m[1][2] * &m[2][1])
        - &m[0][1] * (&m[1][0] * &m[2][2] - &m[1][2] * &m[2][0])
        + &m[0][2] * (&m[1][0] * &m[2][1] - &m[1][1] * &m[2][0])
}

fn sub(a: &V3, b: &V3) -> V3 {
    [&a[0] - &b[0], &a[1] - &b[1], &a[2] - &b[2]]
}

fn dot(a: &V3, b: &V3) -> BigInt {
    &a[0] * &b[0] + &a[1] * &b[1] + &a[2] * &b[2]
}

fn points_exact<const N: usize>(ps: [Point3; N]) -> [V3; N] {
    let flat: Vec<f64> = ps.iter().flat_map(|p| [p.x, p.y, p.z]).collect();
    let ints = exact_ints::<64>(std::array::from_fn(|i| flat.get(i).copied().unwrap_or(0.0)));
    std::array::from_fn(|k| {
        [
            ints[3 * k].clone(),
            ints[3 * k + 1].clone(),
            ints[3 * k + 2].clone(),
        ]
    })
}

/// Exact sign of `det[b - a; c - a; d - a]`.
pub fn orient_exact(a: Point3, b: Point3, c: Point3, d: Point3) -> i32 {
    let [a, b, c, d] = points_exact([a, b, c, d]);
    sign(&det3(&[sub(&b, &a), sub(&c, &a), sub(&d, &a)]))
}

/// Exact test of `e` against the circumsphere of a non-degenerate
/// tetrahedron: +1 strictly inside, 0 on, -1 outside. The circumcenter
/// `a + N / det` comes from Cramer's rule, so no orientation convention
/// enters; comparing `|N|^2` with `|det (e - a) - N|^2` avoids division.
pub fn in_sphere_exact(a: Point3, b: Point3, c: Point3, d: Point3, e: Point3) -> i32 {
    let [a, b, c, d, e] = points_exact([a, b, c, d, e]);
    // 2 (p - a) . o = |p - a|^2 for p = b, c, d.
    let rows = [sub(&b, &a), sub(&c, &a), sub(&d, &a)];
    let rhs: Vec<BigInt> = rows.iter().map(|r| dot(r, r)).collect();
    let m: [V3; 3] = rows.clone().map(|r| r.map(|x| x * 2));
    let det = det3(&m);
    assert!(
        det.sign() != num::bigint::Sign::NoSign,
        "degenerate tetrahedron"
    );
    let n: V3 = std::array::from_fn(|col| {
        let mut mc = m.clone();
        for row in 0..3 {
            mc[row][col] = rhs[row].clone();
        }
        det3(&mc)
    });
    let ea = sub(&e, &a);
    let scaled: V3 = std::array::from_fn(|k| &ea[k] * &det - &n[k]);
    sign(&(dot(&n, &n) - dot(&scaled, &scaled)))
}

pub fn random_point<R: Rng>(rng: &mut R, scale: f64) -> Point3 {
    Point3::new(
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
    )
}

/// Floating-point orientation used where inputs are in general position.
fn orient_f(a: Point3, b: Point3, c: Point3, d: Point3) -> f64 {
    (b - a).cross(c - a).dot(d - a)
}

/// Corners of a finite cell.
fn finite_corners(tri: &Triangulation, c: CellId) -> Option<[Point3; 4]> {
    let cell = tri.cell(c);
    if cell.vertices.iter().any(|v| v.is_infinite()) {
        return None;
    }
    Some(cell.vertices.map(|v| tri.point(v)))
}

/// Every finite cell whose circumsphere strictly contains a vertex, as
/// `(cell, vertex)` pairs. Uses the exact rational circumsphere test only when
/// the floating-point margin is unclear.
pub fn delaunay_violations(tri: &Triangulation) -> Vec<(CellId, usize)> {
    let points = tri.points();
    let mut out = Vec::new();
    for c in tri.finite_cell_ids() {
        let Some([a, b, cc, d]) = finite_corners(tri, c) else {
            continue;
        };
        let ids: Vec<usize> = tri.cell(c).vertices.iter().map(|v| v.index()).collect();
        let center = circumcenter_f(a, b, cc, d);
        let r2 = a.distance(center).powi(2);
        for (i, &p) in points.iter().enumerate() {
            if ids.contains(&i) {
                continue;
            }
            let d2 = p.distance(center).powi(2);
            let margin = 1e-9 * (r2 + d2 + 1.0);
            if d2 > r2 + margin {
                continue;
            }
            if in_sphere_exact(a, b, cc, d, p) > 0 {
                out.push((c, i));
            }
        }
    }
    out
}

pub fn circumcenter_f(a: Point3, b: Point3, c: Point3, d: Point3) -> Point3 {
    let (b, c, d) = (b - a, c - a, d - a);
    let det = 2.0 * b.dot(c.cross(d));
    let o = (c.cross(d) * b.norm_squared()
        + d.cross(b) * c.norm_squared()
        + b.cross(c) * d.norm_squared())
        / det;
    a + o
}

/// Brute-force conflict set of `p`: finite cells whose circumsphere strictly
/// contains it, and hull facets that `p` sees strictly from outside. Assumes
/// general position.
pub fn conflict_scan(tri: &Triangulation, p: Point3) -> BTreeSet<CellId> {
    let mut out = BTreeSet::new();
    for c in tri.cell_ids() {
        let cell = tri.cell(c);
        match cell.vertices.iter().position(|v| v.is_infinite()) {
            None => {
                let [a, b, cc, d] = cell.vertices.map(|v| tri.point(v));
                if in_sphere_exact(a, b, cc, d, p) > 0 {
                    out.insert(c);
                }
            }
            Some(j) => {
                // The finite facet and the apex of the finite cell behind it.
                let facet: Vec<Point3> = cell
                    .vertices
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != j)
                    .map(|(_, v)| tri.point(*v))
                    .collect();
                let inner = tri.cell(cell.neighbors[j]);
                let apex = inner
                    .vertices
                    .iter()
                    .find(|v| !cell.vertices.contains(v))
                    .map(|v| tri.point(*v))
                    .expect("finite neighbor across the hull facet");
                let sp = orient_exact(facet[0], facet[1], facet[2], p);
                let si = orient_exact(facet[0], facet[1], facet[2], apex);
                assert_ne!(si, 0);
                if sp != 0 && sp != si {
                    out.insert(c);
                }
            }
        }
    }
    out
}

/// Clips `t` in `[lo, hi]` to the half-space `f(t) = f0 + t (f1 - f0) > 0`.
fn clip(lo: &mut f64, hi: &mut f64, f0: f64, f1: f64) {
    let df = f1 - f0;
    if df == 0.0 {
        if f0 <= 0.0 {
            *hi = *lo - 1.0;
        }
        return;
    }
    let t = -f0 / df;
    if df > 0.0 {
        *lo = lo.max(t);
    } else {
        *hi = hi.min(t);
    }
}

/// Half-spaces (as plane triples plus an inside reference point) bounding the
/// region of a cell. Infinite cells are the cone from the triangulation's
/// anchor through their hull facet, beyond that facet.
fn cell_halfspaces(tri: &Triangulation, c: CellId) -> Vec<([Point3; 3], Point3)> {
    let cell = tri.cell(c);
    let mut planes = Vec::new();
    match cell.vertices.iter().position(|v| v.is_infinite()) {
        None => {
            let p = cell.vertices.map(|v| tri.point(v));
            for i in 0..4 {
                let f: Vec<Point3> = (0..4).filter(|&k| k != i).map(|k| p[k]).collect();
                planes.push(([f[0], f[1], f[2]], p[i]));
            }
        }
        Some(j) => {
            let f: Vec<Point3> = (0..4)
                .filter(|&k| k != j)
                .map(|k| tri.point(cell.vertices[k]))
                .collect();
            let o = tri.anchor();
            let centroid = (f[0] + f[1] + f[2]) / 3.0;
            // Beyond the facet plane, away from the anchor.
            let beyond = centroid + (centroid - o);
            planes.push(([f[0], f[1], f[2]], beyond));
            for k in 0..3 {
                let (a, b, other) = (f[k], f[(k + 1) % 3], f[(k + 2) % 3]);
                planes.push(([o, a, b], other));
            }
        }
    }
    planes
}

/// Parameter interval `(lo, hi)` of the segment `a -> b` inside the cell;
/// empty when `hi <= lo`.
pub fn segment_interval(tri: &Triangulation, c: CellId, a: Point3, b: Point3) -> (f64, f64) {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for ([p, q, r], inside) in cell_halfspaces(tri, c) {
        let s = orient_f(p, q, r, inside).signum();
        clip(
            &mut lo,
            &mut hi,
            s * orient_f(p, q, r, a),
            s * orient_f(p, q, r, b),
        );
    }
    (lo, hi)
}

pub fn segment_overlap(tri: &Triangulation, c: CellId, a: Point3, b: Point3) -> f64 {
    let (lo, hi) = segment_interval(tri, c, a, b);
    hi - lo
}

/// Cells crossed by the open segment from `camera` to vertex `v`, found by
/// testing every cell. Overlaps shorter than `eps` (in segment parameter)
/// are treated as touching only.
pub fn traversed_scan(
    tri: &Triangulation,
    camera: Point3,
    v: VertexId,
    eps: f64,
) -> BTreeSet<CellId> {
    let p = tri.point(v);
    tri.cell_ids()
        .filter(|&c| segment_overlap(tri, c, camera, p) > eps)
        .collect()
}

/// Per-cell weights recomputed from scratch with the oracle traversal: `w1`
/// on traversed cells, `w2` once per ray on face neighbors of traversed
/// finite cells that are not traversed themselves.
pub fn scratch_weights_oracle(
    tri: &Triangulation,
    rays: &[(Point3, VertexId)],
    w1: f64,
    w2: f64,
) -> HashMap<CellId, f64> {
    let mut w: HashMap<CellId, f64> = HashMap::new();
    for &(cam, v) in rays {
        let crossed = traversed_scan(tri, cam, v, 1e-12);
        let mut fringe = BTreeSet::new();
        for &c in &crossed {
            let cell = tri.cell(c);
            if cell.vertices.iter().any(|x| x.is_infinite()) {
                continue;
            }
            for n in cell.neighbors {
                if !crossed.contains(&n) {
                    fringe.insert(n);
                }
            }
        }
        for c in crossed {
            *w.entry(c).or_default() += w1;
        }
        for c in fringe {
            *w.entry(c).or_default() += w2;
        }
    }
    w
}

/// The boundary between cells labeled outside and the rest, as oriented
/// vertex triples (infinite vertex included), recomputed from labels alone.
pub fn boundary_facets(tri: &Triangulation) -> Vec<[VertexId; 3]> {
    let mut out = Vec::new();
    for c in tri.cell_ids() {
        let cell = tri.cell(c);
        if cell.label != Label::Outside {
            continue;
        }
        for i in 0..4 {
            if tri.cell(cell.neighbors[i]).label == Label::Outside {
                continue;
            }
            let f: Vec<VertexId> = (0..4)
                .filter(|&k| k != i)
                .map(|k| cell.vertices[k])
                .collect();
            out.push([f[0], f[1], f[2]]);
        }
    }
    out
}

/// Violations of the manifold property of the outside-set boundary: vertices
/// whose link is not one closed cycle and edges without exactly two facets.
#[derive(Debug, Default)]
pub struct ManifoldViolations {
    pub irregular_vertices: Vec<VertexId>,
    pub bad_edges: Vec<(VertexId, VertexId, usize)>,
}

impl ManifoldViolations {
    pub fn is_empty(&self) -> bool {
        self.irregular_vertices.is_empty() && self.bad_edges.is_empty()
    }
}

/// Whether `edges` (undirected) form exactly one simple closed cycle using
/// every edge once.
pub fn is_single_cycle(edges: &[(VertexId, VertexId)]) -> bool {
    if edges.is_empty() {
        return false;
    }
    let mut adj: BTreeMap<VertexId, Vec<VertexId>> = BTreeMap::new();
    for &(a, b) in edges {
        if a == b {
            return false;
        }
        adj.entry(a).or_default().push(b);
        adj.entry(b).or_default().push(a);
    }
    if adj.values().any(|n| n.len() != 2) {
        return false;
    }
    // Walk the cycle from the smallest vertex; it must visit every vertex.
    let start = *adj.keys().next().unwrap();
    let (mut prev, mut cur) = (start, adj[&start][0]);
    let mut steps = 1;
    while cur != start {
        let n = &adj[&cur];
        let next = if n[0] == prev { n[1] } else { n[0] };
        prev = cur;
        cur = next;
        steps += 1;
        if steps > edges.len() {
            return false;
        }
    }
    steps == adj.len() && steps == edges.len()
}

pub fn manifold_violations(tri: &Triangulation) -> ManifoldViolations {
    let facets = boundary_facets(tri);
    let mut links: BTreeMap<VertexId, Vec<(VertexId, VertexId)>> = BTreeMap::new();
    let mut edges: BTreeMap<(VertexId, VertexId), usize> = BTreeMap::new();
    for f in &facets {
        for k in 0..3 {
            let v = f[k];
            let (a, b) = (f[(k + 1) % 3], f[(k + 2) % 3]);
            links.entry(v).or_default().push((a, b));
            let e = if a < b { (a, b) } else { (b, a) };
            *edges.entry(e).or_default() += 1;
        }
    }
    let mut out = ManifoldViolations::default();
    for (v, link) in &links {
        if !is_single_cycle(link) {
            out.irregular_vertices.push(*v);
        }
    }
    for (&(a, b), &n) in &edges {
        if n != 2 {
            out.bad_edges.push((a, b, n));
        }
    }
    out
}

/// Depth of the nearest intersection of the pixel-centre ray with any
/// triangle, by Moller-Trumbore against every triangle.
pub fn raycast_depth(mesh: &TriangleMesh, cam: &CameraView, x: usize, y: usize) -> Option<f64> {
    let (u, v) = (x as f64 + 0.5, y as f64 + 0.5);
    // Ray with unit camera-z component so the hit parameter is the depth.
    let far = cam.unproject(u, v, 1.0);
    let o = cam.center();
    let dir = far - o;
    let mut best: Option<f64> = None;
    for t in 0..mesh.triangles.len() {
        let [a, b, c] = mesh.corners(t);
        let (e1, e2) = (b - a, c - a);
        let pv = dir.cross(e2);
        let det = e1.dot(pv);
        if det.abs() < 1e-15 {
            continue;
        }
        let tv = o - a;
        let bu = tv.dot(pv) / det;
        let qv = tv.cross(e1);
        let bv = dir.dot(qv) / det;
        if bu < 0.0 || bv < 0.0 || bu + bv > 1.0 {
            continue;
        }
        let s = e2.dot(qv) / det;
        if s > 1e-4 && best.is_none_or(|d| s < d) {
            best = Some(s);
        }
    }
    best
}

/// Homography `K_k (R + t n^T / d) K_c^-1` induced by the world plane
/// `n . X = d` from camera `c` to camera `k`, with `R`, `t` the relative pose
/// taking camera-`c` coordinates to camera-`k` coordinates.
pub fn plane_homography(
    c: &CameraView,
    k: &CameraView,
    n: Point3,
    d: f64,
) -> nalgebra::Matrix3<f64> {
    use nalgebra::{Matrix3, Vector3};
    let rc = Matrix3::from_row_slice(&c.rotation_row_major());
    let rk = Matrix3::from_row_slice(&k.rotation_row_major());
    let kc = Matrix3::from_row_slice(&c.intrinsics_row_major());
    let kk = Matrix3::from_row_slice(&k.intrinsics_row_major());
    let cc = Vector3::new(c.center().x, c.center().y, c.center().z);
    let ck = Vector3::new(k.center().x, k.center().y, k.center().z);
    let nw = Vector3::new(n.x, n.y, n.z);
    // In camera-c coordinates Y = R_c (X - C_c): plane n_c . Y = d_c.
    let n_c = rc * nw;
    let d_c = d - nw.dot(&cc);
    let r = rk * rc.transpose();
    let t = rk * (cc - ck);
    kk * (r + t * n_c.transpose() / d_c) * kc.try_inverse().unwrap()
}

/// Distance from `q` to the plane of the triangle when its foot lies inside
/// the triangle, infinity otherwise.
pub fn point_triangle_distance(q: Point3, [a, b, c]: [Point3; 3]) -> f64 {
    let n = (b - a).cross(c - a).normalized();
    let h = (q - a).dot(n);
    let f = q - n * h;
    let inside = [(a, b), (b, c), (c, a)]
        .iter()
        .all(|&(s, e)| (e - s).cross(f - s).dot(n) >= -1e-12);
    if inside {
        h.abs()
    } else {
        f64::INFINITY
    }
}

/// Finely tessellated square at height `z`, so each facet's sweep matches
/// the local viewing angle.
pub fn plane(z: f64) -> TriangleMesh {
    let (s, n) = (1.5, 24);
    let vertices = (0..=n)
        .flat_map(|j| {
            (0..=n).map(move |i| {
                Point3::new(
                    -s + 2.0 * s * i as f64 / n as f64,
                    -s + 2.0 * s * j as f64 / n as f64,
                    z,
                )
            })
        })
        .collect();
    let mut triangles = Vec::new();
    for j in 0..n {
        for i in 0..n {
            let a = (j * (n + 1) + i) as u32;
            let (b, c, d) = (a + 1, a + n as u32 + 2, a + n as u32 + 1);
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    TriangleMesh::new(vertices, triangles)
}

pub struct PlaneFixture {
    pub cameras: Vec<CameraView>,
    pub images: Vec<ImageBuffer>,
}

/// Three narrow-field cameras above a textured ground plane at z = 0. Rays
/// stay within 12 degrees of the normal, so a sweep step moves the surface by
/// nearly `alpha`.
pub fn plane_fixture() -> PlaneFixture {
    let texture = ValueNoise {
        seed: 11,
        spacing: 0.05,
    };
    let (w, h) = (160, 120);
    let cameras: Vec<CameraView> = [-0.4, 0.0, 0.4]
        .iter()
        .map(|&x| {
            let (from, at) = (Point3::new(x, 0.1, 3.0), Point3::new(x * 0.9, 0.1, 0.0));
            CameraView::look_at(
                from,
                at,
                Point3::new(0.0, 1.0, 0.0),
                2.5 * w as f64,
                (80.0, 60.0),
                w,
                h,
            )
            .unwrap()
        })
        .collect();
    let images = cameras
        .iter()
        .map(|c| render_textured(&plane(0.0), &texture, c))
        .collect();
    PlaneFixture { cameras, images }
}
