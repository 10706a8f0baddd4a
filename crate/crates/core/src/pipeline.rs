//! Bootstrap from sparse points, then alternate mesh sweeping with
//! incremental insertion until few new points arrive.

use std::collections::HashMap;
use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::delaunay::{find_simplex, CellId, Triangulation, VertexId};
use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::io;
use crate::manifold::{one_ring, ManifoldState};
use crate::mesh::TriangleMesh;
use crate::par;
use crate::scenes::Scene;
use crate::sweep::{extract_points, sweep_facets, MatchPoint, SweepConfig};
use crate::visibility::{RayStore, WeightConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub it_max: usize,
    /// Fewer accepted points than this ends the run.
    pub min_new_points: usize,
    /// Minimum spacing of new points; `None` means `alpha / 2`.
    pub dedup_radius: Option<f64>,
    pub weights: WeightConfig,
    pub sweep: SweepConfig,
    /// Lift coplanar input into 3D with one auxiliary vertex behind the plane,
    /// away from the cameras. Without it coplanar input is an error.
    pub coplanar_anchor: bool,
    /// Writes per-iteration meshes and NCC rasters here.
    pub diagnostics: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            it_max: 15,
            min_new_points: 10,
            dedup_radius: None,
            weights: WeightConfig::default(),
            sweep: SweepConfig::default(),
            coplanar_anchor: true,
            diagnostics: None,
        }
    }
}

impl PipelineConfig {
    pub fn dedup_radius(&self) -> f64 {
        self.dedup_radius.unwrap_or(self.sweep.alpha / 2.0)
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.it_max < 1 {
            return Err("it_max must be at least 1".into());
        }
        if !(self.dedup_radius() > 0.0) {
            return Err("dedup radius must be positive".into());
        }
        self.weights.validate()?;
        self.sweep.validate()
    }
}

/// Triangulation, outside set and viewing rays of a reconstruction in progress.
#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub tri: Triangulation,
    pub manifold: ManifoldState,
    pub rays: RayStore,
    /// Auxiliary vertex added to lift coplanar input.
    pub anchor_vertex: Option<VertexId>,
}

impl Reconstruction {
    pub fn surface(&self) -> TriangleMesh {
        self.manifold.extract_surface(&self.tri)
    }

    /// Label and regularity audit of the current state.
    pub fn audit(&self) -> Result<()> {
        self.manifold.audit(&self.tri).map_err(Error::Invariant)
    }
}

/// Auxiliary point behind the plane of coplanar `points`, on the side away
/// from the mean camera position.
fn coplanar_anchor(points: &[Point3], cameras: &[Point3]) -> Option<Point3> {
    let n = points.len() as f64;
    let centroid = points.iter().fold(Point3::ZERO, |a, &p| a + p) / n;
    // Plane normal from the widest triangle through the first point.
    let mut normal = Point3::ZERO;
    for i in 1..points.len() {
        for j in i + 1..points.len() {
            let c = (points[i] - points[0]).cross(points[j] - points[0]);
            if c.norm() > normal.norm() {
                normal = c;
            }
        }
    }
    if !(normal.norm() > 0.0) {
        return None;
    }
    let mut normal = normal.normalized();
    let mean_cam = cameras.iter().fold(Point3::ZERO, |a, &p| a + p) / cameras.len().max(1) as f64;
    if (mean_cam - centroid).dot(normal) < 0.0 {
        normal = -normal;
    }
    let extent = points
        .iter()
        .map(|p| p.distance(centroid))
        .fold(0.0, f64::max);
    Some(centroid - normal * extent)
}

/// Builds the triangulation of the scene points, traces every viewing ray and
/// grows the first manifold from the heaviest cell.
pub fn bootstrap(scene: &Scene, cfg: &PipelineConfig) -> Result<Reconstruction> {
    if scene.cameras.len() < 3 {
        return Err(Error::InsufficientCameras {
            camera: 0,
            needed: 2,
            found: scene.cameras.len().saturating_sub(1),
        });
    }
    if scene.points.len() < 4 {
        return Err(Error::DegenerateInput(format!(
            "need at least 4 points, got {}",
            scene.points.len()
        )));
    }
    let centers = scene.camera_centers();
    let mut points = scene.points.clone();
    let mut anchor = None;
    if find_simplex(&points).is_none() {
        if !cfg.coplanar_anchor {
            return Err(Error::DegenerateInput("scene points are coplanar".into()));
        }
        let p = coplanar_anchor(&points, &centers)
            .ok_or_else(|| Error::DegenerateInput("scene points are collinear".into()))?;
        points.push(p);
        anchor = Some(p);
    }
    let (mut tri, ids) = Triangulation::build_with_ids(&points)?;
    let anchor_vertex = anchor.map(|_| ids[points.len() - 1]);
    let mut rays = RayStore::new(cfg.weights, centers);
    let pairs: Vec<(usize, VertexId)> = scene
        .visibility
        .iter()
        .enumerate()
        .flat_map(|(i, cams)| cams.iter().map(move |&c| (c, i)))
        .map(|(c, i)| (c, ids[i]))
        .collect();
    rays.add_rays(&mut tri, &pairs);
    let mut manifold = ManifoldState::new();
    manifold.grow_from_scratch(&mut tri, &cfg.weights);
    let rec = Reconstruction {
        tri,
        manifold,
        rays,
        anchor_vertex,
    };
    rec.audit()?;
    Ok(rec)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub proposed: usize,
    pub accepted: usize,
    pub discarded_conflict: usize,
    pub discarded_duplicate: usize,
    /// Matches lying on the plane of a hull facet, up to rounding.
    #[serde(default)]
    pub discarded_degenerate: usize,
    pub vertices: usize,
    pub surface_triangles: usize,
    pub seconds_sweep: f64,
    pub seconds_reconstruction: f64,
}

/// Uniform grid over points for radius queries.
struct PointGrid {
    cell: f64,
    bins: HashMap<(i64, i64, i64), Vec<Point3>>,
}

impl PointGrid {
    fn new(cell: f64) -> Self {
        PointGrid {
            cell,
            bins: HashMap::new(),
        }
    }

    fn key(&self, p: Point3) -> (i64, i64, i64) {
        (
            (p.x / self.cell).floor() as i64,
            (p.y / self.cell).floor() as i64,
            (p.z / self.cell).floor() as i64,
        )
    }

    fn insert(&mut self, p: Point3) {
        let k = self.key(p);
        self.bins.entry(k).or_default().push(p);
    }

    fn any_within(&self, p: Point3, r: f64) -> bool {
        let (x, y, z) = self.key(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(bin) = self.bins.get(&(x + dx, y + dy, z + dz)) {
                        if bin.iter().any(|q| q.distance(p) < r) {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }
}

/// Sweeps every camera over `mesh` and returns all matches, best first.
pub fn sweep_all(
    scene: &Scene,
    mesh: &TriangleMesh,
    cfg: &PipelineConfig,
    iteration: usize,
) -> Result<Vec<MatchPoint>> {
    if mesh.is_empty() {
        return Ok(Vec::new());
    }
    let dump = match &cfg.diagnostics {
        Some(dir) => {
            let d = dir.join(format!("iter_{iteration:02}"));
            std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
            Some(d)
        }
        None => None,
    };
    let per_camera = par::map_range(scene.cameras.len(), |c| {
        let family = sweep_facets(mesh, &scene.cameras[c], c, &cfg.sweep);
        extract_points(
            &scene.cameras,
            &scene.images,
            &family,
            &cfg.sweep,
            dump.as_deref(),
        )
    });
    let mut matches = Vec::new();
    for m in per_camera {
        matches.extend(m?);
    }
    matches.sort_by(|a, b| {
        b.ncc
            .total_cmp(&a.ncc)
            .then(a.camera.cmp(&b.camera))
            .then((a.pixel.1, a.pixel.0).cmp(&(b.pixel.1, b.pixel.0)))
    });
    Ok(matches)
}

/// Drops matches closer than `radius` to an existing vertex or to a better
/// match kept earlier. Returns the survivors and the number dropped.
pub fn dedup_matches(
    tri: &Triangulation,
    matches: Vec<MatchPoint>,
    radius: f64,
) -> (Vec<MatchPoint>, usize) {
    let mut grid = PointGrid::new(radius);
    for &p in tri.points() {
        grid.insert(p);
    }
    let mut kept = Vec::new();
    let mut dropped = 0;
    for m in matches {
        if grid.any_within(m.position, radius) {
            dropped += 1;
        } else {
            grid.insert(m.position);
            kept.push(m);
        }
    }
    (kept, dropped)
}

/// Distance below which a point counts as lying on a hull facet's plane,
/// relative to its distance from the origin plus one meter.
const HULL_SLACK: f64 = 1e-9;

/// Whether `q` sits on the plane of a convex-hull facet bounding `region`.
/// Such a point is outside the hull only through rounding, and inserting it
/// roofs the whole facet with zero-volume cells that drag the surface rim
/// inward.
fn on_hull_plane(tri: &Triangulation, region: &[CellId], q: Point3) -> bool {
    let tol = HULL_SLACK * (1.0 + q.norm());
    region.iter().any(|&c| {
        let cell = tri.cell(c);
        (0..4).any(|i| {
            let on_hull = match cell.infinite_index() {
                Some(j) => i == j,
                None => tri.cell(cell.neighbors[i]).is_infinite(),
            };
            if !on_hull {
                return false;
            }
            let [a, b, d] = cell.facet(i).map(|v| tri.point(v));
            let n = (b - a).cross(d - a);
            let len = n.norm();
            len > 0.0 && ((q - a).dot(n) / len).abs() < tol
        })
    })
}

/// Inserts matches in order, shrinking O around each conflict region first.
/// Points whose region still meets O are discarded, as are points on the
/// plane of a hull facet.
pub fn insert_matches(
    rec: &mut Reconstruction,
    matches: &[MatchPoint],
    report: &mut IterationReport,
) {
    for m in matches {
        let region = match rec.tri.conflict_region(m.position) {
            Ok(d) => d,
            Err(_) => {
                report.discarded_duplicate += 1;
                continue;
            }
        };
        if on_hull_plane(&rec.tri, &region, m.position) {
            report.discarded_degenerate += 1;
            continue;
        }
        let ring = one_ring(&rec.tri, &region);
        rec.manifold.shrink(&mut rec.tri, &ring);
        if region.iter().any(|&c| rec.manifold.contains(c)) {
            report.discarded_conflict += 1;
            continue;
        }
        let ins = rec.tri.insert_with_region(m.position, region);
        rec.manifold.forget(&ins);
        rec.rays.retrace_after_insert(&mut rec.tri, &ins);
        rec.rays.add_rays(
            &mut rec.tri,
            &[(m.camera, ins.vertex), (m.neighbor, ins.vertex)],
        );
        report.accepted += 1;
    }
}

/// One sweep-and-insert cycle.
pub fn iterate(
    rec: &mut Reconstruction,
    scene: &Scene,
    cfg: &PipelineConfig,
    iteration: usize,
) -> Result<IterationReport> {
    let start = Instant::now();
    let mesh = rec.surface();
    let matches = sweep_all(scene, &mesh, cfg, iteration)?;
    let mut report = IterationReport {
        proposed: matches.len(),
        ..Default::default()
    };
    let (batch, dropped) = dedup_matches(&rec.tri, matches, cfg.dedup_radius());
    report.discarded_duplicate = dropped;
    report.seconds_sweep = start.elapsed().as_secs_f64();

    let start = Instant::now();
    insert_matches(rec, &batch, &mut report);
    rec.manifold.regrow(&mut rec.tri, &cfg.weights);
    rec.audit()?;
    report.vertices = rec.tri.num_vertices();
    let surface = rec.surface();
    report.surface_triangles = surface.triangles.len();
    report.seconds_reconstruction = start.elapsed().as_secs_f64();
    if let Some(dir) = &cfg.diagnostics {
        io::write_ply(&dir.join(format!("iter_{iteration:02}.ply")), &surface)?;
    }
    Ok(report)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// Triangulation vertices after bootstrap, the coplanar anchor included.
    pub initial_vertices: usize,
    pub initial_surface_triangles: usize,
    pub iterations: Vec<IterationReport>,
    /// The last iteration accepted fewer than `min_new_points` points.
    pub converged: bool,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub initial_mesh: TriangleMesh,
    pub mesh: TriangleMesh,
    pub report: RunReport,
    pub reconstruction: Reconstruction,
}

/// Bootstraps, then iterates until convergence or `it_max` iterations.
pub fn run(scene: &Scene, cfg: &PipelineConfig) -> Result<RunOutput> {
    let rec = bootstrap(scene, cfg)?;
    run_from(rec, scene, cfg)
}

/// [`run`] continuing from an existing bootstrap.
pub fn run_from(mut rec: Reconstruction, scene: &Scene, cfg: &PipelineConfig) -> Result<RunOutput> {
    let initial_mesh = rec.surface();
    let mut report = RunReport {
        initial_vertices: rec.tri.num_vertices(),
        initial_surface_triangles: initial_mesh.triangles.len(),
        ..Default::default()
    };
    if let Some(dir) = &cfg.diagnostics {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        io::write_ply(&dir.join("iter_bootstrap.ply"), &initial_mesh)?;
    }
    for it in 0..cfg.it_max {
        let r = iterate(&mut rec, scene, cfg, it)?;
        log::info!(
            "iteration {it}: {} proposed, {} accepted, {} vertices, {} triangles",
            r.proposed,
            r.accepted,
            r.vertices,
            r.surface_triangles
        );
        let done = r.accepted < cfg.min_new_points;
        report.iterations.push(r);
        if done {
            report.converged = true;
            break;
        }
    }
    Ok(RunOutput {
        initial_mesh,
        mesh: rec.surface(),
        report,
        reconstruction: rec,
    })
}
