//! Camera-to-point ray tracing through the triangulation and the free-space
//! weights derived from it.

use crate::delaunay::{Cell, CellId, Insertion, Triangulation, VertexId};
use crate::geometry::Point3;
use crate::par;
use crate::predicates::Sign;

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct WeightConfig {
    /// Added to every cell a ray crosses.
    pub w1: f64,
    /// Added once per ray to untraversed neighbors of crossed finite cells.
    pub w2: f64,
    /// Cells strictly heavier than this are free space.
    pub t_w: f64,
}

impl Default for WeightConfig {
    fn default() -> Self {
        WeightConfig {
            w1: 4.0,
            w2: 0.5,
            t_w: 4.0,
        }
    }
}

impl WeightConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.w1 > self.w2 && self.w2 > 0.0) {
            return Err(format!(
                "need w1 > w2 > 0, got w1={} w2={}",
                self.w1, self.w2
            ));
        }
        if !(self.t_w > 0.0) {
            return Err(format!("need t_w > 0, got {}", self.t_w));
        }
        Ok(())
    }
}

#[inline]
pub fn is_free(cell: &Cell, cfg: &WeightConfig) -> bool {
    cell.weight > cfg.t_w
}

/// Cells crossed by the open segment from `camera` to vertex `p`, in order
/// from the camera.
pub fn trace(tri: &Triangulation, camera: Point3, p: VertexId) -> Vec<CellId> {
    let target = tri.point(p);
    if target == camera {
        return Vec::new();
    }
    let Some(start) = start_cell(tri, camera, p) else {
        return Vec::new();
    };
    let mut path = vec![start];
    let mut current = start;
    let mut entry: Option<usize> = None;
    let limit = tri.num_cells() + 1;
    while path.len() <= limit {
        let sides: [Sign; 4] = std::array::from_fn(|i| tri.facet_side(current, i, camera));
        if sides.iter().all(|&s| s != Sign::Negative) {
            break;
        }
        let mut best: Option<(f64, usize)> = None;
        for (i, side) in sides.iter().enumerate() {
            if *side != Sign::Negative || Some(i) == entry {
                continue;
            }
            let a = tri.facet_side_value(current, i, target);
            let b = tri.facet_side_value(current, i, camera);
            let t = if a - b > 0.0 { a / (a - b) } else { 0.0 };
            if best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, i));
            }
        }
        let Some((_, exit)) = best else { break };
        let next = tri.cell(current).neighbors[exit];
        if path.contains(&next) {
            break;
        }
        entry = Some(tri.mirror_index(current, exit));
        path.push(next);
        current = next;
    }
    path.reverse();
    path
}

/// The cell around `p` whose corner cone contains the direction to `camera`.
fn start_cell(tri: &Triangulation, camera: Point3, p: VertexId) -> Option<CellId> {
    let mut fallback: Option<(usize, CellId)> = None;
    let mut cells = tri.incident_cells(p).to_vec();
    cells.sort();
    for c in cells {
        let ip = tri.cell(c).index_of(p).expect("incident cell contains p");
        let mut positive = 0;
        let mut negative = false;
        for i in (0..4).filter(|&i| i != ip) {
            match tri.facet_side(c, i, camera) {
                Sign::Positive => positive += 1,
                Sign::Zero => {}
                Sign::Negative => negative = true,
            }
        }
        if positive == 3 {
            return Some(c);
        }
        if !negative && fallback.is_none_or(|(n, _)| positive > n) {
            fallback = Some((positive, c));
        }
    }
    fallback.map(|(_, c)| c)
}

/// Face neighbors of crossed finite cells that are not crossed themselves,
/// each listed once, sorted.
pub fn fringe(tri: &Triangulation, traversed: &[CellId]) -> Vec<CellId> {
    let mut out: Vec<CellId> = traversed
        .iter()
        .filter(|&&c| !tri.cell(c).is_infinite())
        .flat_map(|&c| tri.cell(c).neighbors)
        .filter(|n| !traversed.contains(n))
        .collect();
    out.sort();
    out.dedup();
    out
}

#[derive(Clone, Debug)]
pub struct Ray {
    pub camera: usize,
    pub vertex: VertexId,
    pub traversed: Vec<CellId>,
    pub fringe: Vec<CellId>,
}

/// All viewing rays and the cells they contribute to. Weights themselves live
/// in the triangulation's cells.
#[derive(Clone, Debug)]
pub struct RayStore {
    cfg: WeightConfig,
    centers: Vec<Point3>,
    rays: Vec<Ray>,
    /// Per cell id, the rays that added weight to it.
    by_cell: Vec<Vec<u32>>,
}

impl RayStore {
    pub fn new(cfg: WeightConfig, centers: Vec<Point3>) -> Self {
        RayStore {
            cfg,
            centers,
            rays: Vec::new(),
            by_cell: Vec::new(),
        }
    }

    pub fn config(&self) -> &WeightConfig {
        &self.cfg
    }

    pub fn rays(&self) -> &[Ray] {
        &self.rays
    }

    pub fn camera_center(&self, camera: usize) -> Point3 {
        self.centers[camera]
    }

    fn slot(&mut self, c: CellId) -> &mut Vec<u32> {
        if self.by_cell.len() <= c.index() {
            self.by_cell.resize(c.index() + 1, Vec::new());
        }
        &mut self.by_cell[c.index()]
    }

    fn apply(&mut self, tri: &mut Triangulation, id: u32, sign: f64) {
        let (w1, w2) = (self.cfg.w1 * sign, self.cfg.w2 * sign);
        let ray = std::mem::replace(
            &mut self.rays[id as usize],
            Ray {
                camera: 0,
                vertex: VertexId(0),
                traversed: Vec::new(),
                fringe: Vec::new(),
            },
        );
        for (cells, w) in [(&ray.traversed, w1), (&ray.fringe, w2)] {
            for &c in cells {
                if !tri.cell(c).is_alive() {
                    continue;
                }
                let cell = tri.cell_mut(c);
                cell.weight += w;
                if cell.weight < 0.0 {
                    cell.weight = 0.0;
                }
                let slot = self.slot(c);
                if sign > 0.0 {
                    slot.push(id);
                } else if let Some(pos) = slot.iter().position(|&r| r == id) {
                    slot.swap_remove(pos);
                }
            }
        }
        self.rays[id as usize] = ray;
    }

    /// Traces and applies rays from each `(camera, vertex)` pair.
    pub fn add_rays(&mut self, tri: &mut Triangulation, pairs: &[(usize, VertexId)]) {
        let traced = {
            let tri = &*tri;
            let centers = &self.centers;
            par::map_slice(pairs, |&(cam, v)| {
                let traversed = trace(tri, centers[cam], v);
                let fringe = fringe(tri, &traversed);
                Ray {
                    camera: cam,
                    vertex: v,
                    traversed,
                    fringe,
                }
            })
        };
        for ray in traced {
            let id = self.rays.len() as u32;
            self.rays.push(ray);
            self.apply(tri, id, 1.0);
        }
    }

    /// Re-routes the rays that touched cells destroyed by `insertion`.
    pub fn retrace_after_insert(&mut self, tri: &mut Triangulation, insertion: &Insertion) {
        let mut ids: Vec<u32> = insertion
            .destroyed
            .iter()
            .filter_map(|c| self.by_cell.get(c.index()))
            .flatten()
            .copied()
            .collect();
        ids.sort_unstable();
        ids.dedup();
        for &id in &ids {
            self.apply(tri, id, -1.0);
        }
        for &c in &insertion.destroyed {
            if let Some(slot) = self.by_cell.get_mut(c.index()) {
                slot.clear();
            }
        }
        let retraced = {
            let tri = &*tri;
            let rays = &self.rays;
            let centers = &self.centers;
            par::map_slice(&ids, |&id| {
                let r = &rays[id as usize];
                let traversed = trace(tri, centers[r.camera], r.vertex);
                let fringe = fringe(tri, &traversed);
                (traversed, fringe)
            })
        };
        for (&id, (traversed, fringe)) in ids.iter().zip(retraced) {
            let ray = &mut self.rays[id as usize];
            ray.traversed = traversed;
            ray.fringe = fringe;
            self.apply(tri, id, 1.0);
        }
    }

    /// Weight every alive cell would carry if all rays were traced from
    /// scratch on the current triangulation, indexed by cell id.
    pub fn scratch_weights(&self, tri: &Triangulation) -> Vec<f64> {
        let mut w = vec![0.0; tri.cell_capacity()];
        let traced = par::map_slice(&self.rays, |r| {
            let traversed = trace(tri, self.centers[r.camera], r.vertex);
            let fringe = fringe(tri, &traversed);
            (traversed, fringe)
        });
        for (traversed, fringe) in traced {
            for c in traversed {
                w[c.index()] += self.cfg.w1;
            }
            for c in fringe {
                w[c.index()] += self.cfg.w2;
            }
        }
        w
    }

    /// Sum of the contributions recorded for all rays.
    pub fn expected_total_weight(&self) -> f64 {
        self.rays
            .iter()
            .map(|r| self.cfg.w1 * r.traversed.len() as f64 + self.cfg.w2 * r.fringe.len() as f64)
            .sum()
    }
}
