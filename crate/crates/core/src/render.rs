//! CPU z-buffer rasterizer, mesh-induced image reprojection and procedural
//! textures.
//!
//! Pixel `(x, y)` is sampled at `(x + 0.5, y + 0.5)`. Pixels on an edge shared
//! by two triangles belong to exactly one of them. Depth is the camera-frame z
//! coordinate, interpolated as `1/z` across screen space.

use nalgebra::{Matrix3, Vector3};

use crate::camera::CameraView;
use crate::geometry::Point3;
use crate::image::ImageBuffer;
use crate::mesh::TriangleMesh;
use crate::par;

/// Marks pixels no triangle covers.
pub const NO_TRIANGLE: u32 = u32::MAX;

/// Geometry closer than this to the camera plane is clipped away.
pub const NEAR_PLANE: f64 = 1e-4;

/// Relative depth slack of the occlusion test in the target camera.
pub const OCCLUSION_TOLERANCE: f64 = 1e-4;

const BAND_ROWS: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f64>,
    pub valid: Vec<bool>,
    /// Winning triangle per pixel, [`NO_TRIANGLE`] where uncovered or unknown.
    pub triangle: Vec<u32>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize) -> Self {
        DepthMap {
            width,
            height,
            depth: vec![0.0; width * height],
            valid: vec![false; width * height],
            triangle: vec![NO_TRIANGLE; width * height],
        }
    }

    /// A depth map without triangle ids; non-positive or non-finite depths are
    /// invalid.
    pub fn from_depths(width: usize, height: usize, depth: Vec<f64>) -> Self {
        assert_eq!(depth.len(), width * height);
        let valid: Vec<bool> = depth.iter().map(|d| d.is_finite() && *d > 0.0).collect();
        let depth = depth
            .iter()
            .zip(&valid)
            .map(|(&d, &ok)| if ok { d } else { 0.0 })
            .collect();
        DepthMap {
            width,
            height,
            depth,
            valid,
            triangle: vec![NO_TRIANGLE; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        let i = y * self.width + x;
        self.valid[i].then(|| self.depth[i])
    }

    #[inline]
    pub fn triangle_at(&self, x: usize, y: usize) -> Option<u32> {
        let t = self.triangle[y * self.width + x];
        (t != NO_TRIANGLE).then_some(t)
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

/// A triangle after clipping and projection.
#[derive(Clone, Copy, Debug)]
struct ScreenTriangle {
    id: u32,
    p: [(f64, f64); 3],
    inv_z: [f64; 3],
    x0: usize,
    x1: usize,
    y0: usize,
    y1: usize,
}

fn clip_near(poly: &[Point3]) -> Vec<Point3> {
    let mut out = Vec::with_capacity(4);
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let ina = a.z >= NEAR_PLANE;
        let inb = b.z >= NEAR_PLANE;
        if ina {
            out.push(a);
        }
        if ina != inb {
            let t = (NEAR_PLANE - a.z) / (b.z - a.z);
            let mut q = a.lerp(b, t);
            q.z = NEAR_PLANE;
            out.push(q);
        }
    }
    out
}

fn screen_triangles(mesh: &TriangleMesh, cam: &CameraView) -> Vec<ScreenTriangle> {
    let (w, h) = (cam.width, cam.height);
    let per_tri = par::map_range(mesh.triangles.len(), |t| {
        let corners = mesh.corners(t).map(|p| cam.to_camera(p));
        let poly = if corners.iter().all(|c| c.z >= NEAR_PLANE) {
            corners.to_vec()
        } else {
            clip_near(&corners)
        };
        let mut out = Vec::new();
        if poly.len() < 3 {
            return out;
        }
        let screen: Vec<((f64, f64), f64)> = poly
            .iter()
            .map(|&c| (cam.camera_to_pixel(c), 1.0 / c.z))
            .collect();
        for k in 1..screen.len() - 1 {
            let (a, b, c) = (screen[0], screen[k], screen[k + 1]);
            let mut p = [a.0, b.0, c.0];
            let mut iz = [a.1, b.1, c.1];
            let area = edge(p[0], p[1], p[2]);
            if !(area.abs() > 0.0) || !area.is_finite() {
                continue;
            }
            if area < 0.0 {
                p.swap(1, 2);
                iz.swap(1, 2);
            }
            let umin = p.iter().map(|q| q.0).fold(f64::INFINITY, f64::min);
            let umax = p.iter().map(|q| q.0).fold(f64::NEG_INFINITY, f64::max);
            let vmin = p.iter().map(|q| q.1).fold(f64::INFINITY, f64::min);
            let vmax = p.iter().map(|q| q.1).fold(f64::NEG_INFINITY, f64::max);
            // Pixel x covers centre x + 0.5.
            let x0 = (umin - 0.5).ceil().max(0.0);
            let x1 = ((umax - 0.5).floor() + 1.0).min(w as f64);
            let y0 = (vmin - 0.5).ceil().max(0.0);
            let y1 = ((vmax - 0.5).floor() + 1.0).min(h as f64);
            if !(x0 < x1 && y0 < y1) {
                continue;
            }
            out.push(ScreenTriangle {
                id: t as u32,
                p,
                inv_z: iz,
                x0: x0 as usize,
                x1: x1 as usize,
                y0: y0 as usize,
                y1: y1 as usize,
            });
        }
        out
    });
    per_tri.into_iter().flatten().collect()
}

#[inline]
fn edge(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> f64 {
    (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0)
}

/// Whether a pixel exactly on edge `a -> b` belongs to this triangle.
#[inline]
fn owns_edge(a: (f64, f64), b: (f64, f64)) -> bool {
    let dy = b.1 - a.1;
    dy > 0.0 || (dy == 0.0 && b.0 < a.0)
}

fn rasterize_band(
    tris: &[ScreenTriangle],
    ids: &[u32],
    width: usize,
    y_start: usize,
    depth: &mut [f64],
    winner: &mut [u32],
) {
    let rows = depth.len() / width;
    let y_end = y_start + rows;
    for &k in ids {
        let st = &tris[k as usize];
        let [a, b, c] = st.p;
        let area = edge(a, b, c);
        let own = [owns_edge(b, c), owns_edge(c, a), owns_edge(a, b)];
        let pairs = [(b, c), (c, a), (a, b)];
        for y in st.y0.max(y_start)..st.y1.min(y_end) {
            let py = y as f64 + 0.5;
            let row = (y - y_start) * width;
            for x in st.x0..st.x1 {
                let p = (x as f64 + 0.5, py);
                let mut lam = [0.0; 3];
                let mut inside = true;
                for e in 0..3 {
                    let v = edge(pairs[e].0, pairs[e].1, p);
                    if v < 0.0 || (v == 0.0 && !own[e]) {
                        inside = false;
                        break;
                    }
                    lam[e] = v;
                }
                if !inside {
                    continue;
                }
                let iz =
                    (lam[0] * st.inv_z[0] + lam[1] * st.inv_z[1] + lam[2] * st.inv_z[2]) / area;
                let z = 1.0 / iz;
                let i = row + x;
                // Equal depths keep the lower triangle id.
                if z < depth[i] || (z == depth[i] && st.id < winner[i]) {
                    depth[i] = z;
                    winner[i] = st.id;
                }
            }
        }
    }
}

/// Nearest-surface depth and triangle id per pixel.
pub fn rasterize_depth(mesh: &TriangleMesh, cam: &CameraView) -> DepthMap {
    let (w, h) = (cam.width, cam.height);
    let tris = screen_triangles(mesh, cam);
    let bands = h.div_ceil(BAND_ROWS);
    let mut bins: Vec<Vec<u32>> = vec![Vec::new(); bands];
    for (k, st) in tris.iter().enumerate() {
        for bin in &mut bins[st.y0 / BAND_ROWS..=(st.y1 - 1) / BAND_ROWS] {
            bin.push(k as u32);
        }
    }
    let mut buf: Vec<(f64, u32)> = vec![(f64::INFINITY, NO_TRIANGLE); w * h];
    par::for_each_chunk_mut(&mut buf, BAND_ROWS * w, |band, chunk| {
        let mut depth: Vec<f64> = chunk.iter().map(|c| c.0).collect();
        let mut winner: Vec<u32> = chunk.iter().map(|c| c.1).collect();
        rasterize_band(
            &tris,
            &bins[band],
            w,
            band * BAND_ROWS,
            &mut depth,
            &mut winner,
        );
        for (c, (d, t)) in chunk.iter_mut().zip(depth.into_iter().zip(winner)) {
            *c = (d, t);
        }
    });
    let mut out = DepthMap::new(w, h);
    for (i, (d, t)) in buf.into_iter().enumerate() {
        if t != NO_TRIANGLE {
            out.depth[i] = d;
            out.valid[i] = true;
            out.triangle[i] = t;
        }
    }
    out
}

/// Ids of triangles that win at least one pixel, ascending.
pub fn visible_triangles(mesh: &TriangleMesh, cam: &CameraView) -> Vec<u32> {
    let depth = rasterize_depth(mesh, cam);
    let mut seen = vec![false; mesh.triangles.len()];
    for &t in &depth.triangle {
        if t != NO_TRIANGLE {
            seen[t as usize] = true;
        }
    }
    (0..mesh.triangles.len() as u32)
        .filter(|&t| seen[t as usize])
        .collect()
}

/// A mesh rasterized into one camera, with per-triangle planes for exact
/// surface lookups.
pub struct Rendered<'a> {
    pub mesh: &'a TriangleMesh,
    pub camera: &'a CameraView,
    pub depth: DepthMap,
    /// Per triangle `(g, e)`: the camera depth of its plane at pixel position
    /// `p` is `e / (g . (p, 1))`.
    planes: Vec<(Vector3<f64>, f64)>,
}

impl<'a> Rendered<'a> {
    pub fn new(mesh: &'a TriangleMesh, camera: &'a CameraView) -> Self {
        let depth = rasterize_depth(mesh, camera);
        let to_pixel = camera.inverse_intrinsics().transpose() * camera.rotation();
        let c = camera.center();
        let planes = (0..mesh.triangles.len())
            .map(|t| {
                let [a, b, cc] = mesh.corners(t);
                let n = (b - a).cross(cc - a);
                let g = to_pixel * Vector3::new(n.x, n.y, n.z);
                (g, n.dot(a) - n.dot(c))
            })
            .collect();
        Rendered {
            mesh,
            camera,
            depth,
            planes,
        }
    }

    /// Camera depth where the ray through `(u, v)` meets triangle `t`'s plane.
    #[inline]
    pub fn depth_on_triangle(&self, t: u32, u: f64, v: f64) -> Option<f64> {
        let (g, e) = &self.planes[t as usize];
        let s = e / (g.x * u + g.y * v + g.z);
        (s.is_finite() && s > 0.0).then_some(s)
    }

    /// The visible surface point at pixel `(x, y)` and its triangle.
    #[inline]
    pub fn surface_point(&self, x: usize, y: usize) -> Option<(Point3, u32)> {
        let t = self.depth.triangle_at(x, y)?;
        let (u, v) = (x as f64 + 0.5, y as f64 + 0.5);
        let s = self
            .depth_on_triangle(t, u, v)
            .unwrap_or(self.depth.depth[y * self.depth.width + x]);
        Some((self.camera.unproject(u, v, s), t))
    }

    /// Whether a point projecting to `(u, v)` at depth `z` is not hidden
    /// behind the surface visible there.
    #[inline]
    pub fn sees(&self, u: f64, v: f64, z: f64) -> bool {
        let (x, y) = (u.floor() as usize, v.floor() as usize);
        let Some(t) = self.depth.triangle_at(x, y) else {
            return false;
        };
        match self.depth_on_triangle(t, u, v) {
            Some(z_occ) => z <= z_occ * (1.0 + OCCLUSION_TOLERANCE),
            None => true,
        }
    }

    /// For each triangle, the homography taking pixel positions of this
    /// camera, through the triangle's plane, to homogeneous coordinates of
    /// `other` scaled by `1 / depth` here.
    fn transfer(&self, other: &CameraView) -> Vec<Matrix3<f64>> {
        let back = self.camera.rotation().transpose() * self.camera.inverse_intrinsics();
        let kr = other.intrinsics() * other.rotation();
        let dc = self.camera.center() - other.center();
        let dc = Vector3::new(dc.x, dc.y, dc.z);
        self.planes
            .iter()
            .map(|(g, e)| kr * (dc * g.transpose() / *e + back))
            .collect()
    }
}

/// Image of `cam_k` warped into `cam_c` through the mesh. Pixels are invalid
/// where the mesh is missed, the surface point is occluded from or behind
/// `cam_k`, or the bilinear footprint leaves the valid part of `image_k`.
pub fn reproject(
    mesh: &TriangleMesh,
    cam_c: &CameraView,
    cam_k: &CameraView,
    image_k: &ImageBuffer,
) -> ImageBuffer {
    let src = Rendered::new(mesh, cam_c);
    let dst = Rendered::new(mesh, cam_k);
    reproject_rendered(&src, &dst, image_k)
}

/// As [`reproject`], on meshes already rasterized into both cameras.
pub fn reproject_rendered(src: &Rendered, dst: &Rendered, image_k: &ImageBuffer) -> ImageBuffer {
    let (w, h) = (src.camera.width, src.camera.height);
    let cam_k = dst.camera;
    let transfer = src.transfer(cam_k);
    let mut img = ImageBuffer::new(w, h);
    let mut px: Vec<(f64, bool)> = vec![(0.0, false); w * h];
    par::for_each_chunk_mut(&mut px, w, |y, row| {
        let v = y as f64 + 0.5;
        for (x, out) in row.iter_mut().enumerate() {
            let Some(t) = src.depth.triangle_at(x, y) else {
                continue;
            };
            let u = x as f64 + 0.5;
            let Some(s) = src.depth_on_triangle(t, u, v) else {
                continue;
            };
            let q = transfer[t as usize] * Vector3::new(u, v, 1.0);
            let z = q.z * s;
            if !(z > 0.0) {
                continue;
            }
            let (uk, vk) = (q.x / q.z, q.y / q.z);
            if !cam_k.in_raster(uk, vk) || !dst.sees(uk, vk, z) {
                continue;
            }
            if let Some(val) = image_k.sample_bilinear(uk, vk) {
                *out = (val, true);
            }
        }
    });
    for (i, (v, ok)) in px.into_iter().enumerate() {
        img.data[i] = v;
        img.mask[i] = ok;
    }
    img
}

/// Surface intensity in `[0, 1]` as a function of position.
pub trait Texture: Sync {
    fn intensity(&self, triangle: u32, p: Point3) -> f64;
}

#[derive(Copy, Clone, Debug)]
pub struct Constant(pub f64);

impl Texture for Constant {
    fn intensity(&self, _: u32, _: Point3) -> f64 {
        self.0
    }
}

/// Checkerboard in the world x-y plane.
#[derive(Copy, Clone, Debug)]
pub struct Checker {
    pub size: f64,
    pub dark: f64,
    pub light: f64,
}

impl Texture for Checker {
    fn intensity(&self, _: u32, p: Point3) -> f64 {
        let i = (p.x / self.size).floor() as i64 + (p.y / self.size).floor() as i64;
        if i.rem_euclid(2) == 0 {
            self.dark
        } else {
            self.light
        }
    }
}

/// Seeded 3D value noise: a coarse lattice plus a half-spacing octave,
/// contrast-stretched into `[0.05, 0.95]`.
#[derive(Copy, Clone, Debug)]
pub struct ValueNoise {
    pub seed: u64,
    pub spacing: f64,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl ValueNoise {
    fn lattice(&self, octave: u64, i: i64, j: i64, k: i64) -> f64 {
        let mut h = splitmix(self.seed ^ octave.wrapping_mul(0xA24B_AED4_963E_E407));
        for c in [i, j, k] {
            h = splitmix(h ^ c as u64);
        }
        (h >> 11) as f64 / (1u64 << 53) as f64
    }

    fn octave(&self, octave: u64, spacing: f64, p: Point3) -> f64 {
        let s = |t: f64| t * t * (3.0 - 2.0 * t);
        let (fx, fy, fz) = (p.x / spacing, p.y / spacing, p.z / spacing);
        let (ix, iy, iz) = (fx.floor(), fy.floor(), fz.floor());
        let (tx, ty, tz) = (s(fx - ix), s(fy - iy), s(fz - iz));
        let (ix, iy, iz) = (ix as i64, iy as i64, iz as i64);
        let mut acc = 0.0;
        for (dz, wz) in [(0, 1.0 - tz), (1, tz)] {
            for (dy, wy) in [(0, 1.0 - ty), (1, ty)] {
                for (dx, wx) in [(0, 1.0 - tx), (1, tx)] {
                    acc += wx * wy * wz * self.lattice(octave, ix + dx, iy + dy, iz + dz);
                }
            }
        }
        acc
    }
}

impl Texture for ValueNoise {
    fn intensity(&self, _: u32, p: Point3) -> f64 {
        let n =
            (self.octave(0, self.spacing, p) + 0.5 * self.octave(1, 0.5 * self.spacing, p)) / 1.5;
        (0.5 + 2.5 * (n - 0.5)).clamp(0.05, 0.95)
    }
}

/// Renders the textured mesh; uncovered pixels are masked out.
pub fn render_textured(
    mesh: &TriangleMesh,
    texture: &dyn Texture,
    cam: &CameraView,
) -> ImageBuffer {
    let r = Rendered::new(mesh, cam);
    let (w, h) = (cam.width, cam.height);
    let rows = par::map_range(h, |y| {
        (0..w)
            .map(|x| r.surface_point(x, y).map(|(p, t)| texture.intensity(t, p)))
            .collect::<Vec<_>>()
    });
    let mut img = ImageBuffer::new(w, h);
    for (i, v) in rows.into_iter().flatten().enumerate() {
        if let Some(v) = v {
            img.data[i] = v;
            img.mask[i] = true;
        }
    }
    img
}
