//! Mesh sweeping: per-camera offset hypotheses of the visible facets, scored
//! by Gaussian-weighted NCC against the two nearest cameras.

use std::path::Path;

use crate::camera::CameraView;
use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::image::ImageBuffer;
use crate::io;
use crate::mesh::TriangleMesh;
use crate::par;
use crate::render::{reproject_rendered, visible_triangles, Rendered};

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct SweepConfig {
    /// Sweep step in meters.
    pub alpha: f64,
    /// Offsets run over `-n/2 ..= n/2`.
    pub n: u32,
    /// Gaussian NCC kernel sigma in pixels.
    pub sigma: f64,
    pub t_ncc: f64,
    /// Tile edge in pixels; one match at most per tile.
    pub tile: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            alpha: 0.03,
            n: 20,
            sigma: 8.0,
            t_ncc: 0.98,
            tile: 100,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(self.alpha > 0.0) {
            return Err(format!("alpha must be positive, got {}", self.alpha));
        }
        if self.n < 2 || !self.n.is_multiple_of(2) {
            return Err(format!("N must be even and at least 2, got {}", self.n));
        }
        if !(self.sigma > 0.0) {
            return Err(format!("sigma must be positive, got {}", self.sigma));
        }
        if !(self.t_ncc > 0.0) {
            return Err(format!("t_ncc must be positive, got {}", self.t_ncc));
        }
        if self.tile == 0 {
            return Err("tile size must be positive".into());
        }
        Ok(())
    }

    /// Sweep offsets `k`, ascending.
    pub fn offsets(&self) -> Vec<i32> {
        let h = (self.n / 2) as i32;
        (-h..=h).collect()
    }

    /// NCC window radius in pixels.
    pub fn window_radius(&self) -> usize {
        (2.0 * self.sigma).ceil() as usize
    }
}

/// Facets whose normal makes an angle beyond 85 degrees with the viewing
/// direction are not swept.
pub fn backface_cutoff() -> f64 {
    85f64.to_radians().cos()
}

#[derive(Clone, Debug)]
pub struct SweptMesh {
    pub k: i32,
    /// `alpha * k`, meters.
    pub offset: f64,
    /// Facet soup; triangle `i` comes from base triangle `source[i]`.
    pub mesh: TriangleMesh,
}

#[derive(Clone, Debug)]
pub struct SweptMeshFamily {
    pub camera: usize,
    pub source: Vec<u32>,
    pub members: Vec<SweptMesh>,
}

/// Moves `v` along the camera ray by `offset * |cos theta|`, where theta is
/// the angle between the ray and the facet normal `n`.
#[inline]
pub fn sweep_vertex(center: Point3, v: Point3, n: Point3, offset: f64) -> Point3 {
    let d = (v - center).normalized();
    v + d * (offset * n.dot(d).abs())
}

/// Builds the offset family of the facets of `mesh` visible from `cam`.
pub fn sweep_facets(
    mesh: &TriangleMesh,
    cam: &CameraView,
    camera: usize,
    cfg: &SweepConfig,
) -> SweptMeshFamily {
    let c = cam.center();
    let cutoff = backface_cutoff();
    let source: Vec<u32> = visible_triangles(mesh, cam)
        .into_iter()
        .filter(|&t| {
            let [a, b, cc] = mesh.corners(t as usize);
            let n = mesh.normal(t as usize);
            let d = ((a + b + cc) / 3.0 - c).normalized();
            n.is_finite() && n.dot(d).abs() >= cutoff
        })
        .collect();
    let members = cfg
        .offsets()
        .into_iter()
        .map(|k| {
            let offset = cfg.alpha * k as f64;
            let mut soup = TriangleMesh::default();
            for &t in &source {
                let n = mesh.normal(t as usize);
                let base = soup.vertices.len() as u32;
                for v in mesh.corners(t as usize) {
                    soup.vertices.push(if k == 0 {
                        v
                    } else {
                        sweep_vertex(c, v, n, offset)
                    });
                }
                soup.triangles.push([base, base + 1, base + 2]);
            }
            SweptMesh {
                k,
                offset,
                mesh: soup,
            }
        })
        .collect();
    SweptMeshFamily {
        camera,
        source,
        members,
    }
}

/// The `count` cameras closest to camera `cam`, nearest first, ties to the
/// lower index.
pub fn nearest_cameras(centers: &[Point3], cam: usize, count: usize) -> Result<Vec<usize>> {
    let found = centers.len().saturating_sub(1);
    if found < count {
        return Err(Error::InsufficientCameras {
            camera: cam,
            needed: count,
            found,
        });
    }
    let c = centers[cam];
    let mut others: Vec<(f64, usize)> = centers
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != cam)
        .map(|(i, p)| (p.distance(c), i))
        .collect();
    others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(others.into_iter().take(count).map(|(_, i)| i).collect())
}

/// Per-pixel NCC values with a validity mask.
#[derive(Clone, Debug, PartialEq)]
pub struct NccMap {
    pub width: usize,
    pub height: usize,
    pub value: Vec<f64>,
    pub valid: Vec<bool>,
}

impl NccMap {
    fn invalid(width: usize, height: usize) -> Self {
        NccMap {
            width,
            height,
            value: vec![f64::NAN; width * height],
            valid: vec![false; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        let i = y * self.width + x;
        self.valid[i].then(|| self.value[i])
    }
}

/// Variance below this makes a window unusable.
pub const MIN_VARIANCE: f64 = 1e-12;

fn gaussian(sigma: f64, radius: usize) -> Vec<f64> {
    let r = radius as i64;
    (-r..=r)
        .map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp())
        .collect()
}

/// Separable zero-padded convolution of a `w x h` plane.
fn convolve(plane: &[f64], w: usize, h: usize, g: &[f64]) -> Vec<f64> {
    #[cfg(target_arch = "x86_64")]
    {
        if std::is_x86_feature_detected!("avx2") && std::is_x86_feature_detected!("fma") {
            // SAFETY: the required CPU features were detected above.
            return unsafe { convolve_fma(plane, w, h, g) };
        }
    }
    convolve_with::<false>(plane, w, h, g)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn convolve_fma(plane: &[f64], w: usize, h: usize, g: &[f64]) -> Vec<f64> {
    convolve_with::<true>(plane, w, h, g)
}

#[inline(always)]
fn axpy<const FMA: bool>(dst: &mut [f64], src: &[f64], a: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d = if FMA { s.mul_add(a, *d) } else { *d + a * s };
    }
}

#[inline(always)]
fn convolve_with<const FMA: bool>(plane: &[f64], w: usize, h: usize, g: &[f64]) -> Vec<f64> {
    let r = g.len() / 2;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let src = &plane[y * w..(y + 1) * w];
        let dst = &mut tmp[y * w..(y + 1) * w];
        for (t, &gt) in g.iter().enumerate() {
            // dst[x] += gt * src[x + t - r]
            if t >= r {
                let s = t - r;
                if s < w {
                    axpy::<FMA>(&mut dst[..w - s], &src[s..], gt);
                }
            } else {
                let s = r - t;
                if s < w {
                    axpy::<FMA>(&mut dst[s..], &src[..w - s], gt);
                }
            }
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let dst = &mut out[y * w..(y + 1) * w];
        for (t, &gt) in g.iter().enumerate() {
            let yy = y as i64 + t as i64 - r as i64;
            if yy < 0 || yy >= h as i64 {
                continue;
            }
            let yy = yy as usize;
            axpy::<FMA>(dst, &tmp[yy * w..(yy + 1) * w], gt);
        }
    }
    out
}

/// Zero-mean NCC of `reference` and `test` over Gaussian-weighted windows of
/// radius `ceil(2 sigma)`. Masked pixels carry no weight. A pixel is valid when
/// both inputs are valid there, the window keeps at least half of the kernel
/// mass, and both windows have variance of at least [`MIN_VARIANCE`].
pub fn ncc_image(reference: &ImageBuffer, test: &ImageBuffer, sigma: f64) -> NccMap {
    assert_eq!(
        (reference.width, reference.height),
        (test.width, test.height),
        "NCC inputs must have equal dimensions"
    );
    let (w, h) = (reference.width, reference.height);
    let radius = (2.0 * sigma).ceil() as usize;
    let both = |i: usize| reference.mask[i] && test.mask[i];

    // Region of interest: bounding box of jointly valid pixels.
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    let mut sum = (0.0, 0.0, 0usize);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if both(i) {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x + 1);
                y1 = y1.max(y + 1);
                sum.0 += reference.data[i];
                sum.1 += test.data[i];
                sum.2 += 1;
            }
        }
    }
    let mut out = NccMap::invalid(w, h);
    if sum.2 == 0 {
        return out;
    }
    // Shifting by the global means limits cancellation in the variances.
    let (mi, mj) = (sum.0 / sum.2 as f64, sum.1 / sum.2 as f64);
    let (rw, rh) = (x1 - x0, y1 - y0);
    let g = gaussian(sigma, radius);
    let mass: f64 = g.iter().sum::<f64>().powi(2);

    let planes: Vec<Vec<f64>> = par::map_range(6, |c| {
        let mut p = vec![0.0; rw * rh];
        for y in 0..rh {
            for x in 0..rw {
                let i = (y + y0) * w + x + x0;
                if !both(i) {
                    continue;
                }
                let a = reference.data[i] - mi;
                let b = test.data[i] - mj;
                p[y * rw + x] = match c {
                    0 => 1.0,
                    1 => a,
                    2 => b,
                    3 => a * a,
                    4 => b * b,
                    _ => a * b,
                };
            }
        }
        convolve(&p, rw, rh, &g)
    });
    for y in 0..rh {
        for x in 0..rw {
            let i = (y + y0) * w + x + x0;
            if !both(i) {
                continue;
            }
            let k = y * rw + x;
            let wsum = planes[0][k];
            if wsum < 0.5 * mass {
                continue;
            }
            let ma = planes[1][k] / wsum;
            let mb = planes[2][k] / wsum;
            let va = planes[3][k] / wsum - ma * ma;
            let vb = planes[4][k] / wsum - mb * mb;
            if va < MIN_VARIANCE || vb < MIN_VARIANCE {
                continue;
            }
            let cov = planes[5][k] / wsum - ma * mb;
            out.value[i] = (cov / (va * vb).sqrt()).clamp(-1.0, 1.0);
            out.valid[i] = true;
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatchPoint {
    pub position: Point3,
    pub ncc: f64,
    pub camera: usize,
    pub neighbor: usize,
    pub k: i32,
    /// Pixel in the source camera.
    pub pixel: (usize, usize),
}

/// Best candidate of one tile.
#[derive(Clone, Debug)]
struct TileBest {
    ncc: f64,
    point: MatchPoint,
}

/// Matches for camera `family.camera`: per tile, the pixel with the highest
/// NCC of at least `t_ncc` over every offset and both nearest cameras,
/// back-projected through the winning swept mesh.
pub fn extract_points(
    cameras: &[CameraView],
    images: &[ImageBuffer],
    family: &SweptMeshFamily,
    cfg: &SweepConfig,
    diagnostics: Option<&Path>,
) -> Result<Vec<MatchPoint>> {
    let ci = family.camera;
    let cam = &cameras[ci];
    let centers: Vec<Point3> = cameras.iter().map(|c| c.center()).collect();
    let neighbors = nearest_cameras(&centers, ci, 2)?;
    let (w, h) = (cam.width, cam.height);
    let (ncols, nrows) = (w.div_ceil(cfg.tile), h.div_ceil(cfg.tile));
    let tiles = ncols * nrows;

    let per_member = par::map_slice(&family.members, |member| -> Result<Vec<Option<TileBest>>> {
        let mut best: Vec<Option<TileBest>> = vec![None; tiles];
        if member.mesh.is_empty() {
            return Ok(best);
        }
        let src = Rendered::new(&member.mesh, cam);
        for &nk in &neighbors {
            let dst = Rendered::new(&member.mesh, &cameras[nk]);
            let warped = reproject_rendered(&src, &dst, &images[nk]);
            let ncc = ncc_image(&images[ci], &warped, cfg.sigma);
            if let Some(dir) = diagnostics {
                let name = format!("ncc_cam{ci:03}_k{:+03}_nb{nk:03}.pfm", member.k);
                let values: Vec<f32> = ncc
                    .value
                    .iter()
                    .zip(&ncc.valid)
                    .map(|(&v, &ok)| if ok { v as f32 } else { f32::NAN })
                    .collect();
                io::write_pfm(&dir.join(name), w, h, &values)?;
            }
            for y in 0..h {
                for x in 0..w {
                    let Some(v) = ncc.get(x, y) else { continue };
                    if v < cfg.t_ncc {
                        continue;
                    }
                    let t = (y / cfg.tile) * ncols + x / cfg.tile;
                    if best[t].as_ref().is_some_and(|b| b.ncc >= v) {
                        continue;
                    }
                    let Some((position, _)) = src.surface_point(x, y) else {
                        continue;
                    };
                    best[t] = Some(TileBest {
                        ncc: v,
                        point: MatchPoint {
                            position,
                            ncc: v,
                            camera: ci,
                            neighbor: nk,
                            k: member.k,
                            pixel: (x, y),
                        },
                    });
                }
            }
        }
        Ok(best)
    });

    let mut merged: Vec<Option<TileBest>> = vec![None; tiles];
    for member in per_member {
        for (slot, cand) in merged.iter_mut().zip(member?) {
            if let Some(c) = cand {
                if slot.as_ref().is_none_or(|s| c.ncc > s.ncc) {
                    *slot = Some(c);
                }
            }
        }
    }
    Ok(merged.into_iter().flatten().map(|b| b.point).collect())
}
