//! Scene files (calibrated cameras, images, sparse points with visibility) and
//! the synthetic pyramid generator.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::camera::CameraView;
use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::image::ImageBuffer;
use crate::io;
use crate::mesh::TriangleMesh;
use crate::par;
use crate::render::{rasterize_depth, render_textured, DepthMap, ValueNoise};

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub mesh: TriangleMesh,
    /// Depth of `mesh` seen from each camera.
    pub depth: Vec<DepthMap>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub cameras: Vec<CameraView>,
    pub images: Vec<ImageBuffer>,
    pub points: Vec<Point3>,
    /// For each point, the cameras that observed it.
    pub visibility: Vec<Vec<usize>>,
    pub ground_truth: Option<GroundTruth>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    cameras: Vec<CameraEntry>,
    points: Vec<PointEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ground_truth_mesh: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
struct CameraEntry {
    K: [f64; 9],
    R: [f64; 9],
    C: [f64; 3],
    image: String,
    width: usize,
    height: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PointEntry {
    xyz: [f64; 3],
    cams: Vec<usize>,
}

impl Scene {
    pub fn camera_centers(&self) -> Vec<Point3> {
        self.cameras.iter().map(|c| c.center()).collect()
    }

    /// Checks visibility indices and image dimensions. `path` only labels
    /// errors.
    pub fn validate(&self, path: &Path) -> Result<()> {
        if self.images.len() != self.cameras.len() {
            return Err(Error::invalid(
                path,
                "cameras",
                "every camera needs an image",
            ));
        }
        for (i, (cam, img)) in self.cameras.iter().zip(&self.images).enumerate() {
            if (cam.width, cam.height) != (img.width, img.height) {
                return Err(Error::invalid(
                    path,
                    format!("cameras[{i}].image"),
                    format!(
                        "image is {}x{} but the camera declares {}x{}",
                        img.width, img.height, cam.width, cam.height
                    ),
                ));
            }
        }
        if self.visibility.len() != self.points.len() {
            return Err(Error::invalid(
                path,
                "points",
                "visibility list count mismatch",
            ));
        }
        for (i, (p, cams)) in self.points.iter().zip(&self.visibility).enumerate() {
            if !p.is_finite() {
                return Err(Error::invalid(
                    path,
                    format!("points[{i}].xyz"),
                    "non-finite coordinate",
                ));
            }
            if let Some(&c) = cams.iter().find(|&&c| c >= self.cameras.len()) {
                return Err(Error::invalid(
                    path,
                    format!("points[{i}].cams"),
                    format!("point {i} references camera {c} of {}", self.cameras.len()),
                ));
            }
        }
        Ok(())
    }

    /// Total number of viewing rays.
    pub fn ray_count(&self) -> usize {
        self.visibility.iter().map(Vec::len).sum()
    }
}

fn image_name(i: usize) -> String {
    format!("cam_{i:03}.png")
}

pub const GROUND_TRUTH_MESH: &str = "gt.ply";

fn gt_depth_name(i: usize) -> String {
    format!("gt_depth_{i:03}.pfm")
}

/// Loads and validates `scene.json`; image and mesh paths are relative to its
/// directory. Ground-truth depth maps are rendered from the mesh.
pub fn load_scene(path: &Path) -> Result<Scene> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: SceneFile =
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let resolve = |p: &str| -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            dir.join(p)
        }
    };
    let mut cameras = Vec::with_capacity(file.cameras.len());
    let mut images = Vec::with_capacity(file.cameras.len());
    for (i, c) in file.cameras.iter().enumerate() {
        let cam =
            CameraView::new(c.K, c.R, Point3::from_array(c.C), c.width, c.height).map_err(|e| {
                let msg = match e {
                    Error::DegenerateInput(m) => m,
                    other => other.to_string(),
                };
                Error::invalid(path, format!("cameras[{i}]"), msg)
            })?;
        cameras.push(cam);
        images.push(ImageBuffer::load(&resolve(&c.image))?);
    }
    let scene_gt = match &file.ground_truth_mesh {
        Some(p) => {
            let mesh = io::read_ply(&resolve(p))?;
            let depth = par::map_slice(&cameras, |c| rasterize_depth(&mesh, c));
            Some(GroundTruth { mesh, depth })
        }
        None => None,
    };
    let scene = Scene {
        cameras,
        images,
        points: file
            .points
            .iter()
            .map(|p| Point3::from_array(p.xyz))
            .collect(),
        visibility: file.points.into_iter().map(|p| p.cams).collect(),
        ground_truth: scene_gt,
    };
    scene.validate(path)?;
    Ok(scene)
}

/// Writes `scene.json`, one PNG per camera and, with ground truth, the mesh
/// and per-camera depth maps. Returns the path of `scene.json`.
pub fn save_scene(scene: &Scene, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut cameras = Vec::new();
    for (i, (cam, img)) in scene.cameras.iter().zip(&scene.images).enumerate() {
        let name = image_name(i);
        img.save(&dir.join(&name))?;
        cameras.push(CameraEntry {
            K: cam.intrinsics_row_major(),
            R: cam.rotation_row_major(),
            C: cam.center().to_array(),
            image: name,
            width: cam.width,
            height: cam.height,
        });
    }
    let mut ground_truth_mesh = None;
    if let Some(gt) = &scene.ground_truth {
        io::write_ply(&dir.join(GROUND_TRUTH_MESH), &gt.mesh)?;
        for (i, d) in gt.depth.iter().enumerate() {
            io::write_depth_pfm(&dir.join(gt_depth_name(i)), d)?;
        }
        ground_truth_mesh = Some(GROUND_TRUTH_MESH.to_string());
    }
    let file = SceneFile {
        cameras,
        points: scene
            .points
            .iter()
            .zip(&scene.visibility)
            .map(|(p, cams)| PointEntry {
                xyz: p.to_array(),
                cams: cams.clone(),
            })
            .collect(),
        ground_truth_mesh,
    };
    let path = dir.join("scene.json");
    let json = serde_json::to_string_pretty(&file).expect("scene serializes");
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum PyramidVariant {
    /// Apex below the base, away from the cameras.
    Downward,
    /// Apex above the base, toward the cameras.
    Upward,
}

impl std::str::FromStr for PyramidVariant {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "downward" => Ok(PyramidVariant::Downward),
            "upward" => Ok(PyramidVariant::Upward),
            _ => Err(format!(
                "unknown pyramid variant '{s}' (expected downward or upward)"
            )),
        }
    }
}

pub const PYRAMID_HALF_BASE: f64 = 1.0;
pub const PYRAMID_HEIGHT: f64 = 0.3;
pub const RIG_RADIUS: f64 = 3.0;
pub const RIG_ARC_DEGREES: f64 = 60.0;
/// Texture lattice spacing in meters at 640 pixels of image width, about
/// five pixels at the default rig. Other resolutions scale it to keep the
/// feature size in pixels.
pub const TEXTURE_SPACING: f64 = 0.028;

/// Texture spacing for images `width` pixels wide.
pub fn texture_spacing(width: usize) -> f64 {
    TEXTURE_SPACING * 640.0 / width as f64
}

/// The four base corners, counter-clockwise seen from +z.
pub fn pyramid_base() -> [Point3; 4] {
    let h = PYRAMID_HALF_BASE;
    [
        Point3::new(-h, -h, 0.0),
        Point3::new(h, -h, 0.0),
        Point3::new(h, h, 0.0),
        Point3::new(-h, h, 0.0),
    ]
}

/// The four lateral faces (no base), normals pointing to +z.
pub fn pyramid_mesh(variant: PyramidVariant) -> TriangleMesh {
    let z = match variant {
        PyramidVariant::Downward => -PYRAMID_HEIGHT,
        PyramidVariant::Upward => PYRAMID_HEIGHT,
    };
    let mut vertices = pyramid_base().to_vec();
    vertices.push(Point3::new(0.0, 0.0, z));
    TriangleMesh::new(vertices, (0..4).map(|i| [i, (i + 1) % 4, 4]).collect())
}

/// Cameras on an arc in the x-z plane around the pyramid centroid, all looking
/// at it with world +y as image up. The focal length leaves a margin around
/// the projected pyramid in every view.
pub fn pyramid_rig(
    variant: PyramidVariant,
    n_cameras: usize,
    width: usize,
    height: usize,
) -> Result<Vec<CameraView>> {
    if n_cameras < 3 {
        return Err(Error::DegenerateInput(format!(
            "need at least 3 cameras, got {n_cameras}"
        )));
    }
    let mesh = pyramid_mesh(variant);
    let target = Point3::new(0.0, 0.0, mesh.vertices[4].z / 4.0);
    let principal = (width as f64 / 2.0, height as f64 / 2.0);
    let half_arc = RIG_ARC_DEGREES.to_radians() / 2.0;
    let centers: Vec<Point3> = (0..n_cameras)
        .map(|i| {
            let t = -half_arc + 2.0 * half_arc * i as f64 / (n_cameras - 1) as f64;
            target + Point3::new(t.sin(), 0.0, t.cos()) * RIG_RADIUS
        })
        .collect();
    let up = Point3::new(0.0, 1.0, 0.0);
    // Largest focal length keeping every vertex in every raster.
    let mut bound = f64::INFINITY;
    for &c in &centers {
        let unit = CameraView::look_at(c, target, up, 1.0, (0.0, 0.0), width, height)?;
        for &v in &mesh.vertices {
            let q = unit.to_camera(v);
            let (x, y) = ((q.x / q.z).abs(), (q.y / q.z).abs());
            if x > 0.0 {
                bound = bound.min(principal.0 / x);
            }
            if y > 0.0 {
                bound = bound.min(principal.1 / y);
            }
        }
    }
    let focal = 0.9 * bound;
    centers
        .into_iter()
        .map(|c| CameraView::look_at(c, target, up, focal, principal, width, height))
        .collect()
}

/// A synthetic pyramid scene: rendered value-noise images, the four base
/// corners as sparse points seen by every camera, and ground truth.
pub fn generate_pyramid(
    variant: PyramidVariant,
    n_cameras: usize,
    width: usize,
    height: usize,
    seed: u64,
) -> Result<Scene> {
    let cameras = pyramid_rig(variant, n_cameras, width, height)?;
    let mesh = pyramid_mesh(variant);
    let texture = ValueNoise {
        seed,
        spacing: texture_spacing(width),
    };
    let images = par::map_slice(&cameras, |c| {
        let mut img = render_textured(&mesh, &texture, c);
        img.quantize_8bit();
        img
    });
    let depth = par::map_slice(&cameras, |c| rasterize_depth(&mesh, c));
    let all: Vec<usize> = (0..n_cameras).collect();
    Ok(Scene {
        cameras,
        images,
        points: pyramid_base().to_vec(),
        visibility: vec![all; 4],
        ground_truth: Some(GroundTruth { mesh, depth }),
    })
}
