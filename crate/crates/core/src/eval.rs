//! Depth-map comparison of a reconstructed mesh against ground truth.

use serde::{Deserialize, Serialize};

use crate::camera::CameraView;
use crate::mesh::TriangleMesh;
use crate::render::{rasterize_depth, DepthMap};

/// Default sigma of the cumulative error curve, meters.
pub const DEFAULT_SIGMA: f64 = 0.06;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    /// Mean absolute depth error (m); `None` when no pixel is valid in both maps.
    pub mae: Option<f64>,
    /// Mean of error divided by ground-truth depth.
    pub mre: Option<f64>,
    pub rms: Option<f64>,
    /// `cumulative[m - 1]`: share of ground-truth pixels with error below
    /// `m * sigma`, for m = 1..=10.
    pub cumulative: Vec<f64>,
    pub valid_fraction: f64,
    pub sigma: f64,
    pub n_vertices: usize,
    pub n_triangles: usize,
}

/// Statistics of `depth` against `gt` over pixels valid in both. Missing
/// reconstruction pixels count only against the cumulative curve.
pub fn compare_depth_maps(depth: &DepthMap, gt: &DepthMap, sigma: f64) -> ErrorReport {
    assert_eq!((depth.width, depth.height), (gt.width, gt.height));
    let mut errors = Vec::new();
    let mut rel = 0.0;
    let mut gt_valid = 0usize;
    for i in 0..gt.depth.len() {
        if !gt.valid[i] {
            continue;
        }
        gt_valid += 1;
        if depth.valid[i] {
            let e = (depth.depth[i] - gt.depth[i]).abs();
            rel += e / gt.depth[i];
            errors.push(e);
        }
    }
    let n = errors.len();
    let (mae, mre, rms) = if n == 0 {
        (None, None, None)
    } else {
        let nf = n as f64;
        let mae = errors.iter().sum::<f64>() / nf;
        let rms = (errors.iter().map(|e| e * e).sum::<f64>() / nf).sqrt();
        (Some(mae), Some(rel / nf), Some(rms))
    };
    let cumulative = (1..=10)
        .map(|m| {
            if gt_valid == 0 {
                return 0.0;
            }
            let bound = m as f64 * sigma;
            errors.iter().filter(|&&e| e < bound).count() as f64 / gt_valid as f64
        })
        .collect();
    ErrorReport {
        mae,
        mre,
        rms,
        cumulative,
        valid_fraction: if gt_valid == 0 {
            0.0
        } else {
            n as f64 / gt_valid as f64
        },
        sigma,
        n_vertices: 0,
        n_triangles: 0,
    }
}

/// Renders `mesh` from `cam` and compares it with `gt`.
pub fn compare_depth(
    mesh: &TriangleMesh,
    gt: &DepthMap,
    cam: &CameraView,
    sigma: f64,
) -> ErrorReport {
    assert_eq!((gt.width, gt.height), (cam.width, cam.height));
    let depth = rasterize_depth(mesh, cam);
    let mut r = compare_depth_maps(&depth, gt, sigma);
    r.n_vertices = mesh.vertices.len();
    r.n_triangles = mesh.triangles.len();
    r
}
