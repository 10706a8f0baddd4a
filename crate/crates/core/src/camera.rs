//! Pinhole camera model without distortion.
//!
//! World points map to camera coordinates as `R (X - C)`; pixel coordinates
//! follow the top-left convention in which integer pixel `(i, j)` covers
//! `[i, i + 1) x [j, j + 1)` and is sampled at its centre `(i + 0.5, j + 0.5)`.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::Point3;

/// Projection of a point in front of the camera.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    /// Depth along the camera z axis, meters.
    pub depth: f64,
}

/// A calibrated view: intrinsics, world-to-camera rotation, center and raster size.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraView {
    intrinsics: Matrix3<f64>,
    inv_intrinsics: Matrix3<f64>,
    rotation: Matrix3<f64>,
    center: Point3,
    pub width: usize,
    pub height: usize,
}

const ORTHONORMAL_TOL: f64 = 1e-9;

impl CameraView {
    /// Builds a camera from row-major `K` and `R` (world to camera).
    pub fn new(
        intrinsics: [f64; 9],
        rotation: [f64; 9],
        center: Point3,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let k = Matrix3::from_row_slice(&intrinsics);
        let r = Matrix3::from_row_slice(&rotation);
        if width == 0 || height == 0 {
            return Err(Error::DegenerateInput(format!(
                "camera raster must be non-empty, got {width}x{height}"
            )));
        }
        if !(k[(0, 0)] > 0.0 && k[(1, 1)] > 0.0) {
            return Err(Error::DegenerateInput(
                "camera focal lengths must be positive".into(),
            ));
        }
        if k[(1, 0)] != 0.0 || k[(2, 0)] != 0.0 || k[(2, 1)] != 0.0 || k[(2, 2)] != 1.0 {
            return Err(Error::DegenerateInput(
                "intrinsics must be upper triangular with K[2][2] = 1".into(),
            ));
        }
        let rrt = r * r.transpose();
        if (rrt - Matrix3::identity()).amax() > ORTHONORMAL_TOL || r.determinant() <= 0.0 {
            return Err(Error::DegenerateInput(
                "rotation must be a proper orthonormal matrix".into(),
            ));
        }
        if !center.is_finite() || k.iter().chain(r.iter()).any(|v| !v.is_finite()) {
            return Err(Error::DegenerateInput(
                "camera parameters must be finite".into(),
            ));
        }
        let inv_intrinsics = k
            .try_inverse()
            .ok_or_else(|| Error::DegenerateInput("singular intrinsics".into()))?;
        Ok(CameraView {
            intrinsics: k,
            inv_intrinsics,
            rotation: r,
            center,
            width,
            height,
        })
    }

    /// Camera at `center` looking at `target`; `up` fixes the roll (image rows
    /// grow against it). Square pixels, principal point `(cx, cy)`.
    pub fn look_at(
        center: Point3,
        target: Point3,
        up: Point3,
        focal: f64,
        principal: (f64, f64),
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let forward = (target - center).normalized();
        let right = forward.cross(up).normalized();
        if right.norm() < 0.5 {
            return Err(Error::DegenerateInput(
                "up vector parallel to view direction".into(),
            ));
        }
        let down = forward.cross(right);
        let r = [
            right.x, right.y, right.z, down.x, down.y, down.z, forward.x, forward.y, forward.z,
        ];
        let k = [
            focal,
            0.0,
            principal.0,
            0.0,
            focal,
            principal.1,
            0.0,
            0.0,
            1.0,
        ];
        CameraView::new(k, r, center, width, height)
    }

    pub fn center(&self) -> Point3 {
        self.center
    }

    pub fn intrinsics_row_major(&self) -> [f64; 9] {
        row_major(&self.intrinsics)
    }

    pub fn rotation_row_major(&self) -> [f64; 9] {
        row_major(&self.rotation)
    }

    /// Focal lengths `(fx, fy)`.
    pub fn focal(&self) -> (f64, f64) {
        (self.intrinsics[(0, 0)], self.intrinsics[(1, 1)])
    }

    pub fn intrinsics(&self) -> &Matrix3<f64> {
        &self.intrinsics
    }

    pub fn inverse_intrinsics(&self) -> &Matrix3<f64> {
        &self.inv_intrinsics
    }

    /// World-to-camera rotation.
    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    /// World point in camera coordinates.
    #[inline]
    pub fn to_camera(&self, p: Point3) -> Point3 {
        let d = Vector3::new(
            p.x - self.center.x,
            p.y - self.center.y,
            p.z - self.center.z,
        );
        let c = self.rotation * d;
        Point3::new(c.x, c.y, c.z)
    }

    /// Pixel coordinates of a camera-frame point with positive depth.
    #[inline]
    pub fn camera_to_pixel(&self, c: Point3) -> (f64, f64) {
        let k = &self.intrinsics;
        let x = c.x / c.z;
        let y = c.y / c.z;
        (
            k[(0, 0)] * x + k[(0, 1)] * y + k[(0, 2)],
            k[(1, 1)] * y + k[(1, 2)],
        )
    }

    /// Projects `p`; `None` when the point is on or behind the camera plane.
    #[inline]
    pub fn project(&self, p: Point3) -> Option<Projection> {
        let c = self.to_camera(p);
        if !(c.z > 0.0) {
            return None;
        }
        let (u, v) = self.camera_to_pixel(c);
        Some(Projection { u, v, depth: c.z })
    }

    /// World direction through pixel position `(u, v)` scaled so its camera-z
    /// component is 1: the point at depth `t` is `center + t * dir`.
    #[inline]
    pub fn depth_ray(&self, u: f64, v: f64) -> Point3 {
        let c = self.inv_intrinsics * Vector3::new(u, v, 1.0);
        let w = self.rotation.tr_mul(&c);
        Point3::new(w.x, w.y, w.z)
    }

    /// Unit world-frame direction of the viewing ray through `(u, v)`.
    #[inline]
    pub fn pixel_ray(&self, u: f64, v: f64) -> Point3 {
        self.depth_ray(u, v).normalized()
    }

    /// World point seen at pixel position `(u, v)` with camera depth `depth`.
    #[inline]
    pub fn unproject(&self, u: f64, v: f64, depth: f64) -> Point3 {
        self.center + self.depth_ray(u, v) * depth
    }

    /// Viewing direction (camera +z) in world coordinates.
    pub fn forward(&self) -> Point3 {
        let r = &self.rotation;
        Point3::new(r[(2, 0)], r[(2, 1)], r[(2, 2)])
    }

    /// Whether the pixel position lies inside the raster.
    #[inline]
    pub fn in_raster(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64
    }
}

fn row_major(m: &Matrix3<f64>) -> [f64; 9] {
    [
        m[(0, 0)],
        m[(0, 1)],
        m[(0, 2)],
        m[(1, 0)],
        m[(1, 1)],
        m[(1, 2)],
        m[(2, 0)],
        m[(2, 1)],
        m[(2, 2)],
    ]
}
