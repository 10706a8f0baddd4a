mod common;

use std::collections::BTreeSet;

use common::{plane_homography, point_triangle_distance, raycast_depth};
use meshsweep::geometry::Point3;
use meshsweep::image::ImageBuffer;
use meshsweep::mesh::TriangleMesh;
use meshsweep::render::{
    rasterize_depth, render_textured, reproject, visible_triangles, Checker, Constant, Rendered,
    ValueNoise,
};
use meshsweep::CameraView;
use nalgebra::Vector3;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn p(x: f64, y: f64, z: f64) -> Point3 {
    Point3::new(x, y, z)
}

fn look(from: Point3, at: Point3, w: usize, h: usize) -> CameraView {
    let f = 0.9 * w as f64;
    CameraView::look_at(
        from,
        at,
        p(0.0, 1.0, 0.0),
        f,
        (w as f64 / 2.0, h as f64 / 2.0),
        w,
        h,
    )
    .unwrap()
}

/// Axis-aligned square `[-s, s]^2` at height `z`.
fn square(s: f64, z: f64) -> TriangleMesh {
    TriangleMesh::new(
        vec![p(-s, -s, z), p(s, -s, z), p(s, s, z), p(-s, s, z)],
        vec![[0, 1, 2], [0, 2, 3]],
    )
}

fn cube() -> TriangleMesh {
    let v: Vec<Point3> = (0..8)
        .map(|i| {
            p(
                (i & 1) as f64 - 0.5,
                ((i >> 1) & 1) as f64 - 0.5,
                ((i >> 2) & 1) as f64 - 0.5,
            )
        })
        .collect();
    let quads = [
        [0, 2, 3, 1],
        [4, 5, 7, 6],
        [0, 1, 5, 4],
        [2, 6, 7, 3],
        [0, 4, 6, 2],
        [1, 3, 7, 5],
    ];
    let t = quads
        .iter()
        .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
        .collect();
    TriangleMesh::new(v, t)
}

fn random_soup(rng: &mut ChaCha8Rng, n: usize) -> TriangleMesh {
    let mut v = Vec::new();
    let mut t = Vec::new();
    for i in 0..n {
        let c = common::random_point(rng, 0.8);
        for _ in 0..3 {
            v.push(c + common::random_point(rng, 0.5));
        }
        t.push([3 * i as u32, 3 * i as u32 + 1, 3 * i as u32 + 2]);
    }
    TriangleMesh::new(v, t)
}

/// Nearest triangle hit by the pixel-centre ray, by brute force.
fn raycast_triangle(mesh: &TriangleMesh, cam: &CameraView, x: usize, y: usize) -> Option<u32> {
    let d = raycast_depth(mesh, cam, x, y)?;
    let hit = cam.unproject(x as f64 + 0.5, y as f64 + 0.5, d);
    (0..mesh.triangles.len())
        .map(|t| (t, point_triangle_distance(hit, mesh.corners(t))))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(t, _)| t as u32)
}

#[test]
fn rasterized_depth_matches_ray_cast() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for round in 0..6 {
        let mesh = if round == 0 {
            cube()
        } else {
            random_soup(&mut rng, 25)
        };
        let from = common::random_point(&mut rng, 1.0).normalized() * 3.5;
        let cam = look(from, common::random_point(&mut rng, 0.2), 160, 120);
        let dm = rasterize_depth(&mesh, &cam);
        let (mut both, mut close, mut coverage_diff) = (0, 0, 0);
        for y in 0..cam.height {
            for x in 0..cam.width {
                match (dm.get(x, y), raycast_depth(&mesh, &cam, x, y)) {
                    (Some(a), Some(b)) => {
                        both += 1;
                        close += ((a - b).abs() <= 1e-6) as usize;
                    }
                    (None, None) => {}
                    _ => coverage_diff += 1,
                }
            }
        }
        assert!(both > 1000, "round {round}: fixture must cover the view");
        assert!(
            close as f64 >= 0.999 * both as f64,
            "round {round}: {close}/{both}"
        );
        assert!(
            coverage_diff as f64 <= 0.001 * both as f64,
            "round {round}: {coverage_diff} coverage differences"
        );
    }
}

#[test]
fn cube_visible_faces_match_ray_cast() {
    let mesh = cube();
    for from in [p(2.0, 1.5, 3.0), p(-3.0, 0.4, -1.0), p(0.2, -3.0, 0.3)] {
        let cam = look(from, Point3::ZERO, 200, 150);
        let got: BTreeSet<u32> = visible_triangles(&mesh, &cam).into_iter().collect();
        let mut want = BTreeSet::new();
        for y in 0..cam.height {
            for x in 0..cam.width {
                want.extend(raycast_triangle(&mesh, &cam, x, y));
            }
        }
        assert_eq!(got, want);
        // Only faces turned toward the camera can win.
        for &t in &got {
            let [a, ..] = mesh.corners(t as usize);
            let n = (mesh.corners(t as usize)[1] - a).cross(mesh.corners(t as usize)[2] - a);
            assert!(n.dot(from - a) > 0.0, "back face {t} visible from {from:?}");
        }
    }
}

#[test]
fn occluded_triangle_is_not_visible() {
    let mut mesh = square(0.2, 1.0);
    let far = square(0.1, 2.0);
    mesh.vertices.extend(far.vertices);
    mesh.triangles.extend([[4, 5, 6], [4, 6, 7]]);
    let cam = look(p(0.0, 0.0, 0.0), p(0.0, 0.0, 1.0), 100, 100);
    assert_eq!(visible_triangles(&mesh, &cam), vec![0, 1]);
}

/// Bilinear sample with all four taps required inside and valid.
fn bilinear_oracle(img: &ImageBuffer, u: f64, v: f64) -> Option<f64> {
    let (x, y) = (u - 0.5, v - 0.5);
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let tap = |dx: i64, dy: i64| {
        let (xi, yi) = (x0 as i64 + dx, y0 as i64 + dy);
        if xi < 0 || yi < 0 || xi >= img.width as i64 || yi >= img.height as i64 {
            return None;
        }
        img.get(xi as usize, yi as usize)
    };
    let taps = [tap(0, 0), tap(1, 0), tap(0, 1), tap(1, 1)];
    let weights = [
        (1.0 - fx) * (1.0 - fy),
        fx * (1.0 - fy),
        (1.0 - fx) * fy,
        fx * fy,
    ];
    let mut acc = 0.0;
    for (t, w) in taps.into_iter().zip(weights) {
        if w != 0.0 {
            acc += w * t?;
        }
    }
    Some(acc)
}

#[test]
fn plane_reprojection_matches_homography_warp() {
    let mesh = square(1.0, 0.0);
    let texture = ValueNoise {
        seed: 3,
        spacing: 0.05,
    };
    let pairs = [
        (p(0.3, -0.2, 3.0), p(-0.6, 0.4, 2.8)),
        (p(0.0, 0.0, 2.5), p(1.2, 0.0, 2.2)),
        (p(-1.0, -1.0, 2.0), p(-0.8, -1.2, 2.1)),
    ];
    for (a, b) in pairs {
        let cam_c = look(a, Point3::ZERO, 160, 120);
        let cam_k = look(b, p(0.1, 0.0, 0.0), 160, 120);
        let image_k = render_textured(&mesh, &texture, &cam_k);
        let warped = reproject(&mesh, &cam_c, &cam_k, &image_k);
        let h = plane_homography(&cam_c, &cam_k, p(0.0, 0.0, 1.0), 0.0);
        let (mut valid, mut oracle_valid) = (0, 0);
        for y in 0..cam_c.height {
            for x in 0..cam_c.width {
                let q = h * Vector3::new(x as f64 + 0.5, y as f64 + 0.5, 1.0);
                let on_plane = raycast_depth(&mesh, &cam_c, x, y).is_some();
                let want = if on_plane {
                    bilinear_oracle(&image_k, q.x / q.z, q.y / q.z)
                } else {
                    None
                };
                oracle_valid += want.is_some() as usize;
                let Some(got) = warped.get(x, y) else {
                    continue;
                };
                valid += 1;
                let want = want
                    .unwrap_or_else(|| panic!("pixel ({x}, {y}) valid without a valid footprint"));
                assert!(
                    (got - want).abs() < 1e-3,
                    "pixel ({x}, {y}): {got} vs {want}"
                );
            }
        }
        assert!(valid > 5000);
        assert!(
            valid as f64 >= 0.99 * oracle_valid as f64,
            "{valid} of {oracle_valid}"
        );
    }
}

#[test]
fn reprojection_to_the_same_camera_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mesh = random_soup(&mut rng, 20);
    let cam = look(p(0.5, 0.5, 3.0), Point3::ZERO, 120, 90);
    let img = render_textured(
        &mesh,
        &ValueNoise {
            seed: 1,
            spacing: 0.1,
        },
        &cam,
    );
    let out = reproject(&mesh, &cam, &cam, &img);
    let mut n = 0;
    for y in 0..cam.height {
        for x in 0..cam.width {
            if let Some(v) = out.get(x, y) {
                n += 1;
                assert_eq!(Some(v), img.get(x, y), "pixel ({x}, {y})");
            }
        }
    }
    // Integer alignment: every covered pixel survives.
    assert_eq!(n, img.valid_count());
}

#[test]
fn occluded_surface_points_are_masked() {
    // Ground plane plus a raised occluder that shadows part of the ground as
    // seen from cam_k but is seen edge-on from above by cam_c.
    let ground = square(1.0, 0.0);
    let lid = (0.3, 0.5);
    let mut mesh = ground.clone();
    mesh.vertices.extend(square(lid.0, lid.1).vertices);
    mesh.triangles.extend([[4, 5, 6], [4, 6, 7]]);
    let cam_c = look(p(0.0, -0.05, 3.0), Point3::ZERO, 160, 120);
    let cam_k = look(p(1.5, 0.0, 2.2), Point3::ZERO, 160, 120);
    let image_k = render_textured(&mesh, &Constant(0.5), &cam_k);
    let warped = reproject(&mesh, &cam_c, &cam_k, &image_k);
    let mut shadowed = 0;
    for y in 0..cam_c.height {
        for x in 0..cam_c.width {
            let Some(d) = raycast_depth(&mesh, &cam_c, x, y) else {
                continue;
            };
            let surface = cam_c.unproject(x as f64 + 0.5, y as f64 + 0.5, d);
            if surface.z > 0.25 {
                continue;
            }
            // Where the segment to cam_k crosses the lid's plane.
            let t = (lid.1 - surface.z) / (cam_k.center().z - surface.z);
            let hit = surface.lerp(cam_k.center(), t);
            let margin = 0.03;
            if hit.x.abs() < lid.0 - margin && hit.y.abs() < lid.0 - margin {
                shadowed += 1;
                assert!(
                    warped.get(x, y).is_none(),
                    "shadowed pixel ({x}, {y}) is valid"
                );
            }
        }
    }
    assert!(
        shadowed > 200,
        "fixture must shadow some ground: {shadowed}"
    );
}

#[test]
fn checker_texture_matches_analytic_lookup() {
    let mesh = square(1.0, 0.0);
    let checker = Checker {
        size: 0.125,
        dark: 0.2,
        light: 0.8,
    };
    let cam = look(p(0.4, -0.3, 2.5), p(0.1, 0.0, 0.0), 200, 150);
    let img = render_textured(&mesh, &checker, &cam);
    let mut checked = 0;
    for y in 0..cam.height {
        for x in 0..cam.width {
            let (u, v) = (x as f64 + 0.5, y as f64 + 0.5);
            let dir = cam.pixel_ray(u, v);
            let s = -cam.center().z / dir.z;
            let hit = cam.center() + dir * s;
            let inside = hit.x.abs() < 1.0 && hit.y.abs() < 1.0;
            let (fx, fy) = (hit.x / checker.size, hit.y / checker.size);
            let near_line = |f: f64| (f - f.round()).abs() < 1e-6;
            if near_line(fx) || near_line(fy) || near_line(hit.x) || near_line(hit.y) {
                continue;
            }
            if !inside {
                assert!(img.get(x, y).is_none());
                continue;
            }
            let parity = (fx.floor() as i64 + fy.floor() as i64).rem_euclid(2);
            let want = if parity == 0 {
                checker.dark
            } else {
                checker.light
            };
            assert_eq!(img.get(x, y), Some(want), "pixel ({x}, {y})");
            checked += 1;
        }
    }
    assert!(checked > 10_000);
}

#[test]
fn constant_texture_is_flat_and_rendering_is_deterministic() {
    let mesh = cube();
    let cam = look(p(2.0, 1.0, 2.5), Point3::ZERO, 120, 90);
    let img = render_textured(&mesh, &Constant(0.37), &cam);
    assert!(img.valid_count() > 1000);
    for y in 0..cam.height {
        for x in 0..cam.width {
            assert!(img.get(x, y).is_none_or(|v| v == 0.37));
        }
    }
    let noise = ValueNoise {
        seed: 42,
        spacing: 0.05,
    };
    let a = render_textured(&mesh, &noise, &cam);
    let b = render_textured(&mesh, &noise, &cam);
    assert_eq!(
        a.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        b.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
    assert_eq!(a.mask, b.mask);
    assert_eq!(rasterize_depth(&mesh, &cam), rasterize_depth(&mesh, &cam));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn reprojection_never_reads_outside_valid_samples(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mesh = random_soup(&mut rng, 12);
        let cam_c = look(common::random_point(&mut rng, 1.0).normalized() * 3.0, Point3::ZERO, 64, 48);
        let cam_k = look(common::random_point(&mut rng, 1.0).normalized() * 3.0, Point3::ZERO, 64, 48);
        let mut image_k = render_textured(&mesh, &ValueNoise { seed, spacing: 0.1 }, &cam_k);
        // Punch random holes in the mask.
        for _ in 0..200 {
            let i = rng.random_range(0..image_k.mask.len());
            image_k.mask[i] = false;
        }
        let warped = reproject(&mesh, &cam_c, &cam_k, &image_k);
        let src = Rendered::new(&mesh, &cam_c);
        for y in 0..cam_c.height {
            for x in 0..cam_c.width {
                if warped.get(x, y).is_none() {
                    continue;
                }
                let hit = src.surface_point(x, y);
                prop_assert!(hit.is_some(), "valid pixel ({}, {}) misses the mesh", x, y);
                let pr = cam_k.project(hit.unwrap().0);
                prop_assert!(pr.is_some());
                let pr = pr.unwrap();
                prop_assert!(bilinear_oracle(&image_k, pr.u, pr.v).is_some(), "pixel ({}, {}) reads an invalid sample", x, y);
            }
        }
    }
}
