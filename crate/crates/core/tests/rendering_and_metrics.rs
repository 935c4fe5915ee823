use ppaview::camera::{backproject, CameraFrame};
use ppaview::eval::{chamfer_distance, triangle_coverage, triangle_coverage_from_view};
use ppaview::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn closest_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    // Ericson, region tests on the barycentric coordinates
    let (ab, ac, ap) = (b - a, c - a, p - a);
    let (d1, d2) = (ab.dot(&ap), ac.dot(&ap));
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let (d3, d4) = (ab.dot(&bp), ac.dot(&bp));
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let (d5, d6) = (ab.dot(&cp), ac.dot(&cp));
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

fn distance_to_mesh(p: &Vec3, mesh: &TriangleMesh) -> f64 {
    (0..mesh.len())
        .map(|i| {
            let [a, b, c] = mesh.triangle(i);
            (p - closest_on_triangle(p, &a, &b, &c)).norm()
        })
        .fold(f64::INFINITY, f64::min)
}

fn ray_hit(origin: &Vec3, dir: &Vec3, tri: [Vec3; 3]) -> Option<f64> {
    let (e1, e2) = (tri[1] - tri[0], tri[2] - tri[0]);
    let h = dir.cross(&e2);
    let a = e1.dot(&h);
    if a.abs() < 1e-14 {
        return None;
    }
    let s = origin - tri[0];
    let u = s.dot(&h) / a;
    let q = s.cross(&e1);
    let v = dir.dot(&q) / a;
    let t = e2.dot(&q) / a;
    (u >= -1e-9 && v >= -1e-9 && u + v <= 1.0 + 1e-9 && t > 0.0).then_some(t)
}

fn tilted_cube() -> TriangleMesh {
    let cube = shapes::unit_cube();
    let r = nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(Vec3::new(1.0, 2.0, 0.5)), 0.7);
    let vs = cube.vertices().iter().map(|v| r * v + Vec3::new(0.0, 0.0, 1.0)).collect();
    TriangleMesh::new(vs, cube.triangles().to_vec(), NormalOrientation::AsStored).unwrap()
}

#[test]
fn backprojected_points_lie_on_a_convex_mesh() {
    let mesh = tilted_cube();
    let intr = CameraIntrinsics::new(160, 120, 70.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..8 {
        let az: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let cam = Vec3::new(3.0 * az.cos(), 3.0 * az.sin(), rng.random_range(0.5..3.0));
        let view = render(&mesh, &CameraPose::look_at(cam, Vec3::new(0.0, 0.0, 1.0)), &intr);
        let cloud = backproject(&view);
        assert!(cloud.len() > 100);
        for p in &cloud.points {
            assert!(distance_to_mesh(p, &mesh) < 1e-3);
        }
    }
}

#[test]
fn depth_test_keeps_the_nearer_triangle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let intr = CameraIntrinsics::new(64, 48, 60.0).unwrap();
    for _ in 0..20 {
        let mut vs = Vec::new();
        for _ in 0..2 {
            let z = rng.random_range(-1.0..1.0);
            for _ in 0..3 {
                vs.push(Vec3::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5), z + rng.random_range(-0.5..0.5)));
            }
        }
        let Ok(mesh) = TriangleMesh::new(vs, vec![[0, 1, 2], [3, 4, 5]], NormalOrientation::AsStored) else {
            continue;
        };
        let pose = CameraPose::look_at(Vec3::new(0.3, -0.2, 5.0), Vec3::zeros());
        let view = render(&mesh, &pose, &intr);
        let frame = CameraFrame::new(&pose);
        for v in 0..intr.height {
            for u in 0..intr.width {
                let Some(id) = view.id_at(u, v) else { continue };
                let dir = frame.ray(&intr, u as f64 + 0.5, v as f64 + 0.5).normalize();
                let hits = [ray_hit(&frame.origin, &dir, mesh.triangle(0)), ray_hit(&frame.origin, &dir, mesh.triangle(1))];
                let winner = hits[id as usize].expect("winning triangle is hit by its pixel ray");
                if let Some(other) = hits[1 - id as usize] {
                    // both hit: the winner is strictly nearer up to rasterization round-off
                    assert!(winner < other + 1e-9, "pixel ({u},{v}): {winner} vs {other}");
                }
            }
        }
    }
}

#[test]
fn pixel_counts_scale_with_image_area() {
    // an unoccluded grid of well-shaped triangles seen obliquely
    let mesh = shapes::plane_grid(1.0, 8, 0.0);
    let pose = CameraPose::look_at(Vec3::new(1.5, 0.7, 1.8), Vec3::zeros());
    let low = CameraIntrinsics::new(320, 240, 60.0).unwrap();
    let a = render(&mesh, &pose, &low).pixel_counts(mesh.len());
    let b = render(&mesh, &pose, &low.with_resolution(640, 480)).pixel_counts(mesh.len());
    let mut checked = 0;
    for (x, y) in a.iter().zip(&b) {
        if *x >= 50 {
            let ratio = *y as f64 / *x as f64;
            assert!((ratio - 4.0).abs() <= 0.4, "ratio {ratio}");
            checked += 1;
        }
    }
    assert!(checked > 50, "{checked}");
}

#[test]
fn coverage_is_a_ratio_and_counts_pixels() {
    let mesh = shapes::humanoid();
    let intr = CameraIntrinsics::new(320, 240, 60.0).unwrap();
    let view = render(&mesh, &CameraPose::look_at(Vec3::new(2.5, 0.5, 1.2), Vec3::new(0.0, 0.0, 0.9)), &intr);
    let r = triangle_coverage_from_view(&view, &mesh, 0.01).unwrap();
    assert!((0.0..=1.0).contains(&r.coverage_ratio));
    assert!(r.pixels_per_triangle >= 1.0);
    assert_eq!(r.total_triangles, mesh.len());
}

#[test]
fn chamfer_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = PointCloud::new(shapes::humanoid().sample_surface(400, &mut rng));
    assert_eq!(chamfer_distance(&x, &x).unwrap().mean_mm, 0.0);
    let a = PointCloud::new(vec![Vec3::zeros()]);
    let b = PointCloud::new(vec![Vec3::new(0.0, 0.001, 0.0)]);
    assert!((chamfer_distance(&a, &b).unwrap().mean_mm - 1.0).abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn coverage_never_drops_when_points_are_added(seed in 0u64..10_000, n in 1usize..300, extra in 1usize..100) {
        let mesh = shapes::humanoid();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pts: Vec<Vec3> = mesh
            .sample_surface(n, &mut rng)
            .into_iter()
            .map(|p| p + Vec3::new(rng.random_range(-0.01..0.01), rng.random_range(-0.01..0.01), rng.random_range(-0.01..0.01)))
            .collect();
        let before = triangle_coverage(&PointCloud::new(pts.clone()), &mesh, 0.01).unwrap();
        pts.extend(mesh.sample_surface(extra, &mut rng));
        let after = triangle_coverage(&PointCloud::new(pts), &mesh, 0.01).unwrap();
        prop_assert!(after.coverage_ratio >= before.coverage_ratio);
    }
}
