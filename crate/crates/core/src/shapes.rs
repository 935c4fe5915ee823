//! Procedural meshes: the bundled humanoid, boxes and test planes.

use crate::actor::Vec3;
use crate::mesh::{NormalOrientation, TriangleMesh};

struct Builder {
    vertices: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
}

impl Builder {
    fn new() -> Self {
        Self {
            vertices: Vec::new(),
            triangles: Vec::new(),
        }
    }

    /// UV ellipsoid with outward winding.
    fn ellipsoid(&mut self, center: Vec3, radii: Vec3, n_lon: usize, n_rings: usize) {
        let base = self.vertices.len();
        let at = |theta: f64, phi: f64| {
            center
                + Vec3::new(
                    radii.x * theta.sin() * phi.cos(),
                    radii.y * theta.sin() * phi.sin(),
                    radii.z * theta.cos(),
                )
        };
        self.vertices.push(at(0.0, 0.0));
        for i in 1..=n_rings {
            let theta = std::f64::consts::PI * i as f64 / (n_rings + 1) as f64;
            for j in 0..n_lon {
                let phi = 2.0 * std::f64::consts::PI * j as f64 / n_lon as f64;
                self.vertices.push(at(theta, phi));
            }
        }
        self.vertices.push(at(std::f64::consts::PI, 0.0));
        let north = base;
        let south = self.vertices.len() - 1;
        let ring = |i: usize, j: usize| base + 1 + i * n_lon + (j % n_lon);
        for j in 0..n_lon {
            self.triangles.push([north, ring(0, j), ring(0, j + 1)]);
        }
        for i in 0..n_rings - 1 {
            for j in 0..n_lon {
                let (a, b, c, d) = (ring(i, j), ring(i + 1, j), ring(i + 1, j + 1), ring(i, j + 1));
                self.triangles.push([a, b, d]);
                self.triangles.push([b, c, d]);
            }
        }
        for j in 0..n_lon {
            self.triangles.push([ring(n_rings - 1, j), south, ring(n_rings - 1, j + 1)]);
        }
    }

    /// Axis-aligned box split into two triangles per face, outward winding.
    fn aabb(&mut self, lo: Vec3, hi: Vec3) {
        let base = self.vertices.len();
        for k in 0..8 {
            self.vertices.push(Vec3::new(
                if k & 1 == 0 { lo.x } else { hi.x },
                if k & 2 == 0 { lo.y } else { hi.y },
                if k & 4 == 0 { lo.z } else { hi.z },
            ));
        }
        let quads = [
            [0, 2, 3, 1], // -z
            [4, 5, 7, 6], // +z
            [0, 1, 5, 4], // -y
            [2, 6, 7, 3], // +y
            [0, 4, 6, 2], // -x
            [1, 3, 7, 5], // +x
        ];
        for q in quads {
            self.triangles.push([base + q[0], base + q[1], base + q[2]]);
            self.triangles.push([base + q[0], base + q[2], base + q[3]]);
        }
    }

    fn build(self) -> TriangleMesh {
        TriangleMesh::new(self.vertices, self.triangles, NormalOrientation::AsStored)
            .expect("procedural mesh is valid")
    }
}

/// Unit cube centered at the origin, 12 outward-facing triangles.
pub fn unit_cube() -> TriangleMesh {
    let mut b = Builder::new();
    b.aabb(Vec3::repeat(-0.5), Vec3::repeat(0.5));
    b.build()
}

/// Box standing on z = 0, centered horizontally on the origin.
/// `width` is along y, `depth` along x.
pub fn box_on_ground(width: f64, depth: f64, height: f64) -> TriangleMesh {
    let mut b = Builder::new();
    b.aabb(
        Vec3::new(-0.5 * depth, -0.5 * width, 0.0),
        Vec3::new(0.5 * depth, 0.5 * width, height),
    );
    b.build()
}

/// Square grid in the plane z = `z`, `n` x `n` cells, normal +z.
pub fn plane_grid(half_extent: f64, n: usize, z: f64) -> TriangleMesh {
    let mut vertices = Vec::new();
    for i in 0..=n {
        for j in 0..=n {
            let x = -half_extent + 2.0 * half_extent * i as f64 / n as f64;
            let y = -half_extent + 2.0 * half_extent * j as f64 / n as f64;
            vertices.push(Vec3::new(x, y, z));
        }
    }
    let idx = |i: usize, j: usize| i * (n + 1) + j;
    let mut triangles = Vec::new();
    for i in 0..n {
        for j in 0..n {
            triangles.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            triangles.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    TriangleMesh::new(vertices, triangles, NormalOrientation::AsStored).expect("valid grid")
}

/// A coarse standing humanoid built from ellipsoids: feet on z = 0, facing +x,
/// about 1.78 m tall, a little over 2k triangles.
pub fn humanoid() -> TriangleMesh {
    let mut b = Builder::new();
    let part = |b: &mut Builder, c: [f64; 3], r: [f64; 3], lon: usize, rings: usize| {
        b.ellipsoid(Vec3::new(c[0], c[1], c[2]), Vec3::new(r[0], r[1], r[2]), lon, rings)
    };
    part(&mut b, [0.0, 0.0, 1.66], [0.10, 0.09, 0.12], 14, 9); // head
    part(&mut b, [0.0, 0.0, 1.22], [0.12, 0.19, 0.28], 20, 12); // torso
    part(&mut b, [0.0, 0.0, 0.92], [0.11, 0.16, 0.12], 14, 9); // pelvis
    part(&mut b, [0.0, 0.25, 1.16], [0.06, 0.06, 0.32], 14, 9); // left arm
    part(&mut b, [0.0, -0.25, 1.16], [0.06, 0.06, 0.32], 14, 9); // right arm
    part(&mut b, [0.0, 0.09, 0.47], [0.08, 0.08, 0.46], 14, 9); // left leg
    part(&mut b, [0.0, -0.09, 0.47], [0.08, 0.08, 0.46], 14, 9); // right leg
    part(&mut b, [0.06, 0.09, 0.04], [0.12, 0.05, 0.04], 10, 5); // left foot
    part(&mut b, [0.06, -0.09, 0.04], [0.12, 0.05, 0.04], 10, 5); // right foot
    b.build()
}

/// Slender vertical post (square cross-section) standing on z = 0.
pub fn pole(side: f64, height: f64) -> TriangleMesh {
    box_on_ground(side, side, height)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cube_is_outward() {
        let c = unit_cube();
        assert_eq!(c.len(), 12);
        for i in 0..c.len() {
            assert!(c.triangle_centroid(i).dot(&c.normals()[i]) > 0.0);
        }
    }

    #[test]
    fn ellipsoid_parts_are_outward() {
        let mut b = Builder::new();
        let center = Vec3::new(1.0, -2.0, 0.5);
        b.ellipsoid(center, Vec3::new(0.3, 0.2, 0.5), 12, 7);
        let m = b.build();
        for i in 0..m.len() {
            assert!((m.triangle_centroid(i) - center).dot(&m.normals()[i]) > 0.0, "tri {i}");
        }
    }

    #[test]
    fn humanoid_size() {
        let h = humanoid();
        assert!(h.len() >= 1000, "{}", h.len());
        let (lo, hi) = h.bounds();
        assert!(lo.z >= -1e-12 && lo.z < 0.01);
        assert!((hi.z - 1.78).abs() < 0.01);
    }
}
