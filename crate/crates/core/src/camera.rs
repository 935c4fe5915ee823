//! Pinhole camera model and a z-buffered software rasterizer producing depth
//! and per-pixel triangle ids.
//!
//! Conventions: image u grows to the right, v grows downward, pixel centers
//! sit at half-integer coordinates and the principal point is the image
//! center. Roll is fixed by taking world +z (or +x when looking straight up
//! or down) as the up reference. Depth is measured along the optical axis.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::actor::Vec3;
use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;
use crate::ppa::CameraPose;

const NEAR_PLANE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub width: usize,
    pub height: usize,
    pub fov_horizontal_deg: f64,
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        Self {
            width: 320,
            height: 240,
            fov_horizontal_deg: 90.0,
        }
    }
}

impl CameraIntrinsics {
    pub fn new(width: usize, height: usize, fov_horizontal_deg: f64) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Argument(format!("resolution {width}x{height} must be positive")));
        }
        if !(fov_horizontal_deg > 0.0 && fov_horizontal_deg < 180.0) {
            return Err(Error::Argument(format!(
                "horizontal field of view {fov_horizontal_deg} must lie in (0, 180) degrees"
            )));
        }
        Ok(Self {
            width,
            height,
            fov_horizontal_deg,
        })
    }

    /// Focal length in pixels.
    pub fn focal(&self) -> f64 {
        0.5 * self.width as f64 / (0.5 * self.fov_horizontal_deg.to_radians()).tan()
    }

    pub fn fov_vertical_deg(&self) -> f64 {
        2.0 * (0.5 * self.height as f64 / self.focal()).atan().to_degrees()
    }

    pub fn principal_point(&self) -> (f64, f64) {
        (0.5 * self.width as f64, 0.5 * self.height as f64)
    }

    pub fn with_resolution(&self, width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            ..*self
        }
    }

    /// Whether a world point projects inside the image, in front of the camera.
    pub fn in_frustum(&self, camera: &CameraPose, p: &Vec3) -> bool {
        let c = CameraFrame::new(camera).to_camera(p);
        if c.z <= 0.0 {
            return false;
        }
        let f = self.focal();
        c.x.abs() * f <= 0.5 * self.width as f64 * c.z && c.y.abs() * f <= 0.5 * self.height as f64 * c.z
    }
}

/// Orthonormal camera basis derived from a pose.
#[derive(Debug, Clone, Copy)]
pub struct CameraFrame {
    pub origin: Vec3,
    pub forward: Vec3,
    pub right: Vec3,
    pub up: Vec3,
}

impl CameraFrame {
    pub fn new(pose: &CameraPose) -> Self {
        let forward = pose.view_dir;
        let mut right = forward.cross(&Vec3::z());
        if right.norm() < 1e-9 {
            right = forward.cross(&Vec3::x());
        }
        let right = right.normalize();
        let up = right.cross(&forward);
        Self {
            origin: pose.position,
            forward,
            right,
            up,
        }
    }

    /// World point to camera coordinates (x right, y down, z forward).
    pub fn to_camera(&self, p: &Vec3) -> Vec3 {
        let d = p - self.origin;
        Vec3::new(d.dot(&self.right), -d.dot(&self.up), d.dot(&self.forward))
    }

    pub fn to_world(&self, c: &Vec3) -> Vec3 {
        self.origin + self.right * c.x - self.up * c.y + self.forward * c.z
    }

    /// World-frame direction (not normalized, unit forward component) of the
    /// ray through image point (u, v).
    pub fn ray(&self, intr: &CameraIntrinsics, u: f64, v: f64) -> Vec3 {
        let (cx, cy) = intr.principal_point();
        let f = intr.focal();
        self.forward + self.right * ((u - cx) / f) - self.up * ((v - cy) / f)
    }
}

/// Depth image (+inf for background) and triangle-id map from one render.
#[derive(Debug, Clone)]
pub struct RenderedView {
    pub depth: Vec<f64>,
    pub triangle_id: Vec<Option<u32>>,
    pub pose: CameraPose,
    pub intrinsics: CameraIntrinsics,
}

impl RenderedView {
    pub fn index(&self, u: usize, v: usize) -> usize {
        v * self.intrinsics.width + u
    }

    pub fn depth_at(&self, u: usize, v: usize) -> f64 {
        self.depth[self.index(u, v)]
    }

    pub fn id_at(&self, u: usize, v: usize) -> Option<u32> {
        self.triangle_id[self.index(u, v)]
    }

    pub fn foreground_pixels(&self) -> usize {
        self.triangle_id.iter().filter(|t| t.is_some()).count()
    }

    /// Pixel count per triangle id (length = `n_triangles`).
    pub fn pixel_counts(&self, n_triangles: usize) -> Vec<usize> {
        let mut counts = vec![0; n_triangles];
        for id in self.triangle_id.iter().flatten() {
            counts[*id as usize] += 1;
        }
        counts
    }

    /// Adds zero-mean Gaussian noise to every foreground depth, keeping it positive.
    pub fn add_depth_noise<R: Rng>(&mut self, std: f64, rng: &mut R) -> Result<()> {
        let normal = Normal::new(0.0, std).map_err(|e| Error::Argument(e.to_string()))?;
        for (d, id) in self.depth.iter_mut().zip(&self.triangle_id) {
            if id.is_some() {
                *d = (*d + normal.sample(rng)).max(NEAR_PLANE);
            }
        }
        Ok(())
    }

    /// 16-bit binary PGM, millimeter depth, background = 0.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n65535\n", self.intrinsics.width, self.intrinsics.height).into_bytes();
        for d in &self.depth {
            let mm = if d.is_finite() { (d * 1000.0).round().clamp(0.0, 65535.0) as u16 } else { 0 };
            out.extend_from_slice(&mm.to_be_bytes());
        }
        out
    }

    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_pgm()).map_err(|e| Error::io(path, e))
    }
}

/// Rasterizes every triangle of `mesh` with a z-buffer. Triangles are drawn
/// in index order and a pixel is only replaced by a strictly nearer surface,
/// so at equal depth the lower triangle index wins.
pub fn render(mesh: &TriangleMesh, pose: &CameraPose, intr: &CameraIntrinsics) -> RenderedView {
    let (w, h) = (intr.width, intr.height);
    let mut depth = vec![f64::INFINITY; w * h];
    let mut ids = vec![None; w * h];
    let frame = CameraFrame::new(pose);
    let f = intr.focal();
    let (cx, cy) = intr.principal_point();
    let cam: Vec<Vec3> = mesh.vertices().iter().map(|v| frame.to_camera(v)).collect();

    let mut poly: Vec<Vec3> = Vec::with_capacity(4);
    for (tid, tri) in mesh.triangles().iter().enumerate() {
        clip_near(&[cam[tri[0]], cam[tri[1]], cam[tri[2]]], &mut poly);
        if poly.len() < 3 {
            continue;
        }
        let screen: Vec<(f64, f64, f64)> = poly
            .iter()
            .map(|c| (cx + f * c.x / c.z, cy + f * c.y / c.z, 1.0 / c.z))
            .collect();
        for k in 1..screen.len() - 1 {
            raster_triangle(
                [screen[0], screen[k], screen[k + 1]],
                tid as u32,
                w,
                h,
                &mut depth,
                &mut ids,
            );
        }
    }
    RenderedView {
        depth,
        triangle_id: ids,
        pose: *pose,
        intrinsics: *intr,
    }
}

/// Sutherland-Hodgman against z >= NEAR_PLANE.
fn clip_near(tri: &[Vec3; 3], out: &mut Vec<Vec3>) {
    out.clear();
    for i in 0..3 {
        let a = tri[i];
        let b = tri[(i + 1) % 3];
        let a_in = a.z >= NEAR_PLANE;
        let b_in = b.z >= NEAR_PLANE;
        if a_in {
            out.push(a);
        }
        if a_in != b_in {
            let t = (NEAR_PLANE - a.z) / (b.z - a.z);
            out.push(a + (b - a) * t);
        }
    }
}

fn edge(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> f64 {
    (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0)
}

fn raster_triangle(
    s: [(f64, f64, f64); 3],
    id: u32,
    w: usize,
    h: usize,
    depth: &mut [f64],
    ids: &mut [Option<u32>],
) {
    let p = [(s[0].0, s[0].1), (s[1].0, s[1].1), (s[2].0, s[2].1)];
    let area = edge(p[0], p[1], p[2]);
    if area.abs() < 1e-14 || !area.is_finite() {
        return;
    }
    let min_u = p.iter().map(|q| q.0).fold(f64::INFINITY, f64::min);
    let max_u = p.iter().map(|q| q.0).fold(f64::NEG_INFINITY, f64::max);
    let min_v = p.iter().map(|q| q.1).fold(f64::INFINITY, f64::min);
    let max_v = p.iter().map(|q| q.1).fold(f64::NEG_INFINITY, f64::max);
    let u0 = (min_u - 0.5).ceil().max(0.0);
    let u1 = (max_u - 0.5).floor().min(w as f64 - 1.0);
    let v0 = (min_v - 0.5).ceil().max(0.0);
    let v1 = (max_v - 0.5).floor().min(h as f64 - 1.0);
    if u0 > u1 || v0 > v1 {
        return;
    }
    let inv_area = 1.0 / area;
    for py in v0 as usize..=v1 as usize {
        let yc = py as f64 + 0.5;
        for px in u0 as usize..=u1 as usize {
            let q = (px as f64 + 0.5, yc);
            let w0 = edge(p[1], p[2], q) * inv_area;
            let w1 = edge(p[2], p[0], q) * inv_area;
            let w2 = edge(p[0], p[1], q) * inv_area;
            if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                continue;
            }
            // 1/z is affine in screen space
            let inv_z = w0 * s[0].2 + w1 * s[1].2 + w2 * s[2].2;
            let z = 1.0 / inv_z;
            let idx = py * w + px;
            if z < depth[idx] {
                depth[idx] = z;
                ids[idx] = Some(id);
            }
        }
    }
}

/// World-frame point per foreground pixel, in row-major pixel order.
pub fn backproject(view: &RenderedView) -> PointCloud {
    backproject_with_ids(view).0
}

/// Like [`backproject`], also returning the triangle id under each point.
pub fn backproject_with_ids(view: &RenderedView) -> (PointCloud, Vec<u32>) {
    let frame = CameraFrame::new(&view.pose);
    let mut points = Vec::new();
    let mut ids = Vec::new();
    for v in 0..view.intrinsics.height {
        for u in 0..view.intrinsics.width {
            let i = view.index(u, v);
            if let Some(id) = view.triangle_id[i] {
                let ray = frame.ray(&view.intrinsics, u as f64 + 0.5, v as f64 + 0.5);
                points.push(frame.origin + ray * view.depth[i]);
                ids.push(id);
            }
        }
    }
    (PointCloud::new(points), ids)
}

/// Poses on spheres around `actor_pos`, all looking at it, upper hemisphere
/// only. Polar angles (from +z) are `(k + 1) / polar_steps * 90 deg`, azimuths
/// `j / azimuth_steps * 360 deg`.
pub fn sample_view_sphere(
    actor_pos: &Vec3,
    radii: &[f64],
    polar_steps: usize,
    azimuth_steps: usize,
) -> Result<Vec<CameraPose>> {
    if polar_steps == 0 || azimuth_steps == 0 {
        return Err(Error::Argument("sphere sampling needs at least one step per angle".into()));
    }
    if let Some(r) = radii.iter().find(|r| !(**r > 0.0)) {
        return Err(Error::Argument(format!("sphere radius must be positive, got {r}")));
    }
    let mut poses = Vec::with_capacity(radii.len() * polar_steps * azimuth_steps);
    for &r in radii {
        for k in 0..polar_steps {
            let theta = 0.5 * std::f64::consts::PI * (k + 1) as f64 / polar_steps as f64;
            for j in 0..azimuth_steps {
                let phi = 2.0 * std::f64::consts::PI * j as f64 / azimuth_steps as f64;
                let dir = Vec3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos());
                poses.push(CameraPose::look_at(actor_pos + dir * r, *actor_pos));
            }
        }
    }
    Ok(poses)
}

/// Spherical coordinates (r, polar from +z, azimuth) of a pose around a center.
pub fn spherical_coords(pose: &CameraPose, center: &Vec3) -> (f64, f64, f64) {
    let d = pose.position - center;
    let r = d.norm();
    let theta = if r > 0.0 { (d.z / r).clamp(-1.0, 1.0).acos() } else { 0.0 };
    (r, theta, d.y.atan2(d.x))
}
