//! Actor representations used for planning: oriented patches, the ground
//! pose of the actor, the five-face cuboid primitive and animated sequences.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{Rotation3, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;

pub type Vec3 = Vector3<f64>;

/// Oriented planar surface element. Area is deliberately not stored: PPA
/// sums treat every patch with unit weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Patch {
    pub centroid: Vec3,
    pub normal: Vec3,
}

impl Patch {
    /// Builds a patch, normalizing `normal`.
    pub fn new(centroid: Vec3, normal: Vec3) -> Result<Self> {
        let n = normal.norm();
        if !(n > 1e-12) || !n.is_finite() {
            return Err(Error::Argument(format!(
                "patch normal must be non-zero, got {normal:?}"
            )));
        }
        Ok(Self {
            centroid,
            normal: normal / n,
        })
    }

    pub(crate) fn from_unit(centroid: Vec3, normal: Vec3) -> Self {
        debug_assert!((normal.norm() - 1.0).abs() < 1e-9);
        Self { centroid, normal }
    }
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Pose of the actor on the ground plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActorPose2D {
    pub x: f64,
    pub y: f64,
    /// Heading, wrapped into (-pi, pi].
    pub yaw: f64,
}

impl ActorPose2D {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self {
            x,
            y,
            yaw: wrap_angle(yaw),
        }
    }

    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }

    /// Ground position lifted to z = 0.
    pub fn ground_point(&self) -> Vec3 {
        Vec3::new(self.x, self.y, 0.0)
    }

    pub fn heading(&self) -> Vector2<f64> {
        Vector2::new(self.yaw.cos(), self.yaw.sin())
    }

    pub fn rotation(&self) -> Rotation3<f64> {
        Rotation3::from_axis_angle(&Vector3::z_axis(), self.yaw)
    }

    /// Maps a point from the actor body frame into the world frame.
    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation() * p + self.ground_point()
    }

    /// Maps a world point into the actor body frame.
    pub fn inverse_transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation().inverse() * (p - self.ground_point())
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation() * v
    }

    pub fn inverse_transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation().inverse() * v
    }

    pub fn transform_patch(&self, patch: &Patch) -> Patch {
        Patch::from_unit(
            self.transform_point(&patch.centroid),
            self.transform_vector(&patch.normal),
        )
    }
}

/// Extents of the cuboid actor model. `width` is lateral (left-right),
/// `depth` runs along the heading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CuboidSpec {
    pub width: f64,
    pub depth: f64,
    pub height: f64,
}

impl Default for CuboidSpec {
    fn default() -> Self {
        Self {
            width: 0.6,
            depth: 0.4,
            height: 1.8,
        }
    }
}

impl CuboidSpec {
    pub fn new(width: f64, depth: f64, height: f64) -> Result<Self> {
        let spec = Self {
            width,
            depth,
            height,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("width", self.width),
            ("depth", self.depth),
            ("height", self.height),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Argument(format!(
                    "cuboid {name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Volumetric center of the cuboid placed at `pose`.
    pub fn center(&self, pose: &ActorPose2D) -> Vec3 {
        Vec3::new(pose.x, pose.y, 0.5 * self.height)
    }
}

/// Names the cuboid faces in the order returned by [`build_cuboid`].
pub const CUBOID_FACES: [&str; 5] = ["front", "back", "left", "right", "top"];

/// Five patches (front, back, left, right, top) of a cuboid standing on
/// z = 0, centered horizontally on the pose and aligned with its heading.
pub fn build_cuboid(pose: &ActorPose2D, spec: &CuboidSpec) -> Result<Vec<Patch>> {
    spec.validate()?;
    let (hw, hd, h) = (0.5 * spec.width, 0.5 * spec.depth, spec.height);
    let body = [
        (Vec3::new(hd, 0.0, 0.5 * h), Vec3::x()),
        (Vec3::new(-hd, 0.0, 0.5 * h), -Vec3::x()),
        (Vec3::new(0.0, hw, 0.5 * h), Vec3::y()),
        (Vec3::new(0.0, -hw, 0.5 * h), -Vec3::y()),
        (Vec3::new(0.0, 0.0, h), Vec3::z()),
    ];
    Ok(body
        .iter()
        .map(|(c, n)| pose.transform_patch(&Patch::from_unit(*c, *n)))
        .collect())
}

#[derive(Debug, Clone)]
pub struct ActorFrame {
    pub t: f64,
    pub pose: ActorPose2D,
    pub mesh: Arc<TriangleMesh>,
}

/// Time-ordered actor poses, each paired with the body-frame mesh shown at
/// that instant.
#[derive(Debug, Clone)]
pub struct ActorSequence {
    frames: Vec<ActorFrame>,
}

impl ActorSequence {
    pub fn new(frames: Vec<ActorFrame>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::Argument("actor sequence has no frames".into()));
        }
        for w in frames.windows(2) {
            if !(w[1].t > w[0].t) {
                return Err(Error::Argument(format!(
                    "timestamps must be strictly increasing ({} then {})",
                    w[0].t, w[1].t
                )));
            }
        }
        Ok(Self { frames })
    }

    /// Sequence sharing a single mesh across all poses.
    pub fn from_poses(poses: &[(f64, ActorPose2D)], mesh: Arc<TriangleMesh>) -> Result<Self> {
        Self::new(
            poses
                .iter()
                .map(|&(t, pose)| ActorFrame {
                    t,
                    pose,
                    mesh: Arc::clone(&mesh),
                })
                .collect(),
        )
    }

    pub fn frames(&self) -> &[ActorFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Zero-order hold lookup: the frame with the greatest timestamp <= t.
    pub fn pose_at(&self, t: f64) -> Result<(ActorPose2D, &Arc<TriangleMesh>)> {
        let first = self.frames[0].t;
        let last = self.frames[self.frames.len() - 1].t;
        if !(t >= first && t <= last) {
            return Err(Error::OutOfRange { t, first, last });
        }
        let idx = self.frames.partition_point(|f| f.t <= t) - 1;
        let f = &self.frames[idx];
        Ok((f.pose, &f.mesh))
    }
}
