//! Point clouds, exact nearest-neighbor lookup and voxel downsampling.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use kiddo::{ImmutableKdTree, SquaredEuclidean};

use crate::actor::Vec3;
use crate::error::{Error, Result};

/// World-frame point set.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Self {
        debug_assert!(points.iter().all(|p| p.iter().all(|c| c.is_finite())));
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Vec3 {
        if self.is_empty() {
            return Vec3::zeros();
        }
        self.points.iter().sum::<Vec3>() / self.len() as f64
    }

    pub fn map<F: Fn(&Vec3) -> Vec3>(&self, f: F) -> Self {
        Self {
            points: self.points.iter().map(f).collect(),
        }
    }

    pub fn extend(&mut self, other: &PointCloud) {
        self.points.extend_from_slice(&other.points);
    }

    pub fn to_ply(&self) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nend_header\n",
            self.len()
        );
        for p in &self.points {
            let _ = writeln!(s, "{} {} {}", p.x, p.y, p.z);
        }
        s
    }

    pub fn write_ply(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_ply()).map_err(|e| Error::io(path, e))
    }

    /// Reads the vertex element of an ASCII PLY (faces, if any, are ignored).
    pub fn read_ply(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let (vertices, _) = crate::mesh::parse_ply(&text).map_err(|reason| Error::MeshLoad {
            path: path.to_path_buf(),
            reason,
        })?;
        Ok(Self::new(vertices))
    }
}

/// Exact nearest-neighbor index over a fixed point set.
pub struct NearestIndex {
    tree: ImmutableKdTree<f64, 3>,
    len: usize,
}

impl NearestIndex {
    pub fn new(points: &[Vec3]) -> Self {
        let raw: Vec<[f64; 3]> = points.iter().map(|p| [p.x, p.y, p.z]).collect();
        Self {
            tree: ImmutableKdTree::new_from_slice(&raw),
            len: points.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Index of the nearest point and its Euclidean distance.
    pub fn nearest(&self, q: &Vec3) -> (usize, f64) {
        debug_assert!(self.len > 0);
        let n = self.tree.nearest_one::<SquaredEuclidean>(&[q.x, q.y, q.z]);
        (n.item as usize, n.distance.sqrt())
    }
}

/// Centroid of the points in every occupied voxel of edge `voxel`, in
/// voxel-key order.
pub fn voxel_downsample(cloud: &PointCloud, voxel: f64) -> Result<PointCloud> {
    if !(voxel > 0.0) {
        return Err(Error::Argument(format!("voxel size must be positive, got {voxel}")));
    }
    let mut cells: BTreeMap<(i64, i64, i64), (Vec3, usize)> = BTreeMap::new();
    for p in &cloud.points {
        let key = (
            (p.x / voxel).floor() as i64,
            (p.y / voxel).floor() as i64,
            (p.z / voxel).floor() as i64,
        );
        let e = cells.entry(key).or_insert((Vec3::zeros(), 0));
        e.0 += p;
        e.1 += 1;
    }
    Ok(PointCloud::new(
        cells.into_values().map(|(s, n)| s / n as f64).collect(),
    ))
}
