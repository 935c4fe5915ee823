//! Offline frame merging: point-to-point ICP, concatenation and voxel
//! downsampling. Geometry only.

use nalgebra::{Matrix3, Rotation3, Unit};

use crate::actor::Vec3;
use crate::camera::CameraFrame;
use crate::cloud::{voxel_downsample, NearestIndex, PointCloud};
use crate::error::{Error, Result};
use crate::ppa::CameraPose;

/// Frames merged per window at most (the actor is assumed quasi-static
/// over this many consecutive views).
pub const MAX_MERGE_FRAMES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn from_axis_angle(axis: &Vec3, angle: f64, translation: Vec3) -> Self {
        Self {
            rotation: Rotation3::from_axis_angle(&Unit::new_normalize(*axis), angle).into_inner(),
            translation,
        }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn apply_cloud(&self, cloud: &PointCloud) -> PointCloud {
        cloud.map(|p| self.apply(p))
    }

    /// `self` after `first`.
    pub fn compose(&self, first: &RigidTransform) -> Self {
        Self {
            rotation: self.rotation * first.rotation,
            translation: self.rotation * first.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcpParams {
    pub max_iters: usize,
    /// Correspondences farther apart than this are ignored, meters.
    pub corr_dist: f64,
    /// Stop when the RMSE improves by less than this, meters.
    pub tol: f64,
}

impl Default for IcpParams {
    fn default() -> Self {
        Self {
            max_iters: 50,
            corr_dist: 0.1,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    /// Maps source points onto the target.
    pub transform: RigidTransform,
    pub iterations: usize,
    pub final_rmse: f64,
    /// RMSE over the correspondences within `corr_dist` at the accepted iterate.
    pub inlier_rmse: f64,
    pub converged: bool,
    /// RMSE of the accepted iterate at every iteration; non-increasing.
    pub rmse_history: Vec<f64>,
}

/// Closed-form least-squares rigid fit (Kabsch / SVD) mapping `src` onto `dst`.
pub fn fit_rigid(src: &[Vec3], dst: &[Vec3]) -> RigidTransform {
    let n = src.len() as f64;
    let cs = src.iter().sum::<Vec3>() / n;
    let cd = dst.iter().sum::<Vec3>() / n;
    let mut h = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (s - cs) * (d - cd).transpose();
    }
    let svd = h.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let mut fix = Matrix3::identity();
    if (v_t.transpose() * u.transpose()).determinant() < 0.0 {
        fix[(2, 2)] = -1.0;
    }
    let rotation = v_t.transpose() * fix * u.transpose();
    RigidTransform {
        rotation,
        translation: cd - rotation * cs,
    }
}

fn correspondences(
    source: &PointCloud,
    target: &PointCloud,
    index: &NearestIndex,
    transform: &RigidTransform,
    corr_dist: f64,
) -> (Vec<Vec3>, Vec<Vec3>, f64, f64) {
    let mut src = Vec::new();
    let mut dst = Vec::new();
    let mut sq = 0.0;
    let mut inlier_sq = 0.0;
    for p in &source.points {
        let q = transform.apply(p);
        let (i, d) = index.nearest(&q);
        if d <= corr_dist {
            src.push(*p);
            dst.push(target.points[i]);
            inlier_sq += d * d;
        }
        sq += d.min(corr_dist).powi(2);
    }
    // distances capped at corr_dist so that newly admitted inliers cannot
    // make a better alignment look worse
    let rmse = (sq / source.len() as f64).sqrt();
    let inlier_rmse = if src.is_empty() { 0.0 } else { (inlier_sq / src.len() as f64).sqrt() };
    (src, dst, rmse, inlier_rmse)
}

/// Point-to-point ICP from `source` onto `target`. The reported RMSE runs
/// over all source points with distances capped at `corr_dist`. An iterate
/// that would raise it is rejected and iteration stops.
pub fn icp_align(source: &PointCloud, target: &PointCloud, params: &IcpParams) -> Result<IcpResult> {
    if source.len() < 3 || target.len() < 3 {
        return Err(Error::Argument("ICP needs at least 3 points per cloud".into()));
    }
    let index = NearestIndex::new(&target.points);
    let mut accepted = RigidTransform::identity();
    let mut candidate = accepted;
    let mut history: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut inlier_rmse = 0.0;

    for iteration in 1..=params.max_iters + 1 {
        let (src, dst, rmse, inliers) = correspondences(source, target, &index, &candidate, params.corr_dist);
        if src.len() < 3 {
            return Err(Error::DegenerateCorrespondence {
                iteration,
                found: src.len(),
            });
        }
        if let Some(&prev) = history.last() {
            if rmse > prev {
                converged = true;
                break;
            }
            accepted = candidate;
            inlier_rmse = inliers;
            history.push(rmse);
            if prev - rmse < params.tol {
                converged = true;
                break;
            }
        } else {
            accepted = candidate;
            inlier_rmse = inliers;
            history.push(rmse);
        }
        if rmse == 0.0 {
            converged = true;
            break;
        }
        if iteration > params.max_iters {
            break;
        }
        candidate = fit_rigid(&src, &dst);
    }

    Ok(IcpResult {
        transform: accepted,
        iterations: history.len(),
        final_rmse: *history.last().expect("at least one iteration"),
        inlier_rmse,
        converged,
        rmse_history: history,
    })
}

/// Camera-frame cloud of one view together with the pose that lifts it
/// into the world.
#[derive(Debug, Clone)]
pub struct Frame {
    pub cloud: PointCloud,
    pub pose: CameraPose,
}

/// Lifts each frame into the world through its pose, optionally refines
/// frames 1.. against frame 0 with ICP, concatenates and voxel-downsamples.
pub fn merge_frames(frames: &[Frame], use_icp: bool, voxel: f64, icp: &IcpParams) -> Result<PointCloud> {
    if frames.is_empty() {
        return Err(Error::Argument("no frames to merge".into()));
    }
    if frames.len() > MAX_MERGE_FRAMES {
        return Err(Error::Argument(format!(
            "merge window of {} frames exceeds {MAX_MERGE_FRAMES}",
            frames.len()
        )));
    }
    let world: Vec<PointCloud> = frames
        .iter()
        .map(|f| {
            let cam = CameraFrame::new(&f.pose);
            f.cloud.map(|p| cam.to_world(p))
        })
        .collect();
    let mut merged = world[0].clone();
    for cloud in &world[1..] {
        if use_icp && cloud.len() >= 3 && world[0].len() >= 3 {
            let fit = icp_align(cloud, &world[0], icp)?;
            merged.extend(&fit.transform.apply_cloud(cloud));
        } else {
            merged.extend(cloud);
        }
    }
    voxel_downsample(&merged, voxel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blob(seed: u64, n: usize) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointCloud::new(
            (0..n)
                .map(|_| {
                    Vec3::new(
                        rng.random_range(-0.3..0.3),
                        rng.random_range(-0.2..0.2),
                        rng.random_range(0.0..1.0) * rng.random_range(0.5..1.0),
                    )
                })
                .collect(),
        )
    }

    #[test]
    fn identity_alignment() {
        let c = blob(1, 300);
        let r = icp_align(&c, &c, &IcpParams::default()).unwrap();
        assert_eq!(r.iterations, 1);
        assert_eq!(r.final_rmse, 0.0);
        assert_abs_diff_eq!(r.transform.rotation, Matrix3::identity());
        assert!(r.converged);
    }

    #[test]
    fn kabsch_recovers_exact_transform() {
        let c = blob(2, 50);
        let t = RigidTransform::from_axis_angle(&Vec3::new(0.2, 1.0, -0.3), 0.7, Vec3::new(1.0, -2.0, 0.5));
        let moved = t.apply_cloud(&c);
        let fit = fit_rigid(&c.points, &moved.points);
        assert_abs_diff_eq!(fit.rotation, t.rotation, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.translation, t.translation, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.rotation.determinant(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn outliers_beyond_corr_dist_are_ignored() {
        let target = blob(3, 2000);
        let truth = RigidTransform::from_axis_angle(&Vec3::z(), 2f64.to_radians(), Vec3::new(0.01, 0.0, 0.0));
        let mut source = truth.inverse().apply_cloud(&target);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            source.points.push(Vec3::new(rng.random_range(2.0..3.0), rng.random_range(2.0..3.0), rng.random_range(2.0..3.0)));
        }
        let r = icp_align(&source, &target, &IcpParams { max_iters: 100, corr_dist: 0.1, tol: 1e-12 }).unwrap();
        assert!(r.inlier_rmse < 1e-3, "inlier rmse {}", r.inlier_rmse);
        assert_abs_diff_eq!(r.transform.translation, truth.translation, epsilon = 1e-3);
    }

    #[test]
    fn too_few_correspondences() {
        let a = blob(4, 20);
        let far = a.map(|p| p + Vec3::new(10.0, 0.0, 0.0));
        assert!(matches!(
            icp_align(&a, &far, &IcpParams::default()),
            Err(Error::DegenerateCorrespondence { .. })
        ));
    }

    #[test]
    fn merge_identical_frames_is_idempotent() {
        let c = blob(5, 500);
        let pose = CameraPose::look_at(Vec3::new(3.0, 0.0, 1.0), Vec3::zeros());
        let f = Frame { cloud: c.clone(), pose };
        let merged = merge_frames(&[f.clone(), f.clone()], false, 0.01, &IcpParams::default()).unwrap();
        let world = c.map(|p| CameraFrame::new(&pose).to_world(p));
        assert_eq!(merged.len(), voxel_downsample(&world, 0.01).unwrap().len());
        assert!(merge_frames(&[], false, 0.01, &IcpParams::default()).is_err());
        assert!(merge_frames(&vec![f; 6], false, 0.01, &IcpParams::default()).is_err());
    }

    #[test]
    fn transform_algebra() {
        let a = RigidTransform::from_axis_angle(&Vec3::x(), 0.3, Vec3::new(1.0, 2.0, 3.0));
        let b = RigidTransform::from_axis_angle(&Vec3::y(), -0.8, Vec3::new(-1.0, 0.0, 0.5));
        let p = Vec3::new(0.1, 0.2, 0.3);
        assert_abs_diff_eq!(b.compose(&a).apply(&p), b.apply(&a.apply(&p)), epsilon = 1e-12);
        assert_abs_diff_eq!(a.inverse().apply(&a.apply(&p)), p, epsilon = 1e-12);
    }
}
