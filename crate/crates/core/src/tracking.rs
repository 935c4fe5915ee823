//! Actor ground-pose estimation: bounding-box back-projection, a heading
//! oracle standing in for a learned heading estimator, and a
//! constant-velocity Kalman filter.

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Matrix4x2, Vector2, Vector4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::actor::{wrap_angle, ActorPose2D};
use crate::camera::{CameraFrame, CameraIntrinsics, RenderedView};
use crate::error::{Error, Result};
use crate::ppa::CameraPose;

/// Pixel-edge bounds of the actor in the image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub u_min: f64,
    pub v_min: f64,
    pub u_max: f64,
    pub v_max: f64,
}

impl BoundingBox {
    pub fn new(u_min: f64, v_min: f64, u_max: f64, v_max: f64, intr: &CameraIntrinsics) -> Result<Self> {
        let ok = u_min < u_max
            && v_min < v_max
            && u_min >= 0.0
            && v_min >= 0.0
            && u_max <= intr.width as f64
            && v_max <= intr.height as f64;
        if !ok {
            return Err(Error::Argument(format!(
                "invalid bounding box [{u_min}, {u_max}] x [{v_min}, {v_max}] for {}x{} image",
                intr.width, intr.height
            )));
        }
        Ok(Self {
            u_min,
            v_min,
            u_max,
            v_max,
        })
    }

    /// Tight bounds of all foreground pixels, or `None` for an empty view.
    pub fn from_view(view: &RenderedView) -> Option<Self> {
        let (w, h) = (view.intrinsics.width, view.intrinsics.height);
        let (mut u0, mut v0, mut u1, mut v1) = (usize::MAX, usize::MAX, 0, 0);
        for v in 0..h {
            for u in 0..w {
                if view.id_at(u, v).is_some() {
                    u0 = u0.min(u);
                    v0 = v0.min(v);
                    u1 = u1.max(u + 1);
                    v1 = v1.max(v + 1);
                }
            }
        }
        (u0 != usize::MAX).then(|| Self {
            u_min: u0 as f64,
            v_min: v0 as f64,
            u_max: u1 as f64,
            v_max: v1 as f64,
        })
    }
}

/// Back-projects the midpoint of the box's bottom edge onto the ground plane.
pub fn localize_from_bbox(bbox: &BoundingBox, pose: &CameraPose, intr: &CameraIntrinsics) -> Result<Vector2<f64>> {
    let frame = CameraFrame::new(pose);
    let ray = frame.ray(intr, 0.5 * (bbox.u_min + bbox.u_max), bbox.v_max);
    if pose.position.z <= 0.0 || ray.z >= -1e-12 {
        return Err(Error::NoGroundIntersection);
    }
    let t = -pose.position.z / ray.z;
    let hit = pose.position + ray * t;
    Ok(Vector2::new(hit.x, hit.y))
}

/// Mean (x, y, vx, vy) and covariance of the actor's planar motion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanState {
    pub mean: Vector4<f64>,
    pub covariance: Matrix4<f64>,
}

impl KalmanState {
    pub fn new(position: Vector2<f64>, position_var: f64, velocity_var: f64) -> Self {
        Self {
            mean: Vector4::new(position.x, position.y, 0.0, 0.0),
            covariance: Matrix4::from_diagonal(&Vector4::new(position_var, position_var, velocity_var, velocity_var)),
        }
    }

    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.mean[0], self.mean[1])
    }

    pub fn velocity(&self) -> Vector2<f64> {
        Vector2::new(self.mean[2], self.mean[3])
    }
}

fn symmetrize(m: &Matrix4<f64>) -> Matrix4<f64> {
    (m + m.transpose()) * 0.5
}

/// Constant-velocity prediction with piecewise-constant white acceleration
/// of variance `accel_noise`.
pub fn kf_predict(state: &KalmanState, dt: f64, accel_noise: f64) -> Result<KalmanState> {
    if !(dt > 0.0) {
        return Err(Error::Argument(format!("prediction step must be positive, got {dt}")));
    }
    let mut f = Matrix4::identity();
    f[(0, 2)] = dt;
    f[(1, 3)] = dt;
    let (dt2, dt3, dt4) = (dt * dt, dt * dt * dt, dt * dt * dt * dt);
    let mut q = Matrix4::zeros();
    for i in 0..2 {
        q[(i, i)] = dt4 / 4.0;
        q[(i, i + 2)] = dt3 / 2.0;
        q[(i + 2, i)] = dt3 / 2.0;
        q[(i + 2, i + 2)] = dt2;
    }
    Ok(KalmanState {
        mean: f * state.mean,
        covariance: symmetrize(&(f * state.covariance * f.transpose() + q * accel_noise)),
    })
}

/// Position-only measurement update (Joseph form).
pub fn kf_update(state: &KalmanState, measurement: &Vector2<f64>, meas_noise: f64) -> Result<KalmanState> {
    if !(meas_noise >= 0.0) {
        return Err(Error::Argument(format!("measurement noise must be non-negative, got {meas_noise}")));
    }
    let h = Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0);
    let r = Matrix2::identity() * meas_noise;
    let p = &state.covariance;
    let s = h * p * h.transpose() + r;
    let s_inv = s
        .try_inverse()
        .ok_or_else(|| Error::Argument("singular innovation covariance".into()))?;
    let k: Matrix4x2<f64> = p * h.transpose() * s_inv;
    let innovation = measurement - h * state.mean;
    let i_kh = Matrix4::identity() - k * h;
    Ok(KalmanState {
        mean: state.mean + k * innovation,
        covariance: symmetrize(&(i_kh * p * i_kh.transpose() + k * r * k.transpose())),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadingQuality {
    Oracle,
    Noisy,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadingEstimate {
    pub yaw: f64,
    pub quality: HeadingQuality,
}

/// True yaw plus seeded Gaussian noise, wrapped to (-pi, pi].
pub fn heading_oracle(true_pose: &ActorPose2D, noise_std: f64, seed: u64) -> Result<HeadingEstimate> {
    heading_oracle_with(true_pose, noise_std, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn heading_oracle_with<R: rand::Rng>(true_pose: &ActorPose2D, noise_std: f64, rng: &mut R) -> Result<HeadingEstimate> {
    if !(noise_std >= 0.0) {
        return Err(Error::Argument(format!("noise std must be non-negative, got {noise_std}")));
    }
    if noise_std == 0.0 {
        return Ok(HeadingEstimate {
            yaw: true_pose.yaw,
            quality: HeadingQuality::Oracle,
        });
    }
    let n = Normal::new(0.0, noise_std).map_err(|e| Error::Argument(e.to_string()))?;
    Ok(HeadingEstimate {
        yaw: wrap_angle(true_pose.yaw + n.sample(rng)),
        quality: HeadingQuality::Noisy,
    })
}

/// One row of an estimator trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackRecord {
    pub t: f64,
    pub truth: ActorPose2D,
    pub measured: ActorPose2D,
    pub estimate: ActorPose2D,
}

/// Source of the actor pose the planner sees at each frame.
pub trait ActorEstimator {
    fn estimate(&mut self, t: f64, truth: &ActorPose2D) -> Result<ActorPose2D>;
    fn trace(&self) -> &[TrackRecord];
}

/// Passes the true pose through.
#[derive(Debug, Default)]
pub struct GroundTruthEstimator {
    trace: Vec<TrackRecord>,
}

impl ActorEstimator for GroundTruthEstimator {
    fn estimate(&mut self, t: f64, truth: &ActorPose2D) -> Result<ActorPose2D> {
        self.trace.push(TrackRecord {
            t,
            truth: *truth,
            measured: *truth,
            estimate: *truth,
        });
        Ok(*truth)
    }

    fn trace(&self) -> &[TrackRecord] {
        &self.trace
    }
}

/// Independent Gaussian noise on position and yaw every frame.
#[derive(Debug)]
pub struct NoisyOracleEstimator {
    pos_std: f64,
    yaw_std: f64,
    rng: ChaCha8Rng,
    trace: Vec<TrackRecord>,
}

impl NoisyOracleEstimator {
    pub fn new(pos_std: f64, yaw_std: f64, rng: ChaCha8Rng) -> Result<Self> {
        if !(pos_std >= 0.0 && yaw_std >= 0.0) {
            return Err(Error::Argument("noise std must be non-negative".into()));
        }
        Ok(Self {
            pos_std,
            yaw_std,
            rng,
            trace: Vec::new(),
        })
    }

    fn measure(&mut self, truth: &ActorPose2D) -> Result<ActorPose2D> {
        let (dx, dy) = if self.pos_std > 0.0 {
            let n = Normal::new(0.0, self.pos_std).map_err(|e| Error::Argument(e.to_string()))?;
            (n.sample(&mut self.rng), n.sample(&mut self.rng))
        } else {
            (0.0, 0.0)
        };
        let yaw = heading_oracle_with(truth, self.yaw_std, &mut self.rng)?.yaw;
        Ok(ActorPose2D::new(truth.x + dx, truth.y + dy, yaw))
    }
}

impl ActorEstimator for NoisyOracleEstimator {
    fn estimate(&mut self, t: f64, truth: &ActorPose2D) -> Result<ActorPose2D> {
        let m = self.measure(truth)?;
        self.trace.push(TrackRecord {
            t,
            truth: *truth,
            measured: m,
            estimate: m,
        });
        Ok(m)
    }

    fn trace(&self) -> &[TrackRecord] {
        &self.trace
    }
}

/// Noisy position measurements smoothed by the constant-velocity filter;
/// yaw comes straight from the noisy heading oracle.
#[derive(Debug)]
pub struct KalmanEstimator {
    oracle: NoisyOracleEstimator,
    accel_noise: f64,
    state: Option<(f64, KalmanState)>,
}

impl KalmanEstimator {
    pub fn new(pos_std: f64, yaw_std: f64, accel_noise: f64, rng: ChaCha8Rng) -> Result<Self> {
        Ok(Self {
            oracle: NoisyOracleEstimator::new(pos_std, yaw_std, rng)?,
            accel_noise,
            state: None,
        })
    }
}

impl ActorEstimator for KalmanEstimator {
    fn estimate(&mut self, t: f64, truth: &ActorPose2D) -> Result<ActorPose2D> {
        let m = self.oracle.measure(truth)?;
        let r = self.oracle.pos_std * self.oracle.pos_std;
        let z = m.position();
        let next = match self.state {
            None => KalmanState::new(z, r.max(1e-9), 1.0),
            Some((t0, s)) => kf_update(&kf_predict(&s, t - t0, self.accel_noise)?, &z, r)?,
        };
        self.state = Some((t, next));
        let est = ActorPose2D::new(next.mean[0], next.mean[1], m.yaw);
        self.oracle.trace.push(TrackRecord {
            t,
            truth: *truth,
            measured: m,
            estimate: est,
        });
        Ok(est)
    }

    fn trace(&self) -> &[TrackRecord] {
        &self.oracle.trace
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actor::Vec3;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn nadir_localization() {
        let intr = CameraIntrinsics::new(640, 480, 90.0).unwrap();
        let pose = CameraPose::new(Vec3::new(0.0, 0.0, 5.0), -Vec3::z()).unwrap();
        let bbox = BoundingBox::new(300.0, 200.0, 340.0, 240.0, &intr).unwrap();
        let p = localize_from_bbox(&bbox, &pose, &intr).unwrap();
        assert_abs_diff_eq!(p, Vector2::zeros(), epsilon = 1e-12);
    }

    #[test]
    fn horizontal_ray_has_no_ground_hit() {
        let intr = CameraIntrinsics::new(640, 480, 90.0).unwrap();
        let pose = CameraPose::new(Vec3::new(0.0, 0.0, 1.5), Vec3::x()).unwrap();
        // bottom edge on the principal row -> horizontal ray
        let bbox = BoundingBox::new(300.0, 100.0, 340.0, 240.0, &intr).unwrap();
        assert!(matches!(localize_from_bbox(&bbox, &pose, &intr), Err(Error::NoGroundIntersection)));
        assert!(BoundingBox::new(10.0, 10.0, 5.0, 20.0, &intr).is_err());
        assert!(BoundingBox::new(0.0, 0.0, 641.0, 20.0, &intr).is_err());
    }

    #[test]
    fn predict_moves_mean_and_inflates() {
        let s = KalmanState {
            mean: Vector4::new(0.0, 0.0, 1.0, 0.0),
            covariance: Matrix4::identity() * 0.1,
        };
        let p = kf_predict(&s, 1.0, 0.0).unwrap();
        assert_abs_diff_eq!(p.mean, Vector4::new(1.0, 0.0, 1.0, 0.0), epsilon = 1e-15);
        let noisy = kf_predict(&s, 1.0, 0.5).unwrap();
        assert!(noisy.covariance.trace() > p.covariance.trace());
        assert!(kf_predict(&s, 0.0, 0.1).is_err());
    }

    #[test]
    fn repeated_predict_equals_long_predict() {
        let s = KalmanState {
            mean: Vector4::new(0.5, -1.0, 0.3, 0.7),
            covariance: Matrix4::from_diagonal(&Vector4::new(0.2, 0.3, 0.4, 0.5)),
        };
        let mut step = s;
        for _ in 0..7 {
            step = kf_predict(&step, 0.25, 0.0).unwrap();
        }
        let long = kf_predict(&s, 7.0 * 0.25, 0.0).unwrap();
        assert_abs_diff_eq!(step.mean, long.mean, epsilon = 1e-12);
        assert_abs_diff_eq!(step.covariance, long.covariance, epsilon = 1e-12);
    }

    #[test]
    fn exact_measurement_pins_position() {
        let s = KalmanState::new(Vector2::new(1.0, 1.0), 2.0, 1.0);
        let z = Vector2::new(3.0, -2.0);
        let u = kf_update(&s, &z, 0.0).unwrap();
        assert_abs_diff_eq!(u.position(), z, epsilon = 1e-12);
        let noisy = kf_update(&s, &z, 0.5).unwrap();
        assert!(noisy.covariance.trace() <= s.covariance.trace());
    }

    #[test]
    fn heading_oracle_cases() {
        let pose = ActorPose2D::new(0.0, 0.0, 1.0);
        let exact = heading_oracle(&pose, 0.0, 3).unwrap();
        assert_eq!(exact.yaw, 1.0);
        assert_eq!(exact.quality, HeadingQuality::Oracle);
        let near_pi = ActorPose2D::new(0.0, 0.0, PI - 0.01);
        for seed in 0..200 {
            let h = heading_oracle(&near_pi, 0.5, seed).unwrap();
            assert!(h.yaw > -PI && h.yaw <= PI);
            assert_eq!(h.quality, HeadingQuality::Noisy);
        }
        assert!(heading_oracle(&pose, -1.0, 0).is_err());
    }
}
