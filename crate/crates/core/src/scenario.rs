//! Scenario files: flat TOML with units spelled out in the key names.
//!
//! ```toml
//! seed = 7
//! mesh_path = "humanoid.obj"        # relative to the scenario file
//! trajectory = [[0.0, 0.0, 0.0, 0.0], [0.2, 0.1, 0.0, 0.0]]   # [t_s, x_m, y_m, yaw_rad]
//! r_safe_m = 8.0
//! t_max_m = 1.0
//! ```
//!
//! Instead of `trajectory` a straight or curved walk can be generated with
//! the `walk_*` keys. Every other key has a default.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use crate::actor::{ActorPose2D, ActorSequence, CuboidSpec, Vec3};
use crate::camera::CameraIntrinsics;
use crate::error::{Error, Result};
use crate::mesh::{load_mesh, NormalOrientation, TriangleMesh};
use crate::planner::{OrientationMode, PlannerConfig, PlannerKind};
use crate::shapes;

/// Mesh path value that selects the procedural humanoid instead of a file.
pub const BUILTIN_HUMANOID: &str = "builtin:humanoid";

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub seed: u64,
    pub mesh_path: String,
    /// "as_stored" or "outward".
    pub normal_orientation: String,

    pub trajectory: Option<Vec<[f64; 4]>>,
    pub walk_frames: usize,
    pub walk_dt_s: f64,
    pub walk_start_x_m: f64,
    pub walk_start_y_m: f64,
    pub walk_heading_rad: f64,
    pub walk_speed_mps: f64,
    pub walk_turn_rate_radps: f64,

    pub cuboid_width_m: f64,
    pub cuboid_depth_m: f64,
    pub cuboid_height_m: f64,

    pub image_width_px: usize,
    pub image_height_px: usize,
    pub fov_horizontal_deg: f64,

    pub planners: Vec<String>,
    pub orientation: String,
    pub r_safe_m: f64,
    pub t_max_m: f64,
    pub delta_t: f64,
    pub enum_samples: usize,
    pub max_backtracks: usize,
    /// Starting camera positions; every planner runs once from each.
    pub initial_cameras_m: Vec<[f64; 3]>,

    pub noise_pos_std_m: f64,
    pub noise_yaw_std_rad: f64,
    pub kf_accel_noise_mps2: f64,

    pub merge_window_frames: usize,
    pub voxel_m: f64,
    pub use_icp: bool,
    pub prism_height_m: f64,
    pub surface_samples: usize,

    pub view_radii_m: Vec<f64>,
    pub view_polar_steps: usize,
    pub view_azimuth_steps: usize,

    pub tour_c_threshold_per_m: f64,
    pub tour_samples: usize,

    /// Directory relative paths resolve against; set by [`Scenario::load`].
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            seed: 0,
            mesh_path: BUILTIN_HUMANOID.into(),
            normal_orientation: "as_stored".into(),
            trajectory: None,
            walk_frames: 50,
            walk_dt_s: 0.2,
            walk_start_x_m: 0.0,
            walk_start_y_m: 0.0,
            walk_heading_rad: 0.0,
            walk_speed_mps: 0.0,
            walk_turn_rate_radps: 0.0,
            cuboid_width_m: 0.6,
            cuboid_depth_m: 0.4,
            cuboid_height_m: 1.8,
            image_width_px: 320,
            image_height_px: 240,
            fov_horizontal_deg: 90.0,
            planners: PlannerKind::ALL.iter().map(|k| k.name().to_string()).collect(),
            orientation: "look_at".into(),
            r_safe_m: 8.0,
            t_max_m: 1.0,
            delta_t: 0.5,
            enum_samples: 64,
            max_backtracks: 8,
            initial_cameras_m: vec![[10.0, 0.0, 2.0]],
            noise_pos_std_m: 0.5,
            noise_yaw_std_rad: 0.5,
            kf_accel_noise_mps2: 1.0,
            merge_window_frames: 5,
            voxel_m: 0.01,
            use_icp: false,
            prism_height_m: crate::eval::DEFAULT_PRISM_HEIGHT,
            surface_samples: 20_000,
            view_radii_m: vec![8.0, 10.0, 12.0, 14.0, 16.0],
            view_polar_steps: 4,
            view_azimuth_steps: 5,
            tour_c_threshold_per_m: 0.05,
            tour_samples: 200,
            base_dir: PathBuf::from("."),
        }
    }
}

impl Scenario {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut s: Scenario = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        s.base_dir = base_dir.to_path_buf();
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read scenario {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
        Self::parse(&text, &base)
    }

    pub fn validate(&self) -> Result<()> {
        self.planner_config(PlannerKind::NoPlan)?.validate()?;
        self.cuboid()?;
        self.intrinsics()?;
        self.orientation_mode()?;
        self.planner_kinds()?;
        let cfg = |m: String| Err(Error::Config(m));
        if self.trajectory.is_none() && (self.walk_frames == 0 || !(self.walk_dt_s > 0.0)) {
            return cfg("walk_frames and walk_dt_s must be positive".into());
        }
        if self.initial_cameras_m.is_empty() {
            return cfg("initial_cameras_m must list at least one position".into());
        }
        if !(self.noise_pos_std_m >= 0.0 && self.noise_yaw_std_rad >= 0.0 && self.kf_accel_noise_mps2 >= 0.0) {
            return cfg("noise parameters must be non-negative".into());
        }
        if self.merge_window_frames == 0 || self.merge_window_frames > crate::recon::MAX_MERGE_FRAMES {
            return cfg(format!("merge_window_frames must be in 1..={}", crate::recon::MAX_MERGE_FRAMES));
        }
        if !(self.voxel_m > 0.0 && self.prism_height_m > 0.0) || self.surface_samples == 0 {
            return cfg("voxel_m, prism_height_m and surface_samples must be positive".into());
        }
        if self.view_radii_m.is_empty() || self.view_polar_steps == 0 || self.view_azimuth_steps == 0 {
            return cfg("view sphere needs radii and positive step counts".into());
        }
        if !(self.tour_c_threshold_per_m > 0.0) || self.tour_samples == 0 {
            return cfg("tour threshold and samples must be positive".into());
        }
        match self.normal_orientation.as_str() {
            "as_stored" | "outward" => Ok(()),
            other => cfg(format!("unknown normal_orientation '{other}'")),
        }
    }

    pub fn mesh(&self) -> Result<TriangleMesh> {
        if self.mesh_path == BUILTIN_HUMANOID {
            return Ok(shapes::humanoid());
        }
        let orientation = if self.normal_orientation == "outward" {
            NormalOrientation::Outward
        } else {
            NormalOrientation::AsStored
        };
        let path = self.base_dir.join(&self.mesh_path);
        if !path.exists() {
            return Err(Error::Config(format!("mesh file {} does not exist", path.display())));
        }
        load_mesh(&path, orientation)
    }

    pub fn poses(&self) -> Vec<(f64, ActorPose2D)> {
        if let Some(rows) = &self.trajectory {
            return rows.iter().map(|r| (r[0], ActorPose2D::new(r[1], r[2], r[3]))).collect();
        }
        let (mut x, mut y, mut yaw) = (self.walk_start_x_m, self.walk_start_y_m, self.walk_heading_rad);
        let dt = self.walk_dt_s;
        (0..self.walk_frames)
            .map(|k| {
                let out = (k as f64 * dt, ActorPose2D::new(x, y, yaw));
                x += self.walk_speed_mps * dt * yaw.cos();
                y += self.walk_speed_mps * dt * yaw.sin();
                yaw += self.walk_turn_rate_radps * dt;
                out
            })
            .collect()
    }

    pub fn sequence(&self, mesh: Arc<TriangleMesh>) -> Result<ActorSequence> {
        ActorSequence::from_poses(&self.poses(), mesh).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn cuboid(&self) -> Result<CuboidSpec> {
        CuboidSpec::new(self.cuboid_width_m, self.cuboid_depth_m, self.cuboid_height_m)
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn intrinsics(&self) -> Result<CameraIntrinsics> {
        CameraIntrinsics::new(self.image_width_px, self.image_height_px, self.fov_horizontal_deg)
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn orientation_mode(&self) -> Result<OrientationMode> {
        self.orientation.parse()
    }

    pub fn planner_kinds(&self) -> Result<Vec<PlannerKind>> {
        self.planners.iter().map(|s| s.parse()).collect()
    }

    pub fn planner_config(&self, kind: PlannerKind) -> Result<PlannerConfig> {
        let c = PlannerConfig {
            r_safe: self.r_safe_m,
            t_max: self.t_max_m,
            delta_t: self.delta_t,
            planner_kind: kind,
            enum_samples: self.enum_samples,
            orientation: self.orientation_mode()?,
            max_backtracks: self.max_backtracks,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn initial_cameras(&self) -> Vec<Vec3> {
        self.initial_cameras_m.iter().map(|c| Vec3::new(c[0], c[1], c[2])).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let s = Scenario::parse("", Path::new(".")).unwrap();
        assert_eq!(s.r_safe_m, 8.0);
        assert_eq!(s.t_max_m, 1.0);
        assert_eq!(s.poses().len(), 50);
        assert!(s.mesh().unwrap().len() > 1000);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_configuration_errors() {
        for text in ["r_safe = 8.0", "r_safe_m = -1.0", "planners = [\"teleport\"]", "mesh_path = \"missing.obj\""] {
            let e = Scenario::parse(text, Path::new("/nonexistent")).and_then(|s| s.mesh().map(|_| s));
            assert!(e.unwrap_err().is_configuration(), "{text}");
        }
    }

    #[test]
    fn walk_generator_moves_along_heading() {
        let s = Scenario::parse(
            "walk_frames = 3\nwalk_dt_s = 0.5\nwalk_speed_mps = 2.0\nwalk_heading_rad = 1.5707963267948966",
            Path::new("."),
        )
        .unwrap();
        let p = s.poses();
        assert!((p[2].1.y - 2.0).abs() < 1e-12);
        assert!(p[2].1.x.abs() < 1e-12);
        assert_eq!(p[2].0, 1.0);
    }

    #[test]
    fn explicit_trajectory_wins() {
        let s = Scenario::parse("trajectory = [[0.0, 1.0, 2.0, 0.5], [1.0, 1.5, 2.0, 0.5]]", Path::new(".")).unwrap();
        assert_eq!(s.poses().len(), 2);
        assert!(Scenario::parse("trajectory = [[1.0, 0, 0, 0], [0.5, 0, 0, 0]]", Path::new("."))
            .unwrap()
            .sequence(Arc::new(shapes::unit_cube()))
            .is_err());
    }
}
