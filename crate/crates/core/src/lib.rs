//! View planning for drone-based capture of a moving actor, driven by the
//! pixels-per-area (PPA) quality proxy, together with the simulation
//! pipeline used to evaluate it: a software depth renderer, reconstruction
//! metrics, actor tracking, ICP frame merging and a multi-patch tour planner.

pub mod actor;
pub mod camera;
pub mod cloud;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod mesh;
pub mod planner;
pub mod ppa;
pub mod recon;
pub mod scenario;
pub mod seeds;
pub mod shapes;
pub mod tracking;
pub mod tspn;

pub use actor::{build_cuboid, ActorPose2D, ActorSequence, CuboidSpec, Patch, Vec3};
pub use camera::{backproject, render, sample_view_sphere, CameraIntrinsics, RenderedView};
pub use cloud::PointCloud;
pub use error::{Error, Result};
pub use mesh::{load_mesh, mesh_to_patches, NormalOrientation, TriangleMesh};
pub use ppa::{CameraPose, PpaGradient};
pub use planner::{PlanRun, PlanStep, PlannerConfig, PlannerKind};
pub use scenario::Scenario;
