use ppaview::camera::{backproject, CameraFrame};
use ppaview::eval::chamfer_distance;
use ppaview::recon::{icp_align, merge_frames, Frame, IcpParams, RigidTransform};
use ppaview::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if v.norm() > 0.1 && v.norm() <= 1.0 {
            return v.normalize();
        }
    }
}

fn rendered_humanoid(rng: &mut ChaCha8Rng) -> PointCloud {
    let intr = CameraIntrinsics::new(320, 240, 90.0).unwrap();
    let az: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let cam = Vec3::new(4.0 * az.cos(), 4.0 * az.sin(), rng.random_range(1.0..3.0));
    backproject(&render(&shapes::humanoid(), &CameraPose::look_at(cam, Vec3::new(0.0, 0.0, 0.9)), &intr))
}

/// Rotation about the cloud centroid followed by a shift.
fn perturbation(rng: &mut ChaCha8Rng, center: &Vec3, max_deg: f64, max_shift: f64) -> RigidTransform {
    let r = RigidTransform::from_axis_angle(&random_unit(rng), rng.random_range(0.0..max_deg.to_radians()), Vec3::zeros());
    let shift = random_unit(rng) * rng.random_range(0.0..max_shift);
    RigidTransform {
        rotation: r.rotation,
        translation: center - r.rotation * center + shift,
    }
}

fn transform_error(a: &RigidTransform, b: &RigidTransform) -> (f64, f64) {
    ((a.rotation - b.rotation).norm(), (a.translation - b.translation).norm())
}

fn params() -> IcpParams {
    IcpParams {
        max_iters: 200,
        corr_dist: 0.5,
        tol: 1e-12,
    }
}

#[test]
fn small_perturbations_are_recovered_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..50 {
        let target = rendered_humanoid(&mut rng);
        let p = perturbation(&mut rng, &target.centroid(), 1.0, 0.01);
        let res = icp_align(&p.apply_cloud(&target), &target, &params()).unwrap();
        let (rot, trans) = transform_error(&res.transform, &p.inverse());
        assert!(rot < 1e-3 && trans < 1e-3, "rotation {rot:e}, translation {trans:e}");
        assert!(res.converged);
    }
}

#[test]
fn alignments_compose() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..10 {
        let a = rendered_humanoid(&mut rng);
        let t1 = perturbation(&mut rng, &a.centroid(), 0.5, 0.005);
        let b = t1.apply_cloud(&a);
        let t2 = perturbation(&mut rng, &b.centroid(), 0.5, 0.005);
        let c = t2.apply_cloud(&b);
        // each result maps its source onto its target
        let ab = icp_align(&a, &b, &params()).unwrap().transform;
        let bc = icp_align(&b, &c, &params()).unwrap().transform;
        let ac = icp_align(&a, &c, &params()).unwrap().transform;
        let (rot, trans) = transform_error(&bc.compose(&ab), &ac);
        assert!(rot < 2e-3 && trans < 2e-3, "rotation {rot:e}, translation {trans:e}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn rmse_never_increases(seed in 0u64..1_000_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let target = rendered_humanoid(&mut rng);
        let p = perturbation(&mut rng, &target.centroid(), 10.0, 0.1);
        let res = icp_align(&p.apply_cloud(&target), &target, &params()).unwrap();
        prop_assert!(!res.rmse_history.is_empty());
        for w in res.rmse_history.windows(2) {
            prop_assert!(w[1] <= w[0], "{:?}", res.rmse_history);
        }
        prop_assert_eq!(res.final_rmse, *res.rmse_history.last().unwrap());
    }
}

#[test]
fn icp_repairs_centimeter_pose_errors_when_merging() {
    let mesh = shapes::humanoid();
    let intr = CameraIntrinsics::new(640, 480, 90.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let surface = PointCloud::new(mesh.sample_surface(20_000, &mut rng));
    let aim = Vec3::new(0.0, 0.0, 0.9);
    let frames: Vec<Frame> = (0..3)
        .map(|k| {
            let a = 0.12 * k as f64;
            let true_pose = CameraPose::look_at(Vec3::new(4.0 * a.cos(), 4.0 * a.sin(), 2.0), aim);
            let view = render(&mesh, &true_pose, &intr);
            let frame = CameraFrame::new(&true_pose);
            let cloud = backproject(&view).map(|p| frame.to_camera(p));
            let mut pose = true_pose;
            if k > 0 {
                pose.position += random_unit(&mut rng) * 0.01;
            }
            Frame { cloud, pose }
        })
        .collect();
    let cd = |use_icp| {
        let merged = merge_frames(&frames, use_icp, 0.01, &params()).unwrap();
        chamfer_distance(&merged, &surface).unwrap().forward_mm
    };
    let (with, without) = (cd(true), cd(false));
    assert!(with < without, "with icp {with:.3} mm, without {without:.3} mm");
}

#[test]
fn five_degree_yaw_and_shift_is_recovered() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    for _ in 0..5 {
        let source = rendered_humanoid(&mut rng);
        // source -> target
        let truth = RigidTransform::from_axis_angle(&Vec3::z(), 5f64.to_radians(), Vec3::new(0.05, 0.0, 0.0));
        let target = truth.apply_cloud(&source);
        let res = icp_align(&source, &target, &params()).unwrap();
        let (rot, trans) = transform_error(&res.transform, &truth);
        assert!(rot < 1e-3 && trans < 1e-3, "rotation {rot:e}, translation {trans:e}");
    }
}
