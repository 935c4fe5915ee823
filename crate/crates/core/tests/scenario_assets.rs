use std::path::PathBuf;

use ppaview::*;

fn asset(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("assets").join(name)
}

#[test]
fn bundled_mesh_is_the_builtin_humanoid() {
    let loaded = load_mesh(&asset("humanoid.obj"), NormalOrientation::AsStored).unwrap();
    let builtin = shapes::humanoid();
    assert_eq!(loaded.vertices(), builtin.vertices());
    assert_eq!(loaded.triangles(), builtin.triangles());
    for (a, b) in loaded.normals().iter().zip(builtin.normals()) {
        assert!((a - b).norm() < 1e-12, "{a:?} vs {b:?}");
    }
}

#[test]
fn bundled_scenarios_load_and_validate() {
    for name in ["walking.toml", "correlate.toml", "tour.toml"] {
        let s = Scenario::load(&asset(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
        s.validate().unwrap();
        assert_eq!(s.mesh().unwrap().len(), shapes::humanoid().len(), "{name}");
    }
}

#[test]
fn walking_scenario_matches_the_comparison_setup() {
    let s = Scenario::load(&asset("walking.toml")).unwrap();
    assert_eq!(s.poses().len(), 50);
    assert_eq!((s.r_safe_m, s.t_max_m), (8.0, 1.0));
    assert_eq!(s.planner_kinds().unwrap(), PlannerKind::ALL.to_vec());
    for cam in s.initial_cameras() {
        let first = s.poses()[0].1.ground_point();
        assert!((cam - first).norm() >= s.r_safe_m);
    }
}

#[test]
fn unknown_keys_are_rejected() {
    let err = Scenario::parse("seed = 1\nwalk_frame = 3\n", &PathBuf::from(".")).unwrap_err();
    assert!(err.is_configuration());
}
