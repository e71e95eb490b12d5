use std::fs;

use sbr::config::{AngleRange, Spacing, SweepConfig};
use sbr::sweep::{plan_sweep, traced_angle_count};

#[test]
fn large_config_is_planned_without_tracing() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a380.json");
    fs::write(
        &path,
        r#"{
            "mesh": "a380.obj",
            "frequency": 10e9,
            "theta": { "start": 0, "stop": 180, "samples": 250 },
            "phi": { "start": 0, "stop": 360, "samples": 500 },
            "spacing": 0.003,
            "aperture_side": 90.0,
            "max_bounces": 100
        }"#,
    )
    .unwrap();
    let cfg = SweepConfig::load(&path).unwrap();
    assert_eq!(cfg.spacing, Spacing::Fixed(0.003));
    assert_eq!(cfg.theta, AngleRange { start: 0.0, stop: 180.0, samples: 250 });

    let before = traced_angle_count();
    let plan = plan_sweep(&cfg, None).unwrap();
    assert_eq!(traced_angle_count(), before);
    assert_eq!(plan.angles, 125_000);
    assert_eq!(plan.rays_per_angle_max, 30_000 * 30_000);
    assert_eq!(plan.total_rays, 900_000_000u128 * 125_000);
    assert!(plan.sampling_ok);
    assert!(plan.mesh_triangles.is_none());
}

#[test]
fn plan_without_mesh_needs_fixed_aperture() {
    let cfg = SweepConfig {
        frequency: 1e9,
        ..SweepConfig::default()
    };
    assert!(plan_sweep(&cfg, None).is_err());
}
