use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn mvfusion(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvfusion"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Vec<PathBuf> {
    let out = mvfusion(dir, args);
    assert!(
        out.status.success(),
        "mvfusion {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| dir.join(l))
        .collect()
}

/// Reads `key = value` from the first section that has `section` as header.
fn metric(report: &str, section: &str, key: &str) -> String {
    let body = report.split(&format!("[{section}]\n")).nth(1).expect("section present");
    body.lines()
        .take_while(|l| !l.starts_with('['))
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .expect("key present")
        .to_string()
}

#[test]
fn gen_is_byte_identical_across_runs() {
    let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = ["gen", "--preset", "nuscenes", "--seed", "7", "--frames", "5"];
    let a = ok(da.path(), &args);
    let b = ok(db.path(), &args);
    assert_eq!(a.len(), 6);
    for (pa, pb) in a.iter().zip(&b) {
        assert_eq!(pa.file_name(), pb.file_name());
        assert!(fs::read(pa).unwrap() == fs::read(pb).unwrap(), "{} differs", pa.display());
    }
    assert!(da.path().join("out/nuscenes_s7_f4.bundle").exists());
}

#[test]
fn fitted_outputs_score_perfect_ap() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen", "--seed", "3"]);
    let fitted = ok(d, &["fit", "out/desk_s3_f0.bundle", "--steps", "300"]);
    assert!(fitted.iter().any(|p| p.ends_with("out/desk_s3_f0.fit.outputs")));
    let fit_report = fs::read_to_string(d.join("out/desk_s3_f0.fit.txt")).unwrap();
    let start: f64 = metric(&format!("[fit]\n{fit_report}"), "fit", "loss_start").parse().unwrap();
    let end: f64 = metric(&format!("[fit]\n{fit_report}"), "fit", "loss_end").parse().unwrap();
    assert!(end < start);

    ok(d, &["eval", "out/desk_s3_f0.bundle", "--outputs", "out/desk_s3_f0.fit.outputs"]);
    let report = fs::read_to_string(d.join("out/metrics.txt")).unwrap();
    for class in ["vehicle", "pedestrian", "bicyclist"] {
        assert_eq!(metric(&report, &format!("{class} 0-30m"), "ap"), "1.000000", "{report}");
    }
}

#[test]
fn lidar_only_variant_runs_every_stage() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen", "--no-camera"]);
    let bundle = "out/desk_s0_f0.bundle";
    let projected = ok(d, &["project", "--no-camera", bundle]);
    assert!(projected.iter().all(|p| !p.to_string_lossy().contains("camera")));
    let rastered = ok(d, &["raster", "--no-camera", bundle]);
    assert!(rastered.iter().any(|p| p.ends_with("out/desk_s0_f0_bev_occupancy.pgm")));
    ok(d, &["forward", "--no-camera", bundle]);
    ok(d, &["eval", "--no-camera", bundle, "--outputs", "out/desk_s0_f0.outputs"]);
    let report = fs::read_to_string(d.join("out/metrics.txt")).unwrap();
    assert!(report.contains("variant = l-mv"));
    let config = fs::read_to_string(d.join("out/run_config.txt")).unwrap();
    assert!(config.contains("use_camera = false"), "{config}");
}

#[test]
fn saved_weights_reproduce_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen"]);
    ok(d, &["forward", "--weight-seed", "4", "out/desk_s0_f0.bundle"]);
    let seeded = fs::read(d.join("out/desk_s0_f0.outputs")).unwrap();
    ok(d, &["forward", "--weights", "out/desk_w4.weights", "--out", "again", "out/desk_s0_f0.bundle"]);
    assert_eq!(fs::read(d.join("again/desk_s0_f0.outputs")).unwrap(), seeded);
}

#[test]
fn bad_invocations_fail() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(!mvfusion(d, &["gen", "--bogus"]).status.success());
    assert!(!mvfusion(d, &["forward"]).status.success());
    let missing = mvfusion(d, &["raster", "nope.bundle"]);
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nope.bundle"));
    assert!(!mvfusion(d, &["gen", "--preset", "kitti"]).status.success());
    assert!(!mvfusion(d, &["gen", "--nms-iou", "1.5"]).status.success());
}

#[test]
fn preset_mismatch_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen"]);
    let out = mvfusion(d, &["raster", "--preset", "nuscenes", "out/desk_s0_f0.bundle"]);
    assert!(!out.status.success());
}

#[test]
fn selfcheck_passes() {
    let dir = tempfile::tempdir().unwrap();
    let written = ok(dir.path(), &["selfcheck", "--out", "sc"]);
    assert!(written.iter().any(|p| p.ends_with("sc/selfcheck_report.txt")));
    let report = fs::read_to_string(dir.path().join("sc/selfcheck_report.txt")).unwrap();
    assert!(!report.contains("status = fail"), "{report}");
}
