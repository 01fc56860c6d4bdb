use std::path::Path;
use std::process::{Command, Output};

use wsdist::io::{self, Metadata};
use wsdist::{
    generate_points, signed_maps_for_all_classes, signed_maps_per_slice, AbsentClassPolicy,
    DistanceKind, Engine, GridShape, LabelVolume, PointAnnotationConfig, ProbabilityVolume,
    TransformConfig,
};
use wsdist_cli::phantom::{phantom, NUM_CLASSES};

fn wsdist(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wsdist"))
        .args(args)
        .env_remove("WSDIST_THREADS")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(wsdist(&["--help"]).status.code(), Some(0));
    assert_eq!(wsdist(&["distmap", "--help"]).status.code(), Some(0));
    assert_eq!(wsdist(&["distmap", "--bogus"]).status.code(), Some(2));
    assert_eq!(wsdist(&[]).status.code(), Some(2));
    let out = wsdist(&[
        "distmap", "--image", "a.npy", "--labels", "b.npy", "--out", "o", "--kind", "mbd", "--engine",
        "raster",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("raster"));
    let out = Command::new(env!("CARGO_BIN_EXE_wsdist"))
        .args(["bench", "--reps", "1"])
        .env("WSDIST_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_input_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.npy");
    let out = wsdist(&["points", "--labels", s(&missing), "--out", s(&dir.path().join("w.npy")), "--seed", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

/// Writes a small anisotropic phantom and its point annotations.
fn fixture(dir: &Path) -> (wsdist::ScalarVolume, LabelVolume) {
    let (image, full) = phantom(&[24, 20, 4], &[2.07, 2.07, 8.0], 5).unwrap();
    io::write_scalar(&image, &dir.join("image.npy"), &Metadata::default()).unwrap();
    io::write_labels(&full, &dir.join("full.npy"), &Metadata::default()).unwrap();
    (image, full)
}

#[test]
fn points_then_distmap_in_two_and_three_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (_, full) = fixture(d);

    let weak_path = d.join("weak.npy");
    let out = wsdist(&["points", "--labels", s(&d.join("full.npy")), "--out", s(&weak_path), "--seed", "42"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let weak = io::read_labels(&weak_path).unwrap();
    assert_eq!(weak, generate_points(&full, &PointAnnotationConfig::new(42)).unwrap());
    let sidecar: serde_json::Value =
        serde_json::from_slice(&std::fs::read(d.join("weak.json")).unwrap()).unwrap();
    assert_eq!(sidecar["seed"], 42);

    // The image passes through float32 on disk.
    let image = io::read_scalar(&d.join("image.npy")).unwrap();
    let cfg = TransformConfig::new(DistanceKind::Geodesic);
    for (dims, expected) in [
        ("2d", signed_maps_per_slice(&image, &weak, &cfg, &Engine::Exact, &AbsentClassPolicy::Zeros).unwrap()),
        ("3d", signed_maps_for_all_classes(&image, &weak, &cfg, &Engine::Exact, &AbsentClassPolicy::Zeros).unwrap()),
    ] {
        let out_dir = d.join(format!("maps{dims}"));
        let out = wsdist(&[
            "distmap", "--image", s(&d.join("image.npy")), "--labels", s(&weak_path), "--out", s(&out_dir),
            "--kind", "geo", "--dims", dims, "--json",
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(summary["outputs"].as_array().unwrap().len(), NUM_CLASSES - 1);
        for map in &expected {
            let got = io::read_signed_map(&out_dir.join(format!("class_{}.npy", map.class_id()))).unwrap();
            assert_eq!(got.shape(), image.shape());
            for (a, b) in got.data().iter().zip(map.data()) {
                assert_eq!(*a, f64::from(*b as f32));
            }
        }
        let sidecar: serde_json::Value =
            serde_json::from_slice(&std::fs::read(out_dir.join("class_1.json")).unwrap()).unwrap();
        assert_eq!(sidecar["transform_config"]["kind"], "geodesic");
        assert_eq!(sidecar["spacing"], serde_json::json!([2.07, 2.07, 8.0]));
    }
}

#[test]
fn raster_distmap_and_loss() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (_, full) = fixture(d);
    let weak = generate_points(&full, &PointAnnotationConfig::new(3)).unwrap();
    io::write_labels(&weak, &d.join("weak.npy"), &Metadata::default()).unwrap();
    let out = wsdist(&[
        "distmap", "--image", s(&d.join("image.npy")), "--labels", s(&d.join("weak.npy")), "--out",
        s(&d.join("maps")), "--kind", "int", "--engine", "raster", "--passes", "2", "--absent", "const:1.5",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let probs = ProbabilityVolume::one_hot(&full);
    io::write_probabilities(&probs, &d.join("probs.npy"), &Metadata::default()).unwrap();
    let out = wsdist(&[
        "loss", "--probs", s(&d.join("probs.npy")), "--labels", s(&d.join("weak.npy")), "--maps",
        s(&d.join("maps")), "--alpha", "0.5", "--json",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let (total, ce, bl) = (v["total"].as_f64().unwrap(), v["ce_term"].as_f64().unwrap(), v["bl_term"].as_f64().unwrap());
    assert!((total - (ce + 0.5 * bl)).abs() < 1e-9);
    // One-hot predictions of the true labels: annotated voxels have probability 1.
    assert_eq!(ce, 0.0);
    assert!(bl.is_finite());
}

#[test]
fn metrics_over_directories() {
    let dir = tempfile::tempdir().unwrap();
    let (gt_dir, pred_dir) = (dir.path().join("gt"), dir.path().join("pred"));
    std::fs::create_dir_all(&gt_dir).unwrap();
    std::fs::create_dir_all(&pred_dir).unwrap();
    let shape = GridShape::new(vec![6, 6], vec![1.0, 2.0]).unwrap();
    let mut a = vec![0u32; 36];
    let mut b = vec![0u32; 36];
    for r in 1..4 {
        for c in 1..4 {
            a[r * 6 + c] = 1;
            b[r * 6 + c + 1] = 1;
        }
    }
    let gt = LabelVolume::new(shape.clone(), 2, a).unwrap();
    let pred = LabelVolume::new(shape, 2, b).unwrap();
    for name in ["s1.npy", "s2.npy"] {
        io::write_labels(&gt, &gt_dir.join(name), &Metadata::default()).unwrap();
        io::write_labels(&pred, &pred_dir.join(name), &Metadata::default()).unwrap();
    }
    let report_path = dir.path().join("report.json");
    let out = wsdist(&["metrics", "--gt", s(&gt_dir), "--pred", s(&pred_dir), "--out", s(&report_path)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&report_path).unwrap()).unwrap();
    assert_eq!(v["schema"], 1);
    // 6 shared voxels out of 9 + 9.
    assert!((v["per_class"]["1"]["dsc"].as_f64().unwrap() - 12.0 / 18.0).abs() < 1e-12);
    assert_eq!(v["overall"]["hd95"].as_f64(), Some(2.0));

    std::fs::remove_file(pred_dir.join("s2.npy")).unwrap();
    let out = wsdist(&["metrics", "--gt", s(&gt_dir), "--pred", s(&pred_dir)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bench_reports_for_one_and_five_repetitions() {
    for reps in ["1", "5"] {
        let out = Command::new(env!("CARGO_BIN_EXE_wsdist"))
            .args(["bench", "--reps", reps, "--size-2d", "24,24", "--size-3d", "12,12,4", "--json"])
            .env("WSDIST_THREADS", "1")
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0));
        let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(v["schema"], 1);
        let rows = v["rows"].as_array().unwrap();
        assert_eq!(rows.len(), 4);
        for row in rows {
            for key in ["mean_2d_s", "mean_3d_s"] {
                assert!(row[key].as_f64().unwrap() >= 0.0);
            }
            assert_eq!(row["samples_3d_s"].as_array().unwrap().len(), reps.parse::<usize>().unwrap());
        }
    }
    let table = wsdist(&["bench", "--reps", "1", "--size-2d", "16,16", "--size-3d", "8,8,2"]);
    let text = String::from_utf8(table.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[0].contains("2D") && lines[0].contains("3D"));
    assert_eq!(wsdist(&["bench", "--reps", "0"]).status.code(), Some(2));
}
