use std::path::Path;
use std::process::{Command, Output};

fn threedp(args: &[&str], seed: Option<&str>) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_threedp"));
    c.args(args).env_remove("THREEDP_SEED");
    if let Some(s) = seed {
        c.env("THREEDP_SEED", s);
    }
    c.output().unwrap()
}

fn ok(o: &Output) {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn generate_infer_evaluate_render() {
    let t = tempfile::tempdir().unwrap();
    let cfg = t.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"kernel": {"sweeps": 60, "stage2_sweeps_per_object": 20}}"#).unwrap();
    let scene = t.path().join("results/stacked_1");
    ok(&threedp(&["generate", "--category", "stacked", "--seed", "1", "--out", p(&scene)], None));
    let full = scene.join("samples_full.json");
    let abl = scene.join("samples_ablated.json");
    ok(&threedp(&["infer", "--scene", p(&scene), "--config", p(&cfg), "--samples", p(&full)], None));
    ok(&threedp(&["infer", "--scene", p(&scene), "--config", p(&cfg), "--ablate-structure", "--samples", p(&abl)], None));
    let report = t.path().join("report.csv");
    ok(&threedp(&["evaluate", "--results", p(&t.path().join("results")), "--report", p(&report)], None));
    let csv = std::fs::read_to_string(&report).unwrap();
    assert!(csv.starts_with("scene_id,category,object_type,method,add_s_cm\n"));
    assert_eq!(csv.lines().count(), 1 + 2 * 2);
    assert!(t.path().join("report.curve.csv").is_file());
    let img = t.path().join("render.dpt");
    ok(&threedp(&["render", "--scene", p(&scene.join("scene.json")), "--out", p(&img)], None));
    assert_eq!(std::fs::read(&img).unwrap(), std::fs::read(scene.join("observed.dpt")).unwrap());
}

#[test]
fn seed_variable_overrides_config() {
    let t = tempfile::tempdir().unwrap();
    let cfg = t.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"seed": 1, "kernel": {"sweeps": 40, "stage2_sweeps_per_object": 10}}"#).unwrap();
    let scene = t.path().join("s");
    ok(&threedp(&["generate", "--category", "single", "--seed", "5", "--out", p(&scene)], None));
    let run = |name: &str, seed: Option<&str>| {
        let f = t.path().join(name);
        ok(&threedp(&["infer", "--scene", p(&scene), "--config", p(&cfg), "--samples", p(&f)], seed));
        std::fs::read(f).unwrap()
    };
    let a = run("a.json", Some("99"));
    let b = run("b.json", Some("99"));
    let c = run("c.json", None);
    assert_eq!(a, b);
    assert_ne!(a, c);
    let v: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(v["seed"], 99);
}

#[test]
fn hidden_scene_existence() {
    let t = tempfile::tempdir().unwrap();
    let cfg = t.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"existence": {"sweeps": 300}}"#).unwrap();
    let scene = t.path().join("h");
    ok(&threedp(&["generate", "--category", "hidden", "--seed", "0", "--occluder-width", "14", "--out", p(&scene)], None));
    let out = t.path().join("existence.json");
    let o = threedp(&["infer-existence", "--scene", p(&scene), "--config", p(&cfg), "--out", p(&out)], None);
    ok(&o);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["presence"][0].as_f64().unwrap() > 0.5);
    assert!(out.is_file());
}

#[test]
fn learn_shapes_from_views() {
    use threedp::shape_learning::{learning_camera, orbit_poses, render_views, SceneMap};
    use threedp::shapes::{load_vox, shape_iou, VoxelShape};
    let t = tempfile::tempdir().unwrap();
    let shape = VoxelShape::full([8, 6, 4], 0.5);
    let map = SceneMap::room(shape.dims, shape.resolution);
    let poses = orbit_poses(&map, 5, 16.0, 0.7);
    let views = t.path().join("views");
    std::fs::create_dir_all(&views).unwrap();
    for (i, img) in render_views(&map, &shape, &poses, &learning_camera()).iter().enumerate() {
        threedp::renderer::save_depth(&views.join(format!("{i:02}.dpt")), img).unwrap();
    }
    let pf = t.path().join("poses.json");
    std::fs::write(&pf, threedp::harness::poses_to_json(&poses).unwrap()).unwrap();
    let out = t.path().join("learned.vox");
    ok(&threedp(&["learn-shapes", "--views", p(&views), "--poses", p(&pf), "--out", p(&out), "--dims", "8,6,4"], None));
    let iou = shape_iou(&load_vox(&out).unwrap().mode_shape(), &shape).unwrap();
    assert!(iou > 0.9, "{iou}");
}

#[test]
fn exit_codes() {
    let t = tempfile::tempdir().unwrap();
    assert_eq!(threedp(&["generate", "--category", "nope", "--seed", "1", "--out", p(t.path())], None).status.code(), Some(2));
    assert_eq!(
        threedp(&["generate", "--category", "single", "--seed", "1", "--out", p(t.path())], Some("abc")).status.code(),
        Some(2)
    );
    assert_eq!(threedp(&["infer", "--scene", "/nonexistent", "--samples", "x.json"], None).status.code(), Some(2));
    assert_eq!(threedp(&["bogus"], None).status.code(), Some(2));
    // A scene whose observation shows nothing gives no pose hypotheses.
    let scene = t.path().join("s");
    assert!(threedp(&["generate", "--category", "single", "--seed", "1", "--out", p(&scene)], None).status.success());
    let blank = threedp::renderer::DepthImage::blank(64, 64, 500.0);
    threedp::renderer::save_depth(&scene.join("observed.dpt"), &blank).unwrap();
    let o = threedp(&["infer", "--scene", p(&scene), "--samples", p(&t.path().join("x.json"))], None);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}
