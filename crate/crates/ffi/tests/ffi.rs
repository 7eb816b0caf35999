use rand::SeedableRng;
use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;
use threedp::harness::{generate_hidden, generate_seeded, write_hidden, write_scene, Category, DeskSetup, HiddenSetup};
use threedp_ffi::*;

fn c(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn header() -> String {
    std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/threedp.h")).unwrap()
}

#[test]
fn header_declares_every_export() {
    let src = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let h = header();
    let mut n = 0;
    for line in src.lines().filter(|l| l.contains("extern \"C\" fn ")) {
        let name = line.split("fn ").nth(1).unwrap().split('(').next().unwrap();
        assert!(h.contains(&format!("{name}(")), "{name} missing from header");
        n += 1;
    }
    assert!(n >= 20, "{n}");
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = which_cc() else { return };
    let dir = tempfile::tempdir().unwrap();
    let main = dir.path().join("main.c");
    std::fs::write(
        &main,
        "#include \"threedp.h\"\nint main(void) { ThreedpConfig *c = 0; ThreedpStatus s = threedp_config_default(&c); threedp_config_free(c); return s == THREEDP_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    let inc = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let st = Command::new(cc).arg("-fsyntax-only").arg("-Wall").arg("-Werror").arg("-I").arg(&inc).arg(&main).status().unwrap();
    assert!(st.success());
}

fn which_cc() -> Result<&'static str, ()> {
    for cc in ["cc", "clang", "gcc"] {
        if Command::new(cc).arg("--version").output().is_ok() {
            return Ok(cc);
        }
    }
    Err(())
}

#[test]
fn infer_through_the_c_interface() {
    let dir = tempfile::tempdir().unwrap();
    let setup = DeskSetup::default();
    let spec = generate_seeded(Category::Single, &setup, 4).unwrap();
    write_scene(dir.path(), &spec, &setup, None).unwrap();
    unsafe {
        let mut scene = ptr::null_mut();
        assert_eq!(threedp_scene_load(c(dir.path()).as_ptr(), &mut scene), ThreedpStatus::Ok);
        let mut n = 0usize;
        assert_eq!(threedp_scene_num_objects(scene, &mut n), ThreedpStatus::Ok);
        assert_eq!(n, 1);

        let json = CString::new(r#"{"seed": 9, "kernel": {"sweeps": 40, "stage2_sweeps_per_object": 20}}"#).unwrap();
        let mut cfg = ptr::null_mut();
        assert_eq!(threedp_config_from_json(json.as_ptr(), &mut cfg), ThreedpStatus::Ok);

        let mut files = Vec::new();
        for run in 0..2 {
            let mut res = ptr::null_mut();
            assert_eq!(threedp_infer(scene, cfg, 0, &mut res), ThreedpStatus::Ok);
            let (mut t, mut q) = ([0.0; 3], [0.0; 4]);
            assert_eq!(threedp_result_best_pose(res, 1, t.as_mut_ptr(), q.as_mut_ptr()), ThreedpStatus::Ok);
            assert!((q.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-9);
            assert_eq!(threedp_result_best_pose(res, 7, t.as_mut_ptr(), q.as_mut_ptr()), ThreedpStatus::OutOfRange);
            let mut parent = 0i64;
            assert_eq!(threedp_result_best_parent(res, 0, &mut parent), ThreedpStatus::Ok);
            assert_eq!(parent, -1);
            let f = dir.path().join(format!("samples_{run}.json"));
            assert_eq!(threedp_result_write_samples(res, c(&f).as_ptr()), ThreedpStatus::Ok);
            files.push(std::fs::read(&f).unwrap());
            threedp_result_free(res);
        }
        assert_eq!(files[0], files[1]);
        threedp_config_free(cfg);
        threedp_scene_free(scene);

        let mut depth = ptr::null_mut();
        assert_eq!(threedp_depth_load(c(&dir.path().join("observed.dpt")).as_ptr(), &mut depth), ThreedpStatus::Ok);
        let (mut w, mut h, mut d) = (0usize, 0usize, 0.0);
        assert_eq!(threedp_depth_size(depth, &mut w, &mut h), ThreedpStatus::Ok);
        assert_eq!((w, h), (64, 64));
        assert_eq!(threedp_depth_get(depth, 32, 40, &mut d), ThreedpStatus::Ok);
        assert!(d > 0.0);
        assert_eq!(threedp_depth_get(depth, 64, 0, &mut d), ThreedpStatus::OutOfRange);
        threedp_depth_free(depth);
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let mut cfg = ptr::null_mut();
        let bad = CString::new(r#"{"kernel": {"sweeps": "many"}}"#).unwrap();
        assert_eq!(threedp_config_from_json(bad.as_ptr(), &mut cfg), ThreedpStatus::InvalidInput);
        assert!(cfg.is_null());
        assert!(!CStr::from_ptr(threedp_last_error()).to_bytes().is_empty());
        let mut scene = ptr::null_mut();
        let missing = CString::new("/nonexistent/scene").unwrap();
        assert_eq!(threedp_scene_load(missing.as_ptr(), &mut scene), ThreedpStatus::InvalidInput);
        assert_eq!(threedp_config_default(&mut cfg), ThreedpStatus::Ok);
        assert_eq!(threedp_config_set_sweeps(cfg, 0), ThreedpStatus::InvalidInput);
        threedp_config_free(cfg);
    }
}

#[test]
fn hopf_coordinates_round_trip() {
    let t = [1.0, -2.0, 0.5];
    let q = [0.9, 0.1, -0.3, 0.2f64];
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let q = q.map(|v| v / n);
    let (mut coords, mut t2, mut q2) = ([0.0; 7], [0.0; 3], [0.0; 4]);
    unsafe {
        assert_eq!(threedp_xi(t.as_ptr(), q.as_ptr(), coords.as_mut_ptr()), ThreedpStatus::Ok);
        assert_eq!(threedp_xi_inv(coords.as_ptr(), t2.as_mut_ptr(), q2.as_mut_ptr()), ThreedpStatus::Ok);
    }
    let dot: f64 = q.iter().zip(&q2).map(|(a, b)| a * b).sum();
    assert!((dot.abs() - 1.0).abs() < 1e-12);
    assert!(t.iter().zip(&t2).all(|(a, b)| (a - b).abs() < 1e-12));
}

#[test]
fn existence_through_the_c_interface() {
    let dir = tempfile::tempdir().unwrap();
    let scene = generate_hidden(HiddenSetup::new(0.0), 1, &mut rand_chacha::ChaCha8Rng::seed_from_u64(1)).unwrap();
    write_hidden(dir.path(), &scene).unwrap();
    unsafe {
        let mut h = ptr::null_mut();
        assert_eq!(threedp_hidden_load(c(dir.path()).as_ptr(), &mut h), ThreedpStatus::Ok);
        let mut cfg = ptr::null_mut();
        threedp_config_default(&mut cfg);
        threedp_config_set_sweeps(cfg, 200);
        let (mut p, mut len) = ([9.0f64; 2], 0usize);
        assert_eq!(threedp_infer_existence(h, cfg, p.as_mut_ptr(), 2, &mut len), ThreedpStatus::Ok);
        assert_eq!(len, 1);
        assert!(p[0] < 0.05);
        assert_eq!(p[1], 9.0);
        threedp_config_free(cfg);
        threedp_hidden_free(h);
    }
}
