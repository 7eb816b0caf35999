//! C interface to `threedp`.
//!
//! Every function returns a [`ThreedpStatus`]; results come back through
//! out-pointers. Handles are opaque and owned by the caller, who releases
//! them with the matching `*_free` function. After a failure,
//! [`threedp_last_error`] describes what went wrong on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use threedp::geometry::{xi, xi_inv, ContactPlane, HopfContactCoords, Pose, Quat, Vec3, NUM_FACES};
use threedp::harness::{
    infer_hidden, infer_scene, load_hidden, load_scene, write_samples, HiddenScene, LoadedScene, RunConfig, SamplesFile,
};
use threedp::inference::InferenceResult;
use threedp::likelihood::planes_from_beliefs;
use threedp::renderer::DepthImage;
use threedp::scenegraph::Parent;
use threedp::Error;

/// Outcome of a call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThreedpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    InferenceFailure = 3,
    OutOfRange = 4,
    Panic = 5,
}

/// A scene directory loaded from disk.
pub struct ThreedpScene {
    scene: LoadedScene,
    planes: Vec<[ContactPlane; NUM_FACES]>,
}

/// Inference and existence settings.
pub struct ThreedpConfig(RunConfig);

/// Output of pose and structure inference.
pub struct ThreedpResult {
    result: InferenceResult,
    best_poses: Vec<Pose>,
    seed: u64,
    ablated: bool,
}

/// A hidden-object scene.
pub struct ThreedpHiddenScene(HiddenScene);

/// A depth image, row-major, in centimeters.
pub struct ThreedpDepth(DepthImage);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn fail(e: Error) -> ThreedpStatus {
    set_error(&e.to_string());
    if e.exit_code() == 3 {
        ThreedpStatus::InferenceFailure
    } else {
        ThreedpStatus::InvalidInput
    }
}

fn guard(f: impl FnOnce() -> Result<(), ThreedpStatus>) -> ThreedpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ThreedpStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            ThreedpStatus::Panic
        }
    }
}

unsafe fn arg<'a, T>(p: *const T) -> Result<&'a T, ThreedpStatus> {
    p.as_ref().ok_or_else(|| {
        set_error("null pointer argument");
        ThreedpStatus::NullPointer
    })
}

unsafe fn out<'a, T>(p: *mut T) -> Result<&'a mut T, ThreedpStatus> {
    p.as_mut().ok_or_else(|| {
        set_error("null output pointer");
        ThreedpStatus::NullPointer
    })
}

unsafe fn path<'a>(p: *const c_char) -> Result<&'a Path, ThreedpStatus> {
    let s = CStr::from_ptr(arg(p)?).to_str().map_err(|_| {
        set_error("path is not UTF-8");
        ThreedpStatus::InvalidInput
    })?;
    Ok(Path::new(s))
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message for the last failed call on this thread. Valid until the next
/// call that fails.
#[no_mangle]
pub extern "C" fn threedp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn threedp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `dir` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn threedp_scene_load(dir: *const c_char, out_scene: *mut *mut ThreedpScene) -> ThreedpStatus {
    guard(|| {
        let o = out(out_scene)?;
        let scene = load_scene(path(dir)?).map_err(fail)?;
        let planes = planes_from_beliefs(&scene.beliefs);
        *o = boxed(ThreedpScene { scene, planes });
        Ok(())
    })
}

/// Number of objects to infer (the table excluded).
///
/// # Safety
/// `scene` must come from [`threedp_scene_load`].
#[no_mangle]
pub unsafe extern "C" fn threedp_scene_num_objects(scene: *const ThreedpScene, out_n: *mut usize) -> ThreedpStatus {
    guard(|| {
        *out(out_n)? = arg(scene)?.scene.spec.types.len();
        Ok(())
    })
}

/// # Safety
/// `scene` must come from [`threedp_scene_load`] or be null.
#[no_mangle]
pub unsafe extern "C" fn threedp_scene_free(scene: *mut ThreedpScene) {
    free(scene)
}

/// Default settings.
///
/// # Safety
/// `out_config` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn threedp_config_default(out_config: *mut *mut ThreedpConfig) -> ThreedpStatus {
    guard(|| {
        *out(out_config)? = boxed(ThreedpConfig(RunConfig::default()));
        Ok(())
    })
}

/// Settings from a JSON document; missing fields keep their defaults.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out_config` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn threedp_config_from_json(json: *const c_char, out_config: *mut *mut ThreedpConfig) -> ThreedpStatus {
    guard(|| {
        let o = out(out_config)?;
        let s = CStr::from_ptr(arg(json)?).to_str().map_err(|_| {
            set_error("config is not UTF-8");
            ThreedpStatus::InvalidInput
        })?;
        *o = boxed(ThreedpConfig(RunConfig::from_json(s).map_err(fail)?));
        Ok(())
    })
}

/// # Safety
/// `config` must come from a `threedp_config_*` constructor.
#[no_mangle]
pub unsafe extern "C" fn threedp_config_set_seed(config: *mut ThreedpConfig, seed: u64) -> ThreedpStatus {
    guard(|| {
        out(config)?.0.seed = seed;
        Ok(())
    })
}

/// Sets the sweep count of both the pose chain and the existence chain.
///
/// # Safety
/// `config` must come from a `threedp_config_*` constructor.
#[no_mangle]
pub unsafe extern "C" fn threedp_config_set_sweeps(config: *mut ThreedpConfig, sweeps: usize) -> ThreedpStatus {
    guard(|| {
        let c = out(config)?;
        if sweeps == 0 {
            set_error("sweeps must be positive");
            return Err(ThreedpStatus::InvalidInput);
        }
        c.0.kernel.sweeps = sweeps;
        c.0.existence.sweeps = sweeps;
        Ok(())
    })
}

/// # Safety
/// `config` must come from a `threedp_config_*` constructor or be null.
#[no_mangle]
pub unsafe extern "C" fn threedp_config_free(config: *mut ThreedpConfig) {
    free(config)
}

/// Runs pose and structure inference. A nonzero `ablate_structure`
/// disables structure moves.
///
/// # Safety
/// Handles must be live; `out_result` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn threedp_infer(
    scene: *const ThreedpScene,
    config: *const ThreedpConfig,
    ablate_structure: c_int,
    out_result: *mut *mut ThreedpResult,
) -> ThreedpStatus {
    guard(|| {
        let o = out(out_result)?;
        let (s, c) = (arg(scene)?, arg(config)?);
        let result = infer_scene(&s.scene, &c.0, ablate_structure != 0).map_err(fail)?;
        let best_poses = result.best.world_poses(&s.planes).map_err(fail)?;
        *o = boxed(ThreedpResult { result, best_poses, seed: c.0.seed, ablated: ablate_structure != 0 });
        Ok(())
    })
}

/// # Safety
/// `result` must come from [`threedp_infer`].
#[no_mangle]
pub unsafe extern "C" fn threedp_result_num_samples(result: *const ThreedpResult, out_n: *mut usize) -> ThreedpStatus {
    guard(|| {
        *out(out_n)? = arg(result)?.result.samples.len();
        Ok(())
    })
}

/// World pose of object `index` (0 is the table) in the best state:
/// translation `[x, y, z]` and unit quaternion `[w, x, y, z]`.
///
/// # Safety
/// `out_t` must hold 3 doubles and `out_q` 4.
#[no_mangle]
pub unsafe extern "C" fn threedp_result_best_pose(
    result: *const ThreedpResult,
    index: usize,
    out_t: *mut f64,
    out_q: *mut f64,
) -> ThreedpStatus {
    guard(|| {
        let r = arg(result)?;
        let (t, q) = (out(out_t)?, out(out_q)?);
        let Some(p) = r.best_poses.get(index) else {
            set_error("object index out of range");
            return Err(ThreedpStatus::OutOfRange);
        };
        let t = std::slice::from_raw_parts_mut(t, 3);
        let q = std::slice::from_raw_parts_mut(q, 4);
        t.copy_from_slice(p.translation.as_slice());
        q.copy_from_slice(&p.rotation.as_array());
        Ok(())
    })
}

/// Parent of object `index` in the best state: -1 for the world, else the
/// index of the supporting object.
///
/// # Safety
/// `result` must come from [`threedp_infer`].
#[no_mangle]
pub unsafe extern "C" fn threedp_result_best_parent(
    result: *const ThreedpResult,
    index: usize,
    out_parent: *mut i64,
) -> ThreedpStatus {
    guard(|| {
        let r = arg(result)?;
        let o = out(out_parent)?;
        let Some(node) = r.result.best.nodes.get(index) else {
            set_error("object index out of range");
            return Err(ThreedpStatus::OutOfRange);
        };
        *o = match node.parent {
            Parent::Root => -1,
            Parent::Object(u) => u as i64,
        };
        Ok(())
    })
}

/// Writes the samples file the CLI `infer` command would write.
///
/// # Safety
/// `result` must come from [`threedp_infer`]; `file` a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn threedp_result_write_samples(result: *const ThreedpResult, file: *const c_char) -> ThreedpStatus {
    guard(|| {
        let r = arg(result)?;
        let method = if r.ablated { "ablated" } else { "full" };
        let s = SamplesFile::new(method, r.seed, &r.result).map_err(fail)?;
        write_samples(path(file)?, &s).map_err(fail)
    })
}

/// # Safety
/// `result` must come from [`threedp_infer`] or be null.
#[no_mangle]
pub unsafe extern "C" fn threedp_result_free(result: *mut ThreedpResult) {
    free(result)
}

/// # Safety
/// `dir` must be a NUL-terminated string; `out_scene` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn threedp_hidden_load(dir: *const c_char, out_scene: *mut *mut ThreedpHiddenScene) -> ThreedpStatus {
    guard(|| {
        let o = out(out_scene)?;
        *o = boxed(ThreedpHiddenScene(load_hidden(path(dir)?).map_err(fail)?));
        Ok(())
    })
}

/// # Safety
/// `scene` must come from [`threedp_hidden_load`] or be null.
#[no_mangle]
pub unsafe extern "C" fn threedp_hidden_free(scene: *mut ThreedpHiddenScene) {
    free(scene)
}

/// Posterior presence probability of each candidate. Writes up to
/// `capacity` values and stores the candidate count in `out_len`.
///
/// # Safety
/// `out_presence` must hold `capacity` doubles (may be null when 0).
#[no_mangle]
pub unsafe extern "C" fn threedp_infer_existence(
    scene: *const ThreedpHiddenScene,
    config: *const ThreedpConfig,
    out_presence: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> ThreedpStatus {
    guard(|| {
        let (s, c) = (arg(scene)?, arg(config)?);
        let len = out(out_len)?;
        let r = infer_hidden(&s.0, &c.0).map_err(fail)?;
        *len = r.presence.len();
        let n = capacity.min(r.presence.len());
        if n > 0 {
            std::slice::from_raw_parts_mut(out(out_presence)?, n).copy_from_slice(&r.presence[..n]);
        }
        Ok(())
    })
}

/// Loads a DPT1 depth image.
///
/// # Safety
/// `file` must be a NUL-terminated path; `out_depth` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn threedp_depth_load(file: *const c_char, out_depth: *mut *mut ThreedpDepth) -> ThreedpStatus {
    guard(|| {
        let o = out(out_depth)?;
        *o = boxed(ThreedpDepth(threedp::renderer::load_depth(path(file)?).map_err(fail)?));
        Ok(())
    })
}

/// Renders the ground truth of a `scene.json`.
///
/// # Safety
/// `file` must be a NUL-terminated path; `out_depth` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn threedp_render_scene_file(file: *const c_char, out_depth: *mut *mut ThreedpDepth) -> ThreedpStatus {
    guard(|| {
        let o = out(out_depth)?;
        *o = boxed(ThreedpDepth(threedp::harness::render_scene_file(path(file)?).map_err(fail)?));
        Ok(())
    })
}

/// Image size and the depth at pixel `(u, v)`.
///
/// # Safety
/// `depth` must be live; out-pointers valid.
#[no_mangle]
pub unsafe extern "C" fn threedp_depth_size(
    depth: *const ThreedpDepth,
    out_width: *mut usize,
    out_height: *mut usize,
) -> ThreedpStatus {
    guard(|| {
        let d = &arg(depth)?.0;
        *out(out_width)? = d.width;
        *out(out_height)? = d.height;
        Ok(())
    })
}

/// # Safety
/// `depth` must be live; `out_value` valid.
#[no_mangle]
pub unsafe extern "C" fn threedp_depth_get(depth: *const ThreedpDepth, u: usize, v: usize, out_value: *mut f64) -> ThreedpStatus {
    guard(|| {
        let d = &arg(depth)?.0;
        let o = out(out_value)?;
        if u >= d.width || v >= d.height {
            set_error("pixel out of range");
            return Err(ThreedpStatus::OutOfRange);
        }
        *o = d.get(u, v);
        Ok(())
    })
}

/// # Safety
/// `depth` must come from a depth constructor or be null.
#[no_mangle]
pub unsafe extern "C" fn threedp_depth_free(depth: *mut ThreedpDepth) {
    free(depth)
}

/// Contact coordinates `[a, b, z, eta_x, eta_y, eta_z, phi]` of a relative
/// pose given as translation `[x, y, z]` and quaternion `[w, x, y, z]`.
///
/// # Safety
/// `t` must hold 3 doubles, `q` 4 and `out_coords` 7.
#[no_mangle]
pub unsafe extern "C" fn threedp_xi(t: *const f64, q: *const f64, out_coords: *mut f64) -> ThreedpStatus {
    guard(|| {
        let t = std::slice::from_raw_parts(arg(t)?, 3);
        let q = std::slice::from_raw_parts(arg(q)?, 4);
        let o = std::slice::from_raw_parts_mut(out(out_coords)?, 7);
        let c = xi(&Pose::new(Vec3::new(t[0], t[1], t[2]), Quat::new(q[0], q[1], q[2], q[3]))).map_err(fail)?;
        o.copy_from_slice(&[c.a, c.b, c.z, c.eta.x, c.eta.y, c.eta.z, c.phi]);
        Ok(())
    })
}

/// Inverse of [`threedp_xi`].
///
/// # Safety
/// `coords` must hold 7 doubles, `out_t` 3 and `out_q` 4.
#[no_mangle]
pub unsafe extern "C" fn threedp_xi_inv(coords: *const f64, out_t: *mut f64, out_q: *mut f64) -> ThreedpStatus {
    guard(|| {
        let c = std::slice::from_raw_parts(arg(coords)?, 7);
        let eta = Vec3::new(c[3], c[4], c[5]);
        if !(eta.iter().all(|v| v.is_finite()) && (eta.norm() - 1.0).abs() < 1e-6) {
            set_error("eta must be a unit vector");
            return Err(ThreedpStatus::InvalidInput);
        }
        let p = xi_inv(&HopfContactCoords { a: c[0], b: c[1], z: c[2], eta, phi: c[6] }).map_err(fail)?;
        std::slice::from_raw_parts_mut(out(out_t)?, 3).copy_from_slice(p.translation.as_slice());
        std::slice::from_raw_parts_mut(out(out_q)?, 4).copy_from_slice(&p.rotation.as_array());
        Ok(())
    })
}
