use super::{Category, DeskSetup, SceneSpec, OBJECT_NAMES, TABLE_TYPE};
use crate::error::{Error, Result};
use crate::existence::ExistenceConfig;
use crate::geometry::{Pose, Quat, Vec3};
use crate::inference::{run_inference, ChainRng, InferenceProblem, InferenceResult, KernelConfig};
use crate::likelihood::CloudLikParams;
use crate::renderer::{load_depth, render_depth, save_depth, unproject, DepthImage};
use crate::scenegraph::{Bounds, Camera, SceneGraph};
use crate::shapes::{bounding_cuboid_planes, load_vox, save_vox, ShapeBelief};
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LikelihoodConfig {
    pub c: f64,
    pub r_ball: f64,
    pub ktilde_override: Option<usize>,
}

impl Default for LikelihoodConfig {
    fn default() -> Self {
        let p = CloudLikParams::new(1.0);
        Self { c: p.c, r_ball: p.r_ball, ktilde_override: p.ktilde_override }
    }
}

impl LikelihoodConfig {
    pub fn params(&self, bounds: &Bounds) -> CloudLikParams {
        CloudLikParams { c: self.c, r_ball: self.r_ball, bounds_volume: bounds.volume(), ktilde_override: self.ktilde_override }
    }
}

/// Everything the CLI reads from a config file. Missing fields keep their
/// defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub kernel: KernelConfig,
    pub likelihood: LikelihoodConfig,
    /// Replaces the desk camera when generating scenes.
    pub camera: Option<Camera>,
    /// Depth noise for generated observations (cm).
    pub noise_std: f64,
    pub existence: ExistenceConfig,
}

impl RunConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(s)?;
        cfg.kernel.validate()?;
        cfg.existence.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn setup(&self) -> DeskSetup {
        let mut s = DeskSetup::default();
        if let Some(c) = self.camera {
            s.camera = c;
        }
        s.noise_std = self.noise_std;
        s
    }
}

#[derive(Serialize, Deserialize)]
struct SceneJson {
    id: String,
    category: String,
    seed: u64,
    types: Vec<String>,
    table_pose: Pose,
    bounds: Bounds,
    camera: Camera,
    truth: Value,
}

fn type_index(name: &str) -> Result<usize> {
    OBJECT_NAMES.iter().position(|n| *n == name).ok_or_else(|| Error::Parse(format!("unknown object type {name:?}")))
}

/// A scene directory read back from disk.
#[derive(Debug, Clone)]
pub struct LoadedScene {
    pub spec: SceneSpec,
    /// Shape belief for every library type, table included.
    pub beliefs: Vec<ShapeBelief>,
    pub table_pose: Pose,
    pub bounds: Bounds,
    pub camera: Camera,
}

/// Writes `scene.json`, `observed.dpt` and one `shapes/<type>.vox` per
/// library type. `beliefs` defaults to the exact library shapes.
pub fn write_scene(dir: &Path, spec: &SceneSpec, setup: &DeskSetup, beliefs: Option<&[ShapeBelief]>) -> Result<()> {
    fs::create_dir_all(dir.join("shapes"))?;
    let meta = SceneJson {
        id: spec.id.clone(),
        category: spec.category.to_string(),
        seed: spec.seed,
        types: spec.types.iter().map(|&t| OBJECT_NAMES[t].to_string()).collect(),
        table_pose: setup.table_pose,
        bounds: setup.bounds,
        camera: setup.camera,
        truth: serde_json::from_str(&spec.truth.to_json())?,
    };
    fs::write(dir.join("scene.json"), serde_json::to_string_pretty(&meta)?)?;
    save_depth(&dir.join("observed.dpt"), &spec.observation)?;
    let exact: Vec<ShapeBelief> = setup.library.iter().map(|s| s.to_belief()).collect();
    for (t, b) in beliefs.unwrap_or(&exact).iter().enumerate() {
        save_vox(&dir.join("shapes").join(format!("{}.vox", OBJECT_NAMES[t])), b)?;
    }
    Ok(())
}

pub fn load_scene(dir: &Path) -> Result<LoadedScene> {
    let meta: SceneJson = serde_json::from_str(&fs::read_to_string(dir.join("scene.json"))?)?;
    let category: Category = meta.category.parse()?;
    let types = meta.types.iter().map(|n| type_index(n)).collect::<Result<Vec<_>>>()?;
    let truth = SceneGraph::from_json(&meta.truth.to_string())?;
    let beliefs =
        OBJECT_NAMES.iter().map(|n| load_vox(&dir.join("shapes").join(format!("{n}.vox")))).collect::<Result<Vec<_>>>()?;
    truth.validate(beliefs.len())?;
    meta.camera.validate()?;
    let observation = load_depth(&dir.join("observed.dpt"))?;
    if observation.width != meta.camera.width || observation.height != meta.camera.height {
        return Err(Error::DimMismatch("observation size differs from the camera".into()));
    }
    Ok(LoadedScene {
        spec: SceneSpec { id: meta.id, category, seed: meta.seed, types, truth, observation },
        beliefs,
        table_pose: meta.table_pose,
        bounds: meta.bounds,
        camera: meta.camera,
    })
}

/// Renders the ground truth of a `scene.json`. Shapes are the mode shapes
/// stored next to it when present, the exact library otherwise.
pub fn render_scene_file(path: &Path) -> Result<DepthImage> {
    let meta: SceneJson = serde_json::from_str(&fs::read_to_string(path)?)?;
    meta.camera.validate()?;
    let truth = SceneGraph::from_json(&meta.truth.to_string())?;
    let shapes_dir = path.parent().unwrap_or(Path::new(".")).join("shapes");
    let library = if shapes_dir.is_dir() {
        OBJECT_NAMES
            .iter()
            .map(|n| load_vox(&shapes_dir.join(format!("{n}.vox"))).map(|b| b.mode_shape()))
            .collect::<Result<Vec<_>>>()?
    } else {
        super::object_library()
    };
    truth.validate(library.len())?;
    let planes = library.iter().map(bounding_cuboid_planes).collect::<Result<Vec<_>>>()?;
    render_depth(&truth, &library, &planes, &meta.camera)
}

/// Runs the full pipeline on a loaded scene, the table being known.
pub fn infer_scene(scene: &LoadedScene, cfg: &RunConfig, ablate_structure: bool) -> Result<InferenceResult> {
    let observed = unproject(&scene.spec.observation, &scene.camera);
    let mut kernel = cfg.kernel.clone();
    if ablate_structure {
        kernel.structure_moves = false;
    }
    let problem = InferenceProblem {
        observed: &observed,
        beliefs: &scene.beliefs,
        types: scene.spec.types.clone(),
        anchored: vec![(TABLE_TYPE, scene.table_pose)],
        camera: scene.camera,
        bounds: scene.bounds,
        params: cfg.likelihood.params(&scene.bounds),
    };
    let mut rng = ChainRng::seed_from_u64(cfg.seed);
    run_inference(&problem, &kernel, &mut rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplesFile {
    pub method: String,
    pub seed: u64,
    pub best_score: f64,
    pub best: Value,
    pub samples: Vec<Value>,
    pub initial_poses: Vec<Pose>,
    /// Proposed and accepted counts per kernel.
    pub moves: BTreeMap<String, [u64; 2]>,
}

impl SamplesFile {
    pub fn new(method: &str, seed: u64, r: &InferenceResult) -> Result<Self> {
        let graph = |g: &SceneGraph| serde_json::from_str::<Value>(&g.to_json());
        Ok(Self {
            method: method.to_string(),
            seed,
            best_score: r.best_score,
            best: graph(&r.best)?,
            samples: r.samples.iter().map(graph).collect::<std::result::Result<_, _>>()?,
            initial_poses: r.initial_poses.clone(),
            moves: r.stats.counts.clone(),
        })
    }

    pub fn best_graph(&self) -> Result<SceneGraph> {
        SceneGraph::from_json(&self.best.to_string())
    }

    pub fn sample_graphs(&self) -> Result<Vec<SceneGraph>> {
        self.samples.iter().map(|v| SceneGraph::from_json(&v.to_string())).collect()
    }
}

pub fn write_samples(path: &Path, s: &SamplesFile) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, serde_json::to_string_pretty(s)?)?;
    Ok(())
}

pub fn load_samples(path: &Path) -> Result<SamplesFile> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

#[derive(Serialize, Deserialize)]
struct PoseEntry {
    t: [f64; 3],
    q: [f64; 4],
}

#[derive(Serialize, Deserialize)]
struct PoseList {
    poses: Vec<PoseEntry>,
}

/// Parses `{"poses": [{"t": [x,y,z], "q": [w,x,y,z]}, ...]}`.
pub fn poses_from_json(s: &str) -> Result<Vec<Pose>> {
    let list: PoseList = serde_json::from_str(s)?;
    list.poses
        .iter()
        .map(|e| {
            let [w, x, y, z] = e.q;
            let n = (w * w + x * x + y * y + z * z).sqrt();
            if !(n > 1e-9 && n.is_finite()) || e.t.iter().any(|v| !v.is_finite()) {
                return Err(Error::Parse("invalid pose entry".into()));
            }
            Ok(Pose::new(Vec3::from(e.t), Quat::new(w, x, y, z)))
        })
        .collect()
}

pub fn poses_to_json(poses: &[Pose]) -> Result<String> {
    let list = PoseList {
        poses: poses
            .iter()
            .map(|p| PoseEntry { t: [p.translation.x, p.translation.y, p.translation.z], q: p.rotation.as_array() })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&list)?)
}

#[cfg(test)]
mod tests {
    use super::super::generate_seeded;
    use super::*;

    #[test]
    fn scene_dir_round_trip() {
        let setup = DeskSetup::default();
        let spec = generate_seeded(Category::Stacked, &setup, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_scene(dir.path(), &spec, &setup, None).unwrap();
        let back = load_scene(dir.path()).unwrap();
        assert_eq!(back.spec.id, spec.id);
        assert_eq!(back.spec.types, spec.types);
        let obs = &back.spec.observation;
        assert_eq!(obs.hit_count(), spec.observation.hit_count());
        assert!(obs.depths.iter().zip(&spec.observation.depths).all(|(a, b)| (a - b).abs() <= 1e-5 * b));
        assert_eq!(back.camera, setup.camera);
        let a = back.spec.truth.world_poses(&setup.planes).unwrap();
        let b = spec.truth.world_poses(&setup.planes).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!(p.distance(q) < 1e-12);
        }
        assert_eq!(back.beliefs[TABLE_TYPE].mode_shape(), setup.library[TABLE_TYPE]);
    }

    #[test]
    fn config_defaults_and_overrides() {
        let cfg = RunConfig::from_json("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
        let cfg = RunConfig::from_json(r#"{"seed": 9, "kernel": {"sweeps": 7}, "likelihood": {"r_ball": 0.25}}"#).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.kernel.sweeps, 7);
        assert_eq!(cfg.kernel.thin, KernelConfig::default().thin);
        assert_eq!(cfg.likelihood.r_ball, 0.25);
        assert!(RunConfig::from_json(r#"{"kernel": {"trans_walk_std": -1}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn pose_list_round_trip() {
        let poses = vec![Pose::identity(), Pose::new(Vec3::new(1.0, 2.0, 3.0), Quat::from_axis_angle(&Vec3::y(), 0.4))];
        let back = poses_from_json(&poses_to_json(&poses).unwrap()).unwrap();
        for (a, b) in poses.iter().zip(&back) {
            assert!(a.distance(b) < 1e-12);
        }
        assert!(poses_from_json(r#"{"poses": [{"t": [0,0,0], "q": [0,0,0,0]}]}"#).is_err());
        assert!(poses_from_json(r#"{"poses": 3}"#).is_err());
    }
}
