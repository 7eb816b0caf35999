//! Desk scenes where a candidate object may sit entirely behind a wall.

use super::{desk_camera, object_library, TABLE_TYPE};
use crate::error::{Error, Result};
use crate::existence::{infer_existence, EulerPose, ExistenceContext, ExistencePrior, ExistenceResult, ExistenceState};
use crate::geometry::Pose;
use crate::geometry::Vec3;
use crate::inference::ChainRng;
use crate::renderer::{load_depth, save_depth, DepthImage};
use crate::scenegraph::{sample_floating, Bounds, Camera};
use crate::shapes::VoxelShape;
use rand::Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

const RES: f64 = 0.5;
/// Occluder widths (cm) of the standard sweep, from no wall to a wide one.
pub const OCCLUDER_WIDTHS: [f64; 5] = [0.0, 4.0, 7.0, 10.0, 14.0];

/// Layout of a hidden-object scene. The wall stands on the table between
/// the camera and the candidate region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HiddenSetup {
    pub occluder_width: f64,
    pub occluder_height: f64,
    /// Front face of the wall (y, cm).
    pub occluder_y: f64,
    pub candidate_side: f64,
    pub p_pres: f64,
    pub bounds: Bounds,
    pub camera: Camera,
    pub sigma: f64,
    pub table_pose: Pose,
}

impl HiddenSetup {
    pub fn new(occluder_width: f64) -> Self {
        Self {
            occluder_width,
            occluder_height: 16.0,
            occluder_y: -3.0,
            candidate_side: 3.0,
            p_pres: 0.9,
            bounds: Bounds { lo: Vec3::new(-8.0, 0.0, 3.0), hi: Vec3::new(8.0, 6.0, 6.0) },
            camera: desk_camera(),
            sigma: 0.5,
            table_pose: Pose::from_translation(-20.0, -20.0, -1.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.occluder_width >= 0.0
            && self.occluder_height > 0.0
            && self.candidate_side >= RES
            && self.sigma > 0.0
            && self.p_pres > 0.0
            && self.p_pres < 1.0;
        if !ok {
            return Err(Error::InvalidInput("bad hidden-scene setup".into()));
        }
        self.camera.validate()
    }

    pub fn candidate(&self) -> VoxelShape {
        let n = (self.candidate_side / RES).round() as usize;
        VoxelShape::full([n, n, n], RES)
    }

    /// Wall shape and pose, `None` for zero width.
    pub fn occluder(&self) -> Option<(VoxelShape, Pose)> {
        let nx = (self.occluder_width / RES).round() as usize;
        if nx == 0 {
            return None;
        }
        let nz = (self.occluder_height / RES).round() as usize;
        let shape = VoxelShape::full([nx, 2, nz], RES);
        let w = nx as f64 * RES;
        Some((shape, Pose::from_translation(-w / 2.0, self.occluder_y, 0.0)))
    }

    pub fn context(&self) -> ExistenceContext {
        let table = object_library().swap_remove(TABLE_TYPE);
        let mut fixed = vec![(table, self.table_pose)];
        fixed.extend(self.occluder());
        ExistenceContext { shapes: vec![self.candidate()], fixed, bounds: self.bounds, camera: self.camera, sigma: self.sigma }
    }

    pub fn prior(&self) -> ExistencePrior {
        ExistencePrior { types: vec![0], p_pres: vec![self.p_pres] }
    }
}

/// Number of pixels where `a` and `b` differ by more than `tol`.
pub fn differing_pixels(a: &DepthImage, b: &DepthImage, tol: f64) -> usize {
    a.depths.iter().zip(&b.depths).filter(|(x, y)| (**x - **y).abs() > tol).count()
}

/// Whether the candidate at `pose` leaves the fixed-only render unchanged
/// (no pixel moves by more than 3σ).
pub fn is_hidden(ctx: &ExistenceContext, prior: &ExistencePrior, background: &DepthImage, pose: &Pose) -> bool {
    let state = ExistenceState { poses: vec![Some(EulerPose::from_pose(pose))] };
    differing_pixels(&ctx.render(&state, prior), background, 3.0 * ctx.sigma) == 0
}

/// Monte Carlo estimate of the prior pose mass that is fully hidden.
pub fn hidden_fraction<R: Rng + ?Sized>(setup: &HiddenSetup, n: usize, rng: &mut R) -> f64 {
    let ctx = setup.context();
    let prior = setup.prior();
    let background = ctx.render(&ExistenceState::all_absent(1), &prior);
    let hits = (0..n).filter(|_| is_hidden(&ctx, &prior, &background, &sample_floating(&ctx.bounds, rng))).count();
    hits as f64 / n as f64
}

/// Posterior presence implied by a hidden fraction `h` when only hidden
/// poses survive the likelihood.
pub fn expected_presence(p_pres: f64, h: f64) -> f64 {
    p_pres * h / (p_pres * h + 1.0 - p_pres)
}

/// Existence inference on a hidden-object scene, seeded by `cfg.seed`.
pub fn infer_hidden(scene: &HiddenScene, cfg: &super::RunConfig) -> Result<ExistenceResult> {
    let mut rng = ChainRng::seed_from_u64(cfg.seed);
    infer_existence(&scene.observation, &scene.setup.prior(), &scene.setup.context(), &cfg.existence, &mut rng)
}

/// A generated hidden-object scene: the candidate is really there, out of
/// sight, and the observation shows only the table and the wall.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenScene {
    pub setup: HiddenSetup,
    pub seed: u64,
    pub truth: Option<Pose>,
    pub observation: DepthImage,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HiddenJson {
    category: String,
    seed: u64,
    setup: HiddenSetup,
    truth: Option<Pose>,
}

pub const HIDDEN_CATEGORY: &str = "hidden";

/// Places the candidate at a hidden pose by rejection; without any hidden
/// pose the truth is absent.
pub fn generate_hidden<R: Rng + ?Sized>(setup: HiddenSetup, seed: u64, rng: &mut R) -> Result<HiddenScene> {
    setup.validate()?;
    let ctx = setup.context();
    let prior = setup.prior();
    let background = ctx.render(&ExistenceState::all_absent(1), &prior);
    let truth = (0..2000).map(|_| sample_floating(&ctx.bounds, rng)).find(|p| is_hidden(&ctx, &prior, &background, p));
    Ok(HiddenScene { setup, seed, truth, observation: background })
}

pub fn write_hidden(dir: &Path, scene: &HiddenScene) -> Result<()> {
    fs::create_dir_all(dir)?;
    let meta = HiddenJson { category: HIDDEN_CATEGORY.into(), seed: scene.seed, setup: scene.setup.clone(), truth: scene.truth };
    fs::write(dir.join("scene.json"), serde_json::to_string_pretty(&meta)?)?;
    save_depth(&dir.join("observed.dpt"), &scene.observation)
}

pub fn load_hidden(dir: &Path) -> Result<HiddenScene> {
    let meta: HiddenJson = serde_json::from_str(&fs::read_to_string(dir.join("scene.json"))?)?;
    if meta.category != HIDDEN_CATEGORY {
        return Err(Error::Parse(format!("not a hidden-object scene: {:?}", meta.category)));
    }
    meta.setup.validate()?;
    let observation = load_depth(&dir.join("observed.dpt"))?;
    if observation.width != meta.setup.camera.width || observation.height != meta.setup.camera.height {
        return Err(Error::DimMismatch("observation size differs from the camera".into()));
    }
    Ok(HiddenScene { setup: meta.setup, seed: meta.seed, truth: meta.truth, observation })
}
