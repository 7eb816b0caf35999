//! Synthetic desk scenes, evaluation, and on-disk formats for the CLI.

mod eval;
mod hidden;
mod io;

pub use eval::{accuracy_curve, add_s, evaluate_suite, quartiles, EvalReport, EvalRow, SceneResult};
pub use hidden::{
    differing_pixels, expected_presence, generate_hidden, hidden_fraction, infer_hidden, is_hidden, load_hidden, write_hidden,
    HiddenScene, HiddenSetup, HIDDEN_CATEGORY, OCCLUDER_WIDTHS,
};
pub use io::{
    infer_scene, load_samples, load_scene, poses_from_json, poses_to_json, render_scene_file, write_samples, write_scene,
    LikelihoodConfig, LoadedScene, RunConfig, SamplesFile,
};

use crate::error::{Error, Result};
use crate::geometry::{ContactParams, ContactPlane, FaceId, HopfContactCoords, Pose, Vec3, NUM_FACES};
use crate::renderer::{render_depth, render_posed, DepthImage};
use crate::scenegraph::{Bounds, Camera, Node, Param, Parent, SceneGraph};
use crate::shapes::{bounding_cuboid_planes, VoxelShape};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

pub const OBJECT_NAMES: [&str; 6] = ["box", "tall_box", "cylinder", "l_shape", "blob", "table"];
/// Number of graspable object types; the table comes after them.
pub const NUM_OBJECT_TYPES: usize = 5;
pub const TABLE_TYPE: usize = 5;
const RES: f64 = 0.5;
const MAX_ATTEMPTS: usize = 500;
/// Fewest pixels an object must cover to count as observed.
const MIN_VISIBLE_PIXELS: usize = 25;

/// The voxel object library, indexed by type; the table is last.
pub fn object_library() -> Vec<VoxelShape> {
    vec![
        VoxelShape::full([12, 8, 6], RES),
        VoxelShape::full([6, 6, 14], RES),
        VoxelShape::from_fn([12, 12, 12], RES, |p| (p.x - 3.0).powi(2) + (p.y - 3.0).powi(2) <= 9.0),
        VoxelShape::from_fn([12, 8, 10], RES, |p| p.z < 2.0 || p.x < 2.0),
        VoxelShape::from_fn([12, 10, 8], RES, |p| {
            ((p.x - 3.0) / 3.0).powi(2) + ((p.y - 2.5) / 2.5).powi(2) + ((p.z - 2.0) / 2.0).powi(2) <= 1.0
        }),
        VoxelShape::full([80, 80, 2], RES),
    ]
}

/// A desk: the table top is the z = 0 plane centered at the origin, viewed
/// obliquely from the front.
#[derive(Debug, Clone)]
pub struct DeskSetup {
    pub library: Vec<VoxelShape>,
    pub planes: Vec<[ContactPlane; NUM_FACES]>,
    pub bounds: Bounds,
    pub camera: Camera,
    pub table_pose: Pose,
    /// Standard deviation of additive depth noise on hit pixels (cm).
    pub noise_std: f64,
}

impl Default for DeskSetup {
    fn default() -> Self {
        let library = object_library();
        let planes = library.iter().map(|s| bounding_cuboid_planes(s).expect("library shapes are nonempty")).collect();
        Self {
            library,
            planes,
            bounds: Bounds { lo: Vec3::new(-22.0, -22.0, -3.0), hi: Vec3::new(22.0, 22.0, 20.0) },
            camera: desk_camera(),
            table_pose: Pose::from_translation(-20.0, -20.0, -1.0),
            noise_std: 0.0,
        }
    }
}

pub fn desk_camera() -> Camera {
    Camera::default().look_at(Vec3::new(0.0, -17.0, 16.0), Vec3::new(0.0, 0.0, 1.5))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Category {
    Single,
    Stacked,
    PartialView,
    PartiallyOccluded,
}

impl Category {
    pub const ALL: [Category; 4] = [Category::Single, Category::Stacked, Category::PartialView, Category::PartiallyOccluded];

    pub fn as_str(&self) -> &'static str {
        match self {
            Category::Single => "single",
            Category::Stacked => "stacked",
            Category::PartialView => "partial_view",
            Category::PartiallyOccluded => "partially_occluded",
        }
    }

    pub fn n_objects(&self) -> usize {
        match self {
            Category::Single | Category::PartialView => 1,
            Category::Stacked | Category::PartiallyOccluded => 2,
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL.into_iter().find(|c| c.as_str() == s).ok_or_else(|| Error::InvalidInput(format!("unknown category {s:?}")))
    }
}

/// A generated scene. Node 0 of `truth` is the table.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub id: String,
    pub category: Category,
    pub seed: u64,
    /// Object types, excluding the table.
    pub types: Vec<usize>,
    pub truth: SceneGraph,
    pub observation: DepthImage,
}

/// Distinct random object types for a category.
pub fn random_types<R: Rng + ?Sized>(category: Category, rng: &mut R) -> Vec<usize> {
    let first = rng.random_range(0..NUM_OBJECT_TYPES);
    let mut types = vec![first];
    if category.n_objects() == 2 {
        let second = (first + rng.random_range(1..NUM_OBJECT_TYPES)) % NUM_OBJECT_TYPES;
        types.push(second);
    }
    types
}

const TOP: FaceId = 5;

fn opposite(f: FaceId) -> FaceId {
    f ^ 1
}

fn resting(f: FaceId, fp: FaceId, a: f64, b: f64, phi: f64) -> ContactParams {
    ContactParams { f, fp, coords: HopfContactCoords { a, b, z: 0.0, eta: Vec3::z(), phi } }
}

fn on_table<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> ContactParams {
    resting(rng.random_range(0..NUM_FACES), TOP, a, b, rng.random_range(0.0..2.0 * PI))
}

fn graph(setup: &DeskSetup, types: &[usize], nodes: Vec<(Parent, ContactParams)>) -> SceneGraph {
    let mut g = SceneGraph {
        types: std::iter::once(TABLE_TYPE).chain(types.iter().copied()).collect(),
        nodes: vec![Node { parent: Parent::Root, param: Param::Floating(setup.table_pose) }],
    };
    g.nodes.extend(nodes.into_iter().map(|(parent, c)| Node { parent, param: Param::Contact(c) }));
    g
}

/// World-space box around the occupied cells of `shape` at `pose`.
fn world_aabb(shape: &VoxelShape, pose: &Pose) -> (Vec3, Vec3) {
    let (lo, hi) = shape.occupied_bounds().expect("nonempty");
    let mut out = (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY));
    for k in 0..8 {
        let c = Vec3::new(
            if k & 1 == 0 { lo.x } else { hi.x },
            if k & 2 == 0 { lo.y } else { hi.y },
            if k & 4 == 0 { lo.z } else { hi.z },
        );
        let w = pose.transform_point(&c);
        out.0 = out.0.inf(&w);
        out.1 = out.1.sup(&w);
    }
    out
}

fn overlaps(a: &(Vec3, Vec3), b: &(Vec3, Vec3)) -> bool {
    const SLACK: f64 = 0.05;
    (0..3).all(|i| a.0[i] + SLACK < b.1[i] && b.0[i] + SLACK < a.1[i])
}

/// Pixels covered by a single object placed alone.
fn pixel_count(setup: &DeskSetup, ty: usize, pose: &Pose) -> usize {
    render_posed(&[(&setup.library[ty], *pose)], &setup.camera).hit_count()
}

fn touches_border(img: &DepthImage) -> bool {
    let (w, h) = (img.width, img.height);
    (0..w).any(|u| img.get(u, 0) < img.far || img.get(u, h - 1) < img.far)
        || (0..h).any(|v| img.get(0, v) < img.far || img.get(w - 1, v) < img.far)
}

/// Fraction of `far_obj`'s unoccluded pixels still visible in the full
/// render of `poses`.
fn visible_fraction(setup: &DeskSetup, g: &SceneGraph, poses: &[Pose], far_obj: usize) -> f64 {
    let alone = render_posed(&[(&setup.library[g.types[far_obj]], poses[far_obj])], &setup.camera);
    let others: Vec<(&VoxelShape, Pose)> =
        (0..poses.len()).filter(|&k| k != far_obj).map(|k| (&setup.library[g.types[k]], poses[k])).collect();
    let occluders = render_posed(&others, &setup.camera);
    let total = alone.hit_count();
    if total == 0 {
        return 0.0;
    }
    let visible = alone.depths.iter().zip(&occluders.depths).filter(|(a, o)| **a < alone.far && **a <= **o).count();
    visible as f64 / total as f64
}

/// Checks shared by every category: poses in bounds, no interpenetration,
/// every object visible.
fn plausible(setup: &DeskSetup, g: &SceneGraph, poses: &[Pose]) -> bool {
    let boxes: Vec<_> = (1..poses.len()).map(|k| world_aabb(&setup.library[g.types[k]], &poses[k])).collect();
    for (i, a) in boxes.iter().enumerate() {
        if !setup.bounds.contains(&poses[i + 1].translation) || a.0.z < -1e-6 {
            return false;
        }
        if boxes[i + 1..].iter().any(|b| overlaps(a, b)) {
            return false;
        }
    }
    (1..poses.len()).all(|k| pixel_count(setup, g.types[k], &poses[k]) >= MIN_VISIBLE_PIXELS)
}

fn propose<R: Rng + ?Sized>(setup: &DeskSetup, category: Category, types: &[usize], rng: &mut R) -> (SceneGraph, bool) {
    let g = match category {
        Category::Single => {
            let (a, b) = (rng.random_range(-5.0..5.0), rng.random_range(-3.0..5.0));
            graph(setup, types, vec![(Parent::Object(0), on_table(rng, a, b))])
        }
        Category::Stacked => {
            let (a, b) = (rng.random_range(-4.0..4.0), rng.random_range(-2.0..4.0));
            let bottom = on_table(rng, a, b);
            let (ta, tb) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let top = resting(rng.random_range(0..NUM_FACES), opposite(bottom.f), ta, tb, rng.random_range(0.0..2.0 * PI));
            graph(setup, types, vec![(Parent::Object(0), bottom), (Parent::Object(1), top)])
        }
        Category::PartialView => {
            let (a, b) = (rng.random_range(-14.0..14.0), rng.random_range(-10.0..12.0));
            graph(setup, types, vec![(Parent::Object(0), on_table(rng, a, b))])
        }
        Category::PartiallyOccluded => {
            // Type order is (far, near); the near object sits between the
            // far one and the camera.
            let (a, b) = (rng.random_range(-4.0..4.0), rng.random_range(1.0..6.0));
            let (na, nb) = (a + rng.random_range(-2.5..2.5), b - rng.random_range(4.0..8.0));
            graph(setup, types, vec![(Parent::Object(0), on_table(rng, a, b)), (Parent::Object(0), on_table(rng, na, nb))])
        }
    };
    let Ok(poses) = g.world_poses(&setup.planes) else {
        return (g, false);
    };
    let mut ok = plausible(setup, &g, &poses);
    if ok {
        ok = match category {
            Category::PartialView => touches_border(&render_posed(&[(&setup.library[types[0]], poses[1])], &setup.camera)),
            Category::PartiallyOccluded => {
                let frac = visible_fraction(setup, &g, &poses, 1);
                frac <= 0.7 && frac * pixel_count(setup, types[0], &poses[1]) as f64 >= MIN_VISIBLE_PIXELS as f64
            }
            _ => true,
        };
    }
    (g, ok)
}

/// Renders the observation for a ground-truth graph, with optional depth
/// noise on hit pixels.
pub fn observe<R: Rng + ?Sized>(setup: &DeskSetup, truth: &SceneGraph, rng: &mut R) -> Result<DepthImage> {
    let mut img = render_depth(truth, &setup.library, &setup.planes, &setup.camera)?;
    if setup.noise_std > 0.0 {
        let noise = Normal::new(0.0, setup.noise_std).map_err(|e| Error::InvalidInput(e.to_string()))?;
        for d in img.depths.iter_mut().filter(|d| **d < img.far) {
            *d = (*d + noise.sample(rng)).clamp(1e-3, img.far);
        }
    }
    Ok(img)
}

/// Samples a scene of the given category by rejection.
pub fn generate_scene<R: Rng + ?Sized>(
    category: Category,
    types: &[usize],
    setup: &DeskSetup,
    seed: u64,
    rng: &mut R,
) -> Result<SceneSpec> {
    if types.len() != category.n_objects() || types.iter().any(|&t| t >= NUM_OBJECT_TYPES) {
        return Err(Error::InvalidInput(format!(
            "category {category} needs {} object types, got {types:?}",
            category.n_objects()
        )));
    }
    for _ in 0..MAX_ATTEMPTS {
        let (truth, ok) = propose(setup, category, types, rng);
        if ok {
            let observation = observe(setup, &truth, rng)?;
            return Ok(SceneSpec { id: format!("{category}_{seed}"), category, seed, types: types.to_vec(), truth, observation });
        }
    }
    Err(Error::PlacementFailure(MAX_ATTEMPTS))
}

/// Seeded scene with random types.
pub fn generate_seeded(category: Category, setup: &DeskSetup, seed: u64) -> Result<SceneSpec> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let types = random_types(category, &mut rng);
    generate_scene(category, &types, setup, seed, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::renderer::unproject;

    #[test]
    fn library_shapes_fit_their_grids() {
        let lib = object_library();
        assert_eq!(lib.len(), OBJECT_NAMES.len());
        for s in &lib {
            assert!(s.is_renderable());
        }
        // The cylinder is round: corners are empty, the axis is full.
        assert!(!lib[2].get(0, 0, 0));
        assert!(lib[2].get(6, 6, 11));
    }

    #[test]
    fn single_rests_on_table() {
        let setup = DeskSetup::default();
        for seed in 0..5 {
            let s = generate_seeded(Category::Single, &setup, seed).unwrap();
            assert_eq!(s.truth.nodes[1].parent, Parent::Object(0));
            let Param::Contact(c) = s.truth.nodes[1].param else { panic!() };
            assert_eq!(c.coords.z, 0.0);
            let poses = s.truth.world_poses(&setup.planes).unwrap();
            let (lo, _) = world_aabb(&setup.library[s.types[0]], &poses[1]);
            assert!(lo.z.abs() < 1e-9, "{lo:?}");
            s.observation.validate().unwrap();
        }
    }

    #[test]
    fn stacked_top_rests_on_bottom() {
        let setup = DeskSetup::default();
        for seed in 0..5 {
            let s = generate_seeded(Category::Stacked, &setup, seed).unwrap();
            assert_eq!(s.truth.nodes[2].parent, Parent::Object(1));
            let poses = s.truth.world_poses(&setup.planes).unwrap();
            let (_, bottom_hi) = world_aabb(&setup.library[s.types[0]], &poses[1]);
            let (top_lo, _) = world_aabb(&setup.library[s.types[1]], &poses[2]);
            assert!((bottom_hi.z - top_lo.z).abs() < 1e-9);
        }
    }

    #[test]
    fn partial_view_crosses_border() {
        let setup = DeskSetup::default();
        let s = generate_seeded(Category::PartialView, &setup, 3).unwrap();
        let poses = s.truth.world_poses(&setup.planes).unwrap();
        assert!(touches_border(&render_posed(&[(&setup.library[s.types[0]], poses[1])], &setup.camera)));
    }

    #[test]
    fn occluded_far_object_is_mostly_hidden() {
        let setup = DeskSetup::default();
        for seed in 0..3 {
            let s = generate_seeded(Category::PartiallyOccluded, &setup, seed).unwrap();
            let poses = s.truth.world_poses(&setup.planes).unwrap();
            assert!(visible_fraction(&setup, &s.truth, &poses, 1) <= 0.7);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let setup = DeskSetup::default();
        let a = generate_seeded(Category::PartiallyOccluded, &setup, 11).unwrap();
        let b = generate_seeded(Category::PartiallyOccluded, &setup, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_type_count_is_rejected() {
        let setup = DeskSetup::default();
        let mut rng = rand::rng();
        assert!(generate_scene(Category::Stacked, &[0], &setup, 0, &mut rng).is_err());
        assert!(generate_scene(Category::Single, &[7], &setup, 0, &mut rng).is_err());
    }

    #[test]
    fn noise_perturbs_only_hits() {
        let mut setup = DeskSetup::default();
        let s = generate_seeded(Category::Single, &setup, 1).unwrap();
        setup.noise_std = 0.2;
        let mut rng = rand::rng();
        let noisy = observe(&setup, &s.truth, &mut rng).unwrap();
        let clean = &s.observation;
        assert_eq!(noisy.hit_count(), clean.hit_count());
        assert!(noisy.depths.iter().zip(&clean.depths).any(|(a, b)| a != b));
        assert!(unproject(&noisy, &setup.camera).len() == clean.hit_count());
    }
}
