//! Learning a voxel shape belief for one object type from a few depth views
//! taken under uncertain camera poses.
//!
//! Each pose particle carves its own occupancy posterior by ray marching the
//! observed depths; the particles are then collapsed into a single
//! independent-Bernoulli belief by weighted averaging.

use crate::error::{Error, Result};
use crate::geometry::sampling::{gaussian_vec3, RotationNoise};
use crate::geometry::{ContactPlane, Pose, Vec3, NUM_FACES};
use crate::renderer::{render_posed, DepthImage};
use crate::scenegraph::Camera;
use crate::shapes::{bounding_cuboid_planes, Dims, ShapeBelief, VoxelShape};
use rand::Rng;
use rayon::prelude::*;

/// Occupancy prior for cells no ray has classified.
pub const DEFAULT_P_OCC: f64 = 0.5;

/// Static background plus the region the object grid occupies.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneMap {
    pub background: VoxelShape,
    pub background_pose: Pose,
    /// World pose of the object grid's index origin.
    pub object_pose: Pose,
    pub object_dims: Dims,
    pub resolution: f64,
}

impl SceneMap {
    /// A closed room (floor, ceiling, four walls) with the object grid
    /// centered on the floor at the world origin.
    pub fn room(object_dims: Dims, resolution: f64) -> Self {
        let cell = 2.0;
        let dims = [40, 40, 31];
        let background = VoxelShape::from_fn(dims, cell, |p| {
            let edge = |x: f64, n: usize| x < cell || x > (n - 1) as f64 * cell;
            edge(p.x, dims[0]) || edge(p.y, dims[1]) || edge(p.z, dims[2])
        });
        let half = |n: usize| n as f64 * cell / 2.0;
        let object_pose =
            Pose::from_translation(-(object_dims[0] as f64) * resolution / 2.0, -(object_dims[1] as f64) * resolution / 2.0, 0.0);
        Self {
            background,
            background_pose: Pose::from_translation(-half(dims[0]), -half(dims[1]), -cell),
            object_pose,
            object_dims,
            resolution,
        }
    }

    /// Object region only, with nothing around it.
    pub fn empty(object_dims: Dims, resolution: f64, object_pose: Pose) -> Self {
        Self {
            background: VoxelShape::empty([1, 1, 1], 1.0),
            background_pose: Pose::identity(),
            object_pose,
            object_dims,
            resolution,
        }
    }

    pub fn object_center(&self) -> Vec3 {
        let e = Vec3::new(self.object_dims[0] as f64, self.object_dims[1] as f64, self.object_dims[2] as f64);
        self.object_pose.transform_point(&(e * self.resolution / 2.0))
    }

    fn background_occupied(&self, world: &Vec3) -> bool {
        let p = self.background_pose.inverse().transform_point(world) / self.background.resolution;
        self.background.occupied_at(p.x.floor() as isize, p.y.floor() as isize, p.z.floor() as isize)
    }

    fn validate(&self) -> Result<()> {
        if self.object_dims.contains(&0) || !(self.resolution > 0.0) {
            return Err(Error::InvalidInput(format!("bad object grid {:?} @ {}", self.object_dims, self.resolution)));
        }
        Ok(())
    }
}

/// Renders the map with `shape` in its object region from each camera pose.
pub fn render_views(map: &SceneMap, shape: &VoxelShape, poses: &[Pose], camera: &Camera) -> Vec<DepthImage> {
    poses
        .iter()
        .map(|p| {
            let cam = Camera { pose: *p, ..*camera };
            render_posed(&[(&map.background, map.background_pose), (shape, map.object_pose)], &cam)
        })
        .collect()
}

/// `t` camera poses evenly spaced in azimuth on a circle around the object
/// region, looking at its center from the given elevation (radians).
pub fn orbit_poses(map: &SceneMap, t: usize, radius: f64, elevation: f64) -> Vec<Pose> {
    let c = map.object_center();
    (0..t)
        .map(|k| {
            let az = std::f64::consts::TAU * k as f64 / t as f64;
            let eye = c + Vec3::new(az.cos() * elevation.cos(), az.sin() * elevation.cos(), elevation.sin()) * radius;
            Camera::default().look_at(eye, c).pose
        })
        .collect()
}

/// Camera used for shape-learning views: 128² pixels, 90° field of view.
pub fn learning_camera() -> Camera {
    Camera::default().with_resolution(128, 128)
}

/// Intrinsics and ray-marching tolerances. The pose in `camera` is ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct LearningContext {
    pub camera: Camera,
    /// Slack (cm along the ray) when comparing a cell's entry depth with the
    /// observed depth; absorbs f32 storage error.
    pub depth_tol: f64,
    /// Largest tolerated fraction of hit cells that another ray carved.
    pub max_conflict_frac: f64,
}

impl Default for LearningContext {
    fn default() -> Self {
        Self { camera: learning_camera(), depth_tol: 1e-3, max_conflict_frac: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellStatus {
    Occupied,
    Free,
    Unobserved,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelPosterior {
    pub dims: Dims,
    pub resolution: f64,
    pub probs: Vec<f64>,
    pub status: Vec<CellStatus>,
}

impl VoxelPosterior {
    pub fn to_belief(&self) -> ShapeBelief {
        ShapeBelief { dims: self.dims, resolution: self.resolution, probs: self.probs.clone() }
    }

    pub fn status_at(&self, i: usize, j: usize, l: usize) -> CellStatus {
        self.status[(i * self.dims[1] + j) * self.dims[2] + l]
    }

    pub fn count(&self, s: CellStatus) -> usize {
        self.status.iter().filter(|&&x| x == s).count()
    }
}

/// Visits the cells of a `dims` grid (cell size `s`, origin at the corner)
/// crossed by `o + t d` for `t ∈ [0, t_max]`, in order, passing each cell's
/// entry parameter. Stops early when `visit` returns false.
fn walk_cells(dims: &Dims, s: f64, o: &Vec3, d: &Vec3, t_max: f64, mut visit: impl FnMut([usize; 3], f64) -> bool) {
    let mut t_enter = 0.0f64;
    let mut t_exit = t_max;
    for a in 0..3 {
        let hi = dims[a] as f64 * s;
        if d[a].abs() < 1e-15 {
            if o[a] < 0.0 || o[a] >= hi {
                return;
            }
        } else {
            let (mut t0, mut t1) = (-o[a] / d[a], (hi - o[a]) / d[a]);
            if t0 > t1 {
                std::mem::swap(&mut t0, &mut t1);
            }
            t_enter = t_enter.max(t0);
            t_exit = t_exit.min(t1);
        }
    }
    if t_enter >= t_exit {
        return;
    }
    let p = o + d * t_enter;
    let mut cell = [0isize; 3];
    let mut step = [0isize; 3];
    let mut t_next = [f64::INFINITY; 3];
    let mut t_delta = [f64::INFINITY; 3];
    for a in 0..3 {
        cell[a] = ((p[a] / s).floor() as isize).clamp(0, dims[a] as isize - 1);
        if d[a] > 1e-15 {
            step[a] = 1;
            t_next[a] = ((cell[a] + 1) as f64 * s - o[a]) / d[a];
            t_delta[a] = s / d[a];
        } else if d[a] < -1e-15 {
            step[a] = -1;
            t_next[a] = (cell[a] as f64 * s - o[a]) / d[a];
            t_delta[a] = -s / d[a];
        }
    }
    let mut t = t_enter;
    loop {
        if !visit([cell[0] as usize, cell[1] as usize, cell[2] as usize], t) {
            return;
        }
        let a = (0..3).min_by(|&x, &y| t_next[x].total_cmp(&t_next[y])).unwrap_or(0);
        t = t_next[a];
        if t >= t_exit {
            return;
        }
        cell[a] += step[a];
        if cell[a] < 0 || cell[a] >= dims[a] as isize {
            return;
        }
        t_next[a] += t_delta[a];
    }
}

/// Free and hit marks from one view, as flat per-cell flags.
fn carve_view(map: &SceneMap, pose: &Pose, img: &DepthImage, ctx: &LearningContext) -> (Vec<bool>, Vec<bool>) {
    let n: usize = map.object_dims.iter().product();
    let (mut free, mut hit) = (vec![false; n], vec![false; n]);
    let cam = &ctx.camera;
    let to_grid = map.object_pose.inverse().compose(pose);
    let o = to_grid.translation;
    let idx = |c: [usize; 3]| (c[0] * map.object_dims[1] + c[1]) * map.object_dims[2] + c[2];
    for v in 0..img.height {
        for u in 0..img.width {
            let depth = img.get(u, v);
            let dc = Vec3::new((u as f64 - cam.cx) / cam.fx, (v as f64 - cam.cy) / cam.fy, 1.0);
            let d = to_grid.transform_vector(&dc);
            let surface = depth < img.far;
            // A hit on the background is never object evidence.
            let object_hit = surface && {
                let w = pose.transform_point(&(dc * (depth + ctx.depth_tol)));
                !map.background_occupied(&w)
            };
            walk_cells(&map.object_dims, map.resolution, &o, &d, depth + ctx.depth_tol, |c, t| {
                if t < depth - ctx.depth_tol {
                    free[idx(c)] = true;
                    true
                } else {
                    if object_hit {
                        hit[idx(c)] = true;
                    }
                    false
                }
            });
        }
    }
    (free, hit)
}

/// Per-cell occupancy posterior for one map and camera trajectory under the
/// delta depth likelihood: cells a ray crosses before its observed depth are
/// free, the cell at the depth is occupied, the rest stay at `p_occ`. A cell
/// both carved and hit across views resolves to free.
pub fn voxel_posterior(
    map: &SceneMap,
    poses: &[Pose],
    images: &[DepthImage],
    ctx: &LearningContext,
    p_occ: f64,
) -> Result<VoxelPosterior> {
    map.validate()?;
    if poses.len() != images.len() {
        return Err(Error::DimMismatch(format!("{} poses for {} images", poses.len(), images.len())));
    }
    if !(0.0..=1.0).contains(&p_occ) {
        return Err(Error::InvalidInput(format!("p_occ {p_occ} outside [0,1]")));
    }
    for img in images {
        img.validate()?;
        if img.width != ctx.camera.width || img.height != ctx.camera.height {
            return Err(Error::DimMismatch(format!(
                "image {}x{} vs camera {}x{}",
                img.width, img.height, ctx.camera.width, ctx.camera.height
            )));
        }
    }
    let n: usize = map.object_dims.iter().product();
    let marks: Vec<(Vec<bool>, Vec<bool>)> =
        poses.par_iter().zip(images.par_iter()).map(|(p, img)| carve_view(map, p, img, ctx)).collect();
    let mut free = vec![false; n];
    let mut hit = vec![false; n];
    for (f, h) in &marks {
        for k in 0..n {
            free[k] |= f[k];
            hit[k] |= h[k];
        }
    }
    let hits = hit.iter().filter(|&&h| h).count();
    let conflicts: Vec<usize> = (0..n).filter(|&k| free[k] && hit[k]).collect();
    if hits > 0 && conflicts.len() as f64 > ctx.max_conflict_frac * hits as f64 {
        let k = conflicts[0];
        let [_, d1, d2] = map.object_dims;
        return Err(Error::InconsistentObservation([k / (d1 * d2), (k / d2) % d1, k % d2]));
    }
    let status: Vec<CellStatus> = (0..n)
        .map(|k| match (free[k], hit[k]) {
            (true, _) => CellStatus::Free,
            (false, true) => CellStatus::Occupied,
            (false, false) => CellStatus::Unobserved,
        })
        .collect();
    let probs = status
        .iter()
        .map(|s| match s {
            CellStatus::Free => 0.0,
            CellStatus::Occupied => 1.0,
            CellStatus::Unobserved => p_occ,
        })
        .collect();
    Ok(VoxelPosterior { dims: map.object_dims, resolution: map.resolution, probs, status })
}

/// The belief minimizing KL from the particle mixture: the weighted mean of
/// per-particle occupancy probabilities, cell by cell.
pub fn collapse_mixture(posteriors: &[VoxelPosterior], weights: &[f64]) -> Result<ShapeBelief> {
    if posteriors.is_empty() || posteriors.len() != weights.len() {
        return Err(Error::WeightMismatch(format!("{} posteriors, {} weights", posteriors.len(), weights.len())));
    }
    if weights.iter().any(|w| !(*w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::WeightMismatch("weights must be nonnegative and sum to 1".into()));
    }
    let first = &posteriors[0];
    if posteriors.iter().any(|p| p.dims != first.dims || p.resolution != first.resolution) {
        return Err(Error::DimMismatch("posteriors on different grids".into()));
    }
    let mut probs = vec![0.0; first.probs.len()];
    for (post, &w) in posteriors.iter().zip(weights) {
        for (acc, &p) in probs.iter_mut().zip(&post.probs) {
            *acc += w * p;
        }
    }
    for p in &mut probs {
        *p = p.clamp(0.0, 1.0);
    }
    Ok(ShapeBelief { dims: first.dims, resolution: first.resolution, probs })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseParticle {
    pub map: SceneMap,
    /// Camera-to-world pose per view.
    pub camera_poses: Vec<Pose>,
    pub weight: f64,
}

/// Weighted particles over the map and camera trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseBeliefParticles {
    pub particles: Vec<PoseParticle>,
}

impl PoseBeliefParticles {
    pub fn weights(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.weight).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.particles.is_empty() {
            return Err(Error::InvalidInput("need at least one particle".into()));
        }
        let w = self.weights();
        if w.iter().any(|x| !(*x >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::WeightMismatch("particle weights must be nonnegative and sum to 1".into()));
        }
        Ok(())
    }
}

/// Gaussian translation (cm) and rotation noise for synthetic pose particles.
/// An infinite `rot_kappa` means no rotation noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseNoise {
    pub trans_std: f64,
    pub rot_kappa: f64,
}

impl PoseNoise {
    pub fn none() -> Self {
        Self { trans_std: 0.0, rot_kappa: f64::INFINITY }
    }
}

/// Stand-in for a SLAM posterior: particle 0 is the truth, the rest are the
/// truth with independent per-view noise; weights are uniform.
pub fn synth_pose_belief<R: Rng + ?Sized>(
    map: &SceneMap,
    true_poses: &[Pose],
    k: usize,
    noise: PoseNoise,
    rng: &mut R,
) -> Result<PoseBeliefParticles> {
    if k == 0 {
        return Err(Error::InvalidInput("need at least one particle".into()));
    }
    let rot = RotationNoise::from_kappa(noise.rot_kappa);
    let particles = (0..k)
        .map(|i| {
            let camera_poses = true_poses
                .iter()
                .map(|p| {
                    if i == 0 {
                        return *p;
                    }
                    let t = p.translation + gaussian_vec3(rng, noise.trans_std);
                    let q = if noise.rot_kappa.is_infinite() { p.rotation } else { rot.perturb(rng, &p.rotation) };
                    Pose::new(t, q)
                })
                .collect();
            PoseParticle { map: map.clone(), camera_poses, weight: 1.0 / k as f64 }
        })
        .collect();
    Ok(PoseBeliefParticles { particles })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnedShape {
    pub belief: ShapeBelief,
    /// Contact planes on the bounding cuboid of the belief's mode shape.
    pub planes: [ContactPlane; NUM_FACES],
}

/// Carves one posterior per particle and collapses them into a belief.
pub fn learn_shape(images: &[DepthImage], belief: &PoseBeliefParticles, ctx: &LearningContext) -> Result<LearnedShape> {
    belief.validate()?;
    let posteriors = belief
        .particles
        .par_iter()
        .map(|p| voxel_posterior(&p.map, &p.camera_poses, images, ctx, DEFAULT_P_OCC))
        .collect::<Result<Vec<_>>>()?;
    let belief = collapse_mixture(&posteriors, &belief.weights())?;
    let planes = bounding_cuboid_planes(&belief.mode_shape())?;
    Ok(LearnedShape { belief, planes })
}
