//! The end-to-end pipeline: cluster unexplained points, register shapes to
//! them, initialize poses with a particle search over the all-floating
//! graph, then run the full chain.

use super::{cluster::dbscan, cube_rotations, icp_trimmed, sweep, ChainRng, ChainState, KernelConfig, MoveStats, Target};
use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::sampling::{log_sum_exp, normal_logpdf, RotationNoise};
use crate::geometry::{Pose, Vec3};
use crate::kdtree::KdTree;
use crate::likelihood::{cloud_loglik_indexed, planes_from_beliefs, CloudLikParams, ObservedCloud, PointCloudLikelihood};
use crate::renderer::{render_posed, unproject};
use crate::scenegraph::{Bounds, Camera, SceneGraph, StructurePrior};
use crate::shapes::{surface_cloud, ShapeBelief, VoxelShape};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

/// Most source points used per ICP run.
const ICP_MAX_SOURCE: usize = 300;
/// Target points farther than this from the object are not matched back.
const REVERSE_TRIM: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hypothesis {
    pub pose: Pose,
    pub score: f64,
}

/// Points of `observed` with no rendered point within `r`.
pub fn unexplained_points(observed: &ObservedCloud, rendered: &[Vec3], r: f64) -> Vec<usize> {
    if rendered.is_empty() {
        return (0..observed.len()).collect();
    }
    observed.neighbor_counts(rendered, r).iter().enumerate().filter(|(_, &n)| n == 0).map(|(i, _)| i).collect()
}

fn subsample(points: Vec<Vec3>, max: usize) -> Vec<Vec3> {
    if points.len() <= max {
        return points;
    }
    let step = points.len() as f64 / max as f64;
    (0..max).map(|k| points[(k as f64 * step) as usize]).collect()
}

/// Object-frame points of `shape` visible from the camera at `pose`.
fn visible_points(shape: &VoxelShape, pose: &Pose, camera: &Camera) -> Vec<Vec3> {
    let img = render_posed(&[(shape, *pose)], camera);
    let inv = pose.inverse();
    unproject(&img, camera).points.iter().map(|p| inv.transform_point(p)).collect()
}

fn icp_source(shape: &VoxelShape, pose: &Pose, camera: &Camera) -> Result<Vec<Vec3>> {
    let mut src = visible_points(shape, pose, camera);
    if src.len() < 3 {
        src = surface_cloud(shape, &Pose::identity())?.points;
    }
    Ok(subsample(src, ICP_MAX_SOURCE))
}

/// ICP of the surface visible at `init` onto `target`.
pub fn icp_refine(shape: &VoxelShape, init: &Pose, target: &KdTree, iters: usize, camera: &Camera) -> Result<Pose> {
    if target.is_empty() {
        return Err(Error::DegenerateCorrespondences);
    }
    let src = icp_source(shape, init, camera)?;
    Ok(icp_trimmed(&src, init, target, iters, REVERSE_TRIM)?.pose)
}

/// Pose hypotheses for `shape` explaining `unexplained`: every cluster
/// center combined with the 24 axis-aligned orientations, refined by ICP and
/// scored by the point-cloud likelihood of the object alone. Sorted best
/// first.
pub fn pose_hypotheses(
    unexplained: &PointCloud,
    shape: &VoxelShape,
    camera: &Camera,
    cfg: &KernelConfig,
    params: &CloudLikParams,
) -> Vec<Hypothesis> {
    let Ok((lo, hi)) = shape.occupied_bounds() else {
        return Vec::new();
    };
    let center_obj = (lo + hi) / 2.0;
    let half_min = (hi - lo).min() / 2.0;
    let clusters = dbscan(&unexplained.points, cfg.dbscan_eps, cfg.dbscan_min_pts);
    let observed = ObservedCloud::new(unexplained);
    let rotations = cube_rotations();
    let mut out = Vec::new();
    for members in clusters.clusters.iter().filter(|m| m.len() >= 3) {
        let pts: Vec<Vec3> = members.iter().map(|&i| unexplained.points[i]).collect();
        let tree = KdTree::build(&pts);
        let centroid = pts.iter().sum::<Vec3>() / pts.len() as f64;
        let view = (centroid - camera.pose.translation).normalize();
        let center = centroid + view * half_min;
        let scored: Vec<Hypothesis> = rotations
            .par_iter()
            .map(|q| {
                let init = Pose::new(center - q.rotate(&center_obj), *q);
                let pose = icp_refine(shape, &init, &tree, cfg.icp_iters, camera).unwrap_or(init);
                let rendered = unproject(&render_posed(&[(shape, pose)], camera), camera);
                Hypothesis { pose, score: cloud_loglik_indexed(&observed, &rendered.points, params) }
            })
            .collect();
        out.extend(scored);
    }
    out.sort_by(|a, b| b.score.total_cmp(&a.score));
    out
}

/// Inputs to the pipeline. Objects are indexed anchored-first in every
/// returned graph.
#[derive(Debug, Clone)]
pub struct InferenceProblem<'a> {
    pub observed: &'a PointCloud,
    /// Shape belief per type.
    pub beliefs: &'a [ShapeBelief],
    /// Types of the objects to infer.
    pub types: Vec<usize>,
    /// Known objects, e.g. the table: (type, world pose).
    pub anchored: Vec<(usize, Pose)>,
    pub camera: Camera,
    pub bounds: Bounds,
    pub params: CloudLikParams,
}

impl InferenceProblem<'_> {
    pub fn n_anchored(&self) -> usize {
        self.anchored.len()
    }

    fn all_types(&self) -> Vec<usize> {
        self.anchored.iter().map(|a| a.0).chain(self.types.iter().copied()).collect()
    }

    fn graph_with(&self, poses: &[Pose]) -> SceneGraph {
        let all: Vec<Pose> = self.anchored.iter().map(|a| a.1).chain(poses.iter().copied()).collect();
        SceneGraph::all_floating(self.all_types(), all)
    }
}

#[derive(Debug, Clone)]
struct Particle {
    poses: Vec<Option<Pose>>,
    score: f64,
}

type HypCache = HashMap<(usize, u64), Arc<Vec<Hypothesis>>>;

struct Stage2<'p, 'a> {
    problem: &'p InferenceProblem<'a>,
    modes: Vec<VoxelShape>,
    observed: ObservedCloud,
    cfg: &'p KernelConfig,
    cache: HypCache,
}

impl Stage2<'_, '_> {
    fn render_points(&self, poses: &[Option<Pose>], skip: Option<usize>) -> Vec<Vec3> {
        let mut objs: Vec<(&VoxelShape, Pose)> = self.problem.anchored.iter().map(|(t, p)| (&self.modes[*t], *p)).collect();
        for (k, p) in poses.iter().enumerate() {
            if Some(k) == skip {
                continue;
            }
            if let Some(p) = p {
                objs.push((&self.modes[self.problem.types[k]], *p));
            }
        }
        unproject(&render_posed(&objs, &self.problem.camera), &self.problem.camera).points
    }

    fn score(&self, poses: &[Option<Pose>]) -> f64 {
        let b = &self.problem.bounds;
        if poses.iter().flatten().any(|p| !b.contains(&p.translation)) {
            return f64::NEG_INFINITY;
        }
        cloud_loglik_indexed(&self.observed, &self.render_points(poses, None), &self.problem.params)
    }

    fn hypotheses(&mut self, poses: &[Option<Pose>], k: usize) -> Arc<Vec<Hypothesis>> {
        let rendered = self.render_points(poses, Some(k));
        let idx = unexplained_points(&self.observed, &rendered, self.problem.params.r_ball);
        let ty = self.problem.types[k];
        let mut h = DefaultHasher::new();
        idx.hash(&mut h);
        let key = (ty, h.finish());
        if let Some(hit) = self.cache.get(&key) {
            return hit.clone();
        }
        let cloud = PointCloud::world(idx.iter().map(|&i| self.observed.points()[i]).collect());
        let hyps = Arc::new(pose_hypotheses(&cloud, &self.modes[ty], &self.problem.camera, self.cfg, &self.problem.params));
        self.cache.insert(key, hyps.clone());
        hyps
    }
}

fn hypothesis_weights(hyps: &[Hypothesis]) -> Vec<f64> {
    let scores: Vec<f64> = hyps.iter().map(|h| h.score).collect();
    let z = log_sum_exp(&scores);
    scores.iter().map(|s| (s - z).exp()).collect()
}

fn pick(weights: &[f64], rng: &mut ChainRng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Log density of the hypothesis-mixture proposal at `x`.
fn mixture_logpdf(x: &Pose, hyps: &[Hypothesis], weights: &[f64], cfg: &KernelConfig) -> f64 {
    let noise = RotationNoise::from_kappa(cfg.dd_kappa);
    let terms: Vec<f64> = hyps
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|(h, w)| {
            w.ln()
                + (0..3).map(|a| normal_logpdf(x.translation[a], h.pose.translation[a], cfg.dd_pos_std)).sum::<f64>()
                + noise.logpdf(&x.rotation, &h.pose.rotation)
        })
        .collect();
    log_sum_exp(&terms)
}

/// Stage two: poses for every object with the structure fixed to the
/// all-floating graph. Returns the best joint assignment visited.
pub fn map_initialize(problem: &InferenceProblem, cfg: &KernelConfig, rng: &mut ChainRng) -> Result<Vec<Pose>> {
    let n = problem.types.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut st = Stage2 {
        problem,
        modes: problem.beliefs.iter().map(|b| b.mode_shape()).collect(),
        observed: ObservedCloud::new(problem.observed),
        cfg,
        cache: HashMap::new(),
    };
    let n_particles = cfg.particles_per_object * n;
    let mut particles = Vec::with_capacity(n_particles);
    let mut any_hypotheses = false;
    for p in 0..n_particles {
        let mut order: Vec<usize> = (0..n).collect();
        if p > 0 {
            order.shuffle(rng);
        }
        let mut poses: Vec<Option<Pose>> = vec![None; n];
        for &k in &order {
            let hyps = st.hypotheses(&poses, k);
            if hyps.is_empty() {
                continue;
            }
            any_hypotheses = true;
            let i = if p == 0 { 0 } else { pick(&hypothesis_weights(&hyps), rng) };
            poses[k] = Some(hyps[i].pose);
        }
        let score = st.score(&poses);
        particles.push(Particle { poses, score });
    }
    if !any_hypotheses {
        return Err(Error::NoHypotheses);
    }
    let mut best = particles.iter().max_by(|a, b| a.score.total_cmp(&b.score)).cloned().expect("particles");
    let noise = RotationNoise::from_kappa(cfg.dd_kappa);
    for s in 0..cfg.stage2_sweeps_per_object * n {
        let k = s % n;
        for part in particles.iter_mut() {
            let hyps = st.hypotheses(&part.poses, k);
            if hyps.is_empty() {
                continue;
            }
            let w = hypothesis_weights(&hyps);
            let h = hyps[pick(&w, rng)];
            let t = h.pose.translation + crate::geometry::sampling::gaussian_vec3(rng, cfg.dd_pos_std);
            let proposal = Pose::new(t, noise.perturb(rng, &h.pose.rotation));
            let mut poses = part.poses.clone();
            poses[k] = Some(proposal);
            let score = st.score(&poses);
            let log_alpha = match part.poses[k] {
                Some(old) => {
                    score - part.score + mixture_logpdf(&old, &hyps, &w, cfg) - mixture_logpdf(&proposal, &hyps, &w, cfg)
                }
                None => 0.0,
            };
            if score > f64::NEG_INFINITY && (log_alpha >= 0.0 || rng.random::<f64>().ln() < log_alpha) {
                part.poses = poses;
                part.score = score;
            }
            if part.score > best.score {
                best = part.clone();
            }
        }
        // Multinomial resampling by normalized likelihood weights.
        let scores: Vec<f64> = particles.iter().map(|p| p.score).collect();
        if scores.iter().any(|s| s.is_finite()) {
            let z = log_sum_exp(&scores);
            let w: Vec<f64> = scores.iter().map(|s| (s - z).exp()).collect();
            particles = (0..n_particles).map(|_| particles[pick(&w, rng)].clone()).collect();
        }
    }
    // Objects that never received a hypothesis sit at the bounds center.
    Ok(best
        .poses
        .into_iter()
        .map(|p| p.unwrap_or_else(|| Pose::new(problem.bounds.center(), crate::geometry::Quat::identity())))
        .collect())
}

#[derive(Debug, Clone)]
pub struct InferenceResult {
    /// Post-burn-in, thinned states.
    pub samples: Vec<SceneGraph>,
    /// Highest-scoring state visited by the chain.
    pub best: SceneGraph,
    pub best_score: f64,
    /// Stage-two pose estimates of the inferred objects.
    pub initial_poses: Vec<Pose>,
    pub stats: MoveStats,
}

fn clamp_into(bounds: &Bounds, p: &Pose) -> Pose {
    let t = Vec3::from_fn(|a, _| p.translation[a].clamp(bounds.lo[a], bounds.hi[a]));
    Pose::new(t, p.rotation)
}

/// Stages two and three: pose initialization, then MCMC from the
/// all-floating graph at the initial poses.
pub fn run_inference(problem: &InferenceProblem, cfg: &KernelConfig, rng: &mut ChainRng) -> Result<InferenceResult> {
    cfg.validate()?;
    problem.params.validate()?;
    let init: Vec<Pose> = map_initialize(problem, cfg, rng)?.iter().map(|p| clamp_into(&problem.bounds, p)).collect();
    let mut lik = PointCloudLikelihood::new(problem.observed, problem.beliefs.to_vec(), problem.camera, problem.params);
    lik.r = cfg.pm_samples;
    lik.fixed_samples = cfg.pm_fixed_samples;
    let planes = planes_from_beliefs(problem.beliefs);
    let a = problem.n_anchored();
    let target = Target {
        bounds: problem.bounds,
        structure_prior: if cfg.structure_moves { StructurePrior::UniformTree } else { StructurePrior::AllFloating },
        planes: &planes,
        likelihood: &lik,
        anchored: (0..a + init.len()).map(|v| v < a).collect(),
    };
    let estimates: Vec<Option<Pose>> = (0..a).map(|_| None).chain(init.iter().map(|p| Some(*p))).collect();
    let mut state = ChainState::new(problem.graph_with(&init), &target, rng);
    let mut best = state.graph.clone();
    let mut best_score = state.score();
    let burn = (cfg.sweeps as f64 * cfg.burn_in_frac).floor() as usize;
    let mut samples = Vec::new();
    for s in 0..cfg.sweeps {
        sweep(&mut state, &target, cfg, rng, &estimates);
        if state.score() > best_score {
            best_score = state.score();
            best = state.graph.clone();
        }
        if s >= burn && (s - burn).is_multiple_of(cfg.thin) {
            samples.push(state.graph.clone());
        }
    }
    Ok(InferenceResult { samples, best, best_score, initial_poses: init, stats: state.stats })
}
