//! Observation models: the robust point-cloud mixture, the per-pixel depth
//! mixture, and a pseudo-marginal estimator that integrates over uncertain
//! shapes by sampling them.

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::sampling::{log_sum_exp, normal_logpdf};
use crate::geometry::{ContactPlane, Vec3, NUM_FACES};
use crate::kdtree::KdTree;
use crate::renderer::{render_depth, unproject, DepthImage};
use crate::scenegraph::{Camera, SceneGraph};
use crate::shapes::{bounding_cuboid_planes, sample_shape, ShapeBelief, VoxelShape};
use rand::RngCore;
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloudLikParams {
    /// Outlier mixture weight.
    pub c: f64,
    /// Inlier ball radius (cm).
    pub r_ball: f64,
    /// Volume of the scene bounds (cm³).
    pub bounds_volume: f64,
    /// Use this many rendered "points" as the normalizer instead of the
    /// number of rendered hits (e.g. the full pixel count).
    pub ktilde_override: Option<usize>,
}

impl CloudLikParams {
    pub fn new(bounds_volume: f64) -> Self {
        Self { c: 0.01, r_ball: 0.5, bounds_volume, ktilde_override: None }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c < 1.0) || !(self.r_ball > 0.0) || !(self.bounds_volume > 0.0) {
            return Err(Error::InvalidInput(format!("bad cloud likelihood parameters {self:?}")));
        }
        Ok(())
    }
}

/// Observed cloud with a spatial index, built once per observation.
#[derive(Debug, Clone)]
pub struct ObservedCloud {
    tree: KdTree,
}

impl ObservedCloud {
    pub fn new(cloud: &PointCloud) -> Self {
        Self { tree: KdTree::build(&cloud.points) }
    }

    pub fn len(&self) -> usize {
        self.tree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tree.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        self.tree.points()
    }

    pub fn tree(&self) -> &KdTree {
        &self.tree
    }

    /// `n_i` for every observed point: rendered points within `r`.
    pub fn neighbor_counts(&self, rendered: &[Vec3], r: f64) -> Vec<u32> {
        let mut counts = vec![0u32; self.tree.len()];
        for p in rendered {
            self.tree.for_each_within(p, r, |i| counts[i] += 1);
        }
        counts
    }
}

pub fn cloud_loglik_indexed(obs: &ObservedCloud, rendered: &[Vec3], p: &CloudLikParams) -> f64 {
    let floor = p.c / p.bounds_volume;
    let k_tilde = p.ktilde_override.unwrap_or(rendered.len());
    if rendered.is_empty() || k_tilde == 0 {
        return obs.len() as f64 * floor.ln();
    }
    let ball = 4.0 / 3.0 * PI * p.r_ball.powi(3);
    let per_hit = (1.0 - p.c) / (k_tilde as f64 * ball);
    let counts = obs.neighbor_counts(rendered, p.r_ball);
    // Group identical counts so the sum is order independent and cheap.
    let mut hist: Vec<usize> = Vec::new();
    for &n in &counts {
        let n = n as usize;
        if n >= hist.len() {
            hist.resize(n + 1, 0);
        }
        hist[n] += 1;
    }
    hist.iter().enumerate().filter(|(_, &m)| m > 0).map(|(n, &m)| m as f64 * (floor + per_hit * n as f64).ln()).sum()
}

/// Robust point-cloud log likelihood of `observed` given `rendered`.
pub fn cloud_loglik(observed: &PointCloud, rendered: &PointCloud, p: &CloudLikParams) -> f64 {
    cloud_loglik_indexed(&ObservedCloud::new(observed), &rendered.points, p)
}

/// Per-pixel mixture of a uniform over `[0, D]` and a Gaussian around the
/// rendered depth.
pub fn pixel_loglik(observed: &DepthImage, rendered: &DepthImage, sigma: f64) -> Result<f64> {
    if observed.width != rendered.width || observed.height != rendered.height {
        return Err(Error::DimMismatch(format!(
            "{}x{} vs {}x{}",
            observed.width, observed.height, rendered.width, rendered.height
        )));
    }
    let uniform = (0.1 / observed.far).ln();
    let inlier = 0.9f64.ln();
    Ok(observed
        .depths
        .iter()
        .zip(&rendered.depths)
        .map(|(&i, &r)| {
            let g = inlier + normal_logpdf(i, r, sigma);
            let (a, b) = if g > uniform { (g, uniform) } else { (uniform, g) };
            a + (b - a).exp().ln_1p()
        })
        .sum())
}

/// Retained state of the pseudo-marginal estimator for one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoMarginalState {
    /// Shape sets, one voxel shape per type, for each of the R draws.
    pub samples: Vec<Vec<VoxelShape>>,
    pub log_estimate: f64,
}

impl PseudoMarginalState {
    pub fn empty() -> Self {
        Self { samples: Vec::new(), log_estimate: f64::NEG_INFINITY }
    }
}

pub fn log_mean_exp(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NEG_INFINITY;
    }
    log_sum_exp(xs) - (xs.len() as f64).ln()
}

/// A (possibly stochastic) estimate of the likelihood of a scene graph.
///
/// `estimate` returns a fresh state whose `log_estimate` is the log of a
/// nonnegative unbiased estimate. `retained` is the chain's current state,
/// which implementations may reuse (fixed shape samples).
pub trait LikelihoodModel: Send + Sync {
    fn estimate(&self, g: &SceneGraph, retained: &PseudoMarginalState, rng: &mut dyn RngCore) -> PseudoMarginalState;
}

/// Likelihood identically one; the chain then targets the prior.
#[derive(Debug, Clone, Copy, Default)]
pub struct ConstantLikelihood;

impl LikelihoodModel for ConstantLikelihood {
    fn estimate(&self, _g: &SceneGraph, _retained: &PseudoMarginalState, _rng: &mut dyn RngCore) -> PseudoMarginalState {
        PseudoMarginalState { samples: Vec::new(), log_estimate: 0.0 }
    }
}

/// One shape set drawn from the beliefs. Types not listed in `used` get a
/// one-cell empty placeholder.
pub fn sample_shape_set(beliefs: &[ShapeBelief], used: &[usize], rng: &mut dyn RngCore) -> Vec<VoxelShape> {
    let mut out: Vec<VoxelShape> = beliefs.iter().map(|b| VoxelShape::empty([1, 1, 1], b.resolution)).collect();
    let mut sorted = used.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    for t in sorted {
        out[t] = sample_shape(&beliefs[t], rng);
    }
    out
}

/// Averages `exp(f)` over R shape sets drawn from `beliefs`, in log space.
pub fn pseudo_marginal_estimate(
    beliefs: &[ShapeBelief],
    used: &[usize],
    r: usize,
    rng: &mut dyn RngCore,
    f: impl Fn(&[VoxelShape]) -> f64,
) -> PseudoMarginalState {
    let samples: Vec<Vec<VoxelShape>> = (0..r.max(1)).map(|_| sample_shape_set(beliefs, used, rng)).collect();
    let logs: Vec<f64> = samples.iter().map(|s| f(s)).collect();
    PseudoMarginalState { samples, log_estimate: log_mean_exp(&logs) }
}

/// Contact planes for each type, from the bounding box of the belief's mode
/// shape. Empty modes fall back to the full grid.
pub fn planes_from_beliefs(beliefs: &[ShapeBelief]) -> Vec<[ContactPlane; NUM_FACES]> {
    beliefs
        .iter()
        .map(|b| {
            bounding_cuboid_planes(&b.mode_shape())
                .unwrap_or_else(|_| ContactPlane::cuboid_faces(&Vec3::zeros(), &b.mode_shape().extent()))
        })
        .collect()
}

/// Point-cloud likelihood integrated over shape uncertainty.
#[derive(Debug, Clone)]
pub struct PointCloudLikelihood {
    pub observed: ObservedCloud,
    pub beliefs: Vec<ShapeBelief>,
    pub planes: Vec<[ContactPlane; NUM_FACES]>,
    pub camera: Camera,
    pub params: CloudLikParams,
    /// Number of shape draws per estimate.
    pub r: usize,
    /// Reuse the retained shape draws instead of drawing new ones.
    pub fixed_samples: bool,
    deterministic: Option<Vec<VoxelShape>>,
}

impl PointCloudLikelihood {
    pub fn new(observed: &PointCloud, beliefs: Vec<ShapeBelief>, camera: Camera, params: CloudLikParams) -> Self {
        let deterministic =
            beliefs.iter().all(|b| b.is_deterministic()).then(|| beliefs.iter().map(|b| b.mode_shape()).collect());
        Self {
            observed: ObservedCloud::new(observed),
            planes: planes_from_beliefs(&beliefs),
            beliefs,
            camera,
            params,
            r: 5,
            fixed_samples: false,
            deterministic,
        }
    }

    pub fn render_cloud(&self, g: &SceneGraph, shapes: &[VoxelShape]) -> Option<PointCloud> {
        let img = render_depth(g, shapes, &self.planes, &self.camera).ok()?;
        Some(unproject(&img, &self.camera))
    }

    /// Log likelihood for one concrete shape set.
    pub fn loglik_with_shapes(&self, g: &SceneGraph, shapes: &[VoxelShape]) -> f64 {
        match self.render_cloud(g, shapes) {
            Some(c) => cloud_loglik_indexed(&self.observed, &c.points, &self.params),
            None => f64::NEG_INFINITY,
        }
    }
}

impl LikelihoodModel for PointCloudLikelihood {
    fn estimate(&self, g: &SceneGraph, retained: &PseudoMarginalState, rng: &mut dyn RngCore) -> PseudoMarginalState {
        if let Some(shapes) = &self.deterministic {
            // Every draw is identical, so one evaluation is the estimate.
            return PseudoMarginalState { samples: Vec::new(), log_estimate: self.loglik_with_shapes(g, shapes) };
        }
        if self.fixed_samples && !retained.samples.is_empty() {
            let logs: Vec<f64> = retained.samples.iter().map(|s| self.loglik_with_shapes(g, s)).collect();
            return PseudoMarginalState { samples: retained.samples.clone(), log_estimate: log_mean_exp(&logs) };
        }
        pseudo_marginal_estimate(&self.beliefs, &g.types, self.r, rng, |s| self.loglik_with_shapes(g, s))
    }
}
