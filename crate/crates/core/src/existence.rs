//! Joint inference over which candidate objects are present and where,
//! including objects that may be entirely hidden behind others.
//!
//! The structure is fixed: every present candidate floats. Presence flips
//! use the prior as the birth proposal, so pose densities cancel and the
//! acceptance ratio is the presence odds times the likelihood ratio.

use crate::error::{Error, Result};
use crate::geometry::sampling::{standard_normal, uniform_rotation};
use crate::geometry::{Mat3, Pose, Quat, Vec3};
use crate::likelihood::pixel_loglik;
use crate::renderer::{render_posed, DepthImage};
use crate::scenegraph::{floating_logpdf, Bounds, Camera};
use crate::shapes::VoxelShape;
use nalgebra::Rotation3;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI, TAU};

/// Candidate types with their independent presence probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExistencePrior {
    /// Shape index of each candidate in [`ExistenceContext::shapes`].
    pub types: Vec<usize>,
    pub p_pres: Vec<f64>,
}

impl ExistencePrior {
    pub fn validate(&self) -> Result<()> {
        if self.types.len() != self.p_pres.len() {
            return Err(Error::DimMismatch(format!("{} types, {} probabilities", self.types.len(), self.p_pres.len())));
        }
        if let Some(p) = self.p_pres.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidInput(format!("presence probability {p} outside [0,1]")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }
}

/// Floating pose with orientation as intrinsic Z-Y-X Euler angles
/// `(roll, pitch, yaw)`, pitch in `[-π/2, π/2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerPose {
    pub translation: Vec3,
    pub euler: [f64; 3],
}

impl EulerPose {
    pub fn from_pose(p: &Pose) -> Self {
        let m: Mat3 = p.rotation.to_matrix();
        let (r, pi, y) = Rotation3::from_matrix_unchecked(m).euler_angles();
        Self { translation: p.translation, euler: [r, pi, y] }
    }

    pub fn to_pose(&self) -> Pose {
        let [r, p, y] = self.euler;
        let m = Rotation3::from_euler_angles(r, p, y).into_inner();
        Pose::new(self.translation, Quat::from_matrix(&m))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExistenceState {
    /// Pose per candidate, `None` when absent.
    pub poses: Vec<Option<EulerPose>>,
}

impl ExistenceState {
    pub fn all_absent(n: usize) -> Self {
        Self { poses: vec![None; n] }
    }

    pub fn present(&self) -> Vec<bool> {
        self.poses.iter().map(Option::is_some).collect()
    }
}

/// Everything but the candidates: known objects, bounds, camera, noise.
#[derive(Debug, Clone)]
pub struct ExistenceContext {
    pub shapes: Vec<VoxelShape>,
    /// Objects known to be in the scene, at fixed world poses.
    pub fixed: Vec<(VoxelShape, Pose)>,
    pub bounds: Bounds,
    pub camera: Camera,
    /// Depth noise of the pixel likelihood (cm).
    pub sigma: f64,
}

impl ExistenceContext {
    /// Depth image with the fixed objects and the present candidates.
    pub fn render(&self, state: &ExistenceState, prior: &ExistencePrior) -> DepthImage {
        let poses: Vec<(usize, Pose)> =
            state.poses.iter().enumerate().filter_map(|(m, p)| p.map(|p| (prior.types[m], p.to_pose()))).collect();
        let mut objects: Vec<(&VoxelShape, Pose)> = self.fixed.iter().map(|(s, p)| (s, *p)).collect();
        objects.extend(poses.iter().map(|(t, p)| (&self.shapes[*t], *p)));
        render_posed(&objects, &self.camera)
    }
}

/// Log prior: Bernoulli presence terms plus a uniform pose density (w.r.t.
/// Lebesgue × Haar) for each present candidate. The 1/N! labeling factor
/// cancels in every ratio and is left out.
pub fn existence_prior_logpdf(s: &ExistenceState, prior: &ExistencePrior, ctx: &ExistenceContext) -> f64 {
    s.poses
        .iter()
        .zip(&prior.p_pres)
        .map(|(pose, &p)| match pose {
            Some(e) => p.ln() + floating_logpdf(&e.to_pose(), &ctx.bounds),
            None => (1.0 - p).ln(),
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExistenceConfig {
    pub sweeps: usize,
    pub burn_in_frac: f64,
    pub trans_walk_std: f64,
    /// Step (radians) of each Euler-angle walk.
    pub euler_walk_std: f64,
    /// Replace the pixel likelihood by a constant (prior checks).
    pub constant_likelihood: bool,
}

impl Default for ExistenceConfig {
    fn default() -> Self {
        Self { sweeps: 2000, burn_in_frac: 0.25, trans_walk_std: 1.0, euler_walk_std: 0.2, constant_likelihood: false }
    }
}

impl ExistenceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sweeps == 0 || !(0.0..1.0).contains(&self.burn_in_frac) {
            return Err(Error::InvalidInput("need sweeps ≥ 1 and burn-in in [0,1)".into()));
        }
        if !(self.trans_walk_std > 0.0 && self.euler_walk_std > 0.0) {
            return Err(Error::InvalidInput("walk scales must be positive".into()));
        }
        Ok(())
    }
}

/// Chain state with its cached log likelihood and move counts.
#[derive(Debug, Clone)]
pub struct ExistenceChain<'a> {
    pub state: ExistenceState,
    pub loglik: f64,
    pub counts: BTreeMap<&'static str, [u64; 2]>,
    observed: &'a DepthImage,
    prior: &'a ExistencePrior,
    ctx: &'a ExistenceContext,
    constant: bool,
}

impl<'a> ExistenceChain<'a> {
    pub fn new(
        state: ExistenceState,
        observed: &'a DepthImage,
        prior: &'a ExistencePrior,
        ctx: &'a ExistenceContext,
        constant: bool,
    ) -> Result<Self> {
        prior.validate()?;
        if state.poses.len() != prior.len() {
            return Err(Error::DimMismatch(format!("{} poses for {} candidates", state.poses.len(), prior.len())));
        }
        if let Some(&t) = prior.types.iter().find(|&&t| t >= ctx.shapes.len()) {
            return Err(Error::InvalidInput(format!("candidate type {t} has no shape")));
        }
        let mut chain = Self { state, loglik: 0.0, counts: BTreeMap::new(), observed, prior, ctx, constant };
        chain.loglik = chain.loglik_of(&chain.state.clone())?;
        Ok(chain)
    }

    fn loglik_of(&self, s: &ExistenceState) -> Result<f64> {
        if self.constant {
            return Ok(0.0);
        }
        pixel_loglik(self.observed, &self.ctx.render(s, self.prior), self.ctx.sigma)
    }

    fn record(&mut self, kernel: &'static str, ok: bool) {
        let e = self.counts.entry(kernel).or_default();
        e[0] += 1;
        e[1] += ok as u64;
    }

    /// MH step to `proposal` with log acceptance `extra` plus the likelihood
    /// ratio. `extra` must already hold the prior and proposal terms.
    fn mh(&mut self, proposal: ExistenceState, extra: f64, kernel: &'static str, rng: &mut impl Rng) -> Result<bool> {
        if extra == f64::NEG_INFINITY {
            self.record(kernel, false);
            return Ok(false);
        }
        let ll = self.loglik_of(&proposal)?;
        let log_alpha = extra + ll - self.loglik;
        let ok = log_alpha >= 0.0 || rng.random::<f64>().ln() < log_alpha;
        if ok {
            self.state = proposal;
            self.loglik = ll;
        }
        self.record(kernel, ok);
        Ok(ok)
    }

    fn in_bounds(&self, e: &EulerPose) -> f64 {
        if self.ctx.bounds.contains(&e.translation) {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    }

    /// Birth with a pose drawn from the prior, or death.
    pub fn presence_move(&mut self, m: usize, rng: &mut impl Rng) -> Result<bool> {
        let p = self.prior.p_pres[m];
        let mut proposal = self.state.clone();
        let (odds, kernel) = match self.state.poses[m] {
            None => {
                let pose = Pose::new(self.ctx.bounds.sample(rng), uniform_rotation(rng));
                proposal.poses[m] = Some(EulerPose::from_pose(&pose));
                (p.ln() - (1.0 - p).ln(), "birth")
            }
            Some(_) => {
                proposal.poses[m] = None;
                ((1.0 - p).ln() - p.ln(), "death")
            }
        };
        let odds = if odds.is_nan() { f64::NEG_INFINITY } else { odds };
        self.mh(proposal, odds, kernel, rng)
    }

    /// Independence proposal of the translation from its uniform prior.
    pub fn prior_translation_move(&mut self, m: usize, rng: &mut impl Rng) -> Result<bool> {
        let Some(mut e) = self.state.poses[m] else { return Ok(false) };
        e.translation = self.ctx.bounds.sample(rng);
        let mut proposal = self.state.clone();
        proposal.poses[m] = Some(e);
        self.mh(proposal, 0.0, "prior_translation", rng)
    }

    /// Independence proposal of the orientation from the uniform rotation
    /// distribution.
    pub fn prior_rotation_move(&mut self, m: usize, rng: &mut impl Rng) -> Result<bool> {
        let Some(e) = self.state.poses[m] else { return Ok(false) };
        let fresh = EulerPose::from_pose(&Pose::new(e.translation, uniform_rotation(rng)));
        let mut proposal = self.state.clone();
        proposal.poses[m] = Some(fresh);
        self.mh(proposal, 0.0, "prior_rotation", rng)
    }

    /// Gaussian step on one translation coordinate.
    pub fn translation_walk(&mut self, m: usize, axis: usize, std: f64, rng: &mut impl Rng) -> Result<bool> {
        let Some(mut e) = self.state.poses[m] else { return Ok(false) };
        e.translation[axis] += std * standard_normal(rng);
        let extra = self.in_bounds(&e);
        let mut proposal = self.state.clone();
        proposal.poses[m] = Some(e);
        self.mh(proposal, extra, "translation_walk", rng)
    }

    /// Gaussian step on one Euler angle. Uniform rotations have density
    /// proportional to `cos(pitch)` in these coordinates, which enters the
    /// ratio for pitch steps.
    pub fn euler_walk(&mut self, m: usize, axis: usize, std: f64, rng: &mut impl Rng) -> Result<bool> {
        let Some(mut e) = self.state.poses[m] else { return Ok(false) };
        let old_pitch = e.euler[1];
        e.euler[axis] += std * standard_normal(rng);
        let extra = if axis == 1 {
            if e.euler[1].abs() >= FRAC_PI_2 {
                f64::NEG_INFINITY
            } else {
                e.euler[1].cos().ln() - old_pitch.cos().ln()
            }
        } else {
            e.euler[axis] = (e.euler[axis] + PI).rem_euclid(TAU) - PI;
            0.0
        };
        let mut proposal = self.state.clone();
        proposal.poses[m] = Some(e);
        self.mh(proposal, extra, "euler_walk", rng)
    }

    /// For each candidate in turn: a presence flip, then (if present) prior
    /// translation and rotation proposals and a walk on every coordinate.
    pub fn sweep(&mut self, cfg: &ExistenceConfig, rng: &mut impl Rng) -> Result<()> {
        for m in 0..self.prior.len() {
            self.presence_move(m, rng)?;
            if self.state.poses[m].is_none() {
                continue;
            }
            self.prior_translation_move(m, rng)?;
            self.prior_rotation_move(m, rng)?;
            for axis in 0..3 {
                self.translation_walk(m, axis, cfg.trans_walk_std, rng)?;
            }
            for axis in 0..3 {
                self.euler_walk(m, axis, cfg.euler_walk_std, rng)?;
            }
        }
        Ok(())
    }
}

/// Single presence flip for candidate `m`; returns the new state.
pub fn presence_move(
    state: &ExistenceState,
    m: usize,
    observed: &DepthImage,
    prior: &ExistencePrior,
    ctx: &ExistenceContext,
    rng: &mut impl Rng,
) -> Result<ExistenceState> {
    let mut chain = ExistenceChain::new(state.clone(), observed, prior, ctx, false)?;
    chain.presence_move(m, rng)?;
    Ok(chain.state)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExistenceResult {
    /// Fraction of post-burn-in sweeps with each candidate present.
    pub presence: Vec<f64>,
    /// Monte Carlo standard error of `presence`, ignoring autocorrelation.
    pub presence_se: Vec<f64>,
    /// Post-burn-in poses of each candidate, from sweeps where it was present.
    pub pose_samples: Vec<Vec<Pose>>,
    pub moves: BTreeMap<String, [u64; 2]>,
}

pub fn infer_existence(
    observed: &DepthImage,
    prior: &ExistencePrior,
    ctx: &ExistenceContext,
    cfg: &ExistenceConfig,
    rng: &mut impl Rng,
) -> Result<ExistenceResult> {
    cfg.validate()?;
    let n = prior.len();
    let mut chain = ExistenceChain::new(ExistenceState::all_absent(n), observed, prior, ctx, cfg.constant_likelihood)?;
    let burn = (cfg.sweeps as f64 * cfg.burn_in_frac).floor() as usize;
    let mut present = vec![0usize; n];
    let mut pose_samples = vec![Vec::new(); n];
    for s in 0..cfg.sweeps {
        chain.sweep(cfg, rng)?;
        if s < burn {
            continue;
        }
        for (m, pose) in chain.state.poses.iter().enumerate() {
            if let Some(e) = pose {
                present[m] += 1;
                pose_samples[m].push(e.to_pose());
            }
        }
    }
    let kept = (cfg.sweeps - burn) as f64;
    let presence: Vec<f64> = present.iter().map(|&c| c as f64 / kept).collect();
    let presence_se = presence.iter().map(|p| (p * (1.0 - p) / kept).sqrt()).collect();
    Ok(ExistenceResult {
        presence,
        presence_se,
        pose_samples,
        moves: chain.counts.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
    })
}
