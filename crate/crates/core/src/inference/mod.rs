//! MCMC over scene graphs: Metropolis–Hastings pose and contact moves, the
//! involutive sever/graft structure move, and the three-stage pipeline.

pub mod cluster;
pub mod icp;
mod pipeline;

pub use cluster::{dbscan, Clustering};
pub use icp::{cube_rotations, icp, icp_error, icp_trimmed, kabsch, IcpResult};
pub use pipeline::{
    icp_refine, map_initialize, pose_hypotheses, run_inference, unexplained_points, Hypothesis, InferenceProblem, InferenceResult,
};

use crate::error::{Error, Result};
use crate::geometry::sampling::{gaussian_vec3, normal_logpdf, RotationNoise};
use crate::geometry::{relative_face_pose, xi, ContactPlane, FaceId, Pose, NUM_FACES};
use crate::likelihood::{LikelihoodModel, PseudoMarginalState};
use crate::scenegraph::{
    contact_logpdf, floating_logpdf, prior_logpdf, sample_contact, sample_floating, Bounds, Param, Parent, SceneGraph,
    StructurePrior,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub type ChainRng = ChaCha8Rng;

/// Proposal scales and schedule. Lengths in cm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelConfig {
    pub trans_walk_std: f64,
    pub rot_walk_kappa: f64,
    pub contact_ab_std: f64,
    pub contact_z_std: f64,
    pub dd_pos_std: f64,
    pub dd_kappa: f64,
    /// Chance that a floating object's pose move is data-driven, when an
    /// estimate is available.
    pub data_driven_prob: f64,
    /// Chance of an independence proposal from the prior instead of a
    /// local move. Useful when the likelihood is flat.
    pub prior_move_prob: f64,
    pub dbscan_eps: f64,
    pub dbscan_min_pts: usize,
    pub icp_iters: usize,
    pub particles_per_object: usize,
    pub stage2_sweeps_per_object: usize,
    pub sweeps: usize,
    pub burn_in_frac: f64,
    pub thin: usize,
    /// Schedule the structure move in each sweep.
    pub structure_moves: bool,
    /// Structure moves per sweep. They leave world poses unchanged, so no
    /// likelihood evaluation is needed and repeats are cheap.
    pub structure_moves_per_sweep: usize,
    /// Repeats of the structure-then-pose cycle making up one sweep.
    pub cycles_per_sweep: usize,
    /// Change-of-measure factor between Haar measure on SO(3) and the
    /// product of area on S² and arc length on S¹, for floating-to-contact.
    pub rn_float_to_contact: f64,
    /// Shape draws per likelihood estimate.
    pub pm_samples: usize,
    pub pm_fixed_samples: bool,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            trans_walk_std: 0.5,
            rot_walk_kappa: 2000.0,
            contact_ab_std: 0.5,
            contact_z_std: 0.2,
            dd_pos_std: 1.0,
            dd_kappa: 500.0,
            data_driven_prob: 0.5,
            prior_move_prob: 0.0,
            dbscan_eps: 1.5,
            dbscan_min_pts: 5,
            icp_iters: 20,
            particles_per_object: 2,
            stage2_sweeps_per_object: 20,
            sweeps: 1000,
            burn_in_frac: 0.25,
            thin: 5,
            structure_moves: true,
            structure_moves_per_sweep: 20,
            cycles_per_sweep: 1,
            rn_float_to_contact: 8.0,
            pm_samples: 5,
            pm_fixed_samples: false,
        }
    }
}

impl KernelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.trans_walk_std,
            self.rot_walk_kappa,
            self.contact_ab_std,
            self.contact_z_std,
            self.dd_pos_std,
            self.dd_kappa,
            self.dbscan_eps,
            self.rn_float_to_contact,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidInput("kernel scales must be positive".into()));
        }
        let probs = [self.data_driven_prob, self.prior_move_prob, self.burn_in_frac];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) || self.data_driven_prob + self.prior_move_prob > 1.0 {
            return Err(Error::InvalidInput("kernel probabilities must lie in [0, 1]".into()));
        }
        if self.thin == 0 || self.cycles_per_sweep == 0 || self.pm_samples == 0 || self.particles_per_object == 0 {
            return Err(Error::InvalidInput("thin, pm_samples and particles_per_object must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Everything the kernels need to evaluate the unnormalized posterior.
pub struct Target<'a> {
    pub bounds: Bounds,
    pub structure_prior: StructurePrior,
    pub planes: &'a [[ContactPlane; NUM_FACES]],
    pub likelihood: &'a dyn LikelihoodModel,
    /// Objects whose parent and pose are held fixed (e.g. a table).
    pub anchored: Vec<bool>,
}

impl Target<'_> {
    pub fn log_prior(&self, g: &SceneGraph) -> f64 {
        prior_logpdf(g, &self.bounds, self.structure_prior)
    }

    pub fn is_anchored(&self, v: usize) -> bool {
        self.anchored.get(v).copied().unwrap_or(false)
    }

    pub fn movable(&self, n: usize) -> Vec<usize> {
        (0..n).filter(|&v| !self.is_anchored(v)).collect()
    }
}

/// Proposal and acceptance counts per kernel.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MoveStats {
    pub counts: BTreeMap<String, [u64; 2]>,
}

impl MoveStats {
    pub fn record(&mut self, kernel: &str, accepted: bool) {
        let e = match self.counts.get_mut(kernel) {
            Some(e) => e,
            None => self.counts.entry(kernel.to_owned()).or_default(),
        };
        e[0] += 1;
        e[1] += accepted as u64;
    }

    pub fn rate(&self, kernel: &str) -> Option<f64> {
        self.counts.get(kernel).filter(|c| c[0] > 0).map(|c| c[1] as f64 / c[0] as f64)
    }
}

#[derive(Debug, Clone)]
pub struct ChainState {
    pub graph: SceneGraph,
    pub pm: PseudoMarginalState,
    pub log_prior: f64,
    pub stats: MoveStats,
    /// World poses of `graph`; structure moves leave them unchanged.
    world: Option<Vec<Pose>>,
}

impl ChainState {
    pub fn new(graph: SceneGraph, target: &Target, rng: &mut ChainRng) -> Self {
        let pm = target.likelihood.estimate(&graph, &PseudoMarginalState::empty(), rng);
        let log_prior = target.log_prior(&graph);
        Self { graph, pm, log_prior, stats: MoveStats::default(), world: None }
    }

    /// Unnormalized log posterior using the retained likelihood estimate.
    pub fn score(&self) -> f64 {
        self.log_prior + self.pm.log_estimate
    }

    /// MH step toward `proposal` with the given `log q(back) - log q(forth)`.
    fn propose(&mut self, proposal: SceneGraph, log_q_ratio: f64, target: &Target, rng: &mut ChainRng, kernel: &str) -> bool {
        let lp = target.log_prior(&proposal);
        let accepted = if lp == f64::NEG_INFINITY {
            false
        } else {
            let est = target.likelihood.estimate(&proposal, &self.pm, rng);
            let log_alpha = lp - self.log_prior + est.log_estimate - self.pm.log_estimate + log_q_ratio;
            let ok = accept(log_alpha, rng);
            if ok {
                self.graph = proposal;
                self.log_prior = lp;
                self.pm = est;
                self.world = None;
            }
            ok
        };
        self.stats.record(kernel, accepted);
        accepted
    }
}

fn accept(log_alpha: f64, rng: &mut ChainRng) -> bool {
    if log_alpha.is_nan() {
        return false;
    }
    log_alpha >= 0.0 || rng.random::<f64>().ln() < log_alpha
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PoseProposal<'a> {
    RandomWalk,
    /// Independence proposal around an estimate.
    DataDriven(&'a Pose),
    /// Independence proposal from the floating prior.
    Prior,
}

fn dd_logpdf(x: &Pose, center: &Pose, cfg: &KernelConfig) -> f64 {
    (0..3).map(|a| normal_logpdf(x.translation[a], center.translation[a], cfg.dd_pos_std)).sum::<f64>()
        + RotationNoise::from_kappa(cfg.dd_kappa).logpdf(&x.rotation, &center.rotation)
}

/// MH move on the 6DoF pose of floating object `v`. Descendants follow
/// rigidly since their parameters are relative. Returns whether the move
/// was accepted; non-floating or anchored objects are left alone.
pub fn mh_pose_move(
    state: &mut ChainState,
    v: usize,
    target: &Target,
    cfg: &KernelConfig,
    rng: &mut ChainRng,
    proposal: PoseProposal,
) -> bool {
    let Param::Floating(x) = state.graph.nodes[v].param else {
        return false;
    };
    if target.is_anchored(v) {
        return false;
    }
    let (x_new, log_q_ratio, kernel) = match proposal {
        PoseProposal::RandomWalk => {
            let t = x.translation + gaussian_vec3(rng, cfg.trans_walk_std);
            let q = RotationNoise::from_kappa(cfg.rot_walk_kappa).perturb(rng, &x.rotation);
            (Pose::new(t, q), 0.0, "pose_rw")
        }
        PoseProposal::DataDriven(center) => {
            let t = center.translation + gaussian_vec3(rng, cfg.dd_pos_std);
            let q = RotationNoise::from_kappa(cfg.dd_kappa).perturb(rng, &center.rotation);
            let x_new = Pose::new(t, q);
            (x_new, dd_logpdf(&x, center, cfg) - dd_logpdf(&x_new, center, cfg), "pose_dd")
        }
        PoseProposal::Prior => {
            let x_new = sample_floating(&target.bounds, rng);
            // Proposal density equals the prior density; the ratio cancels it.
            let lq = crate::scenegraph::floating_logpdf(&x, &target.bounds)
                - crate::scenegraph::floating_logpdf(&x_new, &target.bounds);
            (x_new, lq, "pose_prior")
        }
    };
    let mut g = state.graph.clone();
    g.nodes[v].param = Param::Floating(x_new);
    state.propose(g, log_q_ratio, target, rng, kernel)
}

/// Symmetric walk for contact child `v`: Gaussian on the in-plane offset and
/// gap, or vMF on `eta` with a wrapped Gaussian on `phi`.
pub fn mh_contact_move(state: &mut ChainState, v: usize, target: &Target, cfg: &KernelConfig, rng: &mut ChainRng) -> bool {
    let Param::Contact(mut c) = state.graph.nodes[v].param else {
        return false;
    };
    if target.is_anchored(v) {
        return false;
    }
    use crate::geometry::sampling::{sample_vmf_s2, standard_normal};
    // Either the offsets or the orientation move; both halves are symmetric.
    let kernel = if rng.random::<bool>() {
        c.coords.a += cfg.contact_ab_std * standard_normal(rng);
        c.coords.b += cfg.contact_ab_std * standard_normal(rng);
        c.coords.z += cfg.contact_z_std * standard_normal(rng);
        "contact_walk"
    } else {
        c.coords.eta = sample_vmf_s2(rng, &c.coords.eta, cfg.rot_walk_kappa);
        c.coords.phi = (c.coords.phi + standard_normal(rng) / cfg.rot_walk_kappa.sqrt()).rem_euclid(std::f64::consts::TAU);
        "contact_rot_walk"
    };
    let mut g = state.graph.clone();
    g.nodes[v].param = Param::Contact(c);
    state.propose(g, 0.0, target, rng, kernel)
}

/// Independence proposal of `(a, b, z, η, φ)` from the contact prior,
/// keeping the faces.
pub fn mh_contact_prior_move(state: &mut ChainState, v: usize, target: &Target, rng: &mut ChainRng) -> bool {
    let Param::Contact(c) = state.graph.nodes[v].param else {
        return false;
    };
    if target.is_anchored(v) {
        return false;
    }
    let mut fresh = sample_contact(rng);
    fresh.f = c.f;
    fresh.fp = c.fp;
    let lq = crate::scenegraph::contact_logpdf(&c) - crate::scenegraph::contact_logpdf(&fresh);
    let mut g = state.graph.clone();
    g.nodes[v].param = Param::Contact(fresh);
    state.propose(g, lq, target, rng, "contact_prior")
}

/// Auxiliary choice made by the structure move: the object to re-parent,
/// its new parent, and (for an object parent) the child and parent faces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StructureChoice {
    pub v: usize,
    pub u: Parent,
    pub faces: Option<(FaceId, FaceId)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum MoveCase {
    FloatToFloat,
    FloatToContact,
    ContactToFloat,
    ContactToContact,
}

impl MoveCase {
    pub fn name(&self) -> &'static str {
        match self {
            MoveCase::FloatToFloat => "structure_ff",
            MoveCase::FloatToContact => "structure_fc",
            MoveCase::ContactToFloat => "structure_cf",
            MoveCase::ContactToContact => "structure_cc",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Involuted {
    pub graph: SceneGraph,
    /// The choice that maps `graph` back to the input.
    pub reverse: StructureChoice,
    pub case: MoveCase,
}

/// The involution on (graph, choice): re-parents `v` under `u`, rewriting
/// `v`'s parameters so that every world pose is unchanged.
pub fn apply_structure(g: &SceneGraph, choice: &StructureChoice, planes: &[[ContactPlane; NUM_FACES]]) -> Result<Involuted> {
    apply_structure_at(g, &g.world_poses(planes)?, choice, planes)
}

struct Edit {
    parent: Parent,
    param: Param,
    reverse: StructureChoice,
    case: MoveCase,
}

fn apply_structure_at(
    g: &SceneGraph,
    world: &[Pose],
    choice: &StructureChoice,
    planes: &[[ContactPlane; NUM_FACES]],
) -> Result<Involuted> {
    let e = structure_edit(g, world, choice, planes)?;
    let mut graph = g.clone();
    graph.nodes[choice.v].parent = e.parent;
    graph.nodes[choice.v].param = e.param;
    Ok(Involuted { graph, reverse: e.reverse, case: e.case })
}

fn structure_edit(
    g: &SceneGraph,
    world: &[Pose],
    choice: &StructureChoice,
    planes: &[[ContactPlane; NUM_FACES]],
) -> Result<Edit> {
    let v = choice.v;
    let n = g.n_objects();
    if v >= n {
        return Err(Error::InvalidInput(format!("no object {v}")));
    }
    if let Parent::Object(w) = choice.u {
        if w >= n || in_subtree(g, w, v) {
            return Err(Error::InvalidGraft { v, u: choice.u.to_string() });
        }
    }
    let prev = g.nodes[v].parent;
    let prev_faces = match g.nodes[v].param {
        Param::Contact(c) => Some((c.f, c.fp)),
        Param::Floating(_) => None,
    };
    let case = match (prev, choice.u) {
        (Parent::Root, Parent::Root) => MoveCase::FloatToFloat,
        (Parent::Root, Parent::Object(_)) => MoveCase::FloatToContact,
        (Parent::Object(_), Parent::Root) => MoveCase::ContactToFloat,
        (Parent::Object(_), Parent::Object(_)) => MoveCase::ContactToContact,
    };
    let param = match choice.u {
        Parent::Root => Param::Floating(world[v]),
        Parent::Object(w) => {
            let (f, fp) = choice.faces.ok_or_else(|| Error::InvalidInput("contact target needs a face pair".into()))?;
            if f >= NUM_FACES || fp >= NUM_FACES {
                return Err(Error::InvalidFace(f.max(fp)));
            }
            let parent_face = world[w].compose(&planes[g.types[w]][fp].pose_in_object);
            let child_face = world[v].compose(&planes[g.types[v]][f].pose_in_object);
            let coords = xi(&relative_face_pose(&parent_face, &child_face))?;
            Param::Contact(crate::geometry::ContactParams { f, fp, coords })
        }
    };
    Ok(Edit { parent: choice.u, param, reverse: StructureChoice { v, u: prev, faces: prev_faces }, case })
}

/// Whether `w` lies in the subtree rooted at `v`.
fn in_subtree(g: &SceneGraph, w: usize, v: usize) -> bool {
    let mut cur = w;
    for _ in 0..=g.n_objects() {
        if cur == v {
            return true;
        }
        match g.nodes[cur].parent {
            Parent::Root => return false,
            Parent::Object(p) => cur = p,
        }
    }
    false
}

fn param_logpdf(param: &Param, bounds: &Bounds) -> f64 {
    match param {
        Param::Floating(p) => floating_logpdf(p, bounds),
        Param::Contact(c) => contact_logpdf(c),
    }
}

/// Log of the change-of-measure and face-choice factors for each case.
/// Prior and likelihood ratios are not included.
pub fn structure_log_correction(case: MoveCase, cfg: &KernelConfig) -> f64 {
    let faces = ((NUM_FACES * NUM_FACES) as f64).ln();
    let rn = cfg.rn_float_to_contact.ln();
    match case {
        MoveCase::FloatToFloat | MoveCase::ContactToContact => 0.0,
        MoveCase::FloatToContact => rn + faces,
        MoveCase::ContactToFloat => -rn - faces,
    }
}

/// Draws a structure choice: `v` uniform over movable objects, `u` uniform
/// over the root and objects outside `v`'s subtree, faces uniform.
pub fn sample_structure_choice(g: &SceneGraph, movable: &[usize], rng: &mut ChainRng) -> Option<StructureChoice> {
    if movable.is_empty() {
        return None;
    }
    let v = movable[rng.random_range(0..movable.len())];
    let n = g.n_objects();
    let outside = (0..n).filter(|&w| !in_subtree(g, w, v)).count();
    let k = rng.random_range(0..=outside);
    let u = if k == 0 { Parent::Root } else { Parent::Object((0..n).filter(|&w| !in_subtree(g, w, v)).nth(k - 1)?) };
    let faces = match u {
        Parent::Root => None,
        Parent::Object(_) => Some((rng.random_range(0..NUM_FACES), rng.random_range(0..NUM_FACES))),
    };
    Some(StructureChoice { v, u, faces })
}

/// Involutive MCMC step over structure. World poses are unchanged, so the
/// retained likelihood estimate carries over and only the prior and the
/// correction factors enter the acceptance ratio.
pub fn structure_move(state: &mut ChainState, target: &Target, cfg: &KernelConfig, rng: &mut ChainRng) -> Option<MoveCase> {
    let movable = target.movable(state.graph.n_objects());
    let choice = sample_structure_choice(&state.graph, &movable, rng)?;
    let world = match state.world.take() {
        Some(w) if w.len() == state.graph.n_objects() => w,
        _ => match state.graph.world_poses(target.planes) {
            Ok(w) => w,
            Err(_) => {
                state.stats.record("structure_singular", false);
                return None;
            }
        },
    };
    let edit = structure_edit(&state.graph, &world, &choice, target.planes);
    state.world = Some(world);
    let Ok(edit) = edit else {
        state.stats.record("structure_singular", false);
        return None;
    };
    let v = choice.v;
    let incremental = target.structure_prior == StructurePrior::UniformTree && state.log_prior.is_finite();
    let lp = if incremental {
        state.log_prior - param_logpdf(&state.graph.nodes[v].param, &target.bounds) + param_logpdf(&edit.param, &target.bounds)
    } else {
        let mut g = state.graph.clone();
        g.nodes[v].parent = edit.parent;
        g.nodes[v].param = edit.param;
        target.log_prior(&g)
    };
    let log_alpha =
        if edit.case == MoveCase::FloatToFloat { 0.0 } else { lp - state.log_prior + structure_log_correction(edit.case, cfg) };
    let ok = lp > f64::NEG_INFINITY && accept(log_alpha, rng);
    state.stats.record(edit.case.name(), ok);
    if ok {
        state.graph.nodes[v].parent = edit.parent;
        state.graph.nodes[v].param = edit.param;
        state.log_prior = lp;
    }
    Some(edit.case)
}

/// One sweep: `cycles_per_sweep` repeats of structure moves (if enabled)
/// followed by one pose or contact move per movable object, each on a
/// uniformly chosen object.
pub fn sweep(state: &mut ChainState, target: &Target, cfg: &KernelConfig, rng: &mut ChainRng, estimates: &[Option<Pose>]) {
    for _ in 0..cfg.cycles_per_sweep.max(1) {
        cycle(state, target, cfg, rng, estimates);
    }
}

fn cycle(state: &mut ChainState, target: &Target, cfg: &KernelConfig, rng: &mut ChainRng, estimates: &[Option<Pose>]) {
    if cfg.structure_moves {
        for _ in 0..cfg.structure_moves_per_sweep {
            structure_move(state, target, cfg, rng);
        }
    }
    let movable = target.movable(state.graph.n_objects());
    for _ in 0..movable.len() {
        let v = movable[rng.random_range(0..movable.len())];
        let r: f64 = rng.random();
        match state.graph.nodes[v].param {
            Param::Floating(_) => {
                let est = estimates.get(v).and_then(|e| e.as_ref());
                let proposal = if r < cfg.prior_move_prob {
                    PoseProposal::Prior
                } else {
                    match est {
                        Some(c) if r < cfg.prior_move_prob + cfg.data_driven_prob => PoseProposal::DataDriven(c),
                        _ => PoseProposal::RandomWalk,
                    }
                };
                mh_pose_move(state, v, target, cfg, rng, proposal);
            }
            Param::Contact(_) => {
                if r < cfg.prior_move_prob {
                    mh_contact_prior_move(state, v, target, rng);
                } else {
                    mh_contact_move(state, v, target, cfg, rng);
                }
            }
        }
    }
}
