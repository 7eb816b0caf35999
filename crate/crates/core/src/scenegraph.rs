//! Scene graphs: a rooted tree whose edges carry either a free 6DoF pose
//! (children of the world root) or contact parameters against a parent
//! object's face.

use crate::error::{Error, Result};
use crate::geometry::sampling::{
    normal_logpdf, sample_vmf_s2, standard_normal, uniform_rotation, uniform_rotation_logpdf, vmf_s2_logpdf, S1_MEASURE,
};
use crate::geometry::{contact_relative_pose, ContactParams, ContactPlane, HopfContactCoords, Pose, Quat, Vec3, NUM_FACES};
use crate::shapes::ShapeBelief;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

/// Half-width (cm) of the uniform prior on in-plane contact offsets.
pub const CONTACT_OFFSET_HALF_WIDTH: f64 = 50.0;
/// Std. dev. (cm) of the normal-direction contact gap.
pub const CONTACT_GAP_SIGMA: f64 = 1.0;
/// vMF concentration of the contact normal deviation.
pub const CONTACT_KAPPA: f64 = 250.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Parent {
    Root,
    Object(usize),
}

impl std::fmt::Display for Parent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Parent::Root => write!(f, "root"),
            Parent::Object(i) => write!(f, "{i}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Param {
    Floating(Pose),
    Contact(ContactParams),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub parent: Parent,
    pub param: Param,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneGraph {
    /// Object type of each node, indexing the shape library.
    pub types: Vec<usize>,
    pub nodes: Vec<Node>,
}

/// Axis-aligned box for the floating-translation prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: Vec3,
    pub hi: Vec3,
}

impl Bounds {
    pub fn centered(center: Vec3, size: Vec3) -> Self {
        Self { lo: center - size / 2.0, hi: center + size / 2.0 }
    }

    pub fn volume(&self) -> f64 {
        let d = self.hi - self.lo;
        d.x * d.y * d.z
    }

    pub fn center(&self) -> Vec3 {
        (self.lo + self.hi) / 2.0
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|a| p[a] >= self.lo[a] && p[a] <= self.hi[a])
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec3 {
        Vec3::from_fn(|a, _| self.lo[a] + rng.random::<f64>() * (self.hi[a] - self.lo[a]))
    }
}

/// Pinhole camera. `pose` maps camera coordinates (x right, y down, z
/// forward) into the world.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Far-plane depth reported for rays that hit nothing.
    pub far: f64,
    pub pose: Pose,
}

impl Default for Camera {
    fn default() -> Self {
        Self { width: 64, height: 64, fx: 64.0, fy: 64.0, cx: 32.0, cy: 32.0, far: 500.0, pose: Pose::identity() }
    }
}

impl Camera {
    /// Same field of view at a different pixel resolution.
    pub fn with_resolution(&self, width: usize, height: usize) -> Camera {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        Camera { width, height, fx: self.fx * sx, fy: self.fy * sy, cx: self.cx * sx, cy: self.cy * sy, ..*self }
    }

    /// Camera at `eye` looking at `target`, with image "down" as close to
    /// world `-z` as possible.
    pub fn look_at(mut self, eye: Vec3, target: Vec3) -> Camera {
        let fwd = (target - eye).normalize();
        let mut down = Vec3::new(0.0, 0.0, -1.0) - fwd * (-fwd.z);
        if down.norm() < 1e-9 {
            down = Vec3::y();
        }
        let down = down.normalize();
        let right = down.cross(&fwd);
        let m = crate::geometry::Mat3::from_columns(&[right, down, fwd]);
        self.pose = Pose::from_matrix(eye, &m);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || !(self.fx > 0.0) || !(self.fy > 0.0) || !(self.far > 0.0) {
            return Err(Error::InvalidInput("camera intrinsics must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneContext {
    pub shapes: Vec<ShapeBelief>,
    pub bounds: Bounds,
    pub camera: Camera,
}

impl SceneContext {
    pub fn validate(&self) -> Result<()> {
        if !(self.bounds.volume() > 0.0) {
            return Err(Error::InvalidInput("scene bounds must have positive volume".into()));
        }
        for s in &self.shapes {
            s.validate()?;
        }
        self.camera.validate()
    }
}

/// Which structure prior is in force.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum StructurePrior {
    /// Uniform over all rooted trees on the objects.
    #[default]
    UniformTree,
    /// Point mass on the graph where every object hangs off the root.
    AllFloating,
}

pub fn count_structures(n: usize) -> u128 {
    if n == 0 {
        return 1;
    }
    (n as u128 + 1).pow(n as u32 - 1)
}

/// True iff following parent pointers from every node reaches the root.
pub fn is_tree(parents: &[Parent]) -> bool {
    let n = parents.len();
    // 0 unknown, 1 on current path, 2 known good
    let mut state = vec![0u8; n];
    for start in 0..n {
        let mut path = Vec::new();
        let mut cur = start;
        loop {
            match state[cur] {
                2 => break,
                1 => return false,
                _ => {}
            }
            state[cur] = 1;
            path.push(cur);
            match parents[cur] {
                Parent::Root => break,
                Parent::Object(p) if p < n && p != cur => cur = p,
                Parent::Object(_) => return false,
            }
        }
        for v in path {
            state[v] = 2;
        }
    }
    true
}

/// Membership mask of `v` and all its descendants.
pub fn subtree_mask(parents: &[Parent], v: usize) -> Vec<bool> {
    let n = parents.len();
    let mut mask = vec![false; n];
    for (w, m) in mask.iter_mut().enumerate() {
        let mut cur = w;
        for _ in 0..=n {
            if cur == v {
                *m = true;
                break;
            }
            match parents[cur] {
                Parent::Root => break,
                Parent::Object(p) => cur = p,
            }
        }
    }
    mask
}

/// Targets `u` allowed for re-parenting `v`: the root and every object
/// outside `v`'s subtree.
pub fn allowed_parents(parents: &[Parent], v: usize) -> Vec<Parent> {
    let mask = subtree_mask(parents, v);
    std::iter::once(Parent::Root).chain((0..parents.len()).filter(|&u| !mask[u]).map(Parent::Object)).collect()
}

pub fn candidate_pairs(parents: &[Parent]) -> Vec<(usize, Parent)> {
    (0..parents.len()).flat_map(|v| allowed_parents(parents, v).into_iter().map(move |u| (v, u))).collect()
}

/// Cuts `v` from its parent and attaches it under `u`. Returns the new
/// parent vector and `v`'s previous parent.
pub fn sever_graft(parents: &[Parent], v: usize, u: Parent) -> Result<(Vec<Parent>, Parent)> {
    if v >= parents.len() {
        return Err(Error::InvalidInput(format!("no object {v}")));
    }
    if let Parent::Object(w) = u {
        if w >= parents.len() || subtree_mask(parents, v)[w] {
            return Err(Error::InvalidGraft { v, u: u.to_string() });
        }
    }
    let mut out = parents.to_vec();
    let prev = out[v];
    out[v] = u;
    Ok((out, prev))
}

impl SceneGraph {
    pub fn n_objects(&self) -> usize {
        self.nodes.len()
    }

    pub fn parents(&self) -> Vec<Parent> {
        self.nodes.iter().map(|n| n.parent).collect()
    }

    /// Every object floating at the given pose.
    pub fn all_floating(types: Vec<usize>, poses: Vec<Pose>) -> Self {
        Self { types, nodes: poses.into_iter().map(|p| Node { parent: Parent::Root, param: Param::Floating(p) }).collect() }
    }

    pub fn validate(&self, n_types: usize) -> Result<()> {
        if self.types.len() != self.nodes.len() {
            return Err(Error::InvalidGraph(format!("{} types for {} nodes", self.types.len(), self.nodes.len())));
        }
        let mut seen = vec![false; n_types];
        for &t in &self.types {
            if t >= n_types {
                return Err(Error::InvalidGraph(format!("unknown type {t}")));
            }
            if seen[t] {
                return Err(Error::InvalidGraph(format!("type {t} appears twice")));
            }
            seen[t] = true;
        }
        if !is_tree(&self.parents()) {
            return Err(Error::InvalidGraph("parent pointers do not form a tree rooted at r".into()));
        }
        for (i, n) in self.nodes.iter().enumerate() {
            match (&n.parent, &n.param) {
                (Parent::Root, Param::Floating(p)) if p.is_finite() => {}
                (Parent::Object(_), Param::Contact(c)) => {
                    if c.f >= NUM_FACES {
                        return Err(Error::InvalidFace(c.f));
                    }
                    if c.fp >= NUM_FACES {
                        return Err(Error::InvalidFace(c.fp));
                    }
                }
                _ => return Err(Error::InvalidGraph(format!("node {i}: parameter kind does not match parent"))),
            }
        }
        Ok(())
    }

    /// Nodes ordered so that every parent precedes its children.
    pub fn topological_order(&self) -> Vec<usize> {
        let n = self.nodes.len();
        let mut children = vec![Vec::new(); n];
        let mut order = Vec::with_capacity(n);
        for (i, node) in self.nodes.iter().enumerate() {
            match node.parent {
                Parent::Root => order.push(i),
                Parent::Object(p) => children[p].push(i),
            }
        }
        let mut k = 0;
        while k < order.len() {
            let v = order[k];
            order.extend(children[v].iter().copied());
            k += 1;
        }
        order
    }

    /// Object poses in the world, given contact planes for every type.
    pub fn world_poses(&self, planes: &[[ContactPlane; NUM_FACES]]) -> Result<Vec<Pose>> {
        let mut out = vec![Pose::identity(); self.nodes.len()];
        for v in self.topological_order() {
            let node = &self.nodes[v];
            out[v] = match (node.parent, &node.param) {
                (Parent::Root, Param::Floating(p)) => *p,
                (Parent::Object(u), Param::Contact(c)) => {
                    let rel = contact_relative_pose(c, &planes[self.types[u]], &planes[self.types[v]])?;
                    out[u].compose(&rel)
                }
                _ => return Err(Error::InvalidGraph(format!("node {v}: parameter kind does not match parent"))),
            };
        }
        Ok(out)
    }
}

pub fn floating_logpdf(pose: &Pose, bounds: &Bounds) -> f64 {
    if !bounds.contains(&pose.translation) {
        return f64::NEG_INFINITY;
    }
    -bounds.volume().ln() + uniform_rotation_logpdf()
}

pub fn contact_logpdf(c: &ContactParams) -> f64 {
    let h = CONTACT_OFFSET_HALF_WIDTH;
    let k = &c.coords;
    if c.f >= NUM_FACES || c.fp >= NUM_FACES || k.a.abs() > h || k.b.abs() > h {
        return f64::NEG_INFINITY;
    }
    -((NUM_FACES * NUM_FACES) as f64).ln() - (2.0 * h).powi(2).ln()
        + normal_logpdf(k.z, 0.0, CONTACT_GAP_SIGMA)
        + vmf_s2_logpdf(&k.eta, &Vec3::z(), CONTACT_KAPPA)
        - S1_MEASURE.ln()
}

pub fn structure_logpdf(parents: &[Parent], prior: StructurePrior) -> f64 {
    match prior {
        StructurePrior::UniformTree => -(count_structures(parents.len()) as f64).ln(),
        StructurePrior::AllFloating => {
            if parents.iter().all(|p| *p == Parent::Root) {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        }
    }
}

/// Log prior density of structure and edge parameters. The type prior is
/// constant and omitted.
pub fn prior_logpdf(g: &SceneGraph, bounds: &Bounds, prior: StructurePrior) -> f64 {
    let mut lp = structure_logpdf(&g.parents(), prior);
    for n in &g.nodes {
        lp += match &n.param {
            Param::Floating(p) => floating_logpdf(p, bounds),
            Param::Contact(c) => contact_logpdf(c),
        };
        if lp == f64::NEG_INFINITY {
            break;
        }
    }
    lp
}

pub fn sample_floating<R: Rng + ?Sized>(bounds: &Bounds, rng: &mut R) -> Pose {
    Pose::new(bounds.sample(rng), uniform_rotation(rng))
}

pub fn sample_contact<R: Rng + ?Sized>(rng: &mut R) -> ContactParams {
    let h = CONTACT_OFFSET_HALF_WIDTH;
    ContactParams {
        f: rng.random_range(0..NUM_FACES),
        fp: rng.random_range(0..NUM_FACES),
        coords: HopfContactCoords {
            a: rng.random_range(-h..h),
            b: rng.random_range(-h..h),
            z: CONTACT_GAP_SIGMA * standard_normal(rng),
            eta: sample_vmf_s2(rng, &Vec3::z(), CONTACT_KAPPA),
            phi: rng.random::<f64>() * TAU,
        },
    }
}

/// Parent vector drawn uniformly over rooted trees by rejection.
pub fn sample_structure<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<Parent> {
    loop {
        let parents: Vec<Parent> = (0..n)
            .map(|_| match rng.random_range(0..=n) {
                0 => Parent::Root,
                k => Parent::Object(k - 1),
            })
            .collect();
        if is_tree(&parents) {
            return parents;
        }
    }
}

pub fn sample_prior<R: Rng + ?Sized>(bounds: &Bounds, types: Vec<usize>, prior: StructurePrior, rng: &mut R) -> SceneGraph {
    let n = types.len();
    let parents = match prior {
        StructurePrior::UniformTree => sample_structure(n, rng),
        StructurePrior::AllFloating => vec![Parent::Root; n],
    };
    let nodes = parents
        .into_iter()
        .map(|parent| Node {
            parent,
            param: match parent {
                Parent::Root => Param::Floating(sample_floating(bounds, rng)),
                Parent::Object(_) => Param::Contact(sample_contact(rng)),
            },
        })
        .collect();
    SceneGraph { types, nodes }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ParentJson {
    Root(String),
    Object(usize),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum ParamJson {
    Floating { t: [f64; 3], q: [f64; 4] },
    Contact { f: usize, fp: usize, a: f64, b: f64, z: f64, eta: [f64; 3], phi: f64 },
}

#[derive(Serialize, Deserialize)]
struct NodeJson {
    id: usize,
    parent: ParentJson,
    param: ParamJson,
}

#[derive(Serialize, Deserialize)]
struct GraphJson {
    n: usize,
    types: Vec<usize>,
    nodes: Vec<NodeJson>,
}

impl SceneGraph {
    pub fn to_json(&self) -> String {
        let doc = GraphJson {
            n: self.nodes.len(),
            types: self.types.clone(),
            nodes: self
                .nodes
                .iter()
                .enumerate()
                .map(|(id, node)| NodeJson {
                    id,
                    parent: match node.parent {
                        Parent::Root => ParentJson::Root("root".into()),
                        Parent::Object(p) => ParentJson::Object(p),
                    },
                    param: match &node.param {
                        Param::Floating(p) => ParamJson::Floating { t: p.translation.into(), q: p.rotation.as_array() },
                        Param::Contact(c) => ParamJson::Contact {
                            f: c.f,
                            fp: c.fp,
                            a: c.coords.a,
                            b: c.coords.b,
                            z: c.coords.z,
                            eta: c.coords.eta.into(),
                            phi: c.coords.phi,
                        },
                    },
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("scene graph serializes")
    }

    /// Parses and structurally validates a scene graph document. Type ids
    /// are checked only for uniqueness here.
    pub fn from_json(s: &str) -> Result<SceneGraph> {
        let doc: GraphJson = serde_json::from_str(s)?;
        if doc.nodes.len() != doc.n || doc.types.len() != doc.n {
            return Err(Error::InvalidGraph(format!(
                "n = {} but {} nodes and {} types",
                doc.n,
                doc.nodes.len(),
                doc.types.len()
            )));
        }
        let mut slots: Vec<Option<Node>> = vec![None; doc.n];
        for nj in doc.nodes {
            if nj.id >= doc.n || slots[nj.id].is_some() {
                return Err(Error::InvalidGraph(format!("bad or duplicate node id {}", nj.id)));
            }
            let parent = match nj.parent {
                ParentJson::Root(s) if s == "root" => Parent::Root,
                ParentJson::Root(s) => return Err(Error::InvalidGraph(format!("bad parent {s:?}"))),
                ParentJson::Object(p) => Parent::Object(p),
            };
            let param = match nj.param {
                ParamJson::Floating { t, q } => Param::Floating(Pose::new(Vec3::from(t), Quat::new(q[0], q[1], q[2], q[3]))),
                ParamJson::Contact { f, fp, a, b, z, eta, phi } => {
                    Param::Contact(ContactParams { f, fp, coords: HopfContactCoords { a, b, z, eta: Vec3::from(eta), phi } })
                }
            };
            slots[nj.id] = Some(Node { parent, param });
        }
        let g = SceneGraph { types: doc.types, nodes: slots.into_iter().map(|s| s.expect("all ids filled")).collect() };
        let max_type = g.types.iter().copied().max().map_or(0, |m| m + 1);
        g.validate(max_type)?;
        Ok(g)
    }
}
