//! Voxel occupancy grids and independent-Bernoulli shape beliefs.
//!
//! Cell `(i, j, l)` covers `[i s, (i+1) s] × [j s, (j+1) s] × [l s, (l+1) s]`
//! in the object frame; storage is row-major with `l` fastest.

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::{ContactPlane, Pose, Vec3, NUM_FACES};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

pub type Dims = [usize; 3];

/// Threshold at or above which a belief's cell counts as occupied in the
/// mode shape.
pub const MODE_THRESHOLD: f64 = 0.5;

fn index(dims: &Dims, i: usize, j: usize, l: usize) -> usize {
    (i * dims[1] + j) * dims[2] + l
}

fn check_dims(dims: &Dims, resolution: f64) -> Result<()> {
    if dims.contains(&0) || !(resolution > 0.0) {
        return Err(Error::InvalidInput(format!("bad voxel grid {dims:?} @ {resolution}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoxelShape {
    pub dims: Dims,
    pub resolution: f64,
    pub occupancy: Vec<bool>,
}

impl VoxelShape {
    pub fn empty(dims: Dims, resolution: f64) -> Self {
        Self { dims, resolution, occupancy: vec![false; dims.iter().product()] }
    }

    pub fn full(dims: Dims, resolution: f64) -> Self {
        Self { dims, resolution, occupancy: vec![true; dims.iter().product()] }
    }

    /// Occupies every cell whose center satisfies `inside`.
    pub fn from_fn(dims: Dims, resolution: f64, inside: impl Fn(Vec3) -> bool) -> Self {
        let mut s = Self::empty(dims, resolution);
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                for l in 0..dims[2] {
                    let c = s.cell_center(i, j, l);
                    s.occupancy[index(&dims, i, j, l)] = inside(c);
                }
            }
        }
        s
    }

    pub fn len(&self) -> usize {
        self.occupancy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupancy.is_empty()
    }

    pub fn get(&self, i: usize, j: usize, l: usize) -> bool {
        self.occupancy[index(&self.dims, i, j, l)]
    }

    pub fn set(&mut self, i: usize, j: usize, l: usize, v: bool) {
        let k = index(&self.dims, i, j, l);
        self.occupancy[k] = v;
    }

    /// Signed-index lookup; anything outside the grid is free.
    pub fn occupied_at(&self, i: isize, j: isize, l: isize) -> bool {
        if i < 0 || j < 0 || l < 0 {
            return false;
        }
        let (i, j, l) = (i as usize, j as usize, l as usize);
        if i >= self.dims[0] || j >= self.dims[1] || l >= self.dims[2] {
            return false;
        }
        self.get(i, j, l)
    }

    pub fn occupied_count(&self) -> usize {
        self.occupancy.iter().filter(|&&o| o).count()
    }

    pub fn is_renderable(&self) -> bool {
        self.occupancy.iter().any(|&o| o)
    }

    pub fn extent(&self) -> Vec3 {
        Vec3::new(
            self.dims[0] as f64 * self.resolution,
            self.dims[1] as f64 * self.resolution,
            self.dims[2] as f64 * self.resolution,
        )
    }

    pub fn cell_center(&self, i: usize, j: usize, l: usize) -> Vec3 {
        Vec3::new(i as f64 + 0.5, j as f64 + 0.5, l as f64 + 0.5) * self.resolution
    }

    pub fn occupied_cells(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        let d = self.dims;
        (0..d[0])
            .flat_map(move |i| (0..d[1]).flat_map(move |j| (0..d[2]).filter(move |&l| self.get(i, j, l)).map(move |l| [i, j, l])))
    }

    /// Tight axis-aligned box `[lo, hi]` around occupied cells, in object frame.
    pub fn occupied_bounds(&self) -> Result<(Vec3, Vec3)> {
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        let mut any = false;
        for c in self.occupied_cells() {
            any = true;
            for a in 0..3 {
                lo[a] = lo[a].min(c[a]);
                hi[a] = hi[a].max(c[a] + 1);
            }
        }
        if !any {
            return Err(Error::EmptyShape);
        }
        let s = self.resolution;
        Ok((Vec3::new(lo[0] as f64, lo[1] as f64, lo[2] as f64) * s, Vec3::new(hi[0] as f64, hi[1] as f64, hi[2] as f64) * s))
    }

    /// Center of the occupied bounding box in the object frame.
    pub fn center(&self) -> Result<Vec3> {
        let (lo, hi) = self.occupied_bounds()?;
        Ok((lo + hi) / 2.0)
    }

    pub fn to_belief(&self) -> ShapeBelief {
        ShapeBelief {
            dims: self.dims,
            resolution: self.resolution,
            probs: self.occupancy.iter().map(|&o| if o { 1.0 } else { 0.0 }).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeBelief {
    pub dims: Dims,
    pub resolution: f64,
    pub probs: Vec<f64>,
}

impl ShapeBelief {
    pub fn uniform(dims: Dims, resolution: f64, p: f64) -> Self {
        Self { dims, resolution, probs: vec![p; dims.iter().product()] }
    }

    pub fn validate(&self) -> Result<()> {
        check_dims(&self.dims, self.resolution)?;
        if self.probs.len() != self.dims.iter().product::<usize>() {
            return Err(Error::DimMismatch(format!("{} probs for dims {:?}", self.probs.len(), self.dims)));
        }
        if let Some(p) = self.probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidInput(format!("probability {p} outside [0,1]")));
        }
        Ok(())
    }

    pub fn get(&self, i: usize, j: usize, l: usize) -> f64 {
        self.probs[index(&self.dims, i, j, l)]
    }

    /// True when every cell is exactly 0 or 1.
    pub fn is_deterministic(&self) -> bool {
        self.probs.iter().all(|&p| p == 0.0 || p == 1.0)
    }

    /// Cells at or above [`MODE_THRESHOLD`].
    pub fn mode_shape(&self) -> VoxelShape {
        VoxelShape {
            dims: self.dims,
            resolution: self.resolution,
            occupancy: self.probs.iter().map(|&p| p >= MODE_THRESHOLD).collect(),
        }
    }

    /// Sum of per-cell Bernoulli entropies, in nats.
    pub fn entropy(&self) -> f64 {
        self.probs
            .iter()
            .map(|&p| {
                let h = |x: f64| if x <= 0.0 { 0.0 } else { -x * x.ln() };
                h(p) + h(1.0 - p)
            })
            .sum()
    }
}

/// Independent Bernoulli draw per cell.
pub fn sample_shape<R: Rng + ?Sized>(belief: &ShapeBelief, rng: &mut R) -> VoxelShape {
    VoxelShape {
        dims: belief.dims,
        resolution: belief.resolution,
        occupancy: belief
            .probs
            .iter()
            .map(|&p| {
                if p >= 1.0 {
                    true
                } else if p <= 0.0 {
                    false
                } else {
                    rng.random::<f64>() < p
                }
            })
            .collect(),
    }
}

/// Six contact planes on the tight bounding cuboid of the occupied cells.
pub fn bounding_cuboid_planes(shape: &VoxelShape) -> Result<[ContactPlane; NUM_FACES]> {
    let (lo, hi) = shape.occupied_bounds()?;
    Ok(ContactPlane::cuboid_faces(&lo, &hi))
}

pub fn shape_iou(a: &VoxelShape, b: &VoxelShape) -> Result<f64> {
    if a.dims != b.dims || a.resolution != b.resolution {
        return Err(Error::DimMismatch(format!("{:?}@{} vs {:?}@{}", a.dims, a.resolution, b.dims, b.resolution)));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.occupancy.iter().zip(&b.occupancy) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

const NEIGHBORS: [[isize; 3]; 6] = [[-1, 0, 0], [1, 0, 0], [0, -1, 0], [0, 1, 0], [0, 0, -1], [0, 0, 1]];

/// Centers of occupied cells that have at least one free (or off-grid)
/// 6-neighbor, mapped through `pose`.
pub fn surface_cloud(shape: &VoxelShape, pose: &Pose) -> Result<PointCloud> {
    if !shape.is_renderable() {
        return Err(Error::EmptyShape);
    }
    let pts = shape
        .occupied_cells()
        .filter(|c| {
            NEIGHBORS.iter().any(|d| !shape.occupied_at(c[0] as isize + d[0], c[1] as isize + d[1], c[2] as isize + d[2]))
        })
        .map(|c| pose.transform_point(&shape.cell_center(c[0], c[1], c[2])))
        .collect();
    Ok(PointCloud::world(pts))
}

/// Writes `VOX1 h w l s\n` followed by little-endian f32 probabilities.
pub fn write_vox<W: Write>(mut w: W, belief: &ShapeBelief) -> Result<()> {
    let [h, wd, l] = belief.dims;
    writeln!(w, "VOX1 {} {} {} {}", h, wd, l, belief.resolution)?;
    let mut buf = Vec::with_capacity(belief.probs.len() * 4);
    for &p in &belief.probs {
        buf.extend_from_slice(&(p as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_vox<R: Read>(mut r: R) -> Result<ShapeBelief> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| Error::Parse("VOX1 header missing newline".into()))?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|e| Error::Parse(e.to_string()))?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some("VOX1") {
        return Err(Error::Parse(format!("bad VOX1 magic in {header:?}")));
    }
    let mut num = |what: &str| -> Result<String> {
        parts.next().map(str::to_owned).ok_or_else(|| Error::Parse(format!("VOX1 header missing {what}")))
    };
    let parse_usize = |s: String| s.parse::<usize>().map_err(|e| Error::Parse(e.to_string()));
    let h = parse_usize(num("h")?)?;
    let w = parse_usize(num("w")?)?;
    let l = parse_usize(num("l")?)?;
    let s: f64 = num("s")?.parse().map_err(|e: std::num::ParseFloatError| Error::Parse(e.to_string()))?;
    check_dims(&[h, w, l], s)?;
    let body = &bytes[nl + 1..];
    let n = h * w * l;
    if body.len() != n * 4 {
        return Err(Error::Parse(format!("VOX1 body has {} bytes, expected {}", body.len(), n * 4)));
    }
    let probs = body.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect();
    let belief = ShapeBelief { dims: [h, w, l], resolution: s, probs };
    belief.validate()?;
    Ok(belief)
}

pub fn save_vox(path: &Path, belief: &ShapeBelief) -> Result<()> {
    write_vox(std::io::BufWriter::new(std::fs::File::create(path)?), belief)
}

pub fn load_vox(path: &Path) -> Result<ShapeBelief> {
    read_vox(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sample_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let full = sample_shape(&ShapeBelief::uniform([3, 3, 3], 1.0, 1.0), &mut rng);
        assert_eq!(full.occupied_count(), 27);
        let empty = sample_shape(&ShapeBelief::uniform([3, 3, 3], 1.0, 0.0), &mut rng);
        assert_eq!(empty.occupied_count(), 0);
        assert!(!empty.is_renderable());
    }

    #[test]
    fn sample_half_fraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = sample_shape(&ShapeBelief::uniform([10, 10, 100], 1.0, 0.5), &mut rng);
        let frac = s.occupied_count() as f64 / 10_000.0;
        assert!((frac - 0.5).abs() < 0.02, "{frac}");
    }

    #[test]
    fn planes_of_full_cube() {
        let planes = bounding_cuboid_planes(&VoxelShape::full([2, 2, 2], 1.0)).unwrap();
        for (k, p) in planes.iter().enumerate() {
            let axis = k / 2;
            let expected = if k % 2 == 0 { 0.0 } else { 2.0 };
            assert_eq!(p.pose_in_object.translation[axis], expected);
            let n = p.normal();
            // Normals are exactly ±axis.
            for a in 0..3 {
                let want = if a == axis {
                    if k % 2 == 0 {
                        -1.0
                    } else {
                        1.0
                    }
                } else {
                    0.0
                };
                assert!((n[a] - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn planes_of_single_cell() {
        let mut s = VoxelShape::empty([4, 4, 4], 1.0);
        s.set(0, 0, 0, true);
        let (lo, hi) = s.occupied_bounds().unwrap();
        assert_eq!(lo, Vec3::zeros());
        assert_eq!(hi, Vec3::new(1.0, 1.0, 1.0));
        assert!(bounding_cuboid_planes(&VoxelShape::empty([2, 2, 2], 1.0)).is_err());
    }

    #[test]
    fn planes_of_l_shape_follow_min_max() {
        let mut s = VoxelShape::empty([5, 5, 5], 0.5);
        for i in 1..4 {
            s.set(i, 1, 2, true);
        }
        for j in 1..4 {
            s.set(1, j, 2, true);
        }
        let (lo, hi) = s.occupied_bounds().unwrap();
        assert_eq!(lo, Vec3::new(0.5, 0.5, 1.0));
        assert_eq!(hi, Vec3::new(2.0, 2.0, 1.5));
    }

    #[test]
    fn iou_cases() {
        let a = VoxelShape::full([2, 1, 1], 1.0);
        let mut b = VoxelShape::empty([2, 1, 1], 1.0);
        b.set(0, 0, 0, true);
        assert_eq!(shape_iou(&a, &a).unwrap(), 1.0);
        assert_eq!(shape_iou(&a, &b).unwrap(), 0.5);
        let mut c = VoxelShape::empty([2, 1, 1], 1.0);
        c.set(1, 0, 0, true);
        assert_eq!(shape_iou(&b, &c).unwrap(), 0.0);
        assert_eq!(shape_iou(&VoxelShape::empty([2, 1, 1], 1.0), &VoxelShape::empty([2, 1, 1], 1.0)).unwrap(), 1.0);
        assert!(shape_iou(&a, &VoxelShape::full([1, 2, 1], 1.0)).is_err());
    }

    #[test]
    fn surface_of_solid_cube() {
        let cube = VoxelShape::full([3, 3, 3], 1.0);
        let cloud = surface_cloud(&cube, &Pose::identity()).unwrap();
        assert_eq!(cloud.len(), 26);
        assert!(!cloud.points.contains(&Vec3::new(1.5, 1.5, 1.5)));
        let mut single = VoxelShape::empty([2, 2, 2], 1.0);
        single.set(0, 0, 0, true);
        let c = surface_cloud(&single, &Pose::identity()).unwrap();
        assert_eq!(c.points, vec![Vec3::new(0.5, 0.5, 0.5)]);
        let shifted = surface_cloud(&cube, &Pose::from_translation(1.0, 2.0, 3.0)).unwrap();
        for (p, q) in cloud.points.iter().zip(&shifted.points) {
            assert_eq!(q - p, Vec3::new(1.0, 2.0, 3.0));
        }
    }

    #[test]
    fn vox_file_roundtrip_and_errors() {
        let mut b = ShapeBelief::uniform([2, 3, 4], 0.5, 0.25);
        b.probs[5] = 1.0;
        let mut buf = Vec::new();
        write_vox(&mut buf, &b).unwrap();
        assert!(buf.starts_with(b"VOX1 2 3 4 0.5\n"));
        assert_eq!(buf.len(), "VOX1 2 3 4 0.5\n".len() + 24 * 4);
        assert_eq!(read_vox(&buf[..]).unwrap(), b);
        assert!(read_vox(&b"VOX2 1 1 1 1\n\0\0\0\0"[..]).is_err());
        assert!(read_vox(&b"VOX1 1 1 1 1\n\0\0"[..]).is_err());
    }

    #[test]
    fn mode_includes_half() {
        let b = ShapeBelief { dims: [3, 1, 1], resolution: 1.0, probs: vec![0.49, 0.5, 0.9] };
        assert_eq!(b.mode_shape().occupancy, vec![false, true, true]);
    }
}
