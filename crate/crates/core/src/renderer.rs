//! Pinhole depth rendering of voxel objects by grid traversal, and depth
//! unprojection.
//!
//! Depth is the camera-frame `z` of the first surface hit. Pixel `(u, v)`
//! looks along `((u - cx) / fx, (v - cy) / fy, 1)`.

pub use crate::cloud::{Frame, PointCloud};
use crate::error::{Error, Result};
use crate::geometry::{ContactPlane, Pose, Vec3, NUM_FACES};
use crate::scenegraph::{Camera, SceneGraph};
use crate::shapes::VoxelShape;
use rayon::prelude::*;
use std::io::{Read, Write};
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    /// Depth reported for pixels whose ray hits nothing.
    pub far: f64,
    /// Row-major, `depths[v * width + u]`.
    pub depths: Vec<f64>,
}

impl DepthImage {
    pub fn blank(width: usize, height: usize, far: f64) -> Self {
        Self { width, height, far, depths: vec![far; width * height] }
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.depths[v * self.width + u]
    }

    pub fn hit_count(&self) -> usize {
        self.depths.iter().filter(|&&d| d < self.far).count()
    }

    pub fn validate(&self) -> Result<()> {
        if self.depths.len() != self.width * self.height {
            return Err(Error::DimMismatch(format!("{} depths for {}x{}", self.depths.len(), self.width, self.height)));
        }
        if let Some(d) = self.depths.iter().find(|d| !(**d > 0.0 && **d <= self.far)) {
            return Err(Error::InvalidInput(format!("depth {d} outside (0, {}]", self.far)));
        }
        Ok(())
    }
}

/// A shape placed in the world, prepared for ray casting.
struct Posed<'a> {
    shape: &'a VoxelShape,
    world_to_obj: Pose,
    lo: [usize; 3],
    hi: [usize; 3],
    /// Pixel rectangle `[u0, u1) × [v0, v1)` that can see the object.
    rect: [usize; 4],
}

fn occupied_index_bounds(shape: &VoxelShape) -> Option<([usize; 3], [usize; 3])> {
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    let mut any = false;
    for c in shape.occupied_cells() {
        any = true;
        for a in 0..3 {
            lo[a] = lo[a].min(c[a]);
            hi[a] = hi[a].max(c[a] + 1);
        }
    }
    any.then_some((lo, hi))
}

fn screen_rect(cam: &Camera, obj_to_cam: &Pose, lo: &Vec3, hi: &Vec3) -> [usize; 4] {
    let full = [0, cam.width, 0, cam.height];
    let (mut umin, mut umax, mut vmin, mut vmax) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for k in 0..8 {
        let corner = Vec3::new(
            if k & 1 == 0 { lo.x } else { hi.x },
            if k & 2 == 0 { lo.y } else { hi.y },
            if k & 4 == 0 { lo.z } else { hi.z },
        );
        let p = obj_to_cam.transform_point(&corner);
        if p.z <= 1e-6 {
            // Box straddles the camera plane; give up on culling.
            return full;
        }
        let u = cam.fx * p.x / p.z + cam.cx;
        let v = cam.fy * p.y / p.z + cam.cy;
        umin = umin.min(u);
        umax = umax.max(u);
        vmin = vmin.min(v);
        vmax = vmax.max(v);
    }
    let clamp = |x: f64, n: usize| x.max(0.0).min(n as f64) as usize;
    [
        clamp(umin.floor() - 1.0, cam.width),
        clamp(umax.ceil() + 2.0, cam.width),
        clamp(vmin.floor() - 1.0, cam.height),
        clamp(vmax.ceil() + 2.0, cam.height),
    ]
}

/// Ray parameter of the first occupied cell along `o + t d`, `t ≥ 0`,
/// restricted to the index box `[lo, hi)`.
fn cast(shape: &VoxelShape, lo: &[usize; 3], hi: &[usize; 3], o: &Vec3, d: &Vec3) -> Option<f64> {
    let s = shape.resolution;
    let mut t_enter = 0.0f64;
    let mut t_exit = f64::INFINITY;
    for a in 0..3 {
        let (b0, b1) = (lo[a] as f64 * s, hi[a] as f64 * s);
        if d[a].abs() < 1e-15 {
            if o[a] < b0 || o[a] > b1 {
                return None;
            }
        } else {
            let inv = 1.0 / d[a];
            let (mut t0, mut t1) = ((b0 - o[a]) * inv, (b1 - o[a]) * inv);
            if t0 > t1 {
                std::mem::swap(&mut t0, &mut t1);
            }
            t_enter = t_enter.max(t0);
            t_exit = t_exit.min(t1);
        }
    }
    if t_enter > t_exit {
        return None;
    }
    let p = o + d * t_enter;
    let mut cell = [0isize; 3];
    let mut step = [0isize; 3];
    let mut t_max = [f64::INFINITY; 3];
    let mut t_delta = [f64::INFINITY; 3];
    for a in 0..3 {
        let c = (p[a] / s).floor() as isize;
        cell[a] = c.clamp(lo[a] as isize, hi[a] as isize - 1);
        if d[a] > 1e-15 {
            step[a] = 1;
            t_max[a] = ((cell[a] + 1) as f64 * s - o[a]) / d[a];
            t_delta[a] = s / d[a];
        } else if d[a] < -1e-15 {
            step[a] = -1;
            t_max[a] = (cell[a] as f64 * s - o[a]) / d[a];
            t_delta[a] = -s / d[a];
        }
    }
    let mut t = t_enter;
    loop {
        if shape.get(cell[0] as usize, cell[1] as usize, cell[2] as usize) {
            return Some(t);
        }
        let a = if t_max[0] < t_max[1] {
            if t_max[0] < t_max[2] {
                0
            } else {
                2
            }
        } else if t_max[1] < t_max[2] {
            1
        } else {
            2
        };
        t = t_max[a];
        if t > t_exit {
            return None;
        }
        cell[a] += step[a];
        if cell[a] < lo[a] as isize || cell[a] >= hi[a] as isize {
            return None;
        }
        t_max[a] += t_delta[a];
    }
}

/// Renders shapes at the given world poses.
pub fn render_posed(objects: &[(&VoxelShape, Pose)], cam: &Camera) -> DepthImage {
    let cam_inv = cam.pose.inverse();
    let posed: Vec<Posed> = objects
        .iter()
        .filter_map(|(shape, pose)| {
            let (lo, hi) = occupied_index_bounds(shape)?;
            let s = shape.resolution;
            let lo_v = Vec3::new(lo[0] as f64, lo[1] as f64, lo[2] as f64) * s;
            let hi_v = Vec3::new(hi[0] as f64, hi[1] as f64, hi[2] as f64) * s;
            let obj_to_cam = cam_inv.compose(pose);
            Some(Posed { shape, world_to_obj: obj_to_cam.inverse(), lo, hi, rect: screen_rect(cam, &obj_to_cam, &lo_v, &hi_v) })
        })
        .collect();
    let rows: Vec<Vec<f64>> = (0..cam.height)
        .into_par_iter()
        .map(|v| {
            let mut row = vec![cam.far; cam.width];
            for ob in &posed {
                let [u0, u1, v0, v1] = ob.rect;
                if v < v0 || v >= v1 {
                    continue;
                }
                // Camera frame rays mapped into the object frame.
                let o = ob.world_to_obj.translation;
                for (u, px) in row.iter_mut().enumerate().take(u1).skip(u0) {
                    let dc = Vec3::new((u as f64 - cam.cx) / cam.fx, (v as f64 - cam.cy) / cam.fy, 1.0);
                    let d = ob.world_to_obj.transform_vector(&dc);
                    if let Some(t) = cast(ob.shape, &ob.lo, &ob.hi, &o, &d) {
                        if t > 0.0 && t < *px {
                            *px = t;
                        }
                    }
                }
            }
            row
        })
        .collect();
    DepthImage { width: cam.width, height: cam.height, far: cam.far, depths: rows.concat() }
}

/// Renders a scene graph, given one voxel shape per type and the contact
/// planes used to resolve contact edges.
pub fn render_depth(
    g: &SceneGraph,
    shapes: &[VoxelShape],
    planes: &[[ContactPlane; NUM_FACES]],
    cam: &Camera,
) -> Result<DepthImage> {
    let poses = g.world_poses(planes)?;
    let objects: Vec<(&VoxelShape, Pose)> = g.types.iter().zip(poses).map(|(&t, p)| (&shapes[t], p)).collect();
    Ok(render_posed(&objects, cam))
}

/// World-frame points of every pixel that hit something.
pub fn unproject(img: &DepthImage, cam: &Camera) -> PointCloud {
    let mut pts = Vec::with_capacity(img.hit_count());
    for v in 0..img.height {
        for u in 0..img.width {
            let d = img.get(u, v);
            if d >= img.far {
                continue;
            }
            let pc = Vec3::new((u as f64 - cam.cx) * d / cam.fx, (v as f64 - cam.cy) * d / cam.fy, d);
            pts.push(cam.pose.transform_point(&pc));
        }
    }
    PointCloud::world(pts)
}

pub fn write_depth<W: Write>(mut w: W, img: &DepthImage) -> Result<()> {
    writeln!(w, "DPT1 {} {} {}", img.width, img.height, img.far)?;
    let mut buf = Vec::with_capacity(img.depths.len() * 4);
    for &d in &img.depths {
        buf.extend_from_slice(&(d as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_depth<R: Read>(mut r: R) -> Result<DepthImage> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| Error::Parse("DPT1 header missing newline".into()))?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|e| Error::Parse(e.to_string()))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 4 || parts[0] != "DPT1" {
        return Err(Error::Parse(format!("bad DPT1 header {header:?}")));
    }
    let bad = |e: String| Error::Parse(format!("DPT1 header: {e}"));
    let width: usize = parts[1].parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?;
    let height: usize = parts[2].parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?;
    let far: f64 = parts[3].parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?;
    let body = &bytes[nl + 1..];
    if body.len() != width * height * 4 {
        return Err(Error::Parse(format!("DPT1 body has {} bytes, expected {}", body.len(), width * height * 4)));
    }
    // Stored as f32; clamp so the far sentinel survives the round trip.
    let depths = body.chunks_exact(4).map(|c| (f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).min(far)).collect();
    let img = DepthImage { width, height, far, depths };
    img.validate()?;
    Ok(img)
}

pub fn save_depth(path: &Path, img: &DepthImage) -> Result<()> {
    write_depth(std::io::BufWriter::new(std::fs::File::create(path)?), img)
}

pub fn load_depth(path: &Path) -> Result<DepthImage> {
    read_depth(std::fs::File::open(path)?)
}
