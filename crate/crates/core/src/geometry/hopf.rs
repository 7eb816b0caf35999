//! Hopf coordinates on SO(3) and the bijection `xi` between a 6DoF relative
//! pose and contact coordinates `(a, b, z, eta, phi)`.
//!
//! A rotation is described by where it carries the north pole, `eta`, and by
//! the residual spin about `+z` applied before that, `phi`. The rotation with
//! `phi = 0` is the one of minimal geodesic distance to the identity that maps
//! the north pole to `eta`. Both maps are singular at `eta = (0, 0, -1)`.

use super::{Pose, Quat, Vec3};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

/// Width of the excluded neighborhood around the south pole.
pub const TOL_POLE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopfContactCoords {
    pub a: f64,
    pub b: f64,
    pub z: f64,
    pub eta: Vec3,
    pub phi: f64,
}

impl HopfContactCoords {
    pub fn flush() -> Self {
        Self { a: 0.0, b: 0.0, z: 0.0, eta: Vec3::z(), phi: 0.0 }
    }

    /// Largest coordinate-wise discrepancy, with `phi` compared on the circle.
    pub fn max_abs_diff(&self, o: &HopfContactCoords) -> f64 {
        let dphi = angle_diff(self.phi, o.phi);
        [(self.a - o.a).abs(), (self.b - o.b).abs(), (self.z - o.z).abs(), (self.eta - o.eta).norm(), dphi]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

/// Absolute difference of two angles on the circle.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

fn near_south_pole(eta: &Vec3) -> bool {
    (eta - Vec3::new(0.0, 0.0, -1.0)).norm() < TOL_POLE
}

/// Image of the north pole and in-plane angle `phi ∈ [0, 2π)`.
pub fn hopf_from_rotation(q: &Quat) -> Result<(Vec3, f64)> {
    let (w, x, y, z) = (q.w, q.x, q.y, q.z);
    let eta = Vec3::new(2.0 * (x * z + w * y), 2.0 * (y * z - w * x), 1.0 - 2.0 * (x * x + y * y));
    if near_south_pole(&eta) {
        return Err(Error::SingularOrientation);
    }
    // phi / 2 = arctan(z / w) with the branch taken in [0, π); this is the
    // same for q and -q.
    let mut half = z.atan2(w).rem_euclid(PI);
    if half >= PI {
        half -= PI;
    }
    let mut phi = 2.0 * half;
    if phi >= TAU {
        phi -= TAU;
    }
    Ok((eta.normalize(), phi))
}

/// Inverse of [`hopf_from_rotation`]. Returns the canonical quaternion.
pub fn rotation_from_hopf(eta: &Vec3, phi: f64) -> Result<Quat> {
    let n = eta.norm();
    let e = eta / n;
    let (a, b, c) = (e.x, e.y, e.z);
    if c <= -1.0 + TOL_POLE || near_south_pole(&e) {
        return Err(Error::SingularOrientation);
    }
    let s = (2.0 * (1.0 + c)).sqrt();
    let (sh, ch) = (phi / 2.0).sin_cos();
    let q = Quat::new((1.0 + c) * ch / s, (a * sh - b * ch) / s, (a * ch + b * sh) / s, (1.0 + c) * sh / s);
    Ok(q.canonical())
}

/// Copies the translation and converts the rotation to Hopf coordinates.
pub fn xi(rel: &Pose) -> Result<HopfContactCoords> {
    let (eta, phi) = hopf_from_rotation(&rel.rotation)?;
    Ok(HopfContactCoords { a: rel.translation.x, b: rel.translation.y, z: rel.translation.z, eta, phi })
}

/// Inverse of [`xi`]. Coordinates at the singular pole yield an error.
pub fn xi_inv(c: &HopfContactCoords) -> Result<Pose> {
    let q = rotation_from_hopf(&c.eta, c.phi)?;
    Ok(Pose::new(Vec3::new(c.a, c.b, c.z), q))
}
