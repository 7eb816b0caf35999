use super::{Mat3, Vec3};
use serde::{Deserialize, Serialize};

/// Unit quaternion `w + x i + y j + z k` (Hamilton convention).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl From<[f64; 4]> for Quat {
    fn from(a: [f64; 4]) -> Self {
        Quat::new(a[0], a[1], a[2], a[3])
    }
}

impl From<Quat> for [f64; 4] {
    fn from(q: Quat) -> Self {
        [q.w, q.x, q.y, q.z]
    }
}

impl Quat {
    /// Normalizing constructor. A zero input yields the identity.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if n == 0.0 || !n.is_finite() {
            return Self::identity();
        }
        Self { w: w / n, x: x / n, y: y / n, z: z / n }
    }

    pub const fn identity() -> Self {
        Self { w: 1.0, x: 0.0, y: 0.0, z: 0.0 }
    }

    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 || angle == 0.0 {
            return Self::identity();
        }
        let (s, c) = (angle / 2.0).sin_cos();
        let a = axis / n;
        Self::new(c, s * a.x, s * a.y, s * a.z)
    }

    /// Exponential map of a rotation vector (axis · angle).
    pub fn from_rotation_vector(v: &Vec3) -> Self {
        let angle = v.norm();
        if angle < 1e-300 {
            return Self::identity();
        }
        Self::from_axis_angle(v, angle)
    }

    /// Rotation vector with angle in `[0, π]`.
    pub fn to_rotation_vector(&self) -> Vec3 {
        let q = self.canonical_w();
        let s = (q.x * q.x + q.y * q.y + q.z * q.z).sqrt();
        if s < 1e-300 {
            return Vec3::zeros();
        }
        let angle = 2.0 * s.atan2(q.w);
        Vec3::new(q.x, q.y, q.z) * (angle / s)
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn dot(&self, o: &Quat) -> f64 {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn neg(&self) -> Quat {
        Quat { w: -self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    pub fn conjugate(&self) -> Quat {
        Quat { w: self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    /// Hamilton product `self * o`, renormalized.
    pub fn mul(&self, o: &Quat) -> Quat {
        let (a, b) = (self, o);
        Quat::new(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )
    }

    /// Picks the representative of `{q, -q}` with `w > 0`, falling back to the
    /// first nonzero of `x`, `y`, `z` being positive.
    pub fn canonical(&self) -> Quat {
        let key = [self.w, self.x, self.y, self.z];
        for k in key {
            if k > 0.0 {
                return *self;
            }
            if k < 0.0 {
                return self.neg();
            }
        }
        *self
    }

    fn canonical_w(&self) -> Quat {
        if self.w < 0.0 {
            self.neg()
        } else {
            *self
        }
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        // v + 2 u × (u × v + w v)
        let u = Vec3::new(self.x, self.y, self.z);
        let t = u.cross(v) * 2.0;
        v + t * self.w + u.cross(&t)
    }

    pub fn to_matrix(&self) -> Mat3 {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        Mat3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        )
    }

    /// Shepperd's method; the input must be a proper rotation matrix.
    pub fn from_matrix(m: &Mat3) -> Quat {
        let tr = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
        let q = if tr > 0.0 {
            let s = (tr + 1.0).sqrt() * 2.0;
            Quat::new(0.25 * s, (m[(2, 1)] - m[(1, 2)]) / s, (m[(0, 2)] - m[(2, 0)]) / s, (m[(1, 0)] - m[(0, 1)]) / s)
        } else if m[(0, 0)] > m[(1, 1)] && m[(0, 0)] > m[(2, 2)] {
            let s = (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt() * 2.0;
            Quat::new((m[(2, 1)] - m[(1, 2)]) / s, 0.25 * s, (m[(0, 1)] + m[(1, 0)]) / s, (m[(0, 2)] + m[(2, 0)]) / s)
        } else if m[(1, 1)] > m[(2, 2)] {
            let s = (1.0 + m[(1, 1)] - m[(0, 0)] - m[(2, 2)]).sqrt() * 2.0;
            Quat::new((m[(0, 2)] - m[(2, 0)]) / s, (m[(0, 1)] + m[(1, 0)]) / s, 0.25 * s, (m[(1, 2)] + m[(2, 1)]) / s)
        } else {
            let s = (1.0 + m[(2, 2)] - m[(0, 0)] - m[(1, 1)]).sqrt() * 2.0;
            Quat::new((m[(1, 0)] - m[(0, 1)]) / s, (m[(0, 2)] + m[(2, 0)]) / s, (m[(1, 2)] + m[(2, 1)]) / s, 0.25 * s)
        };
        q.canonical()
    }

    /// Chordal distance between rotations, insensitive to quaternion sign.
    pub fn distance(&self, o: &Quat) -> f64 {
        let d1 = ((self.w - o.w).powi(2) + (self.x - o.x).powi(2) + (self.y - o.y).powi(2) + (self.z - o.z).powi(2)).sqrt();
        let d2 = ((self.w + o.w).powi(2) + (self.x + o.x).powi(2) + (self.y + o.y).powi(2) + (self.z + o.z).powi(2)).sqrt();
        d1.min(d2)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_roundtrip() {
        let q = Quat::new(0.3, -0.5, 0.7, 0.1);
        let back = Quat::from_matrix(&q.to_matrix());
        assert!(q.distance(&back) < 1e-12);
    }

    #[test]
    fn rotate_matches_matrix() {
        let q = Quat::from_axis_angle(&Vec3::new(1.0, 2.0, -0.5), 1.3);
        let v = Vec3::new(0.4, -1.0, 2.0);
        assert!((q.rotate(&v) - q.to_matrix() * v).norm() < 1e-12);
    }

    #[test]
    fn rotation_vector_roundtrip() {
        let v = Vec3::new(0.1, -2.0, 0.7);
        let q = Quat::from_rotation_vector(&v);
        assert!((q.to_rotation_vector() - v).norm() < 1e-12);
    }

    #[test]
    fn canonical_tie_breaks() {
        let q = Quat { w: 0.0, x: 0.0, y: -1.0, z: 0.0 };
        assert_eq!(q.canonical().as_array(), [0.0, 0.0, 1.0, 0.0]);
        let q = Quat { w: 0.0, x: -0.6, y: 0.8, z: 0.0 };
        assert_eq!(q.canonical().as_array(), [0.0, 0.6, -0.8, 0.0]);
    }
}
