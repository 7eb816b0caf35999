//! Rigid-body arithmetic, Hopf coordinates, and the contact parametrization.
//!
//! Units are centimeters throughout. Rotations are unit quaternions stored as
//! `(w, x, y, z)` and kept in a canonical hemisphere so that `q` and `-q`
//! compare equal.

mod face;
mod hopf;
mod quat;
pub mod sampling;

pub use face::{
    contact_relative_pose, face_to_face, relative_face_pose, ContactParams, ContactPlane, FaceId, FLUSH_FLIP, NUM_FACES,
};
pub use hopf::{angle_diff, hopf_from_rotation, rotation_from_hopf, xi, xi_inv, HopfContactCoords, TOL_POLE};
pub use quat::Quat;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// A rigid motion: `p ↦ rotation · p + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub translation: Vec3,
    pub rotation: Quat,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn new(translation: Vec3, rotation: Quat) -> Self {
        Self { translation, rotation: rotation.canonical() }
    }

    pub fn identity() -> Self {
        Self { translation: Vec3::zeros(), rotation: Quat::identity() }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self::new(Vec3::new(x, y, z), Quat::identity())
    }

    pub fn from_rotation(rotation: Quat) -> Self {
        Self::new(Vec3::zeros(), rotation)
    }

    /// Builds a pose from a rotation matrix whose columns are the child axes
    /// expressed in the parent frame.
    pub fn from_matrix(translation: Vec3, rotation: &Mat3) -> Self {
        Self::new(translation, Quat::from_matrix(rotation))
    }

    /// `self · other`: first apply `other`, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose::new(self.rotation.rotate(&other.translation) + self.translation, self.rotation.mul(&other.rotation))
    }

    pub fn inverse(&self) -> Pose {
        let r_inv = self.rotation.conjugate();
        Pose::new(-r_inv.rotate(&self.translation), r_inv)
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation.rotate(p) + self.translation
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation.rotate(v)
    }

    pub fn rotation_matrix(&self) -> Mat3 {
        self.rotation.to_matrix()
    }

    /// Largest of translation distance and quaternion chordal distance (sign-aware).
    pub fn distance(&self, other: &Pose) -> f64 {
        let dt = (self.translation - other.translation).norm();
        dt.max(self.rotation.distance(&other.rotation))
    }

    pub fn is_finite(&self) -> bool {
        self.translation.iter().all(|v| v.is_finite()) && self.rotation.is_finite()
    }
}

/// Convenience: `compose(p1, p2) = p1 · p2`.
pub fn compose(p1: &Pose, p2: &Pose) -> Pose {
    p1.compose(p2)
}

pub fn invert(p: &Pose) -> Pose {
    p.inverse()
}

/// Angle in radians between two rotations.
pub fn rotation_angle_between(a: &Quat, b: &Quat) -> f64 {
    let d = a.dot(b).abs().min(1.0);
    2.0 * d.acos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn rot_z(angle: f64) -> Quat {
        Quat::from_axis_angle(&Vec3::z(), angle)
    }

    #[test]
    fn compose_with_identity() {
        let p = Pose::new(Vec3::new(1.0, -2.0, 3.5), Quat::from_axis_angle(&Vec3::new(1.0, 1.0, 0.0), 0.7));
        assert!(Pose::identity().compose(&p).distance(&p) < 1e-12);
        assert!(p.compose(&Pose::identity()).distance(&p) < 1e-12);
    }

    #[test]
    fn compose_with_inverse_is_identity() {
        let p = Pose::new(Vec3::new(4.0, 0.5, -1.0), Quat::from_axis_angle(&Vec3::new(0.2, -1.0, 0.3), 2.1));
        assert!(p.compose(&p.inverse()).distance(&Pose::identity()) < 1e-9);
        assert!(p.inverse().compose(&p).distance(&Pose::identity()) < 1e-9);
    }

    #[test]
    fn translate_after_rotate_moves_point() {
        // Rotating (1,0,0) by 90° about z gives (0,1,0); translating by (1,0,0) gives (1,1,0).
        let p = Pose::from_translation(1.0, 0.0, 0.0).compose(&Pose::from_rotation(rot_z(FRAC_PI_2)));
        let out = p.transform_point(&Vec3::new(1.0, 0.0, 0.0));
        assert!((out - Vec3::new(1.0, 1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn canonical_sign() {
        let q = Quat::new(-0.5, -0.5, -0.5, -0.5);
        let p = Pose::from_rotation(q);
        assert!(p.rotation.w > 0.0);
    }
}
