//! Contact planes and the face-to-face relative pose.

use super::{xi_inv, HopfContactCoords, Mat3, Pose, Quat, Vec3};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

pub type FaceId = usize;

/// Faces of a bounding cuboid, in the order −x, +x, −y, +y, −z, +z.
pub const NUM_FACES: usize = 6;

/// Half turn about the face x-axis. Composed onto the Hopf rotation so that
/// `eta = (0, 0, 1)` means the two face normals are anti-parallel.
pub const FLUSH_FLIP: Quat = Quat { w: 0.0, x: 1.0, y: 0.0, z: 0.0 };

/// A planar patch through which an object can rest on another. The frame's
/// origin is the face center and its `+z` axis is the outward normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactPlane {
    pub face_id: FaceId,
    pub pose_in_object: Pose,
}

/// Outward normal and in-plane x-axis for each face; the y-axis is
/// `normal × x_axis` so that `(x, y, normal)` is right-handed.
const FACE_AXES: [([f64; 3], [f64; 3]); NUM_FACES] = [
    ([-1.0, 0.0, 0.0], [0.0, 1.0, 0.0]),
    ([1.0, 0.0, 0.0], [0.0, 1.0, 0.0]),
    ([0.0, -1.0, 0.0], [0.0, 0.0, 1.0]),
    ([0.0, 1.0, 0.0], [0.0, 0.0, 1.0]),
    ([0.0, 0.0, -1.0], [1.0, 0.0, 0.0]),
    ([0.0, 0.0, 1.0], [1.0, 0.0, 0.0]),
];

impl ContactPlane {
    /// The six face frames of the axis-aligned box `[lo, hi]`.
    pub fn cuboid_faces(lo: &Vec3, hi: &Vec3) -> [ContactPlane; NUM_FACES] {
        let center = (lo + hi) / 2.0;
        std::array::from_fn(|face_id| {
            let (n, x) = FACE_AXES[face_id];
            let normal = Vec3::from(n);
            let x_axis = Vec3::from(x);
            let y_axis = normal.cross(&x_axis);
            let axis = face_id / 2;
            let mut origin = center;
            origin[axis] = if face_id % 2 == 0 { lo[axis] } else { hi[axis] };
            let rot = Mat3::from_columns(&[x_axis, y_axis, normal]);
            ContactPlane { face_id, pose_in_object: Pose::from_matrix(origin, &rot) }
        })
    }

    pub fn normal(&self) -> Vec3 {
        self.pose_in_object.transform_vector(&Vec3::z())
    }
}

/// Contact parameters of a child object: its face `f`, the parent face
/// `fp`, and the face-to-face coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactParams {
    pub f: FaceId,
    pub fp: FaceId,
    pub coords: HopfContactCoords,
}

fn plane(planes: &[ContactPlane], id: FaceId) -> Result<&ContactPlane> {
    planes.get(id).ok_or(Error::InvalidFace(id))
}

/// Face-to-face pose for the given coordinates: child face frame expressed
/// in the parent face frame.
pub fn face_to_face(coords: &HopfContactCoords) -> Result<Pose> {
    Ok(xi_inv(coords)?.compose(&Pose::from_rotation(FLUSH_FLIP)))
}

/// Pose of the child object relative to the parent object.
pub fn contact_relative_pose(
    theta: &ContactParams,
    parent_planes: &[ContactPlane],
    child_planes: &[ContactPlane],
) -> Result<Pose> {
    let parent_face = plane(parent_planes, theta.fp)?;
    let child_face = plane(child_planes, theta.f)?;
    Ok(parent_face.pose_in_object.compose(&face_to_face(&theta.coords)?).compose(&child_face.pose_in_object.inverse()))
}

/// Child face pose relative to the parent face with the flush flip removed,
/// i.e. the argument to pass through `xi` to obtain contact coordinates.
pub fn relative_face_pose(world_parent_face: &Pose, world_child_face: &Pose) -> Pose {
    world_parent_face.inverse().compose(world_child_face).compose(&Pose::from_rotation(FLUSH_FLIP).inverse())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::xi;

    fn unit_cube() -> [ContactPlane; NUM_FACES] {
        ContactPlane::cuboid_faces(&Vec3::zeros(), &Vec3::new(1.0, 1.0, 1.0))
    }

    const NEG_Z: FaceId = 4;
    const POS_Z: FaceId = 5;

    #[test]
    fn face_frames_are_right_handed_and_outward() {
        let faces = unit_cube();
        let center = Vec3::new(0.5, 0.5, 0.5);
        for (i, f) in faces.iter().enumerate() {
            let m = f.pose_in_object.rotation_matrix();
            assert!((m.determinant() - 1.0).abs() < 1e-12);
            let n = f.normal();
            let expected = Vec3::from(FACE_AXES[i].0);
            assert_eq!(n.map(|v| v.round()), expected);
            assert!((n - expected).norm() < 1e-12);
            // Origin lies on the face, normal points away from the center.
            assert!((f.pose_in_object.translation - center).dot(&n) > 0.49);
        }
    }

    #[test]
    fn flush_stack_on_top_face() {
        let faces = unit_cube();
        let theta = ContactParams { f: NEG_Z, fp: POS_Z, coords: HopfContactCoords::flush() };
        let rel = contact_relative_pose(&theta, &faces, &faces).unwrap();
        // Child's bottom face coincides with parent's top face.
        assert!((rel.translation - Vec3::new(0.0, 0.0, 1.0)).norm() < 1e-12);
        let child_bottom = rel.compose(&faces[NEG_Z].pose_in_object);
        let parent_top = faces[POS_Z].pose_in_object;
        assert!((child_bottom.translation - parent_top.translation).norm() < 1e-12);
        assert!((child_bottom.transform_vector(&Vec3::z()) + parent_top.transform_vector(&Vec3::z())).norm() < 1e-12);
    }

    /// Corner points of the child's bottom face, mapped to the parent frame
    /// with explicit 4x4 matrices.
    fn corners_in_parent(theta: &ContactParams) -> Vec<Vec3> {
        let faces = unit_cube();
        let rel = contact_relative_pose(theta, &faces, &faces).unwrap();
        let mut h = nalgebra::Matrix4::<f64>::identity();
        h.fixed_view_mut::<3, 3>(0, 0).copy_from(&rel.rotation_matrix());
        h.fixed_view_mut::<3, 1>(0, 3).copy_from(&rel.translation);
        [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]
            .iter()
            .map(|c| {
                let p = h * nalgebra::Vector4::new(c[0], c[1], 0.0, 1.0);
                Vec3::new(p.x, p.y, p.z)
            })
            .collect()
    }

    #[test]
    fn in_plane_offset_shifts_along_face_x() {
        let base = ContactParams { f: NEG_Z, fp: POS_Z, coords: HopfContactCoords::flush() };
        let mut shifted = base;
        shifted.coords.a = 0.5;
        let c0 = corners_in_parent(&base);
        let c1 = corners_in_parent(&shifted);
        // The top face's x-axis is the parent's +x.
        for (p, q) in c0.iter().zip(&c1) {
            assert!((q - p - Vec3::new(0.5, 0.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn gap_along_parent_normal() {
        let base = ContactParams { f: NEG_Z, fp: POS_Z, coords: HopfContactCoords::flush() };
        let mut lifted = base;
        lifted.coords.z = 1.0;
        for (p, q) in corners_in_parent(&base).iter().zip(&corners_in_parent(&lifted)) {
            assert!((q - p - Vec3::new(0.0, 0.0, 1.0)).norm() < 1e-12);
            assert!((p.z - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_face_errors() {
        let faces = unit_cube();
        let theta = ContactParams { f: 9, fp: 0, coords: HopfContactCoords::flush() };
        assert!(matches!(contact_relative_pose(&theta, &faces, &faces), Err(Error::InvalidFace(9))));
    }

    #[test]
    fn relative_face_pose_of_flush_contact_is_zero_coords() {
        let faces = unit_cube();
        let parent_world = Pose::new(Vec3::new(3.0, -1.0, 2.0), Quat::from_axis_angle(&Vec3::new(1.0, 0.3, 0.2), 0.8));
        let theta = ContactParams { f: NEG_Z, fp: POS_Z, coords: HopfContactCoords::flush() };
        let child_world = parent_world.compose(&contact_relative_pose(&theta, &faces, &faces).unwrap());
        let rel = relative_face_pose(
            &parent_world.compose(&faces[POS_Z].pose_in_object),
            &child_world.compose(&faces[NEG_Z].pose_in_object),
        );
        let c = xi(&rel).unwrap();
        assert!(c.max_abs_diff(&HopfContactCoords::flush()) < 1e-9);
    }

    #[test]
    fn relative_face_pose_reports_gap() {
        let faces = unit_cube();
        let parent_top = faces[POS_Z].pose_in_object;
        // Child bottom frame: two centimeters above, normal pointing down.
        let child_bottom = parent_top.compose(&Pose::from_translation(0.0, 0.0, 2.0)).compose(&Pose::from_rotation(FLUSH_FLIP));
        let c = xi(&relative_face_pose(&parent_top, &child_bottom)).unwrap();
        assert!((c.z - 2.0).abs() < 1e-12);
        assert!((c.eta - Vec3::z()).norm() < 1e-12);
    }
}
