//! Rigid registration: Kabsch alignment, point-to-point ICP, and the 24
//! axis-aligned orientations used to seed it.

use crate::error::{Error, Result};
use crate::geometry::{Mat3, Pose, Quat, Vec3};
use crate::kdtree::KdTree;

/// The rotation group of the cube: signed permutation matrices with
/// determinant +1, in a fixed order starting with the identity.
pub fn cube_rotations() -> Vec<Quat> {
    const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut out = Vec::with_capacity(24);
    for p in PERMS {
        for signs in 0..8u32 {
            let mut m = Mat3::zeros();
            for (row, &col) in p.iter().enumerate() {
                m[(row, col)] = if signs >> row & 1 == 1 { -1.0 } else { 1.0 };
            }
            if m.determinant() > 0.0 {
                out.push(Quat::from_matrix(&m));
            }
        }
    }
    out
}

/// Least-squares rigid transform `T` with `T · src[i] ≈ dst[i]`.
pub fn kabsch(src: &[Vec3], dst: &[Vec3]) -> Result<Pose> {
    if src.len() != dst.len() || src.len() < 3 {
        return Err(Error::DegenerateCorrespondences);
    }
    let n = src.len() as f64;
    let cs = src.iter().sum::<Vec3>() / n;
    let cd = dst.iter().sum::<Vec3>() / n;
    let mut h = Mat3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (s - cs) * (d - cd).transpose();
    }
    let svd = h.svd(true, true);
    let sv = svd.singular_values;
    let mut sorted = [sv[0], sv[1], sv[2]];
    sorted.sort_by(|a, b| b.total_cmp(a));
    // Collinear or coincident sources leave the rotation underdetermined.
    if sorted[0] <= 1e-12 || sorted[1] <= 1e-9 * sorted[0] {
        return Err(Error::DegenerateCorrespondences);
    }
    let u = svd.u.ok_or(Error::DegenerateCorrespondences)?;
    let v_t = svd.v_t.ok_or(Error::DegenerateCorrespondences)?;
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let r = v * Mat3::from_diagonal(&Vec3::new(1.0, 1.0, d)) * u.transpose();
    let t = cd - r * cs;
    Ok(Pose::from_matrix(t, &r))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    pub pose: Pose,
    /// Mean squared correspondence distance after each accepted iterate,
    /// starting with the initial pose.
    pub history: Vec<f64>,
}

impl IcpResult {
    pub fn final_error(&self) -> f64 {
        *self.history.last().unwrap_or(&f64::INFINITY)
    }
}

/// Correspondences in both directions: every source point to its nearest
/// target point and every target point within `trim` to its nearest source
/// point. Pairs are (object-frame source, world target).
fn correspond(source: &[Vec3], pose: &Pose, target: &KdTree, trim: f64) -> (Vec<Vec3>, Vec<Vec3>, f64) {
    let moved: Vec<Vec3> = source.iter().map(|p| pose.transform_point(p)).collect();
    let src_tree = KdTree::build(&moved);
    let n = source.len() + target.len();
    let (mut src, mut dst) = (Vec::with_capacity(n), Vec::with_capacity(n));
    let mut total = 0.0;
    for (p, q) in source.iter().zip(&moved) {
        let (j, d2) = target.nearest(q).expect("nonempty target");
        src.push(*p);
        dst.push(target.points()[j]);
        total += d2;
    }
    for t in target.points() {
        let (i, d2) = src_tree.nearest(t).expect("nonempty source");
        if d2 > trim * trim {
            continue;
        }
        src.push(source[i]);
        dst.push(*t);
        total += d2;
    }
    let n = src.len();
    (src, dst, total / n as f64)
}

/// Mean squared correspondence distance of `source` placed at `pose`.
pub fn icp_error(source: &[Vec3], pose: &Pose, target: &KdTree, trim: f64) -> f64 {
    correspond(source, pose, target, trim).2
}

/// ICP moving object-frame `source` points onto `target`, with nearest
/// neighbor correspondences taken in both directions so that partial
/// overlaps slide into place. Stops early when the error stops improving;
/// the returned history is non-increasing.
pub fn icp(source: &[Vec3], init: &Pose, target: &KdTree, iters: usize) -> Result<IcpResult> {
    icp_trimmed(source, init, target, iters, f64::INFINITY)
}

/// [`icp`] ignoring target points farther than `trim` from the moved
/// source when matching in the reverse direction.
pub fn icp_trimmed(source: &[Vec3], init: &Pose, target: &KdTree, iters: usize, trim: f64) -> Result<IcpResult> {
    if source.len() < 3 || target.is_empty() {
        return Err(Error::DegenerateCorrespondences);
    }
    let mut pose = *init;
    let (mut src, mut dst, mut err) = correspond(source, &pose, target, trim);
    let mut history = vec![err];
    for _ in 0..iters {
        let step = kabsch(&src, &dst)?;
        if step.distance(&pose) < 1e-12 {
            break;
        }
        let (mut best, mut best_c) = (step, correspond(source, &step, target, trim));
        // Point-to-point steps undershoot when surfaces slide along each
        // other, so keep stretching the update while it helps.
        let c = source.iter().map(|p| pose.transform_point(p)).sum::<Vec3>() / source.len() as f64;
        let r = step.rotation.mul(&pose.rotation.conjugate());
        let t = r.rotate(&(c - pose.translation)) + step.translation - c;
        let rv = r.to_rotation_vector();
        for k in [2.0, 4.0, 8.0] {
            let rk = Quat::from_rotation_vector(&(rv * k));
            let cand = Pose::new(rk.rotate(&(pose.translation - c)) + c + t * k, rk.mul(&pose.rotation));
            let cc = correspond(source, &cand, target, trim);
            if cc.2 >= best_c.2 {
                break;
            }
            (best, best_c) = (cand, cc);
        }
        if best_c.2 >= err - 1e-12 {
            break;
        }
        pose = best;
        (src, dst, err) = best_c;
        history.push(err);
    }
    Ok(IcpResult { pose, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rotation_angle_between;
    use crate::shapes::{surface_cloud, VoxelShape};
    use std::collections::HashSet;

    #[test]
    fn cube_group_has_24_distinct_closed_elements() {
        let rots = cube_rotations();
        assert_eq!(rots.len(), 24);
        assert_eq!(rots[0], Quat::identity());
        let key = |q: &Quat| {
            let m = q.to_matrix();
            m.iter().map(|v| v.round() as i64).collect::<Vec<_>>()
        };
        let set: HashSet<Vec<i64>> = rots.iter().map(key).collect();
        assert_eq!(set.len(), 24);
        for a in &rots {
            for b in &rots {
                assert!(set.contains(&key(&a.mul(b))));
            }
        }
    }

    #[test]
    fn kabsch_recovers_transform() {
        let src = vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 2.0, 0.0), Vec3::new(0.0, 0.0, 3.0)];
        let t = Pose::new(Vec3::new(1.0, -2.0, 0.5), Quat::from_axis_angle(&Vec3::new(1.0, 1.0, 0.0), 0.9));
        let dst: Vec<Vec3> = src.iter().map(|p| t.transform_point(p)).collect();
        assert!(kabsch(&src, &dst).unwrap().distance(&t) < 1e-9);
        let line = vec![Vec3::zeros(), Vec3::x(), Vec3::x() * 2.0];
        assert!(matches!(kabsch(&line, &line), Err(Error::DegenerateCorrespondences)));
        assert!(kabsch(&src[..2], &dst[..2]).is_err());
    }

    fn cube_points() -> Vec<Vec3> {
        surface_cloud(&VoxelShape::full([6, 6, 6], 0.5), &Pose::identity()).unwrap().points
    }

    #[test]
    fn icp_zero_update_at_truth() {
        let src = cube_points();
        let init = Pose::from_translation(3.0, 1.0, 2.0);
        let tree = KdTree::build(&src.iter().map(|p| init.transform_point(p)).collect::<Vec<_>>());
        let r = icp(&src, &init, &tree, 20).unwrap();
        assert_eq!(r.pose, init);
        assert_eq!(r.final_error(), 0.0);
    }

    #[test]
    fn icp_recovers_transform_of_scattered_cloud() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let src: Vec<Vec3> =
            (0..300).map(|_| Vec3::new(rng.random::<f64>() * 4.0, rng.random::<f64>() * 2.0, rng.random::<f64>())).collect();
        let truth = Pose::new(Vec3::new(1.0, 0.0, 0.0), Quat::from_axis_angle(&Vec3::z(), 5f64.to_radians()));
        let tree = KdTree::build(&src.iter().map(|p| truth.transform_point(p)).collect::<Vec<_>>());
        let r = icp(&src, &Pose::identity(), &tree, 50).unwrap();
        assert!((r.pose.translation - truth.translation).norm() < 0.2, "{:?}", r.pose);
        assert!(rotation_angle_between(&r.pose.rotation, &truth.rotation) < 1f64.to_radians());
        for w in r.history.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }
}
