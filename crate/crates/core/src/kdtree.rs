//! Static 3D k-d tree for radius and nearest-neighbor queries.

use crate::geometry::Vec3;

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vec3>,
    /// Permutation of point indices; leaves own contiguous ranges.
    index: Vec<usize>,
    nodes: Vec<Node>,
}

impl KdTree {
    pub fn build(points: &[Vec3]) -> Self {
        let mut tree = KdTree { points: points.to_vec(), index: (0..points.len()).collect(), nodes: Vec::new() };
        if !points.is_empty() {
            tree.build_rec(0, points.len());
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    fn build_rec(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for &i in &self.index[start..end] {
            lo = lo.inf(&self.points[i]);
            hi = hi.sup(&self.points[i]);
        }
        let axis = (hi - lo).imax();
        if hi[axis] - lo[axis] <= 0.0 {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mid = (start + end) / 2;
        let pts = &self.points;
        self.index[start..end].select_nth_unstable_by(mid - start, |&a, &b| pts[a][axis].total_cmp(&pts[b][axis]));
        let value = self.points[self.index[mid]][axis];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build_rec(start, mid);
        let right = self.build_rec(mid, end);
        self.nodes[id] = Node::Split { axis, value, left, right };
        id
    }

    /// Calls `f` with the index of every point within distance `r` of `q`.
    pub fn for_each_within(&self, q: &Vec3, r: f64, mut f: impl FnMut(usize)) {
        if self.nodes.is_empty() {
            return;
        }
        let r2 = r * r;
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            match self.nodes[n] {
                Node::Leaf { start, end } => {
                    for &i in &self.index[start..end] {
                        if (self.points[i] - q).norm_squared() <= r2 {
                            f(i);
                        }
                    }
                }
                Node::Split { axis, value, left, right } => {
                    let d = q[axis] - value;
                    if d <= r {
                        stack.push(left);
                    }
                    if d >= -r {
                        stack.push(right);
                    }
                }
            }
        }
    }

    pub fn count_within(&self, q: &Vec3, r: f64) -> usize {
        let mut n = 0;
        self.for_each_within(q, r, |_| n += 1);
        n
    }

    /// Indices within `r`, ascending.
    pub fn within(&self, q: &Vec3, r: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_within(q, r, |i| out.push(i));
        out.sort_unstable();
        out
    }

    /// Index and squared distance of the nearest point. Ties go to the
    /// smaller index.
    pub fn nearest(&self, q: &Vec3) -> Option<(usize, f64)> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.nearest_rec(0, q, &mut best);
        Some(best)
    }

    fn nearest_rec(&self, n: usize, q: &Vec3, best: &mut (usize, f64)) {
        match self.nodes[n] {
            Node::Leaf { start, end } => {
                for &i in &self.index[start..end] {
                    let d2 = (self.points[i] - q).norm_squared();
                    if d2 < best.1 || (d2 == best.1 && i < best.0) {
                        *best = (i, d2);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let d = q[axis] - value;
                let (first, second) = if d <= 0.0 { (left, right) } else { (right, left) };
                self.nearest_rec(first, q, best);
                if d * d <= best.1 {
                    self.nearest_rec(second, q, best);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(n: usize, seed: u64) -> Vec<Vec3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| Vec3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-1.0..1.0))).collect()
    }

    #[test]
    fn radius_matches_brute_force() {
        let pts = random_points(2000, 1);
        let tree = KdTree::build(&pts);
        for q in random_points(200, 2) {
            for &r in &[0.1, 0.5, 2.0] {
                let brute: Vec<usize> = (0..pts.len()).filter(|&i| (pts[i] - q).norm() <= r).collect();
                assert_eq!(tree.within(&q, r), brute);
            }
        }
    }

    #[test]
    fn nearest_matches_brute_force() {
        let pts = random_points(1000, 3);
        let tree = KdTree::build(&pts);
        for q in random_points(300, 4) {
            let (i, d2) = tree.nearest(&q).unwrap();
            let best = pts.iter().map(|p| (p - q).norm_squared()).fold(f64::INFINITY, f64::min);
            assert_eq!(d2, best);
            assert_eq!((pts[i] - q).norm_squared(), best);
        }
    }

    #[test]
    fn duplicates_and_empty() {
        let pts = vec![Vec3::new(1.0, 1.0, 1.0); 50];
        let tree = KdTree::build(&pts);
        assert_eq!(tree.count_within(&Vec3::new(1.0, 1.0, 1.0), 0.0), 50);
        assert!(KdTree::build(&[]).nearest(&Vec3::zeros()).is_none());
    }
}
