use crate::geometry::{Pose, Vec3};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Frame {
    #[default]
    World,
    Camera,
}

/// A set of 3D points in centimeters, tagged with the frame they live in.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub frame: Frame,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>, frame: Frame) -> Self {
        Self { points, frame }
    }

    pub fn world(points: Vec<Vec3>) -> Self {
        Self::new(points, Frame::World)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn transformed(&self, pose: &Pose) -> PointCloud {
        PointCloud { points: self.points.iter().map(|p| pose.transform_point(p)).collect(), frame: self.frame }
    }

    pub fn centroid(&self) -> Option<Vec3> {
        if self.points.is_empty() {
            return None;
        }
        Some(self.points.iter().fold(Vec3::zeros(), |acc, p| acc + p) / self.points.len() as f64)
    }

    pub fn subset(&self, idx: &[usize]) -> PointCloud {
        PointCloud { points: idx.iter().map(|&i| self.points[i]).collect(), frame: self.frame }
    }
}
