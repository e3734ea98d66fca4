use serde::{Deserialize, Serialize};

use super::{RigidPose, EPSILON_Z};
use crate::error::{Error, Result};
use nalgebra::Vector3;

/// Pinhole camera intrinsics, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        if fx <= 0.0 || fy <= 0.0 {
            return Err(Error::invalid("camera focal lengths must be positive"));
        }
        if !(0.0..width as f64).contains(&cx) || !(0.0..height as f64).contains(&cy) {
            return Err(Error::invalid("principal point outside image"));
        }
        Ok(Camera { fx, fy, cx, cy, width, height })
    }

    /// Centered camera with focal length `1.2 * width`, a comfortable field
    /// of view for desk-scale objects.
    pub fn default_for_resolution(width: usize, height: usize) -> Self {
        let f = 1.2 * width as f64;
        Camera { fx: f, fy: f, cx: width as f64 / 2.0, cy: height as f64 / 2.0, width, height }
    }

    #[inline]
    pub fn project_camera_point(&self, p: &Vector3<f64>) -> (f64, f64) {
        (self.fx * (p.x / p.z) + self.cx, self.fy * (p.y / p.z) + self.cy)
    }

    #[inline]
    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && u < self.width as f64 && v >= 0.0 && v < self.height as f64
    }
}

/// Pinhole projection of one point. `valid` is false behind the camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedPoint {
    pub u: f64,
    pub v: f64,
    /// Depth in the camera frame (meters).
    pub depth: f64,
    pub valid: bool,
}

/// Projects `points` (object frame) through `pose` into image coordinates.
/// Points with camera-frame depth ≤ [`EPSILON_Z`] are flagged invalid rather
/// than silently projected.
pub fn project(camera: &Camera, pose: &RigidPose, points: &[Vector3<f64>]) -> Vec<ProjectedPoint> {
    points
        .iter()
        .map(|p| {
            let q = pose.transform_point(p);
            if q.z <= EPSILON_Z {
                ProjectedPoint { u: 0.0, v: 0.0, depth: q.z, valid: false }
            } else {
                let (u, v) = camera.project_camera_point(&q);
                ProjectedPoint { u, v, depth: q.z, valid: true }
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam() -> Camera {
        Camera::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap()
    }

    #[test]
    fn optical_axis_point_projects_to_principal_point() {
        let p = project(&cam(), &RigidPose::identity(), &[Vector3::new(0.0, 0.0, 1.0)]);
        assert!(p[0].valid);
        assert_eq!((p[0].u, p[0].v, p[0].depth), (320.0, 240.0, 1.0));
    }

    #[test]
    fn direct_formula() {
        let p = project(&cam(), &RigidPose::identity(), &[Vector3::new(0.1, 0.0, 1.0)]);
        assert_eq!(p[0].u, 370.0);
    }

    #[test]
    fn behind_camera_is_flagged() {
        let p = project(&cam(), &RigidPose::identity(), &[Vector3::new(0.0, 0.0, -0.5)]);
        assert!(!p[0].valid);
    }

    #[test]
    fn doubling_fx_doubles_offset_exactly() {
        // cx = 0 keeps u − cx free of offset-rounding, so doubling fx must
        // double it bitwise for arbitrary points.
        let c1 = Camera::new(500.0, 500.0, 0.0, 0.0, 640, 480).unwrap();
        let c2 = Camera::new(1000.0, 500.0, 0.0, 0.0, 640, 480).unwrap();
        let pts = [
            Vector3::new(0.037, -0.011, 0.83),
            Vector3::new(-0.2, 0.05, 1.7),
            Vector3::new(0.123456, 0.654321, 0.777),
        ];
        let a = project(&c1, &RigidPose::identity(), &pts);
        let b = project(&c2, &RigidPose::identity(), &pts);
        for (p1, p2) in a.iter().zip(&b) {
            assert_eq!(2.0 * (p1.u - c1.cx), p2.u - c2.cx);
        }
    }

    #[test]
    fn rejects_bad_intrinsics() {
        assert!(Camera::new(0.0, 1.0, 0.0, 0.0, 10, 10).is_err());
        assert!(Camera::new(1.0, 1.0, 10.0, 0.0, 10, 10).is_err());
    }
}
