//! Geometric substrate: triangle meshes, SE(3) poses, Euler conversions,
//! pinhole cameras, projection, visibility, and pose distances.
//!
//! All types are immutable values after construction and every operation is a
//! pure function, so everything here can be called concurrently.

mod camera;
mod mesh;
mod pose;
mod visibility;

pub use camera::{project, Camera, ProjectedPoint};
pub use mesh::TriangleMesh;
pub use pose::{
    euler_to_rotation, look_at_pose, perturb_pose, pose_distance, rotation_derivatives,
    rotation_to_euler, EulerAngles, PoseDelta, RigidPose,
};
pub use visibility::{
    face_view_angles, visible_vertices, visible_vertices_raycast_oracle, visible_vertices_with_eps,
};

/// Points closer to the image plane than this (meters) are behind the camera
/// for projection purposes.
pub const EPSILON_Z: f64 = 1e-6;

/// Default depth-buffer visibility tolerance (meters).
pub const EPSILON_VIS: f64 = 3e-3;
