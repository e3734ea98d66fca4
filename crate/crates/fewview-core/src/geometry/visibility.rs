use nalgebra::Vector3;

use super::{Camera, RigidPose, TriangleMesh, EPSILON_VIS, EPSILON_Z};
use crate::raster::rasterize;

/// Cosine of the angle between the inward viewing ray (the optical axis) and
/// each outward face normal, in `[-1, 1]`. Faces turned toward the camera are
/// positive, edge-on faces are 0, back faces are negative.
pub fn face_view_angles(mesh: &TriangleMesh, pose: &RigidPose) -> Vec<f64> {
    (0..mesh.faces.len())
        .map(|f| {
            let n_cam = pose.rotation * mesh.face_normal(f);
            -n_cam.z
        })
        .collect()
}

/// Vertex indices whose projection lands inside the image and whose depth is
/// within `epsilon_vis` of the z-buffer at that pixel. Returns a sorted list.
pub fn visible_vertices(mesh: &TriangleMesh, pose: &RigidPose, camera: &Camera) -> Vec<u32> {
    visible_vertices_with_eps(mesh, pose, camera, EPSILON_VIS)
}

pub fn visible_vertices_with_eps(
    mesh: &TriangleMesh,
    pose: &RigidPose,
    camera: &Camera,
    epsilon_vis: f64,
) -> Vec<u32> {
    let frags = rasterize(mesh, pose, camera);
    let mut out = Vec::new();
    for (i, v) in mesh.vertices.iter().enumerate() {
        let q = pose.transform_point(v);
        if q.z <= EPSILON_Z {
            continue;
        }
        let (u, vpx) = camera.project_camera_point(&q);
        if !camera.contains(u, vpx) {
            continue;
        }
        let (x, y) = (u as usize, vpx as usize);
        let p = y * frags.width + x;
        if frags.face[p].is_some() && q.z <= frags.depth[p] + epsilon_vis {
            out.push(i as u32);
        }
    }
    out
}

/// Test oracle: visibility by exact ray casting against every face.
/// A vertex is visible when no face intersects the camera ray strictly in
/// front of it (beyond `epsilon_vis`). Quadratic; meant for small meshes.
pub fn visible_vertices_raycast_oracle(
    mesh: &TriangleMesh,
    pose: &RigidPose,
    camera: &Camera,
    epsilon_vis: f64,
) -> Vec<u32> {
    let cam_verts: Vec<Vector3<f64>> =
        mesh.vertices.iter().map(|v| pose.transform_point(v)).collect();
    let mut out = Vec::new();
    for (i, q) in cam_verts.iter().enumerate() {
        if q.z <= EPSILON_Z {
            continue;
        }
        let (u, v) = camera.project_camera_point(q);
        if !camera.contains(u, v) {
            continue;
        }
        let dir = q / q.norm();
        let t_vertex = q.norm();
        let mut occluded = false;
        for f in &mesh.faces {
            if let Some(t) = ray_triangle(
                &Vector3::zeros(),
                &dir,
                &cam_verts[f[0] as usize],
                &cam_verts[f[1] as usize],
                &cam_verts[f[2] as usize],
            ) {
                if t < t_vertex - epsilon_vis {
                    occluded = true;
                    break;
                }
            }
        }
        if !occluded {
            out.push(i as u32);
        }
    }
    out
}

/// Möller–Trumbore ray/triangle intersection; returns the ray parameter.
fn ray_triangle(
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    c: &Vector3<f64>,
) -> Option<f64> {
    let e1 = b - a;
    let e2 = c - a;
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - a;
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t > 0.0).then_some(t)
}
