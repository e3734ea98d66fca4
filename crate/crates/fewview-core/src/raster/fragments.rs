use nalgebra::Vector3;

use crate::geometry::{Camera, RigidPose, TriangleMesh, EPSILON_Z};

/// Per-pixel output of the rasterizer.
///
/// `bary` holds perspective-correct (surface-space) barycentric coordinates,
/// so attributes interpolate correctly at oblique angles; `depth` is the
/// camera-frame z of the surface point.
#[derive(Debug, Clone, PartialEq)]
pub struct FragmentBuffer {
    pub width: usize,
    pub height: usize,
    pub face: Vec<Option<u32>>,
    pub bary: Vec<[f64; 3]>,
    pub depth: Vec<f64>,
}

impl FragmentBuffer {
    pub fn empty(width: usize, height: usize) -> Self {
        FragmentBuffer {
            width,
            height,
            face: vec![None; width * height],
            bary: vec![[0.0; 3]; width * height],
            depth: vec![f64::INFINITY; width * height],
        }
    }

    #[inline]
    pub fn covered(&self, y: usize, x: usize) -> bool {
        self.face[y * self.width + x].is_some()
    }

    pub fn coverage_count(&self) -> usize {
        self.face.iter().filter(|f| f.is_some()).count()
    }

    /// Object-frame surface point of a covered pixel.
    pub fn object_point(&self, mesh: &TriangleMesh, p: usize) -> Option<Vector3<f64>> {
        let f = self.face[p]? as usize;
        let [a, b, c] = mesh.faces[f];
        let w = self.bary[p];
        Some(
            mesh.vertices[a as usize] * w[0]
                + mesh.vertices[b as usize] * w[1]
                + mesh.vertices[c as usize] * w[2],
        )
    }
}

/// Z-buffered scanline rasterization of `mesh` at `pose`, sampling at pixel
/// centers. Faces with any vertex behind the camera are culled whole, and a
/// strict depth test makes the lowest face index win ties, so the output is
/// deterministic for identical inputs.
pub fn rasterize(mesh: &TriangleMesh, pose: &RigidPose, camera: &Camera) -> FragmentBuffer {
    let mut buf = FragmentBuffer::empty(camera.width, camera.height);
    let cam_verts: Vec<Vector3<f64>> =
        mesh.vertices.iter().map(|v| pose.transform_point(v)).collect();
    let screen: Vec<(f64, f64)> = cam_verts
        .iter()
        .map(|q| if q.z > EPSILON_Z { camera.project_camera_point(q) } else { (0.0, 0.0) })
        .collect();

    for (fi, face) in mesh.faces.iter().enumerate() {
        let (ia, ib, ic) = (face[0] as usize, face[1] as usize, face[2] as usize);
        if cam_verts[ia].z <= EPSILON_Z || cam_verts[ib].z <= EPSILON_Z || cam_verts[ic].z <= EPSILON_Z
        {
            continue;
        }
        let (ax, ay) = screen[ia];
        let (bx, by) = screen[ib];
        let (cx, cy) = screen[ic];

        // Signed twice-area of the screen triangle; near-zero means the face
        // is edge-on or degenerate in screen space.
        let area = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax);
        if area.abs() < 1e-12 {
            continue;
        }

        let min_x = ax.min(bx).min(cx).floor().max(0.0) as usize;
        let max_x = (ax.max(bx).max(cx).ceil() as isize).min(camera.width as isize - 1);
        let min_y = ay.min(by).min(cy).floor().max(0.0) as usize;
        let max_y = (ay.max(by).max(cy).ceil() as isize).min(camera.height as isize - 1);
        if max_x < min_x as isize || max_y < min_y as isize {
            continue;
        }
        let (max_x, max_y) = (max_x as usize, max_y as usize);

        let inv_area = 1.0 / area;
        let inv_z = [1.0 / cam_verts[ia].z, 1.0 / cam_verts[ib].z, 1.0 / cam_verts[ic].z];

        for y in min_y..=max_y {
            let py = y as f64 + 0.5;
            for x in min_x..=max_x {
                let px = x as f64 + 0.5;
                // Screen-space barycentrics via edge functions, normalized by
                // the signed area so both windings are accepted.
                let w0 = ((bx - px) * (cy - py) - (by - py) * (cx - px)) * inv_area;
                let w1 = ((cx - px) * (ay - py) - (cy - py) * (ax - px)) * inv_area;
                let w2 = 1.0 - w0 - w1;
                if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                    continue;
                }
                // Perspective-correct interpolation: 1/z is linear in screen
                // space.
                let zi = w0 * inv_z[0] + w1 * inv_z[1] + w2 * inv_z[2];
                let depth = 1.0 / zi;
                let p = y * camera.width + x;
                if depth < buf.depth[p] {
                    buf.depth[p] = depth;
                    buf.face[p] = Some(fi as u32);
                    buf.bary[p] = [w0 * inv_z[0] * depth, w1 * inv_z[1] * depth, w2 * inv_z[2] * depth];
                }
            }
        }
    }
    buf
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::TriangleMesh;

    fn camera() -> Camera {
        Camera::new(100.0, 100.0, 32.0, 32.0, 64, 64).unwrap()
    }

    fn single_triangle() -> TriangleMesh {
        // Off-grid vertices keep every pixel center clear of the edges.
        TriangleMesh::new(
            vec![
                Vector3::new(-0.10337, -0.09713, 1.0),
                Vector3::new(0.15211, -0.05477, 1.0),
                Vector3::new(0.00341, 0.18129, 1.0),
            ],
            vec![[0, 1, 2]],
            None,
        )
        .unwrap()
    }

    /// Inclusive half-plane point-in-triangle test, the independent oracle
    /// for coverage. Returns `None` for points within `eps` of an edge line,
    /// where coverage is a floating-point coin toss either way.
    fn half_plane_inside(px: f64, py: f64, v: &[(f64, f64); 3]) -> Option<bool> {
        let e = |a: (f64, f64), b: (f64, f64)| {
            let d = (b.0 - a.0) * (py - a.1) - (b.1 - a.1) * (px - a.0);
            let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
            d / len
        };
        let d0 = e(v[0], v[1]);
        let d1 = e(v[1], v[2]);
        let d2 = e(v[2], v[0]);
        if d0.abs() < 1e-9 || d1.abs() < 1e-9 || d2.abs() < 1e-9 {
            return None;
        }
        Some(
            (d0 > 0.0 && d1 > 0.0 && d2 > 0.0) || (d0 < 0.0 && d1 < 0.0 && d2 < 0.0),
        )
    }

    #[test]
    fn coverage_matches_half_plane_oracle() {
        let mesh = single_triangle();
        let cam = camera();
        let buf = rasterize(&mesh, &RigidPose::identity(), &cam);
        let verts: Vec<(f64, f64)> = mesh
            .vertices
            .iter()
            .map(|v| cam.project_camera_point(v))
            .collect();
        let v = [verts[0], verts[1], verts[2]];
        assert!(buf.coverage_count() > 50);
        for y in 0..cam.height {
            for x in 0..cam.width {
                if let Some(inside) = half_plane_inside(x as f64 + 0.5, y as f64 + 0.5, &v) {
                    assert_eq!(buf.covered(y, x), inside, "pixel ({x},{y})");
                }
            }
        }
    }

    #[test]
    fn barycentrics_are_normalized_on_coverage() {
        let mesh = single_triangle();
        let buf = rasterize(&mesh, &RigidPose::identity(), &camera());
        for p in 0..buf.face.len() {
            if buf.face[p].is_some() {
                let w = buf.bary[p];
                assert!(w.iter().all(|x| *x >= -1e-12));
                assert!((w[0] + w[1] + w[2] - 1.0).abs() < 1e-6);
                assert!(buf.depth[p] > 0.0);
            }
        }
    }

    #[test]
    fn nearer_of_two_stacked_triangles_wins() {
        let mesh = TriangleMesh::new(
            vec![
                // Same screen footprint, one 0.2 m nearer.
                Vector3::new(-0.1, -0.1, 1.0),
                Vector3::new(0.1, -0.1, 1.0),
                Vector3::new(0.0, 0.1, 1.0),
                Vector3::new(-0.08, -0.08, 0.8),
                Vector3::new(0.08, -0.08, 0.8),
                Vector3::new(0.0, 0.08, 0.8),
            ],
            vec![[0, 1, 2], [3, 4, 5]],
            None,
        )
        .unwrap();
        let buf = rasterize(&mesh, &RigidPose::identity(), &camera());
        let far_only = rasterize(
            &TriangleMesh::new(mesh.vertices.clone(), vec![[3, 4, 5]], None).unwrap(),
            &RigidPose::identity(),
            &camera(),
        );
        let mut overlap = 0;
        for p in 0..buf.face.len() {
            if far_only.face[p].is_some() {
                assert_eq!(buf.face[p], Some(1), "near face must win where both cover");
                overlap += 1;
            }
        }
        assert!(overlap > 20);
    }

    #[test]
    fn mesh_behind_camera_has_zero_coverage() {
        let mut mesh = single_triangle();
        for v in &mut mesh.vertices {
            v.z = -1.0;
        }
        let buf = rasterize(&mesh, &RigidPose::identity(), &camera());
        assert_eq!(buf.coverage_count(), 0);
    }

    #[test]
    fn perspective_correct_interpolation_on_slanted_face() {
        // A slanted quadrilateral face: interpolating the object-space point
        // through the barycentrics must agree with exact ray/plane
        // intersection at every covered pixel.
        let mesh = TriangleMesh::new(
            vec![
                Vector3::new(-0.2, -0.2, 0.8),
                Vector3::new(0.2, -0.2, 1.4),
                Vector3::new(0.2, 0.2, 1.4),
                Vector3::new(-0.2, 0.2, 0.8),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
            None,
        )
        .unwrap();
        let cam = camera();
        let buf = rasterize(&mesh, &RigidPose::identity(), &cam);
        assert!(buf.coverage_count() > 100);
        // Plane through the three vertices of face 0.
        let n = mesh.face_normal(0);
        let d = n.dot(&mesh.vertices[0]);
        for y in 0..cam.height {
            for x in 0..cam.width {
                let p = y * cam.width + x;
                if buf.face[p].is_none() {
                    continue;
                }
                let pt = buf.object_point(&mesh, p).unwrap();
                // Ray through the pixel center.
                let dir = Vector3::new(
                    (x as f64 + 0.5 - cam.cx) / cam.fx,
                    (y as f64 + 0.5 - cam.cy) / cam.fy,
                    1.0,
                );
                let t = d / n.dot(&dir);
                let exact = dir * t;
                assert!((pt - exact).norm() < 1e-9, "pixel ({x},{y})");
                assert!((buf.depth[p] - exact.z).abs() < 1e-9);
            }
        }
    }
}
