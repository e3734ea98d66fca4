use nalgebra::Vector3;

use crate::error::{Error, Result};

/// Indexed triangle mesh with per-vertex normals, in meters.
#[derive(Debug, Clone)]
pub struct TriangleMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub faces: Vec<[u32; 3]>,
    pub vertex_normals: Vec<Vector3<f64>>,
    /// Max pairwise vertex distance.
    pub diameter: f64,
}

impl TriangleMesh {
    /// Builds a mesh, recomputing vertex normals when `normals` is `None`.
    ///
    /// Rejects out-of-range or degenerate face indices and non-unit normals;
    /// the diameter is always recomputed by brute force.
    pub fn new(
        vertices: Vec<Vector3<f64>>,
        faces: Vec<[u32; 3]>,
        normals: Option<Vec<Vector3<f64>>>,
    ) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::invalid("mesh has no vertices"));
        }
        let n = vertices.len() as u32;
        for (i, f) in faces.iter().enumerate() {
            if f[0] >= n || f[1] >= n || f[2] >= n {
                return Err(Error::invalid(format!("face {i} references vertex >= {n}")));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::invalid(format!("face {i} is degenerate: {f:?}")));
            }
        }
        let vertex_normals = match normals {
            Some(ns) => {
                if ns.len() != vertices.len() {
                    return Err(Error::invalid("normal count != vertex count"));
                }
                for (i, nv) in ns.iter().enumerate() {
                    if (nv.norm() - 1.0).abs() > 1e-6 {
                        return Err(Error::invalid(format!("normal {i} is not unit length")));
                    }
                }
                ns
            }
            None => compute_vertex_normals(&vertices, &faces),
        };
        let diameter = max_pairwise_distance(&vertices);
        if diameter <= 0.0 {
            return Err(Error::invalid("mesh diameter must be positive"));
        }
        Ok(TriangleMesh { vertices, faces, vertex_normals, diameter })
    }

    /// Outward unit normal of a face from its winding (CCW seen from outside).
    pub fn face_normal(&self, face: usize) -> Vector3<f64> {
        let [a, b, c] = self.faces[face];
        let (a, b, c) =
            (self.vertices[a as usize], self.vertices[b as usize], self.vertices[c as usize]);
        let n = (b - a).cross(&(c - a));
        let len = n.norm();
        if len > 0.0 {
            n / len
        } else {
            Vector3::zeros()
        }
    }

    pub fn face_centroid(&self, face: usize) -> Vector3<f64> {
        let [a, b, c] = self.faces[face];
        (self.vertices[a as usize] + self.vertices[b as usize] + self.vertices[c as usize]) / 3.0
    }

    pub fn centroid(&self) -> Vector3<f64> {
        self.vertices.iter().sum::<Vector3<f64>>() / self.vertices.len() as f64
    }
}

/// Area-weighted average of adjacent face normals, normalized.
pub(crate) fn compute_vertex_normals(
    vertices: &[Vector3<f64>],
    faces: &[[u32; 3]],
) -> Vec<Vector3<f64>> {
    let mut acc = vec![Vector3::zeros(); vertices.len()];
    for f in faces {
        let (a, b, c) =
            (vertices[f[0] as usize], vertices[f[1] as usize], vertices[f[2] as usize]);
        // Cross product length is twice the face area, so this is area-weighted.
        let n = (b - a).cross(&(c - a));
        for idx in f {
            acc[*idx as usize] += n;
        }
    }
    acc.into_iter()
        .map(|v| {
            let len = v.norm();
            if len > 1e-12 {
                v / len
            } else {
                Vector3::new(0.0, 0.0, 1.0)
            }
        })
        .collect()
}

fn max_pairwise_distance(vertices: &[Vector3<f64>]) -> f64 {
    let mut best: f64 = 0.0;
    for i in 0..vertices.len() {
        for j in (i + 1)..vertices.len() {
            best = best.max((vertices[i] - vertices[j]).norm());
        }
    }
    best
}
