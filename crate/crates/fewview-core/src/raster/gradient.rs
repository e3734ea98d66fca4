use nalgebra::Vector3;

use super::fragments::{rasterize, FragmentBuffer};
use super::project::{interior_mask, SourceView};
use crate::featuremap::{FeatureMap, Mask};
use crate::geometry::{
    rotation_derivatives, rotation_to_euler, Camera, PoseDelta, RigidPose, TriangleMesh, EPSILON_Z,
};

#[derive(Debug, Clone, Copy)]
pub struct GradientResult {
    pub delta: PoseDelta,
    /// Pixels that contributed to the gradient.
    pub pixels: usize,
    /// True when no valid interior pixel contributed.
    pub starved: bool,
}

/// Gradient of the projection error with respect to the six source-pose
/// parameters (translation, then fixed-axis XYZ Euler angles of the
/// rotation).
///
/// `residual` holds `dE/dP` per pixel-channel (for an L1 error this is
/// `sign(P − reference)` scaled by the normalization); its validity mask
/// selects the contributing pixels. The chain runs residual → bilinear
/// sampling derivative w.r.t. the source UV → pinhole Jacobian w.r.t. the
/// source-frame point → derivative w.r.t. the pose parameters. Pixels on
/// silhouette or occlusion boundaries of the target render are excluded.
/// Gradients flow only through where the feature map is sampled, never
/// through coverage changes.
pub fn pose_gradient(
    view: &SourceView,
    mesh: &TriangleMesh,
    camera: &Camera,
    target_pose: &RigidPose,
    residual: &FeatureMap,
) -> GradientResult {
    let fragments = rasterize(mesh, target_pose, camera);
    let interior =
        interior_mask(&fragments.face, &fragments.depth, fragments.height, fragments.width, mesh.diameter);
    pose_gradient_core(
        view.features(mesh, camera),
        &fragments,
        &interior,
        &view.pose,
        mesh,
        camera,
        residual,
    )
}

/// [`pose_gradient`] against precomputed target fragments and interior mask,
/// used by the refinement loop where those are constant across iterations.
pub(crate) fn pose_gradient_core(
    features: &FeatureMap,
    fragments: &FragmentBuffer,
    interior: &Mask,
    source_pose: &RigidPose,
    mesh: &TriangleMesh,
    camera: &Camera,
    residual: &FeatureMap,
) -> GradientResult {
    assert_eq!(residual.channels, features.channels);
    let (euler, _) = rotation_to_euler(&source_pose.rotation);
    let d_rot = rotation_derivatives(&euler);
    let rotation = source_pose.rotation;
    let translation = source_pose.translation;

    let mut grad = [0.0f64; 6];
    let mut pixels = 0usize;
    let c = features.channels;

    for p in 0..fragments.face.len() {
        if !residual.valid[p] || !interior.data[p] {
            continue;
        }
        let Some(point) = fragments.object_point(mesh, p) else { continue };
        let q = rotation * point + translation;
        if q.z <= EPSILON_Z {
            continue;
        }
        let (u, v) = camera.project_camera_point(&q);
        let Some((du, dv)) = sample_derivative(features, u, v, &residual.values[p * c..(p + 1) * c])
        else {
            continue;
        };
        pixels += 1;

        // Pinhole Jacobian rows at q.
        let inv_z = 1.0 / q.z;
        let ju = Vector3::new(camera.fx * inv_z, 0.0, -camera.fx * q.x * inv_z * inv_z);
        let jv = Vector3::new(0.0, camera.fy * inv_z, -camera.fy * q.y * inv_z * inv_z);

        // d(q)/d(translation_k) = e_k.
        for k in 0..3 {
            grad[k] += du * ju[k] + dv * jv[k];
        }
        // d(q)/d(euler_j) = dR_j * point.
        for (j, dr) in d_rot.iter().enumerate() {
            let dq: Vector3<f64> = dr * point;
            grad[3 + j] += du * ju.dot(&dq) + dv * jv.dot(&dq);
        }
    }

    GradientResult {
        delta: PoseDelta {
            d_translation: Vector3::new(grad[0], grad[1], grad[2]),
            d_euler: Vector3::new(grad[3], grad[4], grad[5]),
        },
        pixels,
        starved: pixels == 0,
    }
}

/// Residual-weighted derivative of the bilinear sample with respect to
/// (u, v): `(Σ_c r_c ∂P_c/∂u, Σ_c r_c ∂P_c/∂v)`.
#[inline]
fn sample_derivative(map: &FeatureMap, u: f64, v: f64, residual: &[f64]) -> Option<(f64, f64)> {
    let fu = u - 0.5;
    let fv = v - 0.5;
    if !(fu >= 0.0 && fv >= 0.0) {
        return None;
    }
    let x0 = fu as usize;
    let y0 = fv as usize;
    if x0 + 1 >= map.width || y0 + 1 >= map.height {
        return None;
    }
    let tx = fu - x0 as f64;
    let ty = fv - y0 as f64;
    let c = map.channels;
    let i00 = (y0 * map.width + x0) * c;
    let i01 = i00 + c;
    let i10 = i00 + map.width * c;
    let i11 = i10 + c;
    let mut du = 0.0;
    let mut dv = 0.0;
    for ch in 0..c {
        let r = residual[ch];
        if r == 0.0 {
            continue;
        }
        let (f00, f01, f10, f11) =
            (map.values[i00 + ch], map.values[i01 + ch], map.values[i10 + ch], map.values[i11 + ch]);
        du += r * ((1.0 - ty) * (f01 - f00) + ty * (f11 - f10));
        dv += r * ((1.0 - tx) * (f10 - f00) + tx * (f11 - f01));
    }
    Some((du, dv))
}
