use std::sync::OnceLock;

use nalgebra::Vector3;

use super::features::encode_features;
use super::fragments::{rasterize, FragmentBuffer};
use crate::featuremap::{FeatureMap, Mask, FEATURE_CHANNELS};
use crate::geometry::{Camera, RigidPose, TriangleMesh, EPSILON_VIS, EPSILON_Z};

/// Depth discontinuities larger than this fraction of the mesh diameter mark
/// occlusion boundaries when building the interior mask.
pub const OCCLUSION_BOUNDARY_DIAMETER_FRACTION: f64 = 0.05;

/// One posed observation of the object: color image, object mask, pose
/// annotation, and the lazily-encoded 17-channel feature map.
#[derive(Debug)]
pub struct SourceView {
    /// sRGB in [0,1], 3 channels.
    pub image: FeatureMap,
    pub mask: Mask,
    pub pose: RigidPose,
    features: OnceLock<FeatureMap>,
}

impl SourceView {
    pub fn new(image: FeatureMap, mask: Mask, pose: RigidPose) -> crate::Result<Self> {
        if image.channels != 3 {
            return Err(crate::Error::invalid("source image must have 3 channels"));
        }
        if image.height != mask.height || image.width != mask.width {
            return Err(crate::Error::invalid("source image and mask dimensions differ"));
        }
        Ok(SourceView { image, mask, pose, features: OnceLock::new() })
    }

    /// Encoded features, computed on first use. The face-angle channel is
    /// rendered at the view's annotated pose; the encoding is then frozen,
    /// so later pose refinement only changes where the map is sampled.
    pub fn features(&self, mesh: &TriangleMesh, camera: &Camera) -> &FeatureMap {
        self.features.get_or_init(|| encode_features(self, mesh, camera))
    }

    /// Copy of this view with a different pose annotation. The cached feature
    /// encoding is intentionally dropped.
    pub fn with_pose(&self, pose: RigidPose) -> SourceView {
        SourceView {
            image: self.image.clone(),
            mask: self.mask.clone(),
            pose,
            features: OnceLock::new(),
        }
    }
}

impl Clone for SourceView {
    fn clone(&self) -> Self {
        let features = OnceLock::new();
        if let Some(f) = self.features.get() {
            let _ = features.set(f.clone());
        }
        SourceView { image: self.image.clone(), mask: self.mask.clone(), pose: self.pose, features }
    }
}

/// A source view's features rendered at a target pose, with per-pixel
/// provenance (face index and fragment depth) for boundary detection.
#[derive(Debug, Clone)]
pub struct ProjectedMap {
    pub features: FeatureMap,
    pub source_index: usize,
    pub face: Vec<Option<u32>>,
    pub depth: Vec<f64>,
    /// Diameter of the rendered mesh, the scale for occlusion-jump detection.
    pub diameter: f64,
}

impl ProjectedMap {
    #[inline]
    pub fn is_valid(&self, p: usize) -> bool {
        self.features.valid[p]
    }

    pub fn valid_mask(&self) -> Mask {
        Mask {
            height: self.features.height,
            width: self.features.width,
            data: self.features.valid.clone(),
        }
    }

    /// Pixels safely inside the rendered surface: covered, all 8 neighbors
    /// covered, and no neighboring depth jump above
    /// [`OCCLUSION_BOUNDARY_DIAMETER_FRACTION`] of the mesh diameter (which
    /// would indicate a silhouette or self-occlusion boundary).
    pub fn interior_mask(&self) -> Mask {
        interior_mask(&self.face, &self.depth, self.features.height, self.features.width, self.diameter)
    }
}

pub fn interior_mask(
    face: &[Option<u32>],
    depth: &[f64],
    height: usize,
    width: usize,
    diameter: f64,
) -> Mask {
    let jump = OCCLUSION_BOUNDARY_DIAMETER_FRACTION * diameter;
    let mut mask = Mask::filled(height, width, false);
    for y in 1..height.saturating_sub(1) {
        for x in 1..width.saturating_sub(1) {
            let p = y * width + x;
            if face[p].is_none() {
                continue;
            }
            let mut interior = true;
            'nbrs: for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dy == 0 && dx == 0 {
                        continue;
                    }
                    let q = (y as i64 + dy) as usize * width + (x as i64 + dx) as usize;
                    if face[q].is_none() || (depth[q] - depth[p]).abs() > jump {
                        interior = false;
                        break 'nbrs;
                    }
                }
            }
            if interior {
                mask.data[p] = true;
            }
        }
    }
    mask
}

/// Bilinear sample of channel values at continuous image coordinates, with
/// texel centers at half-integer positions. Returns `None` when any of the
/// four taps falls outside the image.
#[inline]
pub fn bilinear_sample(map: &FeatureMap, u: f64, v: f64, out: &mut [f64]) -> bool {
    let fu = u - 0.5;
    let fv = v - 0.5;
    if !(fu >= 0.0 && fv >= 0.0) {
        return false;
    }
    let x0 = fu as usize;
    let y0 = fv as usize;
    if x0 + 1 >= map.width || y0 + 1 >= map.height {
        return false;
    }
    let tx = fu - x0 as f64;
    let ty = fv - y0 as f64;
    let c = map.channels;
    let i00 = (y0 * map.width + x0) * c;
    let i01 = i00 + c;
    let i10 = i00 + map.width * c;
    let i11 = i10 + c;
    let (w00, w01, w10, w11) =
        ((1.0 - tx) * (1.0 - ty), tx * (1.0 - ty), (1.0 - tx) * ty, tx * ty);
    for ch in 0..c {
        out[ch] = w00 * map.values[i00 + ch]
            + w01 * map.values[i01 + ch]
            + w10 * map.values[i10 + ch]
            + w11 * map.values[i11 + ch];
    }
    true
}

#[inline]
fn bilinear_taps_in_mask(mask: &Mask, u: f64, v: f64) -> bool {
    let fu = u - 0.5;
    let fv = v - 0.5;
    if !(fu >= 0.0 && fv >= 0.0) {
        return false;
    }
    let x0 = fu as usize;
    let y0 = fv as usize;
    if x0 + 1 >= mask.width || y0 + 1 >= mask.height {
        return false;
    }
    mask.get(y0, x0) && mask.get(y0, x0 + 1) && mask.get(y0 + 1, x0) && mask.get(y0 + 1, x0 + 1)
}

/// Renders `view`'s features at `target_pose`.
///
/// Every fragment of the mesh rasterized at the target pose is carried back
/// into the source camera; fragments whose source projection is outside the
/// image, outside the object mask, or occluded in the source view (tested
/// against a source-pose depth buffer with the visibility epsilon) become
/// invalid pixels.
pub fn project_view(
    view: &SourceView,
    mesh: &TriangleMesh,
    camera: &Camera,
    target_pose: &RigidPose,
) -> ProjectedMap {
    let fragments = rasterize(mesh, target_pose, camera);
    project_view_at(view, mesh, camera, &fragments, &view.pose, 0)
}

/// [`project_view`] against precomputed target fragments and an explicit
/// source pose (the refinement loop moves the pose while keeping the encoded
/// features frozen).
pub fn project_view_at(
    view: &SourceView,
    mesh: &TriangleMesh,
    camera: &Camera,
    fragments: &FragmentBuffer,
    source_pose: &RigidPose,
    source_index: usize,
) -> ProjectedMap {
    let features = view.features(mesh, camera);
    let (h, w) = (fragments.height, fragments.width);
    let mut out = FeatureMap::invalid(h, w, FEATURE_CHANNELS);
    let source_depth = rasterize(mesh, source_pose, camera);

    let mut sample = [0.0f64; FEATURE_CHANNELS];
    for p in 0..h * w {
        if fragments.face[p].is_none() {
            continue;
        }
        let point = fragments.object_point(mesh, p).expect("covered fragment");
        if let Some((u, v)) = source_uv(&point, source_pose, camera, &source_depth) {
            if bilinear_taps_in_mask(&view.mask, u, v)
                && bilinear_sample(features, u, v, &mut sample)
            {
                out.valid[p] = true;
                out.values[p * FEATURE_CHANNELS..(p + 1) * FEATURE_CHANNELS]
                    .copy_from_slice(&sample);
            }
        }
    }
    ProjectedMap {
        features: out,
        source_index,
        face: fragments.face.clone(),
        depth: fragments.depth.clone(),
        diameter: mesh.diameter,
    }
}

/// Projects an object-frame surface point into the source image, returning
/// its pixel coordinates unless it is behind the camera, out of frame, or
/// occluded by nearer geometry in the source depth buffer.
#[inline]
pub(crate) fn source_uv(
    point: &Vector3<f64>,
    source_pose: &RigidPose,
    camera: &Camera,
    source_depth: &FragmentBuffer,
) -> Option<(f64, f64)> {
    let q = source_pose.transform_point(point);
    if q.z <= EPSILON_Z {
        return None;
    }
    let (u, v) = camera.project_camera_point(&q);
    if !camera.contains(u, v) {
        return None;
    }
    let p = (v as usize) * source_depth.width + (u as usize);
    if source_depth.face[p].is_none() || q.z > source_depth.depth[p] + EPSILON_VIS {
        return None;
    }
    Some((u, v))
}
