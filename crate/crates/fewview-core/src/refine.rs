//! Gradient-based source-pose refinement and the end-to-end render pipeline.
//!
//! Each source view's pose annotation is corrected by descending the masked
//! L1 distance between its projection at the target pose and the frozen
//! first-pass fusion result. Translation parameters are updated directly;
//! the rotation is stepped in Euler space and converted back to a rotation
//! matrix, so every intermediate pose stays in SO(3).

use nalgebra::Vector3;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::featuremap::{FeatureMap, Mask};
use crate::fusion::{fuse, FusionResult, DEFAULT_TEMPERATURE};
use crate::geometry::{
    euler_to_rotation, rotation_to_euler, Camera, PoseDelta, RigidPose, TriangleMesh,
};
use crate::par::par_map_indices;
use crate::raster::{
    interior_mask, project_view_at, rasterize, FragmentBuffer, ProjectedMap, SourceView,
};

/// Error regions with fewer pixels than this are starved: too small to trust
/// a gradient.
pub const MIN_ERROR_PIXELS: usize = 32;

/// Index of the face-angle channel inside an encoded feature map.
const FACE_ANGLE_CHANNEL: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineConfig {
    /// Global step multiplier δ on top of the per-parameter scales.
    pub step_delta: f64,
    /// Hard iteration cap.
    pub max_iters: usize,
    /// Consecutive non-improving steps tolerated before stopping.
    pub patience: usize,
    /// Translation step per iteration (meters); the translation gradient is
    /// normalized and scaled by this.
    pub trans_step_m: f64,
    /// Rotation step per iteration (radians), applied the same way in Euler
    /// space.
    pub rot_step_rad: f64,
    /// Minimum relative error decrease for the refined pose to replace the
    /// input pose. Sub-threshold gains are resampling-noise scale (the error
    /// landscape's optimum sits a sub-pixel offset away from the true pose
    /// even for exact annotations), so accepting them would only inject
    /// jitter; the gate makes refinement an exact no-op there.
    pub min_improvement: f64,
    /// Pixels enter the error region only when their initial source
    /// projection sits at least this many pixels inside the object mask.
    /// Border pixels would sample background as soon as the pose moves,
    /// biasing the optimum away from the true pose.
    pub mask_margin_px: usize,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            step_delta: 1.0,
            max_iters: 50,
            patience: 1,
            trans_step_m: 1e-3,
            rot_step_rad: 0.2f64.to_radians(),
            min_improvement: 0.06,
            mask_margin_px: 3,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.step_delta <= 0.0 {
            return Err(Error::invalid("step_delta must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// A step failed to decrease the error (beyond patience) or the gradient
    /// vanished.
    Converged,
    MaxIters,
    /// Too few valid interior pixels to evaluate the error.
    Starved,
}

/// Per-view record of one refinement run.
#[derive(Debug, Clone)]
pub struct RefineTrace {
    /// Error at the initial pose followed by the error after each iteration;
    /// length is `iterations_run + 1`.
    pub errors: Vec<f64>,
    /// Pose visited at each entry of `errors`.
    pub poses: Vec<RigidPose>,
    pub iterations_run: usize,
    pub stop_reason: StopReason,
    /// Best error seen; the returned pose attains it.
    pub final_error: f64,
}

impl RefineTrace {
    /// Error curve and stop reason as JSON; per-iteration poses included on
    /// request.
    pub fn to_json(&self, include_poses: bool) -> serde_json::Value {
        let mut obj = serde_json::json!({
            "errors": self.errors,
            "iterations_run": self.iterations_run,
            "stop_reason": self.stop_reason,
            "final_error": self.final_error,
        });
        if include_poses {
            obj["poses"] = serde_json::Value::Array(
                self.poses.iter().map(crate::io::pose_to_json).collect(),
            );
        }
        obj
    }
}

/// Masked mean per-channel L1 distance between a projected map and the
/// reference, over valid ∩ mask ∩ interior pixels. The starved flag is set
/// below [`MIN_ERROR_PIXELS`]; an empty region yields infinite error.
pub fn projection_error(
    projected: &ProjectedMap,
    reference: &FeatureMap,
    mask: &Mask,
) -> (f64, bool) {
    let interior = projected.interior_mask();
    projection_error_with_interior(projected, reference, mask, &interior)
}

fn projection_error_with_interior(
    projected: &ProjectedMap,
    reference: &FeatureMap,
    mask: &Mask,
    interior: &Mask,
) -> (f64, bool) {
    let c = projected.features.channels;
    let mut total = 0.0;
    let mut n = 0usize;
    for p in 0..projected.features.valid.len() {
        if !(projected.features.valid[p] && mask.data[p] && interior.data[p]) {
            continue;
        }
        n += 1;
        let pv = &projected.features.values[p * c..(p + 1) * c];
        let rv = &reference.values[p * c..(p + 1) * c];
        for ch in 0..c {
            total += (pv[ch] - rv[ch]).abs();
        }
    }
    if n == 0 {
        return (f64::INFINITY, true);
    }
    (total / (n * c) as f64, n < MIN_ERROR_PIXELS)
}

/// Builds the `dE/dP` residual map for [`crate::raster::pose_gradient`]:
/// `sign(P − reference) / (N·C)` on valid ∩ mask ∩ interior pixels, with `N`
/// the size of that set.
pub fn residual_map(
    projected: &ProjectedMap,
    reference: &FeatureMap,
    mask: &Mask,
) -> (FeatureMap, usize) {
    let interior = projected.interior_mask();
    residual_map_with_interior(projected, reference, mask, &interior)
}

fn residual_map_with_interior(
    projected: &ProjectedMap,
    reference: &FeatureMap,
    mask: &Mask,
    interior: &Mask,
) -> (FeatureMap, usize) {
    let c = projected.features.channels;
    let (h, w) = (projected.features.height, projected.features.width);
    let mut out = FeatureMap::invalid(h, w, c);
    let mut n = 0usize;
    for p in 0..h * w {
        if projected.features.valid[p] && mask.data[p] && interior.data[p] {
            out.valid[p] = true;
            n += 1;
        }
    }
    if n == 0 {
        return (out, 0);
    }
    let scale = 1.0 / (n * c) as f64;
    for p in 0..h * w {
        if !out.valid[p] {
            continue;
        }
        for ch in 0..c {
            let d = projected.features.values[p * c + ch] - reference.values[p * c + ch];
            out.values[p * c + ch] = if d > 0.0 {
                scale
            } else if d < 0.0 {
                -scale
            } else {
                0.0
            };
        }
    }
    (out, n)
}

/// The refinement loop's objective: the projection error over the pixel set
/// pinned at the initial pose.
///
/// The analytic gradient differentiates only the texture-sampling path, never
/// coverage changes, so the loop minimizes exactly that functional: the
/// contributing pixels (valid ∩ reference mask ∩ interior at the initial
/// pose) and the normalization stay fixed for the whole run, and samples that
/// drift past the image border clamp. Re-deriving validity every iteration
/// would let the optimizer "improve" the error by pushing high-residual
/// pixels out of the valid set instead of aligning the pose.
struct PinnedRegion {
    /// Object-frame surface point and pixel index of each pinned pixel.
    points: Vec<(Vector3<f64>, usize)>,
}

impl PinnedRegion {
    fn build(
        fragments: &FragmentBuffer,
        mesh: &TriangleMesh,
        view: &SourceView,
        camera: &Camera,
        initial: &ProjectedMap,
        reference: &FeatureMap,
        interior: &Mask,
        mask_margin_px: usize,
    ) -> Self {
        let eroded = view.mask.eroded(mask_margin_px);
        let mut points = Vec::new();
        for p in 0..fragments.face.len() {
            if !(initial.features.valid[p] && reference.valid[p] && interior.data[p]) {
                continue;
            }
            let point = fragments.object_point(mesh, p).expect("valid fragment");
            let q = view.pose.transform_point(&point);
            if q.z <= crate::geometry::EPSILON_Z {
                continue;
            }
            let (u, v) = camera.project_camera_point(&q);
            let (x, y) = ((u - 0.5) as usize, (v - 0.5) as usize);
            if x + 1 >= eroded.width || y + 1 >= eroded.height {
                continue;
            }
            if eroded.get(y, x)
                && eroded.get(y, x + 1)
                && eroded.get(y + 1, x)
                && eroded.get(y + 1, x + 1)
            {
                points.push((point, p));
            }
        }
        PinnedRegion { points }
    }

    /// One pass: pinned error at `pose` and its gradient over the six pose
    /// parameters.
    ///
    /// The face-angle channel is skipped: it is view-dependent by
    /// construction, so even at exact poses it disagrees across views by an
    /// order of magnitude more than the appearance channels, and its
    /// "alignment" optimum sits millimeters away from the true pose. Color
    /// and pyramid channels carry the actual alignment signal.
    fn error_and_gradient(
        &self,
        features: &FeatureMap,
        reference: &FeatureMap,
        camera: &Camera,
        pose: &RigidPose,
    ) -> (f64, PoseDelta) {
        let c = features.channels;
        let skip = if c == crate::featuremap::FEATURE_CHANNELS { FACE_ANGLE_CHANNEL } else { c };
        let used = if skip < c { c - 1 } else { c };
        let norm = 1.0 / (self.points.len() * used) as f64;
        let (euler, _) = rotation_to_euler(&pose.rotation);
        let d_rot = crate::geometry::rotation_derivatives(&euler);
        let mut total = 0.0;
        let mut grad = [0.0f64; 6];

        let u_max = camera.width as f64 - 0.5 - 1e-9;
        let v_max = camera.height as f64 - 0.5 - 1e-9;
        for (point, p) in &self.points {
            let q = pose.transform_point(point);
            if q.z <= crate::geometry::EPSILON_Z {
                // Behind the camera: worst-case residual, no gradient signal.
                total += used as f64;
                continue;
            }
            let (u, v) = camera.project_camera_point(&q);
            let (u, clamped_u) = clamp_flag(u, 0.5, u_max);
            let (v, clamped_v) = clamp_flag(v, 0.5, v_max);

            let fu = u - 0.5;
            let fv = v - 0.5;
            let x0 = fu as usize;
            let y0 = fv as usize;
            let tx = fu - x0 as f64;
            let ty = fv - y0 as f64;
            let i00 = (y0 * features.width + x0) * c;
            let i01 = i00 + c;
            let i10 = i00 + features.width * c;
            let i11 = i10 + c;
            let (w00, w01, w10, w11) =
                ((1.0 - tx) * (1.0 - ty), tx * (1.0 - ty), (1.0 - tx) * ty, tx * ty);

            let rv = &reference.values[p * c..(p + 1) * c];
            let mut du_acc = 0.0;
            let mut dv_acc = 0.0;
            for ch in 0..c {
                if ch == skip {
                    continue;
                }
                let (f00, f01, f10, f11) = (
                    features.values[i00 + ch],
                    features.values[i01 + ch],
                    features.values[i10 + ch],
                    features.values[i11 + ch],
                );
                let sample = w00 * f00 + w01 * f01 + w10 * f10 + w11 * f11;
                let d = sample - rv[ch];
                total += d.abs();
                let sign = if d > 0.0 {
                    1.0
                } else if d < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                if !clamped_u {
                    du_acc += sign * ((1.0 - ty) * (f01 - f00) + ty * (f11 - f10));
                }
                if !clamped_v {
                    dv_acc += sign * ((1.0 - tx) * (f10 - f00) + tx * (f11 - f01));
                }
            }

            let inv_z = 1.0 / q.z;
            let ju = Vector3::new(camera.fx * inv_z, 0.0, -camera.fx * q.x * inv_z * inv_z);
            let jv = Vector3::new(0.0, camera.fy * inv_z, -camera.fy * q.y * inv_z * inv_z);
            for k in 0..3 {
                grad[k] += du_acc * ju[k] + dv_acc * jv[k];
            }
            for (j, dr) in d_rot.iter().enumerate() {
                let dq: Vector3<f64> = dr * point;
                grad[3 + j] += du_acc * ju.dot(&dq) + dv_acc * jv.dot(&dq);
            }
        }
        let delta = PoseDelta {
            d_translation: Vector3::new(grad[0], grad[1], grad[2]) * norm,
            d_euler: Vector3::new(grad[3], grad[4], grad[5]) * norm,
        };
        (total * norm, delta)
    }
}

#[inline]
fn clamp_flag(v: f64, lo: f64, hi: f64) -> (f64, bool) {
    if v < lo {
        (lo, true)
    } else if v > hi {
        (hi, true)
    } else {
        (v, false)
    }
}

/// Refines one view's pose against the frozen reference by normalized
/// gradient steps, stopping when the error stops decreasing (beyond
/// `patience`), the region starves, or `max_iters` is reached.
///
/// The best pose seen is returned, and only when it improves on the initial
/// error by at least `cfg.min_improvement` (relative); otherwise the input
/// pose comes back unchanged. The returned error never exceeds the initial
/// error.
pub fn refine_pose(
    view: &SourceView,
    mesh: &TriangleMesh,
    camera: &Camera,
    target_pose: &RigidPose,
    reference: &FeatureMap,
    cfg: &RefineConfig,
) -> Result<(RigidPose, RefineTrace)> {
    cfg.validate()?;
    let fragments = rasterize(mesh, target_pose, camera);
    refine_pose_with_fragments(view, mesh, camera, &fragments, reference, cfg)
}

pub(crate) fn refine_pose_with_fragments(
    view: &SourceView,
    mesh: &TriangleMesh,
    camera: &Camera,
    fragments: &FragmentBuffer,
    reference: &FeatureMap,
    cfg: &RefineConfig,
) -> Result<(RigidPose, RefineTrace)> {
    let interior = interior_mask(
        &fragments.face,
        &fragments.depth,
        fragments.height,
        fragments.width,
        mesh.diameter,
    );
    let features = view.features(mesh, camera);
    let p0 = project_view_at(view, mesh, camera, fragments, &view.pose, 0);
    let region = PinnedRegion::build(
        fragments,
        mesh,
        view,
        camera,
        &p0,
        reference,
        &interior,
        cfg.mask_margin_px,
    );

    if region.points.len() < MIN_ERROR_PIXELS {
        let e0 = if region.points.is_empty() {
            f64::INFINITY
        } else {
            region.error_and_gradient(features, reference, camera, &view.pose).0
        };
        let trace = RefineTrace {
            errors: vec![e0],
            poses: vec![view.pose],
            iterations_run: 0,
            stop_reason: StopReason::Starved,
            final_error: e0,
        };
        return Ok((view.pose, trace));
    }

    let (e0, mut grad) = region.error_and_gradient(features, reference, camera, &view.pose);
    let mut trace = RefineTrace {
        errors: vec![e0],
        poses: vec![view.pose],
        iterations_run: 0,
        stop_reason: StopReason::MaxIters,
        final_error: e0,
    };

    let mut current = view.pose;
    let mut current_err = e0;
    let mut bad_steps = 0usize;

    for iter in 1..=cfg.max_iters {
        let t_norm = grad.d_translation.norm();
        let r_norm = grad.d_euler.norm();
        if t_norm < 1e-15 && r_norm < 1e-15 {
            trace.stop_reason = StopReason::Converged;
            break;
        }

        // One update per iteration, backtracking on the global scale: a
        // full-size combined step often overshoots one block near its
        // optimum, so shrink before declaring the step non-improving.
        let mut accepted = None;
        let mut last = (current, current_err, grad);
        for attempt in 0..5 {
            let scale = cfg.step_delta * 0.5f64.powi(attempt);
            let mut next = current;
            if t_norm > 1e-15 {
                next.translation -= grad.d_translation * (scale * cfg.trans_step_m / t_norm);
            }
            if r_norm > 1e-15 {
                let (mut euler, _) = rotation_to_euler(&current.rotation);
                let step = grad.d_euler * (scale * cfg.rot_step_rad / r_norm);
                euler.rx -= step.x;
                euler.ry -= step.y;
                euler.rz -= step.z;
                next.rotation = euler_to_rotation(&euler);
            }
            let (e_next, g_next) = region.error_and_gradient(features, reference, camera, &next);
            last = (next, e_next, g_next);
            if e_next < current_err {
                accepted = Some(last);
                break;
            }
        }

        let (pose, err, g) = accepted.unwrap_or(last);
        trace.errors.push(err);
        trace.poses.push(pose);
        trace.iterations_run = iter;
        if accepted.is_some() {
            current = pose;
            current_err = err;
            grad = g;
            bad_steps = 0;
        } else {
            bad_steps += 1;
            if bad_steps >= cfg.patience {
                trace.stop_reason = StopReason::Converged;
                break;
            }
        }
    }

    // Meaningful-improvement gate: sub-threshold gains are noise-floor
    // descent, not pose correction.
    if current_err >= e0 * (1.0 - cfg.min_improvement) {
        trace.final_error = e0;
        return Ok((view.pose, trace));
    }
    trace.final_error = current_err;
    Ok((current, trace))
}

/// End-to-end pipeline configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    /// Run the pose-refinement stage between the two fusion passes.
    pub refine: bool,
    pub refine_cfg: RefineConfig,
    pub temperature: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            refine: true,
            refine_cfg: RefineConfig::default(),
            temperature: DEFAULT_TEMPERATURE,
        }
    }
}

/// Result of [`render_target`].
#[derive(Debug, Clone)]
pub struct RenderOutput {
    /// Final color rendering (3 channels).
    pub color: FeatureMap,
    /// Final blended 17-channel map.
    pub blended: FeatureMap,
    /// Union validity mask of the final fusion.
    pub mask: Mask,
    /// Per-view poses after refinement (annotated poses when refinement is
    /// off or starved).
    pub refined_poses: Vec<RigidPose>,
    /// Per-view refinement traces; empty when refinement is off.
    pub traces: Vec<RefineTrace>,
    /// True when every view starved and the output is the unrefined render.
    pub all_starved: bool,
}

/// Renders the views at `target_pose`: fuse once, refine each view's pose
/// independently against the frozen first-pass result, then fuse again with
/// the refined poses.
pub fn render_target(
    views: &[SourceView],
    mesh: &TriangleMesh,
    camera: &Camera,
    target_pose: &RigidPose,
    cfg: &PipelineConfig,
) -> Result<RenderOutput> {
    if views.is_empty() || views.len() > 8 {
        return Err(Error::invalid(format!("view count {} outside 1..=8", views.len())));
    }
    cfg.refine_cfg.validate()?;
    let fragments = rasterize(mesh, target_pose, camera);
    let projected: Vec<ProjectedMap> = par_map_indices(views.len(), |k| {
        project_view_at(&views[k], mesh, camera, &fragments, &views[k].pose, k)
    });
    let initial = fuse(&projected, cfg.temperature)?;

    if !cfg.refine {
        return Ok(RenderOutput {
            color: initial.color,
            blended: initial.blended,
            mask: initial.mask,
            refined_poses: views.iter().map(|v| v.pose).collect(),
            traces: Vec::new(),
            all_starved: false,
        });
    }

    let reference = &initial.blended;
    let refined: Vec<(RigidPose, RefineTrace)> = par_map_indices(views.len(), |k| {
        refine_pose_with_fragments(&views[k], mesh, camera, &fragments, reference, &cfg.refine_cfg)
            .expect("validated config")
    });
    let all_starved = refined.iter().all(|(_, t)| t.stop_reason == StopReason::Starved);

    let reprojected: Vec<ProjectedMap> = par_map_indices(views.len(), |k| {
        project_view_at(&views[k], mesh, camera, &fragments, &refined[k].0, k)
    });
    let final_fusion: FusionResult = fuse(&reprojected, cfg.temperature)?;

    Ok(RenderOutput {
        color: final_fusion.color,
        blended: final_fusion.blended,
        mask: final_fusion.mask,
        refined_poses: refined.iter().map(|(p, _)| *p).collect(),
        traces: refined.into_iter().map(|(_, t)| t).collect(),
        all_starved,
    })
}

/// Central finite differences of the projection error over the six pose
/// parameters — the independent oracle for the analytic gradient.
///
/// The contributing pixel set and its size are pinned at the unperturbed
/// pose, and only the sampling location moves with the perturbed pose
/// (out-of-range samples clamp at the border), mirroring the analytic
/// gradient's fixed-coverage assumption.
pub fn finite_diff_gradient(
    view: &SourceView,
    mesh: &TriangleMesh,
    camera: &Camera,
    target_pose: &RigidPose,
    reference: &FeatureMap,
    h_t: f64,
    h_r: f64,
) -> PoseDelta {
    assert!(h_t > 0.0 && h_r > 0.0);
    let fragments = rasterize(mesh, target_pose, camera);
    let interior = interior_mask(
        &fragments.face,
        &fragments.depth,
        fragments.height,
        fragments.width,
        mesh.diameter,
    );
    let features = view.features(mesh, camera);
    let c = features.channels;

    let p0 = project_view_at(view, mesh, camera, &fragments, &view.pose, 0);
    let mut pixels: Vec<(Vector3<f64>, usize)> = Vec::new();
    for p in 0..fragments.face.len() {
        if p0.features.valid[p] && interior.data[p] && reference.valid[p] {
            pixels.push((fragments.object_point(mesh, p).expect("valid fragment"), p));
        }
    }
    if pixels.is_empty() {
        return PoseDelta::zero();
    }
    let norm = 1.0 / (pixels.len() * c) as f64;

    let energy = |pose: &RigidPose| -> f64 {
        let mut total = 0.0;
        let mut sample = vec![0.0f64; c];
        for (point, p) in &pixels {
            let q = pose.transform_point(point);
            let (u, v) = camera.project_camera_point(&q);
            sample_clamped(features, u, v, &mut sample);
            let rv = &reference.values[p * c..(p + 1) * c];
            for ch in 0..c {
                total += (sample[ch] - rv[ch]).abs();
            }
        }
        total * norm
    };

    let (euler0, _) = rotation_to_euler(&view.pose.rotation);
    let eval_trans = |axis: usize, h: f64| {
        let mut pose = view.pose;
        pose.translation[axis] += h;
        energy(&pose)
    };
    let eval_rot = |axis: usize, h: f64| {
        let mut e = euler0;
        match axis {
            0 => e.rx += h,
            1 => e.ry += h,
            _ => e.rz += h,
        }
        energy(&RigidPose { rotation: euler_to_rotation(&e), translation: view.pose.translation })
    };

    let mut delta = PoseDelta::zero();
    for axis in 0..3 {
        delta.d_translation[axis] =
            (eval_trans(axis, h_t) - eval_trans(axis, -h_t)) / (2.0 * h_t);
        delta.d_euler[axis] = (eval_rot(axis, h_r) - eval_rot(axis, -h_r)) / (2.0 * h_r);
    }
    delta
}

/// Bilinear sample with coordinates clamped to the valid tap range.
fn sample_clamped(map: &FeatureMap, u: f64, v: f64, out: &mut [f64]) {
    let u = u.clamp(0.5, map.width as f64 - 0.5 - 1e-9);
    let v = v.clamp(0.5, map.height as f64 - 0.5 - 1e-9);
    let ok = crate::raster::bilinear_sample(map, u, v, out);
    debug_assert!(ok);
}
