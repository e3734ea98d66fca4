//! Multi-view fusion: integrate projected maps into a per-pixel reference,
//! weight each view by its distance to that reference, blend, and evaluate
//! image/smoothness losses.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featuremap::{FeatureMap, Mask};
use crate::raster::{feature_pyramid, ProjectedMap};

/// Softmax temperature for the weight maps, in per-channel L1 units of the
/// [0,1] color range.
pub const DEFAULT_TEMPERATURE: f64 = 0.05;

/// Loss balance weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_i: f64,
    pub lambda_f: f64,
    pub lambda_s: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { lambda_i: 5.0, lambda_f: 10.0, lambda_s: 1.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_i < 0.0 || self.lambda_f < 0.0 || self.lambda_s < 0.0 {
            return Err(Error::invalid("loss weights must be nonnegative"));
        }
        Ok(())
    }
}

/// Output of one fusion pass over K projected maps.
#[derive(Debug, Clone)]
pub struct FusionResult {
    /// Per-pixel reference map (channel-wise median over valid views).
    pub integrated: FeatureMap,
    /// One weight map per view; zero where that view is invalid.
    pub weights: Vec<FeatureMap>,
    /// Convex combination of the projected maps.
    pub blended: FeatureMap,
    /// Color channels (0–2) of `blended`.
    pub color: FeatureMap,
    /// Union validity mask: pixels with at least one valid projected value.
    pub mask: Mask,
}

/// Runs the full fusion pass: median integration, distance softmax weights,
/// weighted blend.
pub fn fuse(projected: &[ProjectedMap], temperature: f64) -> Result<FusionResult> {
    let integrated = integrate(projected)?;
    let weights = compute_weights(projected, &integrated, temperature)?;
    let (blended, color, mask) = weighted_blend(projected, &weights);
    Ok(FusionResult { integrated, weights, blended, color, mask })
}

/// Per pixel-channel median across the views valid at that pixel; pixels
/// valid in no view stay invalid. Robust to outlier views and independent of
/// view order.
pub fn integrate(projected: &[ProjectedMap]) -> Result<FeatureMap> {
    let first = projected.first().ok_or(Error::NoViews)?;
    let (h, w, c) = (first.features.height, first.features.width, first.features.channels);
    for p in projected {
        first.features.expect_shape(&p.features, "integrate")?;
    }
    let mut out = FeatureMap::invalid(h, w, c);
    let mut stack: Vec<f64> = Vec::with_capacity(projected.len());
    for p in 0..h * w {
        let valid: Vec<&ProjectedMap> = projected.iter().filter(|m| m.is_valid(p)).collect();
        if valid.is_empty() {
            continue;
        }
        out.valid[p] = true;
        for ch in 0..c {
            stack.clear();
            stack.extend(valid.iter().map(|m| m.features.values[p * c + ch]));
            stack.sort_by(f64::total_cmp);
            let n = stack.len();
            out.values[p * c + ch] =
                if n % 2 == 1 { stack[n / 2] } else { 0.5 * (stack[n / 2 - 1] + stack[n / 2]) };
        }
    }
    Ok(out)
}

/// Softmax over valid views of the negative mean-per-channel L1 distance to
/// the integrated map, sharpened by `temperature`. Invalid views carry weight
/// 0; pixels valid in no view get all-zero weights.
pub fn compute_weights(
    projected: &[ProjectedMap],
    integrated: &FeatureMap,
    temperature: f64,
) -> Result<Vec<FeatureMap>> {
    if projected.is_empty() {
        return Err(Error::NoViews);
    }
    if temperature <= 0.0 {
        return Err(Error::invalid("temperature must be positive"));
    }
    let (h, w, c) = (integrated.height, integrated.width, integrated.channels);
    let mut weights = vec![FeatureMap::zeros(h, w, 1); projected.len()];
    let inv = 1.0 / (c as f64 * temperature);

    let mut scores: Vec<(usize, f64)> = Vec::with_capacity(projected.len());
    for p in 0..h * w {
        scores.clear();
        for (k, m) in projected.iter().enumerate() {
            if !m.is_valid(p) {
                continue;
            }
            let mut dist = 0.0;
            for ch in 0..c {
                dist += (m.features.values[p * c + ch] - integrated.values[p * c + ch]).abs();
            }
            scores.push((k, -dist * inv));
        }
        if scores.is_empty() {
            continue;
        }
        let max = scores.iter().map(|(_, s)| *s).fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (_, s) in scores.iter_mut() {
            *s = (*s - max).exp();
            total += *s;
        }
        for (k, s) in &scores {
            weights[*k].values[p] = s / total;
        }
    }
    Ok(weights)
}

/// Weighted sum of the projected maps. Returns the blended map, its color
/// slice, and the union validity mask.
pub fn weighted_blend(
    projected: &[ProjectedMap],
    weights: &[FeatureMap],
) -> (FeatureMap, FeatureMap, Mask) {
    assert_eq!(projected.len(), weights.len());
    let first = &projected[0].features;
    let (h, w, c) = (first.height, first.width, first.channels);
    let mut blended = FeatureMap::invalid(h, w, c);
    let mut mask = Mask::filled(h, w, false);
    for p in 0..h * w {
        let mut any = false;
        for (m, wk) in projected.iter().zip(weights) {
            let weight = wk.values[p];
            if !m.is_valid(p) || weight == 0.0 {
                continue;
            }
            any = true;
            for ch in 0..c {
                blended.values[p * c + ch] += weight * m.features.values[p * c + ch];
            }
        }
        if any {
            blended.valid[p] = true;
            mask.data[p] = true;
        }
    }
    let color = blended.slice_channels(0, c.min(3));
    (blended, color, mask)
}

/// Masked image loss: per-pixel channel-summed L1 on colors plus the L1
/// distance between the images' feature pyramids, averaged over the mask.
pub fn image_loss(
    pred: &FeatureMap,
    target: &FeatureMap,
    mask: &Mask,
    w: &LossWeights,
) -> Result<f64> {
    pred.expect_shape(target, "image_loss")?;
    w.validate()?;
    if pred.height != mask.height || pred.width != mask.width {
        return Err(Error::invalid("image_loss: mask dimensions differ"));
    }
    let n = mask.count();
    if n == 0 {
        return Err(Error::EmptyRegion("image_loss mask".into()));
    }
    let c = pred.channels;
    let mut color_term = 0.0;
    for p in 0..pred.height * pred.width {
        if !mask.data[p] {
            continue;
        }
        for ch in 0..c {
            color_term += (pred.values[p * c + ch] - target.values[p * c + ch]).abs();
        }
    }

    let mut feature_term = 0.0;
    if w.lambda_f > 0.0 {
        let pp = feature_pyramid(pred);
        let tp = feature_pyramid(target);
        let pc = pp.channels;
        for p in 0..pred.height * pred.width {
            if !mask.data[p] {
                continue;
            }
            for ch in 0..pc {
                feature_term += (pp.values[p * pc + ch] - tp.values[p * pc + ch]).abs();
            }
        }
    }
    Ok((w.lambda_i * color_term + w.lambda_f * feature_term) / n as f64)
}

/// Masked smoothness loss: mean absolute 4-neighbor Laplacian over all
/// channels, summed over mask pixels whose full stencil lies inside the mask
/// and normalized by the mask size. Evaluating only full stencils keeps
/// affine maps at exactly zero loss.
pub fn smooth_loss(map: &FeatureMap, mask: &Mask, lambda_s: f64) -> Result<f64> {
    if lambda_s < 0.0 {
        return Err(Error::invalid("lambda_s must be nonnegative"));
    }
    if map.height != mask.height || map.width != mask.width {
        return Err(Error::invalid("smooth_loss: mask dimensions differ"));
    }
    let n = mask.count();
    if n == 0 {
        return Err(Error::EmptyRegion("smooth_loss mask".into()));
    }
    let (h, w, c) = (map.height, map.width, map.channels);
    let mut total = 0.0;
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            if !mask.get(y, x)
                || !mask.get(y - 1, x)
                || !mask.get(y + 1, x)
                || !mask.get(y, x - 1)
                || !mask.get(y, x + 1)
            {
                continue;
            }
            let p = y * w + x;
            for ch in 0..c {
                let lap = map.values[(p - w) * c + ch]
                    + map.values[(p + w) * c + ch]
                    + map.values[(p - 1) * c + ch]
                    + map.values[(p + 1) * c + ch]
                    - 4.0 * map.values[p * c + ch];
                total += lap.abs();
            }
        }
    }
    Ok(lambda_s * total / n as f64)
}
