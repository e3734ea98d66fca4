use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::featuremap::FeatureMap;

/// Sampling ranges for the color augmentation chain. Defaults follow the
/// standard recipe for simulating lighting variation: additive color shift
/// U(−15, 15) and noise N(0, 10) in 8-bit units, contrast U(0.8, 1.3),
/// multiply U(0.8, 1.2), Gaussian blur σ U(0, 0.5).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    /// Additive offset range, 8-bit units.
    pub color_add: (f64, f64),
    /// Contrast-normalization factor range.
    pub contrast: (f64, f64),
    /// Multiplicative gain range.
    pub multiply: (f64, f64),
    /// Gaussian blur σ range, pixels.
    pub gaussian_blur: (f64, f64),
    /// Std-dev of additive Gaussian noise, 8-bit units.
    pub noise_std: f64,
}

impl Default for AugmentParams {
    fn default() -> Self {
        AugmentParams {
            color_add: (-15.0, 15.0),
            contrast: (0.8, 1.3),
            multiply: (0.8, 1.2),
            gaussian_blur: (0.0, 0.5),
            noise_std: 10.0,
        }
    }
}

impl AugmentParams {
    /// Ranges collapsed to the identity transform.
    pub fn identity() -> Self {
        AugmentParams {
            color_add: (0.0, 0.0),
            contrast: (1.0, 1.0),
            multiply: (1.0, 1.0),
            gaussian_blur: (0.0, 0.0),
            noise_std: 0.0,
        }
    }
}

/// One concrete draw from [`AugmentParams`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentValues {
    pub add: f64,
    pub contrast: f64,
    pub multiply: f64,
    pub blur_sigma: f64,
    pub noise_std: f64,
}

pub fn sample_augment(params: &AugmentParams, rng: &mut ChaCha8Rng) -> AugmentValues {
    let mut uniform = |(lo, hi): (f64, f64)| if hi > lo { rng.gen_range(lo..=hi) } else { lo };
    AugmentValues {
        add: uniform(params.color_add),
        contrast: uniform(params.contrast),
        multiply: uniform(params.multiply),
        blur_sigma: uniform(params.gaussian_blur),
        noise_std: params.noise_std,
    }
}

/// Applies a seeded draw of the augmentation chain in fixed order:
/// add, contrast normalization, multiply, Gaussian blur, additive noise;
/// the output is clamped to [0, 1]. Identity parameter values leave the
/// image bit-identical.
pub fn color_augment(image: &FeatureMap, params: &AugmentParams, seed: u64) -> FeatureMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = sample_augment(params, &mut rng);
    apply_augment(image, &values, &mut rng)
}

pub fn apply_augment(
    image: &FeatureMap,
    v: &AugmentValues,
    noise_rng: &mut ChaCha8Rng,
) -> FeatureMap {
    let mut out = image.clone();
    if v.add != 0.0 {
        let add = v.add / 255.0;
        for x in &mut out.values {
            *x += add;
        }
    }
    if v.contrast != 1.0 {
        for x in &mut out.values {
            *x = (*x - 0.5) * v.contrast + 0.5;
        }
    }
    if v.multiply != 1.0 {
        for x in &mut out.values {
            *x *= v.multiply;
        }
    }
    if v.blur_sigma > 1e-9 {
        out = gaussian_blur(&out, v.blur_sigma);
    }
    let mut clamped = false;
    if v.noise_std > 0.0 {
        let normal = Normal::new(0.0, v.noise_std / 255.0).expect("positive std");
        for x in &mut out.values {
            *x = (*x + normal.sample(noise_rng)).clamp(0.0, 1.0);
        }
        clamped = true;
    }
    if !clamped && (v.add != 0.0 || v.contrast != 1.0 || v.multiply != 1.0) {
        for x in &mut out.values {
            *x = x.clamp(0.0, 1.0);
        }
    }
    out
}

fn gaussian_blur(image: &FeatureMap, sigma: f64) -> FeatureMap {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut kernel: Vec<f64> =
        (-radius..=radius).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = kernel.iter().sum();
    for k in &mut kernel {
        *k /= total;
    }
    let (h, w, c) = (image.height, image.width, image.channels);
    let mut tmp = image.clone();
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for (ki, k) in kernel.iter().enumerate() {
                    let sx = (x as i64 + ki as i64 - radius).clamp(0, w as i64 - 1) as usize;
                    acc += k * image.get(y, sx, ch);
                }
                tmp.set(y, x, ch, acc);
            }
        }
    }
    let mut out = tmp.clone();
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for (ki, k) in kernel.iter().enumerate() {
                    let sy = (y as i64 + ki as i64 - radius).clamp(0, h as i64 - 1) as usize;
                    acc += k * tmp.get(sy, x, ch);
                }
                out.set(y, x, ch, acc);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenegen::procedural_texture;

    #[test]
    fn identity_params_leave_image_unchanged() {
        let img = procedural_texture(3, 64);
        let out = color_augment(&img, &AugmentParams::identity(), 11);
        assert_eq!(out.values, img.values);
    }

    #[test]
    fn pure_add_shifts_unclamped_pixels_exactly() {
        let img = procedural_texture(4, 64);
        let params = AugmentParams { color_add: (15.0, 15.0), ..AugmentParams::identity() };
        let out = color_augment(&img, &params, 0);
        let add = 15.0 / 255.0;
        for (a, b) in img.values.iter().zip(&out.values) {
            if a + add <= 1.0 {
                assert_eq!(*b, a + add);
            } else {
                assert_eq!(*b, 1.0);
            }
        }
    }

    #[test]
    fn sampled_values_respect_declared_ranges() {
        let params = AugmentParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        for _ in 0..10_000 {
            let v = sample_augment(&params, &mut rng);
            assert!((-15.0..=15.0).contains(&v.add));
            assert!((0.8..=1.3).contains(&v.contrast));
            assert!((0.8..=1.2).contains(&v.multiply));
            assert!((0.0..=0.5).contains(&v.blur_sigma));
            assert_eq!(v.noise_std, 10.0);
        }
    }

    #[test]
    fn augment_is_seeded() {
        let img = procedural_texture(5, 64);
        let a = color_augment(&img, &AugmentParams::default(), 9);
        let b = color_augment(&img, &AugmentParams::default(), 9);
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn output_is_clamped() {
        let img = procedural_texture(6, 64);
        let params = AugmentParams { color_add: (200.0, 200.0), ..AugmentParams::identity() };
        let out = color_augment(&img, &params, 0);
        assert!(out.values.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
