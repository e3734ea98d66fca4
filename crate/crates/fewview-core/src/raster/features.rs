use super::fragments::rasterize;
use super::project::SourceView;
use crate::featuremap::{FeatureMap, FEATURE_CHANNELS};
use crate::geometry::{face_view_angles, Camera, TriangleMesh};

/// Encodes a source view into the 17-channel feature map sampled by the
/// re-projection stage:
///
/// - channels 0–2: the source color image, passed through;
/// - channel 3: the face-angle map of the object rendered at the view's
///   annotated pose (0 outside the object);
/// - channels 4–16: a fixed multi-scale pyramid ([`feature_pyramid`]) of the
///   image with pixels outside the object mask replaced by the in-mask mean
///   color, so coarse-scale blur does not smear view-specific background
///   into the features.
pub fn encode_features(view: &SourceView, mesh: &TriangleMesh, camera: &Camera) -> FeatureMap {
    let image = &view.image;
    let (h, w) = (image.height, image.width);
    let mut out = FeatureMap::zeros(h, w, FEATURE_CHANNELS);

    for p in 0..h * w {
        out.values[p * FEATURE_CHANNELS..p * FEATURE_CHANNELS + 3]
            .copy_from_slice(&image.values[p * 3..p * 3 + 3]);
    }

    let angles = face_view_angles(mesh, &view.pose);
    let frags = rasterize(mesh, &view.pose, camera);
    for p in 0..h * w {
        if let Some(f) = frags.face[p] {
            out.values[p * FEATURE_CHANNELS + 3] = angles[f as usize];
        }
    }

    let pyr = feature_pyramid(&mask_filled(image, &view.mask));
    for p in 0..h * w {
        out.values[p * FEATURE_CHANNELS + 4..(p + 1) * FEATURE_CHANNELS]
            .copy_from_slice(&pyr.values[p * 13..(p + 1) * 13]);
    }
    out
}

/// Replaces out-of-mask pixels by the mean in-mask color. With an empty mask
/// the image is returned unchanged.
fn mask_filled(image: &FeatureMap, mask: &crate::featuremap::Mask) -> FeatureMap {
    let n = mask.count();
    if n == 0 || n == mask.data.len() {
        return image.clone();
    }
    let mut mean = [0.0f64; 3];
    for p in 0..mask.data.len() {
        if mask.data[p] {
            for c in 0..3 {
                mean[c] += image.values[p * 3 + c];
            }
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut out = image.clone();
    for p in 0..mask.data.len() {
        if !mask.data[p] {
            out.values[p * 3..p * 3 + 3].copy_from_slice(&mean);
        }
    }
    out
}

/// 13-channel multi-scale pyramid of blurred intensities and gradient
/// magnitudes, the fixed stand-in for a learned encoder.
///
/// At each of 4 scales (full, 1/2, 1/4, 1/8) the luma is blurred with a 3×3
/// binomial kernel and differentiated centrally. Scale 0 contributes
/// 4 channels (blur, |gx|, |gy|, gradient magnitude), the coarser scales
/// 3 each (blur, |gx|, |gy|), all bilinearly upsampled to full resolution.
pub fn feature_pyramid(image: &FeatureMap) -> FeatureMap {
    assert_eq!(image.channels, 3);
    let (h, w) = (image.height, image.width);
    let mut out = FeatureMap::zeros(h, w, 13);

    let mut luma = Plane::new(h, w);
    for p in 0..h * w {
        let px = &image.values[p * 3..p * 3 + 3];
        luma.data[p] = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
    }

    let mut channel = 0usize;
    let mut level = luma;
    for scale in 0..4 {
        let blurred = level.blur3();
        let gx = blurred.central_diff_x();
        let gy = blurred.central_diff_y();

        let mut planes: Vec<Plane> = Vec::with_capacity(4);
        planes.push(blurred);
        if scale == 0 {
            let mut gm = Plane::new(level.h, level.w);
            for i in 0..gm.data.len() {
                gm.data[i] = gx.data[i].hypot(gy.data[i]);
            }
            planes.push(gx.abs());
            planes.push(gy.abs());
            planes.push(gm);
        } else {
            planes.push(gx.abs());
            planes.push(gy.abs());
        }
        for plane in planes {
            let full = plane.upsample_bilinear(h, w);
            for p in 0..h * w {
                out.values[p * 13 + channel] = full.data[p];
            }
            channel += 1;
        }
        if scale < 3 {
            level = level.downsample2();
        }
    }
    debug_assert_eq!(channel, 13);
    out
}

/// Single-channel working plane for the pyramid.
#[derive(Clone)]
struct Plane {
    h: usize,
    w: usize,
    data: Vec<f64>,
}

impl Plane {
    fn new(h: usize, w: usize) -> Self {
        Plane { h, w, data: vec![0.0; h * w] }
    }

    #[inline]
    fn at(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.w + x]
    }

    /// Separable [1 2 1]/4 blur with replicated borders.
    fn blur3(&self) -> Plane {
        let mut tmp = Plane::new(self.h, self.w);
        for y in 0..self.h {
            for x in 0..self.w {
                let xl = x.saturating_sub(1);
                let xr = (x + 1).min(self.w - 1);
                tmp.data[y * self.w + x] =
                    0.25 * self.at(y, xl) + 0.5 * self.at(y, x) + 0.25 * self.at(y, xr);
            }
        }
        let mut out = Plane::new(self.h, self.w);
        for y in 0..self.h {
            let yu = y.saturating_sub(1);
            let yd = (y + 1).min(self.h - 1);
            for x in 0..self.w {
                out.data[y * self.w + x] =
                    0.25 * tmp.at(yu, x) + 0.5 * tmp.at(y, x) + 0.25 * tmp.at(yd, x);
            }
        }
        out
    }

    fn central_diff_x(&self) -> Plane {
        let mut out = Plane::new(self.h, self.w);
        for y in 0..self.h {
            for x in 0..self.w {
                let xl = x.saturating_sub(1);
                let xr = (x + 1).min(self.w - 1);
                out.data[y * self.w + x] = 0.5 * (self.at(y, xr) - self.at(y, xl));
            }
        }
        out
    }

    fn central_diff_y(&self) -> Plane {
        let mut out = Plane::new(self.h, self.w);
        for y in 0..self.h {
            let yu = y.saturating_sub(1);
            let yd = (y + 1).min(self.h - 1);
            for x in 0..self.w {
                out.data[y * self.w + x] = 0.5 * (self.at(yd, x) - self.at(yu, x));
            }
        }
        out
    }

    fn abs(mut self) -> Plane {
        for v in &mut self.data {
            *v = v.abs();
        }
        self
    }

    /// 2×2 box average; odd trailing rows/columns reuse the last sample.
    fn downsample2(&self) -> Plane {
        let nh = self.h.div_ceil(2);
        let nw = self.w.div_ceil(2);
        let mut out = Plane::new(nh, nw);
        for y in 0..nh {
            let y0 = 2 * y;
            let y1 = (2 * y + 1).min(self.h - 1);
            for x in 0..nw {
                let x0 = 2 * x;
                let x1 = (2 * x + 1).min(self.w - 1);
                out.data[y * nw + x] =
                    0.25 * (self.at(y0, x0) + self.at(y0, x1) + self.at(y1, x0) + self.at(y1, x1));
            }
        }
        out
    }

    /// Bilinear upsampling with pixel-center alignment and clamped edges.
    fn upsample_bilinear(&self, nh: usize, nw: usize) -> Plane {
        if nh == self.h && nw == self.w {
            return self.clone();
        }
        let mut out = Plane::new(nh, nw);
        let sy = self.h as f64 / nh as f64;
        let sx = self.w as f64 / nw as f64;
        for y in 0..nh {
            let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (self.h - 1) as f64);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(self.h - 1);
            let ty = fy - y0 as f64;
            for x in 0..nw {
                let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (self.w - 1) as f64);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(self.w - 1);
                let tx = fx - x0 as f64;
                let top = self.at(y0, x0) * (1.0 - tx) + self.at(y0, x1) * tx;
                let bot = self.at(y1, x0) * (1.0 - tx) + self.at(y1, x1) * tx;
                out.data[y * nw + x] = top * (1.0 - ty) + bot * ty;
            }
        }
        out
    }
}
