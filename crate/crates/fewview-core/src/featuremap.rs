//! Dense per-pixel value grids: multi-channel feature maps and boolean masks.
//!
//! Values are stored row-major with interleaved channels
//! (`values[(y * width + x) * channels + c]`), which keeps the per-pixel
//! all-channel access pattern of the fusion and refinement loops contiguous.

use crate::error::{Error, Result};

/// Number of channels in an encoded source feature map: 3 color channels,
/// 1 face-angle channel, and a 13-channel multi-scale pyramid (4 + 3 + 3 + 3).
pub const FEATURE_CHANNELS: usize = 17;

/// First pyramid channel inside an encoded feature map.
pub const PYRAMID_OFFSET: usize = 4;

/// Number of pyramid channels.
pub const PYRAMID_CHANNELS: usize = 13;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    /// `height * width * channels` values, row-major, channel-interleaved.
    pub values: Vec<f64>,
    /// Per-pixel validity. Invalid pixels carry 0 in all channels.
    pub valid: Vec<bool>,
}

impl FeatureMap {
    /// All-valid map of zeros.
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        FeatureMap {
            height,
            width,
            channels,
            values: vec![0.0; height * width * channels],
            valid: vec![true; height * width],
        }
    }

    /// All-invalid map of zeros.
    pub fn invalid(height: usize, width: usize, channels: usize) -> Self {
        FeatureMap {
            valid: vec![false; height * width],
            ..Self::zeros(height, width, channels)
        }
    }

    #[inline]
    pub fn pixel_index(&self, y: usize, x: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn value_index(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.values[self.value_index(y, x, c)]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        let i = self.value_index(y, x, c);
        self.values[i] = v;
    }

    #[inline]
    pub fn is_valid(&self, y: usize, x: usize) -> bool {
        self.valid[y * self.width + x]
    }

    /// All channels of one pixel.
    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> &[f64] {
        let base = self.value_index(y, x, 0);
        &self.values[base..base + self.channels]
    }

    /// Marks a pixel invalid and zeroes its channels.
    pub fn clear_pixel(&mut self, y: usize, x: usize) {
        let base = self.value_index(y, x, 0);
        self.values[base..base + self.channels].fill(0.0);
        self.valid[y * self.width + x] = false;
    }

    pub fn same_shape(&self, other: &FeatureMap) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    /// Copies a contiguous channel range into a new map, keeping validity.
    pub fn slice_channels(&self, start: usize, count: usize) -> FeatureMap {
        assert!(start + count <= self.channels);
        let mut out = FeatureMap::zeros(self.height, self.width, count);
        for p in 0..self.height * self.width {
            out.valid[p] = self.valid[p];
            let src = p * self.channels + start;
            let dst = p * count;
            out.values[dst..dst + count].copy_from_slice(&self.values[src..src + count]);
        }
        out
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    pub fn expect_shape(&self, other: &FeatureMap, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "{what}: shape mismatch {}x{}x{} vs {}x{}x{}",
                self.height, self.width, self.channels, other.height, other.width, other.channels
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub height: usize,
    pub width: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn filled(height: usize, width: usize, value: bool) -> Self {
        Mask { height, width, data: vec![value; height * width] }
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|v| **v).count()
    }

    pub fn and(&self, other: &Mask) -> Mask {
        assert_eq!((self.height, self.width), (other.height, other.width));
        Mask {
            height: self.height,
            width: self.width,
            data: self.data.iter().zip(&other.data).map(|(a, b)| *a && *b).collect(),
        }
    }

    /// Morphological erosion with a square structuring element of the given
    /// radius; image borders count as outside.
    pub fn eroded(&self, radius: usize) -> Mask {
        if radius == 0 {
            return self.clone();
        }
        let r = radius as i64;
        let mut out = Mask::filled(self.height, self.width, false);
        for y in 0..self.height {
            for x in 0..self.width {
                if !self.get(y, x) {
                    continue;
                }
                let mut keep = true;
                'window: for dy in -r..=r {
                    for dx in -r..=r {
                        let ny = y as i64 + dy;
                        let nx = x as i64 + dx;
                        if ny < 0
                            || nx < 0
                            || ny >= self.height as i64
                            || nx >= self.width as i64
                            || !self.get(ny as usize, nx as usize)
                        {
                            keep = false;
                            break 'window;
                        }
                    }
                }
                out.set(y, x, keep);
            }
        }
        out
    }
}
