use std::io::{Cursor, Read, Write};
use std::path::Path;

use image::{GrayImage, ImageFormat, RgbImage};

use crate::error::{Error, Result};
use crate::featuremap::{FeatureMap, Mask};

/// Writes bytes to a temporary file in the target directory and renames it
/// into place, so observers never see partial files.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Loads an 8-bit PNG as an RGB map in [0,1].
pub fn load_png_rgb(path: &Path) -> Result<FeatureMap> {
    let img: RgbImage = image::open(path)?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut out = FeatureMap::zeros(h, w, 3);
    for (i, px) in img.pixels().enumerate() {
        for c in 0..3 {
            out.values[i * 3 + c] = px.0[c] as f64 / 255.0;
        }
    }
    Ok(out)
}

/// Saves a 3-channel map as 8-bit PNG, clamping to [0,1].
pub fn save_png_rgb(path: &Path, map: &FeatureMap) -> Result<()> {
    if map.channels != 3 {
        return Err(Error::invalid("save_png_rgb expects 3 channels"));
    }
    let mut img = RgbImage::new(map.width as u32, map.height as u32);
    for (i, px) in img.pixels_mut().enumerate() {
        for c in 0..3 {
            px.0[c] = (map.values[i * 3 + c].clamp(0.0, 1.0) * 255.0).round() as u8;
        }
    }
    let mut bytes = Vec::new();
    img.write_to(&mut Cursor::new(&mut bytes), ImageFormat::Png)?;
    write_atomic(path, &bytes)
}

pub fn load_png_mask(path: &Path) -> Result<Mask> {
    let img: GrayImage = image::open(path)?.to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut mask = Mask::filled(h, w, false);
    for (i, px) in img.pixels().enumerate() {
        mask.data[i] = px.0[0] > 127;
    }
    Ok(mask)
}

pub fn save_png_mask(path: &Path, mask: &Mask) -> Result<()> {
    let mut img = GrayImage::new(mask.width as u32, mask.height as u32);
    for (i, px) in img.pixels_mut().enumerate() {
        px.0[0] = if mask.data[i] { 255 } else { 0 };
    }
    let mut bytes = Vec::new();
    img.write_to(&mut Cursor::new(&mut bytes), ImageFormat::Png)?;
    write_atomic(path, &bytes)
}

/// Raw feature-map dump: u32-LE header (height, width, channels) followed by
/// f32-LE values in storage order. Validity is not persisted.
pub fn write_feature_map(path: &Path, map: &FeatureMap) -> Result<()> {
    let mut bytes =
        Vec::with_capacity(12 + map.values.len() * std::mem::size_of::<f32>());
    for dim in [map.height as u32, map.width as u32, map.channels as u32] {
        bytes.extend_from_slice(&dim.to_le_bytes());
    }
    for v in &map.values {
        bytes.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    write_atomic(path, &bytes)
}

pub fn read_feature_map(path: &Path) -> Result<FeatureMap> {
    let mut file = std::fs::File::open(path)?;
    let mut header = [0u8; 12];
    file.read_exact(&mut header)?;
    let h = u32::from_le_bytes(header[0..4].try_into().unwrap()) as usize;
    let w = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let c = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let mut body = Vec::new();
    file.read_to_end(&mut body)?;
    if body.len() != h * w * c * 4 {
        return Err(Error::Parse {
            path: path.display().to_string(),
            message: format!("expected {} value bytes, found {}", h * w * c * 4, body.len()),
        });
    }
    let mut map = FeatureMap::zeros(h, w, c);
    for (i, chunk) in body.chunks_exact(4).enumerate() {
        map.values[i] = f32::from_le_bytes(chunk.try_into().unwrap()) as f64;
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenegen::procedural_texture;

    #[test]
    fn png_round_trip_is_lossless_for_8bit_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.png");
        let mut img = FeatureMap::zeros(8, 8, 3);
        for (i, v) in img.values.iter_mut().enumerate() {
            *v = ((i * 17) % 256) as f64 / 255.0;
        }
        save_png_rgb(&path, &img).unwrap();
        let back = load_png_rgb(&path).unwrap();
        for (a, b) in img.values.iter().zip(&back.values) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mask_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        let mut mask = Mask::filled(5, 7, false);
        for i in [0usize, 3, 11, 34] {
            mask.data[i] = true;
        }
        save_png_mask(&path, &mask).unwrap();
        assert_eq!(load_png_mask(&path).unwrap(), mask);
    }

    #[test]
    fn feature_map_dump_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.bin");
        let map = procedural_texture(8, 64);
        write_feature_map(&path, &map).unwrap();
        let back = read_feature_map(&path).unwrap();
        assert_eq!((back.height, back.width, back.channels), (64, 64, 3));
        for (a, b) in map.values.iter().zip(&back.values) {
            assert!((a - b).abs() < 1e-6); // f32 storage
        }
    }
}
