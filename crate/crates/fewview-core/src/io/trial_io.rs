use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenegen::{TrialSet, TrialSource};

use super::{
    load_camera, load_png_mask, load_png_rgb, load_pose, save_camera, save_mesh_obj,
    save_png_mask, save_png_rgb, save_pose, write_atomic,
};

/// Per-trial metadata persisted next to the images.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialMeta {
    pub shape: String,
    pub seed: u64,
    pub n_sources: usize,
    pub trans_err_m: f64,
    pub rot_err_rad: f64,
    pub light_dir: [f64; 3],
}

/// Persists one trial under `dir`: mesh (OBJ), texture and renders (PNG),
/// camera and poses (JSON), and `trial.json` metadata. Noisy annotations go
/// to `src_K_pose.json`; the exact poses are kept in `src_K_pose_gt.json`.
pub fn save_trial_set(dir: &Path, trial: &TrialSet, shape_name: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    save_mesh_obj(&dir.join("mesh.obj"), &trial.mesh)?;
    save_png_rgb(&dir.join("texture.png"), &trial.texture)?;
    save_camera(&dir.join("camera.json"), &trial.camera)?;
    save_pose(&dir.join("target_pose.json"), &trial.target_pose)?;
    save_png_rgb(&dir.join("target_image.png"), &trial.target_image)?;
    save_png_mask(&dir.join("target_mask.png"), &trial.target_mask)?;
    for (i, source) in trial.sources.iter().enumerate() {
        save_png_rgb(&dir.join(format!("src_{i}.png")), &source.image)?;
        save_png_mask(&dir.join(format!("src_{i}_mask.png")), &source.mask)?;
        save_pose(&dir.join(format!("src_{i}_pose.json")), &source.noisy_pose)?;
        save_pose(&dir.join(format!("src_{i}_pose_gt.json")), &source.exact_pose)?;
    }
    let meta = TrialMeta {
        shape: shape_name.to_string(),
        seed: trial.seed,
        n_sources: trial.sources.len(),
        trans_err_m: trial.trans_err_m,
        rot_err_rad: trial.rot_err_rad,
        light_dir: [trial.light_dir.x, trial.light_dir.y, trial.light_dir.z],
    };
    write_atomic(&dir.join("trial.json"), serde_json::to_string_pretty(&meta)?.as_bytes())?;
    Ok(())
}

/// Loads a trial directory written by [`save_trial_set`]. Image values come
/// back 8-bit quantized.
pub fn load_trial_set(dir: &Path) -> Result<TrialSet> {
    let meta: TrialMeta =
        serde_json::from_reader(std::fs::File::open(dir.join("trial.json"))?)?;
    let mesh = super::load_mesh_obj(&dir.join("mesh.obj"))?;
    let texture = load_png_rgb(&dir.join("texture.png"))?;
    let camera = load_camera(&dir.join("camera.json"))?;
    let target_pose = load_pose(&dir.join("target_pose.json"))?;
    let target_image = load_png_rgb(&dir.join("target_image.png"))?;
    let target_mask = load_png_mask(&dir.join("target_mask.png"))?;
    let mut sources = Vec::with_capacity(meta.n_sources);
    for i in 0..meta.n_sources {
        sources.push(TrialSource {
            image: load_png_rgb(&dir.join(format!("src_{i}.png")))?,
            mask: load_png_mask(&dir.join(format!("src_{i}_mask.png")))?,
            noisy_pose: load_pose(&dir.join(format!("src_{i}_pose.json")))?,
            exact_pose: load_pose(&dir.join(format!("src_{i}_pose_gt.json")))?,
        });
    }
    if sources.is_empty() {
        return Err(Error::invalid("trial has no sources"));
    }
    Ok(TrialSet {
        mesh,
        texture,
        camera,
        target_pose,
        target_image,
        target_mask,
        sources,
        light_dir: Vector3::new(meta.light_dir[0], meta.light_dir[1], meta.light_dir[2]),
        trans_err_m: meta.trans_err_m,
        rot_err_rad: meta.rot_err_rad,
        seed: meta.seed,
    })
}
