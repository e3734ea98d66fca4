//! File formats: OBJ/PLY meshes, JSON poses/cameras/manifests, PNG images
//! and masks, raw feature-map dumps, and trial-set directories.

mod image_io;
mod json_io;
mod mesh_io;
mod trial_io;

pub use image_io::{
    load_png_mask, load_png_rgb, read_feature_map, save_png_mask, save_png_rgb, write_atomic,
    write_feature_map,
};
pub use json_io::{
    load_camera, load_frame_manifest, load_pose, load_poses, pose_from_json, pose_to_json,
    save_camera, save_pose, FrameManifest, FrameManifestEntry,
};
pub use mesh_io::{load_mesh, load_mesh_obj, load_mesh_ply, save_mesh_obj};
pub use trial_io::{load_trial_set, save_trial_set, TrialMeta};
