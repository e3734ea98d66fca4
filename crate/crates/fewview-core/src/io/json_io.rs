use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Camera, RigidPose};

#[derive(Serialize, Deserialize)]
struct PoseJson {
    /// Row-major 3×3 rotation.
    rotation: Vec<f64>,
    /// Meters.
    translation: Vec<f64>,
}

pub fn pose_to_json(pose: &RigidPose) -> serde_json::Value {
    let r = &pose.rotation;
    serde_json::json!({
        "rotation": [
            r[(0, 0)], r[(0, 1)], r[(0, 2)],
            r[(1, 0)], r[(1, 1)], r[(1, 2)],
            r[(2, 0)], r[(2, 1)], r[(2, 2)],
        ],
        "translation": [pose.translation.x, pose.translation.y, pose.translation.z],
    })
}

pub fn pose_from_json(value: &serde_json::Value) -> Result<RigidPose> {
    let parsed: PoseJson = serde_json::from_value(value.clone())?;
    if parsed.rotation.len() != 9 || parsed.translation.len() != 3 {
        return Err(Error::invalid("pose JSON needs 9 rotation and 3 translation numbers"));
    }
    let r = &parsed.rotation;
    RigidPose::new(
        Matrix3::new(r[0], r[1], r[2], r[3], r[4], r[5], r[6], r[7], r[8]),
        Vector3::new(parsed.translation[0], parsed.translation[1], parsed.translation[2]),
    )
}

pub fn load_pose(path: &Path) -> Result<RigidPose> {
    let value: serde_json::Value = serde_json::from_reader(std::fs::File::open(path)?)?;
    pose_from_json(&value)
}

/// Loads either a single pose object or an array of them.
pub fn load_poses(path: &Path) -> Result<Vec<RigidPose>> {
    let value: serde_json::Value = serde_json::from_reader(std::fs::File::open(path)?)?;
    match &value {
        serde_json::Value::Array(items) => items.iter().map(pose_from_json).collect(),
        _ => Ok(vec![pose_from_json(&value)?]),
    }
}

pub fn save_pose(path: &Path, pose: &RigidPose) -> Result<()> {
    let text = serde_json::to_string_pretty(&pose_to_json(pose))?;
    super::write_atomic(path, text.as_bytes())
}

pub fn load_camera(path: &Path) -> Result<Camera> {
    let camera: Camera = serde_json::from_reader(std::fs::File::open(path)?)?;
    Camera::new(camera.fx, camera.fy, camera.cx, camera.cy, camera.width, camera.height)
}

pub fn save_camera(path: &Path, camera: &Camera) -> Result<()> {
    let text = serde_json::to_string_pretty(camera)?;
    super::write_atomic(path, text.as_bytes())
}

/// Frame list mapping ids to image/mask/pose files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameManifest {
    pub frames: Vec<FrameManifestEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameManifestEntry {
    pub id: u64,
    pub image: String,
    pub mask: String,
    pub pose: String,
}

pub fn load_frame_manifest(path: &Path) -> Result<FrameManifest> {
    Ok(serde_json::from_reader(std::fs::File::open(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::perturb_pose;

    #[test]
    fn pose_json_round_trip() {
        let pose = perturb_pose(&RigidPose::identity(), 0.3, 1.0, 4);
        let back = pose_from_json(&pose_to_json(&pose)).unwrap();
        assert_eq!(back.rotation, pose.rotation);
        assert_eq!(back.translation, pose.translation);
    }

    #[test]
    fn pose_json_rejects_non_rotation() {
        let bad = serde_json::json!({
            "rotation": [2.0, 0, 0, 0, 1, 0, 0, 0, 1],
            "translation": [0, 0, 0],
        });
        assert!(pose_from_json(&bad).is_err());
    }

    #[test]
    fn camera_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("camera.json");
        let cam = Camera::new(300.0, 310.0, 64.0, 60.0, 128, 120).unwrap();
        save_camera(&path, &cam).unwrap();
        assert_eq!(load_camera(&path).unwrap(), cam);
    }

    #[test]
    fn pose_list_or_single() {
        let dir = tempfile::tempdir().unwrap();
        let single = dir.path().join("one.json");
        let pose = RigidPose::identity();
        save_pose(&single, &pose).unwrap();
        assert_eq!(load_poses(&single).unwrap().len(), 1);

        let list = dir.path().join("many.json");
        let arr = serde_json::Value::Array(vec![pose_to_json(&pose), pose_to_json(&pose)]);
        std::fs::write(&list, serde_json::to_string(&arr).unwrap()).unwrap();
        assert_eq!(load_poses(&list).unwrap().len(), 2);
    }
}
