//! Source-frame selection and target-pose generation.
//!
//! Two selection strategies: diversity sampling prunes frames whose pose is
//! close to an already-picked frame in both translation and rotation; greedy
//! visibility sampling maximizes newly-covered mesh vertices per pick.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{
    euler_to_rotation, look_at_pose, pose_distance, visible_vertices, Camera, EulerAngles,
    RigidPose, TriangleMesh,
};
use crate::par::par_map;

/// One candidate source frame with its precomputed visibility.
#[derive(Debug, Clone)]
pub struct FrameRecord {
    pub id: u64,
    pub pose: RigidPose,
    /// Sorted indices of mesh vertices visible from this frame.
    pub visible: Vec<u32>,
    /// `visible.len() / vertex_count`.
    pub visibility_fraction: f64,
}

impl FrameRecord {
    pub fn new(id: u64, pose: RigidPose, mesh: &TriangleMesh, camera: &Camera) -> Self {
        let visible = visible_vertices(mesh, &pose, camera);
        let visibility_fraction = visible.len() as f64 / mesh.vertices.len() as f64;
        FrameRecord { id, pose, visible, visibility_fraction }
    }
}

/// Builds [`FrameRecord`]s for all poses, computing visibility in parallel.
pub fn make_frame_records(
    poses: &[(u64, RigidPose)],
    mesh: &TriangleMesh,
    camera: &Camera,
) -> Vec<FrameRecord> {
    par_map(poses, |(id, pose)| FrameRecord::new(*id, *pose, mesh, camera))
}

/// Iteratively picks a random remaining frame, then prunes every frame whose
/// pose is within `trans_mm` translation AND `rot_deg` rotation of it (a
/// frame survives if it differs enough in either distance). Stops when the
/// pool is empty or `max_count` frames are selected. Returns frame ids in
/// selection order; deterministic in `seed`.
pub fn diversity_sample(
    frames: &[FrameRecord],
    trans_mm: f64,
    rot_deg: f64,
    max_count: usize,
    seed: u64,
) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool: Vec<&FrameRecord> = frames.iter().collect();
    let mut selected = Vec::new();
    while !pool.is_empty() && selected.len() < max_count {
        let pick = pool.remove(rng.gen_range(0..pool.len()));
        selected.push(pick.id);
        pool.retain(|f| {
            let (t, r) = pose_distance(&f.pose, &pick.pose);
            t >= trans_mm || r >= rot_deg
        });
    }
    selected
}

/// Greedy max-coverage selection: each round picks the frame that adds the
/// most not-yet-observed vertices (ties broken by lower frame id) and stops
/// when no frame adds anything.
pub fn greedy_visibility_sample(frames: &[FrameRecord], vertex_count: usize) -> Vec<u64> {
    greedy_cover(frames, &vec![true; vertex_count], usize::MAX)
}

fn greedy_cover(frames: &[FrameRecord], eligible: &[bool], max_count: usize) -> Vec<u64> {
    let mut covered = vec![false; eligible.len()];
    let mut used = vec![false; frames.len()];
    let mut selected = Vec::new();
    while selected.len() < max_count {
        let mut best: Option<(usize, usize, u64)> = None; // (gain, index, id)
        for (i, f) in frames.iter().enumerate() {
            if used[i] {
                continue;
            }
            let gain = f
                .visible
                .iter()
                .filter(|v| {
                    let v = **v as usize;
                    eligible[v] && !covered[v]
                })
                .count();
            if gain == 0 {
                continue;
            }
            best = match best {
                None => Some((gain, i, f.id)),
                Some((bg, bi, bid)) => {
                    if gain > bg || (gain == bg && f.id < bid) {
                        Some((gain, i, f.id))
                    } else {
                        Some((bg, bi, bid))
                    }
                }
            };
        }
        let Some((_, i, id)) = best else { break };
        used[i] = true;
        selected.push(id);
        for v in &frames[i].visible {
            covered[*v as usize] = true;
        }
    }
    selected
}

/// Target poses on an upper hemisphere around the origin.
#[derive(Debug, Clone)]
pub struct PoseGrid {
    pub azimuth_step_deg: f64,
    pub elevation_step_deg: f64,
    pub radius: f64,
    pub poses: Vec<RigidPose>,
}

/// Upper-hemisphere camera poses looking at the origin with a fixed z-up
/// convention: azimuth `{0, step, ..., 360 − step}`, elevation
/// `{step, ..., 90}`. The default 5° steps give 72 · 18 = 1296 poses.
pub fn hemisphere_poses(az_step_deg: f64, el_step_deg: f64, radius: f64) -> Result<PoseGrid> {
    if radius <= 0.0 {
        return Err(Error::invalid("hemisphere radius must be positive"));
    }
    if az_step_deg <= 0.0 || el_step_deg <= 0.0 {
        return Err(Error::invalid("grid steps must be positive"));
    }
    let az_count = 360.0 / az_step_deg;
    let el_count = 90.0 / el_step_deg;
    if (az_count - az_count.round()).abs() > 1e-9 || (el_count - el_count.round()).abs() > 1e-9 {
        return Err(Error::invalid("grid steps must divide 360° (azimuth) and 90° (elevation)"));
    }
    let (az_count, el_count) = (az_count.round() as usize, el_count.round() as usize);
    let up = Vector3::new(0.0, 0.0, 1.0);
    let mut poses = Vec::with_capacity(az_count * el_count);
    for ei in 1..=el_count {
        let el = (ei as f64 * el_step_deg).to_radians();
        for ai in 0..az_count {
            let az = (ai as f64 * az_step_deg).to_radians();
            let eye = Vector3::new(
                radius * el.cos() * az.cos(),
                radius * el.cos() * az.sin(),
                radius * el.sin(),
            );
            poses.push(look_at_pose(&eye, &Vector3::zeros(), &up)?);
        }
    }
    Ok(PoseGrid { azimuth_step_deg: az_step_deg, elevation_step_deg: el_step_deg, radius, poses })
}

/// In-plane roll angles from `min_deg` to `max_deg` inclusive.
pub fn inplane_rotation_angles(min_deg: f64, max_deg: f64, step_deg: f64) -> Result<Vec<f64>> {
    if step_deg <= 0.0 || max_deg < min_deg {
        return Err(Error::invalid("bad in-plane rotation range"));
    }
    let count = (max_deg - min_deg) / step_deg;
    if (count - count.round()).abs() > 1e-9 {
        return Err(Error::invalid("step must divide the in-plane range"));
    }
    Ok((0..=count.round() as usize).map(|i| min_deg + i as f64 * step_deg).collect())
}

/// Camera-frame roll variants of a pose: rotating the camera about its
/// optical axis by each angle. The 0° variant equals the input exactly.
pub fn inplane_pose_variants(
    pose: &RigidPose,
    min_deg: f64,
    max_deg: f64,
    step_deg: f64,
) -> Result<Vec<(f64, RigidPose)>> {
    let angles = inplane_rotation_angles(min_deg, max_deg, step_deg)?;
    Ok(angles
        .into_iter()
        .map(|deg| {
            if deg == 0.0 {
                return (deg, *pose);
            }
            let roll = euler_to_rotation(&EulerAngles::new(0.0, 0.0, deg.to_radians()));
            (
                deg,
                RigidPose { rotation: roll * pose.rotation, translation: roll * pose.translation },
            )
        })
        .collect())
}

/// Outcome of per-target view selection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SelectionStatus {
    Ok,
    /// No candidate observes any vertex visible in the target pose.
    NoCoverage,
}

/// Picks up to `k` views for one target pose by greedy visibility coverage
/// restricted to the vertices visible in that pose.
pub fn select_views_for_target(
    target_pose: &RigidPose,
    candidates: &[FrameRecord],
    mesh: &TriangleMesh,
    camera: &Camera,
    k: usize,
) -> (Vec<u64>, SelectionStatus) {
    let target_visible = visible_vertices(mesh, target_pose, camera);
    let mut eligible = vec![false; mesh.vertices.len()];
    for v in &target_visible {
        eligible[*v as usize] = true;
    }
    let selected = greedy_cover(candidates, &eligible, k);
    let status = if selected.is_empty() { SelectionStatus::NoCoverage } else { SelectionStatus::Ok };
    (selected, status)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn frame(id: u64, pose: RigidPose) -> FrameRecord {
        FrameRecord { id, pose, visible: Vec::new(), visibility_fraction: 0.0 }
    }

    fn frame_vis(id: u64, visible: Vec<u32>) -> FrameRecord {
        FrameRecord { id, pose: RigidPose::identity(), visible, visibility_fraction: 0.0 }
    }

    #[test]
    fn diversity_collapses_duplicate_poses() {
        let frames: Vec<FrameRecord> =
            (0..10).map(|i| frame(i, RigidPose::identity())).collect();
        let sel = diversity_sample(&frames, 300.0, 45.0, 16, 1);
        assert_eq!(sel.len(), 1);
    }

    #[test]
    fn diversity_keeps_frames_far_in_translation_only() {
        let a = frame(0, RigidPose::identity());
        let mut p = RigidPose::identity();
        p.translation.x = 0.4; // 400 mm, same rotation
        let b = frame(1, p);
        let sel = diversity_sample(&[a, b], 300.0, 45.0, 16, 7);
        assert_eq!(sel.len(), 2);
    }

    #[test]
    fn diversity_respects_cap_and_pairwise_constraint() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let frames: Vec<FrameRecord> = (0..100)
            .map(|i| {
                let pose = crate::geometry::perturb_pose(
                    &RigidPose::identity(),
                    1.0, // 2 m cube
                    std::f64::consts::PI,
                    rng.gen(),
                );
                frame(i, pose)
            })
            .collect();
        let sel = diversity_sample(&frames, 300.0, 45.0, 16, 3);
        assert!(sel.len() <= 16 && !sel.is_empty());
        // Exhaustive pairwise oracle.
        for i in 0..sel.len() {
            for j in (i + 1)..sel.len() {
                let a = frames.iter().find(|f| f.id == sel[i]).unwrap();
                let b = frames.iter().find(|f| f.id == sel[j]).unwrap();
                let (t, r) = pose_distance(&a.pose, &b.pose);
                assert!(t >= 300.0 || r >= 45.0, "pair ({},{}) too similar", sel[i], sel[j]);
            }
        }
        // Deterministic under the seed.
        assert_eq!(sel, diversity_sample(&frames, 300.0, 45.0, 16, 3));
    }

    #[test]
    fn greedy_single_frame() {
        let sel = greedy_visibility_sample(&[frame_vis(4, vec![0, 1, 2])], 10);
        assert_eq!(sel, vec![4]);
    }

    #[test]
    fn greedy_hand_computed_example() {
        // A sees 100 vertices, B overlaps A on 50 and adds 50 new ones, C is
        // a subset of A: marginal gains 100, 50, 0 → selection [A, B].
        let a = frame_vis(0, (1..=100).collect());
        let b = frame_vis(1, (51..=150).collect());
        let c = frame_vis(2, (60..=90).collect());
        let sel = greedy_visibility_sample(&[a, b, c], 200);
        assert_eq!(sel, vec![0, 1]);
    }

    #[test]
    fn greedy_coverage_strictly_increases() {
        let frames: Vec<FrameRecord> = (0..20)
            .map(|i| frame_vis(i, ((i * 7) as u32 % 40..(i * 7 + 15) as u32 % 41).collect()))
            .collect();
        let sel = greedy_visibility_sample(&frames, 50);
        let mut covered = std::collections::BTreeSet::new();
        let mut last = 0usize;
        for id in &sel {
            let f = frames.iter().find(|f| f.id == *id).unwrap();
            covered.extend(f.visible.iter().copied());
            assert!(covered.len() > last, "coverage must strictly increase");
            last = covered.len();
        }
    }

    #[test]
    fn greedy_matches_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let frames: Vec<FrameRecord> = (0..50)
            .map(|i| {
                let n = rng.gen_range(0..30);
                let mut vis: Vec<u32> = (0..n).map(|_| rng.gen_range(0..200u32)).collect();
                vis.sort_unstable();
                vis.dedup();
                frame_vis(i, vis)
            })
            .collect();
        let sel = greedy_visibility_sample(&frames, 200);

        // Independent re-implementation.
        let mut covered = vec![false; 200];
        let mut remaining: Vec<usize> = (0..frames.len()).collect();
        let mut oracle = Vec::new();
        loop {
            let gains: Vec<(usize, usize)> = remaining
                .iter()
                .map(|i| {
                    (
                        frames[*i].visible.iter().filter(|v| !covered[**v as usize]).count(),
                        *i,
                    )
                })
                .collect();
            let best = gains
                .iter()
                .filter(|(g, _)| *g > 0)
                .max_by(|(g1, i1), (g2, i2)| g1.cmp(g2).then(frames[*i2].id.cmp(&frames[*i1].id)));
            let Some((_, i)) = best else { break };
            oracle.push(frames[*i].id);
            for v in &frames[*i].visible {
                covered[*v as usize] = true;
            }
            remaining.retain(|j| j != i);
        }
        assert_eq!(sel, oracle);
    }

    #[test]
    fn hemisphere_default_grid_has_1296_poses() {
        let g = hemisphere_poses(5.0, 5.0, 0.7).unwrap();
        assert_eq!(g.poses.len(), 1296);
    }

    #[test]
    fn hemisphere_coarse_grid_count() {
        let g = hemisphere_poses(90.0, 45.0, 1.0).unwrap();
        assert_eq!(g.poses.len(), 8);
    }

    #[test]
    fn hemisphere_radius_and_validity() {
        let g = hemisphere_poses(30.0, 30.0, 0.55).unwrap();
        assert_eq!(g.poses.len(), 12 * 3);
        for p in &g.poses {
            p.check_so3().unwrap();
            assert_relative_eq!(p.camera_center().norm(), 0.55, epsilon = 1e-9);
            // Looking at the origin: it projects onto the optical axis.
            let o = p.transform_point(&Vector3::zeros());
            assert_relative_eq!(o.x, 0.0, epsilon = 1e-12);
            assert_relative_eq!(o.y, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn hemisphere_rejects_bad_input() {
        assert!(hemisphere_poses(5.0, 5.0, 0.0).is_err());
        assert!(hemisphere_poses(7.0, 5.0, 1.0).is_err());
    }

    #[test]
    fn inplane_default_angles() {
        let angles = inplane_rotation_angles(-45.0, 45.0, 15.0).unwrap();
        assert_eq!(angles, vec![-45.0, -30.0, -15.0, 0.0, 15.0, 30.0, 45.0]);
    }

    #[test]
    fn inplane_zero_variant_is_exact_input() {
        let pose = look_at_pose(
            &Vector3::new(0.2, 0.3, 0.4),
            &Vector3::zeros(),
            &Vector3::new(0.0, 0.0, 1.0),
        )
        .unwrap();
        let variants = inplane_pose_variants(&pose, -45.0, 45.0, 15.0).unwrap();
        assert_eq!(variants.len(), 7);
        let zero = variants.iter().find(|(a, _)| *a == 0.0).unwrap();
        assert_eq!(zero.1.rotation, pose.rotation);
        assert_eq!(zero.1.translation, pose.translation);
    }

    #[test]
    fn inplane_rotations_invert() {
        let pose = look_at_pose(
            &Vector3::new(-0.1, 0.5, 0.3),
            &Vector3::zeros(),
            &Vector3::new(0.0, 0.0, 1.0),
        )
        .unwrap();
        let plus = inplane_pose_variants(&pose, 15.0, 15.0, 15.0).unwrap()[0].1;
        let back = inplane_pose_variants(&plus, -15.0, -15.0, 15.0).unwrap()[0].1;
        assert!((back.rotation - pose.rotation).abs().max() < 1e-12);
        assert!((back.translation - pose.translation).abs().max() < 1e-12);
    }
}
