//! Pose-error metrics (ADD/ADI with the 10%-diameter correctness threshold),
//! masked image-quality metrics, and the pose-error sensitivity sweep.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::featuremap::{FeatureMap, Mask};
use crate::geometry::{Camera, RigidPose, TriangleMesh};
use crate::par::par_map_indices;
use crate::refine::{render_target, PipelineConfig};
use crate::scenegen::{make_primitive, make_trial_set, mix_seed, trial_target_pose, PrimitiveKind};

/// Mean distance (millimeters) between corresponding vertices under the two
/// poses.
pub fn add_score(mesh: &TriangleMesh, pose_gt: &RigidPose, pose_est: &RigidPose) -> f64 {
    let total: f64 = mesh
        .vertices
        .iter()
        .map(|v| (pose_gt.transform_point(v) - pose_est.transform_point(v)).norm())
        .sum();
    total / mesh.vertices.len() as f64 * 1000.0
}

/// Mean distance (millimeters) from each ground-truth-transformed vertex to
/// its nearest estimated-transformed vertex; the symmetric-object variant.
/// Exact all-pairs search.
pub fn adi_score(mesh: &TriangleMesh, pose_gt: &RigidPose, pose_est: &RigidPose) -> f64 {
    let gt: Vec<_> = mesh.vertices.iter().map(|v| pose_gt.transform_point(v)).collect();
    let est: Vec<_> = mesh.vertices.iter().map(|v| pose_est.transform_point(v)).collect();
    let total: f64 = gt
        .iter()
        .map(|g| est.iter().map(|e| (g - e).norm_squared()).fold(f64::INFINITY, f64::min).sqrt())
        .sum();
    total / gt.len() as f64 * 1000.0
}

/// Strict 10%-of-diameter rule: correct iff `score < fraction · diameter`.
pub fn pose_correct(score_mm: f64, diameter_mm: f64, fraction: f64) -> bool {
    score_mm < fraction * diameter_mm
}

/// Full pose evaluation against one ground-truth pose.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PoseEvalResult {
    pub add_mm: f64,
    pub adi_mm: f64,
    pub correct: bool,
    pub diameter_mm: f64,
    pub threshold_fraction: f64,
    /// True when correctness used the ADI score (symmetric objects).
    pub used_adi: bool,
}

impl PoseEvalResult {
    pub fn evaluate(
        mesh: &TriangleMesh,
        pose_gt: &RigidPose,
        pose_est: &RigidPose,
        fraction: f64,
        use_adi: bool,
    ) -> Self {
        let add_mm = add_score(mesh, pose_gt, pose_est);
        let adi_mm = adi_score(mesh, pose_gt, pose_est);
        let diameter_mm = mesh.diameter * 1000.0;
        let score = if use_adi { adi_mm } else { add_mm };
        PoseEvalResult {
            add_mm,
            adi_mm,
            correct: pose_correct(score, diameter_mm, fraction),
            diameter_mm,
            threshold_fraction: fraction,
            used_adi: use_adi,
        }
    }
}

/// Masked image-quality summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ImageMetrics {
    /// Mean absolute difference per pixel-channel.
    pub l1: f64,
    /// Peak signal-to-noise ratio in dB, capped at 99.
    pub psnr: f64,
    /// Mean SSIM over 8×8 tiles intersecting the mask.
    pub ssim: f64,
}

/// Computes masked L1 / PSNR / SSIM between two color images.
pub fn image_metrics(pred: &FeatureMap, gt: &FeatureMap, mask: &Mask) -> Result<ImageMetrics> {
    pred.expect_shape(gt, "image_metrics")?;
    if pred.height != mask.height || pred.width != mask.width {
        return Err(Error::invalid("image_metrics: mask dimensions differ"));
    }
    let n = mask.count();
    if n == 0 {
        return Err(Error::EmptyRegion("image_metrics mask".into()));
    }
    let c = pred.channels;
    let mut abs = 0.0;
    let mut sq = 0.0;
    for p in 0..pred.height * pred.width {
        if !mask.data[p] {
            continue;
        }
        for ch in 0..c {
            let d = pred.values[p * c + ch] - gt.values[p * c + ch];
            abs += d.abs();
            sq += d * d;
        }
    }
    let denom = (n * c) as f64;
    let l1 = abs / denom;
    let mse = sq / denom;
    let psnr = if mse <= 0.0 { 99.0 } else { (10.0 * (1.0 / mse).log10()).min(99.0) };
    Ok(ImageMetrics { l1, psnr, ssim: masked_ssim(pred, gt, mask) })
}

/// SSIM over non-overlapping 8×8 tiles, using the in-mask pixels of each
/// tile; tiles with fewer than 4 masked pixels are skipped.
fn masked_ssim(pred: &FeatureMap, gt: &FeatureMap, mask: &Mask) -> f64 {
    const C1: f64 = 0.01 * 0.01;
    const C2: f64 = 0.03 * 0.03;
    let c = pred.channels;
    let (h, w) = (pred.height, pred.width);
    let mut total = 0.0;
    let mut tiles = 0usize;
    for ty in (0..h).step_by(8) {
        for tx in (0..w).step_by(8) {
            let mut xs: Vec<f64> = Vec::with_capacity(64);
            let mut ys: Vec<f64> = Vec::with_capacity(64);
            for y in ty..(ty + 8).min(h) {
                for x in tx..(tx + 8).min(w) {
                    if !mask.get(y, x) {
                        continue;
                    }
                    let p = y * w + x;
                    // Luma-equivalent mean over channels.
                    let mut a = 0.0;
                    let mut b = 0.0;
                    for ch in 0..c {
                        a += pred.values[p * c + ch];
                        b += gt.values[p * c + ch];
                    }
                    xs.push(a / c as f64);
                    ys.push(b / c as f64);
                }
            }
            if xs.len() < 4 {
                continue;
            }
            let n = xs.len() as f64;
            let mx = xs.iter().sum::<f64>() / n;
            let my = ys.iter().sum::<f64>() / n;
            let vx = xs.iter().map(|v| (v - mx) * (v - mx)).sum::<f64>() / n;
            let vy = ys.iter().map(|v| (v - my) * (v - my)).sum::<f64>() / n;
            let cov = xs.iter().zip(&ys).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / n;
            total += ((2.0 * mx * my + C1) * (2.0 * cov + C2))
                / ((mx * mx + my * my + C1) * (vx + vy + C2));
            tiles += 1;
        }
    }
    if tiles == 0 {
        1.0
    } else {
        total / tiles as f64
    }
}

/// One pose-error magnitude in the sweep grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorLevel {
    pub trans_m: f64,
    pub rot_rad: f64,
}

/// Sensitivity sweep configuration. Defaults reproduce the standard shape:
/// box and cylinder, 5 coupled error levels up to ±0.01 m / ±0.05 rad,
/// 50 trials of 5 source views per cell.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub shapes: Vec<PrimitiveKind>,
    pub levels: Vec<ErrorLevel>,
    pub trials: usize,
    pub n_sources: usize,
    pub resolution: usize,
    pub pipeline: PipelineConfig,
    /// Also run the refined arm; when false only the unrefined render is
    /// evaluated and the refined columns repeat it.
    pub with_refinement: bool,
    pub base_seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            shapes: vec![PrimitiveKind::default_box(), PrimitiveKind::default_cylinder()],
            levels: coupled_levels(5, 0.01, 0.05),
            trials: 50,
            n_sources: 5,
            resolution: 128,
            pipeline: PipelineConfig::default(),
            with_refinement: true,
            base_seed: 0,
        }
    }
}

/// `count` levels linearly spaced from zero error to the maxima, coupled in
/// translation and rotation.
pub fn coupled_levels(count: usize, trans_max_m: f64, rot_max_rad: f64) -> Vec<ErrorLevel> {
    (0..count)
        .map(|i| {
            let t = if count > 1 { i as f64 / (count - 1) as f64 } else { 1.0 };
            ErrorLevel { trans_m: t * trans_max_m, rot_rad: t * rot_max_rad }
        })
        .collect()
}

/// Full grid of translation × rotation levels.
pub fn grid_levels(
    t_count: usize,
    trans_max_m: f64,
    r_count: usize,
    rot_max_rad: f64,
) -> Vec<ErrorLevel> {
    let mut out = Vec::with_capacity(t_count * r_count);
    for ti in 0..t_count {
        let t = if t_count > 1 { ti as f64 / (t_count - 1) as f64 } else { 1.0 };
        for ri in 0..r_count {
            let r = if r_count > 1 { ri as f64 / (r_count - 1) as f64 } else { 1.0 };
            out.push(ErrorLevel { trans_m: t * trans_max_m, rot_rad: r * rot_max_rad });
        }
    }
    out
}

/// Per-trial outcome of one sweep cell.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TrialOutcome {
    pub seed: u64,
    pub refined: ImageMetrics,
    pub unrefined: ImageMetrics,
}

/// One (shape, error-level) cell.
#[derive(Debug, Clone, Serialize)]
pub struct SweepCell {
    pub shape: String,
    pub trans_err_m: f64,
    pub rot_err_rad: f64,
    pub trials: Vec<TrialOutcome>,
}

impl SweepCell {
    pub fn mean_refined_l1(&self) -> f64 {
        mean(self.trials.iter().map(|t| t.refined.l1))
    }

    pub fn mean_unrefined_l1(&self) -> f64 {
        mean(self.trials.iter().map(|t| t.unrefined.l1))
    }

    pub fn std_refined_l1(&self) -> f64 {
        std_dev(self.trials.iter().map(|t| t.refined.l1))
    }

    pub fn std_unrefined_l1(&self) -> f64 {
        std_dev(self.trials.iter().map(|t| t.unrefined.l1))
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

fn std_dev(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    if v.len() < 2 {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

/// Sensitivity-sweep report: per cell, masked image metrics of the render
/// against ground truth, with and without pose refinement.
#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub cells: Vec<SweepCell>,
    pub trials_per_cell: usize,
    pub base_seed: u64,
}

impl SweepReport {
    /// CSV rows: one line per (shape, level), masked-L1 summary columns.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "shape,trans_err_m,rot_err_rad,metric,refined_mean,refined_std,unrefined_mean,unrefined_std,n\n",
        );
        for cell in &self.cells {
            out.push_str(&format!(
                "{},{},{},l1,{:.9},{:.9},{:.9},{:.9},{}\n",
                cell.shape,
                cell.trans_err_m,
                cell.rot_err_rad,
                cell.mean_refined_l1(),
                cell.std_refined_l1(),
                cell.mean_unrefined_l1(),
                cell.std_unrefined_l1(),
                cell.trials.len(),
            ));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Runs the sweep: for every shape and error level, `trials` seeded trial
/// sets are rendered with and without refinement and scored against the
/// ground-truth target image over its mask. Trials run in parallel;
/// results are deterministic in `base_seed` for any worker count.
pub fn sensitivity_sweep(config: &SweepConfig) -> Result<SweepReport> {
    if config.levels.is_empty() {
        return Err(Error::invalid("sweep needs at least one error level"));
    }
    if config.trials == 0 {
        return Err(Error::invalid("sweep needs at least one trial"));
    }
    let camera = Camera::default_for_resolution(config.resolution, config.resolution);
    let mut cells = Vec::new();
    for (si, shape) in config.shapes.iter().enumerate() {
        let mesh = make_primitive(*shape)?;
        for (li, level) in config.levels.iter().enumerate() {
            let outcomes: Vec<Result<TrialOutcome>> = par_map_indices(config.trials, |trial| {
                let seed = mix_seed(
                    config.base_seed,
                    (si as u64) << 40 | (li as u64) << 20 | trial as u64,
                );
                run_trial(*shape, &mesh, &camera, config, level, seed)
            });
            let trials: Vec<TrialOutcome> =
                outcomes.into_iter().collect::<Result<Vec<_>>>()?;
            cells.push(SweepCell {
                shape: shape.name().to_string(),
                trans_err_m: level.trans_m,
                rot_err_rad: level.rot_rad,
                trials,
            });
        }
    }
    Ok(SweepReport { cells, trials_per_cell: config.trials, base_seed: config.base_seed })
}

fn run_trial(
    shape: PrimitiveKind,
    mesh: &TriangleMesh,
    camera: &Camera,
    config: &SweepConfig,
    level: &ErrorLevel,
    seed: u64,
) -> Result<TrialOutcome> {
    let target_pose = trial_target_pose(mesh.diameter, seed, 0)?;
    let trial = make_trial_set(
        shape,
        &target_pose,
        camera,
        config.n_sources,
        level.trans_m,
        level.rot_rad,
        seed,
    )?;
    let views = trial.noisy_views()?;

    let unrefined_cfg = PipelineConfig { refine: false, ..config.pipeline };
    let unrefined_out = render_target(&views, &trial.mesh, camera, &trial.target_pose, &unrefined_cfg)?;
    let unrefined = image_metrics(&unrefined_out.color, &trial.target_image, &trial.target_mask)?;

    let refined = if config.with_refinement {
        let refined_cfg = PipelineConfig { refine: true, ..config.pipeline };
        let refined_out = render_target(&views, &trial.mesh, camera, &trial.target_pose, &refined_cfg)?;
        image_metrics(&refined_out.color, &trial.target_image, &trial.target_mask)?
    } else {
        unrefined
    };

    Ok(TrialOutcome { seed, refined, unrefined })
}

/// Spearman rank correlation of two equal-length samples, with average ranks
/// for ties.
pub fn spearman_rho(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let rx = ranks(xs);
    let ry = ranks(ys);
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx.sqrt() * vy.sqrt())
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|a, b| values[*a].total_cmp(&values[*b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            out[order[k]] = rank;
        }
        i = j + 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::perturb_pose;
    use crate::scenegen::icosphere;
    use nalgebra::{Matrix3, Vector3};

    fn test_mesh() -> TriangleMesh {
        icosphere(0.05, 1).unwrap()
    }

    #[test]
    fn add_zero_for_identical_poses() {
        let m = test_mesh();
        let p = RigidPose::identity();
        assert_eq!(add_score(&m, &p, &p), 0.0);
        assert_eq!(adi_score(&m, &p, &p), 0.0);
    }

    #[test]
    fn add_pure_translation_is_exact() {
        let m = test_mesh();
        let gt = RigidPose::identity();
        let est = RigidPose {
            rotation: Matrix3::identity(),
            translation: Vector3::new(0.01, 0.0, 0.0),
        };
        assert!((add_score(&m, &gt, &est) - 10.0).abs() < 1e-9);
    }

    #[test]
    fn add_matches_brute_force_oracle() {
        let m = test_mesh();
        for seed in 0..100u64 {
            let gt = perturb_pose(&RigidPose::identity(), 0.2, 1.0, seed);
            let est = perturb_pose(&gt, 0.02, 0.1, seed + 1000);
            // Plain re-implementation.
            let mut total = 0.0;
            for v in &m.vertices {
                let a = gt.rotation * v + gt.translation;
                let b = est.rotation * v + est.translation;
                total += ((a.x - b.x).powi(2) + (a.y - b.y).powi(2) + (a.z - b.z).powi(2)).sqrt();
            }
            let oracle = total / m.vertices.len() as f64 * 1000.0;
            assert!((add_score(&m, &gt, &est) - oracle).abs() < 1e-9);
            assert!(adi_score(&m, &gt, &est) <= add_score(&m, &gt, &est) + 1e-9);
        }
    }

    #[test]
    fn adi_forgives_cylinder_tessellation_rotation() {
        let m = make_primitive(PrimitiveKind::Cylinder { radius: 0.04, height: 0.14, segments: 36 })
            .unwrap();
        let gt = RigidPose::identity();
        // One tessellation step about the symmetry axis.
        let est = RigidPose {
            rotation: crate::geometry::euler_to_rotation(&crate::geometry::EulerAngles::new(
                0.0,
                0.0,
                10f64.to_radians(),
            )),
            translation: Vector3::zeros(),
        };
        let adi = adi_score(&m, &gt, &est);
        let add = add_score(&m, &gt, &est);
        assert!(adi < 0.01 * m.diameter * 1000.0, "adi {adi} mm");
        assert!(add > adi);
    }

    #[test]
    fn correctness_threshold_is_strict() {
        assert!(pose_correct(0.0, 100.0, 0.1));
        assert!(!pose_correct(10.0, 100.0, 0.1));
        assert!(pose_correct(10.0 - 1e-12, 100.0, 0.1));
        assert!(!pose_correct(5.0, 100.0, 0.0));
    }

    #[test]
    fn add_adi_invariant_under_common_rigid_transform() {
        let m = test_mesh();
        let gt = perturb_pose(&RigidPose::identity(), 0.1, 0.5, 3);
        let est = perturb_pose(&gt, 0.01, 0.05, 4);
        let extra = perturb_pose(&RigidPose::identity(), 0.3, 1.5, 5);
        let compose = |p: &RigidPose| RigidPose {
            rotation: extra.rotation * p.rotation,
            translation: extra.rotation * p.translation + extra.translation,
        };
        let (gt2, est2) = (compose(&gt), compose(&est));
        assert!((add_score(&m, &gt, &est) - add_score(&m, &gt2, &est2)).abs() < 1e-9);
        assert!((adi_score(&m, &gt, &est) - adi_score(&m, &gt2, &est2)).abs() < 1e-9);
    }

    #[test]
    fn image_metrics_examples() {
        let mut gt = FeatureMap::zeros(16, 16, 3);
        for (i, v) in gt.values.iter_mut().enumerate() {
            *v = ((i * 13) % 97) as f64 / 97.0 * 0.8;
        }
        let mask = Mask::filled(16, 16, true);
        let same = image_metrics(&gt, &gt, &mask).unwrap();
        assert_eq!(same.l1, 0.0);
        assert_eq!(same.psnr, 99.0);
        assert!((same.ssim - 1.0).abs() < 1e-12);

        let mut pred = gt.clone();
        for v in &mut pred.values {
            *v += 0.1;
        }
        let off = image_metrics(&pred, &gt, &mask).unwrap();
        assert!((off.l1 - 0.1).abs() < 1e-12);

        // Direct-summation oracle on random images.
        let mut rng_v = 0u64;
        let mut pred2 = gt.clone();
        for v in &mut pred2.values {
            rng_v = rng_v.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            *v = (rng_v >> 11) as f64 / (1u64 << 53) as f64;
        }
        let mut abs = 0.0;
        for (a, b) in pred2.values.iter().zip(&gt.values) {
            abs += (a - b).abs();
        }
        let oracle = abs / pred2.values.len() as f64;
        let got = image_metrics(&pred2, &gt, &mask).unwrap();
        assert!((got.l1 - oracle).abs() < 1e-12);
    }

    #[test]
    fn image_metrics_rejects_empty_mask() {
        let img = FeatureMap::zeros(4, 4, 3);
        assert!(image_metrics(&img, &img, &Mask::filled(4, 4, false)).is_err());
    }

    #[test]
    fn spearman_basics() {
        assert!((spearman_rho(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-12);
        assert!((spearman_rho(&[1.0, 2.0, 3.0], &[30.0, 20.0, 10.0]) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn level_builders() {
        let l = coupled_levels(5, 0.01, 0.05);
        assert_eq!(l.len(), 5);
        assert_eq!(l[0], ErrorLevel { trans_m: 0.0, rot_rad: 0.0 });
        assert_eq!(l[4], ErrorLevel { trans_m: 0.01, rot_rad: 0.05 });
        assert_eq!(grid_levels(5, 0.01, 5, 0.05).len(), 25);
    }

    #[test]
    fn sweep_zero_level_has_equal_arms_and_is_deterministic() {
        let config = SweepConfig {
            shapes: vec![PrimitiveKind::default_box()],
            levels: vec![ErrorLevel { trans_m: 0.0, rot_rad: 0.0 }],
            trials: 2,
            n_sources: 3,
            resolution: 64,
            with_refinement: true,
            base_seed: 7,
            ..SweepConfig::default()
        };
        let report = sensitivity_sweep(&config).unwrap();
        assert_eq!(report.cells.len(), 1);
        for t in &report.cells[0].trials {
            assert!((t.refined.l1 - t.unrefined.l1).abs() < 1e-6);
        }
        let again = sensitivity_sweep(&config).unwrap();
        assert_eq!(report.to_csv(), again.to_csv());
    }
}
