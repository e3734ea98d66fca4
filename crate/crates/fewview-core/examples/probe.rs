use fewview_core::geometry::Camera;
use fewview_core::metrics::image_metrics;
use fewview_core::refine::{render_target, PipelineConfig};
use fewview_core::scenegen::{make_trial_set, make_primitive, trial_target_pose, PrimitiveKind};

fn main() {
    let camera = Camera::default_for_resolution(128, 128);
    for kind in [PrimitiveKind::default_box(), PrimitiveKind::default_cylinder()] {
        let mesh = make_primitive(kind).unwrap();
        for temp in [0.05f64, 0.02, 0.01, 0.005] {
            let mut wins = 0usize;
            let (mut s_floor, mut s_ref, mut s_unref) = (0.0f64, 0.0f64, 0.0f64);
            let n = 12u64;
            for trial in 0..n {
                let seed = 55000 + trial * 3;
                let target = trial_target_pose(mesh.diameter, seed, 0).unwrap();
                let t = make_trial_set(kind, &target, &camera, 5, 0.01, 0.05, seed).unwrap();
                let views = t.noisy_views().unwrap();
                let exact = t.exact_views().unwrap();
                let mut no_ref = PipelineConfig { refine: false, ..Default::default() };
                no_ref.temperature = temp;
                let mut with_ref = PipelineConfig::default();
                with_ref.temperature = temp;
                let floor_out = render_target(&exact, &t.mesh, &camera, &t.target_pose, &no_ref).unwrap();
                let unref_out = render_target(&views, &t.mesh, &camera, &t.target_pose, &no_ref).unwrap();
                let ref_out = render_target(&views, &t.mesh, &camera, &t.target_pose, &with_ref).unwrap();
                let mf = image_metrics(&floor_out.color, &t.target_image, &t.target_mask).unwrap();
                let mu = image_metrics(&unref_out.color, &t.target_image, &t.target_mask).unwrap();
                let mr = image_metrics(&ref_out.color, &t.target_image, &t.target_mask).unwrap();
                if mr.l1 < mu.l1 { wins += 1; }
                s_floor += mf.l1; s_ref += mr.l1; s_unref += mu.l1;
            }
            println!("{} temp={:.3}: floor={:.5} refined={:.5} unrefined={:.5} ratio={:.3} wins={}/{}",
                kind.name(), temp, s_floor/n as f64, s_ref/n as f64, s_unref/n as f64, s_ref/s_unref, wins, n);
        }
    }
}
