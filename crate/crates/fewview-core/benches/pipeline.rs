//! Benchmarks of the data-parallel pipeline stages against single-threaded
//! execution.
//!
//! With the default `parallel` feature each group compares a 1-thread rayon
//! pool to a full-size pool; compiled with `--no-default-features` the same
//! entry points run the plain sequential path.

use criterion::{criterion_group, criterion_main, Criterion};

use fewview_core::geometry::Camera;
use fewview_core::metrics::{sensitivity_sweep, ErrorLevel, SweepConfig};
use fewview_core::raster::rasterize;
use fewview_core::refine::{render_target, PipelineConfig, RefineConfig};
use fewview_core::scenegen::{make_primitive, make_trial_set, trial_target_pose, PrimitiveKind};

const RES: usize = 96;

fn bench_rasterize(c: &mut Criterion) {
    let mesh = make_primitive(PrimitiveKind::default_cylinder()).unwrap();
    let camera = Camera::default_for_resolution(RES, RES);
    let pose = trial_target_pose(mesh.diameter, 1, 0).unwrap();
    c.bench_function("rasterize_cylinder", |b| {
        b.iter(|| std::hint::black_box(rasterize(&mesh, &pose, &camera)))
    });
}

fn render_once(refine: bool) {
    let camera = Camera::default_for_resolution(RES, RES);
    let kind = PrimitiveKind::default_box();
    let target = trial_target_pose(0.27, 11, 0).unwrap();
    let trial = make_trial_set(kind, &target, &camera, 5, 0.008, 0.04, 11).unwrap();
    let views = trial.noisy_views().unwrap();
    let cfg = PipelineConfig {
        refine,
        refine_cfg: RefineConfig { max_iters: 10, ..RefineConfig::default() },
        ..PipelineConfig::default()
    };
    let out = render_target(&views, &trial.mesh, &camera, &trial.target_pose, &cfg).unwrap();
    std::hint::black_box(out);
}

fn sweep_once() {
    let config = SweepConfig {
        shapes: vec![PrimitiveKind::default_box()],
        levels: vec![ErrorLevel { trans_m: 0.005, rot_rad: 0.02 }],
        trials: 4,
        n_sources: 4,
        resolution: 64,
        pipeline: PipelineConfig {
            refine_cfg: RefineConfig { max_iters: 5, ..RefineConfig::default() },
            ..PipelineConfig::default()
        },
        with_refinement: true,
        base_seed: 2,
    };
    std::hint::black_box(sensitivity_sweep(&config).unwrap());
}

#[cfg(feature = "parallel")]
fn with_pool<F: FnOnce() + Send>(threads: usize, f: F) {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("pool")
        .install(f);
}

fn bench_render_target(c: &mut Criterion) {
    let mut group = c.benchmark_group("render_target_fuse_refine");
    group.sample_size(10);
    #[cfg(feature = "parallel")]
    {
        group.bench_function("single_thread", |b| b.iter(|| with_pool(1, || render_once(true))));
        group.bench_function("parallel", |b| b.iter(|| render_once(true)));
    }
    #[cfg(not(feature = "parallel"))]
    group.bench_function("sequential", |b| b.iter(|| render_once(true)));
    group.finish();
}

fn bench_sweep_cell(c: &mut Criterion) {
    let mut group = c.benchmark_group("sweep_cell");
    group.sample_size(10);
    #[cfg(feature = "parallel")]
    {
        group.bench_function("single_thread", |b| b.iter(|| with_pool(1, sweep_once)));
        group.bench_function("parallel", |b| b.iter(sweep_once));
    }
    #[cfg(not(feature = "parallel"))]
    group.bench_function("sequential", |b| b.iter(sweep_once));
    group.finish();
}

criterion_group!(benches, bench_rasterize, bench_render_target, bench_sweep_cell);
criterion_main!(benches);
