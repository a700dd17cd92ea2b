//! Sequential vs parallel execution of the data-parallel kernels.
//!
//! `cargo bench -p rgbt-core`; build with `--no-default-features` to time
//! the sequential fallback alone.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::Vector3;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rgbt_core::crossmodal::Metric;
use rgbt_core::evaluate::knn_rank;
use rgbt_core::geometry::{build_rectification_map, remap_bilinear_with, CameraModel, Distortion, RigidTransform};
use rgbt_core::registration::{lift_rgb, zbuffer_splat_with, Rig};
use rgbt_core::thermalproc::{bilateral_filter_with, clahe_with, BilateralParams, ClaheParams};
use rgbt_core::{DepthMap, Exec, Gray8, Rgb8};

const POLICIES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn image(w: usize, h: usize) -> Gray8 {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    Gray8::from_fn(w, h, |x, y| ((x + y) as u8).wrapping_add(rng.random_range(0..32)))
}

fn thermal_filters(c: &mut Criterion) {
    let img = image(640, 512);
    let mut g = c.benchmark_group("thermal");
    for (name, exec) in POLICIES {
        g.bench_with_input(BenchmarkId::new("clahe", name), &exec, |b, &e| {
            b.iter(|| clahe_with(&img, ClaheParams::default(), e).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("bilateral", name), &exec, |b, &e| {
            b.iter(|| bilateral_filter_with(&img, BilateralParams::default(), e).unwrap())
        });
    }
    g.finish();
}

fn rectify(c: &mut Criterion) {
    let src = CameraModel::new(400.0, 400.0, 319.5, 255.5, 640, 512, Distortion::Fisheye4([0.05, -0.01, 0.0, 0.0])).unwrap();
    let map = build_rectification_map(&src, &src.as_pinhole()).unwrap();
    let img = image(640, 512);
    let mut g = c.benchmark_group("rectify");
    for (name, exec) in POLICIES {
        g.bench_with_input(BenchmarkId::new("remap", name), &exec, |b, &e| b.iter(|| remap_bilinear_with(&img, &map, e).unwrap()));
    }
    g.finish();
}

fn splat(c: &mut Criterion) {
    let cam = CameraModel::pinhole(500.0, 500.0, 319.5, 239.5, 640, 480).unwrap();
    let rig = Rig {
        rgb: cam,
        thermal: CameraModel::pinhole(420.0, 420.0, 320.0, 240.0, 640, 480).unwrap(),
        rgb_to_thermal: RigidTransform::from_translation(Vector3::new(0.1, 0.02, 0.0)),
    };
    let rgb = Rgb8::from_fn(640, 480, |x, y| [x as u8, y as u8, (x ^ y) as u8]);
    let depth = DepthMap::from_fn(640, 480, |x, y| if (200..400).contains(&x) && y > 200 { 2.0 } else { 8.0 });
    let samples = lift_rgb(&depth, &rgb, &rig).unwrap();
    let mut g = c.benchmark_group("registration");
    for (name, exec) in POLICIES {
        g.bench_with_input(BenchmarkId::new("zbuffer_splat", name), &exec, |b, &e| {
            b.iter(|| zbuffer_splat_with(&samples, 640, 480, 0.01, e).unwrap())
        });
    }
    g.finish();
}

fn knn(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let db = Array2::from_shape_fn((5000, 256), |_| rng.random_range(-1.0..1.0));
    let q = Array2::from_shape_fn((200, 256), |_| rng.random_range(-1.0..1.0));
    let mut g = c.benchmark_group("retrieval");
    g.sample_size(10);
    for (name, exec) in POLICIES {
        g.bench_with_input(BenchmarkId::new("knn_rank", name), &exec, |b, &e| {
            b.iter(|| knn_rank(q.view(), db.view(), 25, Metric::Cosine, None, e).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, thermal_filters, rectify, splat, knn);
criterion_main!(benches);
