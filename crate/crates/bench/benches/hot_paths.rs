use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use groundpose::estimator::{estimate_pair, solve_lm, EstimatorConfig, LmSettings, ParamVector};
use groundpose::ipm::{plan_ipm, warp_to_ipm};
use groundpose::patch_grid::make_grid;
use groundpose::registration::crop_patch;
use groundpose::{poc_register, ImagePoint};
use groundpose_bench::{field, frames, intrinsics, truth};

fn registration(c: &mut Criterion) {
    let (prev, cur) = frames();
    let mut group = c.benchmark_group("poc_register");
    for size in [64usize, 128, 256] {
        let center = ImagePoint::new(400.0, 400.0);
        let a = crop_patch(&prev, center, size).unwrap();
        let b = crop_patch(&cur, center, size).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(size), &size, |bench, _| {
            bench.iter(|| poc_register(black_box(&a), black_box(&b)).unwrap())
        });
    }
    group.finish();
}

fn ipm(c: &mut Criterion) {
    let (prev, _) = frames();
    let k = intrinsics();
    let grid = make_grid(&k, 9, 11, 64.0).unwrap();
    let spec = plan_ipm(grid.points(), &truth().prev_pose(), &k, 2.0, 128).unwrap();
    c.bench_function("warp_to_ipm", |b| {
        b.iter(|| warp_to_ipm(black_box(&prev), &spec, &k))
    });
}

fn lm(c: &mut Criterion) {
    let f = field();
    let k = intrinsics();
    let all: Vec<usize> = (0..f.len()).collect();
    let init = ParamVector::initial(std::f64::consts::FRAC_PI_3, 700.0);
    c.bench_function("solve_lm", |b| {
        b.iter(|| solve_lm(black_box(&f), &all, &init, &k, &LmSettings::default()).unwrap())
    });
}

fn pipeline(c: &mut Criterion) {
    let (prev, cur) = frames();
    let k = intrinsics();
    let config = EstimatorConfig::default();
    let mut group = c.benchmark_group("pipeline");
    group.sample_size(10);
    group.bench_function("estimate_pair", |b| {
        b.iter(|| estimate_pair(&prev, &cur, &k, &config).unwrap())
    });
    group.finish();
}

criterion_group!(benches, registration, ipm, lm, pipeline);
criterion_main!(benches);
