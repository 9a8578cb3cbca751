use std::collections::BTreeMap;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use mfgc_core::best_response::hjb_solve;
use mfgc_core::fokker_planck::{constant_joint_flow, fp_solve, static_flow, Control, FpGrid};
use mfgc_core::measures::{wasserstein_1d, wasserstein_product, ProductOptions};
use mfgc_core::model::builtin;
use mfgc_core::particles::{simulate_profile, Profile};
use mfgc_core::{best_response::FeedbackPolicy, DiscreteMeasure, JointMeasure};

fn paper_toy_grid() -> (mfgc_core::model::ModelSpec, FpGrid) {
    let model = builtin("paper_toy", &BTreeMap::new()).unwrap();
    let grid = FpGrid::new(-2.0, 2.0, 120, 0.025, 60).unwrap();
    (model, grid)
}

fn grid_solvers(c: &mut Criterion) {
    let (model, grid) = paper_toy_grid();
    let mesh = model.control_mesh(33).unwrap();
    let n = static_flow(&model, &grid).unwrap();
    let q = constant_joint_flow(&n, &mesh, 16);
    let policy = FeedbackPolicy::constant(&grid, 0.5, 0.0, 1.0).unwrap();
    c.bench_function("fp_solve feedback M=120 L=60", |b| {
        b.iter(|| fp_solve(&model, &n, &q, Control::Feedback(black_box(&policy)), &grid).unwrap())
    });
    c.bench_function("fp_solve relaxed M=120 L=60 K=33", |b| {
        b.iter(|| fp_solve(&model, &n, &q, Control::Relaxed(black_box(&q)), &grid).unwrap())
    });
    c.bench_function("hjb_solve M=120 L=60 K=33", |b| {
        b.iter(|| hjb_solve(&model, black_box(&n), &q, &grid, &mesh).unwrap())
    });
}

fn distances(c: &mut Criterion) {
    let xs: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 1000) as f64 / 500.0 - 1.0).collect();
    let ys: Vec<f64> = xs.iter().map(|x| 0.8 * x + 0.1).collect();
    let mu = DiscreteMeasure::empirical(xs.clone()).unwrap();
    let nu = DiscreteMeasure::empirical(ys.clone()).unwrap();
    c.bench_function("wasserstein_1d 1000 atoms", |b| {
        b.iter(|| wasserstein_1d(black_box(&mu), black_box(&nu), 2.0).unwrap())
    });
    let us: Vec<f64> = xs.iter().map(|x| x.abs()).collect();
    let small = 64;
    let a = JointMeasure::empirical(&xs[..small], &us[..small]).unwrap();
    let b_ = JointMeasure::empirical(&ys[..small], &us[small..2 * small]).unwrap();
    c.bench_function("wasserstein_product exact 64 atoms", |b| {
        b.iter(|| wasserstein_product(black_box(&a), black_box(&b_), 2.0, ProductOptions::default()).unwrap())
    });
}

fn particles(c: &mut Criterion) {
    let (model, grid) = paper_toy_grid();
    let policy = FeedbackPolicy::constant(&grid, 0.34375, 0.0, 1.0).unwrap();
    let mut group = c.benchmark_group("simulate_profile");
    for n in [16, 256] {
        group.bench_function(format!("N={n} L=60"), |b| {
            b.iter(|| simulate_profile(&model, &Profile::Symmetric(&policy), n, 1, black_box(0), &grid.time).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, grid_solvers, distances, particles);
criterion_main!(benches);
