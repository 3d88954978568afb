use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use liesde::integrators::advance;
use liesde::lie::{dexp_inv_trunc, son_generators};
use liesde::model::{make_rigid_body_model, make_so3_test_model, rigid_body_default_y0, RIGID_BODY_DEFAULT_INERTIA};
use liesde::noise::{path_increments, BrownianTable, NoiseIncrement};
use liesde::{Parametrization, Scheme, SchemeConfig, SquareMatrix};

fn skew(a: f64, b: f64, c: f64) -> SquareMatrix {
    let g = son_generators(3).unwrap();
    let mut m = SquareMatrix::zeros(3);
    m.add_scaled(a, &g[0]);
    m.add_scaled(b, &g[1]);
    m.add_scaled(c, &g[2]);
    m
}

fn matrix_kernels(c: &mut Criterion) {
    let om = skew(0.3, -0.2, 0.1);
    let h = skew(1.0, 0.5, -0.7);
    c.bench_function("mat_exp 3x3", |b| b.iter(|| black_box(&om).exp()));
    c.bench_function("inverse 3x3", |b| {
        let m = &SquareMatrix::identity(3) - &om;
        b.iter(|| black_box(&m).inverse().unwrap())
    });
    let mut group = c.benchmark_group("dexp_inv");
    for q in [1usize, 4, 8] {
        group.bench_with_input(BenchmarkId::from_parameter(q), &q, |b, &q| {
            b.iter(|| dexp_inv_trunc(black_box(&om), black_box(&h), q).unwrap())
        });
    }
    group.finish();
}

fn one_step(c: &mut Criterion) {
    let model = make_so3_test_model();
    let q = SquareMatrix::identity(3);
    let inc = NoiseIncrement::from_normals(0.4, -0.3, 1.0 / 256.0);
    let mut group = c.benchmark_group("step so3-test");
    for scheme in [Scheme::Gem, Scheme::Git15, Scheme::Gsrk15, Scheme::FlatEm] {
        for param in [Parametrization::Exponential { q: 1 }, Parametrization::Cayley] {
            let cfg = SchemeConfig::new(scheme, param);
            group.bench_function(format!("{scheme} {param}"), |b| {
                b.iter(|| advance(&model, &cfg, 0.5, black_box(&q), black_box(&inc)).unwrap())
            });
        }
    }
    group.finish();

    let rigid = make_rigid_body_model(RIGID_BODY_DEFAULT_INERTIA, rigid_body_default_y0()).unwrap();
    let cfg = SchemeConfig::new(Scheme::Gem, Parametrization::Cayley);
    c.bench_function("step rigid-body gem cay", |b| {
        b.iter(|| advance(&rigid, &cfg, 0.0, black_box(&q), black_box(&inc)).unwrap())
    });
}

fn noise(c: &mut Criterion) {
    c.bench_function("path increments 1024", |b| {
        b.iter(|| path_increments(black_box(7), 3, 1.0 / 1024.0, 1024))
    });
    c.bench_function("table 64 paths x 1024, coarsen by 8", |b| {
        b.iter(|| {
            BrownianTable::build(7, 1.0 / 1024.0, 1024, 64)
                .unwrap()
                .coarsen(8)
                .unwrap()
        })
    });
}

criterion_group!(benches, matrix_kernels, one_step, noise);
criterion_main!(benches);
