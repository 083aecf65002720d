//! Compares the data-parallel sample map against its always-sequential twin
//! on a representative per-point workload: evaluating the cover 2-form of the
//! five-dimensional Darboux model and measuring its rank at each point. Run
//! with `cargo bench -p contactred-core`; disable the `parallel` feature to
//! see the fallback path through `map_points` itself.

use contactred_core::cover::CoverBundle;
use contactred_core::pointlin::{antisymmetric_rank, RANK_REL_TOL};
use contactred_core::precontact::darboux_model;
use contactred_core::sample::{map_points, map_points_seq, Sampler};
use criterion::{black_box, criterion_group, criterion_main, Criterion};

fn rank_at_samples(c: &mut Criterion) {
    let (_chart, field) = darboux_model(5, 2).unwrap();
    let bundle = CoverBundle::new(field, 2).unwrap();
    let sampler = Sampler::new(42);
    let points = sampler.points(bundle.total_chart(), 512).unwrap();
    let omega = bundle.omega().clone();

    let mut group = c.benchmark_group("rank-at-samples");
    group.bench_function("map_points", |b| {
        b.iter(|| {
            black_box(map_points(&points, |p| {
                let m = omega.matrix_at(p).unwrap();
                antisymmetric_rank(&m, RANK_REL_TOL).rank
            }))
        })
    });
    group.bench_function("map_points_seq", |b| {
        b.iter(|| {
            black_box(map_points_seq(&points, |p| {
                let m = omega.matrix_at(p).unwrap();
                antisymmetric_rank(&m, RANK_REL_TOL).rank
            }))
        })
    });
    group.finish();
}

criterion_group!(benches, rank_at_samples);
criterion_main!(benches);
