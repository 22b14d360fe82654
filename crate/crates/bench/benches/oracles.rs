use criterion::{black_box, criterion_group, criterion_main, Criterion};
use rdff::construct::{
    expand_representation, hypercube_lower_bound_instance, min_exception_free_size,
};
use rdff::stochastic::{gamma, q};
use rdff::streams::{gen_random_instance, InstanceParams};
use rdff::validate_instance;

fn thresholds(c: &mut Criterion) {
    c.bench_function("q", |b| {
        b.iter(|| q(black_box(0.01), black_box(123_456), 0.05).unwrap())
    });
    c.bench_function("gamma", |b| {
        b.iter(|| gamma(black_box(0.01), black_box(5_000), black_box(123_456), 0.05).unwrap())
    });
}

fn construction(c: &mut Criterion) {
    let p = InstanceParams {
        m: 4,
        d: 8,
        labels: 4,
        k: 3,
        s: 1,
        per_component: 4,
    };
    let instance = gen_random_instance(&p, 5).unwrap();
    c.bench_function("expand-representation", |b| {
        b.iter(|| expand_representation(black_box(&instance)).unwrap())
    });
    c.bench_function("validate-instance", |b| {
        b.iter(|| validate_instance(black_box(&instance)))
    });

    let cube = hypercube_lower_bound_instance(3).unwrap();
    let mut group = c.benchmark_group("min-size");
    group.sample_size(10);
    group.bench_function("hypercube-d3", |b| {
        b.iter(|| min_exception_free_size(&cube, 3, u64::MAX).unwrap())
    });
    group.finish();
}

criterion_group!(benches, thresholds, construction);
criterion_main!(benches);
