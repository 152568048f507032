use std::hint::black_box;

use bandlab::analysis::{l2_error, mirrored_spectrum};
use bandlab::linalg::pseudo_inverse;
use bandlab::sampling::{build_operator, reconstruct_uniform};
use bandlab_bench::{network, samples, target};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn sampling(c: &mut Criterion) {
    let f = target(1, 5);
    let mut g = c.benchmark_group("sampling");
    for n in [16, 64] {
        let set = samples(&f, n, false);
        g.bench_with_input(BenchmarkId::new("condition_number", n), &set, |b, set| {
            b.iter(|| build_operator(set.points.view(), 5).unwrap().condition_number().unwrap())
        });
        let op = build_operator(set.points.view(), 5).unwrap();
        g.bench_with_input(BenchmarkId::new("pseudo_inverse", n), &op, |b, op| {
            b.iter(|| pseudo_inverse(black_box(&op.matrix)).unwrap())
        });
    }
    let set = samples(&f, 64, true);
    g.bench_function("reconstruct_uniform/64", |b| {
        b.iter(|| reconstruct_uniform(black_box(&set.values), 1, 5).unwrap())
    });
    g.finish();
}

fn network_kernels(c: &mut Criterion) {
    let f = target(1, 5);
    let set = samples(&f, 64, true);
    let mut g = c.benchmark_group("network");
    for width in [256, 1000] {
        let net = network(width);
        g.bench_with_input(BenchmarkId::new("forward_batch", width), &net, |b, net| {
            b.iter(|| net.forward_batch(black_box(set.points.view())))
        });
        g.bench_with_input(BenchmarkId::new("grad", width), &net, |b, net| {
            b.iter(|| net.grad(black_box(set.points.view()), &set.values).unwrap())
        });
    }
    g.finish();
}

fn analysis_kernels(c: &mut Criterion) {
    let f = target(1, 5);
    let net = network(256);
    let mut g = c.benchmark_group("analysis");
    g.sample_size(10);
    g.bench_function("l2_error/8192", |b| b.iter(|| l2_error(&net, &f, 8192).unwrap()));
    g.bench_function("mirrored_spectrum/512", |b| {
        b.iter(|| mirrored_spectrum(&net, 512, 16384, 5).unwrap())
    });
    g.finish();
}

criterion_group!(benches, sampling, network_kernels, analysis_kernels);
criterion_main!(benches);
