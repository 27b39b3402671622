use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gridsmooth::datagen::{noise, sinusoid, NoiseFamily, NoiseSpec};
use gridsmooth::penalty::order_penalty;
use gridsmooth::selection::{default_alpha_grid, select_alpha};
use gridsmooth::stencils::{binomial_family, canonical_family};
use gridsmooth::Smoother;

fn noisy(d: usize) -> Vec<f64> {
    let eps = noise(d, &NoiseSpec::white(NoiseFamily::Gaussian, 0.2), 7).unwrap();
    sinusoid(d).iter().zip(&eps).map(|(f, e)| f + e).collect()
}

fn factorize_and_apply(c: &mut Criterion) {
    let fam = canonical_family(4).unwrap();
    let bin = binomial_family(4);
    let mut group = c.benchmark_group("smoother");
    for d in [50, 200, 1000, 5000] {
        let p = order_penalty(&fam, &bin, 4, 0.5, d).unwrap();
        let x = noisy(d);
        group.bench_with_input(BenchmarkId::new("factorize", d), &d, |b, _| {
            b.iter(|| Smoother::new(black_box(&p), 1.0).unwrap())
        });
        let s = Smoother::new(&p, 1.0).unwrap();
        group.bench_with_input(BenchmarkId::new("apply", d), &d, |b, _| {
            b.iter(|| s.apply(black_box(&x)).unwrap())
        });
    }
    group.finish();
}

fn gcv_selection(c: &mut Criterion) {
    let fam = canonical_family(4).unwrap();
    let bin = binomial_family(4);
    let grid = default_alpha_grid();
    let mut group = c.benchmark_group("gcv");
    group.sample_size(20);
    for d in [100, 1000] {
        let p = order_penalty(&fam, &bin, 2, 0.5, d).unwrap();
        let x = noisy(d);
        group.bench_with_input(BenchmarkId::new("select_alpha", d), &d, |b, _| {
            b.iter(|| select_alpha(black_box(&x), &p, &grid).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, factorize_and_apply, gcv_selection);
criterion_main!(benches);
