use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use gars_bench::interior_mu;
use gars_core::functionals::{evaluate, jacobian_closed};
use gars_core::{CategoryScheme, GarsKind};

fn bench(c: &mut Criterion) {
    let scheme = CategoryScheme::default_for(3).unwrap();
    let kinds = [("borda", GarsKind::Borda), ("bt", GarsKind::BtProjection), ("rc", GarsKind::RankCentrality)];
    for k in [4, 10, 25] {
        let mu = interior_mu(k, 3, 1);
        let mut g = c.benchmark_group(format!("k{k}"));
        for (name, kind) in &kinds {
            g.bench_with_input(BenchmarkId::new("evaluate", name), kind, |b, kind| {
                b.iter(|| evaluate(kind, black_box(&mu), &scheme).unwrap())
            });
            g.bench_with_input(BenchmarkId::new("jacobian", name), kind, |b, kind| {
                b.iter(|| jacobian_closed(kind, black_box(&mu), &scheme).unwrap())
            });
        }
        g.finish();
    }
}

criterion_group!(benches, bench);
criterion_main!(benches);
