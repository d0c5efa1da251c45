use criterion::{criterion_group, criterion_main, Criterion};
use gars_bench::tie_sample;
use gars_core::acquisition::{a_optimal, BudgetMode, BudgetSpec};
use gars_core::inference::{debiased_estimate_with, InferenceOptions};
use gars_core::nuisance::{fit_nuisances, NuisanceConfig};
use gars_core::{GarsKind, GarsSpec};

fn bench(c: &mut Criterion) {
    let (ds, mu, pi) = tie_sample(1000, 1);
    let spec = GarsSpec::new(GarsKind::Borda, ds.scheme().clone());
    let mut g = c.benchmark_group("estimation");
    g.sample_size(10);
    g.bench_function("fit_nuisances_n1000", |b| b.iter(|| fit_nuisances(&ds, &NuisanceConfig::default(), None).unwrap()));
    let opts = InferenceOptions::default();
    g.bench_function("debiased_borda_n1000", |b| b.iter(|| debiased_estimate_with(&ds, &mu, &pi, &spec, &opts).unwrap()));
    let budget = BudgetSpec::unit_costs(3, 1.0, 0.05, BudgetMode::Independent);
    g.bench_function("a_optimal_n1000", |b| b.iter(|| a_optimal(&mu, &budget, &spec, 1e-8).unwrap()));
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
