use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use shedsim::sweep::{linspace_step, rationed_shedding, sweep_ens_vs_rationing_with, sweep_peak_shave_vs_storage_with, SweepOptions};
use shedsim::{bundled_fixture, dispatch_ens_offset, dispatch_peak_shave, Energy, Execution, StorageSpec};

fn modes() -> Vec<(&'static str, Execution)> {
    let mut m = vec![("sequential", Execution::Sequential)];
    #[cfg(feature = "parallel")]
    m.push(("parallel", Execution::Parallel));
    m
}

fn sweeps(c: &mut Criterion) {
    let p = bundled_fixture();
    let rho = linspace_step(0.0, 0.49, 0.01);
    let storage: Vec<StorageSpec> = (0..50).map(|k| StorageSpec::new(Energy::from_gwh(k as f64))).collect();
    let mut g = c.benchmark_group("sweep_50x50");
    for (name, execution) in modes() {
        let opts = SweepOptions { execution, ..SweepOptions::default() };
        g.bench_with_input(BenchmarkId::new("peak_shave", name), &opts, |b, o| {
            b.iter(|| sweep_peak_shave_vs_storage_with(&p, &rho, &storage, o).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("ens", name), &opts, |b, o| {
            b.iter(|| sweep_ens_vs_rationing_with(&p, &rho, &storage, o).unwrap())
        });
    }
    g.finish();
}

fn dispatch(c: &mut Criterion) {
    let s = rationed_shedding(&bundled_fixture(), 0.0).unwrap();
    let spec = StorageSpec::new(Energy::from_gwh(10.0));
    c.bench_function("dispatch/peak_shave", |b| b.iter(|| dispatch_peak_shave(&s, &spec).unwrap()));
    c.bench_function("dispatch/ens_offset", |b| b.iter(|| dispatch_ens_offset(&s, &spec).unwrap()));
}

criterion_group!(benches, sweeps, dispatch);
criterion_main!(benches);
