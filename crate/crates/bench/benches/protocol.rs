use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use pdte_bench::preset_fixture;
use pdte_core::pdte::{run_pdte_encoded, Optimization};
use pdte_core::sos::Backend;

fn evaluation(c: &mut Criterion) {
    let mut g = c.benchmark_group("pdte_wine");
    g.sample_size(10);
    for backend in [Backend::Ot, Backend::Prf, Backend::He] {
        for opt in [Optimization::None, Optimization::Cluster(2)] {
            let f = preset_fixture("wine", backend, opt, 7);
            g.bench_function(BenchmarkId::new(backend.to_string(), opt.to_string()), |b| {
                b.iter(|| run_pdte_encoded(&f.cfg, &f.tree, &f.x, 1, 7).unwrap())
            });
        }
    }
    g.finish();
}

criterion_group!(benches, evaluation);
criterion_main!(benches);
