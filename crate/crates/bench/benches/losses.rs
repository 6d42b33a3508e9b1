//! Loss evaluation throughput on a mid-sized query matrix.

use criterion::{criterion_group, criterion_main, Criterion};

use mmcl_bench::random_queries;
use mmcl_core::{evaluate, LossConfig, LossKind};

fn bench_losses(c: &mut Criterion) {
    let (q, p) = random_queries(64, 8, 32, 0x10_55);
    let cfg = LossConfig::default();
    let mut group = c.benchmark_group("loss_eval_64q_8c_32d");
    for kind in LossKind::ALL {
        group.bench_function(kind.name(), |b| {
            b.iter(|| evaluate(kind, &q, &p, &cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_losses);
criterion_main!(benches);
