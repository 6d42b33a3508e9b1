//! Assignment-solver throughput on dense and tie-heavy cost matrices.

use criterion::{criterion_group, criterion_main, Criterion};

use mmcl_bench::random_costs;
use mmcl_core::solve_assignment;

fn bench_matcher(c: &mut Criterion) {
    let mut group = c.benchmark_group("assignment");
    for &n in &[10usize, 25, 50] {
        let dense = random_costs(n, n, false, 0x77 + n as u64);
        group.bench_function(format!("dense_{n}x{n}"), |b| {
            b.iter(|| solve_assignment(&dense).unwrap())
        });
        let tied = random_costs(n, n, true, 0x99 + n as u64);
        group.bench_function(format!("tied_{n}x{n}"), |b| {
            b.iter(|| solve_assignment(&tied).unwrap())
        });
    }
    // The training workload is rectangular: more queries than objects.
    let rect = random_costs(30, 6, false, 0xbb);
    group.bench_function("rect_30x6", |b| b.iter(|| solve_assignment(&rect).unwrap()));
    group.finish();
}

criterion_group!(benches, bench_matcher);
criterion_main!(benches);
