use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use stlearn::lasso::{lasso_solve, LassoProblem, SolverOptions};
use stlearn::numerics::{gaussian_mat, gaussian_vec, SeededRng};
use stlearn::par;

fn problems(count: usize, n: usize, d: usize) -> Vec<LassoProblem> {
    (0..count as u64)
        .map(|k| {
            let rng = SeededRng::new(k);
            let a = gaussian_mat(&rng.fork(1), n, d, 1.0).unwrap();
            let b = gaussian_vec(&rng.fork(2), n, 1.0).unwrap();
            let lambda = 0.1 * LassoProblem::new(a.clone(), b.clone(), 0.0).unwrap().lambda_max();
            LassoProblem::new(a, b, lambda).unwrap()
        })
        .collect()
}

fn solve(p: &LassoProblem) -> f64 {
    let sol = lasso_solve(p, SolverOptions::default()).unwrap();
    p.objective(&sol.x)
}

fn bench_sweeps(c: &mut Criterion) {
    let mut group = c.benchmark_group("lasso_sweep");
    group.sample_size(10);
    for &count in &[8usize, 32] {
        let ps = problems(count, 120, 60);
        group.bench_with_input(BenchmarkId::new("parallel", count), &ps, |b, ps| {
            b.iter(|| black_box(par::map(ps.iter().collect(), solve)))
        });
        group.bench_with_input(BenchmarkId::new("sequential", count), &ps, |b, ps| {
            b.iter(|| black_box(par::map_seq(ps.iter().collect(), solve)))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_sweeps);
criterion_main!(benches);
