use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mpcc::bench::builtin_entry;
use mpcc::disjunctive::{solve_disjunctive, DisjMode};
use mpcc::nlp::SolverOptions;
use mpcc::regularize::{disjunctive, membership_agreement, DEFAULT_BETA};
use mpcc::Execution;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn membership(c: &mut Criterion) {
    let entry = builtin_entry("ex9_2_2").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let points: Vec<Vec<f64>> = (0..10_000)
        .map(|_| (0..entry.problem.n).map(|_| rng.gen_range(-1.0..21.0)).collect())
        .collect();
    let mut group = c.benchmark_group("membership_agreement");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| membership_agreement(&entry.problem, 0.1, DEFAULT_BETA, &points, 1e-12, exec).unwrap())
        });
    }
    group.finish();
}

fn enumeration(c: &mut Criterion) {
    let entry = builtin_entry("ex9_2_2").unwrap();
    let disj = disjunctive(&entry.problem, 0.01).unwrap();
    let opts = SolverOptions::default();
    let mut group = c.benchmark_group("branch_enumeration");
    group.sample_size(20);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| solve_disjunctive(&disj, &entry.problem.start, &opts, DisjMode::Enumerate, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, membership, enumeration);
criterion_main!(benches);
