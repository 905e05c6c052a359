use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dkg_norms::agent::Backend;
use dkg_norms::corpus::{bundled_corpus_dir, load_corpus, planner_mismatches};
use dkg_norms::evalharness::{run_experiment, ExperimentConfig};

fn corpus_run(c: &mut Criterion) {
    let corpus = load_corpus(&bundled_corpus_dir()).expect("bundled corpus");
    let threads = std::thread::available_parallelism().map_or(4, |n| n.get()).max(4);
    let mut group = c.benchmark_group("oracle_corpus_run");
    group.sample_size(20);
    for parallelism in [1, threads] {
        let cfg = ExperimentConfig {
            parallelism,
            ..ExperimentConfig::default()
        };
        group.bench_with_input(BenchmarkId::from_parameter(parallelism), &cfg, |b, cfg| {
            b.iter(|| run_experiment(&corpus, cfg, &Backend::OracleBacked))
        });
    }
    group.finish();
}

fn planner_check(c: &mut Criterion) {
    let corpus = load_corpus(&bundled_corpus_dir()).expect("bundled corpus");
    let name = if cfg!(feature = "parallel") { "parallel" } else { "sequential" };
    c.bench_function(&format!("planner_mismatches/{name}"), |b| {
        b.iter(|| planner_mismatches(&corpus.grids))
    });
}

criterion_group!(benches, corpus_run, planner_check);
criterion_main!(benches);
