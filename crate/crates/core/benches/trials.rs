use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use unseen_core::exec::Execution;
use unseen_core::harness::{run_nmse, ExperimentConfig};
use unseen_core::sampling::{PopulationSpec, SamplingModel};

fn config(execution: Execution, k: usize, trials: usize) -> ExperimentConfig {
    ExperimentConfig {
        model: SamplingModel::Poisson,
        population: PopulationSpec::Zipf { k, s: 1.0, shift: 0.0 },
        n: k as u64,
        t_grid: vec![0.5, 1.0, 2.0, 5.0],
        estimators: ["gt", "poisson", "binomial-opt", "jackknife1"]
            .iter()
            .map(|s| s.parse().unwrap())
            .collect(),
        trials,
        seed: 1,
        clamp: false,
        execution,
    }
}

fn nmse_trials(c: &mut Criterion) {
    let mut group = c.benchmark_group("run_nmse");
    group.sample_size(10);
    for k in [1_000usize, 10_000] {
        for (name, execution) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
            let cfg = config(execution, k, 64);
            group.bench_with_input(BenchmarkId::new(name, k), &cfg, |b, cfg| {
                b.iter(|| black_box(run_nmse(cfg).unwrap()))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, nmse_trials);
criterion_main!(benches);
