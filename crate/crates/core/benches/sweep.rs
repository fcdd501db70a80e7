use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use phrom::bench::{sweep, ExperimentSpec, LambdaRule, LinearMsdConfig, ModelSpec, Offline};
use phrom::integrate::{NewtonConfig, TimeGrid};
use phrom::parallel::Execution;
use phrom::ph::InputSignal;
use phrom::rom::RomMethod;

fn spec() -> ExperimentSpec {
    ExperimentSpec {
        model: ModelSpec::LinearMsd(LinearMsdConfig::uniform(20, 2.0, 1.0, 1.0)),
        grid: TimeGrid::from_step(0.0, 20.0, 0.1).unwrap(),
        input: InputSignal::sine(1, 0.1, 1.0),
        methods: vec![RomMethod::Sp1, RomMethod::GmgPod, RomMethod::GmgQm],
        r_values: (4..=12).collect(),
        r_n: 4,
        lambda: LambdaRule::Fixed(1e-3),
        deim_tol: 1e-8,
        newton: NewtonConfig::default(),
    }
}

fn bench_sweep(c: &mut Criterion) {
    let spec = spec();
    let offline = Offline::from_spec(&spec).unwrap();
    let threads = std::thread::available_parallelism().map_or(2, |n| n.get().max(2));
    let mut group = c.benchmark_group("sweep");
    group.sample_size(10);
    for (name, exec) in [
        ("sequential", Execution::Sequential),
        ("parallel", Execution::Parallel { threads }),
    ] {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| sweep(&offline, &spec, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_sweep);
criterion_main!(benches);
