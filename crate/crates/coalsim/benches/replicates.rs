use coalsim::experiments::{run_scenario, Scenario, ScenarioConfig};
use coalsim::par::{replicate_map, replicate_map_serial};
use coalsim::rng::replicate_rng;
use coalsim::spatial::{init_configuration, Gamma, InitKind, InitialConfig, SimParams};
use coalsim::walk::WalkKernel;
use criterion::{criterion_group, criterion_main, Criterion};

fn block_count_replicate(k: usize) -> usize {
    let params = SimParams {
        gamma: Gamma::Finite(1.0),
        kernel: WalkKernel::simple(),
        region_half: 200,
    };
    let mut rng = replicate_rng(7, k as u64);
    let mut state = init_configuration(
        &InitialConfig {
            kind: InitKind::Poisson(1.0),
        },
        100.0,
        0.5,
        &params,
        &mut rng,
    );
    state.evolve(100.0, &mut rng);
    state.block_count()
}

fn bench_replicate_pool(c: &mut Criterion) {
    let mut group = c.benchmark_group("replicate_pool");
    group.sample_size(10);
    group.bench_function("parallel", |b| {
        b.iter(|| replicate_map(32, block_count_replicate))
    });
    group.bench_function("serial", |b| {
        b.iter(|| replicate_map_serial(32, block_count_replicate))
    });
    group.finish();
}

fn bench_scenario(c: &mut Criterion) {
    let mut cfg = ScenarioConfig::new(Scenario::Theorem1);
    cfg.t = 100.0;
    cfg.alpha = 0.5;
    cfg.beta_grid = Some(vec![0.75, 1.0]);
    cfg.replicates = 16;
    let mut group = c.benchmark_group("scenario");
    group.sample_size(10);
    group.bench_function("theorem1_small", |b| {
        b.iter(|| run_scenario(&cfg).expect("valid config"))
    });
    group.finish();
}

criterion_group!(benches, bench_replicate_pool, bench_scenario);
criterion_main!(benches);
