use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use sofr_core::reference;
use sofr_core::scenario::{CurveDays, Engine, FactorModels, InitialState, SimulationConfig};

fn engine(scenarios: usize, horizon: u32) -> Engine {
    let models = FactorModels {
        macro_model: reference::macro_model(),
        curve_model: reference::curve_model(),
        shifts: reference::shifts(),
        basis: reference::basis(),
    };
    let init = InitialState {
        y: reference::macro_start_y(),
        x: reference::curve_start_x(),
    };
    let mut cfg = SimulationConfig::new(scenarios, reference::start_date(), horizon, 1);
    cfg.curve_days = CurveDays::Every(365);
    Engine::new(models, init, cfg).unwrap()
}

fn simulation(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulate 1y daily");
    group.sample_size(10);
    for n in [200usize, 2000] {
        let e = engine(n, 365);
        group.bench_with_input(BenchmarkId::new("single thread", n), &e, |b, e| {
            b.iter(|| e.run_with_threads(1).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("all threads", n), &e, |b, e| {
            b.iter(|| e.run())
        });
    }
    group.finish();
}

criterion_group!(benches, simulation);
criterion_main!(benches);
