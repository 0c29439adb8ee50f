//! Fixtures shared by the benchmarks under `benches/`.

use icps_core::prediction::LastValuePredictor;
use icps_core::{generate_synthetic, run, PolicyBundle, Scheduler, SimConfig, SimOutcome, SyntheticParams, Workload};

pub fn workload(concurrency: usize, depth: usize, seed: u64) -> Workload {
    generate_synthetic(&SyntheticParams {
        concurrency,
        depth,
        seed,
        ..SyntheticParams::default()
    })
    .expect("valid benchmark parameters")
}

pub fn simulate(bundle: &PolicyBundle, w: &Workload, config: &SimConfig) -> SimOutcome {
    let scheduler = Scheduler::new(bundle.clone(), Box::new(LastValuePredictor), w.app.len());
    run(config.clone(), &w.app, &w.types, scheduler, &w.requests).expect("simulation completes")
}
