use icps_core::engine::LogRecord;
use icps_core::prediction::LastValuePredictor;
use icps_core::*;

fn single(exec: Millis, cold: Millis, memory: MemoryMb) -> (ValidatedApplication, Vec<WorkflowType>) {
    let app = WorkflowApplication::new(
        vec![
            FunctionSpec::marker("entry"),
            FunctionSpec::new("A", exec, memory).with_cold_start(cold),
            FunctionSpec::marker("exit"),
        ],
        vec![(0, 1), (1, 2)],
    )
    .validate()
    .unwrap();
    let ty = app.full_type(WorkflowTypeId(0));
    (app, vec![ty])
}

fn chain(depth: usize) -> (ValidatedApplication, Vec<WorkflowType>) {
    let mut functions = vec![FunctionSpec::marker("entry")];
    for i in 0..depth {
        functions.push(FunctionSpec::new(format!("f{i}"), 40 + 10 * i as Millis, 100).with_cold_start(300));
    }
    functions.push(FunctionSpec::marker("exit"));
    let edges = (0..=depth).map(|i| (i, i + 1)).collect();
    let app = WorkflowApplication::new(functions, edges).validate().unwrap();
    let ty = app.full_type(WorkflowTypeId(0));
    (app, vec![ty])
}

fn requests(arrivals: &[Millis]) -> Vec<WorkflowRequest> {
    arrivals
        .iter()
        .enumerate()
        .map(|(i, &arrival)| WorkflowRequest {
            id: RequestId(i),
            type_id: WorkflowTypeId(0),
            arrival,
        })
        .collect()
}

fn scheduler(bundle: PolicyBundle, app: &ValidatedApplication) -> Scheduler {
    Scheduler::new(bundle, Box::new(LastValuePredictor), app.len())
}

fn records<'a>(log: &'a EventLog, pred: impl Fn(&LogKind) -> bool + 'a) -> Vec<&'a LogRecord> {
    log.records().iter().filter(|r| pred(&r.kind)).collect()
}

#[test]
fn empty_workload_only_ticks() {
    let (app, types) = single(100, 200, 64);
    let config = SimConfig {
        duration: 1_000,
        interval: 500,
        ..SimConfig::default()
    };
    let out = run(config, &app, &types, scheduler(PolicyBundle::default(), &app), &[]).unwrap();
    let ticks: Vec<Millis> = records(&out.log, |k| matches!(k, LogKind::IntervalTick { .. }))
        .iter()
        .map(|r| r.time)
        .collect();
    assert_eq!(ticks, vec![0, 500]);
    assert!(out.instances.is_empty());
    assert!(records(&out.log, |k| matches!(k, LogKind::Spawn { .. })).is_empty());
}

#[test]
fn identical_inputs_give_identical_logs() {
    let w = generate_synthetic(&SyntheticParams {
        concurrency: 120,
        depth: 4,
        window: 60_000,
        seed: 3,
        ..SyntheticParams::default()
    })
    .unwrap();
    let config = SimConfig {
        duration: 60_000,
        interval: 5_000,
        network: NetworkModel::new(6),
        ..SimConfig::default()
    };
    let go = || {
        run(
            config.clone(),
            &w.app,
            &w.types,
            scheduler(PolicyBundle::default(), &w.app),
            &w.requests,
        )
        .unwrap()
    };
    let (a, b) = (go(), go());
    assert_eq!(a.log.to_ndjson(), b.log.to_ndjson());
    assert_eq!(a.report, b.report);
    let completes = records(&a.log, |k| matches!(k, LogKind::RequestComplete { .. })).len();
    let arrivals = records(&a.log, |k| matches!(k, LogKind::WorkflowArrival { .. })).len();
    assert_eq!((arrivals, completes), (120, 120));
}

#[test]
fn prewarmed_instance_serves_without_overhead() {
    let (app, types) = single(100, 200, 64);
    let config = SimConfig {
        duration: 5_000,
        interval: 5_000,
        ..SimConfig::default()
    };
    let reqs = requests(&[1_000]);
    let mut engine = Engine::new(
        config,
        &app,
        &types,
        scheduler(PolicyBundle::keep_alive(60_000), &app),
        &reqs,
    )
    .unwrap();
    engine.prewarm(FunctionId(1)).unwrap();
    let out = engine.run().unwrap();
    assert_eq!(out.report.response_times, vec![100]);
    assert_eq!(out.report.cold_starts, 0);
    assert_eq!(out.report.phi_resp, 1.0);
}

#[test]
fn snapshot_is_a_frozen_view() {
    let (app, types) = single(100, 200, 64);
    let config = SimConfig {
        duration: 1_000,
        interval: 1_000,
        node_count: 2,
        ..SimConfig::default()
    };
    let mut engine = Engine::new(config, &app, &types, scheduler(PolicyBundle::keep_alive(50), &app), &[]).unwrap();
    let empty = engine.snapshot();
    assert!(empty.instances.is_empty());
    assert_eq!(empty.nodes.len(), 2);
    assert!(empty.nodes.iter().all(|n| n.used == 0));

    let id = engine.prewarm(FunctionId(1)).unwrap();
    while engine.snapshot().instance(id).state() != InstanceState::Paused {
        assert!(engine.step().unwrap());
    }
    let frozen = engine.snapshot();
    let node = frozen.instance(id).node().unwrap();
    assert!(frozen.node(node).resident.contains(&id));
    assert!(frozen.is_consistent());

    let out = engine.run().unwrap();
    assert_eq!(out.instances[id.0].state, InstanceState::Killed);
    assert_eq!(frozen.instance(id).state(), InstanceState::Paused);
}

fn cold_flags(log: &EventLog) -> Vec<bool> {
    log.records()
        .iter()
        .filter_map(|r| match r.kind {
            LogKind::Assign { cold_start, .. } => Some(cold_start),
            _ => None,
        })
        .collect()
}

#[test]
fn keep_alive_window_decides_reuse() {
    let (app, types) = single(100, 200, 64);
    let config = SimConfig {
        duration: 10_000,
        interval: 10_000,
        ..SimConfig::default()
    };
    // first finishes at 300 and expires at 1300
    let within = run(
        config.clone(),
        &app,
        &types,
        scheduler(PolicyBundle::keep_alive(1_000), &app),
        &requests(&[0, 1_000]),
    )
    .unwrap();
    assert_eq!(cold_flags(&within.log), vec![true, false]);
    assert_eq!(within.report.cold_starts, 1);

    let after = run(
        config,
        &app,
        &types,
        scheduler(PolicyBundle::keep_alive(1_000), &app),
        &requests(&[0, 2_000]),
    )
    .unwrap();
    assert_eq!(cold_flags(&after.log), vec![true, true]);
    assert_eq!(after.report.instances, 2);
}

#[test]
fn zero_keep_alive_creates_per_invocation() {
    let (app, types) = chain(3);
    let config = SimConfig {
        duration: 20_000,
        interval: 20_000,
        ..SimConfig::default()
    };
    let out = run(
        config,
        &app,
        &types,
        scheduler(PolicyBundle::keep_alive(0), &app),
        &requests(&[0, 3_000, 6_000]),
    )
    .unwrap();
    assert_eq!(out.report.instances, 9);
    assert_eq!(out.report.cold_starts, 9);
}

#[test]
fn mncpas_releases_every_instance_at_completion() {
    let (app, types) = chain(4);
    let config = SimConfig {
        duration: 20_000,
        interval: 20_000,
        network: NetworkModel::new(10),
        ..SimConfig::default()
    };
    let bundle = PolicyBundle::icps(PredictionStrategy::None, PlacementStrategy::Ads, RoutingStrategy::Mncpas);
    let out = run(config, &app, &types, scheduler(bundle, &app), &requests(&[0, 50, 4_000])).unwrap();
    let mut finished = std::collections::BTreeMap::new();
    for r in out.log.records() {
        if let LogKind::FunctionComplete { instance, .. } = r.kind {
            assert!(finished.insert(instance, r.time).is_none(), "instance reused");
        }
    }
    for inst in &out.instances {
        if let Some(&t) = finished.get(&inst.id) {
            assert_eq!(inst.killed_at, Some(t));
        }
    }
    assert_eq!(finished.len(), 12);
    assert_eq!(out.report.transfer_latency_ms, 0);
}

#[test]
fn full_cluster_logs_prewarm_failure() {
    let (app, types) = single(100, 200, 100);
    let config = SimConfig {
        duration: 1_000,
        interval: 1_000,
        node_capacities: Some(vec![100]),
        allow_new_nodes: false,
        ..SimConfig::default()
    };
    let mut engine = Engine::new(config, &app, &types, scheduler(PolicyBundle::keep_alive(10), &app), &[]).unwrap();
    engine.prewarm(FunctionId(1)).unwrap();
    let second = engine.prewarm(FunctionId(1)).unwrap();
    let failures = records(engine.log(), |k| matches!(k, LogKind::PrewarmFailure { .. }));
    assert_eq!(failures.len(), 1);
    assert!(matches!(failures[0].kind, LogKind::PrewarmFailure { instance, .. } if instance == second));
    assert!(engine.snapshot().is_consistent());
}

#[test]
fn event_log_round_trips_through_ndjson() {
    let (app, types) = chain(2);
    let config = SimConfig {
        duration: 5_000,
        interval: 1_000,
        ..SimConfig::default()
    };
    let out = run(
        config,
        &app,
        &types,
        scheduler(PolicyBundle::default(), &app),
        &requests(&[0, 10, 2_000]),
    )
    .unwrap();
    let text = out.log.to_ndjson();
    let back = EventLog::read_ndjson(text.as_bytes()).unwrap();
    assert_eq!(back.to_ndjson(), text);
    assert_eq!(icps_core::metrics::replay(&back).unwrap(), out.report);
}
