use std::collections::BTreeSet;

use icps_core::prediction::{chscg_counts, plan_bpcg, plan_fpcg, round_forecast};
use icps_core::workload::serialize_trace;
use icps_core::*;
use proptest::prelude::*;

/// Entry, `n` real functions and exit with edges taken from `mask` over
/// the upper triangle of the real functions.
fn app_from_mask(n: usize, mask: &[bool], execs: &[Millis]) -> ValidatedApplication {
    let mut functions = vec![FunctionSpec::marker("entry")];
    for (i, &e) in execs.iter().take(n).enumerate() {
        functions.push(FunctionSpec::new(format!("f{i}"), e, 64));
    }
    functions.push(FunctionSpec::marker("exit"));
    let mut edges = Vec::new();
    let mut k = 0;
    for a in 1..=n {
        for b in a + 1..=n {
            if mask[k % mask.len()] {
                edges.push((a, b));
            }
            k += 1;
        }
    }
    for f in 1..=n {
        if !edges.iter().any(|&(_, b)| b == f) {
            edges.push((0, f));
        }
        if !edges.iter().any(|&(a, _)| a == f) {
            edges.push((f, n + 1));
        }
    }
    WorkflowApplication::new(functions, edges).validate().unwrap()
}

fn arb_app() -> impl Strategy<Value = ValidatedApplication> {
    (
        1usize..=6,
        prop::collection::vec(any::<bool>(), 15),
        prop::collection::vec(1u64..500, 6),
    )
        .prop_map(|(n, mask, execs)| app_from_mask(n, &mask, &execs))
}

/// Every subset of functions that forms a valid type, by enumeration.
fn all_types(app: &ValidatedApplication) -> Vec<WorkflowType> {
    let reals: Vec<FunctionId> = app.function_ids().filter(|&f| !app.function(f).is_marker()).collect();
    let mut out = Vec::new();
    for bits in 1u32..(1 << reals.len()) {
        let mut set: BTreeSet<FunctionId> = [app.entry(), app.exit()].into();
        set.extend(reals.iter().enumerate().filter(|(i, _)| bits >> i & 1 == 1).map(|(_, &f)| f));
        if let Ok(t) = workflow::derive_workflow_type(app, WorkflowTypeId(out.len()), &set) {
            out.push(t);
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn topo_order_respects_every_edge(app in arb_app()) {
        let order = app.topo_order();
        prop_assert_eq!(order.len(), app.len());
        let mut pos = vec![usize::MAX; app.len()];
        for (i, f) in order.iter().enumerate() {
            pos[f.0] = i;
        }
        prop_assert!(pos.iter().all(|&p| p != usize::MAX));
        for &(a, b) in app.edges() {
            prop_assert!(pos[a.0] < pos[b.0]);
        }
    }

    #[test]
    fn any_back_edge_is_a_cycle(app in arb_app(), pick in any::<prop::sample::Index>()) {
        let edges = app.edges().to_vec();
        let (a, b) = edges[pick.index(edges.len())];
        let mut raw = app.into_unvalidated();
        raw.edges.push((b, a));
        prop_assert_eq!(raw.validate().unwrap_err(), WorkflowError::CycleDetected);
    }

    #[test]
    fn bpcg_never_exceeds_fpcg(app in arb_app(), seed in prop::collection::vec(0u64..30, 64)) {
        let types = all_types(&app);
        let forecast: Vec<u64> = types.iter().enumerate().map(|(i, _)| seed[i % seed.len()]).collect();
        let fp = plan_fpcg(&forecast, &app);
        let bp = plan_bpcg(&forecast, &types, app.len());
        for f in app.function_ids() {
            prop_assert!(bp.get(f) <= fp.get(f));
        }
        // every type contains entry and exit
        prop_assert_eq!(bp.get(app.entry()), fp.get(app.entry()));
    }

    #[test]
    fn type_critical_path_is_bounded_by_full_app(app in arb_app()) {
        let full = app.full_type(WorkflowTypeId(0)).critical_path_exec_time();
        let total: Millis = app.functions().iter().map(|f| f.exec_time).sum();
        prop_assert!(full <= total);
        for t in all_types(&app) {
            prop_assert!(t.critical_path_exec_time() <= full);
            prop_assert!(t.critical_path_exec_time() > 0);
        }
    }

    #[test]
    fn rounding_is_a_shifted_ceiling(raw in prop::collection::vec(-50.0f64..50.0, 1..6)) {
        for (r, v) in round_forecast(&raw).iter().zip(&raw) {
            prop_assert!(*r as f64 >= v - 0.05 - 1e-9);
            prop_assert!((*r as f64) < v.max(0.0) + 1.0);
        }
    }

    #[test]
    fn chscg_covers_the_last_creation_count(weights in prop::collection::vec(0u32..20, 1..8), tn in 0u64..500) {
        let total: u32 = weights.iter().sum();
        prop_assume!(total > 0);
        let q: Vec<f64> = weights.iter().map(|&w| w as f64 / total as f64).collect();
        let plan = chscg_counts(&q, tn);
        prop_assert!(plan.total() >= tn);
        prop_assert!(plan.total() <= tn + weights.len() as u64);
    }
}

fn arb_params() -> impl Strategy<Value = SyntheticParams> {
    (1usize..=4, 1usize..=3, 1usize..=4, 1usize..80, any::<u64>()).prop_map(|(depth, branch, types, n, seed)| {
        SyntheticParams {
            concurrency: n,
            depth,
            branch,
            types: types.min(branch.pow(depth as u32)),
            window: 50_000,
            seed,
            ..SyntheticParams::default()
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generated_workloads_are_valid(params in arb_params()) {
        let w = generate_synthetic(&params).unwrap();
        prop_assert_eq!(w.requests.len(), params.concurrency);
        prop_assert_eq!(w.types.len(), params.types);
        prop_assert_eq!(w.app.len(), params.depth * params.branch + 2);
        prop_assert!(w.requests.windows(2).all(|p| p[0].arrival <= p[1].arrival));
        prop_assert!(w.requests.iter().all(|r| r.arrival < params.window && r.type_id.0 < w.types.len()));
        let sets: BTreeSet<Vec<FunctionId>> = w.types.iter().map(|t| t.members().to_vec()).collect();
        prop_assert_eq!(sets.len(), w.types.len());
        for t in &w.types {
            // one function per layer plus the markers
            prop_assert_eq!(t.members().len(), params.depth + 2);
        }
    }

    #[test]
    fn trace_text_round_trips(params in arb_params()) {
        let w = generate_synthetic(&params).unwrap();
        let text = serialize_trace(&w);
        let back = load_trace(text.as_bytes()).unwrap();
        prop_assert_eq!(serialize_trace(&back), text);
        prop_assert_eq!(back.requests.len(), w.requests.len());
        let crit = |w: &Workload| -> Vec<Millis> {
            w.requests.iter().map(|r| w.types[r.type_id.0].critical_path_exec_time()).collect()
        };
        prop_assert_eq!(crit(&back), crit(&w));
    }
}
