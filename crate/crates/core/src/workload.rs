//! Workflow traces and synthetic workloads.
//!
//! Traces are newline-delimited JSON, one request per line:
//!
//! ```json
//! {"workflow":"wf","arrival_ms":12,"functions":[{"name":"A","exec_ms":40,"memory_mb":128}],"edges":[]}
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::workflow::{
    derive_workflow_type, FunctionId, FunctionSpec, MemoryMb, Millis, RequestId, ValidatedApplication,
    WorkflowApplication, WorkflowError, WorkflowRequest, WorkflowType, WorkflowTypeId, DEFAULT_COLD_START_MS,
};

pub const ENTRY_NAME: &str = "__entry__";
pub const EXIT_NAME: &str = "__exit__";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WorkloadError {
    #[error("line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("line {line}: missing field `{field}`")]
    MissingField { line: usize, field: String },
    #[error("line {line}: edge refers to unknown function `{name}`")]
    UnknownFunction { line: usize, name: String },
    #[error("function `{0}` has different specs in different records")]
    InconsistentFunction(String),
    #[error("invalid synthetic parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Workflow(#[from] WorkflowError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceFunction {
    pub name: String,
    pub exec_ms: Millis,
    pub memory_mb: MemoryMb,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cold_start_ms: Option<Millis>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub workflow: String,
    pub arrival_ms: Millis,
    pub functions: Vec<TraceFunction>,
    #[serde(default)]
    pub edges: Vec<(String, String)>,
}

/// An application, its workflow types, and timed requests.
#[derive(Debug, Clone)]
pub struct Workload {
    pub app: ValidatedApplication,
    pub types: Vec<WorkflowType>,
    pub requests: Vec<WorkflowRequest>,
    /// Workflow name per type, as found in the trace.
    pub type_names: Vec<String>,
}

fn require(value: &Value, line: usize, fields: &[&str]) -> Result<(), WorkloadError> {
    for f in fields {
        if value.get(f).is_none() {
            return Err(WorkloadError::MissingField {
                line,
                field: (*f).to_string(),
            });
        }
    }
    Ok(())
}

fn parse_record(text: &str, line: usize) -> Result<TraceRecord, WorkloadError> {
    let parse_err = |e: serde_json::Error| WorkloadError::ParseError {
        line,
        message: e.to_string(),
    };
    let value: Value = serde_json::from_str(text).map_err(parse_err)?;
    require(&value, line, &["workflow", "arrival_ms", "functions"])?;
    if let Some(fs) = value["functions"].as_array() {
        for f in fs {
            require(f, line, &["name", "exec_ms", "memory_mb"])?;
        }
    }
    serde_json::from_value(value).map_err(parse_err)
}

/// Reads a trace. The application is the union of all recorded sub-graphs
/// joined to a shared entry and exit marker; every distinct function set
/// becomes one workflow type.
pub fn load_trace<R: BufRead>(source: R) -> Result<Workload, WorkloadError> {
    let mut records = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line_no = i + 1;
        let text = line.map_err(|e| WorkloadError::ParseError {
            line: line_no,
            message: e.to_string(),
        })?;
        if text.trim().is_empty() {
            continue;
        }
        records.push((line_no, parse_record(&text, line_no)?));
    }
    records_to_workload(records)
}

pub fn records_to_workload(mut records: Vec<(usize, TraceRecord)>) -> Result<Workload, WorkloadError> {
    records.sort_by_key(|(_, r)| r.arrival_ms);

    let mut specs: BTreeMap<String, TraceFunction> = BTreeMap::new();
    for (_, r) in &records {
        for f in &r.functions {
            match specs.get(&f.name) {
                Some(prev) if prev != f => return Err(WorkloadError::InconsistentFunction(f.name.clone())),
                Some(_) => {}
                None => {
                    specs.insert(f.name.clone(), f.clone());
                }
            }
        }
    }
    // entry first, functions by name, exit last
    let mut functions = vec![FunctionSpec::marker(ENTRY_NAME)];
    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    for (name, f) in &specs {
        index.insert(name.as_str(), functions.len());
        functions.push(
            FunctionSpec::new(name.clone(), f.exec_ms, f.memory_mb)
                .with_cold_start(f.cold_start_ms.unwrap_or(DEFAULT_COLD_START_MS)),
        );
    }
    let exit = functions.len();
    functions.push(FunctionSpec::marker(EXIT_NAME));

    let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut type_sets: Vec<BTreeSet<FunctionId>> = Vec::new();
    let mut type_names: Vec<String> = Vec::new();
    let mut set_index: BTreeMap<BTreeSet<FunctionId>, usize> = BTreeMap::new();
    let mut request_types = Vec::with_capacity(records.len());
    for (line, r) in &records {
        let members: BTreeSet<usize> = r.functions.iter().map(|f| index[f.name.as_str()]).collect();
        let mut has_pred = BTreeSet::new();
        let mut has_succ = BTreeSet::new();
        for (a, b) in &r.edges {
            let lookup = |n: &String| {
                index
                    .get(n.as_str())
                    .copied()
                    .filter(|i| members.contains(i))
                    .ok_or_else(|| WorkloadError::UnknownFunction {
                        line: *line,
                        name: n.clone(),
                    })
            };
            let (a, b) = (lookup(a)?, lookup(b)?);
            edges.insert((a, b));
            has_succ.insert(a);
            has_pred.insert(b);
        }
        for &m in &members {
            if !has_pred.contains(&m) {
                edges.insert((0, m));
            }
            if !has_succ.contains(&m) {
                edges.insert((m, exit));
            }
        }
        let mut set: BTreeSet<FunctionId> = members.iter().map(|&m| FunctionId(m)).collect();
        set.insert(FunctionId(0));
        set.insert(FunctionId(exit));
        let ty = *set_index.entry(set.clone()).or_insert_with(|| {
            type_sets.push(set);
            type_names.push(r.workflow.clone());
            type_sets.len() - 1
        });
        request_types.push((ty, r.arrival_ms));
    }
    if records.is_empty() {
        edges.insert((0, exit));
    }

    let app = WorkflowApplication::new(functions, edges.into_iter().collect()).validate()?;
    let types = type_sets
        .iter()
        .enumerate()
        .map(|(i, s)| derive_workflow_type(&app, WorkflowTypeId(i), s))
        .collect::<Result<Vec<_>, _>>()?;
    let requests = request_types
        .into_iter()
        .enumerate()
        .map(|(i, (ty, arrival))| WorkflowRequest {
            id: RequestId(i),
            type_id: WorkflowTypeId(ty),
            arrival,
        })
        .collect();
    Ok(Workload {
        app,
        types,
        requests,
        type_names,
    })
}

/// One trace record per request; markers are left out.
pub fn to_records(workload: &Workload) -> Vec<TraceRecord> {
    let app = &workload.app;
    workload
        .requests
        .iter()
        .map(|req| {
            let ty = &workload.types[req.type_id.0];
            let real = |f: &FunctionId| !app.function(*f).is_marker();
            let mut functions: Vec<TraceFunction> = ty
                .members()
                .iter()
                .filter(|f| real(f))
                .map(|&f| {
                    let s = app.function(f);
                    TraceFunction {
                        name: s.name.clone(),
                        exec_ms: s.exec_time,
                        memory_mb: s.memory,
                        cold_start_ms: Some(s.cold_start_time),
                    }
                })
                .collect();
            functions.sort_by(|a, b| a.name.cmp(&b.name));
            let mut edges: Vec<(String, String)> = ty
                .edges()
                .iter()
                .filter(|(a, b)| real(a) && real(b))
                .map(|(a, b)| (app.function(*a).name.clone(), app.function(*b).name.clone()))
                .collect();
            edges.sort();
            TraceRecord {
                workflow: workload
                    .type_names
                    .get(req.type_id.0)
                    .cloned()
                    .unwrap_or_else(|| format!("type{}", req.type_id.0)),
                arrival_ms: req.arrival,
                functions,
                edges,
            }
        })
        .collect()
}

pub fn serialize_trace(workload: &Workload) -> String {
    let mut out = String::new();
    for r in to_records(workload) {
        out.push_str(&serde_json::to_string(&r).expect("trace records serialize"));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArrivalPattern {
    /// Independent uniform arrivals over the window.
    Uniform,
    /// Equal bursts every `period` ms starting at `offset`; each burst
    /// carries the same per-type counts.
    Periodic { period: Millis, offset: Millis },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticParams {
    /// Total requests in the window.
    pub concurrency: usize,
    /// Function layers between entry and exit.
    pub depth: usize,
    /// Functions per layer.
    pub branch: usize,
    /// Distinct workflow types.
    pub types: usize,
    pub window: Millis,
    pub seed: u64,
    pub exec_range: (Millis, Millis),
    pub memory_range: (MemoryMb, MemoryMb),
    pub cold_start: Millis,
    pub arrivals: ArrivalPattern,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self {
            concurrency: 500,
            depth: 5,
            branch: 2,
            types: 4,
            window: 800_000,
            seed: 0,
            exec_range: (10, 200),
            memory_range: (50, 200),
            cold_start: DEFAULT_COLD_START_MS,
            arrivals: ArrivalPattern::Uniform,
        }
    }
}

impl SyntheticParams {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        let bad = |m: &str| Err(WorkloadError::InvalidParams(m.to_string()));
        if self.depth == 0 || self.branch == 0 || self.types == 0 {
            return bad("depth, branch and types must be positive");
        }
        if self.window == 0 {
            return bad("window must be positive");
        }
        let (e0, e1) = self.exec_range;
        let (m0, m1) = self.memory_range;
        if e0 == 0 || e0 > e1 || m0 == 0 || m0 > m1 {
            return bad("exec and memory ranges must be positive and ordered");
        }
        let paths = (self.branch as u128).checked_pow(self.depth as u32).unwrap_or(u128::MAX);
        if (self.types as u128) > paths {
            return bad("more types than distinct paths");
        }
        if let ArrivalPattern::Periodic { period, offset } = self.arrivals {
            if period == 0 || offset >= self.window {
                return bad("periodic arrivals need a positive period and an offset inside the window");
            }
        }
        Ok(())
    }
}

fn layer_name(layer: usize, k: usize) -> String {
    format!("L{layer:02}F{k:02}")
}

/// Layered DAG with `branch` functions per layer and complete links between
/// adjacent layers; types are distinct entry-to-exit paths.
pub fn generate_synthetic(params: &SyntheticParams) -> Result<Workload, WorkloadError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let (depth, branch) = (params.depth, params.branch);

    let mut functions = vec![FunctionSpec::marker(ENTRY_NAME)];
    for layer in 0..depth {
        for k in 0..branch {
            let exec = rng.gen_range(params.exec_range.0..=params.exec_range.1);
            let memory = rng.gen_range(params.memory_range.0..=params.memory_range.1);
            functions.push(FunctionSpec::new(layer_name(layer, k), exec, memory).with_cold_start(params.cold_start));
        }
    }
    let exit = functions.len();
    functions.push(FunctionSpec::marker(EXIT_NAME));
    let id = |layer: usize, k: usize| 1 + layer * branch + k;
    let mut edges = Vec::new();
    for k in 0..branch {
        edges.push((0, id(0, k)));
        edges.push((id(depth - 1, k), exit));
    }
    for layer in 1..depth {
        for a in 0..branch {
            for b in 0..branch {
                edges.push((id(layer - 1, a), id(layer, b)));
            }
        }
    }
    let app = WorkflowApplication::new(functions, edges).validate()?;

    let mut paths: BTreeSet<Vec<usize>> = BTreeSet::new();
    let mut ordered = Vec::new();
    while ordered.len() < params.types {
        let path: Vec<usize> = (0..depth).map(|_| rng.gen_range(0..branch)).collect();
        if paths.insert(path.clone()) {
            ordered.push(path);
        }
    }
    let types = ordered
        .iter()
        .enumerate()
        .map(|(t, path)| {
            let mut set: BTreeSet<FunctionId> = path.iter().enumerate().map(|(l, &k)| FunctionId(id(l, k))).collect();
            set.insert(FunctionId(0));
            set.insert(FunctionId(exit));
            derive_workflow_type(&app, WorkflowTypeId(t), &set)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let weights: Vec<u32> = (0..params.types).map(|_| rng.gen_range(1..=10)).collect();
    let mix = WeightedIndex::new(&weights).expect("weights are positive");
    let mut arrivals: Vec<(Millis, usize)> = match params.arrivals {
        ArrivalPattern::Uniform => (0..params.concurrency)
            .map(|_| (rng.gen_range(0..params.window), mix.sample(&mut rng)))
            .collect(),
        ArrivalPattern::Periodic { period, offset } => {
            let bursts = ((params.window - offset - 1) / period + 1) as usize;
            let per_burst = params.concurrency / bursts;
            let mut burst_types: Vec<usize> = (0..per_burst).map(|i| i % params.types).collect();
            burst_types.shuffle(&mut rng);
            (0..bursts)
                .flat_map(|b| {
                    let t = offset + b as Millis * period;
                    burst_types.iter().map(move |&ty| (t, ty))
                })
                .collect()
        }
    };
    arrivals.sort_by_key(|&(t, _)| t);
    let requests = arrivals
        .into_iter()
        .enumerate()
        .map(|(i, (arrival, ty))| WorkflowRequest {
            id: RequestId(i),
            type_id: WorkflowTypeId(ty),
            arrival,
        })
        .collect();
    let type_names = (0..params.types).map(|t| format!("type{t}")).collect();
    Ok(Workload {
        app,
        types,
        requests,
        type_names,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(workflow: &str, arrival: u64, fns: &[(&str, u64, u64)], edges: &[(&str, &str)]) -> String {
        let r = TraceRecord {
            workflow: workflow.into(),
            arrival_ms: arrival,
            functions: fns
                .iter()
                .map(|&(n, e, m)| TraceFunction {
                    name: n.into(),
                    exec_ms: e,
                    memory_mb: m,
                    cold_start_ms: None,
                })
                .collect(),
            edges: edges.iter().map(|&(a, b)| (a.into(), b.into())).collect(),
        };
        serde_json::to_string(&r).unwrap()
    }

    #[test]
    fn shared_function_is_deduplicated() {
        let text = [
            line("w1", 5, &[("A", 10, 64), ("B", 20, 64)], &[("A", "B")]),
            line("w2", 1, &[("A", 10, 64)], &[]),
        ]
        .join("\n");
        let w = load_trace(text.as_bytes()).unwrap();
        assert_eq!(w.app.len(), 4);
        assert_eq!(w.requests.len(), 2);
        assert_eq!(w.types.len(), 2);
        // sorted by arrival
        assert_eq!(w.requests[0].arrival, 1);
        assert_eq!(w.type_names[w.requests[0].type_id.0], "w2");
    }

    #[test]
    fn missing_arrival_is_reported() {
        let text = r#"{"workflow":"w","functions":[],"edges":[]}"#;
        assert_eq!(
            load_trace(text.as_bytes()).unwrap_err(),
            WorkloadError::MissingField {
                line: 1,
                field: "arrival_ms".into()
            }
        );
    }

    #[test]
    fn empty_stream_is_fine() {
        let w = load_trace("".as_bytes()).unwrap();
        assert!(w.requests.is_empty());
        assert!(w.types.is_empty());
    }

    #[test]
    fn inconsistent_specs_are_rejected() {
        let text = [line("w1", 0, &[("A", 10, 64)], &[]), line("w2", 1, &[("A", 11, 64)], &[])].join("\n");
        assert_eq!(
            load_trace(text.as_bytes()).unwrap_err(),
            WorkloadError::InconsistentFunction("A".into())
        );
    }

    #[test]
    fn garbage_line_is_a_parse_error() {
        assert!(matches!(
            load_trace("{not json".as_bytes()),
            Err(WorkloadError::ParseError { line: 1, .. })
        ));
    }

    #[test]
    fn depth_one_gives_single_function_workflows() {
        let w = generate_synthetic(&SyntheticParams {
            depth: 1,
            branch: 3,
            types: 3,
            concurrency: 50,
            ..SyntheticParams::default()
        })
        .unwrap();
        for ty in &w.types {
            let real = ty.members().iter().filter(|f| !w.app.function(**f).is_marker()).count();
            assert_eq!(real, 1);
        }
    }

    #[test]
    fn arrivals_fill_the_window() {
        let p = SyntheticParams {
            concurrency: 100,
            ..SyntheticParams::default()
        };
        let w = generate_synthetic(&p).unwrap();
        assert_eq!(w.requests.len(), 100);
        assert!(w.requests.iter().all(|r| r.arrival < 800_000));
        assert!(w.requests.windows(2).all(|p| p[0].arrival <= p[1].arrival));
    }

    #[test]
    fn generation_is_deterministic() {
        let p = SyntheticParams::default();
        let a = generate_synthetic(&p).unwrap();
        let b = generate_synthetic(&p).unwrap();
        assert_eq!(a.requests, b.requests);
        assert_eq!(a.app, b.app);
    }

    #[test]
    fn too_many_types_is_invalid() {
        let p = SyntheticParams {
            depth: 1,
            branch: 2,
            types: 3,
            ..SyntheticParams::default()
        };
        assert!(matches!(generate_synthetic(&p), Err(WorkloadError::InvalidParams(_))));
    }

    #[test]
    fn periodic_bursts_have_constant_type_counts() {
        let p = SyntheticParams {
            concurrency: 40,
            types: 2,
            window: 40_000,
            arrivals: ArrivalPattern::Periodic {
                period: 10_000,
                offset: 2_000,
            },
            ..SyntheticParams::default()
        };
        let w = generate_synthetic(&p).unwrap();
        assert_eq!(w.requests.len(), 40);
        let burst: Vec<_> = w.requests.iter().filter(|r| r.arrival == 2_000).collect();
        assert_eq!(burst.len(), 10);
        assert_eq!(burst.iter().filter(|r| r.type_id.0 == 0).count(), 5);
    }

    #[test]
    fn serialized_trace_reloads_to_the_same_text() {
        let w = generate_synthetic(&SyntheticParams {
            concurrency: 30,
            ..SyntheticParams::default()
        })
        .unwrap();
        let text = serialize_trace(&w);
        let back = load_trace(text.as_bytes()).unwrap();
        assert_eq!(serialize_trace(&back), text);
        assert_eq!(back.requests.len(), 30);
    }
}
