//! Workflow application DAGs, the typed sub-graphs that requests execute,
//! and the timed requests themselves.
//!
//! An application is a DAG with a unique entry and a unique exit function.
//! Each request runs one [`WorkflowType`]: an induced sub-graph of the
//! application that still connects entry to exit. Functions with zero
//! execution time and zero memory are structural markers; they complete
//! instantly and never occupy an instance.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Milliseconds of simulated time.
pub type Millis = u64;

/// Memory in megabytes.
pub type MemoryMb = u64;

/// Default creation latency for a function instance when none is recorded.
pub const DEFAULT_COLD_START_MS: Millis = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FunctionId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WorkflowTypeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RequestId(pub usize);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WorkflowError {
    #[error("application has no functions")]
    Empty,
    #[error("edge references unknown function index {0}")]
    UnknownFunction(usize),
    #[error("dependency cycle detected")]
    CycleDetected,
    #[error("more than one function without predecessors: {0:?}")]
    MultipleEntries(Vec<String>),
    #[error("more than one function without successors: {0:?}")]
    MultipleExits(Vec<String>),
    #[error("function `{0}` is not on any entry to exit path")]
    UnreachableFunction(String),
    #[error("function `{name}` has invalid spec: {reason}")]
    InvalidFunction { name: String, reason: &'static str },
    #[error("invoked set must contain the entry and exit functions")]
    MissingEndpoint,
    #[error("invoked functions do not form a connected entry to exit sub-graph")]
    DisconnectedSubgraph,
}

/// Static description of one serverless function.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionSpec {
    pub name: String,
    pub exec_time: Millis,
    pub memory: MemoryMb,
    pub cold_start_time: Millis,
}

impl FunctionSpec {
    pub fn new(name: impl Into<String>, exec_time: Millis, memory: MemoryMb) -> Self {
        Self {
            name: name.into(),
            exec_time,
            memory,
            cold_start_time: DEFAULT_COLD_START_MS,
        }
    }

    /// A zero-cost entry or exit placeholder.
    pub fn marker(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            exec_time: 0,
            memory: 0,
            cold_start_time: 0,
        }
    }

    pub fn with_cold_start(mut self, cold_start_time: Millis) -> Self {
        self.cold_start_time = cold_start_time;
        self
    }

    pub fn is_marker(&self) -> bool {
        self.exec_time == 0 && self.memory == 0
    }
}

/// Unvalidated application graph.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkflowApplication {
    pub functions: Vec<FunctionSpec>,
    pub edges: Vec<(FunctionId, FunctionId)>,
}

impl WorkflowApplication {
    pub fn new(functions: Vec<FunctionSpec>, edges: Vec<(usize, usize)>) -> Self {
        Self {
            functions,
            edges: edges
                .into_iter()
                .map(|(a, b)| (FunctionId(a), FunctionId(b)))
                .collect(),
        }
    }

    pub fn validate(self) -> Result<ValidatedApplication, WorkflowError> {
        validate_application(self)
    }
}

/// An application that passed structural validation, with adjacency and a
/// topological order cached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidatedApplication {
    functions: Vec<FunctionSpec>,
    edges: Vec<(FunctionId, FunctionId)>,
    preds: Vec<Vec<FunctionId>>,
    succs: Vec<Vec<FunctionId>>,
    topo: Vec<FunctionId>,
    entry: FunctionId,
    exit: FunctionId,
}

pub fn validate_application(app: WorkflowApplication) -> Result<ValidatedApplication, WorkflowError> {
    let n = app.functions.len();
    if n == 0 {
        return Err(WorkflowError::Empty);
    }
    let mut edges: Vec<(FunctionId, FunctionId)> = Vec::with_capacity(app.edges.len());
    for &(a, b) in &app.edges {
        for f in [a, b] {
            if f.0 >= n {
                return Err(WorkflowError::UnknownFunction(f.0));
            }
        }
        if !edges.contains(&(a, b)) {
            edges.push((a, b));
        }
    }
    let mut preds = vec![Vec::new(); n];
    let mut succs = vec![Vec::new(); n];
    for &(a, b) in &edges {
        succs[a.0].push(b);
        preds[b.0].push(a);
    }
    for list in preds.iter_mut().chain(succs.iter_mut()) {
        list.sort_unstable();
    }

    // Kahn's algorithm; lowest index first so the order is deterministic.
    let mut indegree: Vec<usize> = preds.iter().map(Vec::len).collect();
    let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut topo = Vec::with_capacity(n);
    while let Some(i) = ready.pop_first() {
        topo.push(FunctionId(i));
        for s in &succs[i] {
            indegree[s.0] -= 1;
            if indegree[s.0] == 0 {
                ready.insert(s.0);
            }
        }
    }
    if topo.len() != n {
        return Err(WorkflowError::CycleDetected);
    }

    let names = |ids: Vec<usize>| ids.into_iter().map(|i| app.functions[i].name.clone()).collect();
    let entries: Vec<usize> = (0..n).filter(|&i| preds[i].is_empty()).collect();
    if entries.len() > 1 {
        return Err(WorkflowError::MultipleEntries(names(entries)));
    }
    let exits: Vec<usize> = (0..n).filter(|&i| succs[i].is_empty()).collect();
    if exits.len() > 1 {
        return Err(WorkflowError::MultipleExits(names(exits)));
    }
    let entry = FunctionId(entries[0]);
    let exit = FunctionId(exits[0]);

    let forward = reachable(entry, &succs, |_| true);
    let backward = reachable(exit, &preds, |_| true);
    if let Some(i) = (0..n).find(|&i| !forward[i] || !backward[i]) {
        return Err(WorkflowError::UnreachableFunction(app.functions[i].name.clone()));
    }

    for (i, f) in app.functions.iter().enumerate() {
        let endpoint = i == entry.0 || i == exit.0;
        if f.is_marker() {
            if !endpoint {
                return Err(WorkflowError::InvalidFunction {
                    name: f.name.clone(),
                    reason: "only entry or exit may be zero-cost markers",
                });
            }
        } else if f.exec_time == 0 {
            return Err(WorkflowError::InvalidFunction {
                name: f.name.clone(),
                reason: "execution time must be positive",
            });
        } else if f.memory == 0 {
            return Err(WorkflowError::InvalidFunction {
                name: f.name.clone(),
                reason: "memory must be positive",
            });
        }
    }

    Ok(ValidatedApplication {
        functions: app.functions,
        edges,
        preds,
        succs,
        topo,
        entry,
        exit,
    })
}

fn reachable(
    start: FunctionId,
    adjacency: &[Vec<FunctionId>],
    allowed: impl Fn(FunctionId) -> bool,
) -> Vec<bool> {
    let mut seen = vec![false; adjacency.len()];
    if !allowed(start) {
        return seen;
    }
    let mut queue = VecDeque::from([start]);
    seen[start.0] = true;
    while let Some(f) = queue.pop_front() {
        for &next in &adjacency[f.0] {
            if !seen[next.0] && allowed(next) {
                seen[next.0] = true;
                queue.push_back(next);
            }
        }
    }
    seen
}

impl ValidatedApplication {
    pub fn functions(&self) -> &[FunctionSpec] {
        &self.functions
    }

    pub fn function(&self, id: FunctionId) -> &FunctionSpec {
        &self.functions[id.0]
    }

    pub fn function_ids(&self) -> impl Iterator<Item = FunctionId> + '_ {
        (0..self.functions.len()).map(FunctionId)
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn edges(&self) -> &[(FunctionId, FunctionId)] {
        &self.edges
    }

    pub fn predecessors(&self, id: FunctionId) -> &[FunctionId] {
        &self.preds[id.0]
    }

    pub fn successors(&self, id: FunctionId) -> &[FunctionId] {
        &self.succs[id.0]
    }

    pub fn topo_order(&self) -> &[FunctionId] {
        &self.topo
    }

    pub fn entry(&self) -> FunctionId {
        self.entry
    }

    pub fn exit(&self) -> FunctionId {
        self.exit
    }

    pub fn find(&self, name: &str) -> Option<FunctionId> {
        self.functions.iter().position(|f| f.name == name).map(FunctionId)
    }

    /// The type that invokes every function of the application.
    pub fn full_type(&self, id: WorkflowTypeId) -> WorkflowType {
        let all: BTreeSet<FunctionId> = self.function_ids().collect();
        derive_workflow_type(self, id, &all).expect("a validated application is its own connected type")
    }

    pub fn into_unvalidated(self) -> WorkflowApplication {
        WorkflowApplication {
            functions: self.functions,
            edges: self.edges,
        }
    }
}

/// A sub-graph of the application actually executed by some requests.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkflowType {
    pub id: WorkflowTypeId,
    membership: Vec<bool>,
    members: Vec<FunctionId>,
    edges: Vec<(FunctionId, FunctionId)>,
    preds: Vec<Vec<FunctionId>>,
    succs: Vec<Vec<FunctionId>>,
    topo: Vec<FunctionId>,
    entry: FunctionId,
    exit: FunctionId,
    critical_path: Millis,
}

pub fn derive_workflow_type(
    app: &ValidatedApplication,
    id: WorkflowTypeId,
    invoked: &BTreeSet<FunctionId>,
) -> Result<WorkflowType, WorkflowError> {
    let n = app.len();
    if let Some(bad) = invoked.iter().find(|f| f.0 >= n) {
        return Err(WorkflowError::UnknownFunction(bad.0));
    }
    if !invoked.contains(&app.entry()) || !invoked.contains(&app.exit()) {
        return Err(WorkflowError::MissingEndpoint);
    }
    let mut membership = vec![false; n];
    for f in invoked {
        membership[f.0] = true;
    }
    let edges: Vec<(FunctionId, FunctionId)> = app
        .edges()
        .iter()
        .copied()
        .filter(|(a, b)| membership[a.0] && membership[b.0])
        .collect();
    let mut preds = vec![Vec::new(); n];
    let mut succs = vec![Vec::new(); n];
    for &(a, b) in &edges {
        succs[a.0].push(b);
        preds[b.0].push(a);
    }
    for list in preds.iter_mut().chain(succs.iter_mut()) {
        list.sort_unstable();
    }
    let forward = reachable(app.entry(), &succs, |f| membership[f.0]);
    let backward = reachable(app.exit(), &preds, |f| membership[f.0]);
    if invoked.iter().any(|f| !forward[f.0] || !backward[f.0]) {
        return Err(WorkflowError::DisconnectedSubgraph);
    }
    let topo: Vec<FunctionId> = app
        .topo_order()
        .iter()
        .copied()
        .filter(|f| membership[f.0])
        .collect();

    let mut finish = vec![0; n];
    for &f in &topo {
        let start = preds[f.0].iter().map(|p| finish[p.0]).max().unwrap_or(0);
        finish[f.0] = start + app.function(f).exec_time;
    }
    let critical_path = finish[app.exit().0];

    Ok(WorkflowType {
        id,
        membership,
        members: invoked.iter().copied().collect(),
        edges,
        preds,
        succs,
        topo,
        entry: app.entry(),
        exit: app.exit(),
        critical_path,
    })
}

impl WorkflowType {
    /// Whether a function belongs to the type.
    pub fn contains(&self, f: FunctionId) -> bool {
        self.membership.get(f.0).copied().unwrap_or(false)
    }

    pub fn members(&self) -> &[FunctionId] {
        &self.members
    }

    pub fn edges(&self) -> &[(FunctionId, FunctionId)] {
        &self.edges
    }

    pub fn predecessors(&self, f: FunctionId) -> &[FunctionId] {
        &self.preds[f.0]
    }

    pub fn successors(&self, f: FunctionId) -> &[FunctionId] {
        &self.succs[f.0]
    }

    pub fn topo_order(&self) -> &[FunctionId] {
        &self.topo
    }

    pub fn entry(&self) -> FunctionId {
        self.entry
    }

    pub fn exit(&self) -> FunctionId {
        self.exit
    }

    /// Longest entry to exit path weighted by execution time.
    pub fn critical_path_exec_time(&self) -> Millis {
        self.critical_path
    }

    /// Members whose in-type predecessors are all completed and which are
    /// not completed themselves. `completed` is indexed by function id.
    pub fn ready_functions(&self, completed: &[bool]) -> Vec<FunctionId> {
        let done = |f: FunctionId| completed.get(f.0).copied().unwrap_or(false);
        self.members
            .iter()
            .copied()
            .filter(|&f| !done(f) && self.preds[f.0].iter().all(|&p| done(p)))
            .collect()
    }
}

/// One timed workflow request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkflowRequest {
    pub id: RequestId,
    pub type_id: WorkflowTypeId,
    pub arrival: Millis,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(execs: &[Millis]) -> ValidatedApplication {
        let mut functions = vec![FunctionSpec::marker("entry")];
        for (i, &e) in execs.iter().enumerate() {
            functions.push(FunctionSpec::new(format!("f{i}"), e, 64));
        }
        functions.push(FunctionSpec::marker("exit"));
        let edges = (0..functions.len() - 1).map(|i| (i, i + 1)).collect();
        WorkflowApplication::new(functions, edges).validate().unwrap()
    }

    pub(crate) fn diamond(b: Millis, c: Millis) -> ValidatedApplication {
        WorkflowApplication::new(
            vec![
                FunctionSpec::marker("entry"),
                FunctionSpec::new("B", b, 64),
                FunctionSpec::new("C", c, 64),
                FunctionSpec::marker("exit"),
            ],
            vec![(0, 1), (0, 2), (1, 3), (2, 3)],
        )
        .validate()
        .unwrap()
    }

    fn set(ids: &[usize]) -> BTreeSet<FunctionId> {
        ids.iter().map(|&i| FunctionId(i)).collect()
    }

    #[test]
    fn smallest_chain_validates_in_order() {
        let app = chain(&[5]);
        assert_eq!(app.topo_order(), &[FunctionId(0), FunctionId(1), FunctionId(2)]);
        assert_eq!(app.entry(), FunctionId(0));
        assert_eq!(app.exit(), FunctionId(2));
    }

    #[test]
    fn two_cycle_is_rejected() {
        let app = WorkflowApplication::new(
            vec![FunctionSpec::new("A", 1, 1), FunctionSpec::new("B", 1, 1)],
            vec![(0, 1), (1, 0)],
        );
        assert_eq!(app.validate().unwrap_err(), WorkflowError::CycleDetected);
    }

    #[test]
    fn two_sources_are_multiple_entries() {
        let app = WorkflowApplication::new(
            vec![
                FunctionSpec::new("A", 1, 1),
                FunctionSpec::new("B", 1, 1),
                FunctionSpec::new("C", 1, 1),
            ],
            vec![(0, 2), (1, 2)],
        );
        assert!(matches!(app.validate(), Err(WorkflowError::MultipleEntries(_))));
    }

    #[test]
    fn two_sinks_are_multiple_exits() {
        let app = WorkflowApplication::new(
            vec![
                FunctionSpec::new("A", 1, 1),
                FunctionSpec::new("B", 1, 1),
                FunctionSpec::new("C", 1, 1),
            ],
            vec![(0, 1), (0, 2)],
        );
        assert!(matches!(app.validate(), Err(WorkflowError::MultipleExits(_))));
    }

    #[test]
    fn inner_marker_is_invalid() {
        let app = WorkflowApplication::new(
            vec![
                FunctionSpec::new("A", 1, 1),
                FunctionSpec::marker("hole"),
                FunctionSpec::new("C", 1, 1),
            ],
            vec![(0, 1), (1, 2)],
        );
        assert!(matches!(app.validate(), Err(WorkflowError::InvalidFunction { .. })));
    }

    #[test]
    fn branch_selection_keeps_induced_edges() {
        let app = diamond(10, 30);
        let ty = derive_workflow_type(&app, WorkflowTypeId(0), &set(&[0, 1, 3])).unwrap();
        assert_eq!(ty.edges(), &[(FunctionId(0), FunctionId(1)), (FunctionId(1), FunctionId(3))]);
        assert!(!ty.contains(FunctionId(2)));
    }

    #[test]
    fn full_invocation_is_the_application() {
        let app = diamond(10, 30);
        let ty = derive_workflow_type(&app, WorkflowTypeId(0), &set(&[0, 1, 2, 3])).unwrap();
        assert_eq!(ty.edges(), app.edges());
        assert_eq!(ty.members().len(), 4);
    }

    #[test]
    fn endpoints_without_path_are_disconnected() {
        let app = diamond(10, 30);
        let err = derive_workflow_type(&app, WorkflowTypeId(0), &set(&[0, 3])).unwrap_err();
        assert_eq!(err, WorkflowError::DisconnectedSubgraph);
        let err = derive_workflow_type(&app, WorkflowTypeId(0), &set(&[1, 3])).unwrap_err();
        assert_eq!(err, WorkflowError::MissingEndpoint);
    }

    #[test]
    fn critical_path_examples() {
        assert_eq!(chain(&[10, 20, 30]).full_type(WorkflowTypeId(0)).critical_path_exec_time(), 60);
        let single = WorkflowApplication::new(vec![FunctionSpec::new("A", 42, 8)], vec![])
            .validate()
            .unwrap();
        assert_eq!(single.full_type(WorkflowTypeId(0)).critical_path_exec_time(), 42);
        assert_eq!(diamond(10, 30).full_type(WorkflowTypeId(0)).critical_path_exec_time(), 30);
    }

    #[test]
    fn ready_functions_examples() {
        let ty = diamond(10, 30).full_type(WorkflowTypeId(0));
        assert_eq!(ty.ready_functions(&[false; 4]), vec![FunctionId(0)]);
        assert_eq!(
            ty.ready_functions(&[true, false, false, false]),
            vec![FunctionId(1), FunctionId(2)]
        );
        assert!(ty.ready_functions(&[true; 4]).is_empty());
        // join waits for both branches
        assert!(ty.ready_functions(&[true, true, false, false]) == vec![FunctionId(2)]);
    }
}
