//! Deterministic discrete-event simulation of a serverless cluster.

mod event;
mod log;
mod state;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use event::{Event, EventKind, EventQueue};
pub use log::{EventLog, LogKind, LogRecord, SpawnReason};
pub use state::{InstanceView, PendingInvocation, SystemSnapshot};

use crate::cluster::{ClusterError, InstanceId, InstanceRecord, LifecycleTrigger, NetworkModel, NodeId, Transition, WorkerNode};
use crate::metrics::{build_report, MetricsError, MetricsReport, RequestTiming};
use crate::placement::PlacementTarget;
use crate::prediction::{ConcurrencyHistory, PredictionError};
use crate::routing::{Invocation, RequestContext, RoutingAction};
use crate::scheduler::{SchedulingAction, Scheduler};
use crate::workflow::{FunctionId, MemoryMb, Millis, RequestId, ValidatedApplication, WorkflowRequest, WorkflowType, WorkflowTypeId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error("event at {time} ms is before the clock ({clock} ms)")]
    PastEvent { time: Millis, clock: Millis },
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("request refers to unknown workflow type {0:?}")]
    UnknownWorkflowType(WorkflowTypeId),
    #[error("workflow type list is not indexed by id")]
    MisnumberedTypes,
    #[error("requests are not sorted by arrival")]
    UnsortedRequests,
    #[error("function `{function}` needs {memory} MB but no node can hold it")]
    FunctionTooLarge { function: String, memory: MemoryMb },
    #[error("simulation stalled with {incomplete} incomplete requests")]
    Stalled { incomplete: usize },
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Horizon `D`; interval ticks stop here.
    pub duration: Millis,
    /// Interval length `TI`.
    pub interval: Millis,
    pub network: NetworkModel,
    pub node_count: usize,
    pub node_memory: MemoryMb,
    /// Per-node capacities overriding `node_count` x `node_memory`.
    pub node_capacities: Option<Vec<MemoryMb>>,
    pub seed: u64,
    pub allow_new_nodes: bool,
    /// Check node memory accounting after every event.
    pub check_invariants: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            duration: 800_000,
            interval: 60_000,
            network: NetworkModel::new(2),
            node_count: 10,
            node_memory: 1000,
            node_capacities: None,
            seed: 0,
            allow_new_nodes: true,
            check_invariants: false,
        }
    }
}

impl SimConfig {
    pub fn capacities(&self) -> Vec<MemoryMb> {
        self.node_capacities
            .clone()
            .unwrap_or_else(|| vec![self.node_memory; self.node_count])
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.duration == 0 {
            return Err(EngineError::InvalidConfig("duration must be positive".into()));
        }
        if self.interval == 0 {
            return Err(EngineError::InvalidConfig("interval must be positive".into()));
        }
        if self.capacities().is_empty() {
            return Err(EngineError::InvalidConfig("at least one node is required".into()));
        }
        Ok(())
    }
}

/// Everything a finished run produced.
#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub log: EventLog,
    pub report: MetricsReport,
    pub instances: Vec<InstanceRecord>,
    pub nodes: Vec<WorkerNode>,
    /// Accounting violations seen with `check_invariants` on.
    pub violations: Vec<String>,
}

#[derive(Debug, Clone)]
struct RequestState {
    request: WorkflowRequest,
    completed: Vec<bool>,
    finished_at: Vec<Millis>,
    ran_on: Vec<Option<NodeId>>,
    data_ready: Vec<Option<Millis>>,
    assigned: Vec<Option<InstanceId>>,
    home: Option<NodeId>,
    bound: Option<NodeId>,
    end: Option<Millis>,
}

impl RequestState {
    fn new(request: WorkflowRequest, functions: usize) -> Self {
        Self {
            request,
            completed: vec![false; functions],
            finished_at: vec![0; functions],
            ran_on: vec![None; functions],
            data_ready: vec![None; functions],
            assigned: vec![None; functions],
            home: None,
            bound: None,
            end: None,
        }
    }
}

pub struct Engine<'a> {
    config: SimConfig,
    app: &'a ValidatedApplication,
    types: &'a [WorkflowType],
    scheduler: Scheduler,
    queue: EventQueue,
    state: SystemSnapshot,
    log: EventLog,
    requests: Vec<RequestState>,
    history: ConcurrencyHistory,
    reasons: Vec<SpawnReason>,
    pending_placement: VecDeque<InstanceId>,
    violations: Vec<String>,
    cold_starts: u64,
    transfer: Millis,
    now: Millis,
}

impl<'a> Engine<'a> {
    pub fn new(
        config: SimConfig,
        app: &'a ValidatedApplication,
        types: &'a [WorkflowType],
        scheduler: Scheduler,
        requests: &[WorkflowRequest],
    ) -> Result<Self, EngineError> {
        config.validate()?;
        if types.iter().enumerate().any(|(i, t)| t.id.0 != i) {
            return Err(EngineError::MisnumberedTypes);
        }
        let capacities = config.capacities();
        let largest = capacities.iter().copied().max().unwrap_or(0);
        let largest = if config.allow_new_nodes {
            largest.max(config.node_memory)
        } else {
            largest
        };
        for spec in app.functions() {
            if spec.memory > largest {
                return Err(EngineError::FunctionTooLarge {
                    function: spec.name.clone(),
                    memory: spec.memory,
                });
            }
        }
        for w in requests.windows(2) {
            if w[1].arrival < w[0].arrival {
                return Err(EngineError::UnsortedRequests);
            }
        }

        let mut engine = Self {
            state: SystemSnapshot::new(&capacities, app.len(), config.allow_new_nodes, config.node_memory),
            history: ConcurrencyHistory::new(types.len(), app.len()),
            config,
            app,
            types,
            scheduler,
            queue: EventQueue::new(),
            log: EventLog::new(),
            requests: Vec::with_capacity(requests.len()),
            reasons: Vec::new(),
            pending_placement: VecDeque::new(),
            violations: Vec::new(),
            cold_starts: 0,
            transfer: 0,
            now: 0,
        };
        for n in &engine.state.nodes {
            engine.log.push(
                0,
                LogKind::NodeAdded {
                    node: n.id,
                    capacity: n.capacity,
                },
            );
        }
        engine.queue.schedule(0, EventKind::IntervalTick { index: 0 })?;
        for (i, r) in requests.iter().enumerate() {
            if r.type_id.0 >= types.len() {
                return Err(EngineError::UnknownWorkflowType(r.type_id));
            }
            // requests are addressed by position from here on
            let r = WorkflowRequest { id: RequestId(i), ..*r };
            engine.requests.push(RequestState::new(r, app.len()));
            engine.queue.schedule(r.arrival, EventKind::WorkflowArrival { request: r.id })?;
        }
        Ok(engine)
    }

    pub fn clock(&self) -> Millis {
        self.now
    }

    /// A frozen copy of the current system state.
    pub fn snapshot(&self) -> SystemSnapshot {
        let mut s = self.state.clone();
        s.clock = self.now;
        s
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn history(&self) -> &ConcurrencyHistory {
        &self.history
    }

    pub fn scheduler(&self) -> &Scheduler {
        &self.scheduler
    }

    /// Schedules an external event.
    pub fn schedule(&mut self, time: Millis, kind: EventKind) -> Result<u64, EngineError> {
        self.queue.schedule(time, kind)
    }

    /// Creates and places one instance of `f` right now, as a pre-warm.
    pub fn prewarm(&mut self, f: FunctionId) -> Result<InstanceId, EngineError> {
        let i = self.spawn(f, SpawnReason::Prewarm);
        self.place(i, None)?;
        Ok(i)
    }

    /// Applies the next event. Returns false once the queue is empty.
    pub fn step(&mut self) -> Result<bool, EngineError> {
        let Some(ev) = self.queue.pop() else {
            return Ok(false);
        };
        self.now = ev.time;
        self.state.clock = ev.time;
        match ev.kind {
            EventKind::IntervalTick { index } => self.on_tick(index)?,
            EventKind::KeepAliveExpire { instance } => self.on_keep_alive(instance)?,
            EventKind::CreationComplete { instance } => self.on_creation_complete(instance)?,
            EventKind::FunctionComplete {
                instance,
                request,
                function,
            } => self.on_function_complete(instance, request, function)?,
            EventKind::DataArrival { request, function } => {
                self.log.push(self.now, LogKind::DataArrival { request, function });
                if let Some(i) = self.requests[request.0].assigned[function.0] {
                    self.try_start(i)?;
                }
            }
            EventKind::WorkflowArrival { request } => self.on_arrival(request)?,
        }
        self.retry_pending()?;
        if self.config.check_invariants && !self.state.is_consistent() {
            self.violations
                .push(format!("t={} ms: node memory accounting violated", self.now));
        }
        Ok(true)
    }

    pub fn run(mut self) -> Result<SimOutcome, EngineError> {
        while self.step()? {}
        self.finish()
    }

    /// Force-expires what is left at the horizon and builds the report.
    pub fn finish(mut self) -> Result<SimOutcome, EngineError> {
        if !self.queue.is_empty() {
            return Err(EngineError::InvalidConfig("finish called with events pending".into()));
        }
        let blocked = self
            .pending_placement
            .iter()
            .any(|&i| !self.state.instance(i).queue.is_empty());
        let incomplete = self.requests.iter().filter(|r| r.end.is_none()).count();
        if blocked || incomplete > 0 {
            return Err(EngineError::Stalled { incomplete });
        }
        for i in std::mem::take(&mut self.pending_placement) {
            self.state.retire(i);
        }
        self.now = self.now.max(self.config.duration);
        self.state.clock = self.now;
        let alive: Vec<InstanceId> = self
            .state
            .instances
            .iter()
            .filter(|v| v.state() == crate::cluster::InstanceState::Paused)
            .map(InstanceView::id)
            .collect();
        for i in alive {
            self.expire(i)?;
        }

        let timings: Vec<RequestTiming> = self
            .requests
            .iter()
            .map(|r| RequestTiming {
                request: r.request.id,
                arrival: r.request.arrival,
                end: r.end.unwrap_or(r.request.arrival),
                critical_path: self.types[r.request.type_id.0].critical_path_exec_time(),
            })
            .collect();
        let instances: Vec<InstanceRecord> = self.state.instances.iter().map(|v| v.record.clone()).collect();
        let report = build_report(
            &timings,
            &instances,
            self.cold_starts,
            self.transfer,
            self.state.nodes.len() as u64,
        )?;
        Ok(SimOutcome {
            log: self.log,
            report,
            instances,
            nodes: self.state.nodes,
            violations: self.violations,
        })
    }

    fn next_tick_after(&self, t: Millis) -> Option<Millis> {
        let next = (t / self.config.interval + 1) * self.config.interval;
        (next < self.config.duration).then_some(next)
    }

    fn on_tick(&mut self, index: u64) -> Result<(), EngineError> {
        self.log.push(self.now, LogKind::IntervalTick { index });
        if index > 0 {
            self.history.close_interval();
        }
        // a new plan supersedes pre-warms that never found room
        let stale: Vec<InstanceId> = self
            .pending_placement
            .iter()
            .copied()
            .filter(|&i| self.reasons[i.0] != SpawnReason::ColdStart && self.state.instance(i).queue.is_empty())
            .collect();
        if !stale.is_empty() {
            self.pending_placement.retain(|i| !stale.contains(i));
            for i in stale {
                self.state.retire(i);
            }
        }
        match self
            .scheduler
            .on_tick(index, &self.history, &self.state, self.app, self.types)
        {
            Ok(actions) => self.apply(actions)?,
            Err(PredictionError::EmptyHistory) => {}
            Err(e) => self.log.push(self.now, LogKind::PolicyError { message: e.to_string() }),
        }
        let next = (index + 1) * self.config.interval;
        if next < self.config.duration {
            self.queue.schedule(next, EventKind::IntervalTick { index: index + 1 })?;
        }
        Ok(())
    }

    fn apply(&mut self, actions: Vec<SchedulingAction>) -> Result<(), EngineError> {
        for a in actions {
            match a {
                SchedulingAction::Create { function, reason } => {
                    let i = self.spawn(function, reason);
                    self.place(i, None)?;
                }
                SchedulingAction::Kill(i) => self.expire(i)?,
                SchedulingAction::Retain { instance, until } => self.arm_expiry(instance, until)?,
            }
        }
        Ok(())
    }

    fn on_arrival(&mut self, r: RequestId) -> Result<(), EngineError> {
        let ty = &self.types[self.requests[r.0].request.type_id.0];
        self.history.record_arrival(ty.id);
        self.log.push(
            self.now,
            LogKind::WorkflowArrival {
                request: r,
                workflow_type: ty.id,
                critical_path_ms: ty.critical_path_exec_time(),
            },
        );
        let entry = ty.entry();
        self.make_ready(r, entry)
    }

    fn make_ready(&mut self, r: RequestId, f: FunctionId) -> Result<(), EngineError> {
        if self.app.function(f).is_marker() {
            self.log.push(self.now, LogKind::MarkerComplete { request: r, function: f });
            return self.finish_function(r, f, None);
        }
        self.route_invocation(
            Invocation {
                request: r,
                function: f,
                creation_triggered: false,
            },
            false,
        )?;
        Ok(())
    }

    /// Returns false when the invocation stays deferred.
    fn route_invocation(&mut self, inv: Invocation, retry: bool) -> Result<bool, EngineError> {
        let (r, f) = (inv.request, inv.function);
        let req = &self.requests[r.0];
        let ctx = RequestContext {
            workflow_type: &self.types[req.request.type_id.0],
            completed: &req.completed,
            home: req.home,
            bound: req.bound,
        };
        let decision = self.scheduler.route(&inv, &self.state, self.app, &ctx);
        let req = &mut self.requests[r.0];
        if let Some(b) = decision.bind {
            req.bound = Some(b);
        }
        if decision.home.is_some() {
            req.home = decision.home;
        }
        let cold = decision.is_cold_start();
        let mut served = true;
        match decision.action {
            RoutingAction::Assign(i) => self.enqueue(r, f, i, false)?,
            RoutingAction::CreateAndAssign { node } => {
                let i = self.spawn(f, SpawnReason::ColdStart);
                self.place(i, node)?;
                self.enqueue(r, f, i, true)?;
            }
            RoutingAction::Defer { spawn } => {
                let pending = PendingInvocation {
                    request: r,
                    function: f,
                    creation_triggered: inv.creation_triggered || spawn,
                };
                if retry {
                    self.state.deferred_mut(f).push_front(pending);
                } else {
                    self.state.deferred_mut(f).push_back(pending);
                    self.log.push(
                        self.now,
                        LogKind::Defer {
                            request: r,
                            function: f,
                            cold_start: cold,
                        },
                    );
                }
                if cold {
                    self.cold_starts += 1;
                }
                if spawn {
                    let i = self.spawn(f, SpawnReason::ColdStart);
                    self.place(i, None)?;
                }
                served = false;
            }
        }
        for (s, n) in decision.prewarm {
            if self.state.node(n).can_host(self.app.function(s).memory) {
                let i = self.spawn(s, SpawnReason::Affinity);
                self.place(i, Some(n))?;
            }
        }
        if !retry {
            let actions = self.scheduler.on_routed(f, cold, &self.state, self.app);
            self.apply(actions)?;
        }
        Ok(served)
    }

    fn serve_deferred(&mut self, f: FunctionId) -> Result<(), EngineError> {
        while let Some(p) = self.state.deferred_mut(f).pop_front() {
            let inv = Invocation {
                request: p.request,
                function: f,
                creation_triggered: p.creation_triggered,
            };
            if !self.route_invocation(inv, true)? {
                break;
            }
        }
        Ok(())
    }

    fn enqueue(&mut self, r: RequestId, f: FunctionId, i: InstanceId, cold: bool) -> Result<(), EngineError> {
        self.requests[r.0].assigned[f.0] = Some(i);
        self.state.instance_mut(i).queue.push_back(r);
        self.log.push(
            self.now,
            LogKind::Assign {
                request: r,
                function: f,
                instance: i,
                cold_start: cold,
            },
        );
        if cold {
            self.cold_starts += 1;
        }
        if let Some(node) = self.state.instance(i).node() {
            self.resolve_data(r, f, node)?;
        }
        self.try_start(i)
    }

    /// Charges inbound transfers for `f` running on `node` and schedules
    /// the arrival of the last input.
    fn resolve_data(&mut self, r: RequestId, f: FunctionId, node: NodeId) -> Result<(), EngineError> {
        let ty = &self.types[self.requests[r.0].request.type_id.0];
        let mut ready = self.now;
        for &p in ty.predecessors(f) {
            let req = &self.requests[r.0];
            let Some(src) = req.ran_on[p.0] else { continue };
            let latency = self.config.network.transfer_latency(src, node);
            if latency > 0 {
                self.transfer += latency;
                self.log.push(
                    self.now,
                    LogKind::Transfer {
                        request: r,
                        function: f,
                        latency_ms: latency,
                    },
                );
            }
            ready = ready.max(req.finished_at[p.0] + latency);
        }
        self.requests[r.0].data_ready[f.0] = Some(ready);
        if ready > self.now {
            self.queue
                .schedule(ready, EventKind::DataArrival { request: r, function: f })?;
        }
        Ok(())
    }

    fn try_start(&mut self, i: InstanceId) -> Result<(), EngineError> {
        let v = self.state.instance(i);
        if v.state() != crate::cluster::InstanceState::Paused || v.running.is_some() {
            return Ok(());
        }
        let Some(&r) = v.queue.front() else {
            return Ok(());
        };
        let f = v.record.function;
        match self.requests[r.0].data_ready[f.0] {
            Some(t) if t <= self.now => {}
            _ => return Ok(()),
        }
        let record = self.transition(i, LifecycleTrigger::Invoke)?;
        let exec = self.app.function(f).exec_time;
        let now = self.now;
        let v = self.state.instance_mut(i);
        v.record = record;
        v.queue.pop_front();
        v.running = Some(r);
        v.busy_until = Some(now + exec);
        v.expire_at = None;
        self.log.push(
            now,
            LogKind::FunctionStart {
                instance: i,
                request: r,
                function: f,
            },
        );
        self.queue.schedule(
            now + exec,
            EventKind::FunctionComplete {
                instance: i,
                request: r,
                function: f,
            },
        )?;
        Ok(())
    }

    fn on_function_complete(&mut self, i: InstanceId, r: RequestId, f: FunctionId) -> Result<(), EngineError> {
        let record = self.transition(i, LifecycleTrigger::Complete)?;
        let node = record.node;
        let v = self.state.instance_mut(i);
        v.record = record;
        v.running = None;
        v.busy_until = None;
        self.log.push(
            self.now,
            LogKind::FunctionComplete {
                instance: i,
                request: r,
                function: f,
            },
        );
        if self.scheduler.releases_on_complete() && self.state.instance(i).queue.is_empty() {
            self.expire(i)?;
        } else {
            self.after_paused(i)?;
        }
        self.finish_function(r, f, node)
    }

    fn on_creation_complete(&mut self, i: InstanceId) -> Result<(), EngineError> {
        let record = self.transition(i, LifecycleTrigger::CreationComplete)?;
        let v = self.state.instance_mut(i);
        v.record = record;
        v.ready_at = None;
        self.log.push(self.now, LogKind::CreationComplete { instance: i });
        self.after_paused(i)
    }

    /// Start queued work, hand the instance to a waiting invocation, or
    /// start its keep-alive window.
    fn after_paused(&mut self, i: InstanceId) -> Result<(), EngineError> {
        self.try_start(i)?;
        if self.state.instance(i).is_idle() {
            let f = self.state.instance(i).record.function;
            self.serve_deferred(f)?;
        }
        if self.state.instance(i).is_idle() {
            let until = self.now + self.scheduler.bundle().keep_alive;
            self.arm_expiry(i, until)?;
        }
        Ok(())
    }

    fn arm_expiry(&mut self, i: InstanceId, until: Millis) -> Result<(), EngineError> {
        self.state.instance_mut(i).expire_at = Some(until);
        self.queue.schedule(until, EventKind::KeepAliveExpire { instance: i })?;
        Ok(())
    }

    fn on_keep_alive(&mut self, i: InstanceId) -> Result<(), EngineError> {
        let v = self.state.instance(i);
        if !v.is_idle() || v.expire_at != Some(self.now) {
            return Ok(());
        }
        let next_tick = self.next_tick_after(self.now);
        let actions = self.scheduler.on_expiring(i, next_tick, &self.state, self.app);
        self.apply(actions)
    }

    fn expire(&mut self, i: InstanceId) -> Result<(), EngineError> {
        let record = self.transition(i, LifecycleTrigger::Expire)?;
        self.state.instance_mut(i).record = record;
        self.state.instance_mut(i).expire_at = None;
        self.state.retire(i);
        self.log.push(self.now, LogKind::KeepAliveExpire { instance: i });
        Ok(())
    }

    fn finish_function(&mut self, r: RequestId, f: FunctionId, node: Option<NodeId>) -> Result<(), EngineError> {
        let now = self.now;
        let req = &mut self.requests[r.0];
        req.completed[f.0] = true;
        req.finished_at[f.0] = now;
        req.ran_on[f.0] = node;
        let ty = &self.types[req.request.type_id.0];
        if f == ty.exit() {
            req.end = Some(now);
            self.log.push(now, LogKind::RequestComplete { request: r });
            return Ok(());
        }
        let ready: Vec<FunctionId> = ty
            .successors(f)
            .iter()
            .copied()
            .filter(|s| ty.predecessors(*s).iter().all(|p| req.completed[p.0]))
            .collect();
        for s in ready {
            self.make_ready(r, s)?;
        }
        Ok(())
    }

    fn spawn(&mut self, f: FunctionId, reason: SpawnReason) -> InstanceId {
        let id = InstanceId(self.state.instances.len());
        let memory = self.app.function(f).memory;
        self.state
            .push_instance(InstanceRecord::undeployed(id, f, memory, self.now));
        self.reasons.push(reason);
        self.history.record_creation(f);
        self.log.push(
            self.now,
            LogKind::Spawn {
                instance: id,
                function: f,
                memory,
                reason,
            },
        );
        id
    }

    fn choose_node(&mut self, i: InstanceId, hint: Option<NodeId>) -> Option<NodeId> {
        let memory = self.state.instance(i).record.memory;
        if let Some(n) = hint.filter(|n| self.state.node(*n).can_host(memory)) {
            return Some(n);
        }
        let decision = self.scheduler.place(&self.state.instance(i).record, &self.state, self.app);
        match decision.target {
            PlacementTarget::Node(n) if self.state.node(n).can_host(memory) => Some(n),
            PlacementTarget::NewNode if self.config.node_memory >= memory => {
                let n = self.state.add_node(self.config.node_memory);
                self.log.push(
                    self.now,
                    LogKind::NodeAdded {
                        node: n,
                        capacity: self.config.node_memory,
                    },
                );
                Some(n)
            }
            _ => None,
        }
    }

    fn place(&mut self, i: InstanceId, hint: Option<NodeId>) -> Result<(), EngineError> {
        match self.choose_node(i, hint) {
            Some(n) => self.deploy(i, n),
            None => {
                self.pending_placement.push_back(i);
                self.log.push(self.now, LogKind::PlacementDeferred { instance: i });
                if self.reasons[i.0] == SpawnReason::Prewarm {
                    let function = self.state.instance(i).record.function;
                    self.log
                        .push(self.now, LogKind::PrewarmFailure { instance: i, function });
                }
                Ok(())
            }
        }
    }

    fn retry_pending(&mut self) -> Result<(), EngineError> {
        for _ in 0..self.pending_placement.len() {
            let Some(i) = self.pending_placement.pop_front() else { break };
            match self.choose_node(i, None) {
                Some(n) => self.deploy(i, n)?,
                None => self.pending_placement.push_back(i),
            }
        }
        Ok(())
    }

    fn deploy(&mut self, i: InstanceId, n: NodeId) -> Result<(), EngineError> {
        let record = self.transition(i, LifecycleTrigger::Deploy { node: n })?;
        let memory = record.memory;
        let cold = self.app.function(record.function).cold_start_time;
        self.state.nodes[n.0].attach(i, memory);
        let ready = self.now + cold;
        let v = self.state.instance_mut(i);
        v.record = record;
        v.ready_at = Some(ready);
        self.log.push(self.now, LogKind::Deploy { instance: i, node: n });
        self.queue.schedule(ready, EventKind::CreationComplete { instance: i })?;
        let waiting: Vec<RequestId> = self.state.instance(i).queue.iter().copied().collect();
        let f = self.state.instance(i).record.function;
        for r in waiting {
            self.resolve_data(r, f, n)?;
        }
        Ok(())
    }

    fn transition(&self, i: InstanceId, trigger: LifecycleTrigger) -> Result<InstanceRecord, EngineError> {
        match self.state.instance(i).record.transition(trigger, self.now)? {
            Transition::Changed(r) => Ok(r),
            Transition::Queued => Ok(self.state.instance(i).record.clone()),
        }
    }
}

/// Runs one complete simulation.
pub fn run(
    config: SimConfig,
    app: &ValidatedApplication,
    types: &[WorkflowType],
    scheduler: Scheduler,
    requests: &[WorkflowRequest],
) -> Result<SimOutcome, EngineError> {
    Engine::new(config, app, types, scheduler, requests)?.run()
}
