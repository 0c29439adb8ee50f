use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::cluster::{InstanceId, InstanceRecord, InstanceState, NodeId, WorkerNode};
use crate::workflow::{FunctionId, MemoryMb, Millis, RequestId};

/// An instance plus the engine bookkeeping that routing needs to see.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceView {
    pub record: InstanceRecord,
    /// Invocations assigned to the instance and not yet started.
    pub queue: VecDeque<RequestId>,
    pub running: Option<RequestId>,
    pub busy_until: Option<Millis>,
    /// Creation completion time while `Creating`.
    pub ready_at: Option<Millis>,
    pub expire_at: Option<Millis>,
}

impl InstanceView {
    pub fn new(record: InstanceRecord) -> Self {
        Self {
            record,
            queue: VecDeque::new(),
            running: None,
            busy_until: None,
            ready_at: None,
            expire_at: None,
        }
    }

    pub fn id(&self) -> InstanceId {
        self.record.id
    }

    pub fn state(&self) -> InstanceState {
        self.record.state
    }

    pub fn node(&self) -> Option<NodeId> {
        self.record.node
    }

    /// Paused with nothing assigned.
    pub fn is_idle(&self) -> bool {
        self.record.state == InstanceState::Paused && self.queue.is_empty() && self.running.is_none()
    }

    /// Not running and nothing queued; may still be creating.
    pub fn is_unclaimed(&self) -> bool {
        self.record.state.is_alive()
            && self.record.state != InstanceState::Running
            && self.queue.is_empty()
            && self.running.is_none()
    }

    /// Time until a newly queued invocation could start here.
    pub fn waiting_time(&self, exec: Millis, cold_start: Millis, now: Millis) -> Millis {
        let base = match self.record.state {
            InstanceState::Running => self.busy_until.map_or(exec, |t| t.saturating_sub(now)),
            InstanceState::Creating => self.ready_at.map_or(cold_start, |t| t.saturating_sub(now)),
            InstanceState::Undeployed => cold_start,
            InstanceState::Paused => 0,
            InstanceState::Killed => return Millis::MAX,
        };
        base + self.queue.len() as Millis * exec
    }
}

/// An invocation waiting for an idle instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingInvocation {
    pub request: RequestId,
    pub function: FunctionId,
    pub creation_triggered: bool,
}

/// The system state seen by policies. The engine owns one and mutates
/// it between events; `Engine::snapshot` hands out frozen copies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSnapshot {
    pub clock: Millis,
    pub nodes: Vec<WorkerNode>,
    pub instances: Vec<InstanceView>,
    pub allow_new_nodes: bool,
    pub node_memory: MemoryMb,
    deferred: Vec<VecDeque<PendingInvocation>>,
    alive: Vec<BTreeSet<InstanceId>>,
}

impl SystemSnapshot {
    pub fn new(capacities: &[MemoryMb], function_count: usize, allow_new_nodes: bool, node_memory: MemoryMb) -> Self {
        Self {
            clock: 0,
            nodes: capacities
                .iter()
                .enumerate()
                .map(|(i, &c)| WorkerNode::new(NodeId(i), c))
                .collect(),
            instances: Vec::new(),
            allow_new_nodes,
            node_memory,
            deferred: vec![VecDeque::new(); function_count],
            alive: vec![BTreeSet::new(); function_count],
        }
    }

    pub fn instance(&self, id: InstanceId) -> &InstanceView {
        &self.instances[id.0]
    }

    pub fn node(&self, id: NodeId) -> &WorkerNode {
        &self.nodes[id.0]
    }

    /// Non-killed instances of `f` in id order, including ones still
    /// waiting for a node.
    pub fn alive_instances(&self, f: FunctionId) -> impl Iterator<Item = &InstanceView> + '_ {
        self.alive
            .get(f.0)
            .into_iter()
            .flatten()
            .map(move |id| &self.instances[id.0])
    }

    pub fn idle_instances(&self, f: FunctionId) -> impl Iterator<Item = &InstanceView> + '_ {
        self.alive_instances(f).filter(|v| v.is_idle())
    }

    pub fn alive_count(&self, f: FunctionId) -> usize {
        self.alive.get(f.0).map_or(0, BTreeSet::len)
    }

    pub fn pending(&self) -> impl Iterator<Item = &PendingInvocation> + '_ {
        self.deferred.iter().flatten()
    }

    pub fn deferred(&self, f: FunctionId) -> &VecDeque<PendingInvocation> {
        &self.deferred[f.0]
    }

    /// Resident sets match instance placement and used memory matches the
    /// residents.
    pub fn is_consistent(&self) -> bool {
        self.nodes.iter().all(|n| {
            let sum: MemoryMb = n.resident.iter().map(|i| self.instances[i.0].record.memory).sum();
            sum == n.used
                && n.used <= n.capacity
                && n.resident.iter().all(|i| {
                    let r = &self.instances[i.0].record;
                    r.node == Some(n.id) && r.state.is_alive() && r.state != InstanceState::Undeployed
                })
        })
    }

    pub(crate) fn push_instance(&mut self, record: InstanceRecord) -> InstanceId {
        let id = record.id;
        debug_assert_eq!(id.0, self.instances.len());
        self.alive[record.function.0].insert(id);
        self.instances.push(InstanceView::new(record));
        id
    }

    pub(crate) fn instance_mut(&mut self, id: InstanceId) -> &mut InstanceView {
        &mut self.instances[id.0]
    }

    /// Drops the instance from the live index and frees its node memory.
    pub(crate) fn retire(&mut self, id: InstanceId) {
        let view = &self.instances[id.0];
        let (f, node, memory) = (view.record.function, view.record.node, view.record.memory);
        self.alive[f.0].remove(&id);
        if let Some(n) = node {
            self.nodes[n.0].detach(id, memory);
        }
    }

    pub(crate) fn add_node(&mut self, capacity: MemoryMb) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(WorkerNode::new(id, capacity));
        id
    }

    pub(crate) fn deferred_mut(&mut self, f: FunctionId) -> &mut VecDeque<PendingInvocation> {
        &mut self.deferred[f.0]
    }
}
