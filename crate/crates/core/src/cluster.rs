//! Worker nodes, function instances and their lifecycle, and the
//! fixed-latency network between nodes.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::workflow::{FunctionId, MemoryMb, Millis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InstanceId(pub usize);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClusterError {
    #[error("illegal transition {trigger:?} from state {state:?}")]
    IllegalTransition {
        state: InstanceState,
        trigger: LifecycleTrigger,
    },
    #[error("instance {0:?} has not been killed")]
    NotTerminated(InstanceId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceState {
    Undeployed,
    Creating,
    Paused,
    Running,
    Killed,
}

impl InstanceState {
    pub const ALL: [InstanceState; 5] = [
        InstanceState::Undeployed,
        InstanceState::Creating,
        InstanceState::Paused,
        InstanceState::Running,
        InstanceState::Killed,
    ];

    pub fn is_alive(self) -> bool {
        self != InstanceState::Killed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LifecycleTrigger {
    Deploy { node: NodeId },
    CreationComplete,
    Invoke,
    Complete,
    Expire,
}

impl LifecycleTrigger {
    pub fn all(node: NodeId) -> [LifecycleTrigger; 5] {
        [
            LifecycleTrigger::Deploy { node },
            LifecycleTrigger::CreationComplete,
            LifecycleTrigger::Invoke,
            LifecycleTrigger::Complete,
            LifecycleTrigger::Expire,
        ]
    }
}

/// Result of applying a trigger that is legal in the current state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Transition {
    /// The instance moved along a lifecycle edge.
    Changed(InstanceRecord),
    /// An invocation reached an instance that is not created yet; it waits
    /// in the instance queue and the state is unchanged.
    Queued,
}

/// One function instance and its lifecycle timestamps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub id: InstanceId,
    pub function: FunctionId,
    pub node: Option<NodeId>,
    pub state: InstanceState,
    pub memory: MemoryMb,
    pub created_at: Option<Millis>,
    pub killed_at: Option<Millis>,
    pub idle_accum: Millis,
    pub last_state_change: Millis,
}

impl InstanceRecord {
    pub fn undeployed(id: InstanceId, function: FunctionId, memory: MemoryMb, now: Millis) -> Self {
        Self {
            id,
            function,
            node: None,
            state: InstanceState::Undeployed,
            memory,
            created_at: None,
            killed_at: None,
            idle_accum: 0,
            last_state_change: now,
        }
    }

    /// Applies one lifecycle trigger. Idle time accrues for every interval
    /// spent in `Paused`.
    pub fn transition(&self, trigger: LifecycleTrigger, now: Millis) -> Result<Transition, ClusterError> {
        use InstanceState::*;
        use LifecycleTrigger as T;
        let illegal = || ClusterError::IllegalTransition {
            state: self.state,
            trigger,
        };
        let mut next = self.clone();
        match (self.state, trigger) {
            (Undeployed, T::Deploy { node }) => {
                next.state = Creating;
                next.node = Some(node);
                next.created_at = Some(now);
            }
            (Creating, T::CreationComplete) => next.state = Paused,
            (Paused, T::Invoke) => {
                next.idle_accum += now.checked_sub(self.last_state_change).ok_or_else(illegal)?;
                next.state = Running;
            }
            (Running, T::Complete) => next.state = Paused,
            (Paused, T::Expire) => {
                next.idle_accum += now.checked_sub(self.last_state_change).ok_or_else(illegal)?;
                next.state = Killed;
                next.killed_at = Some(now);
            }
            (Undeployed | Creating, T::Invoke) => return Ok(Transition::Queued),
            _ => return Err(illegal()),
        }
        next.last_state_change = now;
        Ok(Transition::Changed(next))
    }

    pub fn lifetime(&self) -> Option<Millis> {
        Some(self.killed_at? - self.created_at?)
    }
}

/// Total and execution cost of a terminated instance, in MB·ms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct InstanceCosts {
    pub total: u64,
    pub exec: u64,
}

impl InstanceCosts {
    pub fn total_mb_seconds(&self) -> f64 {
        self.total as f64 / 1000.0
    }

    pub fn exec_mb_seconds(&self) -> f64 {
        self.exec as f64 / 1000.0
    }
}

/// Memory-time cost of a killed instance. Undeployed instances that never
/// reached a node cost nothing.
pub fn instance_costs(inst: &InstanceRecord) -> Result<InstanceCosts, ClusterError> {
    if inst.state != InstanceState::Killed {
        return Err(ClusterError::NotTerminated(inst.id));
    }
    let lifetime = inst.lifetime().unwrap_or(0);
    Ok(InstanceCosts {
        total: lifetime * inst.memory,
        exec: (lifetime - inst.idle_accum) * inst.memory,
    })
}

/// A worker node with a memory budget.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerNode {
    pub id: NodeId,
    pub capacity: MemoryMb,
    pub used: MemoryMb,
    pub resident: BTreeSet<InstanceId>,
}

impl WorkerNode {
    pub fn new(id: NodeId, capacity: MemoryMb) -> Self {
        Self {
            id,
            capacity,
            used: 0,
            resident: BTreeSet::new(),
        }
    }

    pub fn can_host(&self, memory: MemoryMb) -> bool {
        self.used + memory <= self.capacity
    }

    pub fn free(&self) -> MemoryMb {
        self.capacity - self.used
    }

    pub fn usage_ratio(&self) -> f64 {
        if self.capacity == 0 {
            1.0
        } else {
            self.used as f64 / self.capacity as f64
        }
    }

    pub(crate) fn attach(&mut self, inst: InstanceId, memory: MemoryMb) {
        debug_assert!(self.can_host(memory));
        self.used += memory;
        self.resident.insert(inst);
    }

    pub(crate) fn detach(&mut self, inst: InstanceId, memory: MemoryMb) {
        if self.resident.remove(&inst) {
            self.used -= memory;
        }
    }
}

pub fn can_host(node: &WorkerNode, memory: MemoryMb) -> bool {
    node.can_host(memory)
}

/// Constant inter-node latency `d`; co-located transfers are free.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct NetworkModel {
    pub delay: Millis,
}

impl NetworkModel {
    pub fn new(delay: Millis) -> Self {
        Self { delay }
    }

    pub fn transfer_latency(&self, src: NodeId, dst: NodeId) -> Millis {
        if src == dst {
            0
        } else {
            self.delay
        }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "w{}", self.0)
    }
}
