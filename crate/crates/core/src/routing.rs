//! Assignment of ready invocations to instances.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cluster::{InstanceId, NodeId};
use crate::engine::{InstanceView, SystemSnapshot};
use crate::workflow::{FunctionId, MemoryMb, RequestId, ValidatedApplication, WorkflowType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoutingStrategy {
    Swpas,
    Sfepas,
    Mncpas,
}

impl RoutingStrategy {
    pub const ALL: [RoutingStrategy; 3] = [Self::Swpas, Self::Sfepas, Self::Mncpas];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Swpas => "swpas",
            Self::Sfepas => "sfepas",
            Self::Mncpas => "mncpas",
        }
    }
}

impl fmt::Display for RoutingStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RoutingStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown routing strategy `{s}`"))
    }
}

/// A ready function invocation of one request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Invocation {
    pub request: RequestId,
    pub function: FunctionId,
    /// A creation was already triggered on behalf of this invocation.
    pub creation_triggered: bool,
}

/// Per-request facts only MNCPAS consults.
#[derive(Debug, Clone, Copy)]
pub struct RequestContext<'a> {
    pub workflow_type: &'a WorkflowType,
    /// Indexed by function id.
    pub completed: &'a [bool],
    /// Node chosen for the request's previous hop.
    pub home: Option<NodeId>,
    pub bound: Option<NodeId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoutingAction {
    Assign(InstanceId),
    /// Create a new instance and queue the invocation on it; the node hint
    /// bypasses the placement strategy when it fits.
    CreateAndAssign { node: Option<NodeId> },
    /// Wait for an idle instance, optionally triggering one creation.
    Defer { spawn: bool },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub request: RequestId,
    pub function: FunctionId,
    pub action: RoutingAction,
    /// Instances to create eagerly on a given node.
    pub prewarm: Vec<(FunctionId, NodeId)>,
    /// Node the request should be pinned to from now on.
    pub bind: Option<NodeId>,
    /// Node that served this hop.
    pub home: Option<NodeId>,
}

impl RoutingDecision {
    fn simple(inv: &Invocation, action: RoutingAction) -> Self {
        Self {
            request: inv.request,
            function: inv.function,
            action,
            prewarm: Vec::new(),
            bind: None,
            home: None,
        }
    }

    /// The decision triggers an on-demand creation.
    pub fn is_cold_start(&self) -> bool {
        matches!(
            self.action,
            RoutingAction::CreateAndAssign { .. } | RoutingAction::Defer { spawn: true }
        )
    }
}

fn first_idle(inv: &Invocation, snap: &SystemSnapshot) -> Option<InstanceId> {
    snap.idle_instances(inv.function).next().map(InstanceView::id)
}

/// Shortest waiting time: idle first, then the instance with the least
/// wait unless a cold start would be quicker.
pub fn route_swpas(inv: &Invocation, snap: &SystemSnapshot, app: &ValidatedApplication) -> RoutingDecision {
    if let Some(id) = first_idle(inv, snap) {
        return RoutingDecision::simple(inv, RoutingAction::Assign(id));
    }
    let spec = app.function(inv.function);
    let best = snap
        .alive_instances(inv.function)
        .map(|v| (v.waiting_time(spec.exec_time, spec.cold_start_time, snap.clock), v.id()))
        .min();
    let action = match best {
        Some((wait, id)) if wait <= spec.cold_start_time => RoutingAction::Assign(id),
        _ => RoutingAction::CreateAndAssign { node: None },
    };
    RoutingDecision::simple(inv, action)
}

/// Idle instance on the node with the most free memory, else defer and
/// trigger a creation.
pub fn route_sfepas(inv: &Invocation, snap: &SystemSnapshot) -> RoutingDecision {
    let best = snap
        .idle_instances(inv.function)
        .filter_map(|v| v.node().map(|n| (v, n)))
        .max_by(|(a, na), (b, nb)| {
            let fa = snap.node(*na).free();
            let fb = snap.node(*nb).free();
            // larger free memory wins; ties go to the lower node, then instance id
            fa.cmp(&fb).then(nb.cmp(na)).then(b.id().cmp(&a.id()))
        })
        .map(|(v, _)| v.id());
    let action = match best {
        Some(id) => RoutingAction::Assign(id),
        None => RoutingAction::Defer {
            spawn: !inv.creation_triggered,
        },
    };
    RoutingDecision::simple(inv, action)
}

fn max_free_node(snap: &SystemSnapshot) -> Option<NodeId> {
    snap.nodes
        .iter()
        .max_by(|a, b| a.free().cmp(&b.free()).then(b.id.cmp(&a.id)))
        .map(|n| n.id)
}

/// Single-node execution: the whole request runs on one node where
/// possible, successors are pre-warmed there, and instances are released
/// right after use.
pub fn route_mncpas(
    inv: &Invocation,
    snap: &SystemSnapshot,
    app: &ValidatedApplication,
    ctx: &RequestContext<'_>,
) -> RoutingDecision {
    let f = inv.function;
    let memory = app.function(f).memory;
    let fresh_on = |node: NodeId| {
        snap.alive_instances(f)
            .filter(|v| v.node() == Some(node) && v.is_unclaimed())
            .min_by_key(|v| (v.state() != crate::cluster::InstanceState::Paused, v.id()))
            .map(InstanceView::id)
    };
    let usable = |node: NodeId| fresh_on(node).is_some() || snap.node(node).can_host(memory);

    let target = match (ctx.bound, ctx.home) {
        (Some(b), _) => Some(b),
        (None, Some(h)) if usable(h) => Some(h),
        _ => max_free_node(snap),
    };
    let Some(target) = target else {
        return RoutingDecision::simple(inv, RoutingAction::CreateAndAssign { node: None });
    };

    let (action, mut budget) = match fresh_on(target) {
        Some(id) => (RoutingAction::Assign(id), snap.node(target).free()),
        None if snap.node(target).can_host(memory) => (
            RoutingAction::CreateAndAssign { node: Some(target) },
            snap.node(target).free() - memory,
        ),
        None => (RoutingAction::CreateAndAssign { node: None }, 0),
    };

    let mut prewarm = Vec::new();
    for &s in ctx.workflow_type.successors(f) {
        let spec = app.function(s);
        if spec.is_marker() || ctx.completed.get(s.0).copied().unwrap_or(false) {
            continue;
        }
        let ready = snap
            .alive_instances(s)
            .any(|v| v.node() == Some(target) && v.is_unclaimed());
        if !ready && spec.memory <= budget {
            budget -= spec.memory;
            prewarm.push((s, target));
        }
    }

    let bind = if ctx.bound.is_none() {
        let remaining: MemoryMb = ctx
            .workflow_type
            .members()
            .iter()
            .filter(|m| !ctx.completed.get(m.0).copied().unwrap_or(false))
            .map(|&m| app.function(m).memory)
            .sum();
        (snap.node(target).free() < remaining).then_some(target)
    } else {
        None
    };

    RoutingDecision {
        request: inv.request,
        function: f,
        action,
        prewarm,
        bind,
        home: Some(target),
    }
}

/// Reuse the lowest-id idle instance, otherwise cold start.
pub fn route_warm_first(inv: &Invocation, snap: &SystemSnapshot) -> RoutingDecision {
    let action = match first_idle(inv, snap) {
        Some(id) => RoutingAction::Assign(id),
        None => RoutingAction::CreateAndAssign { node: None },
    };
    RoutingDecision::simple(inv, action)
}

pub fn route(
    strategy: RoutingStrategy,
    inv: &Invocation,
    snap: &SystemSnapshot,
    app: &ValidatedApplication,
    ctx: &RequestContext<'_>,
) -> RoutingDecision {
    match strategy {
        RoutingStrategy::Swpas => route_swpas(inv, snap, app),
        RoutingStrategy::Sfepas => route_sfepas(inv, snap),
        RoutingStrategy::Mncpas => route_mncpas(inv, snap, app, ctx),
    }
}
