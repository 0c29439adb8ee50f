//! Node selection for newly created instances.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cluster::{InstanceId, InstanceRecord, NodeId, WorkerNode};
use crate::engine::SystemSnapshot;
use crate::workflow::ValidatedApplication;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlacementStrategy {
    Dlbds,
    Ads,
    Fdds,
}

impl PlacementStrategy {
    pub const ALL: [PlacementStrategy; 3] = [Self::Dlbds, Self::Ads, Self::Fdds];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Dlbds => "dlbds",
            Self::Ads => "ads",
            Self::Fdds => "fdds",
        }
    }
}

impl fmt::Display for PlacementStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PlacementStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown placement strategy `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlacementTarget {
    Node(NodeId),
    NewNode,
    Defer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacementDecision {
    pub instance: InstanceId,
    pub target: PlacementTarget,
}

fn decide(inst: &InstanceRecord, node: Option<NodeId>, snap: &SystemSnapshot) -> PlacementDecision {
    let target = match node {
        Some(n) => PlacementTarget::Node(n),
        None if snap.allow_new_nodes => PlacementTarget::NewNode,
        None => PlacementTarget::Defer,
    };
    PlacementDecision {
        instance: inst.id,
        target,
    }
}

fn lowest_usage<'a>(nodes: impl Iterator<Item = &'a WorkerNode>) -> Option<NodeId> {
    // min_by keeps the first of equal elements, so ties go to the lower id
    nodes
        .min_by(|a, b| {
            a.usage_ratio()
                .partial_cmp(&b.usage_ratio())
                .unwrap_or(Ordering::Equal)
        })
        .map(|n| n.id)
}

/// Lowest memory usage ratio among nodes that fit.
pub fn place_dlbds(inst: &InstanceRecord, snap: &SystemSnapshot) -> PlacementDecision {
    let node = lowest_usage(snap.nodes.iter().filter(|n| n.can_host(inst.memory)));
    decide(inst, node, snap)
}

/// Affinity placement: prefer nodes already hosting a predecessor's
/// instance; entry-level functions go to the least loaded node.
pub fn place_ads(inst: &InstanceRecord, snap: &SystemSnapshot, app: &ValidatedApplication) -> PlacementDecision {
    let feasible: Vec<&WorkerNode> = snap.nodes.iter().filter(|n| n.can_host(inst.memory)).collect();
    if feasible.is_empty() {
        return decide(inst, None, snap);
    }
    let preds = app.predecessors(inst.function);
    if preds.iter().all(|&p| app.function(p).is_marker()) {
        return decide(inst, lowest_usage(feasible.into_iter()), snap);
    }
    let affinity: BTreeSet<NodeId> = preds
        .iter()
        .flat_map(|&p| snap.alive_instances(p))
        .filter_map(|v| v.node())
        .collect();
    let node = feasible
        .iter()
        .find(|n| affinity.contains(&n.id))
        .or_else(|| feasible.first())
        .map(|n| n.id);
    decide(inst, node, snap)
}

/// First fit in node id order.
pub fn place_fdds(inst: &InstanceRecord, snap: &SystemSnapshot) -> PlacementDecision {
    let node = snap.nodes.iter().find(|n| n.can_host(inst.memory)).map(|n| n.id);
    decide(inst, node, snap)
}

pub fn place(
    strategy: PlacementStrategy,
    inst: &InstanceRecord,
    snap: &SystemSnapshot,
    app: &ValidatedApplication,
) -> PlacementDecision {
    match strategy {
        PlacementStrategy::Dlbds => place_dlbds(inst, snap),
        PlacementStrategy::Ads => place_ads(inst, snap, app),
        PlacementStrategy::Fdds => place_fdds(inst, snap),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::LifecycleTrigger;
    use crate::workflow::{FunctionId, FunctionSpec, WorkflowApplication};

    fn chain_app() -> ValidatedApplication {
        WorkflowApplication::new(
            vec![
                FunctionSpec::marker("entry"),
                FunctionSpec::new("g", 10, 100),
                FunctionSpec::new("f", 10, 100),
                FunctionSpec::marker("exit"),
            ],
            vec![(0, 1), (1, 2), (2, 3)],
        )
        .validate()
        .unwrap()
    }

    fn snapshot(used: &[u64], capacity: u64, allow: bool) -> SystemSnapshot {
        let caps = vec![capacity; used.len()];
        let mut s = SystemSnapshot::new(&caps, 4, allow, capacity);
        for (i, &u) in used.iter().enumerate() {
            s.nodes[i].used = u;
        }
        s
    }

    fn candidate(f: usize, mem: u64, snap: &SystemSnapshot) -> InstanceRecord {
        InstanceRecord::undeployed(InstanceId(snap.instances.len()), FunctionId(f), mem, 0)
    }

    fn node_of(d: PlacementDecision) -> PlacementTarget {
        d.target
    }

    #[test]
    fn dlbds_picks_lowest_usage() {
        let s = snapshot(&[500, 200, 800], 1000, true);
        let inst = candidate(1, 100, &s);
        assert_eq!(node_of(place_dlbds(&inst, &s)), PlacementTarget::Node(NodeId(1)));
    }

    #[test]
    fn dlbds_feasibility_dominates() {
        let s = snapshot(&[950, 950, 800], 1000, true);
        let inst = candidate(1, 100, &s);
        assert_eq!(node_of(place_dlbds(&inst, &s)), PlacementTarget::Node(NodeId(2)));
    }

    #[test]
    fn full_cluster_yields_new_node_or_defer() {
        let s = snapshot(&[1000, 1000], 1000, true);
        let inst = candidate(1, 100, &s);
        for strategy in PlacementStrategy::ALL {
            assert_eq!(place(strategy, &inst, &s, &chain_app()).target, PlacementTarget::NewNode);
        }
        let s = snapshot(&[1000, 1000], 1000, false);
        for strategy in PlacementStrategy::ALL {
            assert_eq!(place(strategy, &inst, &s, &chain_app()).target, PlacementTarget::Defer);
        }
    }

    #[test]
    fn ads_follows_predecessor_instance() {
        let app = chain_app();
        let mut s = snapshot(&[0, 0, 0], 1000, true);
        let g = candidate(1, 100, &s);
        s.push_instance(g.clone());
        let deployed = match g.transition(LifecycleTrigger::Deploy { node: NodeId(1) }, 0).unwrap() {
            crate::cluster::Transition::Changed(r) => r,
            _ => unreachable!(),
        };
        s.nodes[1].attach(g.id, g.memory);
        s.instance_mut(g.id).record = deployed;
        s.nodes[0].used = 0;
        let f = candidate(2, 100, &s);
        // node 0 is less loaded but node 1 hosts the predecessor
        assert_eq!(place_ads(&f, &s, &app).target, PlacementTarget::Node(NodeId(1)));
    }

    #[test]
    fn ads_without_predecessors_uses_lowest_usage() {
        let app = chain_app();
        let s = snapshot(&[500, 200], 1000, true);
        let g = candidate(1, 100, &s);
        assert_eq!(place_ads(&g, &s, &app).target, PlacementTarget::Node(NodeId(1)));
    }

    #[test]
    fn fdds_is_first_fit() {
        let s = snapshot(&[900, 0], 1000, true);
        assert_eq!(place_fdds(&candidate(1, 50, &s), &s).target, PlacementTarget::Node(NodeId(0)));
        assert_eq!(place_fdds(&candidate(1, 150, &s), &s).target, PlacementTarget::Node(NodeId(1)));
        let again = place_fdds(&candidate(1, 150, &s), &s);
        assert_eq!(again.target, PlacementTarget::Node(NodeId(1)));
    }

    #[test]
    fn strategy_names_round_trip() {
        for p in PlacementStrategy::ALL {
            assert_eq!(p.as_str().parse::<PlacementStrategy>().unwrap(), p);
        }
        assert!("foo".parse::<PlacementStrategy>().is_err());
    }

    proptest::proptest! {
        #[test]
        fn dlbds_spreads_equal_instances(nodes in 1usize..6, count in 0usize..40) {
            let mut s = snapshot(&vec![0; nodes], 1000, true);
            for _ in 0..count {
                let inst = candidate(1, 100, &s);
                match place_dlbds(&inst, &s).target {
                    PlacementTarget::Node(n) => s.nodes[n.0].used += 100,
                    _ => break,
                }
            }
            let max = s.nodes.iter().map(|n| n.used).max().unwrap();
            let min = s.nodes.iter().map(|n| n.used).min().unwrap();
            proptest::prop_assert!(max - min <= 100);
        }
    }
}
