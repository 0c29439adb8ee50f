//! Policy composition: the per-interval ICPS loop and the two baselines.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cluster::{InstanceId, InstanceRecord};
use crate::engine::{SpawnReason, SystemSnapshot};
use crate::placement::{place, PlacementDecision, PlacementStrategy};
use crate::prediction::{
    plan_bpcg, plan_chscg, plan_fpcg, predict_workflow_concurrency, ConcurrencyHistory, ConcurrencyPredictor,
    PredictionError, PredictionStrategy, PrewarmPlan,
};
use crate::routing::{route, route_warm_first, Invocation, RequestContext, RoutingDecision, RoutingStrategy};
use crate::workflow::{FunctionId, Millis, ValidatedApplication, WorkflowType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Icps,
    KeepAlive,
    Pool,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Self::Icps, Self::KeepAlive, Self::Pool];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Icps => "icps",
            Self::KeepAlive => "keep_alive",
            Self::Pool => "pool",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown mode `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyBundle {
    pub mode: Mode,
    pub prediction: PredictionStrategy,
    pub placement: PlacementStrategy,
    pub routing: RoutingStrategy,
    pub pool_size: u64,
    pub pool_max: u64,
    /// How long a Paused instance survives without work.
    pub keep_alive: Millis,
    /// Intervals of creation history CHSCG looks back over.
    pub chscg_window: usize,
}

impl Default for PolicyBundle {
    fn default() -> Self {
        Self {
            mode: Mode::Icps,
            prediction: PredictionStrategy::Bpcg,
            placement: PlacementStrategy::Ads,
            routing: RoutingStrategy::Sfepas,
            pool_size: 1,
            pool_max: 32,
            keep_alive: 60_000,
            chscg_window: 6,
        }
    }
}

impl PolicyBundle {
    pub fn icps(prediction: PredictionStrategy, placement: PlacementStrategy, routing: RoutingStrategy) -> Self {
        Self {
            prediction,
            placement,
            routing,
            ..Self::default()
        }
    }

    pub fn keep_alive(keep_alive: Millis) -> Self {
        Self {
            mode: Mode::KeepAlive,
            prediction: PredictionStrategy::None,
            placement: PlacementStrategy::Dlbds,
            keep_alive,
            ..Self::default()
        }
    }

    pub fn pool(pool_size: u64, keep_alive: Millis) -> Self {
        Self {
            mode: Mode::Pool,
            prediction: PredictionStrategy::None,
            placement: PlacementStrategy::Dlbds,
            pool_size,
            keep_alive,
            ..Self::default()
        }
    }

    /// Short label such as `bpcg+ads+sfepas` or `keep_alive`.
    pub fn label(&self) -> String {
        match self.mode {
            Mode::Icps => format!("{}+{}+{}", self.prediction, self.placement, self.routing),
            m => m.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SchedulingAction {
    Create { function: FunctionId, reason: SpawnReason },
    Kill(InstanceId),
    Retain { instance: InstanceId, until: Millis },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyEvent {
    Tick { index: u64 },
    Routed { function: FunctionId, cold_start: bool },
    /// A Paused instance reached the end of its keep-alive window.
    Expiring { instance: InstanceId, next_tick: Option<Millis> },
}

fn creations(plan: &PrewarmPlan, snap: &SystemSnapshot, app: &ValidatedApplication) -> Vec<SchedulingAction> {
    let mut out = Vec::new();
    for f in app.function_ids() {
        if app.function(f).is_marker() {
            continue;
        }
        let missing = plan.get(f).saturating_sub(snap.alive_count(f) as u64);
        out.extend((0..missing).map(|_| SchedulingAction::Create {
            function: f,
            reason: SpawnReason::Prewarm,
        }));
    }
    out
}

/// One interval of the ICPS loop: forecast, turn it into a plan, and ask
/// for the instances the plan wants beyond those already alive.
pub fn icps_tick(
    hist: &ConcurrencyHistory,
    snap: &SystemSnapshot,
    bundle: &PolicyBundle,
    predictor: &mut dyn ConcurrencyPredictor,
    app: &ValidatedApplication,
    types: &[WorkflowType],
) -> Result<(PrewarmPlan, Vec<SchedulingAction>), PredictionError> {
    let plan = match bundle.prediction {
        PredictionStrategy::None => return Ok((PrewarmPlan::zeros(app.len()), Vec::new())),
        PredictionStrategy::Fpcg => plan_fpcg(&predict_workflow_concurrency(hist, predictor)?, app),
        PredictionStrategy::Bpcg => plan_bpcg(&predict_workflow_concurrency(hist, predictor)?, types, app.len()),
        PredictionStrategy::Chscg => plan_chscg(hist, bundle.chscg_window)?,
    };
    let actions = creations(&plan, snap, app);
    Ok((plan, actions))
}

/// No pre-warming; idle instances die when their window ends.
pub fn keep_alive_policy(event: PolicyEvent, _snap: &SystemSnapshot) -> Vec<SchedulingAction> {
    match event {
        PolicyEvent::Expiring { instance, .. } => vec![SchedulingAction::Kill(instance)],
        PolicyEvent::Tick { .. } | PolicyEvent::Routed { .. } => Vec::new(),
    }
}

/// Adaptive warm pool state, one size per function.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolState {
    pub sizes: Vec<u64>,
    hits: Vec<u64>,
    misses: Vec<u64>,
}

impl PoolState {
    pub fn new(functions: usize, size: u64) -> Self {
        Self {
            sizes: vec![size; functions],
            hits: vec![0; functions],
            misses: vec![0; functions],
        }
    }

    /// Double after an interval with misses, halve after an untouched one.
    fn adapt(&mut self, max: u64) {
        for f in 0..self.sizes.len() {
            let s = self.sizes[f];
            if self.misses[f] > 0 {
                self.sizes[f] = (s * 2).max(1).min(max.max(1));
            } else if self.hits[f] == 0 {
                self.sizes[f] = (s / 2).max(1);
            }
            self.hits[f] = 0;
            self.misses[f] = 0;
        }
    }
}

fn pool_members(snap: &SystemSnapshot, f: FunctionId) -> u64 {
    snap.alive_instances(f).filter(|v| v.is_unclaimed()).count() as u64
}

fn top_up(snap: &SystemSnapshot, pool: &PoolState, f: FunctionId) -> impl Iterator<Item = SchedulingAction> {
    let missing = pool.sizes[f.0].saturating_sub(pool_members(snap, f));
    (0..missing).map(move |_| SchedulingAction::Create {
        function: f,
        reason: SpawnReason::Pool,
    })
}

/// Keeps a warm pool per function and replenishes it as it is consumed.
pub fn pool_policy(
    event: PolicyEvent,
    snap: &SystemSnapshot,
    bundle: &PolicyBundle,
    pool: &mut PoolState,
    app: &ValidatedApplication,
) -> Vec<SchedulingAction> {
    match event {
        PolicyEvent::Tick { index } => {
            if index > 0 {
                pool.adapt(bundle.pool_max);
            }
            app.function_ids()
                .filter(|&f| !app.function(f).is_marker())
                .flat_map(|f| top_up(snap, pool, f).collect::<Vec<_>>())
                .collect()
        }
        PolicyEvent::Routed { function, cold_start } => {
            if cold_start {
                pool.misses[function.0] += 1;
            } else {
                pool.hits[function.0] += 1;
            }
            top_up(snap, pool, function).collect()
        }
        PolicyEvent::Expiring { instance, next_tick } => {
            let f = snap.instance(instance).record.function;
            match next_tick {
                Some(until) if pool_members(snap, f) <= pool.sizes[f.0] => {
                    vec![SchedulingAction::Retain { instance, until }]
                }
                _ => vec![SchedulingAction::Kill(instance)],
            }
        }
    }
}

/// The policy object the engine drives.
pub struct Scheduler {
    bundle: PolicyBundle,
    predictor: Box<dyn ConcurrencyPredictor>,
    pool: PoolState,
    last_plan: Option<PrewarmPlan>,
}

impl Scheduler {
    pub fn new(bundle: PolicyBundle, predictor: Box<dyn ConcurrencyPredictor>, function_count: usize) -> Self {
        let pool = PoolState::new(function_count, bundle.pool_size);
        Self {
            bundle,
            predictor,
            pool,
            last_plan: None,
        }
    }

    pub fn bundle(&self) -> &PolicyBundle {
        &self.bundle
    }

    pub fn pool(&self) -> &PoolState {
        &self.pool
    }

    pub fn last_plan(&self) -> Option<&PrewarmPlan> {
        self.last_plan.as_ref()
    }

    /// Instances are killed right after finishing their invocation.
    pub fn releases_on_complete(&self) -> bool {
        self.bundle.mode == Mode::Icps && self.bundle.routing == RoutingStrategy::Mncpas
    }

    pub fn on_tick(
        &mut self,
        index: u64,
        hist: &ConcurrencyHistory,
        snap: &SystemSnapshot,
        app: &ValidatedApplication,
        types: &[WorkflowType],
    ) -> Result<Vec<SchedulingAction>, PredictionError> {
        match self.bundle.mode {
            Mode::Icps => {
                if hist.is_empty() {
                    return Ok(Vec::new());
                }
                let (plan, actions) = icps_tick(hist, snap, &self.bundle, self.predictor.as_mut(), app, types)?;
                self.last_plan = Some(plan);
                Ok(actions)
            }
            Mode::KeepAlive => Ok(keep_alive_policy(PolicyEvent::Tick { index }, snap)),
            Mode::Pool => Ok(pool_policy(
                PolicyEvent::Tick { index },
                snap,
                &self.bundle,
                &mut self.pool,
                app,
            )),
        }
    }

    pub fn route(
        &self,
        inv: &Invocation,
        snap: &SystemSnapshot,
        app: &ValidatedApplication,
        ctx: &RequestContext<'_>,
    ) -> RoutingDecision {
        match self.bundle.mode {
            Mode::Icps => route(self.bundle.routing, inv, snap, app, ctx),
            Mode::KeepAlive | Mode::Pool => route_warm_first(inv, snap),
        }
    }

    pub fn place(&self, inst: &InstanceRecord, snap: &SystemSnapshot, app: &ValidatedApplication) -> PlacementDecision {
        place(self.bundle.placement, inst, snap, app)
    }

    pub fn on_routed(
        &mut self,
        function: FunctionId,
        cold_start: bool,
        snap: &SystemSnapshot,
        app: &ValidatedApplication,
    ) -> Vec<SchedulingAction> {
        let event = PolicyEvent::Routed { function, cold_start };
        match self.bundle.mode {
            Mode::Pool => pool_policy(event, snap, &self.bundle, &mut self.pool, app),
            _ => keep_alive_policy(event, snap),
        }
    }

    pub fn on_expiring(
        &mut self,
        instance: InstanceId,
        next_tick: Option<Millis>,
        snap: &SystemSnapshot,
        app: &ValidatedApplication,
    ) -> Vec<SchedulingAction> {
        let event = PolicyEvent::Expiring { instance, next_tick };
        match self.bundle.mode {
            Mode::Pool => pool_policy(event, snap, &self.bundle, &mut self.pool, app),
            _ => keep_alive_policy(event, snap),
        }
    }
}

impl fmt::Debug for Scheduler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Scheduler")
            .field("bundle", &self.bundle)
            .field("predictor", &self.predictor.name())
            .field("pool", &self.pool)
            .finish()
    }
}
