//! Simulation of serverless workflow execution with prediction-driven
//! instance pre-warming, placement, and request routing.

pub mod cluster;
pub mod engine;
pub mod metrics;
pub mod placement;
pub mod prediction;
pub mod routing;
pub mod scheduler;
pub mod workflow;
pub mod workload;

pub use cluster::{
    instance_costs, ClusterError, InstanceCosts, InstanceId, InstanceRecord, InstanceState, LifecycleTrigger,
    NetworkModel, NodeId, Transition, WorkerNode,
};
pub use engine::{run, Engine, EngineError, EventLog, LogKind, SimConfig, SimOutcome, SystemSnapshot};
pub use metrics::{MetricsReport, RpdConvention};
pub use placement::{PlacementDecision, PlacementStrategy, PlacementTarget};
pub use prediction::{ConcurrencyHistory, ConcurrencyPredictor, PredictionStrategy, PrewarmPlan};
pub use routing::{RoutingAction, RoutingDecision, RoutingStrategy};
pub use scheduler::{Mode, PolicyBundle, Scheduler};
pub use workflow::{
    FunctionId, FunctionSpec, MemoryMb, Millis, RequestId, ValidatedApplication, WorkflowApplication,
    WorkflowError, WorkflowRequest, WorkflowType, WorkflowTypeId,
};
pub use workload::{generate_synthetic, load_trace, SyntheticParams, Workload};
