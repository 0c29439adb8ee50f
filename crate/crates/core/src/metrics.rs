//! Response efficiency, resource utilization, their product, and RPD.
//!
//! Everything here can be computed from an [`EventLog`] alone; the engine
//! also produces the same report from its own state, and the two must agree.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{instance_costs, InstanceId, InstanceRecord};
use crate::engine::{EventLog, LogKind};
use crate::workflow::{Millis, RequestId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("request {0:?} never completed")]
    IncompleteLog(RequestId),
    #[error("instance {0:?} was never terminated")]
    UnterminatedInstance(InstanceId),
    #[error("division by zero")]
    DivisionByZero,
}

/// Arrival, completion, and critical-path time of one request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestTiming {
    pub request: RequestId,
    pub arrival: Millis,
    pub end: Millis,
    pub critical_path: Millis,
}

impl RequestTiming {
    pub fn response_time(&self) -> Millis {
        self.end - self.arrival
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub phi_resp: f64,
    pub phi_resource: f64,
    pub eta: f64,
    pub mean_response_ms: f64,
    pub response_times: Vec<Millis>,
    pub cold_starts: u64,
    pub transfer_latency_ms: u64,
    /// Instances that reached a node.
    pub instances: u64,
    pub requests: u64,
    pub nodes: u64,
    pub total_cost_mb_s: f64,
    pub exec_cost_mb_s: f64,
}

/// Memory-time totals in MB·ms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CostTotals {
    pub total: u128,
    pub exec: u128,
    pub instances: u64,
}

fn ratio(num: u128, den: u128) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// Σ critical path / Σ response time. An empty run has no overhead.
pub fn response_efficiency_of(timings: &[RequestTiming]) -> f64 {
    let exec: u128 = timings.iter().map(|t| t.critical_path as u128).sum();
    let resp: u128 = timings.iter().map(|t| t.response_time() as u128).sum();
    ratio(exec, resp)
}

pub fn cost_totals(instances: &[InstanceRecord]) -> Result<CostTotals, MetricsError> {
    let mut out = CostTotals::default();
    for inst in instances.iter().filter(|i| i.created_at.is_some()) {
        let c = instance_costs(inst).map_err(|_| MetricsError::UnterminatedInstance(inst.id))?;
        out.total += c.total as u128;
        out.exec += c.exec as u128;
        out.instances += 1;
    }
    Ok(out)
}

/// Σ C^exec / Σ C^total over every deployed instance.
pub fn resource_utilization_of(instances: &[InstanceRecord]) -> Result<f64, MetricsError> {
    let c = cost_totals(instances)?;
    Ok(ratio(c.exec, c.total))
}

pub fn objective(phi_resp: f64, phi_resource: f64) -> f64 {
    phi_resp * phi_resource
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RpdConvention {
    /// `100 (best - cur) / cur`, with best the minimum.
    #[default]
    Literal,
    /// `100 (cur - best) / best`.
    Positive,
}

impl fmt::Display for RpdConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Literal => "literal",
            Self::Positive => "positive",
        })
    }
}

impl FromStr for RpdConvention {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "literal" => Ok(Self::Literal),
            "positive" => Ok(Self::Positive),
            _ => Err(format!("unknown rpd convention `{s}`")),
        }
    }
}

pub fn rpd(eta_best: f64, eta_current: f64, convention: RpdConvention) -> Result<f64, MetricsError> {
    if eta_best == eta_current {
        return Ok(0.0);
    }
    let den = match convention {
        RpdConvention::Literal => eta_current,
        RpdConvention::Positive => eta_best,
    };
    if den == 0.0 {
        return Err(MetricsError::DivisionByZero);
    }
    Ok(match convention {
        RpdConvention::Literal => 100.0 * (eta_best - eta_current) / eta_current,
        RpdConvention::Positive => 100.0 * (eta_current - eta_best) / eta_best,
    })
}

/// Minimum over the compared runs.
pub fn best_eta(etas: &[f64]) -> Option<f64> {
    etas.iter().copied().reduce(f64::min)
}

/// Builds a report from request timings and instance records.
pub fn build_report(
    timings: &[RequestTiming],
    instances: &[InstanceRecord],
    cold_starts: u64,
    transfer_latency_ms: u64,
    nodes: u64,
) -> Result<MetricsReport, MetricsError> {
    let costs = cost_totals(instances)?;
    Ok(assemble(timings, costs, cold_starts, transfer_latency_ms, nodes))
}

fn assemble(
    timings: &[RequestTiming],
    costs: CostTotals,
    cold_starts: u64,
    transfer_latency_ms: u64,
    nodes: u64,
) -> MetricsReport {
    let phi_resp = response_efficiency_of(timings);
    let phi_resource = ratio(costs.exec, costs.total);
    let response_times: Vec<Millis> = timings.iter().map(RequestTiming::response_time).collect();
    let mean_response_ms = if response_times.is_empty() {
        0.0
    } else {
        response_times.iter().map(|&t| t as f64).sum::<f64>() / response_times.len() as f64
    };
    MetricsReport {
        phi_resp,
        phi_resource,
        eta: objective(phi_resp, phi_resource),
        mean_response_ms,
        response_times,
        cold_starts,
        transfer_latency_ms,
        instances: costs.instances,
        requests: timings.len() as u64,
        nodes,
        total_cost_mb_s: costs.total as f64 / 1000.0,
        exec_cost_mb_s: costs.exec as f64 / 1000.0,
    }
}

#[derive(Debug, Default)]
struct ReplayInstance {
    memory: u64,
    deployed: Option<Millis>,
    paused_since: Option<Millis>,
    idle: Millis,
    killed: Option<Millis>,
}

/// Request timings in request id order, from arrival and completion records.
pub fn request_timings(log: &EventLog) -> Result<Vec<RequestTiming>, MetricsError> {
    let mut open: BTreeMap<RequestId, (Millis, Millis)> = BTreeMap::new();
    let mut done: BTreeMap<RequestId, Millis> = BTreeMap::new();
    for r in log.records() {
        match &r.kind {
            LogKind::WorkflowArrival {
                request,
                critical_path_ms,
                ..
            } => {
                open.insert(*request, (r.time, *critical_path_ms));
            }
            LogKind::RequestComplete { request } => {
                done.insert(*request, r.time);
            }
            _ => {}
        }
    }
    open.into_iter()
        .map(|(request, (arrival, critical_path))| {
            let end = *done.get(&request).ok_or(MetricsError::IncompleteLog(request))?;
            Ok(RequestTiming {
                request,
                arrival,
                end,
                critical_path,
            })
        })
        .collect()
}

fn replay_costs(log: &EventLog) -> Result<CostTotals, MetricsError> {
    let mut insts: BTreeMap<InstanceId, ReplayInstance> = BTreeMap::new();
    for r in log.records() {
        let t = r.time;
        match &r.kind {
            LogKind::Spawn { instance, memory, .. } => {
                insts.entry(*instance).or_default().memory = *memory;
            }
            LogKind::Deploy { instance, .. } => {
                insts.entry(*instance).or_default().deployed = Some(t);
            }
            LogKind::CreationComplete { instance } | LogKind::FunctionComplete { instance, .. } => {
                insts.entry(*instance).or_default().paused_since = Some(t);
            }
            LogKind::FunctionStart { instance, .. } => {
                let i = insts.entry(*instance).or_default();
                if let Some(p) = i.paused_since.take() {
                    i.idle += t - p;
                }
            }
            LogKind::KeepAliveExpire { instance } => {
                let i = insts.entry(*instance).or_default();
                if let Some(p) = i.paused_since.take() {
                    i.idle += t - p;
                }
                i.killed = Some(t);
            }
            _ => {}
        }
    }
    let mut out = CostTotals::default();
    for (id, i) in insts {
        let Some(start) = i.deployed else { continue };
        let end = i.killed.ok_or(MetricsError::UnterminatedInstance(id))?;
        let lifetime = (end - start) as u128;
        out.total += lifetime * i.memory as u128;
        out.exec += (lifetime - i.idle as u128) * i.memory as u128;
        out.instances += 1;
    }
    Ok(out)
}

pub fn response_efficiency(log: &EventLog) -> Result<f64, MetricsError> {
    Ok(response_efficiency_of(&request_timings(log)?))
}

pub fn resource_utilization(log: &EventLog) -> Result<f64, MetricsError> {
    let c = replay_costs(log)?;
    Ok(ratio(c.exec, c.total))
}

/// Recomputes the whole report from the log without engine state.
pub fn replay(log: &EventLog) -> Result<MetricsReport, MetricsError> {
    let timings = request_timings(log)?;
    let costs = replay_costs(log)?;
    let mut cold = 0;
    let mut transfer = 0;
    let mut nodes = 0;
    for r in log.records() {
        match &r.kind {
            LogKind::Assign { cold_start: true, .. } | LogKind::Defer { cold_start: true, .. } => cold += 1,
            LogKind::Transfer { latency_ms, .. } => transfer += latency_ms,
            LogKind::NodeAdded { .. } => nodes += 1,
            _ => {}
        }
    }
    Ok(assemble(&timings, costs, cold, transfer, nodes))
}

/// Cold starts per interval of length `interval`, indexed from time 0.
pub fn cold_starts_per_interval(log: &EventLog, interval: Millis) -> Vec<u64> {
    let mut out: Vec<u64> = Vec::new();
    for r in log.records() {
        if let LogKind::Assign { cold_start: true, .. } | LogKind::Defer { cold_start: true, .. } = r.kind {
            let k = (r.time / interval.max(1)) as usize;
            if out.len() <= k {
                out.resize(k + 1, 0);
            }
            out[k] += 1;
        }
    }
    out
}

/// Charged transfer latency per request.
pub fn transfer_by_request(log: &EventLog) -> BTreeMap<RequestId, Millis> {
    let mut out = BTreeMap::new();
    for r in log.records() {
        if let LogKind::Transfer { request, latency_ms, .. } = r.kind {
            *out.entry(request).or_insert(0) += latency_ms;
        }
    }
    out
}
