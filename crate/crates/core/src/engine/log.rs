//! The append-only event log. Every metric can be recomputed from it.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::cluster::{InstanceId, NodeId};
use crate::workflow::{FunctionId, MemoryMb, Millis, RequestId, WorkflowTypeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpawnReason {
    Prewarm,
    ColdStart,
    Pool,
    Affinity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogKind {
    NodeAdded {
        node: NodeId,
        capacity: MemoryMb,
    },
    IntervalTick {
        index: u64,
    },
    WorkflowArrival {
        request: RequestId,
        workflow_type: WorkflowTypeId,
        critical_path_ms: Millis,
    },
    /// An instance creation decision; the instance is `Undeployed`.
    Spawn {
        instance: InstanceId,
        function: FunctionId,
        memory: MemoryMb,
        reason: SpawnReason,
    },
    /// Placement succeeded; memory is reserved and creation starts.
    Deploy {
        instance: InstanceId,
        node: NodeId,
    },
    PlacementDeferred {
        instance: InstanceId,
    },
    PrewarmFailure {
        instance: InstanceId,
        function: FunctionId,
    },
    CreationComplete {
        instance: InstanceId,
    },
    Assign {
        request: RequestId,
        function: FunctionId,
        instance: InstanceId,
        cold_start: bool,
    },
    Defer {
        request: RequestId,
        function: FunctionId,
        cold_start: bool,
    },
    Transfer {
        request: RequestId,
        function: FunctionId,
        latency_ms: Millis,
    },
    DataArrival {
        request: RequestId,
        function: FunctionId,
    },
    FunctionStart {
        instance: InstanceId,
        request: RequestId,
        function: FunctionId,
    },
    FunctionComplete {
        instance: InstanceId,
        request: RequestId,
        function: FunctionId,
    },
    /// A zero-cost entry or exit marker passed through.
    MarkerComplete {
        request: RequestId,
        function: FunctionId,
    },
    KeepAliveExpire {
        instance: InstanceId,
    },
    RequestComplete {
        request: RequestId,
    },
    PolicyError {
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogRecord {
    pub time: Millis,
    pub seq: u64,
    #[serde(flatten)]
    pub kind: LogKind,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventLog {
    records: Vec<LogRecord>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, time: Millis, kind: LogKind) {
        let seq = self.records.len() as u64;
        self.records.push(LogRecord { time, seq, kind });
    }

    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_ndjson<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_ndjson(&self) -> String {
        let mut buf = Vec::new();
        self.write_ndjson(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_ndjson<R: BufRead>(input: R) -> Result<Self, serde_json::Error> {
        let mut records = Vec::new();
        for line in input.lines() {
            let line = line.map_err(serde_json::Error::io)?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(&line)?);
        }
        Ok(Self { records })
    }
}
