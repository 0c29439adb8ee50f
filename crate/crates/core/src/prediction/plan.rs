use serde::{Deserialize, Serialize};

use super::{ConcurrencyHistory, PredictionError};
use crate::workflow::{FunctionId, ValidatedApplication, WorkflowType};

/// Number of instances to have warm per function for the next interval.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PrewarmPlan {
    counts: Vec<u64>,
}

impl PrewarmPlan {
    pub fn zeros(functions: usize) -> Self {
        Self {
            counts: vec![0; functions],
        }
    }

    pub fn from_counts(counts: Vec<u64>) -> Self {
        Self { counts }
    }

    pub fn get(&self, f: FunctionId) -> u64 {
        self.counts.get(f.0).copied().unwrap_or(0)
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.counts.iter().all(|&c| c == 0)
    }
}

/// Every function gets the application-wide concurrency for the next interval.
pub fn plan_fpcg(forecast: &[u64], app: &ValidatedApplication) -> PrewarmPlan {
    let total: u64 = forecast.iter().sum();
    PrewarmPlan {
        counts: vec![total; app.len()],
    }
}

/// Each function gets the summed concurrency of the types that invoke it.
pub fn plan_bpcg(forecast: &[u64], types: &[WorkflowType], function_count: usize) -> PrewarmPlan {
    let mut counts = vec![0; function_count];
    for ty in types {
        let con = forecast.get(ty.id.0).copied().unwrap_or(0);
        for f in ty.members() {
            counts[f.0] += con;
        }
    }
    PrewarmPlan { counts }
}

/// `ceil(freq * total)` for each function, from creation frequencies over the
/// last `window` intervals and the creations of the last interval.
pub fn plan_chscg(hist: &ConcurrencyHistory, window: usize) -> Result<PrewarmPlan, PredictionError> {
    let last = hist.last().ok_or(PredictionError::EmptyHistory)?;
    let tn = last.total_created();
    let counts = hist.windowed_creations(window);
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Ok(PrewarmPlan::zeros(hist.function_count()));
    }
    // exact rational ceiling of count * TN / total
    Ok(PrewarmPlan {
        counts: counts.iter().map(|&c| (c * tn).div_ceil(total)).collect(),
    })
}

/// `ceil(freq * total)` from explicit frequencies.
pub fn chscg_counts(frequencies: &[f64], tn: u64) -> PrewarmPlan {
    PrewarmPlan {
        counts: frequencies
            .iter()
            .map(|&q| (q * tn as f64 - 1e-9).ceil().max(0.0) as u64)
            .collect(),
    }
}
