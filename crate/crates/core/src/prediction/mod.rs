//! Concurrency history, forecasting, and conversion of type-level forecasts
//! into per-function pre-warm plans.

mod history;
pub mod lstm;
mod plan;
mod predictor;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use history::{ConcurrencyHistory, IntervalCounts};
pub use lstm::{lstm_forward, lstm_train, windowed_dataset, LstmHyper, LstmModel, Sample};
pub use plan::{chscg_counts, plan_bpcg, plan_chscg, plan_fpcg, PrewarmPlan};
pub use predictor::{
    predict_workflow_concurrency, round_forecast, ConcurrencyPredictor, ForecastRequest, ForecastResponse,
    HttpPredictor, LastValuePredictor, LstmPredictor, CEIL_SLACK,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PredictionError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("input series is empty")]
    EmptySeries,
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("training diverged at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("no closed interval in the history")]
    EmptyHistory,
    #[error("remote predictor failed: {0}")]
    Remote(String),
}

/// How per-function pre-warm counts are derived each interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionStrategy {
    Fpcg,
    Bpcg,
    Chscg,
    None,
}

impl PredictionStrategy {
    pub const ALL: [PredictionStrategy; 4] = [Self::Fpcg, Self::Bpcg, Self::Chscg, Self::None];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Fpcg => "fpcg",
            Self::Bpcg => "bpcg",
            Self::Chscg => "chscg",
            Self::None => "none",
        }
    }
}

impl fmt::Display for PredictionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PredictionStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown prediction strategy `{s}`"))
    }
}
