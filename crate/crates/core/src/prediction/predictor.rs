use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::lstm::{windowed_dataset, LstmHyper, LstmModel};
use super::{ConcurrencyHistory, PredictionError};

/// Forecasts raw per-type workflow concurrency for the next interval.
pub trait ConcurrencyPredictor: Send {
    fn name(&self) -> &str;

    /// Raw, unclamped forecast; one entry per workflow type.
    fn forecast(&mut self, history: &ConcurrencyHistory) -> Result<Vec<f64>, PredictionError>;
}

/// Forecasts below `ceil(x - CEIL_SLACK)` round down, so a model that
/// lands a hair above an integer does not ask for one more instance.
pub const CEIL_SLACK: f64 = 0.05;

/// Clamp at zero and round up.
pub fn round_forecast(raw: &[f64]) -> Vec<u64> {
    raw.iter()
        .map(|&v| if v.is_finite() { (v - CEIL_SLACK).ceil().max(0.0) as u64 } else { 0 })
        .collect()
}

/// Next-interval arrivals for every type, as non-negative integers.
pub fn predict_workflow_concurrency(
    hist: &ConcurrencyHistory,
    predictor: &mut dyn ConcurrencyPredictor,
) -> Result<Vec<u64>, PredictionError> {
    if hist.is_empty() {
        return Err(PredictionError::EmptyHistory);
    }
    let raw = predictor.forecast(hist)?;
    if raw.len() != hist.type_count() {
        return Err(PredictionError::DimensionMismatch {
            expected: hist.type_count(),
            got: raw.len(),
        });
    }
    Ok(round_forecast(&raw))
}

/// Carries the last observed interval forward.
#[derive(Debug, Clone, Default)]
pub struct LastValuePredictor;

impl ConcurrencyPredictor for LastValuePredictor {
    fn name(&self) -> &str {
        "last_value"
    }

    fn forecast(&mut self, history: &ConcurrencyHistory) -> Result<Vec<f64>, PredictionError> {
        let last = history.last().ok_or(PredictionError::EmptyHistory)?;
        Ok(last.per_type.iter().map(|&v| v as f64).collect())
    }
}

/// LSTM forecaster over the last `series_len` intervals. Inputs and
/// targets are divided by `scale` so training stays in a unit range.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LstmPredictor {
    pub model: LstmModel,
    pub series_len: usize,
    pub scale: f64,
    pub loss_history: Vec<f64>,
}

impl LstmPredictor {
    /// Trains offline on a per-type series of closed intervals.
    pub fn fit(series: &[Vec<f64>], hyper: &LstmHyper) -> Result<Self, PredictionError> {
        let dim = series.first().map(Vec::len).ok_or(PredictionError::EmptyDataset)?;
        let scale = series
            .iter()
            .flatten()
            .fold(1.0_f64, |acc, &v| acc.max(v.abs()));
        let scaled: Vec<Vec<f64>> = series
            .iter()
            .map(|row| row.iter().map(|v| v / scale).collect())
            .collect();
        let dataset = windowed_dataset(&scaled, hyper.series_len.max(1));
        let mut model = LstmModel::new(dim, hyper.hidden, hyper.seed);
        let loss_history = model.train(&dataset, hyper)?;
        Ok(Self {
            model,
            series_len: hyper.series_len.max(1),
            scale,
            loss_history,
        })
    }
}

impl ConcurrencyPredictor for LstmPredictor {
    fn name(&self) -> &str {
        "lstm"
    }

    fn forecast(&mut self, history: &ConcurrencyHistory) -> Result<Vec<f64>, PredictionError> {
        if history.is_empty() {
            return Err(PredictionError::EmptyHistory);
        }
        let series: Vec<Vec<f64>> = history
            .series(self.series_len)
            .into_iter()
            .map(|row| row.into_iter().map(|v| v / self.scale).collect())
            .collect();
        Ok(self
            .model
            .forward(&series)?
            .into_iter()
            .map(|v| v * self.scale)
            .collect())
    }
}

/// Body of a forecast request sent to an out-of-process predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRequest {
    pub series: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastResponse {
    pub forecast: Vec<f64>,
}

/// Delegates forecasting to a JSON-over-HTTP service.
pub struct HttpPredictor {
    url: String,
    series_len: usize,
    agent: ureq::Agent,
}

impl HttpPredictor {
    pub fn new(url: impl Into<String>, series_len: usize) -> Self {
        Self {
            url: url.into(),
            series_len: series_len.max(1),
            agent: ureq::AgentBuilder::new().timeout(Duration::from_secs(30)).build(),
        }
    }
}

impl ConcurrencyPredictor for HttpPredictor {
    fn name(&self) -> &str {
        "http"
    }

    fn forecast(&mut self, history: &ConcurrencyHistory) -> Result<Vec<f64>, PredictionError> {
        let body = ForecastRequest {
            series: history.series(self.series_len),
        };
        let response: ForecastResponse = self
            .agent
            .post(&self.url)
            .send_json(&body)
            .map_err(|e| PredictionError::Remote(e.to_string()))?
            .into_json()
            .map_err(|e| PredictionError::Remote(e.to_string()))?;
        Ok(response.forecast)
    }
}
