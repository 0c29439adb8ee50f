use serde::{Deserialize, Serialize};

use crate::workflow::{FunctionId, WorkflowTypeId};

/// Counts observed during one scheduling interval.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IntervalCounts {
    /// Arrivals per workflow type.
    pub per_type: Vec<u64>,
    /// Instances created per function.
    pub creations: Vec<u64>,
}

impl IntervalCounts {
    fn zeroed(types: usize, functions: usize) -> Self {
        Self {
            per_type: vec![0; types],
            creations: vec![0; functions],
        }
    }

    /// Application concurrency.
    pub fn total_concurrency(&self) -> u64 {
        self.per_type.iter().sum()
    }

    /// All instances created in the interval.
    pub fn total_created(&self) -> u64 {
        self.creations.iter().sum()
    }
}

/// Per-interval workflow concurrency and instance creation history `H`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConcurrencyHistory {
    type_count: usize,
    function_count: usize,
    closed: Vec<IntervalCounts>,
    current: IntervalCounts,
}

impl ConcurrencyHistory {
    pub fn new(type_count: usize, function_count: usize) -> Self {
        Self {
            type_count,
            function_count,
            closed: Vec::new(),
            current: IntervalCounts::zeroed(type_count, function_count),
        }
    }

    /// Builds a history from already closed per-type series.
    pub fn from_series(series: &[Vec<u64>], function_count: usize) -> Self {
        let type_count = series.first().map_or(0, Vec::len);
        let mut h = Self::new(type_count, function_count);
        for row in series {
            h.current.per_type.clone_from(row);
            h.close_interval();
        }
        h
    }

    pub fn type_count(&self) -> usize {
        self.type_count
    }

    pub fn function_count(&self) -> usize {
        self.function_count
    }

    pub fn record_arrival(&mut self, ty: WorkflowTypeId) {
        self.current.per_type[ty.0] += 1;
    }

    pub fn record_creation(&mut self, f: FunctionId) {
        self.current.creations[f.0] += 1;
    }

    pub fn close_interval(&mut self) {
        let next = IntervalCounts::zeroed(self.type_count, self.function_count);
        self.closed.push(std::mem::replace(&mut self.current, next));
    }

    pub fn intervals(&self) -> &[IntervalCounts] {
        &self.closed
    }

    pub fn current(&self) -> &IntervalCounts {
        &self.current
    }

    pub fn is_empty(&self) -> bool {
        self.closed.is_empty()
    }

    pub fn last(&self) -> Option<&IntervalCounts> {
        self.closed.last()
    }

    /// The most recent `len` closed intervals as per-type vectors, left
    /// padded with zeros when fewer intervals exist.
    pub fn series(&self, len: usize) -> Vec<Vec<f64>> {
        let have = self.closed.len().min(len);
        let mut out = vec![vec![0.0; self.type_count]; len - have];
        out.extend(
            self.closed[self.closed.len() - have..]
                .iter()
                .map(|c| c.per_type.iter().map(|&v| v as f64).collect()),
        );
        out
    }

    /// Full per-type series of closed intervals.
    pub fn per_type_series(&self) -> Vec<Vec<f64>> {
        self.series(self.closed.len())
    }

    /// Creation frequency of each function over the last `window`
    /// closed intervals. All zero when nothing was created.
    pub fn creation_frequencies(&self, window: usize) -> Vec<f64> {
        let counts = self.windowed_creations(window);
        let total: u64 = counts.iter().sum();
        counts
            .iter()
            .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
            .collect()
    }

    pub(crate) fn windowed_creations(&self, window: usize) -> Vec<u64> {
        let start = self.closed.len().saturating_sub(window.max(1));
        let mut counts = vec![0; self.function_count];
        for interval in &self.closed[start..] {
            for (acc, c) in counts.iter_mut().zip(&interval.creations) {
                *acc += c;
            }
        }
        counts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn total_is_sum_of_types() {
        let mut h = ConcurrencyHistory::new(3, 2);
        h.record_arrival(WorkflowTypeId(0));
        h.record_arrival(WorkflowTypeId(2));
        h.record_arrival(WorkflowTypeId(2));
        h.close_interval();
        assert_eq!(h.last().unwrap().total_concurrency(), 3);
        assert_eq!(h.last().unwrap().per_type, vec![1, 0, 2]);
    }

    #[test]
    fn short_history_is_left_padded() {
        let h = ConcurrencyHistory::from_series(&[vec![4, 1], vec![5, 2]], 1);
        let s = h.series(4);
        assert_eq!(s, vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![4.0, 1.0], vec![5.0, 2.0]]);
        assert_eq!(h.series(1), vec![vec![5.0, 2.0]]);
    }

    #[test]
    fn frequencies_sum_to_one_over_window() {
        let mut h = ConcurrencyHistory::new(1, 3);
        for f in [0, 0, 1, 2] {
            h.record_creation(FunctionId(f));
        }
        h.close_interval();
        h.record_creation(FunctionId(1));
        h.close_interval();
        let q = h.creation_frequencies(6);
        assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(q, vec![0.4, 0.4, 0.2]);
        assert_eq!(h.creation_frequencies(1), vec![0.0, 1.0, 0.0]);
    }
}
