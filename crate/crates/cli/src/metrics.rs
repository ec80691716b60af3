//! Test-set metrics: prediction accuracy for classification, mean-squared
//! error for regression.

use anyhow::{ensure, Result};
use bestsubset::{matvec_cols, Dataset, SparseIterate, Task};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TaskMetric {
    /// Fraction of rows with sign(x^T w) equal to the label; sign(0)
    /// counts as +1.
    Accuracy(f64),
    MeanSquaredError(f64),
}

impl TaskMetric {
    pub fn value(self) -> f64 {
        match self {
            TaskMetric::Accuracy(v) | TaskMetric::MeanSquaredError(v) => v,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            TaskMetric::Accuracy(_) => "accuracy",
            TaskMetric::MeanSquaredError(_) => "mse",
        }
    }
}

/// Evaluates the learned iterate on a dataset.
pub fn predict_metrics(w: &SparseIterate, data: &Dataset, task: Task) -> Result<TaskMetric> {
    ensure!(
        w.ambient_dim() == data.cols(),
        "iterate width {} does not match dataset width {}",
        w.ambient_dim(),
        data.cols()
    );
    let scores = matvec_cols(&data.x, w.support(), w.values());
    let m = data.rows() as f64;
    match task {
        Task::Classification => {
            let hits = scores
                .iter()
                .zip(&data.y)
                .filter(|(&score, &label)| {
                    let predicted = if score >= 0.0 { 1.0 } else { -1.0 };
                    predicted == label
                })
                .count();
            Ok(TaskMetric::Accuracy(hits as f64 / m))
        }
        Task::Regression => {
            let sse: f64 = scores.iter().zip(&data.y).map(|(&s, &y)| (y - s) * (y - s)).sum();
            Ok(TaskMetric::MeanSquaredError(sse / m))
        }
    }
}
