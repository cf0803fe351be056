//! The black-box contract: a batch of encoded rows in, one probability
//! distribution over the classes per row out.

mod external;
mod linear;
mod regime;

pub use external::{
    parse_response, write_response, ExternalAdapter, PROBABILITY_TOLERANCE, REQUEST_FILE,
    RESPONSE_FILE,
};
pub use linear::{softmax_in_place, LinearBlackBox, LinearModelFile};
pub use regime::{
    Condition, ConditionEntry, ConditionOp, Regime, RegimeBlackBox, RegimeEntry, RegimeModelFile,
};

use ndarray::Array2;

/// Row sums must match 1 within this bound.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum BlackBoxError {
    #[error("input has {actual} columns, black box expects {expected}")]
    Width { expected: usize, actual: usize },
    #[error("model file: {0}")]
    Model(String),
    #[error("unknown column '{0}'")]
    UnknownColumn(String),
    #[error("external process failed: {0}")]
    Process(String),
    #[error("external process timed out after {0:?}")]
    Timeout(std::time::Duration),
    #[error("row count mismatch: expected {expected}, got {actual}")]
    RowCount { expected: usize, actual: usize },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("row {row} sums to {sum}, outside tolerance")]
    RowSum { row: usize, sum: f64 },
    #[error("no regime matches row {0}")]
    NoRegime(usize),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// A classifier `b: O → [0,1]^p`, evaluated on encoded rows.
///
/// Implementations must be deterministic and return row-stochastic output.
pub trait BlackBox: Send + Sync {
    /// Class identifiers, in output column order.
    fn classes(&self) -> &[String];

    /// Encoded input width `m′`.
    fn input_width(&self) -> usize;

    fn predict_batch(&self, x: &Array2<f64>) -> Result<Array2<f64>, BlackBoxError>;

    fn n_classes(&self) -> usize {
        self.classes().len()
    }

    fn check_width(&self, x: &Array2<f64>) -> Result<(), BlackBoxError> {
        if x.ncols() != self.input_width() {
            return Err(BlackBoxError::Width {
                expected: self.input_width(),
                actual: x.ncols(),
            });
        }
        Ok(())
    }
}

impl<T: BlackBox + ?Sized> BlackBox for Box<T> {
    fn classes(&self) -> &[String] {
        (**self).classes()
    }
    fn input_width(&self) -> usize {
        (**self).input_width()
    }
    fn predict_batch(&self, x: &Array2<f64>) -> Result<Array2<f64>, BlackBoxError> {
        (**self).predict_batch(x)
    }
}

impl<T: BlackBox + ?Sized> BlackBox for std::sync::Arc<T> {
    fn classes(&self) -> &[String] {
        (**self).classes()
    }
    fn input_width(&self) -> usize {
        (**self).input_width()
    }
    fn predict_batch(&self, x: &Array2<f64>) -> Result<Array2<f64>, BlackBoxError> {
        (**self).predict_batch(x)
    }
}

/// Checks that every row lies in the simplex.
pub fn check_row_stochastic(p: &Array2<f64>) -> Result<(), BlackBoxError> {
    for (r, row) in p.rows().into_iter().enumerate() {
        let sum: f64 = row.sum();
        let in_range = row.iter().all(|&v| (0.0..=1.0).contains(&v));
        if !in_range || (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(BlackBoxError::RowSum { row: r, sum });
        }
    }
    Ok(())
}

/// A black box replaying another's outputs after reordering input columns by
/// name. Used when model files name their columns.
pub(crate) fn column_permutation(
    model_columns: &[String],
    data_columns: &[String],
) -> Result<Vec<usize>, BlackBoxError> {
    model_columns
        .iter()
        .map(|name| {
            data_columns
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| BlackBoxError::UnknownColumn(name.clone()))
        })
        .collect()
}
