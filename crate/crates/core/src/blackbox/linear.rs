use std::path::Path;

use ndarray::{Array1, Array2, ArrayViewMut1};
use serde::{Deserialize, Serialize};

use super::{column_permutation, BlackBox, BlackBoxError};

/// Softmax of logits `weights · x + biases`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearBlackBox {
    classes: Vec<String>,
    columns: Vec<String>,
    weights: Array2<f64>,
    biases: Array1<f64>,
}

/// On-disk form: `{classes, columns, weights, biases}`. A fitted surrogate
/// dump shares these fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModelFile {
    pub classes: Vec<String>,
    pub columns: Vec<String>,
    #[serde(alias = "coefficients")]
    pub weights: Vec<Vec<f64>>,
    #[serde(alias = "intercepts")]
    pub biases: Vec<f64>,
}

/// Numerically stable in-place softmax.
pub fn softmax_in_place(mut logits: ArrayViewMut1<'_, f64>) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    logits.mapv_inplace(|v| (v - max).exp());
    let sum = logits.sum();
    logits.mapv_inplace(|v| v / sum);
}

impl LinearBlackBox {
    pub fn new(
        classes: Vec<String>,
        columns: Vec<String>,
        weights: Array2<f64>,
        biases: Array1<f64>,
    ) -> Result<Self, BlackBoxError> {
        let p = classes.len();
        if p == 0 {
            return Err(BlackBoxError::Model("no classes".into()));
        }
        if weights.nrows() != p || biases.len() != p {
            return Err(BlackBoxError::Model(format!(
                "weights are {}×{} and biases have length {}, expected {p} classes",
                weights.nrows(),
                weights.ncols(),
                biases.len()
            )));
        }
        if weights.ncols() != columns.len() {
            return Err(BlackBoxError::Model(format!(
                "weights have {} columns, {} column names given",
                weights.ncols(),
                columns.len()
            )));
        }
        if weights.iter().chain(biases.iter()).any(|v| !v.is_finite()) {
            return Err(BlackBoxError::Model("non-finite parameter".into()));
        }
        Ok(Self {
            classes,
            columns,
            weights,
            biases,
        })
    }

    pub fn from_file_model(file: LinearModelFile) -> Result<Self, BlackBoxError> {
        let p = file.weights.len();
        let width = file.weights.first().map_or(file.columns.len(), Vec::len);
        if file.weights.iter().any(|r| r.len() != width) {
            return Err(BlackBoxError::Model("ragged weight matrix".into()));
        }
        let flat: Vec<f64> = file.weights.into_iter().flatten().collect();
        let weights = Array2::from_shape_vec((p, width), flat)
            .map_err(|e| BlackBoxError::Model(e.to_string()))?;
        Self::new(file.classes, file.columns, weights, Array1::from(file.biases))
    }

    pub fn from_json(text: &str) -> Result<Self, BlackBoxError> {
        Self::from_file_model(serde_json::from_str(text)?)
    }

    /// Loads `{classes, columns, weights, biases}` from a JSON file.
    pub fn load(path: &Path) -> Result<Self, BlackBoxError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_file_model(&self) -> LinearModelFile {
        LinearModelFile {
            classes: self.classes.clone(),
            columns: self.columns.clone(),
            weights: self.weights.rows().into_iter().map(|r| r.to_vec()).collect(),
            biases: self.biases.to_vec(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file_model()).expect("model serializes")
    }

    pub fn save(&self, path: &Path) -> Result<(), BlackBoxError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn biases(&self) -> &Array1<f64> {
        &self.biases
    }

    /// Reorders the weight columns to follow a dataset's encoded column order.
    /// Every model column must exist in `data_columns`; data columns the model
    /// does not name receive zero weight.
    pub fn aligned_to(&self, data_columns: &[String]) -> Result<Self, BlackBoxError> {
        let perm = column_permutation(&self.columns, data_columns)?;
        let mut weights = Array2::<f64>::zeros((self.classes.len(), data_columns.len()));
        for (src, &dst) in perm.iter().enumerate() {
            weights.column_mut(dst).assign(&self.weights.column(src));
        }
        Self::new(
            self.classes.clone(),
            data_columns.to_vec(),
            weights,
            self.biases.clone(),
        )
    }

    pub fn logits(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut z = x.dot(&self.weights.t());
        for mut row in z.rows_mut() {
            row += &self.biases;
        }
        z
    }
}

impl BlackBox for LinearBlackBox {
    fn classes(&self) -> &[String] {
        &self.classes
    }

    fn input_width(&self) -> usize {
        self.columns.len()
    }

    fn predict_batch(&self, x: &Array2<f64>) -> Result<Array2<f64>, BlackBoxError> {
        self.check_width(x)?;
        let mut z = self.logits(x);
        for row in z.rows_mut() {
            softmax_in_place(row);
        }
        Ok(z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn names(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    #[test]
    fn zero_model_is_uniform() {
        let bb = LinearBlackBox::new(
            names("c", 3),
            names("x", 2),
            Array2::zeros((3, 2)),
            Array1::zeros(3),
        )
        .unwrap();
        let out = bb.predict_batch(&array![[0.3, -7.0], [1e3, 2.0]]).unwrap();
        for v in out.iter() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn hand_evaluated_softmax() {
        // logits (ln 3, 0) → (3/4, 1/4)
        let bb = LinearBlackBox::new(
            names("c", 2),
            names("x", 2),
            array![[1.0, 0.0], [0.0, 0.0]],
            Array1::zeros(2),
        )
        .unwrap();
        let out = bb.predict_batch(&array![[3f64.ln(), 5.0]]).unwrap();
        assert!((out[[0, 0]] - 0.75).abs() < 1e-15);
        assert!((out[[0, 1]] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn width_mismatch_reports_both_widths() {
        let bb = LinearBlackBox::new(
            names("c", 2),
            names("x", 3),
            Array2::zeros((2, 3)),
            Array1::zeros(2),
        )
        .unwrap();
        match bb.predict_batch(&Array2::zeros((1, 2))) {
            Err(BlackBoxError::Width { expected, actual }) => {
                assert_eq!((expected, actual), (3, 2));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn file_shape_checks() {
        let ok = r#"{"classes":["a","b"],"columns":["x","y","z"],
                     "weights":[[1,2,3],[4,5,6]],"biases":[0,1]}"#;
        let bb = LinearBlackBox::from_json(ok).unwrap();
        assert_eq!(bb.weights().dim(), (2, 3));
        let bad = r#"{"classes":["a","b"],"columns":["x","y","z"],
                      "weights":[[1,2,3],[4,5,6]],"biases":[0,1,2]}"#;
        assert!(LinearBlackBox::from_json(bad).is_err());
        let ragged = r#"{"classes":["a","b"],"columns":["x","y","z"],
                         "weights":[[1,2,3],[4,5]],"biases":[0,1]}"#;
        assert!(LinearBlackBox::from_json(ragged).is_err());
    }

    #[test]
    fn save_load_identical_predictions() {
        let bb = LinearBlackBox::new(
            names("c", 2),
            names("x", 2),
            array![[0.1234567890123, -2.5], [1.0 / 3.0, 7e-5]],
            array![0.2, -0.9],
        )
        .unwrap();
        let back = LinearBlackBox::from_json(&bb.to_json()).unwrap();
        let x = array![[0.5, 1.5], [-3.0, 2.0]];
        assert_eq!(bb.predict_batch(&x).unwrap(), back.predict_batch(&x).unwrap());
    }

    #[test]
    fn alignment_by_name() {
        let bb = LinearBlackBox::new(
            names("c", 2),
            vec!["b".into(), "a".into()],
            array![[1.0, 2.0], [0.0, 0.0]],
            Array1::zeros(2),
        )
        .unwrap();
        let aligned = bb.aligned_to(&["a".into(), "b".into(), "c".into()]).unwrap();
        assert_eq!(aligned.weights().row(0).to_vec(), vec![2.0, 1.0, 0.0]);
        assert!(matches!(
            bb.aligned_to(&["a".into()]),
            Err(BlackBoxError::UnknownColumn(_))
        ));
    }
}
