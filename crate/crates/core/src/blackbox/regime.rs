use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use super::linear::softmax_in_place;
use super::{BlackBox, BlackBoxError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionOp {
    Le,
    Gt,
}

/// `x[column] ≤ value` or `x[column] > value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub column: usize,
    pub op: ConditionOp,
    pub value: f64,
}

impl Condition {
    pub fn holds(&self, x: ArrayView1<'_, f64>) -> bool {
        let v = x[self.column];
        match self.op {
            ConditionOp::Le => v <= self.value,
            ConditionOp::Gt => v > self.value,
        }
    }
}

/// One region of input space with its own softmax-linear model.
#[derive(Debug, Clone, PartialEq)]
pub struct Regime {
    pub conditions: Vec<Condition>,
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

impl Regime {
    pub fn contains(&self, x: ArrayView1<'_, f64>) -> bool {
        self.conditions.iter().all(|c| c.holds(x))
    }
}

/// Piecewise softmax-linear closed-form oracle: each row is scored by the
/// model of the unique regime whose conditions it satisfies.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeBlackBox {
    classes: Vec<String>,
    columns: Vec<String>,
    /// Columns restricted to {0, 1}; regime coverage is only checked there.
    binary_columns: Vec<bool>,
    regimes: Vec<Regime>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeModelFile {
    pub kind: String,
    pub classes: Vec<String>,
    pub columns: Vec<String>,
    #[serde(default)]
    pub binary_columns: Vec<String>,
    pub regimes: Vec<RegimeEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeEntry {
    pub conditions: Vec<ConditionEntry>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionEntry {
    pub column: String,
    pub op: ConditionOp,
    pub value: f64,
}

pub const REGIME_KIND: &str = "regimes";

impl RegimeBlackBox {
    /// Builds the oracle, rejecting regime sets that overlap or leave a gap.
    pub fn new(
        classes: Vec<String>,
        columns: Vec<String>,
        binary_columns: Vec<bool>,
        regimes: Vec<Regime>,
    ) -> Result<Self, BlackBoxError> {
        let p = classes.len();
        let m = columns.len();
        if p == 0 || regimes.is_empty() {
            return Err(BlackBoxError::Model("need at least one class and one regime".into()));
        }
        if binary_columns.len() != m {
            return Err(BlackBoxError::Model("binary column mask has wrong length".into()));
        }
        for (i, r) in regimes.iter().enumerate() {
            if r.weights.dim() != (p, m) || r.biases.len() != p {
                return Err(BlackBoxError::Model(format!(
                    "regime {i}: weights {:?} / biases {}, expected ({p}, {m}) / {p}",
                    r.weights.dim(),
                    r.biases.len()
                )));
            }
            if let Some(c) = r.conditions.iter().find(|c| c.column >= m || !c.value.is_finite()) {
                return Err(BlackBoxError::Model(format!(
                    "regime {i}: bad condition on column {}",
                    c.column
                )));
            }
        }
        let bb = Self {
            classes,
            columns,
            binary_columns,
            regimes,
        };
        bb.check_partition()?;
        Ok(bb)
    }

    /// Every cell of the grid induced by the condition thresholds must fall
    /// in exactly one regime. Conditions are half-open, so one representative
    /// point per cell decides the whole cell.
    fn check_partition(&self) -> Result<(), BlackBoxError> {
        let mut axes: Vec<(usize, Vec<f64>)> = Vec::new();
        for r in &self.regimes {
            for c in &r.conditions {
                match axes.iter_mut().find(|(col, _)| *col == c.column) {
                    Some((_, t)) => t.push(c.value),
                    None => axes.push((c.column, vec![c.value])),
                }
            }
        }
        let reps: Vec<(usize, Vec<f64>)> = axes
            .into_iter()
            .map(|(col, mut t)| {
                t.sort_by(f64::total_cmp);
                t.dedup();
                let pts = if self.binary_columns[col] {
                    vec![0.0, 1.0]
                } else {
                    let mut pts = vec![t[0] - 1.0];
                    pts.extend(t.windows(2).map(|w| 0.5 * (w[0] + w[1])));
                    pts.push(t[t.len() - 1] + 1.0);
                    pts
                };
                (col, pts)
            })
            .collect();
        let cells: usize = reps.iter().map(|(_, p)| p.len()).product();
        if cells > 1_000_000 {
            return Err(BlackBoxError::Model("too many regime cells to verify".into()));
        }
        let mut point = Array1::<f64>::zeros(self.columns.len());
        let mut idx = vec![0usize; reps.len()];
        for _ in 0..cells {
            for (k, (col, pts)) in reps.iter().enumerate() {
                point[*col] = pts[idx[k]];
            }
            let hits = self.regimes.iter().filter(|r| r.contains(point.view())).count();
            if hits != 1 {
                let desc: Vec<String> = reps
                    .iter()
                    .enumerate()
                    .map(|(k, (col, pts))| format!("{}={}", self.columns[*col], pts[idx[k]]))
                    .collect();
                return Err(BlackBoxError::Model(format!(
                    "regimes {} at point ({})",
                    if hits == 0 { "leave a gap" } else { "overlap" },
                    desc.join(", ")
                )));
            }
            for k in 0..idx.len() {
                idx[k] += 1;
                if idx[k] < reps[k].1.len() {
                    break;
                }
                idx[k] = 0;
            }
        }
        Ok(())
    }

    pub fn regimes(&self) -> &[Regime] {
        &self.regimes
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    /// Index of the regime containing `x`.
    pub fn regime_of(&self, x: ArrayView1<'_, f64>) -> Option<usize> {
        self.regimes.iter().position(|r| r.contains(x))
    }

    pub fn to_file_model(&self) -> RegimeModelFile {
        RegimeModelFile {
            kind: REGIME_KIND.into(),
            classes: self.classes.clone(),
            columns: self.columns.clone(),
            binary_columns: self
                .columns
                .iter()
                .zip(&self.binary_columns)
                .filter(|(_, &b)| b)
                .map(|(c, _)| c.clone())
                .collect(),
            regimes: self
                .regimes
                .iter()
                .map(|r| RegimeEntry {
                    conditions: r
                        .conditions
                        .iter()
                        .map(|c| ConditionEntry {
                            column: self.columns[c.column].clone(),
                            op: c.op,
                            value: c.value,
                        })
                        .collect(),
                    weights: r.weights.rows().into_iter().map(|w| w.to_vec()).collect(),
                    biases: r.biases.to_vec(),
                })
                .collect(),
        }
    }

    pub fn from_file_model(file: RegimeModelFile) -> Result<Self, BlackBoxError> {
        if file.kind != REGIME_KIND {
            return Err(BlackBoxError::Model(format!("unexpected kind '{}'", file.kind)));
        }
        let col = |name: &str| {
            file.columns
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| BlackBoxError::UnknownColumn(name.to_string()))
        };
        let mut binary = vec![false; file.columns.len()];
        for b in &file.binary_columns {
            binary[col(b)?] = true;
        }
        let p = file.classes.len();
        let m = file.columns.len();
        let regimes = file
            .regimes
            .iter()
            .map(|r| {
                let conditions = r
                    .conditions
                    .iter()
                    .map(|c| {
                        Ok(Condition {
                            column: col(&c.column)?,
                            op: c.op,
                            value: c.value,
                        })
                    })
                    .collect::<Result<Vec<_>, BlackBoxError>>()?;
                if r.weights.len() != p || r.weights.iter().any(|w| w.len() != m) {
                    return Err(BlackBoxError::Model("regime weights have wrong shape".into()));
                }
                let weights = Array2::from_shape_vec(
                    (p, m),
                    r.weights.iter().flatten().cloned().collect(),
                )
                .map_err(|e| BlackBoxError::Model(e.to_string()))?;
                Ok(Regime {
                    conditions,
                    weights,
                    biases: Array1::from(r.biases.clone()),
                })
            })
            .collect::<Result<Vec<_>, BlackBoxError>>()?;
        Self::new(file.classes, file.columns, binary, regimes)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file_model()).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, BlackBoxError> {
        Self::from_file_model(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, BlackBoxError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

impl BlackBox for RegimeBlackBox {
    fn classes(&self) -> &[String] {
        &self.classes
    }

    fn input_width(&self) -> usize {
        self.columns.len()
    }

    fn predict_batch(&self, x: &Array2<f64>) -> Result<Array2<f64>, BlackBoxError> {
        self.check_width(x)?;
        let mut out = Array2::<f64>::zeros((x.nrows(), self.classes.len()));
        for (i, row) in x.rows().into_iter().enumerate() {
            let r = self.regime_of(row).ok_or(BlackBoxError::NoRegime(i))?;
            let regime = &self.regimes[r];
            let mut logits = regime.weights.dot(&row) + &regime.biases;
            softmax_in_place(logits.view_mut());
            out.row_mut(i).assign(&logits);
        }
        Ok(out)
    }
}
