use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use super::{Attribute, AttributeKind, DataError, Dataset, Value};

/// How an encoded column relates to its source attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Boolean,
    /// Integer level code in `0..levels`.
    Ordinal { levels: usize },
    /// Indicator of one category of a nominal attribute.
    OneHot { category: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedColumn {
    pub name: String,
    pub attribute: usize,
    pub kind: ColumnKind,
}

impl EncodedColumn {
    /// Boolean and one-hot columns only take the values 0 and 1.
    pub fn is_binary(&self) -> bool {
        matches!(self.kind, ColumnKind::Boolean | ColumnKind::OneHot { .. })
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self.kind, ColumnKind::Numeric)
    }

    /// Whether `v` is a value this column can hold.
    pub fn accepts(&self, v: f64) -> bool {
        match self.kind {
            ColumnKind::Numeric => v.is_finite(),
            ColumnKind::Boolean | ColumnKind::OneHot { .. } => v == 0.0 || v == 1.0,
            ColumnKind::Ordinal { levels } => {
                v.fract() == 0.0 && v >= 0.0 && v < levels as f64
            }
        }
    }
}

/// Numeric encoding of a dataset's rows.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedMatrix {
    pub values: Array2<f64>,
    pub columns: Vec<EncodedColumn>,
}

impl EncodedMatrix {
    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }
}

/// Column layout produced by `encode` for a list of attributes.
pub fn columns_for(attributes: &[Attribute]) -> Vec<EncodedColumn> {
    let mut columns = Vec::new();
    for a in attributes {
        match &a.kind {
            AttributeKind::Numeric => columns.push(EncodedColumn {
                name: a.name.clone(),
                attribute: a.index,
                kind: ColumnKind::Numeric,
            }),
            AttributeKind::Boolean => columns.push(EncodedColumn {
                name: a.name.clone(),
                attribute: a.index,
                kind: ColumnKind::Boolean,
            }),
            AttributeKind::Ordinal(levels) => columns.push(EncodedColumn {
                name: a.name.clone(),
                attribute: a.index,
                kind: ColumnKind::Ordinal {
                    levels: levels.len(),
                },
            }),
            AttributeKind::Nominal(cats) => {
                for (ci, c) in cats.iter().enumerate() {
                    columns.push(EncodedColumn {
                        name: format!("{}={}", a.name, c),
                        attribute: a.index,
                        kind: ColumnKind::OneHot { category: ci },
                    });
                }
            }
        }
    }
    columns
}

/// Encodes one raw row into `out` following `columns`.
pub fn encode_row(row: &[Value], columns: &[EncodedColumn], out: &mut [f64]) {
    for (slot, col) in out.iter_mut().zip(columns) {
        let v = row[col.attribute];
        *slot = match (col.kind.clone(), v) {
            (ColumnKind::OneHot { category }, Value::Category(c)) => {
                if c == category {
                    1.0
                } else {
                    0.0
                }
            }
            _ => v.as_f64(),
        };
    }
}

/// Numeric passthrough, Boolean to {0,1}, ordinal to its 0-based level code,
/// nominal to a one-hot block.
pub fn encode(dataset: &Dataset) -> EncodedMatrix {
    let columns = columns_for(dataset.attributes());
    let mut values = Array2::<f64>::zeros((dataset.len(), columns.len()));
    for (r, row) in dataset.rows().iter().enumerate() {
        let mut out = values.row_mut(r);
        encode_row(
            row,
            &columns,
            out.as_slice_mut().expect("row-major matrix"),
        );
    }
    EncodedMatrix { values, columns }
}

/// Inverse of `encode` for a single row.
pub fn decode_row(
    row: ArrayView1<'_, f64>,
    columns: &[EncodedColumn],
    attributes: &[Attribute],
) -> Result<Vec<Value>, DataError> {
    if row.len() != columns.len() {
        return Err(DataError::Width {
            expected: columns.len(),
            found: row.len(),
        });
    }
    let mut out: Vec<Option<Value>> = vec![None; attributes.len()];
    let mut ones: Vec<usize> = vec![0; attributes.len()];
    for (col, &v) in columns.iter().zip(row.iter()) {
        if !col.accepts(v) {
            return Err(DataError::Encoded {
                column: col.name.clone(),
                value: v,
            });
        }
        let slot = &mut out[col.attribute];
        match col.kind {
            ColumnKind::Numeric => *slot = Some(Value::Number(v)),
            ColumnKind::Boolean => *slot = Some(Value::Bool(v == 1.0)),
            ColumnKind::Ordinal { .. } => *slot = Some(Value::Category(v as usize)),
            ColumnKind::OneHot { category } => {
                if v == 1.0 {
                    ones[col.attribute] += 1;
                    *slot = Some(Value::Category(category));
                }
            }
        }
    }
    attributes
        .iter()
        .map(|a| {
            if matches!(a.kind, AttributeKind::Nominal(_)) && ones[a.index] != 1 {
                return Err(DataError::AmbiguousOneHot {
                    attribute: a.name.clone(),
                    ones: ones[a.index],
                });
            }
            out[a.index].ok_or_else(|| DataError::Width {
                expected: columns.len(),
                found: row.len(),
            })
        })
        .collect()
}
