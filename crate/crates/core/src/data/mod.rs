//! The unified dataset: objects described by typed attributes, optional
//! class labels, and a reversible numeric encoding.

mod encoding;
mod io;
pub mod synth;
pub mod text;

pub use encoding::{
    columns_for, decode_row, encode, encode_row, ColumnKind, EncodedColumn, EncodedMatrix,
};
pub use io::{load_dataset, parse_dataset, write_dataset_csv, Schema, SchemaAttribute, CLASS_COLUMN};

use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fmt;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("row {row}, column '{column}': {reason}")]
    InvalidValue {
        row: usize,
        column: String,
        reason: String,
    },
    #[error("row {row}: expected {expected} fields, found {found}")]
    Arity {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("header mismatch: {0}")]
    Header(String),
    #[error("one-hot block of attribute '{attribute}' is ambiguous: {ones} active categories")]
    AmbiguousOneHot { attribute: String, ones: usize },
    #[error("encoded row has {found} values, expected {expected}")]
    Width { expected: usize, found: usize },
    #[error("invalid encoded value {value} in column '{column}'")]
    Encoded { column: String, value: f64 },
    #[error("invalid synthetic spec: {0}")]
    Synth(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// The domain of an attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AttributeKind {
    Numeric,
    /// Categories in ascending order.
    Ordinal(Vec<String>),
    Nominal(Vec<String>),
    Boolean,
}

impl AttributeKind {
    pub fn categories(&self) -> Option<&[String]> {
        match self {
            AttributeKind::Ordinal(c) | AttributeKind::Nominal(c) => Some(c),
            _ => None,
        }
    }

    fn validate(&self, name: &str) -> Result<(), DataError> {
        if let Some(cats) = self.categories() {
            let distinct: HashSet<&String> = cats.iter().collect();
            if cats.len() < 2 || distinct.len() != cats.len() {
                return Err(DataError::Schema(format!(
                    "attribute '{name}' needs at least 2 distinct categories"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub kind: AttributeKind,
    pub index: usize,
}

impl Attribute {
    pub fn new(name: impl Into<String>, kind: AttributeKind, index: usize) -> Self {
        Self {
            name: name.into(),
            kind,
            index,
        }
    }

    /// Parses a raw field into a value of this attribute's domain.
    pub fn parse_value(&self, raw: &str) -> Result<Value, String> {
        let raw = raw.trim();
        match &self.kind {
            AttributeKind::Numeric => raw
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(Value::Number)
                .ok_or_else(|| format!("'{raw}' is not a finite number")),
            AttributeKind::Boolean => match raw.to_ascii_lowercase().as_str() {
                "true" | "1" | "yes" => Ok(Value::Bool(true)),
                "false" | "0" | "no" => Ok(Value::Bool(false)),
                _ => Err(format!("'{raw}' is not a Boolean")),
            },
            AttributeKind::Ordinal(cats) | AttributeKind::Nominal(cats) => cats
                .iter()
                .position(|c| c == raw)
                .map(Value::Category)
                .ok_or_else(|| format!("unknown category '{raw}'")),
        }
    }

    pub fn conforms(&self, value: &Value) -> bool {
        match (&self.kind, value) {
            (AttributeKind::Numeric, Value::Number(v)) => v.is_finite(),
            (AttributeKind::Boolean, Value::Bool(_)) => true,
            (AttributeKind::Ordinal(c) | AttributeKind::Nominal(c), Value::Category(i)) => {
                *i < c.len()
            }
            _ => false,
        }
    }

    /// Text form of a value, as written to data files and rendered patterns.
    pub fn format_value(&self, value: &Value) -> String {
        match (value, &self.kind) {
            (Value::Number(v), _) => format_number(*v),
            (Value::Bool(b), _) => if *b { "True" } else { "False" }.to_string(),
            (Value::Category(i), kind) => kind
                .categories()
                .and_then(|c| c.get(*i))
                .cloned()
                .unwrap_or_else(|| format!("#{i}")),
        }
    }
}

/// Shortest round-trip decimal form of a float.
pub fn format_number(v: f64) -> String {
    if v == 0.0 {
        // collapse -0
        return "0".to_string();
    }
    format!("{v}")
}

/// A raw attribute value. Categories index into the attribute's category list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Value {
    Number(f64),
    Category(usize),
    Bool(bool),
}

impl Value {
    /// Position of the value on the attribute's ordered axis (numbers,
    /// ordinal level codes, Boolean 0/1). Nominal categories return their index.
    pub fn as_f64(&self) -> f64 {
        match self {
            Value::Number(v) => *v,
            Value::Category(i) => *i as f64,
            Value::Bool(b) => {
                if *b {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Number(v) => write!(f, "{}", format_number(*v)),
            Value::Category(i) => write!(f, "#{i}"),
            Value::Bool(b) => write!(f, "{}", if *b { "True" } else { "False" }),
        }
    }
}

/// Objects × attributes × optional class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    attributes: Vec<Attribute>,
    rows: Vec<Vec<Value>>,
    labels: Option<Vec<usize>>,
    class_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        attributes: Vec<Attribute>,
        rows: Vec<Vec<Value>>,
        labels: Option<Vec<usize>>,
        class_names: Vec<String>,
    ) -> Result<Self, DataError> {
        let mut names = HashSet::new();
        for (i, a) in attributes.iter().enumerate() {
            if a.index != i {
                return Err(DataError::Schema(format!(
                    "attribute '{}' has index {} at position {i}",
                    a.name, a.index
                )));
            }
            if !names.insert(a.name.as_str()) {
                return Err(DataError::Schema(format!("duplicate attribute '{}'", a.name)));
            }
            a.kind.validate(&a.name)?;
        }
        let distinct: HashSet<&String> = class_names.iter().collect();
        if distinct.len() != class_names.len() {
            return Err(DataError::Schema("duplicate class names".into()));
        }
        for (r, row) in rows.iter().enumerate() {
            if row.len() != attributes.len() {
                return Err(DataError::Arity {
                    row: r,
                    expected: attributes.len(),
                    found: row.len(),
                });
            }
            for (a, v) in attributes.iter().zip(row) {
                if !a.conforms(v) {
                    return Err(DataError::InvalidValue {
                        row: r,
                        column: a.name.clone(),
                        reason: format!("value {v} does not conform to {:?}", a.kind),
                    });
                }
            }
        }
        if let Some(labels) = &labels {
            if labels.len() != rows.len() {
                return Err(DataError::Schema(format!(
                    "{} labels for {} rows",
                    labels.len(),
                    rows.len()
                )));
            }
            if let Some(bad) = labels.iter().find(|&&l| l >= class_names.len()) {
                return Err(DataError::Schema(format!("label index {bad} out of range")));
            }
        }
        Ok(Self {
            attributes,
            rows,
            labels,
            class_names,
        })
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn attribute(&self, name: &str) -> Option<&Attribute> {
        self.attributes.iter().find(|a| a.name == name)
    }

    pub fn rows(&self) -> &[Vec<Value>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[Value] {
        &self.rows[i]
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    /// Number of objects.
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_attributes(&self) -> usize {
        self.attributes.len()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Appends numeric columns (e.g. tf-idf features) to every row.
    pub fn with_numeric_columns(
        &self,
        names: &[String],
        values: &ndarray::Array2<f64>,
    ) -> Result<Self, DataError> {
        if values.nrows() != self.len() || values.ncols() != names.len() {
            return Err(DataError::Schema(format!(
                "appended block is {}×{}, expected {}×{}",
                values.nrows(),
                values.ncols(),
                self.len(),
                names.len()
            )));
        }
        let mut attributes = self.attributes.clone();
        for name in names {
            let index = attributes.len();
            attributes.push(Attribute::new(name.clone(), AttributeKind::Numeric, index));
        }
        let rows = self
            .rows
            .iter()
            .zip(values.rows())
            .map(|(row, extra)| {
                let mut r = row.clone();
                r.extend(extra.iter().map(|&v| Value::Number(v)));
                r
            })
            .collect();
        Dataset::new(attributes, rows, self.labels.clone(), self.class_names.clone())
    }

    /// Drops the named attributes.
    pub fn without_attributes(&self, drop: &[String]) -> Result<Self, DataError> {
        let keep: Vec<usize> = self
            .attributes
            .iter()
            .filter(|a| !drop.contains(&a.name))
            .map(|a| a.index)
            .collect();
        let attributes = keep
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                let a = &self.attributes[k];
                Attribute::new(a.name.clone(), a.kind.clone(), i)
            })
            .collect();
        let rows = self
            .rows
            .iter()
            .map(|r| keep.iter().map(|&k| r[k]).collect())
            .collect();
        Dataset::new(attributes, rows, self.labels.clone(), self.class_names.clone())
    }

    /// Sub-dataset restricted to the given rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        Self {
            attributes: self.attributes.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            class_names: self.class_names.clone(),
        }
    }
}
