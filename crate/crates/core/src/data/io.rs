use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Attribute, AttributeKind, DataError, Dataset, Value};

/// Name of the optional trailing label column.
pub const CLASS_COLUMN: &str = "class";

/// JSON schema document: `{attributes: [{name, kind, categories?}], classes: [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub attributes: Vec<SchemaAttribute>,
    pub classes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaAttribute {
    pub name: String,
    /// One of `numeric`, `ordinal`, `nominal`, `boolean`.
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<String>>,
}

impl Schema {
    pub fn from_json(text: &str) -> Result<Self, DataError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    pub fn from_attributes(attributes: &[Attribute], classes: &[String]) -> Self {
        let attributes = attributes
            .iter()
            .map(|a| {
                let (kind, categories) = match &a.kind {
                    AttributeKind::Numeric => ("numeric", None),
                    AttributeKind::Boolean => ("boolean", None),
                    AttributeKind::Ordinal(c) => ("ordinal", Some(c.clone())),
                    AttributeKind::Nominal(c) => ("nominal", Some(c.clone())),
                };
                SchemaAttribute {
                    name: a.name.clone(),
                    kind: kind.to_string(),
                    categories,
                }
            })
            .collect();
        Schema {
            attributes,
            classes: classes.to_vec(),
        }
    }

    /// Typed attributes declared by the schema.
    pub fn attributes(&self) -> Result<Vec<Attribute>, DataError> {
        self.attributes
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let cats = || {
                    a.categories.clone().ok_or_else(|| {
                        DataError::Schema(format!("attribute '{}' needs categories", a.name))
                    })
                };
                let kind = match a.kind.to_ascii_lowercase().as_str() {
                    "numeric" => AttributeKind::Numeric,
                    "boolean" => AttributeKind::Boolean,
                    "ordinal" => AttributeKind::Ordinal(cats()?),
                    "nominal" => AttributeKind::Nominal(cats()?),
                    other => {
                        return Err(DataError::Schema(format!(
                            "attribute '{}' has unknown kind '{other}'",
                            a.name
                        )))
                    }
                };
                if a.name == CLASS_COLUMN {
                    return Err(DataError::Schema(format!(
                        "'{CLASS_COLUMN}' is reserved for labels"
                    )));
                }
                Ok(Attribute::new(a.name.clone(), kind, i))
            })
            .collect()
    }
}

/// Loads a comma-separated data file validated against a JSON schema.
pub fn load_dataset(data_path: &Path, schema_path: &Path) -> Result<Dataset, DataError> {
    let schema = Schema::from_json(&std::fs::read_to_string(schema_path)?)?;
    let file = std::fs::File::open(data_path)?;
    parse_dataset(file, &schema)
}

/// Parses CSV records (header first) against `schema`.
pub fn parse_dataset<R: Read>(reader: R, schema: &Schema) -> Result<Dataset, DataError> {
    let attributes = schema.attributes()?;
    let classes = schema.classes.clone();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].trim().is_empty()) {
        return Dataset::new(attributes, Vec::new(), None, classes);
    }
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    let has_class = match names.len() {
        n if n == attributes.len() => false,
        n if n == attributes.len() + 1 && names[n - 1] == CLASS_COLUMN => true,
        n => {
            return Err(DataError::Header(format!(
                "{n} columns in header, schema declares {}",
                attributes.len()
            )))
        }
    };
    for (a, name) in attributes.iter().zip(&names) {
        if a.name != *name {
            return Err(DataError::Header(format!(
                "expected column '{}' at position {}, found '{name}'",
                a.name, a.index
            )));
        }
    }
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != names.len() {
            return Err(DataError::Arity {
                row: r,
                expected: names.len(),
                found: record.len(),
            });
        }
        let row = attributes
            .iter()
            .zip(record.iter())
            .map(|(a, raw)| {
                a.parse_value(raw).map_err(|reason| DataError::InvalidValue {
                    row: r,
                    column: a.name.clone(),
                    reason,
                })
            })
            .collect::<Result<Vec<Value>, _>>()?;
        if has_class {
            let raw = record[names.len() - 1].trim();
            let label = classes.iter().position(|c| c == raw).ok_or_else(|| {
                DataError::InvalidValue {
                    row: r,
                    column: CLASS_COLUMN.into(),
                    reason: format!("unknown class '{raw}'"),
                }
            })?;
            labels.push(label);
        }
        rows.push(row);
    }
    Dataset::new(attributes, rows, has_class.then_some(labels), classes)
}

/// Writes the dataset as CSV with a header (and the class column when labelled).
pub fn write_dataset_csv<W: Write>(dataset: &Dataset, writer: W) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = dataset.attributes().iter().map(|a| a.name.clone()).collect();
    if dataset.labels().is_some() {
        header.push(CLASS_COLUMN.into());
    }
    w.write_record(&header)?;
    for (r, row) in dataset.rows().iter().enumerate() {
        let mut fields: Vec<String> = dataset
            .attributes()
            .iter()
            .zip(row)
            .map(|(a, v)| a.format_value(v))
            .collect();
        if let Some(labels) = dataset.labels() {
            fields.push(dataset.class_names()[labels[r]].clone());
        }
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCHEMA: &str = r#"{
        "attributes": [
            {"name": "heap", "kind": "numeric"},
            {"name": "weekend", "kind": "boolean"},
            {"name": "soft_type", "kind": "nominal", "categories": ["Sales", "Factory"]}
        ],
        "classes": ["TEC", "OT"]
    }"#;

    #[test]
    fn header_only_is_empty_dataset() {
        let schema = Schema::from_json(SCHEMA).unwrap();
        let ds = parse_dataset("heap,weekend,soft_type\n".as_bytes(), &schema).unwrap();
        assert_eq!(ds.len(), 0);
        let ds = parse_dataset("".as_bytes(), &schema).unwrap();
        assert_eq!(ds.len(), 0);
    }

    #[test]
    fn unknown_category_names_row_and_column() {
        let schema = Schema::from_json(SCHEMA).unwrap();
        let data = "heap,weekend,soft_type,class\n60,True,Sales,TEC\n50,False,Finance,OT\n";
        let err = parse_dataset(data.as_bytes(), &schema).unwrap_err();
        match err {
            DataError::InvalidValue { row, column, .. } => {
                assert_eq!(row, 1);
                assert_eq!(column, "soft_type");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn numeric_and_arity_errors() {
        let schema = Schema::from_json(SCHEMA).unwrap();
        let bad_num = "heap,weekend,soft_type\nabc,True,Sales\n";
        assert!(matches!(
            parse_dataset(bad_num.as_bytes(), &schema),
            Err(DataError::InvalidValue { row: 0, .. })
        ));
        let short = "heap,weekend,soft_type\n60,True\n";
        assert!(matches!(
            parse_dataset(short.as_bytes(), &schema),
            Err(DataError::Arity { row: 0, .. })
        ));
        let bad_header = "heap,soft_type,weekend\n";
        assert!(matches!(
            parse_dataset(bad_header.as_bytes(), &schema),
            Err(DataError::Header(_))
        ));
    }

    #[test]
    fn schema_rejects_single_category() {
        let s = r#"{"attributes":[{"name":"a","kind":"nominal","categories":["x"]}],"classes":["c"]}"#;
        let schema = Schema::from_json(s).unwrap();
        assert!(parse_dataset("a\nx\n".as_bytes(), &schema).is_err());
    }

    #[test]
    fn write_then_parse() {
        let schema = Schema::from_json(SCHEMA).unwrap();
        let data = "heap,weekend,soft_type,class\n60.5,True,Sales,TEC\n50,False,Factory,OT\n";
        let ds = parse_dataset(data.as_bytes(), &schema).unwrap();
        let mut out = Vec::new();
        write_dataset_csv(&ds, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), data);
    }
}
