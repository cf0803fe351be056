//! Bag-of-words tf-idf features for free-text fields.

use std::collections::{BTreeMap, HashSet};

use ndarray::Array2;

use super::encoding::{ColumnKind, EncodedColumn, EncodedMatrix};
use super::DataError;

/// A short English stopword list used when none is supplied.
pub const DEFAULT_STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "but", "by", "for", "from", "has", "have", "if",
    "in", "into", "is", "it", "its", "no", "not", "of", "on", "or", "such", "that", "the",
    "their", "then", "there", "these", "they", "this", "to", "was", "were", "will", "with",
];

pub fn default_stopwords() -> HashSet<String> {
    DEFAULT_STOPWORDS.iter().map(|s| s.to_string()).collect()
}

/// Lowercased alphanumeric tokens of at least `min_len` characters that are
/// not stopwords. Numbers are kept.
pub fn tokenize(text: &str, stopwords: &HashSet<String>, min_len: usize) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .filter(|t| t.chars().count() >= min_len && !stopwords.contains(t))
        .collect()
}

/// tf-idf matrix over the `top_n` terms with the largest corpus-wide tf-idf mass.
///
/// tf is the raw count, idf = ln((1 + n) / (1 + df)) + 1, and each document
/// row is L2-normalized over the full vocabulary before the top terms are kept.
pub fn featurize_text(
    documents: &[String],
    top_n: usize,
    stopwords: &HashSet<String>,
    min_token_len: usize,
) -> Result<(EncodedMatrix, Vec<String>), DataError> {
    if top_n == 0 {
        return Err(DataError::Schema("top_n must be at least 1".into()));
    }
    let n = documents.len();
    let counts: Vec<BTreeMap<String, usize>> = documents
        .iter()
        .map(|d| {
            let mut m = BTreeMap::new();
            for t in tokenize(d, stopwords, min_token_len.max(1)) {
                *m.entry(t).or_insert(0) += 1;
            }
            m
        })
        .collect();
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in &counts {
        for term in doc.keys() {
            *df.entry(term.as_str()).or_insert(0) += 1;
        }
    }
    let idf: BTreeMap<&str, f64> = df
        .iter()
        .map(|(&t, &d)| (t, ((1.0 + n as f64) / (1.0 + d as f64)).ln() + 1.0))
        .collect();

    let weighted: Vec<BTreeMap<&str, f64>> = counts
        .iter()
        .map(|doc| {
            let mut row: BTreeMap<&str, f64> = doc
                .iter()
                .map(|(t, &c)| (t.as_str(), c as f64 * idf[t.as_str()]))
                .collect();
            let norm = row.values().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.values_mut().for_each(|v| *v /= norm);
            }
            row
        })
        .collect();

    let mut mass: BTreeMap<&str, f64> = BTreeMap::new();
    for row in &weighted {
        for (&t, &v) in row {
            *mass.entry(t).or_insert(0.0) += v;
        }
    }
    let mut ranked: Vec<(&str, f64)> = mass.into_iter().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let vocabulary: Vec<String> = ranked
        .into_iter()
        .take(top_n)
        .map(|(t, _)| t.to_string())
        .collect();

    let mut values = Array2::<f64>::zeros((n, vocabulary.len()));
    for (r, row) in weighted.iter().enumerate() {
        for (c, term) in vocabulary.iter().enumerate() {
            if let Some(&v) = row.get(term.as_str()) {
                values[[r, c]] = v;
            }
        }
    }
    let columns = vocabulary
        .iter()
        .enumerate()
        .map(|(i, t)| EncodedColumn {
            name: t.clone(),
            attribute: i,
            kind: ColumnKind::Numeric,
        })
        .collect();
    Ok((EncodedMatrix { values, columns }, vocabulary))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs(d: &[&str]) -> Vec<String> {
        d.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn two_document_example() {
        let (m, vocab) =
            featurize_text(&docs(&["disk full", "swap full"]), 3, &HashSet::new(), 1).unwrap();
        assert_eq!(vocab, vec!["full", "disk", "swap"]);
        // hand computation: idf(full) = 1, idf(disk) = idf(swap) = ln(1.5) + 1
        let idf = 1.5f64.ln() + 1.0;
        let norm = (idf * idf + 1.0).sqrt();
        assert!((m.values[[0, 0]] - 1.0 / norm).abs() < 1e-12);
        assert_eq!(m.values[[0, 0]], m.values[[1, 0]]);
        assert!((m.values[[0, 1]] - idf / norm).abs() < 1e-12);
        assert_eq!(m.values[[1, 1]], 0.0);
        assert_eq!(m.values[[0, 2]], 0.0);
    }

    #[test]
    fn repeated_document_rows_identical() {
        let (m, _) = featurize_text(
            &docs(&["java heap error 500", "java heap error 500"]),
            10,
            &HashSet::new(),
            1,
        )
        .unwrap();
        assert_eq!(m.values.row(0), m.values.row(1));
        assert!(m.values.iter().all(|&v| (v - 0.5).abs() < 1e-12));
    }

    #[test]
    fn stopword_only_document_is_zero() {
        let (m, vocab) = featurize_text(
            &docs(&["the and of", "disk full"]),
            5,
            &default_stopwords(),
            1,
        )
        .unwrap();
        assert_eq!(vocab.len(), 2);
        assert!(m.values.row(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn empty_corpus_and_zero_top_n() {
        let (m, vocab) = featurize_text(&[], 5, &HashSet::new(), 1).unwrap();
        assert_eq!(m.values.dim(), (0, 0));
        assert!(vocab.is_empty());
        assert!(featurize_text(&docs(&["x"]), 0, &HashSet::new(), 1).is_err());
    }

    #[test]
    fn short_tokens_dropped_numbers_kept() {
        let toks = tokenize("HTTP 500 on db-01: ok", &HashSet::new(), 3);
        assert_eq!(toks, vec!["http", "500"]);
    }
}
