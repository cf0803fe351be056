//! Synthetic multi-regime datasets with a closed-form black box, used as a
//! ground-truth substrate for recovery tests.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Attribute, AttributeKind, DataError, Dataset, Value};
use crate::blackbox::{BlackBox, Condition, ConditionEntry, Regime, RegimeBlackBox};

/// Description of a synthetic dataset.
///
/// Attributes are `x1..x{numeric}` (uniform on `numeric_range`) followed by
/// `b1..b{boolean}` (Bernoulli). Each regime is a conjunction of threshold
/// conditions with its own class-logit weights (`p × m`) and biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    pub numeric: usize,
    #[serde(default)]
    pub boolean: usize,
    #[serde(default = "unit_range")]
    pub numeric_range: [f64; 2],
    #[serde(default = "half")]
    pub boolean_probability: f64,
    pub classes: Vec<String>,
    pub regimes: Vec<RegimeSpec>,
    /// Scale of Gumbel noise added to the logits when drawing class labels;
    /// 0 labels each object with its most probable class.
    #[serde(default)]
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSpec {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub conditions: Vec<ConditionEntry>,
    #[serde(default)]
    pub weights: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub biases: Option<Vec<f64>>,
}

fn unit_range() -> [f64; 2] {
    [0.0, 1.0]
}

fn half() -> f64 {
    0.5
}

/// Output of `generate_synthetic`.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dataset: Dataset,
    pub oracle: RegimeBlackBox,
    /// Regime index of every object.
    pub regimes: Vec<usize>,
}

impl SynthSpec {
    pub fn from_json(text: &str) -> Result<Self, DataError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn attribute_names(&self) -> Vec<String> {
        (1..=self.numeric)
            .map(|i| format!("x{i}"))
            .chain((1..=self.boolean).map(|i| format!("b{i}")))
            .collect()
    }

    pub fn attributes(&self) -> Vec<Attribute> {
        self.attribute_names()
            .into_iter()
            .enumerate()
            .map(|(i, name)| {
                let kind = if i < self.numeric {
                    AttributeKind::Numeric
                } else {
                    AttributeKind::Boolean
                };
                Attribute::new(name, kind, i)
            })
            .collect()
    }

    /// The closed-form oracle described by the regimes.
    pub fn oracle(&self) -> Result<RegimeBlackBox, DataError> {
        let names = self.attribute_names();
        let m = names.len();
        let p = self.classes.len();
        if p < 2 {
            return Err(DataError::Synth("need at least two classes".into()));
        }
        let [lo, hi] = self.numeric_range;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(DataError::Synth("numeric_range must satisfy lo < hi".into()));
        }
        if !(0.0..=1.0).contains(&self.boolean_probability) {
            return Err(DataError::Synth("boolean_probability must lie in [0, 1]".into()));
        }
        if !(self.noise >= 0.0) {
            return Err(DataError::Synth("noise must be non-negative".into()));
        }
        let mut regimes = Vec::with_capacity(self.regimes.len());
        for (ri, r) in self.regimes.iter().enumerate() {
            let conditions = r
                .conditions
                .iter()
                .map(|c| {
                    let column = names.iter().position(|n| *n == c.column).ok_or_else(|| {
                        DataError::Synth(format!("regime {ri}: unknown attribute '{}'", c.column))
                    })?;
                    Ok(Condition {
                        column,
                        op: c.op,
                        value: c.value,
                    })
                })
                .collect::<Result<Vec<_>, DataError>>()?;
            let weights = match &r.weights {
                None => Array2::zeros((p, m)),
                Some(w) => {
                    if w.len() != p || w.iter().any(|row| row.len() != m) {
                        return Err(DataError::Synth(format!(
                            "regime {ri}: weights must be {p}×{m}"
                        )));
                    }
                    Array2::from_shape_vec((p, m), w.iter().flatten().cloned().collect())
                        .expect("shape checked")
                }
            };
            let biases = match &r.biases {
                None => Array1::zeros(p),
                Some(b) if b.len() == p => Array1::from(b.clone()),
                Some(_) => {
                    return Err(DataError::Synth(format!("regime {ri}: biases must have length {p}")))
                }
            };
            regimes.push(Regime {
                conditions,
                weights,
                biases,
            });
        }
        let binary = (0..m).map(|i| i >= self.numeric).collect();
        RegimeBlackBox::new(self.classes.clone(), names, binary, regimes)
            .map_err(|e| DataError::Synth(e.to_string()))
    }
}

/// Draws a dataset from `spec`; identical `(spec, seed)` give identical output.
pub fn generate_synthetic(spec: &SynthSpec, seed: u64) -> Result<SyntheticData, DataError> {
    let oracle = spec.oracle()?;
    let attributes = spec.attributes();
    let m = attributes.len();
    let [lo, hi] = spec.numeric_range;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut encoded = Array2::<f64>::zeros((spec.n, m));
    let mut rows = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let mut row = Vec::with_capacity(m);
        for j in 0..m {
            let v = if j < spec.numeric {
                let v = lo + (hi - lo) * rng.random::<f64>();
                row.push(Value::Number(v));
                v
            } else {
                let b = rng.random::<f64>() < spec.boolean_probability;
                row.push(Value::Bool(b));
                if b {
                    1.0
                } else {
                    0.0
                }
            };
            encoded[[i, j]] = v;
        }
        rows.push(row);
    }
    let probs = oracle
        .predict_batch(&encoded)
        .map_err(|e| DataError::Synth(e.to_string()))?;
    let mut labels = Vec::with_capacity(spec.n);
    let mut regimes = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        regimes.push(oracle.regime_of(encoded.row(i)).expect("regimes partition the space"));
        let mut best = (f64::NEG_INFINITY, 0usize);
        for (c, &pr) in probs.row(i).iter().enumerate() {
            let mut score = pr.max(f64::MIN_POSITIVE).ln();
            if spec.noise > 0.0 {
                let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
                score += spec.noise * -(-u.ln()).ln();
            }
            if score > best.0 {
                best = (score, c);
            }
        }
        labels.push(best.1);
    }
    let dataset = Dataset::new(attributes, rows, Some(labels), spec.classes.clone())?;
    Ok(SyntheticData {
        dataset,
        oracle,
        regimes,
    })
}
