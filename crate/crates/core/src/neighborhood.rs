//! Locality-aware synthetic neighborhoods: each object is perturbed with a
//! Gaussian whose covariance is the dataset covariance shrunk by `z`, the
//! samples are snapped back onto valid encoded rows and labelled by the
//! black box once, up front.

use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blackbox::{check_row_stochastic, BlackBox, BlackBoxError};
use crate::data::{ColumnKind, EncodedColumn};
use crate::linalg::Cholesky;

pub const DEFAULT_SHRINK: f64 = 10.0;
pub const DEFAULT_SYNTHETIC: usize = 250;
pub const DEFAULT_CHUNK: usize = 8192;

/// Relative jitter added to the covariance diagonal when it is not
/// positive definite.
pub const JITTER_SCALE: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum NeighborhoodError {
    #[error("covariance needs at least 2 objects, got {0}")]
    TooFewObjects(usize),
    #[error("covariance is not positive definite even after jitter {jitter}")]
    NotPositiveDefinite { jitter: f64 },
    #[error("shrink factor must be >= 1, got {0}")]
    Shrink(f64),
    #[error("object row has {found} values, expected {expected}")]
    Width { expected: usize, found: usize },
    #[error("neighborhoods are not labelled")]
    Unlabelled,
    #[error("black box: {0}")]
    BlackBox(#[from] BlackBoxError),
    #[error("cache: {0}")]
    Cache(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Sample covariance (n − 1 denominator), symmetrized.
pub fn sample_covariance(x: ArrayView2<'_, f64>) -> Result<Array2<f64>, NeighborhoodError> {
    let n = x.nrows();
    if n < 2 {
        return Err(NeighborhoodError::TooFewObjects(n));
    }
    let mean = x.mean_axis(Axis(0)).expect("non-empty");
    let centered = &x - &mean.insert_axis(Axis(0));
    let mut cov = centered.t().dot(&centered) / (n as f64 - 1.0);
    let m = cov.nrows();
    for i in 0..m {
        for j in 0..i {
            let v = 0.5 * (cov[[i, j]] + cov[[j, i]]);
            cov[[i, j]] = v;
            cov[[j, i]] = v;
        }
    }
    Ok(cov)
}

/// The shared covariance of the objects to explain with its Cholesky factor.
#[derive(Debug, Clone)]
pub struct Covariance {
    matrix: Array2<f64>,
    jitter: f64,
    lower: Array2<f64>,
}

impl Covariance {
    /// Factors `matrix`, adding `εI` with `ε = 1e−9 · trace / m′` when the
    /// plain factorization fails (`ε = 1e−9` for a zero matrix).
    pub fn from_matrix(matrix: Array2<f64>) -> Result<Self, NeighborhoodError> {
        if let Ok(c) = Cholesky::factor(matrix.view()) {
            return Ok(Self {
                matrix,
                jitter: 0.0,
                lower: c.into_lower(),
            });
        }
        let m = matrix.nrows().max(1);
        let trace: f64 = matrix.diag().sum();
        let jitter = if trace > 0.0 {
            JITTER_SCALE * trace / m as f64
        } else {
            JITTER_SCALE
        };
        let mut jittered = matrix;
        jittered.diag_mut().mapv_inplace(|v| v + jitter);
        let c = Cholesky::factor(jittered.view())
            .map_err(|_| NeighborhoodError::NotPositiveDefinite { jitter })?;
        Ok(Self {
            matrix: jittered,
            jitter,
            lower: c.into_lower(),
        })
    }

    /// Covariance matrix actually sampled from (after jitter).
    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn lower(&self) -> &Array2<f64> {
        &self.lower
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Covariance of the encoded objects to explain, jittered if needed.
pub fn estimate_covariance(x: ArrayView2<'_, f64>) -> Result<Covariance, NeighborhoodError> {
    Covariance::from_matrix(sample_covariance(x)?)
}

/// Snaps a real vector onto a valid encoded row: Booleans threshold at 0.5,
/// ordinals round and clamp, each one-hot block keeps the category whose raw
/// value is closest to 1 (lowest index on ties).
pub fn discretize(sample: &mut [f64], columns: &[EncodedColumn]) {
    let mut i = 0;
    while i < columns.len() {
        match columns[i].kind {
            ColumnKind::Numeric => {}
            ColumnKind::Boolean => sample[i] = if sample[i] >= 0.5 { 1.0 } else { 0.0 },
            ColumnKind::Ordinal { levels } => {
                let max = levels.saturating_sub(1) as f64;
                sample[i] = sample[i].round().clamp(0.0, max);
            }
            ColumnKind::OneHot { .. } => {
                let attr = columns[i].attribute;
                let end = (i..columns.len())
                    .find(|&j| {
                        columns[j].attribute != attr
                            || !matches!(columns[j].kind, ColumnKind::OneHot { .. })
                    })
                    .unwrap_or(columns.len());
                let mut best = i;
                for j in i..end {
                    if (sample[j] - 1.0).abs() < (sample[best] - 1.0).abs() {
                        best = j;
                    }
                }
                for j in i..end {
                    sample[j] = if j == best { 1.0 } else { 0.0 };
                }
                i = end;
                continue;
            }
        }
        i += 1;
    }
}

/// Sampling parameters shared by every object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodConfig {
    pub shrink: f64,
    pub n_synthetic: usize,
    pub seed: u64,
}

impl Default for NeighborhoodConfig {
    fn default() -> Self {
        Self {
            shrink: DEFAULT_SHRINK,
            n_synthetic: DEFAULT_SYNTHETIC,
            seed: 0,
        }
    }
}

/// `o` followed by `n_synthetic` discretized draws from `N(o, Σ/z)`.
/// `stream` selects an independent random substream for this object.
pub fn generate_neighbors(
    object: ArrayView1<'_, f64>,
    covariance: &Covariance,
    shrink: f64,
    n_synthetic: usize,
    seed: u64,
    stream: u64,
    columns: &[EncodedColumn],
) -> Result<Array2<f64>, NeighborhoodError> {
    if !(shrink >= 1.0) {
        return Err(NeighborhoodError::Shrink(shrink));
    }
    let m = object.len();
    if covariance.dim() != m || columns.len() != m {
        return Err(NeighborhoodError::Width {
            expected: covariance.dim(),
            found: m,
        });
    }
    // chol(Σ/z) = chol(Σ)/√z
    let scale = 1.0 / shrink.sqrt();
    let lower = covariance.lower();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut out = Array2::<f64>::zeros((1 + n_synthetic, m));
    out.row_mut(0).assign(&object);
    let mut g = Array1::<f64>::zeros(m);
    for r in 1..=n_synthetic {
        g.iter_mut().for_each(|v| *v = StandardNormal.sample(&mut rng));
        let mut row = out.row_mut(r);
        for i in 0..m {
            let mut acc = 0.0;
            for k in 0..=i {
                acc += lower[[i, k]] * g[k];
            }
            row[i] = object[i] + scale * acc;
        }
        discretize(row.as_slice_mut().expect("contiguous row"), columns);
    }
    Ok(out)
}

/// Neighborhoods of every object to explain plus cached black-box outputs.
#[derive(Debug, Clone)]
pub struct NeighborhoodSet {
    /// Dataset row index of each explained object.
    objects: Vec<usize>,
    samples: Vec<Array2<f64>>,
    outputs: Option<Vec<Array2<f64>>>,
    covariance: Covariance,
    config: NeighborhoodConfig,
}

impl NeighborhoodSet {
    /// Generates neighborhoods for the given rows of `encoded`. Each object
    /// draws from the substream keyed by its dataset row index, so the result
    /// does not depend on scheduling.
    pub fn generate(
        encoded: ArrayView2<'_, f64>,
        columns: &[EncodedColumn],
        objects: &[usize],
        config: NeighborhoodConfig,
    ) -> Result<Self, NeighborhoodError> {
        let selected = encoded.select(Axis(0), objects);
        let covariance = estimate_covariance(selected.view())?;
        Self::generate_with(encoded, columns, objects, covariance, config)
    }

    /// As `generate` with a caller-supplied covariance.
    pub fn generate_with(
        encoded: ArrayView2<'_, f64>,
        columns: &[EncodedColumn],
        objects: &[usize],
        covariance: Covariance,
        config: NeighborhoodConfig,
    ) -> Result<Self, NeighborhoodError> {
        let samples = objects
            .par_iter()
            .map(|&o| {
                generate_neighbors(
                    encoded.row(o),
                    &covariance,
                    config.shrink,
                    config.n_synthetic,
                    config.seed,
                    o as u64,
                    columns,
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            objects: objects.to_vec(),
            samples,
            outputs: None,
            covariance,
            config,
        })
    }

    /// Assembles a set from precomputed parts (cache loading, tests).
    pub fn from_parts(
        objects: Vec<usize>,
        samples: Vec<Array2<f64>>,
        outputs: Option<Vec<Array2<f64>>>,
        covariance: Covariance,
        config: NeighborhoodConfig,
    ) -> Result<Self, NeighborhoodError> {
        if samples.len() != objects.len()
            || outputs.as_ref().is_some_and(|o| o.len() != objects.len())
        {
            return Err(NeighborhoodError::Cache("object count mismatch".into()));
        }
        if let Some(outs) = &outputs {
            for (s, o) in samples.iter().zip(outs) {
                if s.nrows() != o.nrows() {
                    return Err(NeighborhoodError::Cache("output row count mismatch".into()));
                }
                check_row_stochastic(o)?;
            }
        }
        Ok(Self {
            objects,
            samples,
            outputs,
            covariance,
            config,
        })
    }

    /// Fills the black-box outputs with one batch call per chunk of rows.
    /// Already labelled sets are returned unchanged.
    pub fn label<B: BlackBox + ?Sized>(
        mut self,
        bb: &B,
        chunk_rows: usize,
    ) -> Result<Self, NeighborhoodError> {
        if self.outputs.is_some() {
            return Ok(self);
        }
        let chunk_rows = chunk_rows.max(1);
        let m = self.width();
        let p = bb.n_classes();
        let total: usize = self.samples.iter().map(|s| s.nrows()).sum();
        let mut all = Array2::<f64>::zeros((total, p));
        let mut flat = Array2::<f64>::zeros((total, m));
        let mut offset = 0;
        for s in &self.samples {
            flat.slice_mut(s![offset..offset + s.nrows(), ..]).assign(s);
            offset += s.nrows();
        }
        let mut start = 0;
        while start < total {
            let end = (start + chunk_rows).min(total);
            let batch = flat.slice(s![start..end, ..]).to_owned();
            let out = bb.predict_batch(&batch)?;
            if out.dim() != (end - start, p) {
                return Err(BlackBoxError::RowCount {
                    expected: end - start,
                    actual: out.nrows(),
                }
                .into());
            }
            check_row_stochastic(&out)?;
            all.slice_mut(s![start..end, ..]).assign(&out);
            start = end;
        }
        let mut outputs = Vec::with_capacity(self.samples.len());
        let mut offset = 0;
        for s in &self.samples {
            outputs.push(all.slice(s![offset..offset + s.nrows(), ..]).to_owned());
            offset += s.nrows();
        }
        self.outputs = Some(outputs);
        Ok(self)
    }

    pub fn objects(&self) -> &[usize] {
        &self.objects
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn width(&self) -> usize {
        self.covariance.dim()
    }

    /// Samples of the `i`-th explained object; row 0 is the object itself.
    pub fn samples(&self, i: usize) -> &Array2<f64> {
        &self.samples[i]
    }

    pub fn outputs(&self, i: usize) -> Result<&Array2<f64>, NeighborhoodError> {
        self.outputs
            .as_ref()
            .map(|o| &o[i])
            .ok_or(NeighborhoodError::Unlabelled)
    }

    pub fn is_labelled(&self) -> bool {
        self.outputs.is_some()
    }

    pub fn n_classes(&self) -> Option<usize> {
        self.outputs.as_ref().and_then(|o| o.first()).map(|o| o.ncols())
    }

    pub fn covariance(&self) -> &Covariance {
        &self.covariance
    }

    pub fn config(&self) -> NeighborhoodConfig {
        self.config
    }

    /// Saves samples and outputs keyed by the inputs that determine them.
    pub fn save_cache(&self, path: &Path, key: &CacheKey) -> Result<(), NeighborhoodError> {
        let outputs = self.outputs.as_ref().ok_or(NeighborhoodError::Unlabelled)?;
        let file = CacheFile {
            key: key.clone(),
            objects: self.objects.clone(),
            covariance: to_rows(&self.covariance.matrix),
            jitter: self.covariance.jitter,
            samples: self.samples.iter().map(to_rows).collect(),
            outputs: outputs.iter().map(to_rows).collect(),
        };
        let text = serde_json::to_string(&file).map_err(|e| NeighborhoodError::Cache(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    /// Loads a cache written by `save_cache`; `None` when the key differs.
    pub fn load_cache(path: &Path, key: &CacheKey) -> Result<Option<Self>, NeighborhoodError> {
        let text = std::fs::read_to_string(path)?;
        let file = parse_cache(&text)?;
        if &file.key != key {
            return Ok(None);
        }
        let matrix = from_rows(&file.covariance)?;
        let covariance = Covariance::from_matrix(matrix)?;
        let samples = file
            .samples
            .iter()
            .map(|s| from_rows(s))
            .collect::<Result<Vec<_>, _>>()?;
        let outputs = file
            .outputs
            .iter()
            .map(|s| from_rows(s))
            .collect::<Result<Vec<_>, _>>()?;
        let config = NeighborhoodConfig {
            shrink: key.shrink,
            n_synthetic: key.n_synthetic,
            seed: key.seed,
        };
        Self::from_parts(file.objects, samples, Some(outputs), covariance, config).map(Some)
    }
}

/// Identity of a cached neighborhood set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheKey {
    pub data_hash: String,
    pub blackbox: String,
    pub seed: u64,
    pub shrink: f64,
    pub n_synthetic: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CacheFile {
    pub key: CacheKey,
    pub objects: Vec<usize>,
    pub covariance: Vec<Vec<f64>>,
    pub jitter: f64,
    pub samples: Vec<Vec<Vec<f64>>>,
    pub outputs: Vec<Vec<Vec<f64>>>,
}

/// Parses the JSON cache document without interpreting it.
pub fn parse_cache(text: &str) -> Result<CacheFile, NeighborhoodError> {
    serde_json::from_str(text).map_err(|e| NeighborhoodError::Cache(e.to_string()))
}

fn to_rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn from_rows(rows: &[Vec<f64>]) -> Result<Array2<f64>, NeighborhoodError> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(NeighborhoodError::Cache("ragged matrix".into()));
    }
    Array2::from_shape_vec((rows.len(), cols), rows.iter().flatten().cloned().collect())
        .map_err(|e| NeighborhoodError::Cache(e.to_string()))
}
