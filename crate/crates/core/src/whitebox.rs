//! Multi-output ridge surrogates fitted on pooled neighborhoods, their SSE
//! fidelity loss and coefficient-based feature importance.
//!
//! Fits go through [`SufficientStats`]: the Gram matrix of the design
//! augmented with a trailing intercept column, the cross-products with the
//! targets, and the target sum of squares. Stats of disjoint sample sets add
//! up, which lets the split search evaluate many candidate children cheaply.

use std::ops::{AddAssign, SubAssign};

use ndarray::{s, Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::linalg::{solve_psd_min_norm, Cholesky};
use crate::neighborhood::{NeighborhoodError, NeighborhoodSet};

pub const DEFAULT_LAMBDA: f64 = 1.0;

#[derive(Debug, thiserror::Error)]
pub enum RidgeError {
    #[error("cannot fit on zero samples")]
    Empty,
    #[error("design has {x} rows but targets have {y}")]
    RowMismatch { x: usize, y: usize },
    #[error("lambda must be finite and non-negative, got {0}")]
    Lambda(f64),
    #[error("normal equations are singular with lambda = 0; use lambda > 0")]
    Singular,
    #[error("input has {actual} columns, model expects {expected}")]
    Width { expected: usize, actual: usize },
    #[error(transparent)]
    Neighborhood(#[from] NeighborhoodError),
}

/// What to do when the unpenalized normal equations are singular.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SingularPolicy {
    Error,
    /// Minimum-norm least-squares solution, still a global SSE minimizer.
    MinimumNorm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RidgeOptions {
    pub lambda: f64,
    pub fit_intercept: bool,
    /// Penalize each coefficient by its column variance, which is ridge on
    /// standardized features with coefficients reported on the raw scale.
    pub standardize: bool,
    pub singular: SingularPolicy,
}

impl RidgeOptions {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            fit_intercept: true,
            standardize: false,
            singular: SingularPolicy::Error,
        }
    }

    pub fn lenient(lambda: f64) -> Self {
        Self {
            singular: SingularPolicy::MinimumNorm,
            ..Self::new(lambda)
        }
    }
}

impl Default for RidgeOptions {
    fn default() -> Self {
        Self::new(DEFAULT_LAMBDA)
    }
}

/// Additive summary of a sample set `(X, Y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    /// `[X 1]ᵀ [X 1]`, size `(m′+1)²`.
    pub gram: Array2<f64>,
    /// `[X 1]ᵀ Y`, size `(m′+1) × p`.
    pub cross: Array2<f64>,
    /// `Σ Y²` over all entries.
    pub target_sq: f64,
    pub count: usize,
}

impl SufficientStats {
    pub fn zeros(width: usize, outputs: usize) -> Self {
        Self {
            gram: Array2::zeros((width + 1, width + 1)),
            cross: Array2::zeros((width + 1, outputs)),
            target_sq: 0.0,
            count: 0,
        }
    }

    pub fn from_samples(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Self {
        let (k, m) = x.dim();
        let mut aug = Array2::<f64>::ones((k, m + 1));
        aug.slice_mut(s![.., ..m]).assign(&x);
        Self {
            gram: aug.t().dot(&aug),
            cross: aug.t().dot(&y),
            target_sq: y.iter().map(|v| v * v).sum(),
            count: k,
        }
    }

    pub fn width(&self) -> usize {
        self.gram.nrows() - 1
    }

    pub fn outputs(&self) -> usize {
        self.cross.ncols()
    }

    /// SSE of `model` over the summarized samples, computed from the stats
    /// alone. Subject to cancellation when the fit is close to exact.
    pub fn sse(&self, model: &WhiteBoxModel) -> f64 {
        let b = model.augmented();
        let gb = self.gram.dot(&b);
        let quad: f64 = (&b * &gb).sum();
        let lin: f64 = (&b * &self.cross).sum();
        (self.target_sq - 2.0 * lin + quad).max(0.0)
    }
}

impl AddAssign<&SufficientStats> for SufficientStats {
    fn add_assign(&mut self, rhs: &SufficientStats) {
        self.gram += &rhs.gram;
        self.cross += &rhs.cross;
        self.target_sq += rhs.target_sq;
        self.count += rhs.count;
    }
}

impl SubAssign<&SufficientStats> for SufficientStats {
    fn sub_assign(&mut self, rhs: &SufficientStats) {
        self.gram -= &rhs.gram;
        self.cross -= &rhs.cross;
        self.target_sq -= rhs.target_sq;
        self.count -= rhs.count;
    }
}

/// An affine multi-output surrogate `x ↦ coefficients · x + intercepts`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhiteBoxModel {
    /// `p × m′`.
    pub coefficients: Array2<f64>,
    /// Length `p`.
    pub intercepts: Array1<f64>,
    pub lambda: f64,
    pub samples: usize,
}

impl WhiteBoxModel {
    pub fn zeros(outputs: usize, width: usize) -> Self {
        Self {
            coefficients: Array2::zeros((outputs, width)),
            intercepts: Array1::zeros(outputs),
            lambda: 0.0,
            samples: 0,
        }
    }

    pub fn width(&self) -> usize {
        self.coefficients.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.coefficients.nrows()
    }

    /// Coefficients stacked over the intercept, `(m′+1) × p`.
    fn augmented(&self) -> Array2<f64> {
        let m = self.width();
        let mut b = Array2::<f64>::zeros((m + 1, self.outputs()));
        b.slice_mut(s![..m, ..]).assign(&self.coefficients.t());
        b.row_mut(m).assign(&self.intercepts);
        b
    }

    /// Affine predictions, not clipped to the simplex.
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>, RidgeError> {
        if x.ncols() != self.width() {
            return Err(RidgeError::Width {
                expected: self.width(),
                actual: x.ncols(),
            });
        }
        let mut out = x.dot(&self.coefficients.t());
        for mut row in out.rows_mut() {
            row += &self.intercepts;
        }
        Ok(out)
    }

    /// `Σ (y − ŷ)²` over every sample and output.
    pub fn sse(&self, x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<f64, RidgeError> {
        let pred = self.predict(x)?;
        if pred.dim() != y.dim() {
            return Err(RidgeError::RowMismatch {
                x: pred.nrows(),
                y: y.nrows(),
            });
        }
        Ok(pred
            .iter()
            .zip(y.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum())
    }
}

/// Ridge fit with an unpenalized intercept. Errors on a singular system.
pub fn fit_ridge(
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    lambda: f64,
) -> Result<WhiteBoxModel, RidgeError> {
    fit_ridge_with(x, y, &RidgeOptions::new(lambda))
}

pub fn fit_ridge_with(
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    options: &RidgeOptions,
) -> Result<WhiteBoxModel, RidgeError> {
    if x.nrows() != y.nrows() {
        return Err(RidgeError::RowMismatch {
            x: x.nrows(),
            y: y.nrows(),
        });
    }
    fit_from_stats(&SufficientStats::from_samples(x, y), options)
}

/// Solves the penalized normal equations summarized by `stats`; one
/// factorization serves every output.
pub fn fit_from_stats(
    stats: &SufficientStats,
    options: &RidgeOptions,
) -> Result<WhiteBoxModel, RidgeError> {
    if stats.count == 0 {
        return Err(RidgeError::Empty);
    }
    if !(options.lambda >= 0.0) || !options.lambda.is_finite() {
        return Err(RidgeError::Lambda(options.lambda));
    }
    let m = stats.width();
    let p = stats.outputs();
    let n = stats.count as f64;
    let dim = if options.fit_intercept { m + 1 } else { m };
    let mut a = stats.gram.slice(s![..dim, ..dim]).to_owned();
    for j in 0..m {
        let weight = if options.standardize {
            let mean = stats.gram[[j, m]] / n;
            let var = stats.gram[[j, j]] / n - mean * mean;
            if var > 0.0 {
                var
            } else {
                1.0
            }
        } else {
            1.0
        };
        a[[j, j]] += options.lambda * weight;
    }
    let rhs = stats.cross.slice(s![..dim, ..]).to_owned();
    let solution = match Cholesky::factor(a.view()) {
        Ok(c) => {
            let mut b = rhs;
            c.solve_in_place(&mut b);
            b
        }
        Err(_) => match options.singular {
            SingularPolicy::Error => return Err(RidgeError::Singular),
            SingularPolicy::MinimumNorm => solve_psd_min_norm(a.view(), rhs.view()),
        },
    };
    let coefficients = solution.slice(s![..m, ..]).t().to_owned();
    let intercepts = if options.fit_intercept {
        solution.row(m).to_owned()
    } else {
        Array1::zeros(p)
    };
    Ok(WhiteBoxModel {
        coefficients,
        intercepts,
        lambda: options.lambda,
        samples: stats.count,
    })
}

/// Sufficient stats of each explained object's neighborhood.
pub fn neighborhood_stats(ns: &NeighborhoodSet) -> Result<Vec<SufficientStats>, RidgeError> {
    use rayon::prelude::*;
    (0..ns.len())
        .into_par_iter()
        .map(|i| {
            let y = ns.outputs(i)?;
            Ok(SufficientStats::from_samples(ns.samples(i).view(), y.view()))
        })
        .collect()
}

/// Sum of stats over `members` (positions in the neighborhood set).
pub fn pooled_stats(stats: &[SufficientStats], members: &[usize]) -> SufficientStats {
    let first = &stats[0];
    let mut acc = SufficientStats::zeros(first.width(), first.outputs());
    for &i in members {
        acc += &stats[i];
    }
    acc
}

/// Fits one surrogate on the pooled neighborhoods of `members`.
pub fn fit_subgroup(
    members: &[usize],
    ns: &NeighborhoodSet,
    options: &RidgeOptions,
) -> Result<WhiteBoxModel, RidgeError> {
    let p = ns.n_classes().ok_or(NeighborhoodError::Unlabelled)?;
    let mut acc = SufficientStats::zeros(ns.width(), p);
    for &i in members {
        acc += &SufficientStats::from_samples(ns.samples(i).view(), ns.outputs(i)?.view());
    }
    fit_from_stats(&acc, options)
}

/// `L(s, w, b) = Σ_{o∈s} Σ_{o′∈N(o)} Σ_i (b(o′)_i − w(o′)_i)²`, summed
/// directly over the cached outputs. The ridge penalty is not included.
pub fn subgroup_loss(
    members: &[usize],
    ns: &NeighborhoodSet,
    model: &WhiteBoxModel,
) -> Result<f64, RidgeError> {
    let mut total = 0.0;
    for &i in members {
        total += model.sse(ns.samples(i).view(), ns.outputs(i)?.view())?;
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Importance {
    pub column: usize,
    pub coefficient: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub class: usize,
    pub entries: Vec<Importance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// `|coef_j| / Σ|coef|` for one class row, intercept excluded, sorted by
/// ratio (descending) then column. Signs are kept on the coefficient.
pub fn feature_importance(model: &WhiteBoxModel, class: usize) -> FeatureImportance {
    let row = model.coefficients.row(class);
    let total: f64 = row.iter().map(|c| c.abs()).sum();
    if total == 0.0 {
        return FeatureImportance {
            class,
            entries: Vec::new(),
            note: Some("all coefficients are zero; importance is undefined".into()),
        };
    }
    let mut entries: Vec<Importance> = row
        .iter()
        .enumerate()
        .map(|(column, &coefficient)| Importance {
            column,
            coefficient,
            ratio: coefficient.abs() / total,
        })
        .collect();
    entries.sort_by(|a, b| b.ratio.total_cmp(&a.ratio).then(a.column.cmp(&b.column)));
    FeatureImportance {
        class,
        entries,
        note: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn exact_line_without_intercept() {
        let x = array![[1.0], [2.0], [3.0]];
        let y = array![[2.0], [4.0], [6.0]];
        let opts = RidgeOptions {
            fit_intercept: false,
            ..RidgeOptions::new(0.0)
        };
        let m = fit_ridge_with(x.view(), y.view(), &opts).unwrap();
        assert!((m.coefficients[[0, 0]] - 2.0).abs() < 1e-12);
        assert!(m.sse(x.view(), y.view()).unwrap() < 1e-20);
        // Σxy / (Σx² + λ) = 28 / 28
        let opts = RidgeOptions {
            fit_intercept: false,
            ..RidgeOptions::new(14.0)
        };
        let m = fit_ridge_with(x.view(), y.view(), &opts).unwrap();
        assert!((m.coefficients[[0, 0]] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_sample_fits_intercept_only() {
        let x = array![[0.3, -2.0]];
        let y = array![[0.7, 0.3]];
        let m = fit_ridge(x.view(), y.view(), 0.5).unwrap();
        assert!(m.coefficients.iter().all(|c| c.abs() < 1e-12));
        assert!((m.intercepts[0] - 0.7).abs() < 1e-12);
        assert!((m.intercepts[1] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn singular_unpenalized_system_errors() {
        let x = array![[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]];
        let y = array![[1.0], [2.0], [3.0]];
        assert!(matches!(fit_ridge(x.view(), y.view(), 0.0), Err(RidgeError::Singular)));
        let lenient = fit_ridge_with(x.view(), y.view(), &RidgeOptions::lenient(0.0)).unwrap();
        assert!(lenient.sse(x.view(), y.view()).unwrap() < 1e-18);
        assert!(fit_ridge(x.view(), y.view(), 0.1).is_ok());
    }

    #[test]
    fn table_three_subgroup_model_on_o2() {
        // 0.8·disk + 0.7·swap + 0.4·full at disk = 0, swap = 0.8, full = 0.3
        let model = WhiteBoxModel {
            coefficients: array![[0.8, 0.7, 0.4]],
            intercepts: array![0.0],
            lambda: 0.0,
            samples: 0,
        };
        let out = model.predict(array![[0.0, 0.8, 0.3]].view()).unwrap();
        assert!((out[[0, 0]] - 0.68).abs() < 1e-12);
        let zero = WhiteBoxModel::zeros(2, 3);
        assert_eq!(zero.predict(array![[1.0, 2.0, 3.0]].view()).unwrap(), Array2::<f64>::zeros((1, 2)));
        assert!(matches!(
            zero.predict(array![[1.0]].view()),
            Err(RidgeError::Width { expected: 3, actual: 1 })
        ));
    }

    #[test]
    fn affine_targets_reproduced() {
        let x = array![[0.0, 1.0], [1.0, 0.5], [2.0, -1.0], [3.0, 4.0], [0.5, 0.5]];
        let y = x.map_axis(ndarray::Axis(1), |r| 0.2 + 0.3 * r[0] - 0.1 * r[1]);
        let y = y.insert_axis(ndarray::Axis(1));
        let m = fit_ridge(x.view(), y.view(), 0.0).unwrap();
        let pred = m.predict(x.view()).unwrap();
        for (a, b) in pred.iter().zip(y.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn importance_ratios() {
        let model = WhiteBoxModel {
            coefficients: array![[2.0, -1.0, 1.0]],
            intercepts: array![5.0],
            lambda: 0.0,
            samples: 0,
        };
        let imp = feature_importance(&model, 0);
        let got: Vec<(usize, f64, f64)> = imp
            .entries
            .iter()
            .map(|e| (e.column, e.coefficient, e.ratio))
            .collect();
        assert_eq!(got, vec![(0, 2.0, 0.5), (1, -1.0, 0.25), (2, 1.0, 0.25)]);

        let toy = WhiteBoxModel {
            coefficients: array![[0.8, 0.7, 0.4]],
            ..model.clone()
        };
        let ratios: Vec<f64> = feature_importance(&toy, 0).entries.iter().map(|e| e.ratio).collect();
        for (r, e) in ratios.iter().zip([0.421, 0.368, 0.211]) {
            assert!((r - e).abs() < 1e-3);
        }

        let single = WhiteBoxModel {
            coefficients: array![[0.0, -3.0, 0.0]],
            ..model.clone()
        };
        assert_eq!(feature_importance(&single, 0).entries[0].ratio, 1.0);

        let zero = WhiteBoxModel::zeros(1, 3);
        let imp = feature_importance(&zero, 0);
        assert!(imp.entries.is_empty() && imp.note.is_some());
    }

    #[test]
    fn stats_are_additive() {
        let x = array![[0.0, 1.0], [1.0, 0.5], [2.0, -1.0], [3.0, 4.0]];
        let y = array![[0.1, 0.9], [0.4, 0.6], [0.8, 0.2], [0.5, 0.5]];
        let all = SufficientStats::from_samples(x.view(), y.view());
        let mut parts = SufficientStats::from_samples(x.slice(s![..2, ..]), y.slice(s![..2, ..]));
        parts += &SufficientStats::from_samples(x.slice(s![2.., ..]), y.slice(s![2.., ..]));
        for (a, b) in all.gram.iter().zip(parts.gram.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        let model = fit_from_stats(&all, &RidgeOptions::new(0.3)).unwrap();
        let direct = model.sse(x.view(), y.view()).unwrap();
        assert!((all.sse(&model) - direct).abs() < 1e-12);
        parts -= &SufficientStats::from_samples(x.slice(s![2.., ..]), y.slice(s![2.., ..]));
        assert_eq!(parts.count, 2);
    }
}
