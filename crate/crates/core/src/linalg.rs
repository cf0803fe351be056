//! Small dense symmetric linear algebra used by the ridge solver and the
//! Gaussian sampler: Cholesky, triangular solves and a cyclic Jacobi
//! eigen-decomposition for rank-deficient systems.

use ndarray::{Array1, Array2, ArrayView2};

/// Pivots at or below this fraction of the original diagonal entry are
/// treated as a zero pivot.
pub const PIVOT_TOLERANCE: f64 = 1e-10;

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    lower: Array2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("matrix is not positive definite (pivot {pivot} at row {row})")]
pub struct NotPositiveDefinite {
    pub row: usize,
    pub pivot: f64,
}

impl Cholesky {
    /// Factors `a = L Lᵀ`. Only the lower triangle of `a` is read.
    pub fn factor(a: ArrayView2<'_, f64>) -> Result<Self, NotPositiveDefinite> {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "Cholesky needs a square matrix");
        let mut l = Array2::<f64>::zeros((n, n));
        for j in 0..n {
            let mut d = a[[j, j]];
            for k in 0..j {
                d -= l[[j, k]] * l[[j, k]];
            }
            let scale = a[[j, j]].abs().max(f64::MIN_POSITIVE);
            if !(d > PIVOT_TOLERANCE * scale) {
                return Err(NotPositiveDefinite { row: j, pivot: d });
            }
            let djj = d.sqrt();
            l[[j, j]] = djj;
            for i in (j + 1)..n {
                let mut s = a[[i, j]];
                for k in 0..j {
                    s -= l[[i, k]] * l[[j, k]];
                }
                l[[i, j]] = s / djj;
            }
        }
        Ok(Self { lower: l })
    }

    pub fn lower(&self) -> &Array2<f64> {
        &self.lower
    }

    pub fn into_lower(self) -> Array2<f64> {
        self.lower
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    /// Solves `A X = B` for every column of `b` in place.
    pub fn solve_in_place(&self, b: &mut Array2<f64>) {
        let n = self.dim();
        assert_eq!(b.nrows(), n);
        let l = &self.lower;
        for c in 0..b.ncols() {
            // forward: L y = b
            for i in 0..n {
                let mut s = b[[i, c]];
                for k in 0..i {
                    s -= l[[i, k]] * b[[k, c]];
                }
                b[[i, c]] = s / l[[i, i]];
            }
            // backward: Lᵀ x = y
            for i in (0..n).rev() {
                let mut s = b[[i, c]];
                for k in (i + 1)..n {
                    s -= l[[k, i]] * b[[k, c]];
                }
                b[[i, c]] = s / l[[i, i]];
            }
        }
    }
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns `(eigenvalues, eigenvectors)` with eigenvectors stored as columns.
pub fn symmetric_eigen(a: ArrayView2<'_, f64>) -> (Array1<f64>, Array2<f64>) {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let mut m = a.to_owned();
    // symmetrize from the lower triangle
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[[i, j]] + m[[j, i]]);
            m[[i, j]] = v;
            m[[j, i]] = v;
        }
    }
    let mut v = Array2::<f64>::eye(n);
    let frob: f64 = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    if frob == 0.0 {
        return (Array1::zeros(n), v);
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..i {
                off += m[[i, j]] * m[[i, j]];
            }
        }
        if off.sqrt() <= 1e-15 * frob {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let values = Array1::from_iter((0..n).map(|i| m[[i, i]]));
    (values, v)
}

/// Minimum-norm least-squares solution of the symmetric positive
/// semi-definite system `A X = B` (pseudo-inverse applied to every column).
/// Eigenvalues at or below `PIVOT_TOLERANCE · λ_max` are treated as zero.
pub fn solve_psd_min_norm(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    let (values, vectors) = symmetric_eigen(a);
    let max = values.iter().cloned().fold(0.0_f64, f64::max);
    let cutoff = PIVOT_TOLERANCE * max;
    // X = V diag(1/λ) Vᵀ B over the retained eigenpairs
    let vtb = vectors.t().dot(&b);
    let mut scaled = vtb;
    for (i, &lambda) in values.iter().enumerate() {
        let factor = if lambda > cutoff && lambda > 0.0 { 1.0 / lambda } else { 0.0 };
        scaled.row_mut(i).mapv_inplace(|x| x * factor);
    }
    vectors.dot(&scaled)
}
