//! Plaintext reference computations used to validate the secure pipelines.
//!
//! The eigensolver here is deliberately different from the one the secure
//! pipelines use: cyclic Jacobi rotations instead of power iteration, so the
//! two paths share no numerical shortcuts. Eigenvector matrices are stored
//! with one eigenvector per column throughout, matching the model layout.

use alloc::vec::Vec;
use core::fmt;

use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub enum OracleError {
    NotSymmetric,
    /// A column had (numerically) zero variance; correlations are undefined.
    ZeroVariance(usize),
    NotEnoughRows,
}

impl fmt::Display for OracleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleError::NotSymmetric => write!(f, "matrix is not symmetric"),
            OracleError::ZeroVariance(i) => write!(f, "column {i} has zero variance"),
            OracleError::NotEnoughRows => write!(f, "need at least two rows"),
        }
    }
}

const JACOBI_TOL: f64 = 1e-12;

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let mut s = 0.0;
    for i in 0..a.rows {
        for j in 0..a.cols {
            if i != j {
                s += a.get(i, j) * a.get(i, j);
            }
        }
    }
    libm::sqrt(s)
}

/// Full symmetric eigendecomposition by cyclic Jacobi sweeps.
///
/// Returns eigenvalues in descending order and the matching eigenvectors,
/// one per column of the returned matrix.
pub fn jacobi_eigen(m: &Matrix) -> Result<(Vec<f64>, Matrix), OracleError> {
    let d = m.rows;
    if m.cols != d {
        return Err(OracleError::NotSymmetric);
    }
    for i in 0..d {
        for j in (i + 1)..d {
            if libm::fabs(m.get(i, j) - m.get(j, i)) > 1e-9 * (1.0 + m.max_abs()) {
                return Err(OracleError::NotSymmetric);
            }
        }
    }
    let mut a = m.clone();
    let mut v = Matrix::identity(d);
    // Bounded sweep count; quadratic convergence makes this generous.
    for _ in 0..100 {
        if off_diagonal_norm(&a) <= JACOBI_TOL {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = a.get(p, q);
                if libm::fabs(apq) <= JACOBI_TOL / (d as f64 * d as f64) {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                // Smaller-root tangent keeps the rotation angle below pi/4.
                let t = if theta >= 0.0 {
                    1.0 / (theta + libm::sqrt(1.0 + theta * theta))
                } else {
                    -1.0 / (-theta + libm::sqrt(1.0 + theta * theta))
                };
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = t * c;
                for k in 0..d {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..d {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                for k in 0..d {
                    let vkp = v.get(p, k);
                    let vkq = v.get(q, k);
                    v.set(p, k, c * vkp - s * vkq);
                    v.set(q, k, s * vkp + c * vkq);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..d).collect();
    // Insertion sort by descending eigenvalue.
    for i in 1..d {
        let mut j = i;
        while j > 0 && a.get(order[j - 1], order[j - 1]) < a.get(order[j], order[j]) {
            order.swap(j - 1, j);
            j -= 1;
        }
    }
    let values: Vec<f64> = order.iter().map(|&i| a.get(i, i)).collect();
    // `v` accumulated transposed; emit eigenvectors as columns.
    let mut vectors = Matrix::zeros(d, d);
    for (col, &i) in order.iter().enumerate() {
        for k in 0..d {
            vectors.set(k, col, v.get(i, k));
        }
    }
    Ok((values, vectors))
}

/// Reference output of one pooled-plaintext analysis.
#[derive(Clone, Debug)]
pub struct Reference {
    /// Column means (1 x d), when the task centers its data.
    pub mean: Option<Matrix>,
    /// Eigenvalues, principal factors, or singular values, descending.
    pub values: Vec<f64>,
    /// One (right-singular/eigen) vector per column.
    pub vectors: Matrix,
    /// Factor loading matrix, factor-analysis only.
    pub loadings: Option<Matrix>,
}

fn column_mean(data: &Matrix) -> Matrix {
    let mut mean = Matrix::zeros(1, data.cols);
    for i in 0..data.rows {
        for j in 0..data.cols {
            let cur = mean.get(0, j);
            mean.set(0, j, cur + data.get(i, j));
        }
    }
    for j in 0..data.cols {
        let cur = mean.get(0, j);
        mean.set(0, j, cur / data.rows as f64);
    }
    mean
}

fn covariance(data: &Matrix, mean: &Matrix) -> Result<Matrix, OracleError> {
    if data.rows < 2 {
        return Err(OracleError::NotEnoughRows);
    }
    let d = data.cols;
    let mut cov = Matrix::zeros(d, d);
    for r in 0..data.rows {
        for i in 0..d {
            let di = data.get(r, i) - mean.get(0, i);
            for j in 0..d {
                let dj = data.get(r, j) - mean.get(0, j);
                let cur = cov.get(i, j);
                cov.set(i, j, cur + di * dj);
            }
        }
    }
    let w = 1.0 / (data.rows as f64 - 1.0);
    Ok(cov.scale(w))
}

/// Pooled-plaintext principal component analysis.
pub fn pca_reference(data: &Matrix) -> Result<Reference, OracleError> {
    let mean = column_mean(data);
    let cov = covariance(data, &mean)?;
    let (values, vectors) = jacobi_eigen(&cov)?;
    Ok(Reference { mean: Some(mean), values, vectors, loadings: None })
}

/// Pooled-plaintext singular value decomposition via the Gram matrix.
pub fn svd_reference(data: &Matrix) -> Result<Reference, OracleError> {
    let gram = data.transpose().matmul(data);
    let (eigs, vectors) = jacobi_eigen(&gram)?;
    let values = eigs.iter().map(|&v| libm::sqrt(v.max(0.0))).collect();
    Ok(Reference { mean: None, values, vectors, loadings: None })
}

/// Pooled-plaintext factor analysis over the correlation matrix.
pub fn fa_reference(data: &Matrix) -> Result<Reference, OracleError> {
    let mean = column_mean(data);
    let cov = covariance(data, &mean)?;
    let d = cov.rows;
    let mut sd = Vec::with_capacity(d);
    for i in 0..d {
        let var = cov.get(i, i);
        if var <= 1e-12 {
            return Err(OracleError::ZeroVariance(i));
        }
        sd.push(libm::sqrt(var));
    }
    let mut corr = Matrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            corr.set(i, j, cov.get(i, j) / (sd[i] * sd[j]));
        }
    }
    let (values, vectors) = jacobi_eigen(&corr)?;
    let mut loadings = Matrix::zeros(d, d);
    for i in 0..d {
        let root = libm::sqrt(values[i].max(0.0));
        for j in 0..d {
            loadings.set(i, j, vectors.get(i, j) * root);
        }
    }
    Ok(Reference { mean: Some(mean), values, vectors, loadings: Some(loadings) })
}

/// Pointwise comparison of a computed spectrum against the reference.
#[derive(Clone, Debug)]
pub struct OracleReport {
    /// Relative eigenvalue errors (absolute floor 1e-6 in the denominator).
    pub value_errors: Vec<f64>,
    /// Absolute cosines between matching eigenvector columns.
    pub cosines: Vec<f64>,
}

impl OracleReport {
    pub fn max_value_error(&self) -> f64 {
        self.value_errors.iter().fold(0.0, |a, &b| if b > a { b } else { a })
    }

    pub fn min_cosine(&self) -> f64 {
        self.cosines.iter().fold(1.0, |a, &b| if b < a { b } else { a })
    }
}

/// Compares values and column-vectors against the reference.
pub fn compare(values: &[f64], vectors: &Matrix, reference: &Reference) -> OracleReport {
    let mut value_errors = Vec::new();
    for (got, want) in values.iter().zip(&reference.values) {
        let denom = libm::fabs(*want).max(1e-6);
        value_errors.push(libm::fabs(got - want) / denom);
    }
    let mut cosines = Vec::new();
    let cols = vectors.cols.min(reference.vectors.cols);
    for j in 0..cols {
        cosines.push(crate::linalg::abs_cosine(
            &vectors.column(j),
            &reference.vectors.column(j),
        ));
    }
    OracleReport { value_errors, cosines }
}
