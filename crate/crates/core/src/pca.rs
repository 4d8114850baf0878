//! Correlation-matrix PCA with a deterministic sign convention.
//!
//! Chapter ratios differ in scale by two orders of magnitude, so the
//! decomposition works on the correlation matrix (equivalently, on
//! z-scored columns). Each loading column is oriented so its
//! largest-magnitude entry is positive, which makes reruns bit-identical.

use nalgebra::DMatrix;
use num_traits::Float;

use crate::error::{Error, Result};
use crate::ingest::zscore;
use crate::scalar::{LinalgScalar, Scalar};

/// Pearson correlation matrix of the named columns.
pub fn correlation_matrix<T: LinalgScalar>(x: &[(&str, &[T])]) -> Result<DMatrix<T>> {
    let (names, z) = standardized_columns(x)?;
    let _ = names;
    let p = z.len();
    let n = z[0].len();
    let denom = T::of_usize(n - 1);
    let mut corr = DMatrix::identity(p, p);
    for i in 0..p {
        for j in (i + 1)..p {
            let mut dot = T::zero();
            for (a, b) in z[i].iter().zip(&z[j]) {
                dot += *a * *b;
            }
            let value = dot / denom;
            corr[(i, j)] = value;
            corr[(j, i)] = value;
        }
    }
    Ok(corr)
}

fn standardized_columns<'a, T: Scalar>(
    x: &[(&'a str, &[T])],
) -> Result<(Vec<&'a str>, Vec<Vec<T>>)> {
    if x.is_empty() {
        return Err(Error::EmptyInput("columns".into()));
    }
    let n = x[0].1.len();
    if n < 3 {
        return Err(Error::TooFewObservations(n));
    }
    let mut names = Vec::with_capacity(x.len());
    let mut z = Vec::with_capacity(x.len());
    for (name, col) in x {
        if col.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: col.len(),
            });
        }
        names.push(*name);
        z.push(zscore(col).map_err(|e| match e {
            Error::ZeroVariance(_) => Error::ZeroVariance(name.to_string()),
            other => other,
        })?);
    }
    Ok((names, z))
}

/// PCA decomposition output.
#[derive(Debug, Clone)]
pub struct PcaResult<T> {
    pub names: Vec<String>,
    /// p x p orthonormal matrix; column j is component j's loadings.
    pub loadings: DMatrix<T>,
    /// Non-increasing, non-negative; sums to p for correlation PCA.
    pub eigenvalues: Vec<T>,
    /// Eigenvalue share of the total variance p.
    pub explained: Vec<T>,
    /// n x p component scores of the z-scored data.
    pub scores: DMatrix<T>,
}

impl<T: Scalar> PcaResult<T> {
    /// Scores of component `j` as a vector.
    pub fn score_column(&self, j: usize) -> Vec<T> {
        self.scores.column(j).iter().copied().collect()
    }
}

/// Eigendecomposition of the correlation matrix; scores are computed on
/// the z-scored data, so the sample variance of component j equals
/// eigenvalue j (n-1 divisor).
pub fn pca_fit<T: LinalgScalar>(x: &[(&str, &[T])]) -> Result<PcaResult<T>> {
    let corr = correlation_matrix(x)?;
    let (names, z) = standardized_columns(x)?;
    let p = z.len();
    let n = z[0].len();

    let eigen = corr.symmetric_eigen();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| {
        eigen.eigenvalues[b]
            .partial_cmp(&eigen.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });

    let mut loadings = DMatrix::zeros(p, p);
    let mut eigenvalues = Vec::with_capacity(p);
    for (dst, &src) in order.iter().enumerate() {
        // correlation matrices are positive semidefinite; tiny negative
        // eigenvalues are rounding noise
        let value = eigen.eigenvalues[src];
        if value < T::of_f64(-1e-9) {
            return Err(Error::NumericalFailure(format!(
                "negative eigenvalue {value} from the correlation matrix"
            )));
        }
        eigenvalues.push(Float::max(value, T::zero()));
        let column = eigen.eigenvectors.column(src);
        // orient: largest-magnitude entry positive (first such entry wins)
        let mut pivot = 0;
        for r in 1..p {
            if Float::abs(column[r]) > Float::abs(column[pivot]) {
                pivot = r;
            }
        }
        let flip = column[pivot] < T::zero();
        for r in 0..p {
            loadings[(r, dst)] = if flip { -column[r] } else { column[r] };
        }
    }

    let mut scores = DMatrix::zeros(n, p);
    for r in 0..n {
        for c in 0..p {
            let mut acc = T::zero();
            for (v, column) in z.iter().enumerate() {
                acc += column[r] * loadings[(v, c)];
            }
            scores[(r, c)] = acc;
        }
    }

    let pf = T::of_usize(p);
    let explained = eigenvalues.iter().map(|&l| l / pf).collect();
    Ok(PcaResult {
        names: names.iter().map(|s| s.to_string()).collect(),
        loadings,
        eigenvalues,
        explained,
        scores,
    })
}
