//! Row-standardized k-nearest-neighbor spatial weights.
//!
//! Every row has exactly `k` neighbors with weight `1/k`, so the matrix is
//! stored in a compressed sparse row layout with an implicit row pointer.
//! KNN is not a symmetric relation and nothing here assumes symmetry.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::ingest::RegionSet;
use crate::scalar::{LinalgScalar, Scalar};

/// Mean Earth radius in kilometers (IUGG value).
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Great-circle distance between two lon/lat points, in kilometers.
pub fn haversine_km<T: Scalar>(lon1: T, lat1: T, lon2: T, lat2: T) -> T {
    let two = T::of_f64(2.0);
    let phi1 = lat1.to_radians();
    let phi2 = lat2.to_radians();
    let dphi = (lat2 - lat1).to_radians() / two;
    let dlambda = (lon2 - lon1).to_radians() / two;
    let a = dphi.sin() * dphi.sin() + phi1.cos() * phi2.cos() * dlambda.sin() * dlambda.sin();
    two * T::of_f64(EARTH_RADIUS_KM) * a.sqrt().min(T::one()).asin()
}

/// Sparse row-standardized KNN weights matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialWeights<T> {
    n: usize,
    k: usize,
    /// Row-major neighbor indices, exactly `k` per row.
    neighbors: Vec<usize>,
    /// Shared edge weight, `1/k`.
    weight: T,
}

impl<T: Scalar> SpatialWeights<T> {
    /// Builds the KNN weights from region centroids using great-circle
    /// distance. Ties are broken toward the smaller row index, which makes
    /// rebuilding from the same inputs bit-identical.
    pub fn build_knn(regions: &RegionSet<T>, k: usize) -> Result<Self> {
        let n = regions.len();
        if k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        if k >= n {
            return Err(Error::KTooLarge { k, n });
        }

        let mut neighbors = Vec::with_capacity(n * k);
        let mut candidates: Vec<(T, usize)> = Vec::with_capacity(n - 1);
        for i in 0..n {
            let ri = regions.get(i);
            candidates.clear();
            for j in 0..n {
                if j == i {
                    continue;
                }
                let rj = regions.get(j);
                candidates.push((haversine_km(ri.lon, ri.lat, rj.lon, rj.lat), j));
            }
            candidates.sort_unstable_by(|a, b| {
                a.0.partial_cmp(&b.0)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.1.cmp(&b.1))
            });
            neighbors.extend(candidates[..k].iter().map(|&(_, j)| j));
        }

        Ok(Self {
            n,
            k,
            neighbors,
            weight: T::one() / T::of_usize(k),
        })
    }

    /// Builds weights from explicit neighbor lists (used for fixtures).
    pub fn from_neighbors(n: usize, k: usize, lists: &[Vec<usize>]) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        if k >= n {
            return Err(Error::KTooLarge { k, n });
        }
        if lists.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: lists.len(),
            });
        }
        let mut neighbors = Vec::with_capacity(n * k);
        for (i, row) in lists.iter().enumerate() {
            if row.len() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    got: row.len(),
                });
            }
            for (pos, &j) in row.iter().enumerate() {
                if j == i {
                    return Err(Error::InvalidConfig(format!("self-loop at region {i}")));
                }
                if j >= n {
                    return Err(Error::InvalidConfig(format!(
                        "neighbor index {j} out of range for n = {n}"
                    )));
                }
                if row[..pos].contains(&j) {
                    return Err(Error::InvalidConfig(format!(
                        "duplicate neighbor {j} in row {i}"
                    )));
                }
            }
            neighbors.extend_from_slice(row);
        }
        Ok(Self {
            n,
            k,
            neighbors,
            weight: T::one() / T::of_usize(k),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// The shared edge weight `1/k`.
    pub fn weight(&self) -> T {
        self.weight
    }

    /// Neighbor indices of row `i`, nearest first.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i * self.k..(i + 1) * self.k]
    }

    /// Sum of all weights; `n` for a row-standardized matrix.
    pub fn s0(&self) -> T {
        let mut s = T::zero();
        for _ in 0..self.n * self.k {
            s += self.weight;
        }
        s
    }

    /// Iterates `(row, neighbors, weight)` for export.
    pub fn rows(&self) -> impl Iterator<Item = (usize, &[usize], T)> + '_ {
        (0..self.n).map(move |i| (i, self.neighbors(i), self.weight))
    }

    /// Spatial lag `Wy`: the neighbor average of `y` per row.
    pub fn spatial_lag(&self, y: &[T]) -> Result<Vec<T>> {
        if y.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: y.len(),
            });
        }
        Ok((0..self.n)
            .map(|i| {
                let mut s = T::zero();
                for &j in self.neighbors(i) {
                    s += y[j];
                }
                s * self.weight
            })
            .collect())
    }
}

impl<T: LinalgScalar> SpatialWeights<T> {
    /// Dense copy of W, used by the log-determinant and DGP paths.
    pub fn to_dense(&self) -> DMatrix<T> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for &j in self.neighbors(i) {
                m[(i, j)] = self.weight;
            }
        }
        m
    }
}
