//! Synthetic data generation from the spatial Durbin process, brute-force
//! oracles, and regular lattices with known KNN structure.
//!
//! Everything here is seed-deterministic: covariate columns are drawn
//! first (column by column), then the error vector, all from a ChaCha8
//! generator seeded with the spec seed.

use nalgebra::DVector;
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::ingest::{mean, Geometry, Region, RegionSet};
use crate::scalar::{LinalgScalar, Scalar};
use crate::weights::SpatialWeights;

/// Covariate source for the generator.
#[derive(Debug, Clone)]
pub enum CovariateSpec<T> {
    /// `p` i.i.d. standard normal columns.
    Normal { p: usize },
    /// Caller-supplied columns.
    Supplied(Vec<Vec<T>>),
}

/// Parameters of the data-generating process
/// `y = (I - rho*W)^-1 (intercept + X*beta + WX*theta + eps)`.
#[derive(Debug, Clone)]
pub struct DgpSpec<T> {
    pub rho: T,
    pub intercept: T,
    pub beta: Vec<T>,
    pub theta: Vec<T>,
    /// Standard deviation of the i.i.d. Gaussian error.
    pub sigma: T,
    pub seed: u64,
    pub covariates: CovariateSpec<T>,
}

impl<T: Scalar> DgpSpec<T> {
    fn validate(&self, n: usize) -> Result<usize> {
        if self.rho.is_nan() || self.rho.abs() >= T::one() {
            return Err(Error::InvalidConfig(format!(
                "|rho| must be below 1, got {}",
                self.rho
            )));
        }
        if self.sigma < T::zero() {
            return Err(Error::InvalidConfig("sigma must be non-negative".into()));
        }
        if self.beta.len() != self.theta.len() {
            return Err(Error::DimensionMismatch {
                expected: self.beta.len(),
                got: self.theta.len(),
            });
        }
        let p = match &self.covariates {
            CovariateSpec::Normal { p } => *p,
            CovariateSpec::Supplied(cols) => {
                for col in cols {
                    if col.len() != n {
                        return Err(Error::DimensionMismatch {
                            expected: n,
                            got: col.len(),
                        });
                    }
                }
                cols.len()
            }
        };
        if p != self.beta.len() {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: self.beta.len(),
            });
        }
        Ok(p)
    }
}

/// A generated sample: outcome, covariate columns, and the error draw.
#[derive(Debug, Clone)]
pub struct SdmSample<T> {
    pub y: Vec<T>,
    pub x: Vec<Vec<T>>,
    pub epsilon: Vec<T>,
}

/// Draws one sample from the SDM process by solving
/// `(I - rho*W) y = intercept + X*beta + WX*theta + eps` directly.
pub fn gen_sdm<T: LinalgScalar>(w: &SpatialWeights<T>, spec: &DgpSpec<T>) -> Result<SdmSample<T>>
where
    StandardNormal: Distribution<T>,
{
    let n = w.n();
    let p = spec.validate(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let x: Vec<Vec<T>> = match &spec.covariates {
        CovariateSpec::Normal { .. } => (0..p)
            .map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect(),
        CovariateSpec::Supplied(cols) => cols.clone(),
    };
    let epsilon: Vec<T> = (0..n)
        .map(|_| {
            let z: T = StandardNormal.sample(&mut rng);
            z * spec.sigma
        })
        .collect();

    let mut rhs = DVector::from_element(n, spec.intercept);
    for (j, col) in x.iter().enumerate() {
        let lagged = w.spatial_lag(col)?;
        for i in 0..n {
            rhs[i] += spec.beta[j] * col[i] + spec.theta[j] * lagged[i];
        }
    }
    for i in 0..n {
        rhs[i] += epsilon[i];
    }

    let mut a = w.to_dense() * (-spec.rho);
    for i in 0..n {
        a[(i, i)] += T::one();
    }
    let lu = a.clone().lu();
    let mut y = lu
        .solve(&rhs)
        .ok_or_else(|| Error::SingularFilter(spec.rho.as_f64()))?;

    // One step of iterative refinement, then verify the defining equation.
    let rhs_norm = rhs
        .iter()
        .fold(T::zero(), |acc, v| Float::max(acc, Float::abs(*v)));
    let tol = Float::max(T::of_f64(1e-10), T::epsilon() * T::of_f64(64.0) * rhs_norm);
    let residual_norm = |y: &DVector<T>| {
        let r = &a * y - &rhs;
        r.iter()
            .fold(T::zero(), |acc, v| Float::max(acc, Float::abs(*v)))
    };
    if residual_norm(&y) > tol {
        let r = &a * &y - &rhs;
        if let Some(correction) = lu.solve(&r) {
            y -= correction;
        }
    }
    if residual_norm(&y) > tol {
        return Err(Error::NumericalFailure(
            "linear solve residual above tolerance".into(),
        ));
    }

    Ok(SdmSample {
        y: y.iter().copied().collect(),
        x,
        epsilon,
    })
}

/// Literal double-loop transcription of global Moran's I over all (i, j)
/// pairs; the oracle for the optimized sparse path.
pub fn brute_moran<T: Scalar>(y: &[T], w: &SpatialWeights<T>) -> Result<T> {
    let n = w.n();
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: y.len(),
        });
    }
    let ybar = mean(y);
    let mut denominator = T::zero();
    for &v in y {
        denominator += (v - ybar) * (v - ybar);
    }
    if denominator == T::zero() {
        return Err(Error::ZeroVariance("y".into()));
    }

    let mut numerator = T::zero();
    let mut s0 = T::zero();
    for i in 0..n {
        for j in 0..n {
            let w_ij = if w.neighbors(i).contains(&j) {
                w.weight()
            } else {
                T::zero()
            };
            numerator += w_ij * (y[i] - ybar) * (y[j] - ybar);
            s0 += w_ij;
        }
    }
    Ok((T::of_usize(n) / s0) * numerator / denominator)
}

/// Lattice family for synthetic region sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatticeKind {
    Ring,
    Grid,
}

impl std::str::FromStr for LatticeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ring" => Ok(LatticeKind::Ring),
            "grid" => Ok(LatticeKind::Grid),
            other => Err(Error::InvalidConfig(format!(
                "unknown lattice kind `{other}` (expected ring|grid)"
            ))),
        }
    }
}

/// Synthetic centroids whose KNN graph is the intended regular structure:
/// a ring along the equator or a square rook grid.
///
/// `k` is the neighbor count the caller intends to use; it is validated
/// against `n` here so bad fixture shapes fail early.
pub fn gen_lattice<T: Scalar>(n: usize, kind: LatticeKind, k: usize) -> Result<RegionSet<T>> {
    if n == 0 {
        return Err(Error::BadShape("n must be positive".into()));
    }
    if n < k + 1 {
        return Err(Error::BadShape(format!(
            "n = {n} must be at least k + 1 = {}",
            k + 1
        )));
    }
    let make_region = |i: usize, lon: f64, lat: f64| Region {
        id: format!("r{i:04}"),
        name: format!("r{i:04}"),
        lon: T::of_f64(lon),
        lat: T::of_f64(lat),
        geometry: None,
    };
    let regions: Vec<Region<T>> = match kind {
        LatticeKind::Ring => (0..n)
            .map(|i| make_region(i, -180.0 + 360.0 * i as f64 / n as f64, 0.0))
            .collect(),
        LatticeKind::Grid => {
            let side = (n as f64).sqrt().round() as usize;
            if side * side != n {
                return Err(Error::BadShape(format!(
                    "grid size {n} is not a perfect square"
                )));
            }
            // Small spacing near the equator keeps east-west and
            // north-south steps nearly equal so rook cells are nearest.
            let d = 0.1;
            let offset = (side as f64 - 1.0) / 2.0;
            (0..n)
                .map(|i| {
                    let row = i / side;
                    let col = i % side;
                    make_region(i, col as f64 * d, (row as f64 - offset) * d)
                })
                .collect()
        }
    };
    RegionSet::from_regions(regions)
}

/// Copy of the region set with a square polygon of half-width `half`
/// degrees centered on each centroid (for choropleth fixtures).
pub fn add_square_geometry<T: Scalar>(regions: &RegionSet<T>, half: T) -> RegionSet<T> {
    let geometries = regions
        .iter()
        .map(|r| {
            let (x, y) = (r.lon, r.lat);
            Geometry {
                rings: vec![vec![
                    (x - half, y - half),
                    (x + half, y - half),
                    (x + half, y + half),
                    (x - half, y + half),
                    (x - half, y - half),
                ]],
            }
        })
        .collect();
    regions
        .with_geometry(geometries)
        .expect("geometry count matches region count")
}
