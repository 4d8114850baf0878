//! Spatial statistics for regional attribute data.
//!
//! The crate covers the full analysis chain for a set of regions with
//! centroid coordinates and numeric attributes:
//!
//! 1. **ingest** — load regions (CSV/GeoJSON) and attributes, build
//!    outcome ratios from case counts, standardize columns.
//! 2. **weights** — row-standardized k-nearest-neighbor spatial weights
//!    and the spatial-lag operator.
//! 3. **autocorr** — global and local Moran's I with seeded Monte Carlo
//!    permutation inference and LISA cluster labels.
//! 4. **sdm** — spatial Durbin model estimation by concentrated maximum
//!    likelihood, OLS baseline, AIC comparison, and residual diagnostics.
//! 5. **pca** — correlation-matrix PCA with deterministic sign convention.
//! 6. **synth** — data generator for the SDM process plus brute-force
//!    oracles used by the test suites.
//! 7. **render** / **pipeline** — choropleth SVG output and config-driven
//!    end-to-end orchestration with a reproducibility manifest.
//!
//! All numerics are generic over the scalar type via [`scalar::Scalar`]
//! (statistics) and [`scalar::LinalgScalar`] (model fitting); `f64`
//! aliases for the main types live at the crate root.

pub mod autocorr;
pub mod error;
pub mod ingest;
pub mod pca;
pub mod pipeline;
pub mod render;
pub mod scalar;
pub mod sdm;
pub mod synth;
pub mod tables;
pub mod weights;

pub use error::{Error, Result};
pub use scalar::{LinalgScalar, Scalar};

/// Region collection with `f64` coordinates.
pub type RegionSet64 = ingest::RegionSet<f64>;
/// Attribute table with `f64` values.
pub type AttributeTable64 = ingest::AttributeTable<f64>;
/// KNN spatial weights with `f64` weights.
pub type SpatialWeights64 = weights::SpatialWeights<f64>;
/// Global Moran permutation-test result in `f64`.
pub type GlobalMoranResult64 = autocorr::GlobalMoranResult<f64>;
/// Local Moran / LISA result in `f64`.
pub type LocalMoranResult64 = autocorr::LocalMoranResult<f64>;
/// Spatial Durbin model fit in `f64`.
pub type SdmFit64 = sdm::SdmFit<f64>;
/// OLS fit in `f64`.
pub type OlsFit64 = sdm::OlsFit<f64>;
/// PCA result in `f64`.
pub type PcaResult64 = pca::PcaResult<f64>;
