//! Global and local Moran's I with Monte Carlo permutation inference and
//! LISA cluster classification.
//!
//! Randomness comes from ChaCha8, a counter-based generator with a
//! documented algorithm. Simulation `s` draws from an independent
//! substream seeded with `seed ^ s` (locally `seed ^ (i*nsim + s)` for
//! region `i`), so results do not depend on execution order and rerunning
//! with the same seed reproduces every p-value bit-exactly.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ingest::{mean, sample_sd};
use crate::scalar::Scalar;
use crate::weights::SpatialWeights;

fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ stream)
}

fn deviations<T: Scalar>(y: &[T], w: &SpatialWeights<T>) -> Result<(Vec<T>, T)> {
    if y.len() != w.n() {
        return Err(Error::DimensionMismatch {
            expected: w.n(),
            got: y.len(),
        });
    }
    let m = mean(y);
    let dev: Vec<T> = y.iter().map(|&v| v - m).collect();
    let ss: T = dev.iter().map(|&d| d * d).sum();
    if ss == T::zero() {
        return Err(Error::ZeroVariance("y".into()));
    }
    if !ss.is_finite() {
        return Err(Error::NumericalFailure("non-finite variance".into()));
    }
    Ok((dev, ss))
}

/// Cross-product numerator of Moran's I for a deviation vector.
fn moran_numerator<T: Scalar>(dev: &[T], w: &SpatialWeights<T>) -> T {
    let mut acc = T::zero();
    for i in 0..w.n() {
        let mut s = T::zero();
        for &j in w.neighbors(i) {
            s += dev[j];
        }
        acc += dev[i] * s;
    }
    acc * w.weight()
}

/// Global Moran's I:
/// `(n / S0) * sum_ij w_ij (y_i - ybar)(y_j - ybar) / sum_i (y_i - ybar)^2`.
pub fn global_moran<T: Scalar>(y: &[T], w: &SpatialWeights<T>) -> Result<T> {
    let (dev, ss) = deviations(y, w)?;
    let scale = T::of_usize(w.n()) / w.s0() / ss;
    Ok(moran_numerator(&dev, w) * scale)
}

/// Result of the global Moran permutation test.
#[derive(Debug, Clone)]
pub struct GlobalMoranResult<T> {
    pub i_obs: T,
    pub nsim: usize,
    /// Pseudo p-value `(1 + #{I_sim >= I_obs}) / (1 + nsim)`, one-sided.
    pub p_value: f64,
    pub perm_mean: T,
    pub perm_sd: T,
    pub seed: u64,
}

/// Monte Carlo permutation test for global Moran's I. Holds W fixed and
/// applies `nsim` Fisher-Yates permutations of `y`.
pub fn global_moran_test<T: Scalar>(
    y: &[T],
    w: &SpatialWeights<T>,
    nsim: usize,
    seed: u64,
) -> Result<GlobalMoranResult<T>> {
    if nsim < 99 {
        return Err(Error::TooFewSimulations(nsim));
    }
    let (dev, ss) = deviations(y, w)?;
    let scale = T::of_usize(w.n()) / w.s0() / ss;
    let i_obs = moran_numerator(&dev, w) * scale;

    // Permuting y permutes the deviations and leaves the mean and the
    // denominator unchanged, so only the numerator is recomputed.
    let mut stats = Vec::with_capacity(nsim);
    let mut perm = dev.clone();
    let mut count_ge = 0usize;
    for sim in 0..nsim {
        let mut rng = substream(seed, sim as u64);
        perm.copy_from_slice(&dev);
        perm.shuffle(&mut rng);
        let i_sim = moran_numerator(&perm, w) * scale;
        if i_sim >= i_obs {
            count_ge += 1;
        }
        stats.push(i_sim);
    }

    let perm_mean = mean(&stats);
    let perm_sd = sample_sd(&stats);
    Ok(GlobalMoranResult {
        i_obs,
        nsim,
        p_value: (1 + count_ge) as f64 / (1 + nsim) as f64,
        perm_mean,
        perm_sd,
        seed,
    })
}

/// LISA quadrant label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LisaLabel {
    HighHigh,
    LowLow,
    HighLow,
    LowHigh,
    Insignificant,
}

impl LisaLabel {
    pub fn code(&self) -> &'static str {
        match self {
            LisaLabel::HighHigh => "HH",
            LisaLabel::LowLow => "LL",
            LisaLabel::HighLow => "HL",
            LisaLabel::LowHigh => "LH",
            LisaLabel::Insignificant => "Insignificant",
        }
    }
}

impl std::fmt::Display for LisaLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.code())
    }
}

/// Tail handling for the local permutation p-value.
///
/// `Directed` (the default) tests in the direction of the observed local
/// statistic; the printed one-sided form applied to negative statistics
/// would invert their significance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LisaTail {
    Greater,
    TwoSided,
    #[default]
    Directed,
}

impl std::str::FromStr for LisaTail {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greater" => Ok(LisaTail::Greater),
            "two-sided" => Ok(LisaTail::TwoSided),
            "directed" => Ok(LisaTail::Directed),
            other => Err(Error::InvalidConfig(format!(
                "unknown lisa tail `{other}` (expected greater|two-sided|directed)"
            ))),
        }
    }
}

impl std::fmt::Display for LisaTail {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            LisaTail::Greater => "greater",
            LisaTail::TwoSided => "two-sided",
            LisaTail::Directed => "directed",
        };
        f.write_str(s)
    }
}

/// Options for [`local_moran`].
#[derive(Debug, Clone)]
pub struct LisaOptions {
    pub nsim: usize,
    pub seed: u64,
    pub alpha: f64,
    pub tail: LisaTail,
    /// Benjamini-Hochberg false-discovery-rate gate across regions.
    /// Off by default: no multiple-comparison correction is applied.
    pub fdr: bool,
}

impl Default for LisaOptions {
    fn default() -> Self {
        Self {
            nsim: 999,
            seed: 0,
            alpha: 0.05,
            tail: LisaTail::Directed,
            fdr: false,
        }
    }
}

/// Per-region local Moran output.
#[derive(Debug, Clone)]
pub struct LocalMoranRegion<T> {
    pub local_i: T,
    pub p_value: f64,
    pub z: T,
    pub z_lag: T,
    pub label: LisaLabel,
}

/// Local Moran / LISA result for all regions.
#[derive(Debug, Clone)]
pub struct LocalMoranResult<T> {
    pub regions: Vec<LocalMoranRegion<T>>,
    pub nsim: usize,
    pub seed: u64,
    pub alpha: f64,
    pub tail: LisaTail,
}

impl<T> LocalMoranResult<T> {
    /// Sum of the local statistics; equals `n * I_global` analytically.
    pub fn local_sum(&self) -> T
    where
        T: Scalar,
    {
        self.regions.iter().map(|r| r.local_i).sum()
    }
}

/// Quadrant of `(z, z_lag)`; `None` on either axis (boundary values are
/// never labeled).
fn quadrant<T: Scalar>(z: T, z_lag: T) -> Option<LisaLabel> {
    let zero = T::zero();
    if z > zero && z_lag > zero {
        Some(LisaLabel::HighHigh)
    } else if z < zero && z_lag < zero {
        Some(LisaLabel::LowLow)
    } else if z > zero && z_lag < zero {
        Some(LisaLabel::HighLow)
    } else if z < zero && z_lag > zero {
        Some(LisaLabel::LowHigh)
    } else {
        None
    }
}

/// Quadrant classification given standardized value, its spatial lag, and
/// the permutation p-value. Boundary cases (`z == 0` or `z_lag == 0`) are
/// insignificant regardless of the p-value.
pub fn classify_lisa<T: Scalar>(z: T, z_lag: T, p_value: f64, alpha: f64) -> LisaLabel {
    if p_value >= alpha {
        return LisaLabel::Insignificant;
    }
    quadrant(z, z_lag).unwrap_or(LisaLabel::Insignificant)
}

/// Local Moran's I with conditional permutation inference.
///
/// `I_i = ((y_i - ybar) / m2) * sum_j w_ij (y_j - ybar)` with
/// `m2 = sum_i (y_i - ybar)^2 / n`. For each region the observation is
/// held fixed while `k` neighbor values are drawn without replacement
/// from the other `n - 1` observations.
pub fn local_moran<T: Scalar>(
    y: &[T],
    w: &SpatialWeights<T>,
    options: &LisaOptions,
) -> Result<LocalMoranResult<T>> {
    if options.nsim < 99 {
        return Err(Error::TooFewSimulations(options.nsim));
    }
    if !(options.alpha > 0.0 && options.alpha < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "alpha must be in (0, 1), got {}",
            options.alpha
        )));
    }
    let (dev, ss) = deviations(y, w)?;
    let n = w.n();
    let k = w.k();
    let nsim = options.nsim;
    let m2 = ss / T::of_usize(n);
    let s_y = sample_sd(y);
    let z: Vec<T> = dev.iter().map(|&d| d / s_y).collect();
    let z_lag = w.spatial_lag(&z)?;
    let lag_dev = w.spatial_lag(&dev)?;

    let mut p_values = Vec::with_capacity(n);
    let mut local = Vec::with_capacity(n);
    let mut pool: Vec<T> = Vec::with_capacity(n - 1);
    for i in 0..n {
        let local_i = dev[i] * lag_dev[i] / m2;
        local.push(local_i);

        pool.clear();
        pool.extend(
            dev.iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &d)| d),
        );
        // Scale mapping a sampled neighbor-deviation sum to a local I.
        let scale = dev[i] * w.weight() / m2;

        let mut count_ge = 0usize;
        let mut count_le = 0usize;
        for sim in 0..nsim {
            let mut rng = substream(options.seed, (i * nsim + sim) as u64);
            let mut s = T::zero();
            for idx in rand::seq::index::sample(&mut rng, n - 1, k) {
                s += pool[idx];
            }
            let i_sim = scale * s;
            if i_sim >= local_i {
                count_ge += 1;
            }
            if i_sim <= local_i {
                count_le += 1;
            }
        }
        let denom = (1 + nsim) as f64;
        let p_ge = (1 + count_ge) as f64 / denom;
        let p_le = (1 + count_le) as f64 / denom;
        let p = match options.tail {
            LisaTail::Greater => p_ge,
            LisaTail::Directed => {
                if local_i >= T::zero() {
                    p_ge
                } else {
                    p_le
                }
            }
            LisaTail::TwoSided => (2.0 * p_ge.min(p_le)).min(1.0),
        };
        p_values.push(p);
    }

    // Optional Benjamini-Hochberg gate: replaces the plain `p < alpha`
    // threshold with the step-up cutoff.
    let significant: Vec<bool> = if options.fdr {
        bh_significant(&p_values, options.alpha)
    } else {
        p_values.iter().map(|&p| p < options.alpha).collect()
    };

    let regions = (0..n)
        .map(|i| {
            let label = if significant[i] {
                quadrant(z[i], z_lag[i]).unwrap_or(LisaLabel::Insignificant)
            } else {
                LisaLabel::Insignificant
            };
            LocalMoranRegion {
                local_i: local[i],
                p_value: p_values[i],
                z: z[i],
                z_lag: z_lag[i],
                label,
            }
        })
        .collect();

    Ok(LocalMoranResult {
        regions,
        nsim,
        seed: options.seed,
        alpha: options.alpha,
        tail: options.tail,
    })
}

fn bh_significant(p_values: &[f64], alpha: f64) -> Vec<bool> {
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        p_values[a]
            .partial_cmp(&p_values[b])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut cutoff = None;
    for (rank, &idx) in order.iter().enumerate() {
        if p_values[idx] <= alpha * (rank + 1) as f64 / m as f64 {
            cutoff = Some(p_values[idx]);
        }
    }
    match cutoff {
        Some(c) => p_values.iter().map(|&p| p <= c).collect(),
        None => vec![false; m],
    }
}
