//! Density- and category-aware sampling of point-pixel pairs.
//!
//! A pair's raw weight is `1 / (f_h(d_i) * n_{y_i})`, where `f_h` is a
//! Gaussian KDE over sensor distances and `n_{y_i}` counts candidate pairs
//! sharing the pair's weak label. Pairs are then drawn without replacement.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::correspondence::PointPixelPair;
use crate::error::{Error, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
/// Bandwidth used when Silverman's rule degenerates (fewer than two distinct distances).
pub const FALLBACK_BANDWIDTH: f64 = 1.0;

/// How the kernel in `f_h(d) = 1/(M h) sum K(.)` is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelScaling {
    /// Unit-scale Gaussian `K(u) = exp(-u^2/2)/sqrt(2 pi)` applied to `(d - d_i)/h`.
    #[default]
    Standard,
    /// `K` is itself the scaled kernel `K_h(u) = K(u/h)/h`, so the bandwidth
    /// enters twice.
    Prescaled,
}

/// Gaussian KDE over sensor distances.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityModel {
    distances: Vec<f64>,
    bandwidth: f64,
    scaling: KernelScaling,
}

impl DensityModel {
    pub fn new(distances: Vec<f64>, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(Error::Domain(format!(
                "bandwidth must be > 0, got {bandwidth}"
            )));
        }
        if distances.is_empty() {
            return Err(Error::Domain(
                "density model needs at least one distance".into(),
            ));
        }
        if distances.iter().any(|d| !d.is_finite()) {
            return Err(Error::Domain("non-finite distance".into()));
        }
        Ok(Self {
            distances,
            bandwidth,
            scaling: KernelScaling::Standard,
        })
    }

    /// Builds a model whose bandwidth follows Silverman's rule of thumb.
    pub fn silverman(distances: Vec<f64>) -> Result<Self> {
        let h = silverman_bandwidth(&distances);
        Self::new(distances, h)
    }

    pub fn with_scaling(mut self, scaling: KernelScaling) -> Self {
        self.scaling = scaling;
        self
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn len(&self) -> usize {
        self.distances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distances.is_empty()
    }

    pub fn density(&self, query: f64) -> f64 {
        let h = self.bandwidth;
        let (width, prefactor) = match self.scaling {
            KernelScaling::Standard => (h, 1.0 / (self.distances.len() as f64 * h)),
            KernelScaling::Prescaled => (h * h, 1.0 / (self.distances.len() as f64 * h * h)),
        };
        let sum: f64 = self
            .distances
            .iter()
            .map(|&d| {
                let u = (query - d) / width;
                (-0.5 * u * u).exp()
            })
            .sum();
        prefactor * INV_SQRT_2PI * sum
    }
}

/// `f_h(query)` under `model`.
pub fn kde_density(query: f64, model: &DensityModel) -> Result<f64> {
    if !(query >= 0.0) || !query.is_finite() {
        return Err(Error::Domain(format!(
            "query distance must be >= 0, got {query}"
        )));
    }
    Ok(model.density(query))
}

/// `h = 1.06 * sigma * M^{-1/5}` with the sample standard deviation.
/// Falls back to [`FALLBACK_BANDWIDTH`] when the spread is zero.
pub fn silverman_bandwidth(distances: &[f64]) -> f64 {
    let m = distances.len();
    if m < 2 {
        return FALLBACK_BANDWIDTH;
    }
    let mean = distances.iter().sum::<f64>() / m as f64;
    let var = distances.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
    let h = 1.06 * var.sqrt() * (m as f64).powf(-0.2);
    if h > 0.0 && h.is_finite() {
        h
    } else {
        FALLBACK_BANDWIDTH
    }
}

/// Which factors enter a pair's sampling weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    Random,
    Density,
    Category,
    #[default]
    Dcas,
}

impl std::str::FromStr for SamplingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Self::Random),
            "density" => Ok(Self::Density),
            "category" => Ok(Self::Category),
            "dcas" => Ok(Self::Dcas),
            other => Err(Error::InvalidConfig(format!(
                "unknown sampling mode `{other}` (expected random|density|category|dcas)"
            ))),
        }
    }
}

impl std::fmt::Display for SamplingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Random => "random",
            Self::Density => "density",
            Self::Category => "category",
            Self::Dcas => "dcas",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingWeights {
    weights: Vec<f64>,
    category_counts: Vec<usize>,
}

impl SamplingWeights {
    /// Normalizes positive raw weights.
    pub fn from_raw(raw: Vec<f64>, category_counts: Vec<usize>) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::Domain("no candidate pairs".into()));
        }
        if raw.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::Domain(
                "sampling weights must be positive and finite".into(),
            ));
        }
        let total: f64 = raw.iter().sum();
        let weights = raw.into_iter().map(|w| w / total).collect();
        Ok(Self {
            weights,
            category_counts,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn category_counts(&self) -> &[usize] {
        &self.category_counts
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// DCAS weights with the density estimated over the pairs' own distances.
pub fn compute_weights(pairs: &[PointPixelPair], bandwidth: f64) -> Result<SamplingWeights> {
    if pairs.is_empty() {
        return Err(Error::Domain("no candidate pairs".into()));
    }
    let density = DensityModel::new(pairs.iter().map(|p| p.distance).collect(), bandwidth)?;
    let num_classes = pairs.iter().map(|p| p.weak_label).max().unwrap_or(0) + 1;
    compute_weights_with(pairs, &density, num_classes, SamplingMode::Dcas)
}

/// Weights for any [`SamplingMode`] given an explicit density model.
pub fn compute_weights_with(
    pairs: &[PointPixelPair],
    density: &DensityModel,
    num_classes: usize,
    mode: SamplingMode,
) -> Result<SamplingWeights> {
    let mut counts = vec![0usize; num_classes];
    for p in pairs {
        if p.weak_label >= num_classes {
            return Err(Error::Domain(format!(
                "weak label {} out of range for {num_classes} classes",
                p.weak_label
            )));
        }
        counts[p.weak_label] += 1;
    }
    let raw = pairs
        .iter()
        .map(|p| {
            let f = match mode {
                SamplingMode::Density | SamplingMode::Dcas => density.density(p.distance),
                _ => 1.0,
            };
            let n = match mode {
                SamplingMode::Category | SamplingMode::Dcas => counts[p.weak_label] as f64,
                _ => 1.0,
            };
            1.0 / (f * n)
        })
        .collect();
    SamplingWeights::from_raw(raw, counts)
}

/// Draws `m_s` distinct indices, each round picking among the remaining
/// pairs in proportion to their weights. Indices are returned sorted.
pub fn draw_pairs<R: Rng + ?Sized>(
    weights: &SamplingWeights,
    m_s: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let m = weights.len();
    if m_s == 0 || m_s > m {
        return Err(Error::Domain(format!(
            "cannot draw {m_s} pairs from {m} candidates"
        )));
    }
    if m_s == m {
        return Ok((0..m).collect());
    }
    let w = weights.weights();
    let picked = rand::seq::index::sample_weighted(rng, m, |i| w[i], m_s)
        .map_err(|e| Error::Domain(format!("weighted sampling failed: {e}")))?;
    let mut out = picked.into_vec();
    out.sort_unstable();
    Ok(out)
}
