//! von Mises-Fisher statistics on the unit hypersphere.
//!
//! Densities and normalizers are computed in log space. Class statistics are
//! tracked with an exponential moving average of per-class feature means and
//! turned into `(mu, kappa)` with the Sra closed-form approximation.

use ndarray::ArrayView2;
use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};

use crate::bessel::{bessel_ratio, ln_gamma_half_integer, log_bessel_i_scaled};
use crate::error::{Error, Result};

const UNIT_TOL: f64 = 1e-6;
/// Largest resultant length accepted by [`estimate_params`].
pub const MAX_RESULTANT: f64 = 1.0 - 1e-6;

/// A point on the unit sphere in `C >= 2` dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitVector(Vec<f64>);

impl UnitVector {
    pub fn new(components: Vec<f64>) -> Result<Self> {
        if components.len() < 2 {
            return Err(Error::Domain(format!(
                "unit vectors need at least 2 components, got {}",
                components.len()
            )));
        }
        let norm = l2_norm(&components);
        if !norm.is_finite() || (norm - 1.0).abs() > UNIT_TOL {
            return Err(Error::Domain(format!("vector norm {norm} is not 1")));
        }
        Ok(Self(components))
    }

    /// Scales `v` onto the sphere. Fails on the zero vector.
    pub fn normalize(mut v: Vec<f64>) -> Result<Self> {
        let norm = l2_norm(&v);
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::DegenerateStatistics(
                "cannot normalize a zero vector".into(),
            ));
        }
        v.iter_mut().for_each(|x| *x /= norm);
        Self::new(v)
    }

    /// The `axis`-th standard basis vector.
    pub fn basis(dim: usize, axis: usize) -> Result<Self> {
        if axis >= dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: axis + 1,
            });
        }
        let mut v = vec![0.0; dim];
        v[axis] = 1.0;
        Self::new(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        dot(&self.0, other)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VmfParams {
    pub mu: UnitVector,
    pub kappa: f64,
}

impl VmfParams {
    pub fn new(mu: UnitVector, kappa: f64) -> Result<Self> {
        if !(kappa >= 0.0) || !kappa.is_finite() {
            return Err(Error::Domain(format!(
                "kappa must be finite and >= 0, got {kappa}"
            )));
        }
        Ok(Self { mu, kappa })
    }

    pub fn dim(&self) -> usize {
        self.mu.dim()
    }
}

/// `ln K_C(kappa)`, the log normalizer of the vMF density on `S^{C-1}`.
///
/// At `kappa = 0` this is the log of the uniform density,
/// `ln Gamma(C/2) - ln 2 - (C/2) ln pi`.
pub fn log_norm_const(dim: usize, kappa: f64) -> Result<f64> {
    if dim < 2 {
        return Err(Error::Domain(format!("dimension must be >= 2, got {dim}")));
    }
    if !(kappa >= 0.0) || !kappa.is_finite() {
        return Err(Error::Domain(format!(
            "kappa must be finite and >= 0, got {kappa}"
        )));
    }
    let order = 0.5 * dim as f64 - 1.0;
    // kappa^order / I_order(kappa) = 2^order / [I_order(kappa) / (kappa/2)^order]
    let scaled = log_bessel_i_scaled(order, kappa)?;
    Ok(order * std::f64::consts::LN_2
        - 0.5 * dim as f64 * (2.0 * std::f64::consts::PI).ln()
        - scaled)
}

/// Log of the uniform density on the `(C-1)`-sphere.
pub fn log_uniform_density(dim: usize) -> f64 {
    let half = 0.5 * dim as f64;
    ln_gamma_half_integer(half) - std::f64::consts::LN_2 - half * std::f64::consts::PI.ln()
}

pub fn vmf_log_pdf(z: &UnitVector, params: &VmfParams) -> Result<f64> {
    if z.dim() != params.dim() {
        return Err(Error::DimensionMismatch {
            expected: params.dim(),
            got: z.dim(),
        });
    }
    Ok(log_norm_const(z.dim(), params.kappa)? + params.kappa * params.mu.dot(z.as_slice()))
}

/// `A_C(kappa) = I_{C/2}(kappa) / I_{C/2-1}(kappa)`, the expected resultant length.
pub fn mean_resultant_ratio(dim: usize, kappa: f64) -> Result<f64> {
    if dim < 2 {
        return Err(Error::Domain(format!("dimension must be >= 2, got {dim}")));
    }
    bessel_ratio(0.5 * dim as f64 - 1.0, kappa)
}

/// Sra's closed-form concentration estimate `R (C - R^2) / (1 - R^2)`.
pub fn sra_kappa(resultant: f64, dim: usize) -> f64 {
    let r2 = resultant * resultant;
    resultant * (dim as f64 - r2) / (1.0 - r2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub params: VmfParams,
    /// `||zbar||` after clamping.
    pub resultant: f64,
    /// Set when `||zbar|| >= 1` had to be pulled back to [`MAX_RESULTANT`].
    pub clamped: bool,
}

/// Mean direction and concentration from a mean feature vector `zbar`.
pub fn estimate_params(zbar: &[f64]) -> Result<Estimate> {
    if zbar.len() < 2 {
        return Err(Error::Domain(format!(
            "dimension must be >= 2, got {}",
            zbar.len()
        )));
    }
    let norm = l2_norm(zbar);
    if !norm.is_finite() {
        return Err(Error::DegenerateStatistics("non-finite mean vector".into()));
    }
    if norm == 0.0 {
        return Err(Error::DegenerateStatistics(
            "zero mean vector has no direction".into(),
        ));
    }
    let mu = UnitVector::normalize(zbar.to_vec())?;
    let (resultant, clamped) = if norm >= 1.0 {
        (MAX_RESULTANT, true)
    } else {
        (norm, false)
    };
    if clamped {
        log::warn!("resultant length {norm} >= 1 clamped to {MAX_RESULTANT}");
    }
    let kappa = sra_kappa(resultant, zbar.len());
    Ok(Estimate {
        params: VmfParams::new(mu, kappa)?,
        resultant,
        clamped,
    })
}

/// Per-class EMA of mean features.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassStatistics {
    zbar: Vec<Vec<f64>>,
    initialized: Vec<bool>,
    alpha: f64,
}

impl ClassStatistics {
    pub fn new(num_classes: usize, dim: usize, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha must lie in (0, 1), got {alpha}"
            )));
        }
        if num_classes == 0 || dim < 2 {
            return Err(Error::InvalidConfig(format!(
                "need >= 1 class and dimension >= 2, got {num_classes} and {dim}"
            )));
        }
        Ok(Self {
            zbar: vec![vec![0.0; dim]; num_classes],
            initialized: vec![false; num_classes],
            alpha,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.zbar.len()
    }

    pub fn dim(&self) -> usize {
        self.zbar[0].len()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn zbar(&self, class: usize) -> &[f64] {
        &self.zbar[class]
    }

    pub fn is_initialized(&self, class: usize) -> bool {
        self.initialized[class]
    }

    pub fn initialized_mask(&self) -> &[bool] {
        &self.initialized
    }

    /// `||zbar_k||` per class (0 for uninitialized classes).
    pub fn resultant_lengths(&self) -> Vec<f64> {
        self.zbar.iter().map(|z| l2_norm(z)).collect()
    }

    /// Folds one batch of class means into the running statistics.
    ///
    /// Classes with zero count are left untouched. The first batch containing
    /// a class sets its statistic directly.
    pub fn ema_update(&mut self, batch_means: &[Vec<f64>], counts: &[usize]) -> Result<()> {
        let k = self.num_classes();
        if batch_means.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: batch_means.len(),
            });
        }
        if counts.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: counts.len(),
            });
        }
        let dim = self.dim();
        if let Some(bad) = batch_means
            .iter()
            .zip(counts)
            .find(|(m, &c)| c > 0 && m.len() != dim)
        {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.0.len(),
            });
        }
        for class in 0..k {
            if counts[class] == 0 {
                continue;
            }
            let mean = &batch_means[class];
            if self.initialized[class] {
                let a = self.alpha;
                for (z, &m) in self.zbar[class].iter_mut().zip(mean) {
                    *z = a * *z + (1.0 - a) * m;
                }
            } else {
                self.zbar[class].copy_from_slice(mean);
                self.initialized[class] = true;
            }
        }
        Ok(())
    }

    /// vMF parameters for every initialized class, `None` elsewhere.
    ///
    /// `kappa_max`, when set, caps the concentration.
    pub fn estimate_all(&self, kappa_max: Option<f64>) -> Result<Vec<Option<VmfParams>>> {
        self.zbar
            .iter()
            .zip(&self.initialized)
            .map(|(z, &init)| {
                if !init {
                    return Ok(None);
                }
                let mut params = estimate_params(z)?.params;
                if let Some(cap) = kappa_max {
                    params.kappa = params.kappa.min(cap);
                }
                Ok(Some(params))
            })
            .collect()
    }
}

/// Per-class arithmetic means of the rows of `features`, with counts.
pub fn class_means(
    features: ArrayView2<f64>,
    labels: &[usize],
    num_classes: usize,
) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    if labels.len() != features.nrows() {
        return Err(Error::DimensionMismatch {
            expected: features.nrows(),
            got: labels.len(),
        });
    }
    let dim = features.ncols();
    let mut sums = vec![vec![0.0; dim]; num_classes];
    let mut counts = vec![0usize; num_classes];
    for (row, &label) in features.outer_iter().zip(labels) {
        if label >= num_classes {
            return Err(Error::Domain(format!(
                "label {label} out of range for {num_classes} classes"
            )));
        }
        counts[label] += 1;
        for (s, &x) in sums[label].iter_mut().zip(row.iter()) {
            *s += x;
        }
    }
    for (sum, &count) in sums.iter_mut().zip(&counts) {
        if count > 0 {
            sum.iter_mut().for_each(|s| *s /= count as f64);
        }
    }
    Ok((sums, counts))
}

/// Draws `n` samples from `vMF(mu, kappa)` (Wood's rejection scheme).
pub fn sample_vmf<R: Rng + ?Sized>(params: &VmfParams, n: usize, rng: &mut R) -> Vec<UnitVector> {
    let dim = params.dim();
    let c1 = (dim - 1) as f64;
    let kappa = params.kappa;
    let b = c1 / (2.0 * kappa + (4.0 * kappa * kappa + c1 * c1).sqrt());
    let x0 = (1.0 - b) / (1.0 + b);
    let c = kappa * x0 + c1 * (1.0 - x0 * x0).ln();
    let beta = Beta::new(0.5 * c1, 0.5 * c1).expect("beta shape parameters are positive");
    let mu = params.mu.as_slice();

    (0..n)
        .map(|_| {
            let w = loop {
                let z: f64 = beta.sample(rng);
                let w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
                let u: f64 = rng.random();
                if kappa * w + c1 * (1.0 - x0 * w).ln() - c >= u.ln() {
                    break w;
                }
            };
            let tangent = loop {
                let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
                let along = dot(&v, mu);
                v.iter_mut().zip(mu).for_each(|(x, &m)| *x -= along * m);
                let norm = l2_norm(&v);
                if norm > 1e-12 {
                    v.iter_mut().for_each(|x| *x /= norm);
                    break v;
                }
            };
            let s = (1.0 - w * w).max(0.0).sqrt();
            let z: Vec<f64> = mu
                .iter()
                .zip(&tangent)
                .map(|(&m, &t)| w * m + s * t)
                .collect();
            UnitVector::normalize(z).expect("sample lies on the sphere")
        })
        .collect()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}
