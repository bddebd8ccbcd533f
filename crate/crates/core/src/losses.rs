//! Contrastive and vMF objectives with exact gradients.
//!
//! The contrastive losses are functions of the similarity matrix
//! `s_ij = <x3_i, x2_j>`. Each loss first produces `dL/ds`, and the row
//! gradients follow as `dL/dx3 = (dL/ds) x2` and `dL/dx2 = (dL/ds)^T x3`.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::vmf::{log_norm_const, VmfParams};

const UNIT_TOL: f64 = 1e-6;

/// Rows of unit length.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix(Array2<f64>);

impl FeatureMatrix {
    pub fn new(rows: Array2<f64>) -> Result<Self> {
        for (i, row) in rows.outer_iter().enumerate() {
            let norm = row.dot(&row).sqrt();
            if !norm.is_finite() || (norm - 1.0).abs() > UNIT_TOL {
                return Err(Error::Domain(format!(
                    "row {i} has norm {norm}, expected 1"
                )));
            }
        }
        Ok(Self(rows))
    }

    /// Wraps `rows` without checking norms. The loss formulas stay smooth
    /// off the sphere, which finite-difference checks rely on.
    pub fn new_unchecked(rows: Array2<f64>) -> Self {
        Self(rows)
    }

    /// Divides each row by its norm.
    pub fn normalized(mut rows: Array2<f64>) -> Result<Self> {
        for (i, mut row) in rows.outer_iter_mut().enumerate() {
            let norm = row.dot(&row).sqrt();
            if norm == 0.0 || !norm.is_finite() {
                return Err(Error::DegenerateEmbedding { row: i });
            }
            row /= norm;
        }
        Ok(Self(rows))
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    /// Rows at `indices`, in order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self(self.0.select(Axis(0), indices))
    }
}

impl AsRef<Array2<f64>> for FeatureMatrix {
    fn as_ref(&self) -> &Array2<f64> {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    /// Gradient with respect to the rows of the 3D feature matrix.
    pub grad_3d: Array2<f64>,
    /// Gradient with respect to the rows of the 2D feature matrix (zero for
    /// losses that do not involve it).
    pub grad_2d: Array2<f64>,
}

/// Loss value together with `dL/ds` over the similarity matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGrad {
    pub value: f64,
    pub grad: Array2<f64>,
}

fn check_pair(f3d: &FeatureMatrix, f2d: &FeatureMatrix, tau: f64) -> Result<()> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::Domain(format!("temperature must be > 0, got {tau}")));
    }
    if f3d.nrows() != f2d.nrows() {
        return Err(Error::DimensionMismatch {
            expected: f3d.nrows(),
            got: f2d.nrows(),
        });
    }
    if f3d.ncols() != f2d.ncols() {
        return Err(Error::DimensionMismatch {
            expected: f3d.ncols(),
            got: f2d.ncols(),
        });
    }
    if f3d.nrows() == 0 {
        return Err(Error::Domain("empty batch".into()));
    }
    Ok(())
}

fn log_sum_exp<I: Iterator<Item = f64> + Clone>(values: I) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Supervised-contrastive core: `positive(i, j)` defines the positive set of
/// anchor `i`. With `positive(i, j) = (i == j)` this is plain InfoNCE.
fn contrastive<P: Fn(usize, usize) -> bool>(
    f3d: &FeatureMatrix,
    f2d: &FeatureMatrix,
    tau: f64,
    positive: P,
) -> SimilarityGrad {
    let m = f3d.nrows();
    let logits = f3d.view().dot(&f2d.view().t()) / tau;
    let mut grad = Array2::zeros((m, m));
    let mut total = 0.0;
    let scale = 1.0 / (m as f64 * tau);
    for (i, row) in logits.outer_iter().enumerate() {
        let lse_all = log_sum_exp(row.iter().copied());
        let pos = || {
            row.iter()
                .enumerate()
                .filter(|&(j, _)| positive(i, j))
                .map(|(_, &v)| v)
        };
        let n_pos = pos().count();
        let lse_pos = log_sum_exp(pos());
        total += lse_all - lse_pos + (n_pos as f64).ln();
        for (j, &s) in row.iter().enumerate() {
            let p = (s - lse_all).exp();
            let q = if positive(i, j) {
                (s - lse_pos).exp()
            } else {
                0.0
            };
            grad[[i, j]] = (p - q) * scale;
        }
    }
    SimilarityGrad {
        value: total / m as f64,
        grad,
    }
}

fn with_row_grads(f3d: &FeatureMatrix, f2d: &FeatureMatrix, sim: SimilarityGrad) -> LossOutput {
    LossOutput {
        value: sim.value,
        grad_3d: sim.grad.dot(&f2d.view()),
        grad_2d: sim.grad.t().dot(&f3d.view()),
    }
}

/// Point-pixel InfoNCE: `-1/M sum_i ln softmax_j(<f3_i, f2_j>/tau)[i]`, and `dL/ds`.
pub fn ppnce_similarity_grad(
    f3d: &FeatureMatrix,
    f2d: &FeatureMatrix,
    tau: f64,
) -> Result<SimilarityGrad> {
    check_pair(f3d, f2d, tau)?;
    Ok(contrastive(f3d, f2d, tau, |i, j| i == j))
}

pub fn ppnce_loss(f3d: &FeatureMatrix, f2d: &FeatureMatrix, tau: f64) -> Result<LossOutput> {
    let sim = ppnce_similarity_grad(f3d, f2d, tau)?;
    Ok(with_row_grads(f3d, f2d, sim))
}

/// Weakly-supervised contrastive loss whose positive set for anchor `i` is
/// every pair sharing its label (including `i` itself), and `dL/ds`.
pub fn supervised_similarity_grad(
    g3d: &FeatureMatrix,
    g2d: &FeatureMatrix,
    labels: &[usize],
    tau: f64,
) -> Result<SimilarityGrad> {
    check_pair(g3d, g2d, tau)?;
    if labels.len() != g3d.nrows() {
        return Err(Error::DimensionMismatch {
            expected: g3d.nrows(),
            got: labels.len(),
        });
    }
    Ok(contrastive(g3d, g2d, tau, |i, j| labels[i] == labels[j]))
}

pub fn supervised_nce_loss(
    g3d: &FeatureMatrix,
    g2d: &FeatureMatrix,
    labels: &[usize],
    tau: f64,
) -> Result<LossOutput> {
    let sim = supervised_similarity_grad(g3d, g2d, labels, tau)?;
    Ok(with_row_grads(g3d, g2d, sim))
}

/// Negative vMF log-likelihood of each feature under its class distribution,
/// averaged over rows whose class has parameters. `class_params[k]` is `None`
/// for classes without statistics yet; those rows contribute nothing.
pub fn kl_vmf_loss(
    g3d: &FeatureMatrix,
    labels: &[usize],
    class_params: &[Option<VmfParams>],
) -> Result<LossOutput> {
    let (m, c) = (g3d.nrows(), g3d.ncols());
    if labels.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: labels.len(),
        });
    }
    let log_norms = class_params
        .iter()
        .map(|p| match p {
            Some(p) if p.dim() != c => Err(Error::DimensionMismatch {
                expected: c,
                got: p.dim(),
            }),
            Some(p) => log_norm_const(c, p.kappa).map(Some),
            None => Ok(None),
        })
        .collect::<Result<Vec<_>>>()?;

    let active: Vec<usize> = (0..m)
        .filter(|&i| labels[i] < class_params.len() && class_params[labels[i]].is_some())
        .collect();
    let mut grad_3d = Array2::zeros((m, c));
    if active.is_empty() {
        return Ok(LossOutput {
            value: 0.0,
            grad_3d,
            grad_2d: Array2::zeros((m, c)),
        });
    }
    let inv = 1.0 / active.len() as f64;
    let mut value = 0.0;
    for &i in &active {
        let k = labels[i];
        let params = class_params[k]
            .as_ref()
            .expect("active rows have parameters");
        let mu = Array1::from(params.mu.as_slice().to_vec());
        let row = g3d.view().row(i).to_owned();
        value +=
            -log_norms[k].expect("parameters imply a normalizer") - params.kappa * mu.dot(&row);
        grad_3d.row_mut(i).assign(&(&mu * (-params.kappa * inv)));
    }
    Ok(LossOutput {
        value: value * inv,
        grad_3d,
        grad_2d: Array2::zeros((m, c)),
    })
}

/// Per-term weights of the combined objective.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossWeights {
    pub ppnce: f64,
    pub sup: f64,
    pub kl: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            ppnce: 1.0,
            sup: 1.0,
            kl: 1.0,
        }
    }
}

/// Weighted total and per-head gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinedLoss {
    pub total: f64,
    /// Gradient for the point-pixel head's 3D embeddings.
    pub grad_pp: Array2<f64>,
    /// Gradient for the semantic head's 3D embeddings.
    pub grad_sem: Array2<f64>,
    pub grad_pp_2d: Array2<f64>,
    pub grad_sem_2d: Array2<f64>,
}

/// `lambda1 L_ppnce + lambda2 L_sup + lambda3 L_kl`. The ppnce gradient lives
/// in the point-pixel head space; the other two share the semantic head.
pub fn combined_loss(
    ppnce: &LossOutput,
    sup: &LossOutput,
    kl: &LossOutput,
    weights: LossWeights,
) -> CombinedLoss {
    CombinedLoss {
        total: weights.ppnce * ppnce.value + weights.sup * sup.value + weights.kl * kl.value,
        grad_pp: &ppnce.grad_3d * weights.ppnce,
        grad_sem: &sup.grad_3d * weights.sup + &kl.grad_3d * weights.kl,
        grad_pp_2d: &ppnce.grad_2d * weights.ppnce,
        grad_sem_2d: &sup.grad_2d * weights.sup + &kl.grad_2d * weights.kl,
    }
}
