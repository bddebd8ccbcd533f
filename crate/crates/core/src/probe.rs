//! Linear probing and feature-structure metrics.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PROBE_ITERATIONS: usize = 500;
pub const PROBE_LEARNING_RATE: f64 = 0.1;

/// Multinomial logistic regression on standardized features.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProbe {
    mean: Array1<f64>,
    scale: Array1<f64>,
    /// `classes x features`.
    weight: Array2<f64>,
    bias: Array1<f64>,
}

fn check_labels(features: ArrayView2<f64>, labels: &[usize], num_classes: usize) -> Result<()> {
    if labels.len() != features.nrows() {
        return Err(Error::DimensionMismatch {
            expected: features.nrows(),
            got: labels.len(),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
        return Err(Error::Domain(format!(
            "label {bad} out of range for {num_classes} classes"
        )));
    }
    Ok(())
}

impl LinearProbe {
    /// Full-batch gradient descent from zero weights, fixed iterations, no regularization.
    pub fn fit(features: ArrayView2<f64>, labels: &[usize], num_classes: usize) -> Result<Self> {
        check_labels(features, labels, num_classes)?;
        let mut seen = labels.to_vec();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() < 2 {
            return Err(Error::DegenerateStatistics(format!(
                "linear probe needs at least 2 classes in its training labels, got {}",
                seen.len()
            )));
        }
        let n = features.nrows() as f64;
        let mean = features.mean_axis(Axis(0)).expect("non-empty features");
        let var = features.var_axis(Axis(0), 0.0);
        let scale = var.mapv(|v| if v > 1e-24 { v.sqrt() } else { 1.0 });
        let x = (&features - &mean) / &scale;
        let mut onehot = Array2::<f64>::zeros((labels.len(), num_classes));
        for (i, &l) in labels.iter().enumerate() {
            onehot[[i, l]] = 1.0;
        }
        let mut probe = Self {
            mean,
            scale,
            weight: Array2::zeros((num_classes, features.ncols())),
            bias: Array1::zeros(num_classes),
        };
        for _ in 0..PROBE_ITERATIONS {
            let mut delta = softmax_rows(probe.logits_standardized(x.view()));
            delta -= &onehot;
            probe
                .weight
                .scaled_add(-PROBE_LEARNING_RATE / n, &delta.t().dot(&x));
            probe
                .bias
                .scaled_add(-PROBE_LEARNING_RATE / n, &delta.sum_axis(Axis(0)));
        }
        Ok(probe)
    }

    fn logits_standardized(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weight.t()) + &self.bias
    }

    pub fn predict(&self, features: ArrayView2<f64>) -> Result<Vec<usize>> {
        if features.ncols() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                got: features.ncols(),
            });
        }
        let x = (&features - &self.mean) / &self.scale;
        let logits = self.logits_standardized(x.view());
        Ok(logits
            .outer_iter()
            .map(|row| {
                // first maximum wins ties
                let mut best = 0;
                for (k, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = k;
                    }
                }
                best
            })
            .collect())
    }
}

fn softmax_rows(mut logits: Array2<f64>) -> Array2<f64> {
    for mut row in logits.outer_iter_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    logits
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub accuracy: f64,
    /// `None` for classes absent from both predictions and truth.
    pub per_class_iou: Vec<Option<f64>>,
    /// Mean over classes with a defined IoU.
    pub mean_iou: f64,
}

pub fn evaluate(predicted: &[usize], truth: &[usize], num_classes: usize) -> Result<ProbeReport> {
    if predicted.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            got: predicted.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::Domain("nothing to evaluate".into()));
    }
    let mut tp = vec![0usize; num_classes];
    let mut fp = vec![0usize; num_classes];
    let mut fn_ = vec![0usize; num_classes];
    for (&p, &t) in predicted.iter().zip(truth) {
        if p >= num_classes || t >= num_classes {
            return Err(Error::Domain(format!(
                "label out of range for {num_classes} classes"
            )));
        }
        if p == t {
            tp[t] += 1;
        } else {
            fp[p] += 1;
            fn_[t] += 1;
        }
    }
    let per_class_iou: Vec<Option<f64>> = (0..num_classes)
        .map(|k| {
            let union = tp[k] + fp[k] + fn_[k];
            (union > 0).then(|| tp[k] as f64 / union as f64)
        })
        .collect();
    let defined: Vec<f64> = per_class_iou.iter().flatten().copied().collect();
    Ok(ProbeReport {
        accuracy: tp.iter().sum::<usize>() as f64 / truth.len() as f64,
        mean_iou: defined.iter().sum::<f64>() / defined.len() as f64,
        per_class_iou,
    })
}

/// Fits on one split and reports on the other.
pub fn linear_probe(
    train_features: ArrayView2<f64>,
    train_labels: &[usize],
    test_features: ArrayView2<f64>,
    test_labels: &[usize],
    num_classes: usize,
) -> Result<ProbeReport> {
    check_labels(test_features, test_labels, num_classes)?;
    let probe = LinearProbe::fit(train_features, train_labels, num_classes)?;
    evaluate(&probe.predict(test_features)?, test_labels, num_classes)
}

/// `(sigma_w_sq, sigma_b_sq)` over the classes present in `labels`.
///
/// Within-class: mean over classes of the mean squared distance to the class
/// mean. Between-class: mean squared distance of class means to the mean of
/// the class means.
pub fn variance_metrics(features: ArrayView2<f64>, labels: &[usize]) -> Result<(f64, f64)> {
    if labels.len() != features.nrows() {
        return Err(Error::DimensionMismatch {
            expected: features.nrows(),
            got: labels.len(),
        });
    }
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    let dim = features.ncols();
    let mut sums = vec![vec![0.0; dim]; num_classes];
    let mut counts = vec![0usize; num_classes];
    for (row, &l) in features.outer_iter().zip(labels) {
        counts[l] += 1;
        sums[l]
            .iter_mut()
            .zip(row.iter())
            .for_each(|(s, &x)| *s += x);
    }
    let present: Vec<usize> = (0..num_classes).filter(|&k| counts[k] > 0).collect();
    if present.len() < 2 {
        return Err(Error::DegenerateStatistics(format!(
            "need at least 2 classes, got {}",
            present.len()
        )));
    }
    if let Some(&k) = present.iter().find(|&&k| counts[k] < 2) {
        return Err(Error::DegenerateStatistics(format!(
            "class {k} has a single sample"
        )));
    }
    let means: Vec<Vec<f64>> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| s.iter().map(|v| v / c.max(1) as f64).collect())
        .collect();
    let mut within = vec![0.0; num_classes];
    for (row, &l) in features.outer_iter().zip(labels) {
        within[l] += row
            .iter()
            .zip(&means[l])
            .map(|(x, m)| (x - m).powi(2))
            .sum::<f64>();
    }
    let kp = present.len() as f64;
    let sigma_w = present
        .iter()
        .map(|&k| within[k] / counts[k] as f64)
        .sum::<f64>()
        / kp;
    let mut global = vec![0.0; dim];
    for &k in &present {
        global
            .iter_mut()
            .zip(&means[k])
            .for_each(|(g, m)| *g += m / kp);
    }
    let sigma_b = present
        .iter()
        .map(|&k| {
            means[k]
                .iter()
                .zip(&global)
                .map(|(m, g)| (m - g).powi(2))
                .sum::<f64>()
        })
        .sum::<f64>()
        / kp;
    Ok((sigma_w, sigma_b))
}
