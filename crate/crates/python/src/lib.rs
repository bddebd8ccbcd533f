//! Python bindings. Matrices cross the boundary as lists of rows.

use ndarray::Array2;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use vmfd::{FeatureMatrix, SamplingMode, UnitVector, VmfParams};

fn to_py(e: vmfd::Error) -> PyErr {
    match e {
        vmfd::Error::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("rows have different lengths"));
    }
    let n = rows.len();
    Array2::from_shape_vec((n, cols), rows.into_iter().flatten().collect())
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

fn rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.outer_iter().map(|r| r.to_vec()).collect()
}

fn features(rows: Vec<Vec<f64>>) -> PyResult<FeatureMatrix> {
    FeatureMatrix::new(matrix(rows)?).map_err(to_py)
}

/// `ln I_nu(x)`.
#[pyfunction]
fn log_bessel_i(nu: f64, x: f64) -> PyResult<f64> {
    vmfd::bessel::log_bessel_i(nu, x).map_err(to_py)
}

/// `ln C_dim(kappa)`, the log normalizer of the vMF density.
#[pyfunction]
fn log_norm_const(dim: usize, kappa: f64) -> PyResult<f64> {
    vmfd::log_norm_const(dim, kappa).map_err(to_py)
}

/// Mean direction, concentration and resultant length from a mean vector.
#[pyfunction]
fn estimate_params(zbar: Vec<f64>) -> PyResult<(Vec<f64>, f64, f64)> {
    let est = vmfd::estimate_params(&zbar).map_err(to_py)?;
    Ok((
        est.params.mu.as_slice().to_vec(),
        est.params.kappa,
        est.resultant,
    ))
}

#[pyfunction]
fn sample_vmf(mu: Vec<f64>, kappa: f64, n: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    let params = VmfParams::new(UnitVector::new(mu).map_err(to_py)?, kappa).map_err(to_py)?;
    let draws = vmfd::sample_vmf(&params, n, &mut ChaCha8Rng::seed_from_u64(seed));
    Ok(draws.iter().map(|z| z.as_slice().to_vec()).collect())
}

/// Point-pixel contrastive loss and its gradient with respect to `f3d`.
#[pyfunction]
fn ppnce_loss(f3d: Vec<Vec<f64>>, f2d: Vec<Vec<f64>>, tau: f64) -> PyResult<(f64, Vec<Vec<f64>>)> {
    let out = vmfd::ppnce_loss(&features(f3d)?, &features(f2d)?, tau).map_err(to_py)?;
    Ok((out.value, rows(&out.grad_3d)))
}

/// Weakly-supervised contrastive loss and its gradient with respect to `g3d`.
#[pyfunction]
fn supervised_nce_loss(
    g3d: Vec<Vec<f64>>,
    g2d: Vec<Vec<f64>>,
    labels: Vec<usize>,
    tau: f64,
) -> PyResult<(f64, Vec<Vec<f64>>)> {
    let out =
        vmfd::supervised_nce_loss(&features(g3d)?, &features(g2d)?, &labels, tau).map_err(to_py)?;
    Ok((out.value, rows(&out.grad_3d)))
}

/// KL loss against per-class `(mu, kappa)` targets; `None` skips a class.
#[pyfunction]
fn kl_vmf_loss(
    g3d: Vec<Vec<f64>>,
    labels: Vec<usize>,
    targets: Vec<Option<(Vec<f64>, f64)>>,
) -> PyResult<(f64, Vec<Vec<f64>>)> {
    let params = targets
        .into_iter()
        .map(|t| {
            t.map(|(mu, kappa)| VmfParams::new(UnitVector::new(mu)?, kappa))
                .transpose()
        })
        .collect::<vmfd::Result<Vec<_>>>()
        .map_err(to_py)?;
    let out = vmfd::kl_vmf_loss(&features(g3d)?, &labels, &params).map_err(to_py)?;
    Ok((out.value, rows(&out.grad_3d)))
}

#[pyclass(frozen)]
struct Scene {
    inner: vmfd::Scene,
}

#[pymethods]
impl Scene {
    #[staticmethod]
    #[pyo3(signature = (seed, num_points = 4096, label_noise_rate = 0.1))]
    fn generate(seed: u64, num_points: usize, label_noise_rate: f64) -> PyResult<Self> {
        let config = vmfd::SceneConfig {
            seed,
            num_points,
            label_noise_rate,
            ..vmfd::SceneConfig::default()
        };
        Ok(Self {
            inner: vmfd::generate_scene(&config).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: vmfd::load_scene(&path).map_err(to_py)?,
        })
    }

    fn save(&self, path: std::path::PathBuf) -> PyResult<()> {
        vmfd::save_scene(&self.inner, &path).map_err(to_py)
    }

    #[getter]
    fn num_points(&self) -> usize {
        self.inner.points.len()
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.inner.num_classes
    }

    #[getter]
    fn points(&self) -> Vec<[f64; 3]> {
        self.inner.points.clone()
    }

    #[getter]
    fn true_labels(&self) -> Vec<usize> {
        self.inner.true_labels.clone()
    }

    fn num_pairs(&self) -> PyResult<usize> {
        Ok(self.inner.pairs().map_err(to_py)?.len())
    }

    /// Sampling weights of the scene's pairs (`random`, `density`,
    /// `category` or `dcas`), with a Silverman bandwidth.
    #[pyo3(signature = (mode = "dcas"))]
    fn sampling_weights(&self, mode: &str) -> PyResult<Vec<f64>> {
        let mode: SamplingMode = mode.parse().map_err(to_py)?;
        let config = vmfd::TrainConfig {
            sampling: mode,
            ..vmfd::TrainConfig::default()
        };
        let prepared = vmfd::trainer::prepare_scene(&self.inner, &config, self.inner.num_classes)
            .map_err(to_py)?;
        Ok(prepared.weights.weights().to_vec())
    }
}

#[pyclass(get_all, set_all)]
struct TrainConfig {
    epochs: usize,
    m_s: usize,
    lr0: f64,
    tau: f64,
    alpha: f64,
    lambda1: f64,
    lambda2: f64,
    lambda3: f64,
    sampling: String,
    seed: u64,
}

#[pymethods]
impl TrainConfig {
    #[new]
    #[pyo3(signature = (
        seed = 0, epochs = 50, m_s = 256, lr0 = 0.05, tau = 0.07, alpha = 0.99,
        lambda1 = 1.0, lambda2 = 1.0, lambda3 = 1.0, sampling = "dcas".to_string(),
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        seed: u64,
        epochs: usize,
        m_s: usize,
        lr0: f64,
        tau: f64,
        alpha: f64,
        lambda1: f64,
        lambda2: f64,
        lambda3: f64,
        sampling: String,
    ) -> Self {
        Self {
            epochs,
            m_s,
            lr0,
            tau,
            alpha,
            lambda1,
            lambda2,
            lambda3,
            sampling,
            seed,
        }
    }

    /// SHA-256 of the resolved configuration.
    fn hash(&self) -> PyResult<String> {
        Ok(self.resolve()?.hash())
    }
}

impl TrainConfig {
    fn resolve(&self) -> PyResult<vmfd::TrainConfig> {
        let config = vmfd::TrainConfig {
            epochs: self.epochs,
            m_s: self.m_s,
            lr0: self.lr0,
            tau: self.tau,
            alpha: self.alpha,
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            lambda3: self.lambda3,
            sampling: self.sampling.parse().map_err(to_py)?,
            seed: self.seed,
            ..vmfd::TrainConfig::default()
        };
        config.validate().map_err(to_py)?;
        Ok(config)
    }
}

#[pyclass(frozen, get_all)]
struct EpochMetrics {
    epoch: usize,
    l_ppnce: f64,
    l_sup: f64,
    l_kl: f64,
    total: f64,
    lr: f64,
    sigma_w_sq: f64,
    sigma_b_sq: f64,
}

impl From<&vmfd::EpochMetrics> for EpochMetrics {
    fn from(m: &vmfd::EpochMetrics) -> Self {
        Self {
            epoch: m.epoch,
            l_ppnce: m.l_ppnce,
            l_sup: m.l_sup,
            l_kl: m.l_kl,
            total: m.total,
            lr: m.lr,
            sigma_w_sq: m.sigma_w_sq,
            sigma_b_sq: m.sigma_b_sq,
        }
    }
}

#[pyclass(frozen, get_all)]
struct ProbeResult {
    accuracy: f64,
    mean_iou: f64,
    per_class_iou: Vec<Option<f64>>,
    sigma_w_sq: f64,
    sigma_b_sq: f64,
}

#[pyclass(frozen)]
struct Model {
    inner: vmfd::Model,
    config_hash: String,
    epochs: u64,
}

#[pymethods]
impl Model {
    /// Untrained model for `config`, identical to a training run's start.
    #[staticmethod]
    fn init(config: &TrainConfig) -> PyResult<Self> {
        let resolved = config.resolve()?;
        let inner = vmfd::Model::init(
            &resolved.encoder,
            &mut ChaCha8Rng::seed_from_u64(resolved.seed),
        )
        .map_err(to_py)?;
        Ok(Self {
            inner,
            config_hash: resolved.hash(),
            epochs: 0,
        })
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        let ckpt = vmfd::load_checkpoint(&path).map_err(to_py)?;
        Ok(Self {
            inner: ckpt.model,
            config_hash: ckpt.config_hash,
            epochs: ckpt.epochs,
        })
    }

    fn save(&self, path: std::path::PathBuf) -> PyResult<()> {
        let ckpt = vmfd::Checkpoint {
            config_hash: self.config_hash.clone(),
            epochs: self.epochs,
            model: self.inner.clone(),
        };
        vmfd::save_checkpoint(&ckpt, &path).map_err(to_py)
    }

    #[getter]
    fn config_hash(&self) -> String {
        self.config_hash.clone()
    }

    #[getter]
    fn epochs(&self) -> u64 {
        self.epochs
    }

    /// Unit-norm semantic-head embeddings of point descriptors.
    fn embed(&self, inputs: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let f = self
            .inner
            .forward_3d(matrix(inputs)?.view())
            .map_err(to_py)?;
        Ok(rows(&f.sem.into_inner()))
    }

    fn probe(&self, scenes: Vec<PyRef<'_, Scene>>) -> PyResult<ProbeResult> {
        let scenes: Vec<vmfd::Scene> = scenes.iter().map(|s| s.inner.clone()).collect();
        let s = vmfd::probe_model(&self.inner, &scenes).map_err(to_py)?;
        Ok(ProbeResult {
            accuracy: s.report.accuracy,
            mean_iou: s.report.mean_iou,
            per_class_iou: s.report.per_class_iou,
            sigma_w_sq: s.sigma_w_sq,
            sigma_b_sq: s.sigma_b_sq,
        })
    }
}

/// Trains on `scenes`; returns the model and one record per epoch.
#[pyfunction]
fn train(
    py: Python<'_>,
    config: &TrainConfig,
    scenes: Vec<PyRef<'_, Scene>>,
) -> PyResult<(Model, Vec<EpochMetrics>)> {
    let resolved = config.resolve()?;
    let hash = resolved.hash();
    let scenes: Vec<vmfd::Scene> = scenes.iter().map(|s| s.inner.clone()).collect();
    let (model, history) = py
        .detach(|| vmfd::train(resolved, &scenes, |_| Ok(())))
        .map_err(to_py)?;
    Ok((
        Model {
            inner: model,
            config_hash: hash,
            epochs: history.len() as u64,
        },
        history.iter().map(EpochMetrics::from).collect(),
    ))
}

#[pymodule]
fn vmfd_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(log_bessel_i, m)?)?;
    m.add_function(wrap_pyfunction!(log_norm_const, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_params, m)?)?;
    m.add_function(wrap_pyfunction!(sample_vmf, m)?)?;
    m.add_function(wrap_pyfunction!(ppnce_loss, m)?)?;
    m.add_function(wrap_pyfunction!(supervised_nce_loss, m)?)?;
    m.add_function(wrap_pyfunction!(kl_vmf_loss, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_class::<Scene>()?;
    m.add_class::<TrainConfig>()?;
    m.add_class::<Model>()?;
    m.add_class::<EpochMetrics>()?;
    m.add_class::<ProbeResult>()?;
    Ok(())
}
