//! Two-stage pretraining loop, optimizer, and learning-rate schedule.
//!
//! Each step draws `m_s` pairs per scene, runs both branches, folds the
//! semantic-head class means into the EMA statistics (stage 1), then
//! evaluates the combined loss against the vMF parameters estimated at the
//! start of the epoch and takes one momentum-SGD step (stage 2).

use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::correspondence::PointPixelPair;
use crate::encoders::{EncoderConfig, Gradients, Linear, Model};
use crate::error::{Error, Result};
use crate::losses::{combined_loss, kl_vmf_loss, ppnce_loss, supervised_nce_loss, LossWeights};
use crate::probe::{linear_probe, variance_metrics, ProbeReport};
use crate::sampling::{
    compute_weights_with, draw_pairs, DensityModel, KernelScaling, SamplingMode, SamplingWeights,
};
use crate::synthdata::Scene;
use crate::vmf::{class_means, ClassStatistics, VmfParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BandwidthMode {
    Silverman,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_scenes: usize,
    /// Pairs drawn per scene and step.
    pub m_s: usize,
    pub lr0: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub alpha: f64,
    pub tau: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub bandwidth: BandwidthMode,
    pub sampling: SamplingMode,
    pub kernel: KernelScaling,
    pub seed: u64,
    /// Also update the two image heads; they stay frozen otherwise.
    pub train_image_heads: bool,
    pub kappa_max: Option<f64>,
    pub encoder: EncoderConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_scenes: 1,
            m_s: 256,
            lr0: 0.05,
            momentum: 0.9,
            weight_decay: 1e-4,
            alpha: 0.99,
            tau: 0.07,
            lambda1: 1.0,
            lambda2: 1.0,
            lambda3: 1.0,
            bandwidth: BandwidthMode::Silverman,
            sampling: SamplingMode::Dcas,
            kernel: KernelScaling::Standard,
            seed: 0,
            train_image_heads: false,
            kappa_max: None,
            encoder: EncoderConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.epochs == 0 || self.batch_scenes == 0 || self.m_s == 0 {
            return bad("epochs, batch_scenes and m_s must be positive".into());
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad(format!("lr0 must be > 0, got {}", self.lr0));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            ));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!(
                "weight_decay must be >= 0, got {}",
                self.weight_decay
            ));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be > 0, got {}", self.tau));
        }
        for (name, l) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
        ] {
            if !(l >= 0.0 && l.is_finite()) {
                return bad(format!("{name} must be >= 0, got {l}"));
            }
        }
        if let BandwidthMode::Fixed(h) = self.bandwidth {
            if !(h > 0.0 && h.is_finite()) {
                return bad(format!("bandwidth must be > 0, got {h}"));
            }
        }
        if let Some(k) = self.kappa_max {
            if !(k > 0.0) {
                return bad(format!("kappa_max must be > 0, got {k}"));
            }
        }
        Ok(())
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            ppnce: self.lambda1,
            sup: self.lambda2,
            kl: self.lambda3,
        }
    }
}

/// `lr0 (1 + cos(pi t / T)) / 2`.
pub fn cosine_lr(t: usize, total: usize, lr0: f64) -> Result<f64> {
    if total == 0 {
        return Err(Error::Domain(
            "cosine schedule needs at least one step".into(),
        ));
    }
    if t > total {
        return Err(Error::Domain(format!(
            "step {t} beyond schedule length {total}"
        )));
    }
    Ok(lr0 * (1.0 + (std::f64::consts::PI * t as f64 / total as f64).cos()) / 2.0)
}

/// Momentum buffers for every model layer, plus which layers train.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    velocity: Vec<Linear>,
    trainable: Vec<bool>,
}

impl OptimizerState {
    pub fn new(model: &Model, trainable: Vec<bool>) -> Result<Self> {
        let layers = model.layers();
        if trainable.len() != layers.len() {
            return Err(Error::DimensionMismatch {
                expected: layers.len(),
                got: trainable.len(),
            });
        }
        Ok(Self {
            velocity: layers.iter().map(|l| l.zeros_like()).collect(),
            trainable,
        })
    }

    /// 3D branch always trains; image heads only when asked.
    pub fn for_model(model: &Model, train_image_heads: bool) -> Self {
        let n = model.layers().len();
        let trainable = (0..n)
            .map(|i| i < model.num_point_layers() || train_image_heads)
            .collect();
        Self::new(model, trainable).expect("mask sized from the model")
    }

    pub fn velocity(&self) -> &[Linear] {
        &self.velocity
    }

    pub fn trainable(&self) -> &[bool] {
        &self.trainable
    }
}

/// `v <- momentum v + (g + wd p)`, `p <- p - lr v` on every trainable layer.
///
/// Gradients are checked for finiteness before anything is modified.
pub fn sgd_step(
    model: &mut Model,
    grads: &Gradients,
    state: &mut OptimizerState,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<()> {
    let n = state.velocity.len();
    if grads.layers.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: grads.layers.len(),
        });
    }
    for (i, (g, v)) in grads.layers.iter().zip(&state.velocity).enumerate() {
        if g.weight.dim() != v.weight.dim() || g.bias.len() != v.bias.len() {
            return Err(Error::DimensionMismatch {
                expected: v.weight.len(),
                got: g.weight.len(),
            });
        }
        if state.trainable[i] && !g.is_finite() {
            let bad = g
                .weight
                .iter()
                .chain(g.bias.iter())
                .filter(|x| !x.is_finite())
                .count();
            return Err(Error::NonFiniteGradient(format!(
                "layer {i}: {bad} non-finite entries"
            )));
        }
    }
    for (i, param) in model.layers_mut().into_iter().enumerate() {
        if !state.trainable[i] {
            continue;
        }
        let v = &mut state.velocity[i];
        let g = &grads.layers[i];
        v.weight *= momentum;
        v.weight += &g.weight;
        v.weight.scaled_add(weight_decay, &param.weight);
        v.bias *= momentum;
        v.bias += &g.bias;
        v.bias.scaled_add(weight_decay, &param.bias);
        param.weight.scaled_add(-lr, &v.weight);
        param.bias.scaled_add(-lr, &v.bias);
    }
    Ok(())
}

/// Per-scene data fixed for the whole run: pairs, model inputs, weights.
#[derive(Debug, Clone)]
pub struct PreparedScene {
    pub pairs: Vec<PointPixelPair>,
    pub point_inputs: Array2<f64>,
    pub pixel_descriptors: Array2<f64>,
    pub weak_labels: Vec<usize>,
    pub true_labels: Vec<usize>,
    pub weights: SamplingWeights,
}

/// Builds pairs and sampling weights. The density model is fitted to the
/// sensor distances of every point in the scene.
pub fn prepare_scene(
    scene: &Scene,
    config: &TrainConfig,
    num_classes: usize,
) -> Result<PreparedScene> {
    let pairs = scene.pairs()?;
    if pairs.len() < 2 {
        return Err(Error::Domain(format!(
            "scene has {} point-pixel pairs, need at least 2",
            pairs.len()
        )));
    }
    let distances: Vec<f64> = scene
        .points
        .iter()
        .map(|&p| crate::correspondence::sensor_distance(p))
        .collect();
    let density = match config.bandwidth {
        BandwidthMode::Silverman => DensityModel::silverman(distances)?,
        BandwidthMode::Fixed(h) => DensityModel::new(distances, h)?,
    }
    .with_scaling(config.kernel);
    let weights = compute_weights_with(&pairs, &density, num_classes, config.sampling)?;
    Ok(PreparedScene {
        point_inputs: scene.point_inputs_for(&pairs),
        pixel_descriptors: scene.pixel_descriptors_for(&pairs)?,
        weak_labels: pairs.iter().map(|p| p.weak_label).collect(),
        true_labels: pairs
            .iter()
            .map(|p| scene.true_labels[p.point_index])
            .collect(),
        weights,
        pairs,
    })
}

/// One record per epoch; loss values and gradient norms are step means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub l_ppnce: f64,
    pub l_sup: f64,
    pub l_kl: f64,
    pub total: f64,
    /// Learning rate of the epoch's first step.
    pub lr: f64,
    pub sigma_w_sq: f64,
    pub sigma_b_sq: f64,
    pub grad_norm: f64,
    pub zbar_norms: Vec<f64>,
}

/// Loss values of one optimizer step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLosses {
    pub l_ppnce: f64,
    pub l_sup: f64,
    pub l_kl: f64,
    pub total: f64,
    pub grad_norm: f64,
}

pub struct Trainer {
    config: TrainConfig,
    model: Model,
    stats: ClassStatistics,
    optimizer: OptimizerState,
    rng: ChaCha8Rng,
    scenes: Vec<PreparedScene>,
    num_classes: usize,
    step: usize,
    epoch: usize,
    snapshot: Vec<Option<VmfParams>>,
}

impl Trainer {
    pub fn new(config: TrainConfig, scenes: &[Scene]) -> Result<Self> {
        config.validate()?;
        if scenes.is_empty() {
            return Err(Error::Domain("no training scenes".into()));
        }
        let num_classes = scenes.iter().map(|s| s.num_classes).max().unwrap_or(0);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let model = Model::init(&config.encoder, &mut rng)?;
        let prepared = scenes
            .iter()
            .map(|s| prepare_scene(s, &config, num_classes))
            .collect::<Result<Vec<_>>>()?;
        if prepared[0].point_inputs.ncols() != config.encoder.input_dim
            || prepared[0].pixel_descriptors.ncols() != config.encoder.image_dim
        {
            return Err(Error::InvalidConfig(
                "scene descriptor sizes do not match the encoder".into(),
            ));
        }
        let stats = ClassStatistics::new(num_classes, config.encoder.embed_dim, config.alpha)?;
        let optimizer = OptimizerState::for_model(&model, config.train_image_heads);
        Ok(Self {
            snapshot: vec![None; num_classes],
            config,
            model,
            stats,
            optimizer,
            rng,
            scenes: prepared,
            num_classes,
            step: 0,
            epoch: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn into_model(self) -> Model {
        self.model
    }

    pub fn stats(&self) -> &ClassStatistics {
        &self.stats
    }

    /// Direct access to the EMA statistics, e.g. to inject updates in tests.
    pub fn stats_mut(&mut self) -> &mut ClassStatistics {
        &mut self.stats
    }

    pub fn vmf_snapshot(&self) -> &[Option<VmfParams>] {
        &self.snapshot
    }

    pub fn epochs_completed(&self) -> usize {
        self.epoch
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.scenes.len().div_ceil(self.config.batch_scenes)
    }

    pub fn total_steps(&self) -> usize {
        self.config.epochs * self.steps_per_epoch()
    }

    /// Refreshes the vMF parameters used by every step of the coming epoch.
    pub fn begin_epoch(&mut self) -> Result<()> {
        self.snapshot = self.stats.estimate_all(self.config.kappa_max)?;
        Ok(())
    }

    /// One optimizer step over the scenes with the given indices.
    pub fn step(&mut self, scene_indices: &[usize]) -> Result<StepLosses> {
        let lr = cosine_lr(
            self.step.min(self.total_steps()),
            self.total_steps(),
            self.config.lr0,
        )?;
        let k = self.num_classes;
        let weights = self.config.loss_weights();
        let tau = self.config.tau;

        struct Drawn {
            forward: crate::encoders::PointForward,
            image: crate::encoders::ImageForward,
            labels: Vec<usize>,
        }
        let mut drawn = Vec::with_capacity(scene_indices.len());
        for &s in scene_indices {
            let scene = self
                .scenes
                .get(s)
                .ok_or_else(|| Error::Domain(format!("no scene {s}")))?;
            let m = self.config.m_s.min(scene.pairs.len());
            let idx = draw_pairs(&scene.weights, m, &mut self.rng)?;
            let inputs = scene.point_inputs.select(Axis(0), &idx);
            let pixels = scene.pixel_descriptors.select(Axis(0), &idx);
            let labels: Vec<usize> = idx.iter().map(|&i| scene.weak_labels[i]).collect();
            drawn.push(Drawn {
                forward: self.model.forward_3d(inputs.view())?,
                image: self.model.forward_2d(pixels.view())?,
                labels,
            });
        }

        // stage 1: statistics from this batch's semantic features
        let dim = self.config.encoder.embed_dim;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for d in &drawn {
            let (means, c) = class_means(d.forward.sem.view(), &d.labels, k)?;
            for class in 0..k {
                sums[class]
                    .iter_mut()
                    .zip(&means[class])
                    .for_each(|(s, m)| *s += m * c[class] as f64);
                counts[class] += c[class];
            }
        }
        for (sum, &c) in sums.iter_mut().zip(&counts) {
            if c > 0 {
                sum.iter_mut().for_each(|v| *v /= c as f64);
            }
        }
        self.stats.ema_update(&sums, &counts)?;

        // stage 2: loss against the epoch's parameter snapshot
        let scale = 1.0 / drawn.len() as f64;
        let mut grads = Gradients::zeros_like(&self.model);
        let mut out = StepLosses {
            l_ppnce: 0.0,
            l_sup: 0.0,
            l_kl: 0.0,
            total: 0.0,
            grad_norm: 0.0,
        };
        for d in &drawn {
            let pp = ppnce_loss(&d.forward.pp, &d.image.pp, tau)?;
            let sup = supervised_nce_loss(&d.forward.sem, &d.image.sem, &d.labels, tau)?;
            let kl = kl_vmf_loss(&d.forward.sem, &d.labels, &self.snapshot)?;
            let combined = combined_loss(&pp, &sup, &kl, weights);
            out.l_ppnce += pp.value * scale;
            out.l_sup += sup.value * scale;
            out.l_kl += kl.value * scale;
            out.total += combined.total * scale;
            grads.add_assign(&self.model.backward_3d(
                &d.forward.cache,
                combined.grad_pp.view(),
                combined.grad_sem.view(),
            ));
            if self.config.train_image_heads {
                grads.add_assign(&self.model.backward_2d(
                    &d.image.cache,
                    combined.grad_pp_2d.view(),
                    combined.grad_sem_2d.view(),
                ));
            }
        }
        grads.scale(scale);
        out.grad_norm = grads.l2_norm();
        sgd_step(
            &mut self.model,
            &grads,
            &mut self.optimizer,
            lr,
            self.config.momentum,
            self.config.weight_decay,
        )?;
        self.step += 1;
        Ok(out)
    }

    /// Refresh, one pass over all scenes in order, then epoch metrics.
    pub fn run_epoch(&mut self) -> Result<EpochMetrics> {
        self.begin_epoch()?;
        let lr = cosine_lr(
            self.step.min(self.total_steps()),
            self.total_steps(),
            self.config.lr0,
        )?;
        let indices: Vec<usize> = (0..self.scenes.len()).collect();
        let mut sum = StepLosses {
            l_ppnce: 0.0,
            l_sup: 0.0,
            l_kl: 0.0,
            total: 0.0,
            grad_norm: 0.0,
        };
        let batches: Vec<Vec<usize>> = indices
            .chunks(self.config.batch_scenes)
            .map(|c| c.to_vec())
            .collect();
        for batch in &batches {
            let s = self.step(batch)?;
            sum.l_ppnce += s.l_ppnce;
            sum.l_sup += s.l_sup;
            sum.l_kl += s.l_kl;
            sum.total += s.total;
            sum.grad_norm += s.grad_norm;
        }
        let n = batches.len() as f64;
        let (sigma_w_sq, sigma_b_sq) = self.training_variance()?;
        self.epoch += 1;
        Ok(EpochMetrics {
            epoch: self.epoch,
            l_ppnce: sum.l_ppnce / n,
            l_sup: sum.l_sup / n,
            l_kl: sum.l_kl / n,
            total: sum.total / n,
            lr,
            sigma_w_sq,
            sigma_b_sq,
            grad_norm: sum.grad_norm / n,
            zbar_norms: self.stats.resultant_lengths(),
        })
    }

    /// Within/between-class variance of semantic-head features over every
    /// training pair, grouped by true point labels.
    pub fn training_variance(&self) -> Result<(f64, f64)> {
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for scene in &self.scenes {
            let f = self.model.forward_3d(scene.point_inputs.view())?;
            features.push(f.sem.into_inner());
            labels.extend_from_slice(&scene.true_labels);
        }
        let views: Vec<_> = features.iter().map(|f| f.view()).collect();
        let all =
            ndarray::concatenate(Axis(0), &views).map_err(|e| Error::Domain(e.to_string()))?;
        variance_metrics(all.view(), &labels)
    }
}

/// Trains for `config.epochs`, calling `on_epoch` after each epoch.
pub fn train<F: FnMut(&EpochMetrics) -> Result<()>>(
    config: TrainConfig,
    scenes: &[Scene],
    mut on_epoch: F,
) -> Result<(Model, Vec<EpochMetrics>)> {
    let mut trainer = Trainer::new(config, scenes)?;
    let mut history = Vec::with_capacity(trainer.config.epochs);
    for _ in 0..trainer.config.epochs {
        let m = trainer.run_epoch()?;
        on_epoch(&m)?;
        history.push(m);
    }
    Ok((trainer.into_model(), history))
}

/// Probe results with feature-structure metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSummary {
    pub report: ProbeReport,
    pub sigma_w_sq: f64,
    pub sigma_b_sq: f64,
    pub num_train: usize,
    pub num_test: usize,
}

/// Linear probe on frozen trunk features of camera-visible points.
///
/// Points are pooled across `scenes` in order; even positions fit the probe
/// and odd positions evaluate it. Variance metrics use semantic-head
/// features of all pooled points grouped by true label.
pub fn probe_model(model: &Model, scenes: &[Scene]) -> Result<ProbeSummary> {
    let num_classes = scenes
        .iter()
        .map(|s| s.num_classes)
        .max()
        .ok_or_else(|| Error::Domain("no probe scenes".into()))?;
    let mut trunk = Vec::new();
    let mut sem = Vec::new();
    let mut labels = Vec::new();
    for scene in scenes {
        let pairs = scene.pairs()?;
        let f = model.forward_3d(scene.point_inputs_for(&pairs).view())?;
        trunk.push(f.trunk);
        sem.push(f.sem.into_inner());
        labels.extend(pairs.iter().map(|p| scene.true_labels[p.point_index]));
    }
    let cat = |parts: &[Array2<f64>]| {
        let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
        ndarray::concatenate(Axis(0), &views).map_err(|e| Error::Domain(e.to_string()))
    };
    let trunk = cat(&trunk)?;
    let sem = cat(&sem)?;
    let even: Vec<usize> = (0..labels.len()).step_by(2).collect();
    let odd: Vec<usize> = (1..labels.len()).step_by(2).collect();
    let pick = |idx: &[usize]| idx.iter().map(|&i| labels[i]).collect::<Vec<_>>();
    let report = linear_probe(
        trunk.select(Axis(0), &even).view(),
        &pick(&even),
        trunk.select(Axis(0), &odd).view(),
        &pick(&odd),
        num_classes,
    )?;
    let (sigma_w_sq, sigma_b_sq) = variance_metrics(sem.view(), &labels)?;
    Ok(ProbeSummary {
        report,
        sigma_w_sq,
        sigma_b_sq,
        num_train: even.len(),
        num_test: odd.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::{generate_scene, SceneConfig};

    #[test]
    fn cosine_schedule() {
        assert_eq!(cosine_lr(0, 10, 0.5).unwrap(), 0.5);
        assert!(cosine_lr(10, 10, 0.5).unwrap().abs() < 1e-17);
        assert!((cosine_lr(5, 10, 0.5).unwrap() - 0.25).abs() < 1e-16);
        assert!(cosine_lr(0, 0, 0.5).is_err());
        assert!(cosine_lr(11, 10, 0.5).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig {
                lr0: 0.0,
                ..TrainConfig::default()
            },
            TrainConfig {
                momentum: 1.0,
                ..TrainConfig::default()
            },
            TrainConfig {
                weight_decay: -1.0,
                ..TrainConfig::default()
            },
            TrainConfig {
                lambda2: -0.1,
                ..TrainConfig::default()
            },
            TrainConfig {
                tau: 0.0,
                ..TrainConfig::default()
            },
            TrainConfig {
                alpha: 0.0,
                ..TrainConfig::default()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    fn small_scene(seed: u64) -> Scene {
        generate_scene(&SceneConfig {
            num_points: 800,
            seed,
            ..SceneConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn plain_gradient_descent_and_fixed_point() {
        let model =
            Model::init(&EncoderConfig::default(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let mut grads = Gradients::zeros_like(&model);
        let mut state = OptimizerState::for_model(&model, true);
        let mut m = model.clone();
        sgd_step(&mut m, &grads, &mut state, 0.1, 0.0, 0.0).unwrap();
        assert_eq!(m, model);
        grads.layers[0].weight.fill(2.0);
        sgd_step(&mut m, &grads, &mut state, 0.1, 0.0, 0.0).unwrap();
        let diff = &model.trunk.layers[0].weight - &m.trunk.layers[0].weight;
        assert!(diff.iter().all(|d| (d - 0.2).abs() < 1e-15));
        grads.layers[1].bias[0] = f64::NAN;
        let before = m.clone();
        assert!(matches!(
            sgd_step(&mut m, &grads, &mut state, 0.1, 0.0, 0.0),
            Err(Error::NonFiniteGradient(_))
        ));
        assert_eq!(m, before);
    }

    #[test]
    fn frozen_image_heads_do_not_move() {
        let scenes = [small_scene(1)];
        let config = TrainConfig {
            epochs: 2,
            m_s: 64,
            seed: 3,
            ..TrainConfig::default()
        };
        let mut trainer = Trainer::new(config, &scenes).unwrap();
        let initial = trainer.model().clone();
        trainer.run_epoch().unwrap();
        trainer.run_epoch().unwrap();
        assert_eq!(trainer.model().image_pp_head, initial.image_pp_head);
        assert_eq!(trainer.model().image_sem_head, initial.image_sem_head);
        assert_ne!(trainer.model().trunk, initial.trunk);
    }

    #[test]
    fn epoch_is_deterministic() {
        let scenes = [small_scene(2)];
        let config = TrainConfig {
            epochs: 2,
            m_s: 64,
            seed: 9,
            ..TrainConfig::default()
        };
        let a = train(config.clone(), &scenes, |_| Ok(())).unwrap();
        let b = train(config, &scenes, |_| Ok(())).unwrap();
        assert_eq!(a.1, b.1);
        assert_eq!(a.0, b.0);
    }
}
