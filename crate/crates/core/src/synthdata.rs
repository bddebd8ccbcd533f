//! Deterministic synthetic LiDAR + camera scenes.
//!
//! The world is split into azimuth slots. Slots come in four blocks of
//! `K` slots spanning 90 degrees each, and every block holds each class once
//! (a fixed permutation drawn from `layout_seed`). A point's class is the
//! class of its slot; points are placed by first drawing the class from the
//! configured frequencies, then a slot of that class, then azimuth, range
//! (truncated exponential, dense near the sensor), and height.
//!
//! Point descriptors are `[x/20, y/20, z/2]` plus a noisy 3-d class
//! prototype. Pixel descriptors are a noisy class prototype of the pixel's
//! ground-truth class followed by Fourier features of the pixel position.
//! Weak labels are the ground-truth pixel labels with uniform random flips.

use ndarray::{s, Array2, Array3};
use rand::distr::weighted::WeightedIndex;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use crate::correspondence::{project_points_multi, CameraModel, PointPixelPair};
use crate::error::{Error, Result};

pub const POINT_DESCRIPTOR_DIM: usize = 6;
pub const GEOMETRY_SIGNAL_DIM: usize = 3;
pub const PIXEL_SEMANTIC_DIM: usize = 8;
pub const PIXEL_POSITION_DIM: usize = 8;
pub const PIXEL_DESCRIPTOR_DIM: usize = PIXEL_SEMANTIC_DIM + PIXEL_POSITION_DIM;
/// Horizontal coordinates are divided by this before entering descriptors.
const COORD_SCALE: f64 = 20.0;
const HEIGHT_SCALE: f64 = 2.0;
const HEIGHT_RANGE: (f64, f64) = (-1.6, 1.0);
const CAMERA_HEIGHT: f64 = 0.2;
const MAX_CAMERAS: usize = 4;
const LAYOUT_BLOCKS: usize = 4;
const CAMERA_YAWS: [f64; MAX_CAMERAS] = [0.0, PI, FRAC_PI_2, -FRAC_PI_2];

/// Default class mix: a 37.66% majority and a 1.47% minority class.
pub const DEFAULT_FREQUENCIES: [f64; 6] = [0.3766, 0.25, 0.15, 0.12, 0.0887, 0.0147];

/// Truncated exponential over horizontal range, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeProfile {
    pub min: f64,
    pub max: f64,
    /// Decay length; smaller means more points near the sensor.
    pub scale: f64,
}

impl Default for RangeProfile {
    fn default() -> Self {
        Self {
            min: 2.0,
            max: 60.0,
            scale: 15.0,
        }
    }
}

impl RangeProfile {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let span = 1.0 - (-(self.max - self.min) / self.scale).exp();
        (self.min - self.scale * (1.0 - u * span).ln()).min(self.max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub num_points: usize,
    pub num_classes: usize,
    pub class_frequencies: Vec<f64>,
    pub range_profile: RangeProfile,
    pub label_noise_rate: f64,
    pub descriptor_noise: f64,
    /// Amplitude of the class prototype inside point descriptors.
    pub point_signal: f64,
    pub seed: u64,
    /// Seeds the class layout and prototypes shared by every scene of a dataset.
    pub layout_seed: u64,
    pub image_width: usize,
    pub image_height: usize,
    pub num_cameras: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            num_points: 4096,
            num_classes: DEFAULT_FREQUENCIES.len(),
            class_frequencies: DEFAULT_FREQUENCIES.to_vec(),
            range_profile: RangeProfile::default(),
            label_noise_rate: 0.1,
            descriptor_noise: 0.8,
            point_signal: 0.5,
            seed: 0,
            layout_seed: 2024,
            image_width: 96,
            image_height: 64,
            num_cameras: 2,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let k = self.num_classes;
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if k < 2 {
            return bad(format!("need at least 2 classes, got {k}"));
        }
        if k > 2 * GEOMETRY_SIGNAL_DIM {
            return bad(format!(
                "at most {} classes supported, got {k}",
                2 * GEOMETRY_SIGNAL_DIM
            ));
        }
        if k > self.num_points {
            return bad(format!(
                "{k} classes cannot fit in {} points",
                self.num_points
            ));
        }
        if self.class_frequencies.len() != k {
            return bad(format!(
                "{} class frequencies for {k} classes",
                self.class_frequencies.len()
            ));
        }
        if self.class_frequencies.iter().any(|f| !(*f > 0.0)) {
            return bad("class frequencies must be positive".into());
        }
        let total: f64 = self.class_frequencies.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("class frequencies sum to {total}, expected 1"));
        }
        if !(0.0..1.0).contains(&self.label_noise_rate) {
            return bad(format!(
                "label noise rate must lie in [0, 1), got {}",
                self.label_noise_rate
            ));
        }
        if !(self.point_signal >= 0.0 && self.point_signal.is_finite()) {
            return bad(format!(
                "point signal must be >= 0, got {}",
                self.point_signal
            ));
        }
        if !(self.descriptor_noise >= 0.0) || !self.descriptor_noise.is_finite() {
            return bad(format!(
                "descriptor noise must be >= 0, got {}",
                self.descriptor_noise
            ));
        }
        let r = &self.range_profile;
        if !(r.min > 0.0 && r.max > r.min && r.scale > 0.0) {
            return bad(format!("bad range profile {r:?}"));
        }
        if self.image_width < 2 || self.image_height < 2 {
            return bad("image must be at least 2x2".into());
        }
        if self.num_cameras == 0 || self.num_cameras > MAX_CAMERAS {
            return bad(format!(
                "camera count must be in 1..={MAX_CAMERAS}, got {}",
                self.num_cameras
            ));
        }
        Ok(())
    }
}

/// One camera and its per-pixel data, all indexed `[row, column]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraView {
    pub camera: CameraModel,
    /// `height x width x PIXEL_DESCRIPTOR_DIM`.
    pub descriptors: Array3<f64>,
    pub weak_labels: Array2<usize>,
    pub true_labels: Array2<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub num_classes: usize,
    pub points: Vec<[f64; 3]>,
    /// `N x POINT_DESCRIPTOR_DIM`.
    pub point_descriptors: Array2<f64>,
    pub true_labels: Vec<usize>,
    pub views: Vec<CameraView>,
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        let n = self.points.len();
        if self.point_descriptors.nrows() != n || self.true_labels.len() != n {
            return Err(Error::Format("point arrays disagree in length".into()));
        }
        if self.true_labels.iter().any(|&l| l >= self.num_classes) {
            return Err(Error::Format("point label out of range".into()));
        }
        let finite = self
            .points
            .iter()
            .flatten()
            .chain(self.point_descriptors.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Format("non-finite point data".into()));
        }
        for view in &self.views {
            let (h, w) = (view.camera.height(), view.camera.width());
            if view.descriptors.dim().0 != h
                || view.descriptors.dim().1 != w
                || view.weak_labels.dim() != (h, w)
                || view.true_labels.dim() != (h, w)
            {
                return Err(Error::Format(
                    "view arrays disagree with camera size".into(),
                ));
            }
            if view
                .weak_labels
                .iter()
                .chain(view.true_labels.iter())
                .any(|&l| l >= self.num_classes)
            {
                return Err(Error::Format("pixel label out of range".into()));
            }
            if !view.descriptors.iter().all(|v| v.is_finite()) {
                return Err(Error::Format("non-finite pixel descriptor".into()));
            }
        }
        Ok(())
    }

    pub fn cameras(&self) -> Vec<CameraModel> {
        self.views.iter().map(|v| v.camera.clone()).collect()
    }

    /// All point-pixel pairs, labelled with the weak label image.
    pub fn pairs(&self) -> Result<Vec<PointPixelPair>> {
        let labels: Vec<Array2<usize>> = self.views.iter().map(|v| v.weak_labels.clone()).collect();
        project_points_multi(&self.points, &self.cameras(), &labels)
    }

    pub fn point_inputs_for(&self, pairs: &[PointPixelPair]) -> Array2<f64> {
        let idx: Vec<usize> = pairs.iter().map(|p| p.point_index).collect();
        self.point_descriptors.select(ndarray::Axis(0), &idx)
    }

    pub fn pixel_descriptors_for(&self, pairs: &[PointPixelPair]) -> Result<Array2<f64>> {
        let dim = self.views.first().map_or(0, |v| v.descriptors.dim().2);
        let mut out = Array2::zeros((pairs.len(), dim));
        for (row, p) in pairs.iter().enumerate() {
            let view = self.views.get(p.camera).ok_or_else(|| {
                Error::Domain(format!(
                    "pair references camera {} of {}",
                    p.camera,
                    self.views.len()
                ))
            })?;
            let [u, v] = p.pixel;
            if u >= view.camera.width() || v >= view.camera.height() {
                return Err(Error::Domain(format!("pixel ({u}, {v}) outside the image")));
            }
            out.row_mut(row)
                .assign(&view.descriptors.slice(s![v, u, ..]));
        }
        Ok(out)
    }
}

/// Fixed per-dataset structure: slot classes and class prototypes.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    /// Class of each slot; `LAYOUT_BLOCKS * K` slots starting at azimuth `-45` degrees.
    pub slot_classes: Vec<usize>,
    pub point_prototypes: Vec<Vec<f64>>,
    pub pixel_prototypes: Vec<Vec<f64>>,
}

impl Layout {
    pub fn new(num_classes: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut slot_classes = Vec::with_capacity(LAYOUT_BLOCKS * num_classes);
        for _ in 0..LAYOUT_BLOCKS {
            let mut block: Vec<usize> = (0..num_classes).collect();
            block.shuffle(&mut rng);
            slot_classes.extend(block);
        }
        let point_prototypes = class_prototypes(num_classes, GEOMETRY_SIGNAL_DIM, &mut rng)?;
        let pixel_prototypes = class_prototypes(num_classes, PIXEL_SEMANTIC_DIM, &mut rng)?;
        Ok(Self {
            slot_classes,
            point_prototypes,
            pixel_prototypes,
        })
    }

    fn slot_width(&self) -> f64 {
        2.0 * PI / self.slot_classes.len() as f64
    }

    /// Class at azimuth `phi` (radians).
    pub fn class_at(&self, phi: f64) -> usize {
        let offset = (phi + FRAC_PI_4).rem_euclid(2.0 * PI);
        let slot = ((offset / self.slot_width()) as usize).min(self.slot_classes.len() - 1);
        self.slot_classes[slot]
    }

    fn slots_of(&self, class: usize) -> Vec<usize> {
        (0..self.slot_classes.len())
            .filter(|&s| self.slot_classes[s] == class)
            .collect()
    }
}

/// `K` unit vectors in `dim` dimensions with pairwise angles of at least 60 degrees:
/// signed vectors of a random orthonormal basis, slightly perturbed.
pub fn class_prototypes<R: Rng + ?Sized>(
    k: usize,
    dim: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    if k > 2 * dim {
        return Err(Error::InvalidConfig(format!(
            "cannot place {k} prototypes in {dim} dimensions"
        )));
    }
    for _ in 0..100 {
        let basis = random_orthonormal_basis(dim, rng);
        let protos: Vec<Vec<f64>> = (0..k)
            .map(|i| {
                let sign = if i < dim { 1.0 } else { -1.0 };
                let mut v: Vec<f64> = basis[i % dim]
                    .iter()
                    .map(|&b| sign * b + 0.1 * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.iter_mut().for_each(|x| *x /= n);
                v
            })
            .collect();
        let separated = (0..k).all(|i| {
            (i + 1..k).all(|j| {
                protos[i]
                    .iter()
                    .zip(&protos[j])
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    <= 0.5
            })
        });
        if separated {
            return Ok(protos);
        }
    }
    Err(Error::InvalidConfig(
        "failed to separate class prototypes".into(),
    ))
}

fn random_orthonormal_basis<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(dim);
    while basis.len() < dim {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        for b in &basis {
            let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            v.iter_mut().for_each(|x| *x /= n);
            basis.push(v);
        }
    }
    basis
}

fn horizontal_cameras(config: &SceneConfig) -> Result<Vec<CameraModel>> {
    let focal = 0.5 * config.image_width as f64;
    CAMERA_YAWS[..config.num_cameras]
        .iter()
        .map(|&yaw| {
            CameraModel::horizontal(
                yaw,
                [0.0, 0.0, CAMERA_HEIGHT],
                focal,
                config.image_width,
                config.image_height,
            )
        })
        .collect()
}

fn position_features(u: usize, v: usize, width: usize, height: usize) -> [f64; PIXEL_POSITION_DIM] {
    let x = (u as f64 + 0.5) / width as f64;
    let y = (v as f64 + 0.5) / height as f64;
    let mut out = [0.0; PIXEL_POSITION_DIM];
    for (i, freq) in [1.0, 2.0].iter().enumerate() {
        out[4 * i] = (PI * freq * x).sin();
        out[4 * i + 1] = (PI * freq * x).cos();
        out[4 * i + 2] = (PI * freq * y).sin();
        out[4 * i + 3] = (PI * freq * y).cos();
    }
    out
}

pub fn generate_scene(config: &SceneConfig) -> Result<Scene> {
    config.validate()?;
    let layout = Layout::new(config.num_classes, config.layout_seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let k = config.num_classes;
    let n = config.num_points;
    let noise = config.descriptor_noise;
    let class_dist = WeightedIndex::new(&config.class_frequencies)
        .map_err(|e| Error::InvalidConfig(format!("class frequencies: {e}")))?;
    let slots: Vec<Vec<usize>> = (0..k).map(|c| layout.slots_of(c)).collect();
    let slot_width = layout.slot_width();

    let mut points = Vec::with_capacity(n);
    let mut true_labels = Vec::with_capacity(n);
    let mut point_descriptors = Array2::zeros((n, POINT_DESCRIPTOR_DIM));
    for i in 0..n {
        let class = class_dist.sample(&mut rng);
        let slot = slots[class][rng.random_range(0..slots[class].len())];
        // stay clear of slot edges so the slot class is unambiguous
        let phi = -FRAC_PI_4 + slot_width * (slot as f64 + rng.random_range(0.02..0.98));
        let r = config.range_profile.sample(&mut rng);
        let z = rng.random_range(HEIGHT_RANGE.0..HEIGHT_RANGE.1);
        let p = [r * phi.cos(), r * phi.sin(), z];
        let mut row = point_descriptors.row_mut(i);
        row[0] = p[0] / COORD_SCALE;
        row[1] = p[1] / COORD_SCALE;
        row[2] = p[2] / HEIGHT_SCALE;
        for d in 0..GEOMETRY_SIGNAL_DIM {
            row[3 + d] = config.point_signal * layout.point_prototypes[class][d]
                + noise * rng.sample::<f64, _>(StandardNormal);
        }
        points.push(p);
        true_labels.push(class);
    }

    let mut views = Vec::with_capacity(config.num_cameras);
    for camera in horizontal_cameras(config)? {
        let (w, h) = (camera.width(), camera.height());
        let mut descriptors = Array3::zeros((h, w, PIXEL_DESCRIPTOR_DIM));
        let mut weak = Array2::zeros((h, w));
        let mut truth = Array2::zeros((h, w));
        for v in 0..h {
            for u in 0..w {
                let ray = camera.back_project(u as f64, v as f64, 1.0);
                let dir = camera.to_lidar(ray);
                let phi = dir[1].atan2(dir[0]);
                let class = layout.class_at(phi);
                truth[[v, u]] = class;
                weak[[v, u]] = if rng.random::<f64>() < config.label_noise_rate {
                    let other = rng.random_range(0..k - 1);
                    if other >= class {
                        other + 1
                    } else {
                        other
                    }
                } else {
                    class
                };
                let mut cell = descriptors.slice_mut(s![v, u, ..]);
                for d in 0..PIXEL_SEMANTIC_DIM {
                    cell[d] = layout.pixel_prototypes[class][d]
                        + noise * rng.sample::<f64, _>(StandardNormal);
                }
                for (d, f) in position_features(u, v, w, h).into_iter().enumerate() {
                    cell[PIXEL_SEMANTIC_DIM + d] = f;
                }
            }
        }
        views.push(CameraView {
            camera,
            descriptors,
            weak_labels: weak,
            true_labels: truth,
        });
    }

    let scene = Scene {
        num_classes: k,
        points,
        point_descriptors,
        true_labels,
        views,
    };
    scene.validate()?;
    Ok(scene)
}
