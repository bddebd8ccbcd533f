//! Toy point encoder, projection heads, and their manual backward passes.
//!
//! The trunk is a tanh MLP shared by two 3D heads (point-pixel and
//! semantic). Each head is a linear map followed by row-wise l2
//! normalization. Two image heads map per-pixel descriptors into the same
//! embedding space; they are frozen unless training opts in.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::correspondence::PointPixelPair;
use crate::error::{Error, Result};
use crate::losses::FeatureMatrix;
use crate::synthdata::Scene;

/// Affine map `y = x W^T + b` over row batches.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `output x input`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Array2::zeros((output, input)),
            bias: Array1::zeros(output),
        }
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn uniform<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        let weight =
            Array2::from_shape_simple_fn((output, input), || rng.random_range(-bound..=bound));
        let bias = Array1::from_shape_simple_fn(output, || rng.random_range(-bound..=bound));
        Self { weight, bias }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weight.t()) + &self.bias
    }

    /// Gradients of the parameters and of the input, given `dL/dy`.
    fn backward(&self, x: ArrayView2<f64>, grad_out: ArrayView2<f64>) -> (Linear, Array2<f64>) {
        let grads = Linear {
            weight: grad_out.t().dot(&x),
            bias: grad_out.sum_axis(Axis(0)),
        };
        (grads, grad_out.dot(&self.weight))
    }

    pub fn is_finite(&self) -> bool {
        self.weight
            .iter()
            .chain(self.bias.iter())
            .all(|v| v.is_finite())
    }

    pub(crate) fn zeros_like(&self) -> Self {
        Self::zeros(self.input_dim(), self.output_dim())
    }
}

/// Stack of linear layers, each followed by `tanh`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

/// Layer inputs and activations from a forward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    inputs: Vec<Array2<f64>>,
    outputs: Vec<Array2<f64>>,
}

impl Mlp {
    /// `dims = [input, hidden.., output]`.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::InvalidConfig(format!("bad layer sizes {dims:?}")));
        }
        Ok(Self {
            layers: dims
                .windows(2)
                .map(|w| Linear::uniform(w[0], w[1], rng))
                .collect(),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty mlp").output_dim()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> (Array2<f64>, MlpCache) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut current = x.to_owned();
        for layer in &self.layers {
            let y = layer.forward(current.view()).mapv(f64::tanh);
            inputs.push(current);
            outputs.push(y.clone());
            current = y;
        }
        (current, MlpCache { inputs, outputs })
    }

    pub fn backward(
        &self,
        cache: &MlpCache,
        grad_out: ArrayView2<f64>,
    ) -> (Vec<Linear>, Array2<f64>) {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut upstream = grad_out.to_owned();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let y = &cache.outputs[i];
            let pre = &upstream * &y.mapv(|v| 1.0 - v * v);
            let (g, dx) = layer.backward(cache.inputs[i].view(), pre.view());
            grads.push(g);
            upstream = dx;
        }
        grads.reverse();
        (grads, upstream)
    }
}

/// Trunk forward pass.
pub fn encode_3d(params: &Mlp, point_inputs: ArrayView2<f64>) -> Result<(Array2<f64>, MlpCache)> {
    if point_inputs.ncols() != params.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: params.input_dim(),
            got: point_inputs.ncols(),
        });
    }
    Ok(params.forward(point_inputs))
}

/// Linear layer followed by row-wise l2 normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHead {
    pub linear: Linear,
}

#[derive(Debug, Clone)]
pub struct HeadCache {
    input: Array2<f64>,
    norms: Array1<f64>,
    output: Array2<f64>,
}

impl HeadCache {
    pub fn output(&self) -> ArrayView2<'_, f64> {
        self.output.view()
    }
}

pub fn project_and_normalize(
    head: &ProjectionHead,
    features: ArrayView2<f64>,
) -> Result<(FeatureMatrix, HeadCache)> {
    if features.ncols() != head.linear.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: head.linear.input_dim(),
            got: features.ncols(),
        });
    }
    let mut out = head.linear.forward(features);
    let mut norms = Array1::zeros(out.nrows());
    for (i, mut row) in out.outer_iter_mut().enumerate() {
        let n = row.dot(&row).sqrt();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::DegenerateEmbedding { row: i });
        }
        row /= n;
        norms[i] = n;
    }
    let cache = HeadCache {
        input: features.to_owned(),
        norms,
        output: out.clone(),
    };
    Ok((FeatureMatrix::new(out)?, cache))
}

/// Pulls `dL/dghat` back through `ghat = g/||g||`: `(I - ghat ghat^T) u / ||g||`.
pub fn normalization_backward(cache: &HeadCache, upstream: ArrayView2<f64>) -> Array2<f64> {
    let mut out = upstream.to_owned();
    for ((mut row, ghat), &norm) in out
        .outer_iter_mut()
        .zip(cache.output.outer_iter())
        .zip(&cache.norms)
    {
        let radial = row.dot(&ghat);
        row.scaled_add(-radial, &ghat);
        row /= norm;
    }
    out
}

impl ProjectionHead {
    pub fn new(linear: Linear) -> Self {
        Self { linear }
    }

    pub fn backward(&self, cache: &HeadCache, upstream: ArrayView2<f64>) -> (Linear, Array2<f64>) {
        let pre = normalization_backward(cache, upstream);
        self.linear.backward(cache.input.view(), pre.view())
    }
}

/// Layer sizes of the full model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub trunk_dim: usize,
    pub embed_dim: usize,
    pub image_dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            input_dim: 6,
            hidden: vec![32, 32],
            trunk_dim: 16,
            embed_dim: 8,
            image_dim: 16,
        }
    }
}

/// Trunk, two 3D heads, and two image heads.
///
/// Layer order everywhere (gradients, optimizer state, checkpoints): trunk
/// layers, point-pixel head, semantic head, image point-pixel head, image
/// semantic head.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub trunk: Mlp,
    pub pp_head: ProjectionHead,
    pub sem_head: ProjectionHead,
    pub image_pp_head: ProjectionHead,
    pub image_sem_head: ProjectionHead,
}

/// Gradients in [`Model`] layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Linear>,
}

impl Gradients {
    pub fn zeros_like(model: &Model) -> Self {
        Self {
            layers: model.layers().iter().map(|l| l.zeros_like()).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight += &b.weight;
            a.bias += &b.bias;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weight *= factor;
            l.bias *= factor;
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()))
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct PointCache {
    trunk: MlpCache,
    pp: HeadCache,
    sem: HeadCache,
}

/// Outputs of the 3D branch.
#[derive(Debug, Clone)]
pub struct PointForward {
    pub trunk: Array2<f64>,
    pub pp: FeatureMatrix,
    pub sem: FeatureMatrix,
    pub cache: PointCache,
}

#[derive(Debug, Clone)]
pub struct ImageCache {
    pp: HeadCache,
    sem: HeadCache,
}

/// Outputs of the image heads.
#[derive(Debug, Clone)]
pub struct ImageForward {
    pub pp: FeatureMatrix,
    pub sem: FeatureMatrix,
    pub cache: ImageCache,
}

impl Model {
    pub fn init<R: Rng + ?Sized>(config: &EncoderConfig, rng: &mut R) -> Result<Self> {
        let mut dims = vec![config.input_dim];
        dims.extend(&config.hidden);
        dims.push(config.trunk_dim);
        let trunk = Mlp::new(&dims, rng)?;
        if config.embed_dim < 2 || config.image_dim == 0 {
            return Err(Error::InvalidConfig(
                "embedding dim must be >= 2 and image dim >= 1".into(),
            ));
        }
        let head =
            |input, rng: &mut R| ProjectionHead::new(Linear::uniform(input, config.embed_dim, rng));
        let pp_head = head(config.trunk_dim, rng);
        let sem_head = head(config.trunk_dim, rng);
        let image_pp_head = head(config.image_dim, rng);
        let image_sem_head = head(config.image_dim, rng);
        Ok(Self {
            trunk,
            pp_head,
            sem_head,
            image_pp_head,
            image_sem_head,
        })
    }

    /// Rebuilds a model from layers in canonical order (four heads last).
    pub fn from_layers(mut layers: Vec<Linear>) -> Result<Self> {
        if layers.len() < 5 {
            return Err(Error::Format(format!(
                "model needs >= 5 layers, got {}",
                layers.len()
            )));
        }
        let heads = layers.split_off(layers.len() - 4);
        let mut heads = heads.into_iter().map(ProjectionHead::new);
        let model = Self {
            trunk: Mlp { layers },
            pp_head: heads.next().expect("four heads"),
            sem_head: heads.next().expect("four heads"),
            image_pp_head: heads.next().expect("four heads"),
            image_sem_head: heads.next().expect("four heads"),
        };
        model.check_shapes()?;
        Ok(model)
    }

    fn check_shapes(&self) -> Result<()> {
        let trunk_ok = self
            .trunk
            .layers
            .windows(2)
            .all(|w| w[0].output_dim() == w[1].input_dim());
        let t = self.trunk.output_dim();
        let e = self.pp_head.linear.output_dim();
        let heads_ok = self.pp_head.linear.input_dim() == t
            && self.sem_head.linear.input_dim() == t
            && self.sem_head.linear.output_dim() == e
            && self.image_pp_head.linear.output_dim() == e
            && self.image_sem_head.linear.output_dim() == e
            && self.image_pp_head.linear.input_dim() == self.image_sem_head.linear.input_dim();
        let bias_ok = self.layers().iter().all(|l| l.bias.len() == l.output_dim());
        if trunk_ok && heads_ok && bias_ok {
            Ok(())
        } else {
            Err(Error::Format("inconsistent layer shapes".into()))
        }
    }

    pub fn config(&self) -> EncoderConfig {
        let layers = &self.trunk.layers;
        EncoderConfig {
            input_dim: self.trunk.input_dim(),
            hidden: layers[..layers.len() - 1]
                .iter()
                .map(|l| l.output_dim())
                .collect(),
            trunk_dim: self.trunk.output_dim(),
            embed_dim: self.pp_head.linear.output_dim(),
            image_dim: self.image_pp_head.linear.input_dim(),
        }
    }

    pub fn layers(&self) -> Vec<&Linear> {
        let mut v: Vec<&Linear> = self.trunk.layers.iter().collect();
        v.extend([
            &self.pp_head.linear,
            &self.sem_head.linear,
            &self.image_pp_head.linear,
            &self.image_sem_head.linear,
        ]);
        v
    }

    pub fn layers_mut(&mut self) -> Vec<&mut Linear> {
        let mut v: Vec<&mut Linear> = self.trunk.layers.iter_mut().collect();
        v.extend([
            &mut self.pp_head.linear,
            &mut self.sem_head.linear,
            &mut self.image_pp_head.linear,
            &mut self.image_sem_head.linear,
        ]);
        v
    }

    /// Number of 3D-branch layers (trunk plus the two 3D heads).
    pub fn num_point_layers(&self) -> usize {
        self.trunk.layers.len() + 2
    }

    pub fn forward_3d(&self, point_inputs: ArrayView2<f64>) -> Result<PointForward> {
        let (trunk, trunk_cache) = encode_3d(&self.trunk, point_inputs)?;
        let (pp, pp_cache) = project_and_normalize(&self.pp_head, trunk.view())?;
        let (sem, sem_cache) = project_and_normalize(&self.sem_head, trunk.view())?;
        Ok(PointForward {
            trunk,
            pp,
            sem,
            cache: PointCache {
                trunk: trunk_cache,
                pp: pp_cache,
                sem: sem_cache,
            },
        })
    }

    /// Backpropagates per-head upstream gradients; the two head paths sum at
    /// the trunk output. Image-head entries are zero.
    pub fn backward_3d(
        &self,
        cache: &PointCache,
        upstream_pp: ArrayView2<f64>,
        upstream_sem: ArrayView2<f64>,
    ) -> Gradients {
        let (g_pp, d_pp) = self.pp_head.backward(&cache.pp, upstream_pp);
        let (g_sem, d_sem) = self.sem_head.backward(&cache.sem, upstream_sem);
        let trunk_grad = d_pp + d_sem;
        let (mut layers, _) = self.trunk.backward(&cache.trunk, trunk_grad.view());
        layers.push(g_pp);
        layers.push(g_sem);
        layers.push(self.image_pp_head.linear.zeros_like());
        layers.push(self.image_sem_head.linear.zeros_like());
        Gradients { layers }
    }

    pub fn forward_2d(&self, descriptors: ArrayView2<f64>) -> Result<ImageForward> {
        let (pp, pp_cache) = project_and_normalize(&self.image_pp_head, descriptors)?;
        let (sem, sem_cache) = project_and_normalize(&self.image_sem_head, descriptors)?;
        Ok(ImageForward {
            pp,
            sem,
            cache: ImageCache {
                pp: pp_cache,
                sem: sem_cache,
            },
        })
    }

    /// Image-head gradients; all 3D-branch entries are zero.
    pub fn backward_2d(
        &self,
        cache: &ImageCache,
        upstream_pp: ArrayView2<f64>,
        upstream_sem: ArrayView2<f64>,
    ) -> Gradients {
        let (g_pp, _) = self.image_pp_head.backward(&cache.pp, upstream_pp);
        let (g_sem, _) = self.image_sem_head.backward(&cache.sem, upstream_sem);
        let mut grads = Gradients::zeros_like(self);
        let n = grads.layers.len();
        grads.layers[n - 2] = g_pp;
        grads.layers[n - 1] = g_sem;
        grads
    }

    pub fn is_finite(&self) -> bool {
        self.layers().iter().all(|l| l.is_finite())
    }
}

/// Per-pair image embeddings: descriptor lookup through the image heads.
pub fn image_features(
    scene: &Scene,
    pairs: &[PointPixelPair],
    model: &Model,
) -> Result<ImageForward> {
    let descriptors = scene.pixel_descriptors_for(pairs)?;
    model.forward_2d(descriptors.view())
}
