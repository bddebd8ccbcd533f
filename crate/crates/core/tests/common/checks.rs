//! Drives the crate against the oracles in the parent module. Each function
//! returns the measured quantity; callers decide the tolerance.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use vmfd::bessel::log_bessel_i;
use vmfd::correspondence::PointPixelPair;
use vmfd::losses::{ppnce_similarity_grad, supervised_similarity_grad};
use vmfd::sampling::compute_weights_with;
use vmfd::{
    combined_loss, draw_pairs, estimate_params, kl_vmf_loss, log_norm_const, ppnce_loss,
    sample_vmf, supervised_nce_loss, DensityModel, EncoderConfig, FeatureMatrix, Gradients,
    LossWeights, Model, SamplingMode, SamplingWeights, Scene, UnitVector, VmfParams,
};

use super::*;

pub const FD_STEP: f64 = 1e-6;

fn raw(m: Array2<f64>) -> FeatureMatrix {
    FeatureMatrix::new_unchecked(m)
}

fn split(params: &[f64], m: usize, c: usize) -> (Array2<f64>, Array2<f64>) {
    let a = Array2::from_shape_vec((m, c), params[..m * c].to_vec()).expect("shape");
    let b = Array2::from_shape_vec((m, c), params[m * c..].to_vec()).expect("shape");
    (a, b)
}

fn concat(a: &Array2<f64>, b: &Array2<f64>) -> Vec<f64> {
    a.iter().chain(b.iter()).copied().collect()
}

struct PairInstance {
    m: usize,
    c: usize,
    x3: Array2<f64>,
    x2: Array2<f64>,
    labels: Vec<usize>,
    tau: f64,
}

fn pair_instance(seed: u64) -> PairInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.random_range(2..=10);
    let c = rng.random_range(2..=8);
    let k = rng.random_range(1..=4);
    PairInstance {
        m,
        c,
        x3: random_unit_rows(&mut rng, m, c),
        x2: random_unit_rows(&mut rng, m, c),
        labels: (0..m).map(|_| rng.random_range(0..k)).collect(),
        tau: rng.random_range(0.07..1.0),
    }
}

/// Normwise relative error of the point-pixel loss gradient.
pub fn ppnce_gradient_error(seed: u64) -> f64 {
    let inst = pair_instance(seed);
    let out = ppnce_loss(&raw(inst.x3.clone()), &raw(inst.x2.clone()), inst.tau).unwrap();
    let f = |p: &[f64]| {
        let (a, b) = split(p, inst.m, inst.c);
        ppnce_loss(&raw(a), &raw(b), inst.tau).unwrap().value
    };
    let fd = central_difference(f, &concat(&inst.x3, &inst.x2), FD_STEP);
    relative_error(&concat(&out.grad_3d, &out.grad_2d), &fd)
}

/// Normwise relative error of the label-supervised loss gradient.
pub fn sup_gradient_error(seed: u64) -> f64 {
    let inst = pair_instance(seed);
    let labels = &inst.labels;
    let out = supervised_nce_loss(
        &raw(inst.x3.clone()),
        &raw(inst.x2.clone()),
        labels,
        inst.tau,
    )
    .unwrap();
    let f = |p: &[f64]| {
        let (a, b) = split(p, inst.m, inst.c);
        supervised_nce_loss(&raw(a), &raw(b), labels, inst.tau)
            .unwrap()
            .value
    };
    let fd = central_difference(f, &concat(&inst.x3, &inst.x2), FD_STEP);
    relative_error(&concat(&out.grad_3d, &out.grad_2d), &fd)
}

fn random_class_params<R: Rng>(rng: &mut R, k: usize, dim: usize) -> Vec<Option<VmfParams>> {
    (0..k)
        .map(|_| {
            rng.random_bool(0.8).then(|| {
                let mu = UnitVector::new(random_unit_vector(rng, dim)).unwrap();
                VmfParams::new(mu, rng.random_range(0.0..60.0)).unwrap()
            })
        })
        .collect()
}

/// Normwise relative error of the vMF likelihood loss gradient.
pub fn kl_gradient_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.random_range(1..=10);
    let c = rng.random_range(2..=8);
    let k = rng.random_range(1..=4);
    let g = random_unit_rows(&mut rng, m, c);
    let labels: Vec<usize> = (0..m).map(|_| rng.random_range(0..k)).collect();
    let params = random_class_params(&mut rng, k, c);
    let out = kl_vmf_loss(&raw(g.clone()), &labels, &params).unwrap();
    let f = |p: &[f64]| {
        let a = Array2::from_shape_vec((m, c), p.to_vec()).unwrap();
        kl_vmf_loss(&raw(a), &labels, &params).unwrap().value
    };
    let fd = central_difference(f, g.as_slice().unwrap(), FD_STEP);
    relative_error(out.grad_3d.as_slice().unwrap(), &fd)
}

fn flatten(model: &Model) -> Vec<f64> {
    model
        .layers()
        .iter()
        .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
        .collect()
}

fn unflatten(model: &mut Model, params: &[f64]) {
    let mut it = params.iter();
    for layer in model.layers_mut() {
        layer
            .weight
            .iter_mut()
            .chain(layer.bias.iter_mut())
            .for_each(|w| *w = *it.next().expect("enough parameters"));
    }
}

fn flatten_grads(grads: &Gradients) -> Vec<f64> {
    grads
        .layers
        .iter()
        .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
        .collect()
}

struct Composite {
    inputs: Array2<f64>,
    descriptors: Array2<f64>,
    labels: Vec<usize>,
    params: Vec<Option<VmfParams>>,
    tau: f64,
    weights: LossWeights,
}

impl Composite {
    fn loss(&self, model: &Model) -> (f64, Gradients) {
        let pt = model.forward_3d(self.inputs.view()).unwrap();
        let img = model.forward_2d(self.descriptors.view()).unwrap();
        let pp = ppnce_loss(&pt.pp, &img.pp, self.tau).unwrap();
        let sup = supervised_nce_loss(&pt.sem, &img.sem, &self.labels, self.tau).unwrap();
        let kl = kl_vmf_loss(&pt.sem, &self.labels, &self.params).unwrap();
        let total = combined_loss(&pp, &sup, &kl, self.weights);
        let mut grads = model.backward_3d(&pt.cache, total.grad_pp.view(), total.grad_sem.view());
        grads.add_assign(&model.backward_2d(
            &img.cache,
            total.grad_pp_2d.view(),
            total.grad_sem_2d.view(),
        ));
        (total.total, grads)
    }
}

fn normal_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

/// Normwise relative error of the full-model gradient (trunk, both 3D heads
/// and both image heads) under the weighted objective.
pub fn composite_gradient_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = EncoderConfig::default();
    let model = Model::init(&config, &mut rng).unwrap();
    let m = rng.random_range(2..=6);
    let k = 3;
    let inst = Composite {
        inputs: normal_matrix(&mut rng, m, config.input_dim),
        descriptors: normal_matrix(&mut rng, m, config.image_dim),
        labels: (0..m).map(|_| rng.random_range(0..k)).collect(),
        params: random_class_params(&mut rng, k, config.embed_dim),
        tau: rng.random_range(0.07..0.5),
        weights: LossWeights {
            ppnce: rng.random_range(0.1..2.0),
            sup: rng.random_range(0.1..2.0),
            kl: rng.random_range(0.1..2.0),
        },
    };
    let (_, grads) = inst.loss(&model);
    let theta = flatten(&model);
    let probe = std::cell::RefCell::new(model);
    let g = |p: &[f64]| {
        let mut m = probe.borrow_mut();
        unflatten(&mut m, p);
        inst.loss(&m).0
    };
    let fd = central_difference(g, &theta, FD_STEP);
    relative_error(&flatten_grads(&grads), &fd)
}

/// `(|L_sup - L_ppnce|, max gradient gap)` on an instance with distinct labels.
pub fn reduction_gap(seed: u64) -> (f64, f64) {
    let mut inst = pair_instance(seed);
    inst.labels = (0..inst.m).collect();
    let a = FeatureMatrix::new(inst.x3).unwrap();
    let b = FeatureMatrix::new(inst.x2).unwrap();
    let pp = ppnce_loss(&a, &b, inst.tau).unwrap();
    let sup = supervised_nce_loss(&a, &b, &inst.labels, inst.tau).unwrap();
    let grad_gap = (&pp.grad_3d - &sup.grad_3d)
        .iter()
        .chain((&pp.grad_2d - &sup.grad_2d).iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    ((pp.value - sup.value).abs(), grad_gap)
}

/// `(dL_sup/ds_01, dL_ppnce/ds_01)` for two same-class, non-corresponding
/// pairs 0 and 1 next to a pair of another class.
pub fn self_conflict_gradients() -> (f64, f64) {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let g3 = FeatureMatrix::new(ndarray::array![
        [1.0, 0.0, 0.0],
        [s, s, 0.0],
        [0.0, 0.0, 1.0]
    ])
    .unwrap();
    let g2 =
        FeatureMatrix::new(ndarray::array![[s, 0.0, s], [0.0, 1.0, 0.0], [0.0, s, s]]).unwrap();
    let labels = [0, 0, 1];
    let sup = supervised_similarity_grad(&g3, &g2, &labels, 0.1).unwrap();
    let pp = ppnce_similarity_grad(&g3, &g2, 0.1).unwrap();
    (sup.grad[[0, 1]], pp.grad[[0, 1]])
}

/// Largest `|ln I - reference|` over the 40-digit table, split into
/// `(x <= 50, x > 50)`.
pub fn bessel_table_errors() -> (f64, f64) {
    let (mut near, mut far) = (0.0f64, 0.0f64);
    for &(order, x, expected) in LOG_BESSEL_REFERENCE {
        let err = (log_bessel_i(order, x).unwrap() - expected).abs();
        if x <= 50.0 {
            near = near.max(err);
        } else {
            far = far.max(err);
        }
    }
    (near, far)
}

/// Largest relative error of `exp(ln I)` against the series oracle over
/// `n` seeded points in `[0, 50]` for each order.
pub fn bessel_series_error(orders: &[f64], n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for &order in orders {
        for _ in 0..n {
            let x = rng.random_range(0.0..=50.0);
            let got = log_bessel_i(order, x).unwrap();
            let want = series_log_bessel(order, x);
            worst = worst.max((got - want).exp_m1().abs());
        }
    }
    worst
}

/// Relative error of `K_3(kappa)` against `kappa / (4 pi sinh kappa)`.
pub fn c3_normalizer_error(kappa: f64) -> f64 {
    let closed = kappa / (4.0 * std::f64::consts::PI * kappa.sinh());
    (log_norm_const(3, kappa).unwrap().exp() - closed).abs() / closed
}

/// `|kappa_sra - kappa*| / kappa*` where `kappa*` solves `A_C(kappa) = r`.
pub fn sra_relative_error(r: f64, dim: usize) -> f64 {
    let mut zbar = vec![0.0; dim];
    zbar[0] = r;
    let est = estimate_params(&zbar).unwrap().params.kappa;
    let exact = bisection_kappa(r, dim);
    (est - exact).abs() / exact
}

pub struct Recovery {
    pub angle_degrees: f64,
    /// Against the concentration the samples were drawn with.
    pub kappa_error_true: f64,
    /// Against the exact likelihood root for the observed resultant length.
    pub kappa_error_mle: f64,
}

pub fn vmf_recovery(seed: u64, dim: usize, kappa: f64, n: usize) -> Recovery {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mu = random_unit_vector(&mut rng, dim);
    let params = VmfParams::new(UnitVector::new(mu.clone()).unwrap(), kappa).unwrap();
    let samples = sample_vmf(&params, n, &mut rng);
    let mut zbar = vec![0.0; dim];
    for z in &samples {
        zbar.iter_mut()
            .zip(z.as_slice())
            .for_each(|(a, b)| *a += b / n as f64);
    }
    let est = estimate_params(&zbar).unwrap();
    let mle = bisection_kappa(est.resultant, dim);
    Recovery {
        angle_degrees: angle_degrees(est.params.mu.as_slice(), &mu),
        kappa_error_true: (est.params.kappa - kappa).abs() / kappa,
        kappa_error_mle: (est.params.kappa - mle).abs() / mle,
    }
}

/// Random candidate pairs with distances in `[2, 60)` m and imbalanced labels.
pub fn random_pairs(seed: u64, m: usize, k: usize) -> Vec<PointPixelPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..m)
        .map(|i| PointPixelPair {
            point_index: i,
            camera: 0,
            pixel: [0, 0],
            weak_label: (rng.random::<f64>().powi(2) * k as f64) as usize,
            distance: rng.random_range(2.0..60.0),
        })
        .collect()
}

/// Direct evaluation of `1 / (f_h(d_i) |A(i)|)`, normalized.
pub fn brute_force_dcas(pairs: &[PointPixelPair], h: f64) -> Vec<f64> {
    let m = pairs.len() as f64;
    let raw: Vec<f64> = pairs
        .iter()
        .map(|p| {
            let f = pairs
                .iter()
                .map(|q| {
                    let u = (p.distance - q.distance) / h;
                    (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt()
                })
                .sum::<f64>()
                / (m * h);
            let count = pairs
                .iter()
                .filter(|q| q.weak_label == p.weak_label)
                .count();
            1.0 / (f * count as f64)
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

pub struct Calibration {
    pub statistic: f64,
    pub threshold: f64,
    pub weight_error: f64,
}

/// Single-pair draws repeated `draws` times against the DCAS weights.
pub fn dcas_calibration(seed: u64, draws: usize) -> Calibration {
    let pairs = random_pairs(seed, 12, 4);
    let h = 5.0;
    let k = pairs.iter().map(|p| p.weak_label).max().unwrap() + 1;
    let density = DensityModel::new(pairs.iter().map(|p| p.distance).collect(), h).unwrap();
    let weights = compute_weights_with(&pairs, &density, k, SamplingMode::Dcas).unwrap();
    let expected = brute_force_dcas(&pairs, h);
    let weight_error = weights
        .weights()
        .iter()
        .zip(&expected)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs() / b));
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut counts = vec![0usize; pairs.len()];
    for _ in 0..draws {
        counts[draw_pairs(&weights, 1, &mut rng).unwrap()[0]] += 1;
    }
    Calibration {
        statistic: chi_square_statistic(&counts, weights.weights(), draws),
        threshold: chi_square_99(pairs.len() - 1),
        weight_error,
    }
}

/// Variance across classes of the probability that one draw lands in each
/// class present among the scene's pairs.
pub fn class_mass_variance(scene: &Scene, mode: SamplingMode) -> f64 {
    let pairs = scene.pairs().unwrap();
    let density = DensityModel::silverman(pairs.iter().map(|p| p.distance).collect()).unwrap();
    let weights: SamplingWeights =
        compute_weights_with(&pairs, &density, scene.num_classes, mode).unwrap();
    let mut mass = vec![0.0; scene.num_classes];
    for (p, w) in pairs.iter().zip(weights.weights()) {
        mass[p.weak_label] += w;
    }
    let present: Vec<f64> = mass
        .into_iter()
        .zip(weights.category_counts())
        .filter(|(_, &c)| c > 0)
        .map(|(m, _)| m)
        .collect();
    let mean = present.iter().sum::<f64>() / present.len() as f64;
    present.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / present.len() as f64
}
