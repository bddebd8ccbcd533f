//! Image-to-point-cloud contrastive distillation with von Mises-Fisher
//! class statistics, at desk scale.
//!
//! The crate covers the numerical pieces (log-Bessel functions, vMF
//! estimation, contrastive and vMF losses with analytic gradients,
//! density/category-aware pair sampling), a small trainable point encoder,
//! a synthetic scene generator, and the training and probing loops built
//! from them.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bessel;
pub mod checkpoint;
pub mod config;
pub mod correspondence;
pub mod encoders;
pub mod error;
pub mod losses;
pub mod probe;
pub mod sampling;
pub mod scene_io;
pub mod synthdata;
pub mod trainer;
pub mod vmf;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use config::{ConfigFile, DatasetConfig};
pub use correspondence::{project_points, project_points_multi, CameraModel, PointPixelPair};
pub use encoders::{EncoderConfig, Gradients, Model};
pub use error::{Error, Result};
pub use losses::{
    combined_loss, kl_vmf_loss, ppnce_loss, supervised_nce_loss, CombinedLoss, FeatureMatrix,
    LossOutput, LossWeights,
};
pub use probe::{linear_probe, variance_metrics, LinearProbe, ProbeReport};
pub use sampling::{
    compute_weights, draw_pairs, kde_density, DensityModel, SamplingMode, SamplingWeights,
};
pub use scene_io::{load_scene, save_scene};
pub use synthdata::{generate_scene, Scene, SceneConfig};
pub use trainer::{
    cosine_lr, probe_model, sgd_step, train, EpochMetrics, OptimizerState, TrainConfig, Trainer,
};
pub use vmf::{
    estimate_params, log_norm_const, sample_vmf, ClassStatistics, UnitVector, VmfParams,
};
