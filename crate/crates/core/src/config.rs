//! Flat `key = value` configuration files.
//!
//! Keys carry a section prefix (`scene.`, `train.`, `sample.`). Blank lines
//! and `#` comments are ignored. Unknown keys and duplicates are errors.

use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::encoders::EncoderConfig;
use crate::error::{Error, Result};
use crate::sampling::KernelScaling;
use crate::synthdata::{RangeProfile, SceneConfig};
use crate::trainer::{BandwidthMode, TrainConfig};

pub const SCENE_KEYS: &[&str] = &[
    "scene.seed",
    "scene.layout_seed",
    "scene.num_points",
    "scene.num_classes",
    "scene.class_frequencies",
    "scene.range_min",
    "scene.range_max",
    "scene.range_scale",
    "scene.label_noise_rate",
    "scene.descriptor_noise",
    "scene.point_signal",
    "scene.image_width",
    "scene.image_height",
    "scene.num_cameras",
    "scene.train_scenes",
    "scene.probe_scenes",
];

pub const TRAIN_KEYS: &[&str] = &[
    "train.seed",
    "train.epochs",
    "train.batch_scenes",
    "train.lr0",
    "train.momentum",
    "train.weight_decay",
    "train.alpha",
    "train.tau",
    "train.lambda1",
    "train.lambda2",
    "train.lambda3",
    "train.kappa_max",
    "train.train_image_heads",
    "train.hidden",
    "train.trunk_dim",
    "train.embed_dim",
    "sample.m_s",
    "sample.mode",
    "sample.bandwidth",
    "sample.kernel",
];

/// Parsed key-value pairs, with the line each key came from.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    entries: BTreeMap<String, (String, usize)>,
}

impl FromStr for ConfigFile {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("line {line_no}: expected `key = value`"))
            })?;
            let key = key.trim().to_string();
            if !SCENE_KEYS.contains(&key.as_str()) && !TRAIN_KEYS.contains(&key.as_str()) {
                return Err(Error::InvalidConfig(format!(
                    "line {line_no}: unknown key `{key}`"
                )));
            }
            if entries
                .insert(key.clone(), (value.trim().to_string(), line_no))
                .is_some()
            {
                return Err(Error::InvalidConfig(format!(
                    "line {line_no}: duplicate key `{key}`"
                )));
            }
        }
        Ok(Self { entries })
    }
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        std::fs::read_to_string(path)?.parse()
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), (value.to_string(), 0));
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse()
                .map(Some)
                .map_err(|e| Error::InvalidConfig(format!("line {line}: `{key}` = `{v}`: {e}"))),
        }
    }

    fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn require<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)?
            .ok_or_else(|| Error::MissingField(key.to_string()))
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some((v, line)) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|e| Error::InvalidConfig(format!("line {line}: `{key}`: {e}")))
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }
}

/// Scene generation settings plus dataset size.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub scene: SceneConfig,
    pub train_scenes: usize,
    pub probe_scenes: usize,
}

impl DatasetConfig {
    /// `scene.seed` is required; everything else has a default.
    pub fn from_file(file: &ConfigFile) -> Result<Self> {
        let d = SceneConfig::default();
        let num_classes = file.get_or("scene.num_classes", d.num_classes)?;
        let class_frequencies = match file.list("scene.class_frequencies")? {
            Some(f) => f,
            None if num_classes == d.num_classes => d.class_frequencies.clone(),
            None => vec![1.0 / num_classes as f64; num_classes],
        };
        let scene = SceneConfig {
            num_points: file.get_or("scene.num_points", d.num_points)?,
            num_classes,
            class_frequencies,
            range_profile: RangeProfile {
                min: file.get_or("scene.range_min", d.range_profile.min)?,
                max: file.get_or("scene.range_max", d.range_profile.max)?,
                scale: file.get_or("scene.range_scale", d.range_profile.scale)?,
            },
            label_noise_rate: file.get_or("scene.label_noise_rate", d.label_noise_rate)?,
            descriptor_noise: file.get_or("scene.descriptor_noise", d.descriptor_noise)?,
            point_signal: file.get_or("scene.point_signal", d.point_signal)?,
            seed: file.require("scene.seed")?,
            layout_seed: file.get_or("scene.layout_seed", d.layout_seed)?,
            image_width: file.get_or("scene.image_width", d.image_width)?,
            image_height: file.get_or("scene.image_height", d.image_height)?,
            num_cameras: file.get_or("scene.num_cameras", d.num_cameras)?,
        };
        scene.validate()?;
        let train_scenes = file.get_or("scene.train_scenes", 1)?;
        if train_scenes == 0 {
            return Err(Error::InvalidConfig(
                "scene.train_scenes must be >= 1".into(),
            ));
        }
        Ok(Self {
            scene,
            train_scenes,
            probe_scenes: file.get_or("scene.probe_scenes", 0)?,
        })
    }

    /// Config of scene `index`; scene seeds are consecutive from `scene.seed`.
    pub fn scene_config(&self, index: usize) -> SceneConfig {
        SceneConfig {
            seed: self.scene.seed.wrapping_add(index as u64),
            ..self.scene.clone()
        }
    }

    pub fn total_scenes(&self) -> usize {
        self.train_scenes + self.probe_scenes
    }
}

impl FromStr for BandwidthMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("silverman") {
            return Ok(Self::Silverman);
        }
        let h: f64 = s.parse().map_err(|_| {
            Error::InvalidConfig(format!("bandwidth `{s}`: expected silverman or a number"))
        })?;
        Ok(Self::Fixed(h))
    }
}

impl TrainConfig {
    /// `train.seed` is required; everything else has a default.
    pub fn from_file(file: &ConfigFile) -> Result<Self> {
        let d = TrainConfig::default();
        let e = &d.encoder;
        let encoder = EncoderConfig {
            hidden: file
                .list("train.hidden")?
                .unwrap_or_else(|| e.hidden.clone()),
            trunk_dim: file.get_or("train.trunk_dim", e.trunk_dim)?,
            embed_dim: file.get_or("train.embed_dim", e.embed_dim)?,
            ..e.clone()
        };
        let kernel = match file.get::<String>("sample.kernel")?.as_deref() {
            None | Some("standard") => KernelScaling::Standard,
            Some("prescaled") => KernelScaling::Prescaled,
            Some(other) => {
                return Err(Error::InvalidConfig(format!(
                    "sample.kernel `{other}`: expected standard or prescaled"
                )))
            }
        };
        let config = TrainConfig {
            epochs: file.get_or("train.epochs", d.epochs)?,
            batch_scenes: file.get_or("train.batch_scenes", d.batch_scenes)?,
            m_s: file.get_or("sample.m_s", d.m_s)?,
            lr0: file.get_or("train.lr0", d.lr0)?,
            momentum: file.get_or("train.momentum", d.momentum)?,
            weight_decay: file.get_or("train.weight_decay", d.weight_decay)?,
            alpha: file.get_or("train.alpha", d.alpha)?,
            tau: file.get_or("train.tau", d.tau)?,
            lambda1: file.get_or("train.lambda1", d.lambda1)?,
            lambda2: file.get_or("train.lambda2", d.lambda2)?,
            lambda3: file.get_or("train.lambda3", d.lambda3)?,
            bandwidth: file.get_or("sample.bandwidth", d.bandwidth)?,
            sampling: file.get_or("sample.mode", d.sampling)?,
            kernel,
            seed: file.require("train.seed")?,
            train_image_heads: file.get_or("train.train_image_heads", d.train_image_heads)?,
            kappa_max: match file.get::<String>("train.kappa_max")?.as_deref() {
                None | Some("none") => None,
                Some(_) => file.get("train.kappa_max")?,
            },
            encoder,
        };
        config.validate()?;
        Ok(config)
    }

    /// Every field in a fixed order, one `key = value` per line.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        self.write_canonical(&mut s, true);
        s
    }

    fn write_canonical(&self, s: &mut String, with_seed: bool) {
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        let list = |v: &[usize]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        if with_seed {
            kv("train.seed", self.seed.to_string());
        }
        kv("train.epochs", self.epochs.to_string());
        kv("train.batch_scenes", self.batch_scenes.to_string());
        kv("train.lr0", format!("{:?}", self.lr0));
        kv("train.momentum", format!("{:?}", self.momentum));
        kv("train.weight_decay", format!("{:?}", self.weight_decay));
        kv("train.alpha", format!("{:?}", self.alpha));
        kv("train.tau", format!("{:?}", self.tau));
        kv("train.lambda1", format!("{:?}", self.lambda1));
        kv("train.lambda2", format!("{:?}", self.lambda2));
        kv("train.lambda3", format!("{:?}", self.lambda3));
        kv(
            "train.kappa_max",
            self.kappa_max.map_or("none".into(), |k| format!("{k:?}")),
        );
        kv(
            "train.train_image_heads",
            self.train_image_heads.to_string(),
        );
        kv("train.hidden", list(&self.encoder.hidden));
        kv("train.trunk_dim", self.encoder.trunk_dim.to_string());
        kv("train.embed_dim", self.encoder.embed_dim.to_string());
        kv("sample.m_s", self.m_s.to_string());
        kv("sample.mode", self.sampling.to_string());
        kv(
            "sample.bandwidth",
            match self.bandwidth {
                BandwidthMode::Silverman => "silverman".into(),
                BandwidthMode::Fixed(h) => format!("{h:?}"),
            },
        );
        kv(
            "sample.kernel",
            match self.kernel {
                KernelScaling::Standard => "standard".into(),
                KernelScaling::Prescaled => "prescaled".into(),
            },
        );
    }

    /// SHA-256 of [`TrainConfig::canonical`], lowercase hex.
    pub fn hash(&self) -> String {
        sha256_hex(self.canonical().as_bytes())
    }

    /// Hash of every field except the seed; runs differing only by seed share it.
    pub fn seedless_hash(&self) -> String {
        let mut s = String::new();
        self.write_canonical(&mut s, false);
        sha256_hex(s.as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest.iter() {
        let _ = write!(out, "{b:02x}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::SamplingMode;

    #[test]
    fn parse_and_defaults() {
        let f: ConfigFile =
            "# comment\ntrain.seed = 3\nsample.mode = random # inline\ntrain.lambda3 = 0\n"
                .parse()
                .unwrap();
        let c = TrainConfig::from_file(&f).unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.sampling, SamplingMode::Random);
        assert_eq!(c.lambda3, 0.0);
        assert_eq!(c.epochs, TrainConfig::default().epochs);
    }

    #[test]
    fn missing_and_unknown_fields() {
        let f: ConfigFile = "train.epochs = 2\n".parse().unwrap();
        assert!(
            matches!(TrainConfig::from_file(&f), Err(Error::MissingField(k)) if k == "train.seed")
        );
        assert!("train.epoch = 2\n".parse::<ConfigFile>().is_err());
        assert!("train.seed = 1\ntrain.seed = 2\n"
            .parse::<ConfigFile>()
            .is_err());
        assert!("just words\n".parse::<ConfigFile>().is_err());
        let bad: ConfigFile = "train.seed = x\n".parse().unwrap();
        assert!(matches!(
            TrainConfig::from_file(&bad),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn hashes() {
        let f: ConfigFile = "train.seed = 1\n".parse().unwrap();
        let a = TrainConfig::from_file(&f).unwrap();
        let b = TrainConfig {
            seed: 2,
            ..a.clone()
        };
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.seedless_hash(), b.seedless_hash());
        assert_eq!(a.hash().len(), 64);
        let reparsed = TrainConfig::from_file(&a.canonical().parse().unwrap()).unwrap();
        assert_eq!(reparsed, a);
    }

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn dataset_config() {
        let f: ConfigFile = "scene.seed = 10\nscene.num_points = 100\nscene.probe_scenes = 2\n"
            .parse()
            .unwrap();
        let d = DatasetConfig::from_file(&f).unwrap();
        assert_eq!(d.total_scenes(), 3);
        assert_eq!(d.scene_config(2).seed, 12);
        let missing: ConfigFile = "scene.num_points = 100\n".parse().unwrap();
        assert!(
            matches!(DatasetConfig::from_file(&missing), Err(Error::MissingField(k)) if k == "scene.seed")
        );
        let infeasible: ConfigFile = "scene.seed = 1\nscene.num_points = 3\n".parse().unwrap();
        assert!(DatasetConfig::from_file(&infeasible).is_err());
    }
}
