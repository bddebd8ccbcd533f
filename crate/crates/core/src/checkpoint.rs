//! Binary model checkpoints.
//!
//! Layout: magic `VMFDCKPT`, `u32` version, config hash (`u64` length +
//! UTF-8 bytes), `u64` completed epochs, `u64` layer count, then per layer
//! `u64` output and input sizes followed by row-major weights and the bias
//! as little-endian `f64`. Layers are in [`Model`] canonical order.

use std::path::Path;

use crate::encoders::{Linear, Model};
use crate::error::{Error, Result};
use crate::scene_io::{write_atomic, Reader, Writer};
use ndarray::{Array1, Array2};

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"VMFDCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config_hash: String,
    pub epochs: u64,
    pub model: Model,
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    if !ckpt.model.is_finite() {
        return Err(Error::Domain(
            "refusing to save non-finite parameters".into(),
        ));
    }
    let mut w = Writer::new();
    w.buf.extend_from_slice(&CHECKPOINT_MAGIC);
    w.u32(CHECKPOINT_VERSION);
    w.u64(ckpt.config_hash.len() as u64);
    w.buf.extend_from_slice(ckpt.config_hash.as_bytes());
    w.u64(ckpt.epochs);
    let layers = ckpt.model.layers();
    w.u64(layers.len() as u64);
    for layer in layers {
        w.u64(layer.output_dim() as u64);
        w.u64(layer.input_dim() as u64);
        w.f64s(layer.weight.iter());
        w.f64s(layer.bias.iter());
    }
    Ok(w.buf)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader::new(bytes);
    r.header(&CHECKPOINT_MAGIC, CHECKPOINT_VERSION)?;
    let hash_len = r.count()?;
    let config_hash = String::from_utf8(r.take(hash_len)?.to_vec())
        .map_err(|_| Error::Format("config hash is not UTF-8".into()))?;
    let epochs = r.u64()?;
    let n = r.count()?;
    let mut layers = Vec::new();
    for _ in 0..n {
        let (out, inp) = (r.count()?, r.count()?);
        let size = out
            .checked_mul(inp)
            .ok_or_else(|| Error::Format("layer size overflows".into()))?;
        let weight = Array2::from_shape_vec((out, inp), r.f64s(size)?)
            .map_err(|e| Error::Format(format!("layer shape: {e}")))?;
        let bias = Array1::from(r.f64s(out)?);
        layers.push(Linear { weight, bias });
    }
    r.finish()?;
    let model = Model::from_layers(layers)?;
    if !model.is_finite() {
        return Err(Error::Format("non-finite parameters".into()));
    }
    Ok(Checkpoint {
        config_hash,
        epochs,
        model,
    })
}

/// Written to a temporary sibling and renamed, so a partial file never
/// appears under `path`.
pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    write_atomic(path, &encode_checkpoint(ckpt)?)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode_checkpoint(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::EncoderConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ckpt() -> Checkpoint {
        let model =
            Model::init(&EncoderConfig::default(), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        Checkpoint {
            config_hash: "ab12".into(),
            epochs: 7,
            model,
        }
    }

    #[test]
    fn round_trip() {
        let c = ckpt();
        assert_eq!(
            decode_checkpoint(&encode_checkpoint(&c).unwrap()).unwrap(),
            c
        );
    }

    #[test]
    fn damaged_files() {
        let bytes = encode_checkpoint(&ckpt()).unwrap();
        assert!(matches!(
            decode_checkpoint(&bytes[..bytes.len() - 3]),
            Err(Error::Truncated(_))
        ));
        let mut bad = bytes.clone();
        bad[1] = 0;
        assert!(matches!(decode_checkpoint(&bad), Err(Error::Format(_))));
        let mut old = bytes;
        old[8] = 0;
        assert!(matches!(
            decode_checkpoint(&old),
            Err(Error::Version { .. })
        ));
    }
}
