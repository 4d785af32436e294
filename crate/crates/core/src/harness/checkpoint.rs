//! Binary model checkpoints.
//!
//! Layout: the 8-byte magic `WNCKPT01`, a little-endian `u32` manifest
//! length, the UTF-8 JSON manifest, then every tensor's `f64` values
//! (little-endian) back to back in manifest order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{build_model, LayerSpec, Model};
use crate::numerics::rng::RngStream;
use crate::numerics::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"WNCKPT01";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    pub rng_seed: u64,
    pub rng_counter: u64,
    pub tensors: Vec<TensorEntry>,
}

pub fn encode_checkpoint(model: &Model) -> Result<Vec<u8>> {
    let state = model.named_state();
    let manifest = Manifest {
        input_shape: model.input_shape().to_vec(),
        layers: model.specs().to_vec(),
        rng_seed: model.rng().seed(),
        rng_counter: model.rng().counter(),
        tensors: state
            .iter()
            .map(|(n, t)| TensorEntry {
                name: n.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&manifest)?;
    let len = u32::try_from(json.len()).map_err(|_| Error::Value("manifest too large".into()))?;
    let values: usize = state.iter().map(|(_, t)| t.len()).sum();
    let mut out = Vec::with_capacity(12 + json.len() + 8 * values);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(&json);
    for (_, t) in &state {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Model> {
    if bytes.len() < 12 {
        return Err(Error::Length("checkpoint shorter than its header".into()));
    }
    if &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let len = u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize;
    let json = bytes
        .get(12..12 + len)
        .ok_or_else(|| Error::Length("checkpoint manifest truncated".into()))?;
    let manifest: Manifest =
        serde_json::from_slice(json).map_err(|e| Error::Format(format!("bad checkpoint manifest: {e}")))?;
    let mut body = &bytes[12 + len..];
    let mut state = Vec::with_capacity(manifest.tensors.len());
    for entry in &manifest.tensors {
        let n: usize = entry.shape.iter().product();
        if body.len() < 8 * n {
            return Err(Error::Length(format!("checkpoint data for {} truncated", entry.name)));
        }
        let data = body[..8 * n]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        body = &body[8 * n..];
        state.push((entry.name.clone(), Tensor::new(entry.shape.clone(), data)?));
    }
    if !body.is_empty() {
        return Err(Error::Length(format!("{} trailing bytes in checkpoint", body.len())));
    }
    let mut model = build_model(&manifest.input_shape, &manifest.layers, RngStream::new(manifest.rng_seed))?;
    model.load_named_state(&state)?;
    model.set_rng(RngStream::at(manifest.rng_seed, manifest.rng_counter));
    Ok(model)
}

pub fn save_checkpoint(path: &Path, model: &Model) -> Result<()> {
    let bytes = encode_checkpoint(model)?;
    let mut f = super::experiment::create_file(path)?;
    std::io::Write::write_all(&mut f, &bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    decode_checkpoint(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Activation, NormMode};
    use crate::numerics::rng::sample_normal;
    use crate::Mode;

    #[test]
    fn round_trip_preserves_outputs() {
        for mode in NormMode::ALL {
            let specs = [
                LayerSpec::dense(3, 5, mode, Activation::leaky()),
                LayerSpec::GaussianNoise { sigma: 0.1 },
                LayerSpec::dense(5, 2, mode, Activation::Identity),
            ];
            let mut m = build_model(&[3], &specs, RngStream::new(4)).unwrap();
            let x = sample_normal(&mut RngStream::new(5), &[6, 3], 0.0, 1.0);
            m.data_dependent_init(&x, 1e-10).unwrap();
            m.forward(&x, Mode::Train).unwrap();
            let bytes = encode_checkpoint(&m).unwrap();
            let mut back = decode_checkpoint(&bytes).unwrap();
            assert_eq!(m.predict(&x).unwrap(), back.predict(&x).unwrap(), "{mode}");
            let (_, a) = m.forward(&x, Mode::Train).unwrap();
            let (_, b) = back.forward(&x, Mode::Train).unwrap();
            assert_eq!(a, b, "{mode}: noise stream restored");
        }
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let specs = [LayerSpec::dense(2, 2, NormMode::WeightNorm, Activation::Identity)];
        let m = build_model(&[2], &specs, RngStream::new(0)).unwrap();
        let bytes = encode_checkpoint(&m).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_checkpoint(&bad), Err(Error::Format(_))));
        assert!(matches!(decode_checkpoint(&bytes[..bytes.len() - 3]), Err(Error::Length(_))));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(decode_checkpoint(&long), Err(Error::Length(_))));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/model.ckpt");
        let specs = [LayerSpec::dense(2, 3, NormMode::Standard, Activation::Relu)];
        let m = build_model(&[2], &specs, RngStream::new(1)).unwrap();
        save_checkpoint(&path, &m).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(m.parameters(), back.parameters());
    }
}
