//! Binary checkpoints: one JSON header line followed by little-endian `f32`
//! parameter values in declaration order.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::matrix::{Matrix, Real};
use super::params::ParamStore;
use super::transformer::{ModelConfig, Transformer};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "revsum-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    /// Hash of the vocabulary the model was trained with.
    pub vocab_hash: String,
    pub step: u64,
    pub params: Vec<(String, usize, usize)>,
}

/// Writes `model` to `path`; values are stored as `f32`.
pub fn save_checkpoint<T: Real>(path: &Path, model: &Transformer<T>, vocab_hash: &str, step: u64) -> Result<()> {
    let store = model.params();
    let header = CheckpointHeader {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        config: model.config().clone(),
        vocab_hash: vocab_hash.into(),
        step,
        params: store
            .names()
            .iter()
            .zip(store.values())
            .map(|(n, m)| (n.clone(), m.rows(), m.cols()))
            .collect(),
    };
    let mut buf = serde_json::to_vec(&header).map_err(|e| Error::data(e.to_string()))?;
    buf.push(b'\n');
    buf.reserve(store.num_scalars() * 4);
    for m in store.values() {
        for v in m.data() {
            buf.extend_from_slice(&v.to_f32().unwrap_or(f32::NAN).to_le_bytes());
        }
    }
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint_header(path: &Path) -> Result<CheckpointHeader> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut line = String::new();
    BufReader::new(f).read_line(&mut line).map_err(|e| Error::io(path, e))?;
    parse_header(&line, path)
}

fn parse_header(line: &str, path: &Path) -> Result<CheckpointHeader> {
    let h: CheckpointHeader = serde_json::from_str(line.trim_end())
        .map_err(|e| Error::data(format!("{}: bad checkpoint header: {e}", path.display())))?;
    if h.format != CHECKPOINT_FORMAT || h.version != CHECKPOINT_VERSION {
        return Err(Error::data(format!(
            "{}: unsupported checkpoint {} v{}",
            path.display(),
            h.format,
            h.version
        )));
    }
    Ok(h)
}

/// Loads a model; fails when `expected_vocab_hash` is given and differs.
pub fn load_checkpoint<T: Real>(path: &Path, expected_vocab_hash: Option<&str>) -> Result<(Transformer<T>, CheckpointHeader)> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(f);
    let mut line = String::new();
    r.read_line(&mut line).map_err(|e| Error::io(path, e))?;
    let header = parse_header(&line, path)?;
    if let Some(h) = expected_vocab_hash {
        if h != header.vocab_hash {
            return Err(Error::data(format!(
                "{}: checkpoint vocabulary {} does not match {h}",
                path.display(),
                header.vocab_hash
            )));
        }
    }
    let mut payload = Vec::new();
    r.read_to_end(&mut payload).map_err(|e| Error::io(path, e))?;
    let total: usize = header.params.iter().map(|(_, r, c)| r * c).sum();
    if payload.len() != total * 4 {
        return Err(Error::data(format!(
            "{}: payload has {} bytes, expected {}",
            path.display(),
            payload.len(),
            total * 4
        )));
    }
    let mut store = ParamStore::new();
    let mut chunks = payload.chunks_exact(4);
    for (name, rows, cols) in &header.params {
        let data = chunks
            .by_ref()
            .take(rows * cols)
            .map(|b| T::lit(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64))
            .collect();
        store.add(name.clone(), Matrix::from_vec(*rows, *cols, data));
    }
    let model = Transformer::from_params(header.config.clone(), store)?;
    Ok((model, header))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Combination;

    #[test]
    fn round_trip_is_exact_in_f32() {
        let cfg = ModelConfig {
            d_model: 8,
            n_heads: 2,
            n_layers: 1,
            d_ff: 12,
            dropout: 0.1,
            vocab_size: 9,
            max_positions: 10,
            combination: Combination::Mean,
            num_sources: 2,
        };
        let m = Transformer::<f32>::new(cfg, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        save_checkpoint(&p, &m, "abc", 42).unwrap();
        let (back, h) = load_checkpoint::<f32>(&p, Some("abc")).unwrap();
        assert_eq!(h.step, 42);
        assert_eq!(back.config(), m.config());
        assert_eq!(back.params().names(), m.params().names());
        for (a, b) in back.params().values().iter().zip(m.params().values()) {
            assert_eq!(a.data(), b.data());
        }
        assert!(load_checkpoint::<f32>(&p, Some("other")).is_err());
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let cfg = ModelConfig {
            d_model: 4,
            n_heads: 1,
            n_layers: 1,
            d_ff: 4,
            dropout: 0.0,
            vocab_size: 5,
            max_positions: 4,
            combination: Combination::Parallel,
            num_sources: 1,
        };
        let m = Transformer::<f32>::new(cfg, 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        save_checkpoint(&p, &m, "h", 0).unwrap();
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(load_checkpoint::<f32>(&p, None), Err(Error::Data(_))));
    }
}
