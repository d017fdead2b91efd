//! Binary parameter container.
//!
//! Layout: 8-byte magic `GREXCKPT`, `u32` version, `u64` header length, a
//! JSON header (config, vocabulary, array names and shapes), then every
//! array's values as little-endian `f64` in header order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::error::CheckpointError;
use crate::model::{expected_shapes, Model, Params, Vocab};
use crate::tape::Mat;

const MAGIC: &[u8; 8] = b"GREXCKPT";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    vocab: Vocab,
    arrays: Vec<ArrayEntry>,
}

#[derive(Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    shape: [usize; 2],
}

pub fn checkpoint_bytes(model: &Model) -> Vec<u8> {
    let header = Header {
        config: model.config.clone(),
        vocab: model.vocab.clone(),
        arrays: model
            .params
            .names
            .iter()
            .zip(&model.params.values)
            .map(|(n, v)| ArrayEntry {
                name: n.clone(),
                shape: [v.nrows(), v.ncols()],
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(20 + json.len() + model.params.num_scalars() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for v in &model.params.values {
        for x in v.iter() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn save_checkpoint(path: &Path, model: &Model) -> Result<(), CheckpointError> {
    fs::write(path, checkpoint_bytes(model)).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Model, CheckpointError> {
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_checkpoint(&bytes, path)
}

pub fn parse_checkpoint(bytes: &[u8], path: &Path) -> Result<Model, CheckpointError> {
    let corrupt = |m: &str| CheckpointError::Corrupt {
        path: path.to_path_buf(),
        message: m.to_string(),
    };
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(CheckpointError::BadMagic(path.to_path_buf()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(CheckpointError::Version {
            path: path.to_path_buf(),
            version,
        });
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let body = &bytes[20..];
    if body.len() < hlen {
        return Err(corrupt("truncated header"));
    }
    let header: Header = serde_json::from_slice(&body[..hlen]).map_err(|e| corrupt(&e.to_string()))?;
    header
        .config
        .validate()
        .map_err(|e| CheckpointError::Mismatch(e.to_string()))?;
    let want = expected_shapes(&header.config, header.vocab.len());
    if want.len() != header.arrays.len() {
        return Err(CheckpointError::Mismatch(format!(
            "{} arrays stored, config needs {}",
            header.arrays.len(),
            want.len()
        )));
    }
    let mut data = &body[hlen..];
    let mut params = Params {
        names: Vec::new(),
        values: Vec::new(),
    };
    for (entry, (name, shape)) in header.arrays.iter().zip(want) {
        if entry.name != name || (entry.shape[0], entry.shape[1]) != shape {
            return Err(CheckpointError::Mismatch(format!(
                "array {} {:?}, config expects {} {:?}",
                entry.name, entry.shape, name, shape
            )));
        }
        let n = shape.0 * shape.1;
        if data.len() < n * 8 {
            return Err(corrupt("truncated array data"));
        }
        let values: Vec<f64> = data[..n * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        data = &data[n * 8..];
        params.names.push(name);
        params.values.push(Mat::from_shape_vec(shape, values).expect("sized"));
    }
    if !data.is_empty() {
        return Err(corrupt("trailing bytes"));
    }
    Ok(Model {
        config: header.config,
        vocab: header.vocab,
        params,
    })
}
