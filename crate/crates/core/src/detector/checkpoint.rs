//! Checkpoint file: `MDCK`, u32 version, u64 header length, JSON header,
//! then raw little-endian `f32` tensor payloads. All integers little-endian.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::train::{AdamState, TrainMeta};
use super::{Layout, UNet, UNetConfig};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MDCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("not a checkpoint file (bad magic bytes)")]
    Magic,
    #[error("checkpoint version {found} unsupported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint truncated: {0}")]
    Truncated(String),
    #[error("bad checkpoint header: {0}")]
    Header(String),
    #[error("tensor `{name}` has shape {found:?} but the config implies {expected:?}")]
    Shape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("tensor `{0}` missing from checkpoint")]
    Missing(String),
}

/// Trained weights with optimizer state and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: UNet,
    pub adam: AdamState,
    pub meta: TrainMeta,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Byte offset from the start of the payload section.
    offset: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: UNetConfig,
    adam_step: u64,
    meta: TrainMeta,
    tensors: Vec<TensorEntry>,
}

/// Tensor names in file order with their slices: weights, then both ADAM moments.
fn named_slices(c: &Checkpoint) -> Vec<(String, &[usize], &[f32])> {
    let layout = c.model.layout();
    let mut out = Vec::new();
    for (prefix, buf) in [("", c.model.params()), ("adam.m.", &c.adam.m[..]), ("adam.v.", &c.adam.v[..])] {
        for s in &layout.specs {
            out.push((format!("{prefix}{}", s.name), &s.shape[..], &buf[s.offset..s.offset + s.len()]));
        }
    }
    out
}

pub fn encode_checkpoint(c: &Checkpoint) -> Vec<u8> {
    let slices = named_slices(c);
    let mut offset = 0u64;
    let tensors = slices
        .iter()
        .map(|(name, shape, data)| {
            let e = TensorEntry {
                name: name.clone(),
                shape: shape.to_vec(),
                offset,
            };
            offset += 4 * data.len() as u64;
            e
        })
        .collect();
    let header = Header {
        config: c.model.config().clone(),
        adam_step: c.adam.step,
        meta: c.meta.clone(),
        tensors,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(16 + json.len() + offset as usize);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, _, data) in slices {
        for v in data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    if bytes.len() < 4 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(CheckpointError::Magic);
    }
    if bytes.len() < 16 {
        return Err(CheckpointError::Truncated("preamble".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let payload_start = 16usize
        .checked_add(hlen)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| CheckpointError::Truncated("header".into()))?;
    let header: Header =
        serde_json::from_slice(&bytes[16..payload_start]).map_err(|e| CheckpointError::Header(e.to_string()))?;
    header.config.validate().map_err(|e| CheckpointError::Header(e.to_string()))?;
    let payload = &bytes[payload_start..];
    let layout = Layout::new(&header.config);

    let read = |name: &str, shape: &[usize]| -> Result<Vec<f32>, CheckpointError> {
        let e = header
            .tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| CheckpointError::Missing(name.to_string()))?;
        if e.shape != shape {
            return Err(CheckpointError::Shape {
                name: name.to_string(),
                expected: shape.to_vec(),
                found: e.shape.clone(),
            });
        }
        let n: usize = shape.iter().product();
        let start = e.offset as usize;
        let end = start
            .checked_add(4 * n)
            .filter(|&end| end <= payload.len())
            .ok_or_else(|| CheckpointError::Truncated(format!("payload of `{name}`")))?;
        Ok(payload[start..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    };
    let mut bufs = [vec![0f32; layout.total], vec![0f32; layout.total], vec![0f32; layout.total]];
    for (buf, prefix) in bufs.iter_mut().zip(["", "adam.m.", "adam.v."]) {
        for s in &layout.specs {
            let data = read(&format!("{prefix}{}", s.name), &s.shape)?;
            buf[s.offset..s.offset + s.len()].copy_from_slice(&data);
        }
    }
    let [params, m, v] = bufs;
    let model = UNet::from_params(header.config, params).map_err(|e| CheckpointError::Header(e.to_string()))?;
    Ok(Checkpoint {
        model,
        adam: AdamState {
            m,
            v,
            step: header.adam_step,
        },
        meta: header.meta,
    })
}

pub fn save_checkpoint(c: &Checkpoint, path: &Path) -> Result<(), CheckpointError> {
    fs::write(path, encode_checkpoint(c)).map_err(|e| CheckpointError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let bytes = fs::read(path).map_err(|e| CheckpointError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let model = UNet::init(UNetConfig::with_channels(&[2, 4, 8]), 11).unwrap();
        let n = model.params().len();
        Checkpoint {
            model,
            adam: AdamState {
                m: (0..n).map(|i| i as f32 * 1e-3).collect(),
                v: (0..n).map(|i| (i as f32).sqrt() * 1e-7).collect(),
                step: 17,
            },
            meta: TrainMeta {
                loss_curve: vec![0.9, 0.8123456789012345, 0.1 + 0.2],
                dataset_hash: Some("abc".into()),
                train_config: None,
            },
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = sample();
        let back = decode_checkpoint(&encode_checkpoint(&c)).unwrap();
        let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(back.model.params()), bits(c.model.params()));
        assert_eq!(bits(&back.adam.m), bits(&c.adam.m));
        assert_eq!(bits(&back.adam.v), bits(&c.adam.v));
        assert_eq!(back, c);
    }

    #[test]
    fn wrong_magic() {
        let mut b = encode_checkpoint(&sample());
        b[0] = b'X';
        assert!(matches!(decode_checkpoint(&b), Err(CheckpointError::Magic)));
    }

    #[test]
    fn wrong_version() {
        let mut b = encode_checkpoint(&sample());
        b[4] = 9;
        assert!(matches!(decode_checkpoint(&b), Err(CheckpointError::Version { found: 9, .. })));
    }

    #[test]
    fn truncated_payload() {
        let b = encode_checkpoint(&sample());
        let err = decode_checkpoint(&b[..b.len() - 3]).unwrap_err();
        assert!(matches!(err, CheckpointError::Truncated(_)), "{err}");
    }

    #[test]
    fn config_disagreeing_with_stored_tensor_names_it() {
        // a file written for 4 first-level channels, header edited to claim 2
        let big = Checkpoint {
            model: UNet::init(UNetConfig::with_channels(&[4, 8, 16]), 1).unwrap(),
            adam: AdamState::new(0),
            meta: TrainMeta::default(),
        };
        let n = big.model.params().len();
        let big = Checkpoint {
            adam: AdamState::new(n),
            ..big
        };
        let bytes = encode_checkpoint(&big);
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let mut header: serde_json::Value = serde_json::from_slice(&bytes[16..16 + hlen]).unwrap();
        header["config"]["encoder_channels"] = serde_json::json!([2, 8, 16]);
        let json = serde_json::to_vec(&header).unwrap();
        let mut edited = bytes[..8].to_vec();
        edited.extend_from_slice(&(json.len() as u64).to_le_bytes());
        edited.extend_from_slice(&json);
        edited.extend_from_slice(&bytes[16 + hlen..]);
        match decode_checkpoint(&edited) {
            Err(CheckpointError::Shape { name, expected, found }) => {
                assert_eq!(name, "enc0.conv0.weight");
                assert_eq!(expected, vec![2, 1, 3, 3]);
                assert_eq!(found, vec![4, 1, 3, 3]);
            }
            other => panic!("expected shape error, got {other:?}"),
        }
    }

    #[test]
    fn save_and_load_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        let c = sample();
        save_checkpoint(&c, &p).unwrap();
        assert_eq!(load_checkpoint(&p).unwrap(), c);
    }
}
