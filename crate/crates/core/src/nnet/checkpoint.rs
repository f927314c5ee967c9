//! Network checkpoint format.
//!
//! ```text
//! "LEM1"                      magic
//! u32                         format version
//! u32                         metadata length in bytes
//! [u8]                        JSON metadata (architecture, provenance)
//! per layer: f32[out*in] row-major weights, then f32[out] biases
//! u32                         CRC32 of every byte between magic and checksum
//! ```
//!
//! All integers and floats are little-endian.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{Activation, Dense, Head, Network};
use crate::error::{LemError, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"LEM1";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct LayerShape {
    in_dim: usize,
    out_dim: usize,
    activation: Activation,
}

#[derive(Debug, Serialize, Deserialize)]
struct Architecture {
    layers: Vec<LayerShape>,
    heads: Vec<Head>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Metadata {
    architecture: Architecture,
    #[serde(default)]
    provenance: serde_json::Value,
}

pub fn write_checkpoint(net: &Network<f32>, provenance: &serde_json::Value) -> Vec<u8> {
    let meta = Metadata {
        architecture: Architecture {
            layers: net
                .layers()
                .iter()
                .map(|l| LayerShape {
                    in_dim: l.in_dim,
                    out_dim: l.out_dim,
                    activation: l.activation,
                })
                .collect(),
            heads: net.heads().to_vec(),
        },
        provenance: provenance.clone(),
    };
    let json = serde_json::to_vec(&meta).expect("metadata serializes");
    let mut out = Vec::with_capacity(16 + json.len() + net.param_count() * 4);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for layer in net.layers() {
        for w in layer.weights.iter().chain(&layer.bias) {
            out.extend_from_slice(&w.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out[4..]);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| LemError::Checkpoint("truncated header".into()))
}

/// Parses a checkpoint; no network is returned unless every check passes.
pub fn read_checkpoint(bytes: &[u8]) -> Result<(Network<f32>, serde_json::Value)> {
    if bytes.len() < 4 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(LemError::Checkpoint("bad magic".into()));
    }
    let version = read_u32(bytes, 4)?;
    if version != CHECKPOINT_VERSION {
        return Err(LemError::Version {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let meta_len = read_u32(bytes, 8)? as usize;
    let meta_end = 12usize
        .checked_add(meta_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| LemError::Checkpoint("truncated metadata".into()))?;
    let meta: Metadata = serde_json::from_slice(&bytes[12..meta_end])
        .map_err(|e| LemError::Checkpoint(format!("metadata: {e}")))?;

    let declared: usize = meta
        .architecture
        .layers
        .iter()
        .map(|l| l.in_dim.saturating_mul(l.out_dim).saturating_add(l.out_dim))
        .fold(0usize, |a, b| a.saturating_add(b));
    let available = bytes.len().saturating_sub(meta_end + 4);
    if bytes.len() < meta_end + 4 || declared.saturating_mul(4) != available {
        return Err(LemError::Checkpoint(format!(
            "declared dimensions need {} payload bytes, file has {available}",
            declared.saturating_mul(4)
        )));
    }
    let crc_at = bytes.len() - 4;
    let stored = read_u32(bytes, crc_at)?;
    let computed = crc32fast::hash(&bytes[4..crc_at]);
    if stored != computed {
        return Err(LemError::Checksum { stored, computed });
    }

    let mut floats = bytes[meta_end..crc_at]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")));
    let mut layers = Vec::with_capacity(meta.architecture.layers.len());
    for shape in &meta.architecture.layers {
        let weights: Vec<f32> = floats.by_ref().take(shape.in_dim * shape.out_dim).collect();
        let bias: Vec<f32> = floats.by_ref().take(shape.out_dim).collect();
        layers.push(Dense {
            in_dim: shape.in_dim,
            out_dim: shape.out_dim,
            weights,
            bias,
            activation: shape.activation,
        });
    }
    let net = Network::from_layers(layers, meta.architecture.heads)?;
    Ok((net, meta.provenance))
}

pub fn save_checkpoint(
    net: &Network<f32>,
    provenance: &serde_json::Value,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_checkpoint(net, provenance)).map_err(|e| LemError::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(Network<f32>, serde_json::Value)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| LemError::io(path, e))?;
    read_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::NetworkSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use serde_json::json;

    fn net() -> Network<f32> {
        Network::new(
            &NetworkSpec {
                input_dim: 6,
                hidden: vec![9, 4],
                hidden_activation: Activation::Relu,
                heads: vec![Head::categorical(3), Head::bernoulli(2)],
            },
            17,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let original = net();
        let prov = json!({"seed": 17, "note": "unit"});
        let bytes = write_checkpoint(&original, &prov);
        let (loaded, p) = read_checkpoint(&bytes).unwrap();
        assert_eq!(p, prov);
        for (a, b) in original.layers().iter().zip(loaded.layers()) {
            let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.weights), bits(&b.weights));
            assert_eq!(bits(&a.bias), bits(&b.bias));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let x: Vec<f32> = (0..6).map(|_| rng.random_range(-3.0..3.0)).collect();
            assert_eq!(original.forward(&x).unwrap(), loaded.forward(&x).unwrap());
        }
    }

    #[test]
    fn truncated_file_is_rejected() {
        let bytes = write_checkpoint(&net(), &json!(null));
        for cut in [0, 3, 7, 11, 20, bytes.len() / 2, bytes.len() - 1] {
            assert!(read_checkpoint(&bytes[..cut]).is_err(), "cut at {cut}");
        }
    }

    #[test]
    fn corrupted_payload_fails_checksum() {
        let mut bytes = write_checkpoint(&net(), &json!(null));
        let at = bytes.len() - 10;
        bytes[at] ^= 0x40;
        assert!(matches!(read_checkpoint(&bytes), Err(LemError::Checksum { .. })));
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let mut bytes = write_checkpoint(&net(), &json!(null));
        bytes[4..8].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(read_checkpoint(&bytes), Err(LemError::Version { found: 2, .. })));
    }

    #[test]
    fn inconsistent_dimensions_are_rejected() {
        let bytes = write_checkpoint(&net(), &json!(null));
        let meta_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let meta = std::str::from_utf8(&bytes[12..12 + meta_len]).unwrap();
        // same byte length, different declared width
        let edited = meta.replacen("\"out_dim\":9", "\"out_dim\":8", 1);
        assert_ne!(edited, meta);
        let mut tampered = bytes[..12].to_vec();
        tampered.extend_from_slice(edited.as_bytes());
        tampered.extend_from_slice(&bytes[12 + meta_len..]);
        let err = read_checkpoint(&tampered).unwrap_err();
        assert!(err.to_string().contains("declared dimensions"), "{err}");
    }
}
