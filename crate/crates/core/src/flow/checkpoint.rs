//! FSCK checkpoint container, little-endian:
//!
//! | bytes | field                                               |
//! |-------|-----------------------------------------------------|
//! | 4     | magic `b"FSCK"`                                     |
//! | 4     | version `u32` (= 1)                                 |
//! | 8     | header length `u64`                                 |
//! | n     | UTF-8 JSON: architecture, normalizers, guidance      |
//! | 8·p   | `f64` parameters: per layer, weights row-major then bias |

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mlp::{FlowModelParams, MlpArchitecture};
use super::train::Checkpoint;
use crate::error::{Error, Result};
use crate::guidance::GuidanceStats;
use crate::normalization::NormalizationStats;

pub const FSCK_MAGIC: &[u8; 4] = b"FSCK";
pub const FSCK_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    architecture: MlpArchitecture,
    param_count: usize,
    source_norm: NormalizationStats,
    target_norm: NormalizationStats,
    guidance: GuidanceStats,
}

pub fn save_checkpoint(path: impl AsRef<Path>, ck: &Checkpoint) -> Result<()> {
    let path = path.as_ref();
    let d = ck.data_dim();
    for (name, len) in [
        ("source_norm", ck.source_norm.dim()),
        ("target_norm", ck.target_norm.dim()),
        ("guidance", ck.guidance.dim()),
    ] {
        if len != d {
            return Err(Error::DimensionMismatch {
                context: name,
                expected: d,
                got: len,
            });
        }
    }
    let header = Header {
        architecture: ck.params.arch.clone(),
        param_count: ck.params.arch.param_count(),
        source_norm: ck.source_norm.clone(),
        target_norm: ck.target_norm.clone(),
        guidance: ck.guidance.clone(),
    };
    let json = serde_json::to_vec(&header)?;
    let flat = ck.params.flat();
    let mut out = Vec::with_capacity(16 + json.len() + 8 * flat.len());
    out.extend_from_slice(FSCK_MAGIC);
    out.extend_from_slice(&FSCK_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for v in flat {
        out.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |field: &'static str, detail: String| Error::Format {
        path: path.to_path_buf(),
        field,
        detail,
    };
    if bytes.len() < 16 {
        return Err(bad("header", format!("file is {} bytes", bytes.len())));
    }
    if &bytes[0..4] != FSCK_MAGIC {
        return Err(bad("magic", format!("expected FSCK, found {:?}", &bytes[0..4])));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FSCK_VERSION {
        return Err(bad("version", format!("unsupported version {version}")));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = &bytes[16..];
    if body.len() < hlen {
        return Err(bad("header", format!("length {hlen} exceeds file")));
    }
    let header: Header = serde_json::from_slice(&body[..hlen]).map_err(|e| bad("header", e.to_string()))?;
    header.architecture.validate()?;
    let arch = header.architecture;
    if header.param_count != arch.param_count() {
        return Err(bad(
            "shape",
            format!(
                "header lists {} parameters, architecture needs {}",
                header.param_count,
                arch.param_count()
            ),
        ));
    }
    let payload = &body[hlen..];
    if payload.len() != 8 * arch.param_count() {
        return Err(bad(
            "shape",
            format!(
                "payload has {} bytes, expected {}",
                payload.len(),
                8 * arch.param_count()
            ),
        ));
    }
    let d = arch.data_dim;
    for (name, len) in [
        ("source_norm", header.source_norm.dim()),
        ("target_norm", header.target_norm.dim()),
        ("guidance", header.guidance.dim()),
    ] {
        if len != d {
            return Err(bad("shape", format!("{name} has dimension {len}, model has {d}")));
        }
    }
    let flat: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Checkpoint {
        params: FlowModelParams::from_flat(&arch, &flat)?,
        source_norm: header.source_norm,
        target_norm: header.target_norm,
        guidance: header.guidance,
    })
}
