//! FSRP binary container and a plain CSV interchange format.
//!
//! FSRP layout, all little-endian:
//!
//! | bytes | field                                   |
//! |-------|-----------------------------------------|
//! | 4     | magic `b"FSRP"`                         |
//! | 4     | version `u32` (= 1)                     |
//! | 1     | role `u8` (0 source, 1 target, 2 steered)|
//! | 8     | rows `u64`                              |
//! | 8     | cols `u64`                              |
//! | 4·r·c | row-major `f32` payload                 |

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{RepresentationSet, Role};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const FSRP_MAGIC: &[u8; 4] = b"FSRP";
pub const FSRP_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 1 + 8 + 8;

pub fn write_repset(set: &RepresentationSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let m = set.data();
    let mut payload = Vec::with_capacity(HEADER_LEN + 4 * m.data().len());
    payload.extend_from_slice(FSRP_MAGIC);
    payload.extend_from_slice(&FSRP_VERSION.to_le_bytes());
    payload.push(set.role().code());
    payload.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    payload.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for &v in m.data() {
        let f = v as f32;
        if !f.is_finite() {
            return Err(Error::NonFinite("representation set (f32 payload)"));
        }
        payload.extend_from_slice(&f.to_le_bytes());
    }
    fs::write(path, payload).map_err(|e| Error::io(path, e))
}

pub fn read_repset(path: impl AsRef<Path>) -> Result<RepresentationSet> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |field: &'static str, detail: String| Error::Format {
        path: path.to_path_buf(),
        field,
        detail,
    };
    if bytes.len() < HEADER_LEN {
        return Err(bad("header", format!("file is {} bytes", bytes.len())));
    }
    if &bytes[0..4] != FSRP_MAGIC {
        return Err(bad("magic", format!("expected FSRP, found {:?}", &bytes[0..4])));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FSRP_VERSION {
        return Err(bad("version", format!("unsupported version {version}")));
    }
    let role = Role::from_code(bytes[8]).ok_or_else(|| bad("role", format!("code {}", bytes[8])))?;
    let rows = u64::from_le_bytes(bytes[9..17].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(bytes[17..25].try_into().unwrap()) as usize;
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| bad("dimensions", format!("{rows} x {cols} overflows")))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != expected {
        return Err(bad(
            "dimensions",
            format!(
                "header says {rows} x {cols} ({expected} bytes), payload has {} bytes",
                body.len()
            ),
        ));
    }
    let data: Vec<f64> = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(bad("payload", "non-finite value".into()));
    }
    RepresentationSet::new(role, Matrix::from_vec(rows, cols, data)?)
}

/// Writes a header row `dim0,dim1,...` then one row per vector. Values use the
/// shortest round-tripping decimal form.
pub fn write_csv(set: &RepresentationSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let m = set.data();
    let mut out = String::new();
    let header: Vec<String> = (0..m.cols()).map(|k| format!("dim{k}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for r in m.row_iter() {
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("representation set (csv)"));
        }
        let line: Vec<String> = r.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_csv(path: impl AsRef<Path>, role: Role) -> Result<RepresentationSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |field: &'static str, detail: String| Error::Format {
        path: path.to_path_buf(),
        field,
        detail,
    };
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| bad("header", "empty file".into()))?;
    let cols = header.split(',').count();
    for (k, name) in header.split(',').enumerate() {
        if name.trim() != format!("dim{k}") {
            return Err(bad("header", format!("column {k} is {name:?}, expected dim{k}")));
        }
    }
    let mut data = Vec::new();
    let mut rows = 0;
    for (lineno, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols {
            return Err(bad(
                "dimensions",
                format!("row {lineno} has {} fields, header has {cols}", fields.len()),
            ));
        }
        for f in fields {
            let v: f64 = f
                .trim()
                .parse()
                .map_err(|_| bad("value", format!("row {lineno}: {f:?}")))?;
            if !v.is_finite() {
                return Err(bad("value", format!("row {lineno}: non-finite {f:?}")));
            }
            data.push(v);
        }
        rows += 1;
    }
    RepresentationSet::new(role, Matrix::from_vec(rows, cols, data)?)
}
