//! Binary matrix container with a JSON sidecar.
//!
//! `<stem>.bin` holds an 8-byte header (`b"STLB"` followed by a
//! little-endian `u32` format version, currently 1) and then every matrix
//! back to back as little-endian `f64` in column-major order.
//!
//! `<stem>.json` describes the payload:
//!
//! ```json
//! {
//!   "format": "stlearn-container",
//!   "version": 1,
//!   "layout": "column-major f64 little-endian",
//!   "matrices": [{ "name": "X", "rows": 20, "cols": 60, "offset": 8 }],
//!   "meta": { "kind": "dataset", "sigma_eps": 0.3, "seed": 7 }
//! }
//! ```
//!
//! `offset` is the byte offset of the first entry of the matrix in the
//! `.bin` file. `meta` is free-form per container kind.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Mat;

const MAGIC: &[u8; 4] = b"STLB";
const VERSION: u32 = 1;
const HEADER_BYTES: usize = 8;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Entry {
    name: String,
    rows: usize,
    cols: usize,
    offset: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Sidecar {
    format: String,
    version: u32,
    layout: String,
    matrices: Vec<Entry>,
    meta: serde_json::Value,
}

/// Parsed container contents.
#[derive(Debug, Clone)]
pub struct Container {
    pub meta: serde_json::Value,
    pub matrices: Vec<(String, Mat)>,
}

impl Container {
    pub fn get(&self, name: &str) -> Option<&Mat> {
        self.matrices.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn take(&self, name: &str) -> Result<Mat> {
        self.get(name)
            .cloned()
            .ok_or_else(|| Error::Config(format!("container has no matrix named {name:?}")))
    }
}

fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

pub fn write(stem: &Path, meta: serde_json::Value, mats: &[(&str, &Mat)]) -> Result<()> {
    let mut bytes = Vec::with_capacity(HEADER_BYTES + mats.iter().map(|(_, m)| m.len() * 8).sum::<usize>());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    let mut entries = Vec::with_capacity(mats.len());
    for (name, m) in mats {
        entries.push(Entry {
            name: (*name).to_string(),
            rows: m.nrows(),
            cols: m.ncols(),
            offset: bytes.len(),
        });
        for col in m.columns() {
            for v in col {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let sidecar = Sidecar {
        format: "stlearn-container".into(),
        version: VERSION,
        layout: "column-major f64 little-endian".into(),
        matrices: entries,
        meta,
    };
    if let Some(parent) = stem.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let bin = with_ext(stem, "bin");
    fs::write(&bin, &bytes).map_err(|e| Error::io(&bin, e))?;
    let json = with_ext(stem, "json");
    let mut text = serde_json::to_string_pretty(&sidecar)?;
    text.push('\n');
    fs::write(&json, text).map_err(|e| Error::io(&json, e))?;
    Ok(())
}

pub fn read(stem: &Path) -> Result<Container> {
    let json = with_ext(stem, "json");
    let text = fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
    let sidecar: Sidecar = serde_json::from_str(&text)?;
    if sidecar.format != "stlearn-container" || sidecar.version != VERSION {
        return Err(Error::Config(format!(
            "{}: unsupported container {} v{}",
            json.display(),
            sidecar.format,
            sidecar.version
        )));
    }
    let bin = with_ext(stem, "bin");
    let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    if bytes.len() < HEADER_BYTES || &bytes[..4] != MAGIC {
        return Err(Error::Config(format!("{}: bad magic", bin.display())));
    }
    let mut matrices = Vec::with_capacity(sidecar.matrices.len());
    for e in &sidecar.matrices {
        let end = e.offset + e.rows * e.cols * 8;
        if end > bytes.len() {
            return Err(Error::Config(format!(
                "{}: matrix {:?} runs past end of file",
                bin.display(),
                e.name
            )));
        }
        let mut m = Mat::zeros((e.rows, e.cols));
        let mut off = e.offset;
        for j in 0..e.cols {
            for i in 0..e.rows {
                let mut b = [0u8; 8];
                b.copy_from_slice(&bytes[off..off + 8]);
                m[[i, j]] = f64::from_le_bytes(b);
                off += 8;
            }
        }
        matrices.push((e.name.clone(), m));
    }
    Ok(Container {
        meta: sidecar.meta,
        matrices,
    })
}
