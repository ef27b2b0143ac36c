//! Binary `SpinorField` files and their JSON sidecars.
//!
//! Layout (all little-endian):
//!
//! | offset | size      | content                                        |
//! |--------|-----------|------------------------------------------------|
//! | 0      | 4         | magic `DSLF`                                   |
//! | 4      | 4         | format version, `u32` (currently 1)            |
//! | 8      | 8         | half-width `L`, `f64`                          |
//! | 16     | 8         | points per axis `N`, `u64`                     |
//! | 24     | 1         | mask code (0 ball, 1 annulus, 2 box, 3 punctured ball, 4 custom) |
//! | 25     | 7         | zero padding                                   |
//! | 32     | 8         | mask parameter (`r_outer` or `eps_in`, else 0) |
//! | 40     | 64·N³     | per cell, x fastest: re, im of the 4 components as `f64` |
//! | 40+64N³| N³        | mask bitmap, one byte (0 or 1) per cell        |

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::clifford::SpinorValue;
use crate::error::{Error, Result};
use crate::grid::{DomainMask, GridSpec, MaskKind, SpinorField};

pub const MAGIC: &[u8; 4] = b"DSLF";
pub const VERSION: u32 = 1;
pub const HEADER_BYTES: usize = 40;

/// Contents of the `.json` file written next to a field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSidecar {
    pub format: String,
    pub version: u32,
    pub byte_order: String,
    pub half_width: f64,
    pub n: usize,
    pub spacing: f64,
    pub mask: MaskKind,
    pub active_cells: usize,
    pub value_offset: usize,
    pub bitmap_offset: usize,
    pub file_bytes: usize,
}

pub fn sidecar(field: &SpinorField) -> FieldSidecar {
    let g = field.grid();
    let cells = g.len();
    FieldSidecar {
        format: "DSLF".into(),
        version: VERSION,
        byte_order: "little".into(),
        half_width: g.half_width(),
        n: g.n(),
        spacing: g.spacing(),
        mask: field.mask().kind(),
        active_cells: field.mask().count(),
        value_offset: HEADER_BYTES,
        bitmap_offset: HEADER_BYTES + 64 * cells,
        file_bytes: HEADER_BYTES + 65 * cells,
    }
}

pub fn encode(field: &SpinorField) -> Vec<u8> {
    let g = field.grid();
    let cells = g.len();
    let mut out = Vec::with_capacity(HEADER_BYTES + 65 * cells);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&g.half_width().to_le_bytes());
    out.extend_from_slice(&(g.n() as u64).to_le_bytes());
    let (code, param) = field.mask().kind().code();
    out.push(code);
    out.extend_from_slice(&[0u8; 7]);
    out.extend_from_slice(&param.to_le_bytes());
    for v in field.values() {
        for z in v.0 {
            out.extend_from_slice(&z.re.to_le_bytes());
            out.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    out.extend(field.mask().cells().iter().map(|&a| a as u8));
    out
}

fn read_f64(b: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(b[at..at + 8].try_into().expect("8 bytes"))
}

pub fn decode(bytes: &[u8]) -> Result<SpinorField> {
    let bad = |m: &str| Err(Error::Format(m.to_string()));
    if bytes.len() < HEADER_BYTES || &bytes[..4] != MAGIC {
        return bad("not a DSLF spinor field file");
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Format(format!("unsupported DSLF version {version}")));
    }
    let l = read_f64(bytes, 8);
    let n = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes"));
    if n == 0 || n > 4096 {
        return Err(Error::Format(format!("implausible grid size {n}")));
    }
    let n = n as usize;
    let kind = MaskKind::from_code(bytes[24], read_f64(bytes, 32))?;
    let grid = GridSpec::new(l, n).map_err(|e| Error::Format(e.to_string()))?;
    let cells = grid.len();
    if bytes.len() != HEADER_BYTES + 65 * cells {
        return Err(Error::Format(format!(
            "expected {} bytes for N = {n}, found {}",
            HEADER_BYTES + 65 * cells,
            bytes.len()
        )));
    }
    let values: Vec<SpinorValue> = (0..cells)
        .map(|c| {
            let at = HEADER_BYTES + 64 * c;
            SpinorValue::new(std::array::from_fn(|j| {
                Complex64::new(read_f64(bytes, at + 16 * j), read_f64(bytes, at + 16 * j + 8))
            }))
        })
        .collect();
    let bitmap = &bytes[HEADER_BYTES + 64 * cells..];
    if bitmap.iter().any(|&b| b > 1) {
        return bad("mask bitmap holds a value other than 0 or 1");
    }
    let mask = DomainMask::from_cells(&grid, kind, bitmap.iter().map(|&b| b == 1).collect())
        .map_err(|e| Error::Format(e.to_string()))?;
    SpinorField::from_values(grid, mask, values).map_err(|e| Error::Format(e.to_string()))
}

fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Writes `path` and the sidecar `path` with extension `.json`; returns both paths.
pub fn write_field(path: &Path, field: &SpinorField) -> Result<(PathBuf, PathBuf)> {
    fs::write(path, encode(field))?;
    let side = sidecar_path(path);
    fs::write(&side, serde_json::to_string_pretty(&sidecar(field))? + "\n")?;
    Ok((path.to_path_buf(), side))
}

/// Reads a field and, when present, checks it against its sidecar.
pub fn read_field(path: &Path) -> Result<SpinorField> {
    let field = decode(&fs::read(path)?)?;
    let side = sidecar_path(path);
    if side.exists() {
        let meta: FieldSidecar = serde_json::from_str(&fs::read_to_string(&side)?)?;
        let expect = sidecar(&field);
        if meta.n != expect.n || meta.half_width != expect.half_width || meta.active_cells != expect.active_cells {
            return Err(Error::Format(format!("sidecar {} does not match the binary file", side.display())));
        }
    }
    Ok(field)
}
