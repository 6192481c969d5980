//! CYF1 field files and their JSON sidecars.
//!
//! Layout (all little-endian): magic `CYF1`, `u32 n`, `u32 res`,
//! `u32 kind` (0 scalar, 1 hermitian), then `f64` values row-major. A
//! hermitian field stores `n^2` complex entries `(re, im)` per point. The
//! sidecar `<name>.meta.json` carries the periods and creation parameters.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::Result;
use crate::geometry::{HermitianField, ScalarField, TorusGrid};

pub const MAGIC: &[u8; 4] = b"CYF1";
const HEADER_LEN: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Scalar,
    Hermitian,
}

impl FieldKind {
    fn code(self) -> u32 {
        match self {
            FieldKind::Scalar => 0,
            FieldKind::Hermitian => 1,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum FormatError {
    #[error("bad magic {0:?}, expected CYF1")]
    BadMagic([u8; 4]),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("{0} trailing bytes after payload")]
    TrailingData(usize),
    #[error("unknown field kind {0}")]
    UnknownKind(u32),
    #[error("field kind mismatch: file holds {found:?}, expected {expected:?}")]
    KindMismatch {
        expected: FieldKind,
        found: FieldKind,
    },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid payload: {0}")]
    InvalidPayload(String),
}

impl FormatError {
    /// Stable numeric code per failure class.
    pub fn code(&self) -> u8 {
        match self {
            FormatError::BadMagic(_) => 10,
            FormatError::Truncated { .. } => 11,
            FormatError::TrailingData(_) => 12,
            FormatError::UnknownKind(_) => 13,
            FormatError::KindMismatch { .. } => 14,
            FormatError::DimensionMismatch(_) => 15,
            FormatError::InvalidPayload(_) => 16,
        }
    }
}

#[derive(Clone, Debug)]
pub enum Field {
    Scalar(ScalarField),
    Hermitian(HermitianField),
}

impl Field {
    pub fn kind(&self) -> FieldKind {
        match self {
            Field::Scalar(_) => FieldKind::Scalar,
            Field::Hermitian(_) => FieldKind::Hermitian,
        }
    }

    pub fn grid(&self) -> &TorusGrid {
        match self {
            Field::Scalar(s) => s.grid(),
            Field::Hermitian(h) => h.grid(),
        }
    }
}

/// Header fields of a CYF1 payload.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Header {
    pub n: u32,
    pub res: u32,
    pub kind: FieldKind,
}

/// Sidecar metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldMeta {
    pub format: String,
    pub kind: FieldKind,
    pub n: usize,
    pub res: usize,
    pub periods: Vec<f64>,
    #[serde(default)]
    pub spec: serde_json::Value,
    #[serde(default)]
    pub parameters: serde_json::Value,
}

impl FieldMeta {
    pub fn for_field(field: &Field) -> Self {
        let grid = field.grid();
        Self {
            format: "CYF1".into(),
            kind: field.kind(),
            n: grid.n(),
            res: grid.res(),
            periods: grid.periods().to_vec(),
            spec: serde_json::Value::Null,
            parameters: serde_json::Value::Null,
        }
    }
}

pub fn encode(field: &Field) -> Vec<u8> {
    let grid = field.grid();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(grid.n() as u32).to_le_bytes());
    out.extend_from_slice(&(grid.res() as u32).to_le_bytes());
    out.extend_from_slice(&field.kind().code().to_le_bytes());
    match field {
        Field::Scalar(s) => {
            out.reserve(8 * s.len());
            for v in s.values() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Field::Hermitian(h) => {
            for c in h.entries() {
                out.extend_from_slice(&c.re.to_le_bytes());
                out.extend_from_slice(&c.im.to_le_bytes());
            }
        }
    }
    out
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"))
}

pub fn decode_header(bytes: &[u8]) -> std::result::Result<Header, FormatError> {
    if bytes.len() < HEADER_LEN {
        if bytes.len() >= 4 && &bytes[..4] != MAGIC {
            return Err(FormatError::BadMagic(
                bytes[..4].try_into().expect("4 bytes"),
            ));
        }
        return Err(FormatError::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
    if &magic != MAGIC {
        return Err(FormatError::BadMagic(magic));
    }
    let kind = match u32_at(bytes, 12) {
        0 => FieldKind::Scalar,
        1 => FieldKind::Hermitian,
        k => return Err(FormatError::UnknownKind(k)),
    };
    Ok(Header {
        n: u32_at(bytes, 4),
        res: u32_at(bytes, 8),
        kind,
    })
}

/// Decodes a payload. `periods` defaults to 1 on every axis.
pub fn decode(bytes: &[u8], periods: Option<&[f64]>) -> Result<Field> {
    let header = decode_header(bytes)?;
    let n = header.n as usize;
    let res = header.res as usize;
    let default_periods = vec![1.0; 2 * n];
    let grid = TorusGrid::with_periods(n, res, periods.unwrap_or(&default_periods))
        .map_err(|e| FormatError::DimensionMismatch(e.to_string()))?;
    let per_point = match header.kind {
        FieldKind::Scalar => 1,
        FieldKind::Hermitian => 2 * n * n,
    };
    let expected = HEADER_LEN + 8 * per_point * grid.len();
    if bytes.len() < expected {
        return Err(FormatError::Truncated {
            expected,
            found: bytes.len(),
        }
        .into());
    }
    if bytes.len() > expected {
        return Err(FormatError::TrailingData(bytes.len() - expected).into());
    }
    let values: Vec<f64> = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let field = match header.kind {
        FieldKind::Scalar => Field::Scalar(
            ScalarField::new(&grid, values)
                .map_err(|e| FormatError::InvalidPayload(e.to_string()))?,
        ),
        FieldKind::Hermitian => {
            let entries: Vec<Complex64> = values
                .chunks_exact(2)
                .map(|c| Complex64::new(c[0], c[1]))
                .collect();
            Field::Hermitian(
                HermitianField::from_entries(&grid, &entries)
                    .map_err(|e| FormatError::InvalidPayload(e.to_string()))?,
            )
        }
    };
    Ok(field)
}

/// `dir/name.cyf` -> `dir/name.meta.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

/// Writes the payload and its sidecar.
pub fn write_field(path: &Path, field: &Field, meta: Option<FieldMeta>) -> Result<()> {
    fs::write(path, encode(field))?;
    let meta = meta.unwrap_or_else(|| FieldMeta::for_field(field));
    fs::write(
        sidecar_path(path),
        serde_json::to_string_pretty(&meta)? + "\n",
    )?;
    Ok(())
}

/// Reads a field, taking periods from the sidecar when one exists.
pub fn read_field(path: &Path) -> Result<Field> {
    let bytes = fs::read(path)?;
    let side = sidecar_path(path);
    let meta: Option<FieldMeta> = if side.exists() {
        Some(serde_json::from_str(&fs::read_to_string(side)?)?)
    } else {
        None
    };
    decode(&bytes, meta.as_ref().map(|m| m.periods.as_slice()))
}

pub fn read_scalar(path: &Path) -> Result<ScalarField> {
    match read_field(path)? {
        Field::Scalar(s) => Ok(s),
        Field::Hermitian(_) => Err(FormatError::KindMismatch {
            expected: FieldKind::Scalar,
            found: FieldKind::Hermitian,
        }
        .into()),
    }
}

pub fn read_hermitian(path: &Path) -> Result<HermitianField> {
    match read_field(path)? {
        Field::Hermitian(h) => Ok(h),
        Field::Scalar(_) => Err(FormatError::KindMismatch {
            expected: FieldKind::Hermitian,
            found: FieldKind::Scalar,
        }
        .into()),
    }
}

/// Reads a scalar field and checks it lives on `grid`.
pub fn read_scalar_on(path: &Path, grid: &TorusGrid) -> Result<ScalarField> {
    let s = read_scalar(path)?;
    if s.grid().n() != grid.n() || s.grid().res() != grid.res() {
        return Err(FormatError::DimensionMismatch(format!(
            "file has n={}, res={}; expected n={}, res={}",
            s.grid().n(),
            s.grid().res(),
            grid.n(),
            grid.res()
        ))
        .into());
    }
    ScalarField::new(grid, s.into_values())
}
