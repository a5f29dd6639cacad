//! RVOL: a JSON header (`<name>.rvol.json`) next to a headerless
//! little-endian raw file.
//!
//! ```json
//! {"magic":"rvol/1","shape_zyx":[Z,Y,X],"spacing_mm_zyx":[sz,sy,sx],"dtype":"i16le","data":"name.raw"}
//! ```
//!
//! The raw file holds exactly `Z*Y*X` elements, z-major then y then x.
//! Volumes use `i16le`, masks use `u8` with values in {0,1}.

use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Mask3D, Volume3D};

pub const MAGIC: &str = "rvol/1";
pub const HEADER_SUFFIX: &str = ".rvol.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dtype {
    #[serde(rename = "i16le")]
    I16Le,
    #[serde(rename = "u8")]
    U8,
}

impl Dtype {
    pub fn as_str(self) -> &'static str {
        match self {
            Dtype::I16Le => "i16le",
            Dtype::U8 => "u8",
        }
    }

    pub fn size(self) -> u64 {
        match self {
            Dtype::I16Le => 2,
            Dtype::U8 => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub magic: String,
    pub shape_zyx: [usize; 3],
    pub spacing_mm_zyx: [f64; 3],
    pub dtype: Dtype,
    pub data: String,
}

/// Raw file path that pairs with a header path: `foo.rvol.json` -> `foo.raw`.
pub fn raw_path_for(header: &Path) -> PathBuf {
    let name = header
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let stem = name.strip_suffix(HEADER_SUFFIX).unwrap_or(&name);
    header.with_file_name(format!("{stem}.raw"))
}

fn read_header(path: &Path) -> Result<Header> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::BadHeader {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let magic = value.get("magic").and_then(|m| m.as_str()).unwrap_or("");
    if magic != MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            found: magic.to_string(),
        });
    }
    serde_json::from_value(value).map_err(|e| Error::BadHeader {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

fn read_raw(path: &Path, header: &Header) -> Result<Vec<u8>> {
    let raw_path = path
        .parent()
        .map(|p| p.join(&header.data))
        .unwrap_or_else(|| PathBuf::from(&header.data));
    let bytes = fs::read(&raw_path).map_err(|e| match e.kind() {
        ErrorKind::NotFound => Error::MissingFile(raw_path.clone()),
        _ => Error::Io(e),
    })?;
    let expected = header.shape_zyx.iter().map(|&d| d as u64).product::<u64>() * header.dtype.size();
    if bytes.len() as u64 != expected {
        return Err(Error::ByteLength {
            path: raw_path,
            expected,
            actual: bytes.len() as u64,
        });
    }
    Ok(bytes)
}

fn write_pair(path: &Path, shape: [usize; 3], spacing: [f64; 3], dtype: Dtype, bytes: &[u8]) -> Result<()> {
    let raw = raw_path_for(path);
    let header = Header {
        magic: MAGIC.to_string(),
        shape_zyx: shape,
        spacing_mm_zyx: spacing,
        dtype,
        data: raw
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
    };
    fs::write(&raw, bytes)?;
    fs::write(path, serde_json::to_string(&header)?)?;
    Ok(())
}

pub fn load_volume(path: impl AsRef<Path>) -> Result<Volume3D> {
    let path = path.as_ref();
    let header = read_header(path)?;
    if header.dtype != Dtype::I16Le {
        return Err(Error::DtypeMismatch {
            expected: Dtype::I16Le.as_str(),
            found: header.dtype.as_str().to_string(),
        });
    }
    let bytes = read_raw(path, &header)?;
    let voxels = bytes
        .chunks_exact(2)
        .map(|b| i16::from_le_bytes([b[0], b[1]]))
        .collect();
    Volume3D::new(header.shape_zyx, header.spacing_mm_zyx, voxels)
}

pub fn save_volume(vol: &Volume3D, path: impl AsRef<Path>) -> Result<()> {
    let bytes: Vec<u8> = vol.voxels().iter().flat_map(|v| v.to_le_bytes()).collect();
    write_pair(path.as_ref(), vol.shape(), vol.spacing(), Dtype::I16Le, &bytes)
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<Mask3D> {
    let path = path.as_ref();
    let header = read_header(path)?;
    if header.dtype != Dtype::U8 {
        return Err(Error::DtypeMismatch {
            expected: Dtype::U8.as_str(),
            found: header.dtype.as_str().to_string(),
        });
    }
    let bytes = read_raw(path, &header)?;
    Mask3D::new(header.shape_zyx, header.spacing_mm_zyx, bytes)
}

pub fn save_mask(mask: &Mask3D, path: impl AsRef<Path>) -> Result<()> {
    write_pair(path.as_ref(), mask.shape(), mask.spacing(), Dtype::U8, mask.voxels())
}
