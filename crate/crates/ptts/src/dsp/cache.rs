//! Feature cache file format: a 16-byte header (magic `PTTSFEAT`, u32
//! n_frames, u32 dim, both little-endian) followed by row-major
//! little-endian f32 data.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"PTTSFEAT";

/// Write a feature matrix to `path`.
pub fn write_features(path: impl AsRef<Path>, data: &Array2<f32>) -> Result<()> {
    let path = path.as_ref();
    let (n_frames, dim) = data.dim();
    let mut bytes = Vec::with_capacity(16 + n_frames * dim * 4);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&(n_frames as u32).to_le_bytes());
    bytes.extend_from_slice(&(dim as u32).to_le_bytes());
    for v in data.iter() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Read a feature matrix from `path`.
pub fn read_features(path: impl AsRef<Path>) -> Result<Array2<f32>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 || &bytes[0..8] != MAGIC {
        return Err(Error::Data(format!(
            "{}: not a feature cache file",
            path.display()
        )));
    }
    let n_frames = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let expected = 16 + n_frames * dim * 4;
    if bytes.len() != expected {
        return Err(Error::Data(format!(
            "{}: size {} does not match header ({n_frames} x {dim})",
            path.display(),
            bytes.len()
        )));
    }
    let mut values = Vec::with_capacity(n_frames * dim);
    for i in 0..n_frames * dim {
        let off = 16 + 4 * i;
        values.push(f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()));
    }
    Array2::from_shape_vec((n_frames, dim), values)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

/// Write a single column of values (an (n x 1) feature).
pub fn write_column(path: impl AsRef<Path>, values: &[f32]) -> Result<()> {
    let col = Array2::from_shape_vec((values.len(), 1), values.to_vec())
        .expect("column shape is always valid");
    write_features(path, &col)
}

/// Read a single-column feature back as a vector.
pub fn read_column(path: impl AsRef<Path>) -> Result<Vec<f32>> {
    let path = path.as_ref();
    let m = read_features(path)?;
    if m.ncols() != 1 {
        return Err(Error::Data(format!(
            "{}: expected a single column, found {}",
            path.display(),
            m.ncols()
        )));
    }
    Ok(m.column(0).to_vec())
}
