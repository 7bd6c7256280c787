//! Model checkpoints: a single little-endian binary holding every parameter
//! (value + Adam moments) by name, the training step, and a configuration
//! hash that guards against loading weights into a different architecture.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use sha2::{Digest, Sha256};

use super::store::ParamStore;
use super::Real;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"PTTSCKPT";
const VERSION: u32 = 1;

/// Stable 64-bit hash of a canonical architecture description.
pub fn config_hash(description: &str) -> u64 {
    let digest = Sha256::digest(description.as_bytes());
    u64::from_le_bytes(digest[0..8].try_into().unwrap())
}

/// Serialize the store. Values are stored as f32 regardless of the in-memory
/// scalar type; the product pipeline runs f32 so this is lossless there.
pub fn save<F: Real>(store: &ParamStore<F>, hash: u64, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&hash.to_le_bytes());
    bytes.extend_from_slice(&store.step().to_le_bytes());
    bytes.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (name, p) in store.iter() {
        let nb = name.as_bytes();
        bytes.extend_from_slice(&(nb.len() as u32).to_le_bytes());
        bytes.extend_from_slice(nb);
        let (rows, cols) = p.value.dim();
        bytes.extend_from_slice(&(rows as u32).to_le_bytes());
        bytes.extend_from_slice(&(cols as u32).to_le_bytes());
        for arr in [p.value.as_ref(), &p.m, &p.v] {
            for v in arr.iter() {
                bytes.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
            }
        }
    }
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Load a checkpoint into an already-registered store. Parameter names and
/// shapes must match the registration exactly; `expected_hash` must match
/// the stored architecture hash.
pub fn load<F: Real>(
    store: &mut ParamStore<F>,
    expected_hash: u64,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let fail = |msg: String| Error::Data(format!("{}: {msg}", path.display()));

    if bytes.len() < 32 || &bytes[0..8] != MAGIC {
        return Err(fail("not a checkpoint file".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(fail(format!("unsupported checkpoint version {version}")));
    }
    let hash = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    if hash != expected_hash {
        return Err(Error::Config(format!(
            "{}: architecture hash mismatch (checkpoint {hash:#018x}, expected {expected_hash:#018x})",
            path.display()
        )));
    }
    let step = u64::from_le_bytes(bytes[20..28].try_into().unwrap());
    let count = u32::from_le_bytes(bytes[28..32].try_into().unwrap()) as usize;
    if count != store.len() {
        return Err(fail(format!(
            "parameter count {count} does not match model ({})",
            store.len()
        )));
    }

    let mut pos = 32;
    let mut take = |n: usize| -> Result<&[u8]> {
        if pos + n > bytes.len() {
            return Err(Error::Data(format!("{}: truncated", path.display())));
        }
        let s = &bytes[pos..pos + n];
        pos += n;
        Ok(s)
    };

    for _ in 0..count {
        let name_len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(take(name_len)?.to_vec())
            .map_err(|_| fail("invalid parameter name".into()))?;
        let rows = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let id = store
            .id_of(&name)
            .ok_or_else(|| fail(format!("unknown parameter {name}")))?;
        if store.value(id).dim() != (rows, cols) {
            return Err(fail(format!(
                "parameter {name} has shape {:?}, checkpoint has ({rows}, {cols})",
                store.value(id).dim()
            )));
        }
        let n = rows * cols;
        let mut mats: Vec<Array2<F>> = Vec::with_capacity(3);
        for _ in 0..3 {
            let raw = take(4 * n)?;
            let mut values = Vec::with_capacity(n);
            for i in 0..n {
                let v = f32::from_le_bytes(raw[4 * i..4 * i + 4].try_into().unwrap());
                values.push(F::from_f64(v as f64));
            }
            mats.push(
                Array2::from_shape_vec((rows, cols), values)
                    .expect("shape verified above"),
            );
        }
        let v = mats.pop().unwrap();
        let m = mats.pop().unwrap();
        let value = mats.pop().unwrap();
        let entry = store.entry_mut(id);
        entry.value = std::sync::Arc::new(value);
        entry.m = m;
        entry.v = v;
        entry.grad.fill(F::zero());
    }
    store.set_step(step);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn sample_store() -> ParamStore<f32> {
        let mut store = ParamStore::new();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        store.register_glorot("a.w", 3, 4, &mut rng);
        store.register_glorot("b.w", 2, 2, &mut rng);
        store.register_zeros("b.bias", 1, 2);
        store
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let mut store = sample_store();
        // give the moments some non-trivial content
        let id = store.id_of("a.w").unwrap();
        store.accumulate_grad(id, &Array2::from_elem((3, 4), 0.5));
        super::super::adam_step(&mut store, 0.002, &super::super::AdamConfig::default());

        save(&store, 99, &path).unwrap();
        let mut other = sample_store();
        load(&mut other, 99, &path).unwrap();

        assert_eq!(other.step(), store.step());
        for (id_a, id_b) in store.ids().zip(other.ids()) {
            let a = store.value(id_a);
            let b = other.value(id_b);
            for (x, y) in a.iter().zip(b.iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn hash_mismatch_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let store = sample_store();
        save(&store, 1, &path).unwrap();
        let mut other = sample_store();
        let err = load(&mut other, 2, &path).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("hash mismatch"));
    }

    #[test]
    fn config_hash_is_stable() {
        assert_eq!(config_hash("abc"), config_hash("abc"));
        assert_ne!(config_hash("abc"), config_hash("abd"));
    }
}
