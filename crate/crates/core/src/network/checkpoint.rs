//! Parameter checkpoints: raw little-endian `f64` array plus a JSON sidecar.
//!
//! `f32` parameters widen to `f64` on disk, which round-trips exactly.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use super::{Mlp, MlpConfig};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::storage::{atomic_write, f64_from_le_bytes, f64_to_le_bytes, sha256_hex};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config: MlpConfig,
    pub seed: u64,
    pub len: usize,
    pub dtype: String,
    pub sha256: String,
}

fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Writes `path` (binary) and `path.json` (metadata).
pub fn save_checkpoint<T: Real>(path: &Path, net: &Mlp<T>, seed: u64) -> Result<()> {
    let bytes = f64_to_le_bytes(net.params().iter().map(|v| v.to_f64_lossy()));
    let meta = CheckpointMeta {
        config: *net.config(),
        seed,
        len: net.params().len(),
        dtype: std::any::type_name::<T>().to_string(),
        sha256: sha256_hex(&bytes),
    };
    atomic_write(path, &bytes)?;
    atomic_write(&sidecar(path), serde_json::to_string_pretty(&meta)?.as_bytes())?;
    Ok(())
}

pub fn load_checkpoint<T: Real>(path: &Path) -> Result<(Mlp<T>, CheckpointMeta)> {
    let meta: CheckpointMeta = serde_json::from_slice(&fs::read(sidecar(path))?)?;
    let bytes = fs::read(path)?;
    let corrupt = |reason: &str| Error::Corrupt { path: path.display().to_string(), reason: reason.into() };
    if bytes.len() != meta.len * 8 {
        return Err(corrupt("length mismatch"));
    }
    if sha256_hex(&bytes) != meta.sha256 {
        return Err(corrupt("checksum mismatch"));
    }
    let values: Array1<T> = f64_from_le_bytes(&bytes).into_iter().map(T::lit).collect();
    Ok((Mlp::from_params(meta.config, values)?, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.bin");
        let net = Mlp::<f64>::init(MlpConfig::new(2, 3, 7).unwrap(), 42).unwrap();
        save_checkpoint(&path, &net, 42).unwrap();
        let (back, meta) = load_checkpoint::<f64>(&path).unwrap();
        assert_eq!(meta.seed, 42);
        assert!(net.params().iter().zip(back.params()).all(|(a, b)| a.to_bits() == b.to_bits()));

        let net32 = Mlp::<f32>::init(MlpConfig::new(2, 1, 3).unwrap(), 1).unwrap();
        save_checkpoint(&path, &net32, 1).unwrap();
        let (back32, _) = load_checkpoint::<f32>(&path).unwrap();
        assert!(net32.params().iter().zip(back32.params()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn corruption_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.bin");
        let net = Mlp::<f64>::init(MlpConfig::new(1, 1, 2).unwrap(), 0).unwrap();
        save_checkpoint(&path, &net, 0).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[3] ^= 0xff;
        fs::write(&path, bytes).unwrap();
        assert!(matches!(load_checkpoint::<f64>(&path), Err(Error::Corrupt { .. })));
    }
}
