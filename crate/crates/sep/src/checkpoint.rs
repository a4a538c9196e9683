//! Binary parameter files: magic, format version, length-prefixed JSON
//! config, then a length-prefixed block of little-endian `f32` values.

use std::fs;
use std::path::Path;

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::params::{Layout, Params};

const MAGIC: &[u8; 8] = b"BSEPCKPT";
const VERSION: u32 = 1;

pub fn encode(params: &Params) -> Vec<u8> {
    let config = serde_json::to_vec(&params.config).expect("config serialises");
    let mut out = Vec::with_capacity(24 + config.len() + 4 * params.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(config.len() as u64).to_le_bytes());
    out.extend_from_slice(&config);
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for v in &params.values {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> std::result::Result<Params, String> {
    let mut pos = 0;
    let mut take = |n: usize| -> std::result::Result<&[u8], String> {
        let s = bytes.get(pos..pos + n).ok_or_else(|| format!("truncated at byte {pos}"))?;
        pos += n;
        Ok(s)
    };
    if take(8)? != MAGIC {
        return Err("not a checkpoint file".into());
    }
    let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
    if version != VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let clen = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
    let config: ModelConfig = serde_json::from_slice(take(clen)?).map_err(|e| format!("config: {e}"))?;
    config.validate().map_err(|e| e.to_string())?;
    let count = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
    let expected = Layout::new(&config).total;
    if count != expected {
        return Err(format!("{count} parameters, layout needs {expected}"));
    }
    let block = take(4 * count)?;
    let values: Vec<f64> = block
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    if take(1).is_ok() {
        return Err("trailing bytes".into());
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err("non-finite parameter".into());
    }
    Ok(Params { config, values })
}

/// Writes via a temporary file so an interrupted save never leaves a
/// partial checkpoint behind.
pub fn save(params: &Params, path: &Path) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, encode(params)).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Params> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|reason| Error::Checkpoint {
        path: path.to_path_buf(),
        reason,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use binscene_core::signal::Rng;

    #[test]
    fn save_and_load() {
        let cfg = ModelConfig::tiny();
        let p = Params::init(&cfg, &mut Rng::new(2));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save(&p, &path).unwrap();
        let q = load(&path).unwrap();
        assert_eq!(q.config, cfg);
        for (a, b) in p.values.iter().zip(&q.values) {
            assert_eq!(*a as f32, *b as f32);
        }
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(bytes.len(), 8 + 4 + 8 + serde_json::to_vec(&cfg).unwrap().len() + 8 + 4 * p.len());
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let p = Params::zeros(&ModelConfig::tiny());
        let bytes = encode(&p);
        assert!(decode(&bytes[..bytes.len() - 1]).unwrap_err().contains("truncated"));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode(&extra).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
        let mut ver = bytes;
        ver[8] = 9;
        assert!(decode(&ver).unwrap_err().contains("version"));
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load(&dir.path().join("none")), Err(Error::Io { .. })));
    }
}
