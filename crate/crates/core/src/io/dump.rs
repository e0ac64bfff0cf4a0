//! Embedding dump files.
//!
//! ```text
//! offset  size     field
//! 0       4        magic "EDTE"
//! 4       4        version (u32 LE) = 1
//! 8       4        N rows (u32 LE)
//! 12      4        d columns (u32 LE)
//! 16      4·N·d    payload, f32 LE, row-major
//! …       4        manifest length M (u32 LE)
//! …       M        manifest, UTF-8 JSON
//! ```

use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{EmbeddingSet, Provenance};

pub const DUMP_MAGIC: &[u8; 4] = b"EDTE";
pub const DUMP_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpManifest {
    pub environment: String,
    pub model_variant: String,
    pub dataset: String,
    pub seed: u64,
    pub repetition: u32,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub episode_return: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub performance_hns: Option<f64>,
}

impl DumpManifest {
    pub fn for_set(set: &EmbeddingSet) -> Self {
        let created_at = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let m = &set.meta;
        DumpManifest {
            environment: m.environment.clone(),
            model_variant: m.model_variant.clone(),
            dataset: m.dataset.clone(),
            seed: m.seed,
            repetition: m.repetition,
            created_at,
            episode_return: None,
            performance_hns: None,
        }
    }

    pub fn provenance(&self) -> Provenance {
        Provenance {
            environment: self.environment.clone(),
            model_variant: self.model_variant.clone(),
            dataset: self.dataset.clone(),
            seed: self.seed,
            repetition: self.repetition,
        }
    }
}

/// Serialises `set` with a manifest stamped with the current time.
pub fn encode_embedding_dump(set: &EmbeddingSet, manifest: &DumpManifest) -> Result<Vec<u8>> {
    let (n, d) = (set.rows(), set.dim());
    let rows = u32::try_from(n).map_err(|_| Error::InvalidData("too many rows".into()))?;
    let cols = u32::try_from(d).map_err(|_| Error::InvalidData("too many columns".into()))?;
    let json = serde_json::to_vec(manifest).map_err(|e| Error::InvalidData(e.to_string()))?;
    let mut buf = Vec::with_capacity(HEADER_LEN + 4 * n * d + 4 + json.len());
    buf.extend_from_slice(DUMP_MAGIC);
    buf.extend_from_slice(&DUMP_VERSION.to_le_bytes());
    buf.extend_from_slice(&rows.to_le_bytes());
    buf.extend_from_slice(&cols.to_le_bytes());
    for (i, &v) in set.data().iter().enumerate() {
        let f = v as f32;
        if !f.is_finite() {
            return Err(Error::InvalidData(format!("value at row {}, column {} is not a finite f32", i / d, i % d)));
        }
        buf.extend_from_slice(&f.to_le_bytes());
    }
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    Ok(buf)
}

pub fn write_embedding_dump(set: &EmbeddingSet, path: &Path) -> Result<()> {
    write_embedding_dump_with(set, &DumpManifest::for_set(set), path)
}

pub fn write_embedding_dump_with(set: &EmbeddingSet, manifest: &DumpManifest, path: &Path) -> Result<()> {
    let bytes = encode_embedding_dump(set, manifest)?;
    fs::write(path, bytes).map_err(Error::Write)
}

pub fn read_embedding_dump(path: &Path) -> Result<EmbeddingSet> {
    Ok(read_embedding_dump_full(path)?.0)
}

/// Reads a dump and returns the set together with its full manifest.
pub fn read_embedding_dump_full(path: &Path) -> Result<(EmbeddingSet, DumpManifest)> {
    let bytes = fs::read(path)?;
    decode_embedding_dump(&bytes, path)
}

pub fn decode_embedding_dump(bytes: &[u8], path: &Path) -> Result<(EmbeddingSet, DumpManifest)> {
    if bytes.len() < 4 || &bytes[..4] != DUMP_MAGIC {
        return Err(Error::BadMagic(path.to_path_buf()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::LengthMismatch(format!("header truncated at {} bytes", bytes.len())));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let version = u32_at(4);
    if version != DUMP_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let n = u32_at(8) as usize;
    let d = u32_at(12) as usize;
    let payload = n
        .checked_mul(d)
        .and_then(|x| x.checked_mul(4))
        .ok_or_else(|| Error::LengthMismatch("declared payload overflows".into()))?;
    let manifest_at = HEADER_LEN + payload;
    if bytes.len() < manifest_at + 4 {
        return Err(Error::LengthMismatch(format!(
            "file has {} bytes, header declares at least {}",
            bytes.len(),
            manifest_at + 4
        )));
    }
    let m_len = u32_at(manifest_at) as usize;
    let expected = manifest_at + 4 + m_len;
    if bytes.len() != expected {
        return Err(Error::LengthMismatch(format!(
            "file has {} bytes, layout declares {expected}",
            bytes.len()
        )));
    }
    let data: Vec<f64> = bytes[HEADER_LEN..manifest_at]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    let manifest: DumpManifest = serde_json::from_slice(&bytes[manifest_at + 4..])
        .map_err(|e| Error::InvalidData(format!("manifest: {e}")))?;
    let set = EmbeddingSet::new(n, d, data, manifest.provenance())?;
    Ok((set, manifest))
}
