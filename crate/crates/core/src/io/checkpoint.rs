//! Versioned binary checkpoints for toy models and standalone RND pairs.
//!
//! ```text
//! "EDTC" | version u32 | kind u32 | total length u64
//! config length u32 | config JSON
//! tensor count u32 | { name length u32 | name | n u64 | n × f64 } …
//! target length u64 | target tensors (same encoding) | SHA-256 of target bytes
//! ```
//!
//! All integers and floats are little-endian. A target length of zero means
//! the model has no RND pair and no digest follows.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::edt::{ToyEdtConfig, ToyEdtModel};
use crate::error::{Error, Result};
use crate::nn::Parameters;
use crate::rnd::{MlpNetwork, RndConfig, RndPair};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"EDTC";
pub const CHECKPOINT_VERSION: u32 = 1;
const KIND_MODEL: u32 = 1;
const KIND_RND: u32 = 2;
const HEADER_LEN: usize = 20;

type Tensors = Vec<(String, Vec<f64>)>;

fn encode_tensors(buf: &mut Vec<u8>, tensors: &[(String, &[f64])]) {
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, data) in tensors {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(data.len() as u64).to_le_bytes());
        for v in *data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
}

fn target_section(target: &MlpNetwork) -> Vec<u8> {
    let mut buf = Vec::new();
    encode_tensors(&mut buf, &target.named_params());
    buf
}

/// SHA-256 of the serialised RND target parameters.
pub fn rnd_target_hash(pair: &RndPair) -> [u8; 32] {
    Sha256::digest(target_section(pair.target())).into()
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn encode<C: Serialize>(kind: u32, config: &C, params: &[(String, &[f64])], target: Option<&MlpNetwork>) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(config).map_err(|e| Error::InvalidData(e.to_string()))?;
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&kind.to_le_bytes());
    buf.extend_from_slice(&0u64.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    encode_tensors(&mut buf, params);
    match target {
        Some(t) => {
            let section = target_section(t);
            buf.extend_from_slice(&(section.len() as u64).to_le_bytes());
            buf.extend_from_slice(&section);
            buf.extend_from_slice(&Sha256::digest(&section));
        }
        None => buf.extend_from_slice(&0u64.to_le_bytes()),
    }
    let total = buf.len() as u64;
    buf[12..20].copy_from_slice(&total.to_le_bytes());
    Ok(buf)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::LengthMismatch(format!("need {n} bytes at offset {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len_u64(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::LengthMismatch("length does not fit in memory".into()))
    }

    fn tensors(&mut self) -> Result<Tensors> {
        let count = self.u32()? as usize;
        let mut out = Vec::new();
        for _ in 0..count {
            let name_len = self.u32()? as usize;
            let name = std::str::from_utf8(self.take(name_len)?)
                .map_err(|_| Error::InvalidData("tensor name is not UTF-8".into()))?
                .to_string();
            let n = self.len_u64()?;
            let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::LengthMismatch("tensor too large".into()))?)?;
            let data = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            out.push((name, data));
        }
        Ok(out)
    }
}

struct Decoded<C> {
    config: C,
    params: Tensors,
    target: Option<Tensors>,
}

fn decode<C: DeserializeOwned>(bytes: &[u8], path: &Path, kind: u32) -> Result<Decoded<C>> {
    if bytes.len() < 4 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic(path.to_path_buf()));
    }
    let mut c = Cursor { bytes, pos: 4 };
    let version = c.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch { found: version, expected: CHECKPOINT_VERSION });
    }
    let found_kind = c.u32()?;
    let total = c.u64()?;
    if total != bytes.len() as u64 {
        return Err(Error::LengthMismatch(format!("header declares {total} bytes, file has {}", bytes.len())));
    }
    if found_kind != kind {
        return Err(Error::ShapeMismatch(format!("checkpoint kind {found_kind}, expected {kind}")));
    }
    debug_assert_eq!(c.pos, HEADER_LEN);
    let json_len = c.u32()? as usize;
    let config = serde_json::from_slice(c.take(json_len)?).map_err(|e| Error::InvalidData(format!("config: {e}")))?;
    let params = c.tensors()?;
    let target_len = c.len_u64()?;
    let target = if target_len == 0 {
        None
    } else {
        let section = c.take(target_len)?;
        let digest = c.take(32)?;
        if Sha256::digest(section).as_slice() != digest {
            return Err(Error::HashMismatch);
        }
        let mut inner = Cursor { bytes: section, pos: 0 };
        let t = inner.tensors()?;
        if inner.pos != section.len() {
            return Err(Error::LengthMismatch("trailing bytes in target section".into()));
        }
        Some(t)
    };
    if c.pos != bytes.len() {
        return Err(Error::LengthMismatch(format!("{} trailing bytes", bytes.len() - c.pos)));
    }
    Ok(Decoded { config, params, target })
}

/// Copies stored tensors into `dst`, which must have the same names and sizes
/// in the same order.
fn fill(dst: Vec<(String, &mut [f64])>, src: Tensors) -> Result<()> {
    if dst.len() != src.len() {
        return Err(Error::ShapeMismatch(format!("expected {} tensors, found {}", dst.len(), src.len())));
    }
    for ((name, d), (src_name, s)) in dst.into_iter().zip(src) {
        if name != src_name || d.len() != s.len() {
            return Err(Error::ShapeMismatch(format!(
                "tensor '{src_name}' ({} values) does not fit '{name}' ({} values)",
                s.len(),
                d.len()
            )));
        }
        d.copy_from_slice(&s);
    }
    Ok(())
}

fn rebuild_pair(mut skeleton: RndPair, predictor: Option<Tensors>, target: Option<Tensors>) -> Result<RndPair> {
    let target_tensors = target.ok_or_else(|| Error::ShapeMismatch("missing RND target section".into()))?;
    if let Some(p) = predictor {
        fill(skeleton.predictor.named_params_mut(), p)?;
    }
    let mut t = skeleton.target().clone();
    fill(t.named_params_mut(), target_tensors)?;
    RndPair::from_parts(skeleton.config, skeleton.predictor, t)
}

pub fn encode_model(model: &ToyEdtModel) -> Result<Vec<u8>> {
    encode(
        KIND_MODEL,
        &model.config,
        &model.trainable_params(),
        model.rnd.as_ref().map(RndPair::target),
    )
}

pub fn decode_model(bytes: &[u8], path: &Path) -> Result<ToyEdtModel> {
    let d: Decoded<ToyEdtConfig> = decode(bytes, path, KIND_MODEL)?;
    let mut model = ToyEdtModel::new(d.config)?;
    fill(model.trainable_params_mut(), d.params)?;
    model.rnd = match model.rnd.take() {
        Some(pair) => Some(rebuild_pair(pair, None, d.target)?),
        None if d.target.is_some() => {
            return Err(Error::ShapeMismatch("RND target stored for a model without RND".into()))
        }
        None => None,
    };
    Ok(model)
}

pub fn save_model(model: &ToyEdtModel, path: &Path) -> Result<()> {
    fs::write(path, encode_model(model)?).map_err(Error::Write)
}

pub fn load_model(path: &Path) -> Result<ToyEdtModel> {
    decode_model(&fs::read(path)?, path)
}

pub fn encode_rnd(pair: &RndPair) -> Result<Vec<u8>> {
    encode(KIND_RND, &pair.config, &pair.predictor.named_params(), Some(pair.target()))
}

pub fn decode_rnd(bytes: &[u8], path: &Path) -> Result<RndPair> {
    let d: Decoded<RndConfig> = decode(bytes, path, KIND_RND)?;
    let skeleton = skeleton_pair(d.config)?;
    rebuild_pair(skeleton, Some(d.params), d.target)
}

/// A pair with the right shapes; every value is overwritten on load.
fn skeleton_pair(config: RndConfig) -> Result<RndPair> {
    use rand::SeedableRng;
    RndPair::new(config, &mut rand_chacha::ChaCha8Rng::seed_from_u64(0))
}

pub fn save_rnd(pair: &RndPair, path: &Path) -> Result<()> {
    fs::write(path, encode_rnd(pair)?).map_err(Error::Write)
}

pub fn load_rnd(path: &Path) -> Result<RndPair> {
    decode_rnd(&fs::read(path)?, path)
}

/// Reads only the target digest stored in a model checkpoint, after
/// checking it against the stored section.
pub fn stored_target_hash(path: &Path) -> Result<Option<[u8; 32]>> {
    let bytes = fs::read(path)?;
    let d: Decoded<serde_json::Value> = decode(&bytes, path, KIND_MODEL)?;
    Ok(d.target.map(|_| {
        let digest = &bytes[bytes.len() - 32..];
        digest.try_into().expect("32 bytes")
    }))
}
