//! Binary checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "MTKCKPT\0" | version u32 | config (u32 len, TOML text) | step u64
//! | meta count u32, then (u32 len, key, u32 len, value) pairs
//! | tensor count u32, then per tensor:
//!     u32 name len, name, dtype u8 (1 = f64), flags u8 (bit 0 trainable),
//!     ndim u32, dims u64 each, values f64
//! | optimizer flag u8; if 1: t u64, then m and v of each trainable tensor
//! | SHA-256 of everything above (32 bytes)
//! ```
//!
//! The digest is verified before anything is parsed, so a truncated or
//! corrupted file never yields a partial load. A text manifest with tensor
//! names and checksums is written next to the binary.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::config::ModelConfig;
use crate::error::{ModelError, Result};
use crate::optim::AdamState;
use crate::params::ParameterSet;

pub const MAGIC: &[u8; 8] = b"MTKCKPT\0";
pub const VERSION: u32 = 1;
const DTYPE_F64: u8 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ParameterSet,
    pub optimizer: Option<AdamState>,
    /// Number of completed training steps.
    pub step: u64,
    /// Free-form run metadata (seed, stage, ablation, ...).
    pub meta: BTreeMap<String, String>,
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len());
    out.extend_from_slice(s.as_bytes());
}

fn put_f64s(out: &mut Vec<u8>, v: &[f64]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(ModelError::Checkpoint(format!("unexpected end of data at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn str(&mut self) -> Result<String> {
        let n = self.u32()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| ModelError::Checkpoint("string is not UTF-8".into()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| ModelError::Checkpoint("tensor too large".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

/// Path of the text manifest that accompanies `path`.
pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

impl Checkpoint {
    pub fn new(params: ParameterSet, optimizer: Option<AdamState>, step: u64) -> Self {
        Self {
            params,
            optimizer,
            step,
            meta: BTreeMap::new(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let config = toml::to_string(&self.params.config)
            .map_err(|e| ModelError::Checkpoint(format!("cannot serialize config: {e}")))?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        put_str(&mut out, &config);
        out.extend_from_slice(&self.step.to_le_bytes());
        put_u32(&mut out, self.meta.len());
        for (k, v) in &self.meta {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }
        put_u32(&mut out, self.params.params.len());
        for p in &self.params.params {
            put_str(&mut out, &p.name);
            out.push(DTYPE_F64);
            out.push(p.trainable as u8);
            put_u32(&mut out, p.tensor.shape.len());
            for &d in &p.tensor.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            put_f64s(&mut out, &p.tensor.data);
        }
        match &self.optimizer {
            None => out.push(0),
            Some(s) => {
                if !s.matches(&self.params) {
                    return Err(ModelError::Checkpoint("optimizer state does not match the trainable set".into()));
                }
                out.push(1);
                out.extend_from_slice(&s.t.to_le_bytes());
                for (m, v) in s.m.iter().zip(&s.v) {
                    if let (Some(m), Some(v)) = (m, v) {
                        put_f64s(&mut out, m);
                        put_f64s(&mut out, v);
                    }
                }
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(ModelError::Checkpoint("not a checkpoint (bad magic)".into()));
        }
        if bytes.len() < MAGIC.len() + 4 + DIGEST_LEN {
            return Err(ModelError::ChecksumMismatch);
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(ModelError::Checkpoint(format!("unsupported version {version}, expected {VERSION}")));
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(ModelError::ChecksumMismatch);
        }

        let mut r = Reader { buf: body, pos: 12 };
        let config: ModelConfig = toml::from_str(&r.str()?)
            .map_err(|e| ModelError::Checkpoint(format!("bad config section: {e}")))?;
        let step = r.u64()?;
        let mut meta = BTreeMap::new();
        for _ in 0..r.u32()? {
            let k = r.str()?;
            meta.insert(k, r.str()?);
        }
        let mut params = ParameterSet::allocated(&config)?;
        let count = r.u32()?;
        if count != params.params.len() {
            return Err(ModelError::Checkpoint(format!(
                "{count} tensors stored, config implies {}",
                params.params.len()
            )));
        }
        for p in params.params.iter_mut() {
            let name = r.str()?;
            if name != p.name {
                return Err(ModelError::Checkpoint(format!("expected tensor {}, found {name}", p.name)));
            }
            if r.u8()? != DTYPE_F64 {
                return Err(ModelError::Checkpoint(format!("{name}: unsupported dtype")));
            }
            p.trainable = r.u8()? & 1 == 1;
            let ndim = r.u32()?;
            let shape = (0..ndim).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            if shape != p.tensor.shape {
                return Err(ModelError::Checkpoint(format!(
                    "{name}: shape {shape:?}, expected {:?}",
                    p.tensor.shape
                )));
            }
            p.tensor.data = r.f64s(p.tensor.len())?;
        }
        let optimizer = match r.u8()? {
            0 => None,
            1 => {
                let mut s = AdamState::new(&params);
                s.t = r.u64()?;
                for (i, p) in params.params.iter().enumerate() {
                    if p.trainable {
                        s.m[i] = Some(r.f64s(p.tensor.len())?);
                        s.v[i] = Some(r.f64s(p.tensor.len())?);
                    }
                }
                Some(s)
            }
            f => return Err(ModelError::Checkpoint(format!("bad optimizer flag {f}"))),
        };
        if r.pos != body.len() {
            return Err(ModelError::Checkpoint(format!("{} trailing bytes", body.len() - r.pos)));
        }
        Ok(Self {
            params,
            optimizer,
            step,
            meta,
        })
    }

    /// Writes the checkpoint and its manifest. The binary goes through a
    /// temporary file so an interrupted save leaves the old file intact.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        let tmp = PathBuf::from(tmp);
        fs::write(&tmp, &bytes).map_err(|e| ModelError::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| ModelError::io(path, e))?;
        let mpath = manifest_path(path);
        fs::write(&mpath, self.manifest()).map_err(|e| ModelError::io(&mpath, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| ModelError::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Tab-separated summary: header key/value lines, then one line per
    /// tensor with name, shape, role and SHA-256.
    pub fn manifest(&self) -> String {
        let c = &self.params.config;
        let mut out = format!("format\tmtkit-checkpoint\t{VERSION}\nstep\t{}\n", self.step);
        out.push_str(&format!("seed\t{}\n", c.seed));
        out.push_str(&format!("init_mode\t{}\n", c.init_mode.as_str()));
        out.push_str(&format!("moe_placement\t{}\n", c.moe_placement.as_str()));
        for (k, v) in &self.meta {
            out.push_str(&format!("meta.{k}\t{v}\n"));
        }
        out.push_str(&format!("frozen_checksum\t{}\n", self.params.frozen_checksum()));
        for p in &self.params.params {
            let shape: Vec<String> = p.tensor.shape.iter().map(|d| d.to_string()).collect();
            out.push_str(&format!(
                "tensor\t{}\t{}\t{}\t{}\n",
                p.name,
                shape.join("x"),
                if p.trainable { "trainable" } else { "frozen" },
                p.tensor.checksum()
            ));
        }
        out
    }
}
