//! Model (`AVAE`) and latent index (`ZIDX`) files: little-endian header,
//! raw `f32` payload and a SHA-256 footer over everything before it.

use std::fs;
use std::path::Path;

use anatomy_warden_core::nn::LatentIndex;
use anatomy_warden_core::vae::{Architecture, ConvSpec, VaeModel};
use anatomy_warden_core::LATENT_DIM;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 4] = b"AVAE";
pub const MODEL_VERSION: u32 = 1;
pub const INDEX_MAGIC: &[u8; 4] = b"ZIDX";
pub const INDEX_VERSION: u32 = 1;
const FOOTER: usize = 32;

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f32s(&mut self, vs: &[f32]) {
        self.0.reserve(vs.len() * 4);
        for v in vs {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
    fn finish(mut self, path: &Path) -> Result<()> {
        let digest = Sha256::digest(&self.0);
        self.0.extend_from_slice(&digest);
        fs::write(path, self.0).map_err(Error::io(path))
    }
}

struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::corrupt(self.path, "truncated"));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| Error::corrupt(self.path, "size overflow"))?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
    fn done(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::corrupt(self.path, "trailing bytes"));
        }
        Ok(())
    }
}

/// Reads the file, checks magic, version and digest; returns the body
/// after magic and version.
fn open_verified(path: &Path, magic: &'static [u8; 4], version: u32) -> Result<Vec<u8>> {
    if path.as_os_str().is_empty() {
        return Err(Error::EmptyPath);
    }
    let mut bytes = fs::read(path).map_err(Error::io(path))?;
    if bytes.len() < 4 || &bytes[..4] != magic {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: std::str::from_utf8(magic).unwrap(),
        });
    }
    if bytes.len() < 8 + FOOTER {
        return Err(Error::corrupt(path, "truncated"));
    }
    let found = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if found != version {
        return Err(Error::VersionMismatch {
            path: path.to_path_buf(),
            found,
            expected: version,
        });
    }
    let body_end = bytes.len() - FOOTER;
    if Sha256::digest(&bytes[..body_end]).as_slice() != &bytes[body_end..] {
        return Err(Error::corrupt(path, "checksum mismatch"));
    }
    bytes.truncate(body_end);
    bytes.drain(..8);
    Ok(bytes)
}

fn u32_of(v: usize, path: &Path) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::corrupt(path, "value exceeds u32"))
}

/// Descriptor: grid, latent width, layer count, `(channels, stride)` per
/// layer, then every tensor's rank and dimensions in storage order.
pub fn save_model(model: &VaeModel<f32>, path: &Path) -> Result<()> {
    if path.as_os_str().is_empty() {
        return Err(Error::EmptyPath);
    }
    let arch = model.arch();
    let mut w = Writer(Vec::with_capacity(64 + model.num_params() * 4));
    w.0.extend_from_slice(MODEL_MAGIC);
    w.u32(MODEL_VERSION);
    w.u32(u32_of(arch.grid, path)?);
    w.u32(u32_of(arch.latent_dim, path)?);
    w.u32(u32_of(arch.layers.len(), path)?);
    for l in &arch.layers {
        w.u32(u32_of(l.channels, path)?);
        w.u32(u32_of(l.stride, path)?);
    }
    let layout = model.layout();
    w.u32(u32_of(layout.tensors.len(), path)?);
    for t in &layout.tensors {
        w.u32(u32_of(t.shape.len(), path)?);
        for &d in &t.shape {
            w.u32(u32_of(d, path)?);
        }
    }
    w.f32s(model.params());
    w.finish(path)
}

pub fn load_model(path: &Path) -> Result<VaeModel<f32>> {
    let body = open_verified(path, MODEL_MAGIC, MODEL_VERSION)?;
    let mut r = Reader {
        path,
        bytes: &body,
        pos: 0,
    };
    let grid = r.u32()? as usize;
    let latent_dim = r.u32()? as usize;
    let layer_count = r.u32()? as usize;
    if layer_count > 64 {
        return Err(Error::corrupt(path, "implausible layer count"));
    }
    let mut layers = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        layers.push(ConvSpec {
            channels: r.u32()? as usize,
            stride: r.u32()? as usize,
        });
    }
    let arch = Architecture {
        grid,
        latent_dim,
        layers,
    };
    arch.validate()?;
    let layout = arch.layout();
    let tensors = r.u32()? as usize;
    if tensors != layout.tensors.len() {
        return Err(Error::corrupt(path, "tensor count does not match descriptor"));
    }
    for t in &layout.tensors {
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        if shape != t.shape {
            return Err(Error::corrupt(path, format!("shape of {} does not match descriptor", t.name)));
        }
    }
    let params = r.f32s(layout.total)?;
    r.done()?;
    Ok(VaeModel::from_params(arch, params)?)
}

pub fn save_index(index: &LatentIndex, path: &Path) -> Result<()> {
    if path.as_os_str().is_empty() {
        return Err(Error::EmptyPath);
    }
    let mut w = Writer(Vec::with_capacity(20 + index.as_flat().len() * 4));
    w.0.extend_from_slice(INDEX_MAGIC);
    w.u32(INDEX_VERSION);
    w.u64(index.len() as u64);
    w.u32(LATENT_DIM as u32);
    w.f32s(index.as_flat());
    w.finish(path)
}

pub fn load_index(path: &Path) -> Result<LatentIndex> {
    let body = open_verified(path, INDEX_MAGIC, INDEX_VERSION)?;
    let mut r = Reader {
        path,
        bytes: &body,
        pos: 0,
    };
    let n = usize::try_from(r.u64()?).map_err(|_| Error::corrupt(path, "count overflow"))?;
    let d = r.u32()? as usize;
    if d != LATENT_DIM {
        return Err(Error::corrupt(path, format!("dimension {d}, expected {LATENT_DIM}")));
    }
    let len = n
        .checked_mul(d)
        .ok_or_else(|| Error::corrupt(path, "count overflow"))?;
    let data = r.f32s(len)?;
    r.done()?;
    Ok(LatentIndex::from_flat(data)?)
}
