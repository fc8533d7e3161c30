//! Model snapshot container.
//!
//! ```text
//! magic "MGCKPT\0\0" | version u32
//! arch JSON          u32 length + UTF-8
//! motions            u32 count + one motion code byte each
//! standardizer       u32 dim + dim f64 means + dim f64 stds
//! params             u32 count, each: u16 name length + name, u8 rank,
//!                    rank u32 dims, f64 values
//! trailer            SHA-256 of every preceding byte
//! ```
//!
//! Integers and floats are little-endian. Training mode and λ are not
//! stored, so equal weights give equal files.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{build_model, ArchConfig, Model, Standardizer};
use crate::error::{Error, Result};
use crate::labels::MotionLabel;
use crate::nn::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MGCKPT\0\0";
pub const CHECKPOINT_VERSION: u32 = 1;

fn put_u32(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_f64s(buf: &mut Vec<u8>, vs: &[f64]) {
    for v in vs {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn write_checkpoint<W: Write>(model: &Model, mut out: W) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let arch = serde_json::to_vec(&model.arch)?;
    put_u32(&mut buf, arch.len());
    buf.extend_from_slice(&arch);
    put_u32(&mut buf, model.motions.len());
    buf.extend(model.motions.iter().map(|m| m.code()));
    put_u32(&mut buf, model.standardizer.dim());
    put_f64s(&mut buf, &model.standardizer.mean);
    put_f64s(&mut buf, &model.standardizer.std);
    put_u32(&mut buf, model.params.len());
    for id in model.params.ids() {
        let name = model.params.name(id).as_bytes();
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name);
        let t = model.params.get(id);
        buf.push(t.shape().len() as u8);
        for &d in t.shape() {
            put_u32(&mut buf, d);
        }
        put_f64s(&mut buf, t.data());
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    out.write_all(&buf).map_err(|e| Error::io("<checkpoint>", e))
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let s = self
            .buf
            .get(self.pos..self.pos + n)
            .ok_or_else(|| Error::Corrupt("checkpoint truncated".into()))?;
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Corrupt("absurd length".into()))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Model> {
    let mut buf = Vec::new();
    input.read_to_end(&mut buf).map_err(|e| Error::io("<checkpoint>", e))?;
    if buf.len() < 12 || &buf[..8] != CHECKPOINT_MAGIC {
        return Err(Error::Corrupt("not a checkpoint (bad magic)".into()));
    }
    let version = u32::from_le_bytes(buf[8..12].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    if buf.len() < 12 + 32 {
        return Err(Error::Corrupt("checkpoint truncated".into()));
    }
    let (body, digest) = buf.split_at(buf.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Corrupt("checkpoint checksum mismatch".into()));
    }
    let mut c = Cursor { buf: body, pos: 12 };
    let arch_len = c.u32()?;
    let arch: ArchConfig = serde_json::from_slice(c.take(arch_len)?)?;
    let n_motions = c.u32()?;
    let motions = c
        .take(n_motions)?
        .iter()
        .map(|&b| MotionLabel::from_code(b).ok_or_else(|| Error::Corrupt(format!("bad motion code {b}"))))
        .collect::<Result<Vec<_>>>()?;
    let dim = c.u32()?;
    let standardizer = Standardizer {
        mean: c.f64s(dim)?,
        std: c.f64s(dim)?,
    };
    let mut model = build_model(&arch, &motions, standardizer, 0)?;
    let count = c.u32()?;
    if count != model.params.len() {
        return Err(Error::Corrupt(format!(
            "checkpoint has {count} parameter tensors, architecture {} needs {}",
            arch.name,
            model.params.len()
        )));
    }
    for id in model.params.ids().collect::<Vec<_>>() {
        let name_len = u16::from_le_bytes(c.take(2)?.try_into().unwrap()) as usize;
        let name =
            std::str::from_utf8(c.take(name_len)?).map_err(|_| Error::Corrupt("parameter name is not UTF-8".into()))?;
        if name != model.params.name(id) {
            return Err(Error::Corrupt(format!(
                "parameter {name} where {} was expected",
                model.params.name(id)
            )));
        }
        let rank = c.take(1)?[0] as usize;
        let shape = (0..rank).map(|_| c.u32()).collect::<Result<Vec<_>>>()?;
        if shape != model.params.get(id).shape() {
            return Err(Error::Corrupt(format!("parameter {name} has shape {shape:?}")));
        }
        let n = shape.iter().product();
        *model.params.get_mut(id) = Tensor::new(shape, c.f64s(n)?)?;
    }
    if c.pos != body.len() {
        return Err(Error::Corrupt("trailing bytes in checkpoint".into()));
    }
    Ok(model)
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(model, &mut buf)?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(std::io::BufReader::new(f))
}
