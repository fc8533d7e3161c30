//! Binary feature dataset container.
//!
//! ```text
//! offset  size         field
//! 0       8            magic "MGFEAT\0\0"
//! 8       4            format version, u32 LE (currently 1)
//! 12      4            profile dimension, u32 LE (380)
//! 16      8            record count, u64 LE
//! 24      count * R    records, R = 8 * dim + 12 bytes:
//!                        dim f64 LE    profile values
//!                        u8            device label (1 on-body, 0 off-body)
//!                        u8            motion code (0 sitting .. 5 uncontrolled)
//!                        u8            1 when the spectrum was all zero
//!                        u8            reserved, 0
//!                        u32 LE        source trace id
//!                        u32 LE        segment index within the trace
//! end-32  32           SHA-256 of every preceding byte
//! ```

use std::io::{Read, Write};

use sha2::{Digest, Sha256};

use super::{PropagationProfile, PROFILE_DIM};
use crate::error::{Error, Result};
use crate::labels::{DeviceLabel, MotionLabel};

pub const FEATURE_FILE_MAGIC: &[u8; 8] = b"MGFEAT\0\0";
pub const FEATURE_FILE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub profile: PropagationProfile,
    pub trace_id: u32,
    pub segment_index: u32,
}

pub fn write_feature_file<W: Write>(mut out: W, records: &[FeatureRecord]) -> Result<()> {
    let mut buf = Vec::with_capacity(24 + records.len() * (PROFILE_DIM * 8 + 12) + 32);
    buf.extend_from_slice(FEATURE_FILE_MAGIC);
    buf.extend_from_slice(&FEATURE_FILE_VERSION.to_le_bytes());
    buf.extend_from_slice(&(PROFILE_DIM as u32).to_le_bytes());
    buf.extend_from_slice(&(records.len() as u64).to_le_bytes());
    for r in records {
        let values = r.profile.to_vec();
        if values.len() != PROFILE_DIM {
            return Err(Error::Shape(format!("record has {} values", values.len())));
        }
        for v in values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.push(r.profile.link.code());
        buf.push(r.profile.motion.code());
        buf.push(r.profile.zero_spectrum as u8);
        buf.push(0);
        buf.extend_from_slice(&r.trace_id.to_le_bytes());
        buf.extend_from_slice(&r.segment_index.to_le_bytes());
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    out.write_all(&buf).map_err(|e| Error::io("<feature file>", e))
}

fn take<'a>(buf: &'a [u8], pos: &mut usize, n: usize) -> Result<&'a [u8]> {
    let s = buf
        .get(*pos..*pos + n)
        .ok_or_else(|| Error::Corrupt("feature file truncated".into()))?;
    *pos += n;
    Ok(s)
}

fn u32_at(buf: &[u8], pos: &mut usize) -> Result<u32> {
    Ok(u32::from_le_bytes(take(buf, pos, 4)?.try_into().unwrap()))
}

pub fn read_feature_file<R: Read>(mut input: R) -> Result<Vec<FeatureRecord>> {
    let mut buf = Vec::new();
    input
        .read_to_end(&mut buf)
        .map_err(|e| Error::io("<feature file>", e))?;
    if buf.len() < 24 + 32 || &buf[..8] != FEATURE_FILE_MAGIC {
        return Err(Error::Corrupt("not a feature file (bad magic)".into()));
    }
    let mut pos = 8;
    let version = u32_at(&buf, &mut pos)?;
    if version != FEATURE_FILE_VERSION {
        return Err(Error::Version {
            found: version,
            expected: FEATURE_FILE_VERSION,
        });
    }
    let (body, digest) = buf.split_at(buf.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Corrupt("feature file checksum mismatch".into()));
    }
    let dim = u32_at(body, &mut pos)? as usize;
    if dim != PROFILE_DIM {
        return Err(Error::Shape(format!(
            "feature file dimension {dim}, expected {PROFILE_DIM}"
        )));
    }
    let count = u64::from_le_bytes(take(body, &mut pos, 8)?.try_into().unwrap()) as usize;
    let mut records = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let values: Vec<f64> = take(body, &mut pos, dim * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let tags = take(body, &mut pos, 4)?;
        let link =
            DeviceLabel::from_code(tags[0]).ok_or_else(|| Error::Corrupt(format!("bad device code {}", tags[0])))?;
        let motion =
            MotionLabel::from_code(tags[1]).ok_or_else(|| Error::Corrupt(format!("bad motion code {}", tags[1])))?;
        let mut profile = PropagationProfile::from_vec(&values, link, motion)?;
        profile.zero_spectrum = tags[2] != 0;
        let trace_id = u32_at(body, &mut pos)?;
        let segment_index = u32_at(body, &mut pos)?;
        records.push(FeatureRecord {
            profile,
            trace_id,
            segment_index,
        });
    }
    if pos != body.len() {
        return Err(Error::Corrupt("trailing bytes after records".into()));
    }
    Ok(records)
}
