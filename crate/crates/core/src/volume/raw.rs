//! The `ORGV` intensity and `ORGM` label-mask container formats.
//!
//! Both share one layout: 4-byte magic, `u32` version (1), three `u32` dims,
//! three `f32` spacings in mm, then the voxel payload (`f32` for volumes,
//! `u16` for masks). Everything is little-endian.

use super::{voxel_count, Dims, LabelMask, Spacing, Volume};
use crate::codec::{put_f32s, put_u16, put_u32, Reader};
use crate::error::{Error, Result};

pub const RAW_MAGIC: &[u8; 4] = b"ORGV";
pub const MASK_MAGIC: &[u8; 4] = b"ORGM";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 12 + 12;

fn read_header(r: &mut Reader<'_>, magic: &[u8; 4]) -> Result<(Dims, Spacing, usize)> {
    r.magic(magic)?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let dims = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
    let spacing = [r.f32()?, r.f32()?, r.f32()?];
    let n = voxel_count(dims).map_err(|e| Error::MalformedHeader(e.to_string()))?;
    if !spacing.iter().all(|s| s.is_finite() && *s > 0.0) {
        return Err(Error::MalformedHeader(format!("invalid spacing {spacing:?}")));
    }
    Ok((dims, spacing, n))
}

fn write_header(out: &mut Vec<u8>, magic: &[u8; 4], dims: Dims, spacing: Spacing) {
    out.extend_from_slice(magic);
    put_u32(out, VERSION);
    for d in dims {
        put_u32(out, d as u32);
    }
    put_f32s(out, &spacing);
}

pub fn parse_raw(bytes: &[u8]) -> Result<Volume> {
    let mut r = Reader::new(bytes);
    let (dims, spacing, n) = read_header(&mut r, RAW_MAGIC)?;
    let data = r.f32_vec(n)?;
    r.finish()?;
    Volume::new(dims, spacing, data)
}

pub fn write_raw(volume: &Volume) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + volume.len() * 4);
    write_header(&mut out, RAW_MAGIC, volume.dims(), volume.spacing_mm());
    put_f32s(&mut out, volume.data());
    out
}

/// Reads an `ORGM` mask. The class count is inferred from the largest label.
pub fn parse_mask(bytes: &[u8]) -> Result<LabelMask> {
    let mut r = Reader::new(bytes);
    let (dims, spacing, n) = read_header(&mut r, MASK_MAGIC)?;
    let labels = r.u16_vec(n)?;
    r.finish()?;
    LabelMask::from_labels(dims, spacing, labels).map_err(|e| Error::MalformedHeader(e.to_string()))
}

pub fn write_mask(mask: &LabelMask) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + mask.len() * 2);
    write_header(&mut out, MASK_MAGIC, mask.dims(), mask.spacing_mm());
    for &l in mask.labels() {
        put_u16(&mut out, l);
    }
    out
}
