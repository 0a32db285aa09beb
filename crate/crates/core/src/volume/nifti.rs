//! Reader for single-file NIfTI-1 (`.nii`) images.
//!
//! Only the fields needed to recover a 3D scalar grid are decoded: `dim`,
//! `datatype`, `pixdim`, `vox_offset` and the intensity scaling pair.
//! Orientation (qform/sform) is ignored and voxels keep their stored order.

use byteorder::{BigEndian, ByteOrder, LittleEndian};

use super::{voxel_count, Volume};
use crate::error::{Error, Result};

const SIZEOF_HDR: i32 = 348;
const MIN_FILE_LEN: usize = 352;

mod offsets {
    pub const DIM: usize = 40;
    pub const DATATYPE: usize = 70;
    pub const PIXDIM: usize = 76;
    pub const VOX_OFFSET: usize = 108;
    pub const SCL_SLOPE: usize = 112;
    pub const SCL_INTER: usize = 116;
    pub const MAGIC: usize = 344;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DataType {
    UInt8,
    Int16,
    Int32,
    Float32,
}

impl DataType {
    fn from_code(code: i16) -> Result<Self> {
        match code {
            2 => Ok(Self::UInt8),
            4 => Ok(Self::Int16),
            8 => Ok(Self::Int32),
            16 => Ok(Self::Float32),
            other => Err(Error::UnsupportedDatatype(other)),
        }
    }

    fn size(self) -> usize {
        match self {
            Self::UInt8 => 1,
            Self::Int16 => 2,
            Self::Int32 | Self::Float32 => 4,
        }
    }
}

/// A decoded NIfTI image.
#[derive(Debug, Clone)]
pub struct NiftiImage {
    pub volume: Volume,
    /// Raw stored values when the file holds unscaled non-negative integers
    /// that fit in `u16`, which is how segmentation label maps are shipped.
    pub labels: Option<Vec<u16>>,
}

impl NiftiImage {
    /// Interprets the image as a label map.
    pub fn into_mask(self) -> Result<super::LabelMask> {
        let labels = self
            .labels
            .ok_or_else(|| Error::InvalidInput("NIfTI image does not hold unscaled integer labels".into()))?;
        super::LabelMask::from_labels(self.volume.dims(), self.volume.spacing_mm(), labels)
    }
}

pub fn parse_nifti(bytes: &[u8]) -> Result<NiftiImage> {
    if bytes.len() < MIN_FILE_LEN {
        return Err(Error::MalformedHeader(format!(
            "{} bytes is too short for a single-file NIfTI-1 image",
            bytes.len()
        )));
    }
    if LittleEndian::read_i32(bytes) == SIZEOF_HDR {
        parse_with::<LittleEndian>(bytes)
    } else if BigEndian::read_i32(bytes) == SIZEOF_HDR {
        parse_with::<BigEndian>(bytes)
    } else {
        Err(Error::MalformedHeader("sizeof_hdr is not 348 in either byte order".into()))
    }
}

fn parse_with<E: ByteOrder>(bytes: &[u8]) -> Result<NiftiImage> {
    if &bytes[offsets::MAGIC..offsets::MAGIC + 4] != b"n+1\0" {
        return Err(Error::MalformedHeader("magic is not \"n+1\\0\"".into()));
    }

    let dim = |i: usize| E::read_i16(&bytes[offsets::DIM + 2 * i..]);
    let rank = dim(0);
    match rank {
        3 => {}
        4 if dim(4) == 1 => {}
        other => return Err(Error::UnsupportedDimensionality(other)),
    }
    let mut dims = [0usize; 3];
    for (axis, d) in dims.iter_mut().enumerate() {
        let v = dim(axis + 1);
        if v < 1 {
            return Err(Error::MalformedHeader(format!("dim[{}] = {v}", axis + 1)));
        }
        *d = v as usize;
    }

    let datatype = DataType::from_code(E::read_i16(&bytes[offsets::DATATYPE..]))?;

    let mut spacing = [0f32; 3];
    for (axis, s) in spacing.iter_mut().enumerate() {
        *s = E::read_f32(&bytes[offsets::PIXDIM + 4 * (axis + 1)..]).abs();
    }
    if !spacing.iter().all(|s| s.is_finite() && *s > 0.0) {
        return Err(Error::MalformedHeader(format!("pixdim spacing {spacing:?}")));
    }

    let vox_offset = E::read_f32(&bytes[offsets::VOX_OFFSET..]);
    if !vox_offset.is_finite() || vox_offset < SIZEOF_HDR as f32 || vox_offset.fract() != 0.0 {
        return Err(Error::MalformedHeader(format!("vox_offset {vox_offset}")));
    }
    let start = vox_offset as usize;

    let n = voxel_count(dims).map_err(|e| Error::MalformedHeader(e.to_string()))?;
    let payload_len =
        n.checked_mul(datatype.size()).ok_or_else(|| Error::MalformedHeader("payload size overflows".into()))?;
    let end = start.saturating_add(payload_len);
    if bytes.len() < end {
        return Err(Error::TruncatedData { expected: end, found: bytes.len() });
    }
    let payload = &bytes[start..end];

    let slope = E::read_f32(&bytes[offsets::SCL_SLOPE..]);
    let inter = E::read_f32(&bytes[offsets::SCL_INTER..]);
    let scaled = slope != 0.0 && slope.is_finite();
    let identity = !scaled || (slope == 1.0 && inter == 0.0);

    let raw: Vec<f64> = match datatype {
        DataType::UInt8 => payload.iter().map(|&b| b as f64).collect(),
        DataType::Int16 => payload.chunks_exact(2).map(|c| E::read_i16(c) as f64).collect(),
        DataType::Int32 => payload.chunks_exact(4).map(|c| E::read_i32(c) as f64).collect(),
        DataType::Float32 => payload.chunks_exact(4).map(|c| E::read_f32(c) as f64).collect(),
    };

    let labels =
        if datatype != DataType::Float32 && identity && raw.iter().all(|&v| (0.0..=u16::MAX as f64).contains(&v)) {
            Some(raw.iter().map(|&v| v as u16).collect())
        } else {
            None
        };

    let data = if scaled {
        let (slope, inter) = (slope as f64, inter as f64);
        raw.iter().map(|&v| (v * slope + inter) as f32).collect()
    } else {
        raw.iter().map(|&v| v as f32).collect()
    };

    Ok(NiftiImage { volume: Volume::new(dims, spacing, data)?, labels })
}
