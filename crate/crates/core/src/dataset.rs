//! Training examples: sampled voxels, their labels and descriptors.
//!
//! Points are drawn from a ChaCha8 stream seeded with `SampleSpec::seed`
//! (`rand_chacha::ChaCha8Rng::seed_from_u64`). The uniform portion comes
//! first, each draw an index over all voxels. The balanced portion follows,
//! class by class in ascending label order, each draw a rank among that
//! class's voxels in x-fastest order.
//!
//! `ORGD` layout, little-endian: magic, `u32` version (1), `u32` descriptor
//! dim, `u64` row count, then per row `dim` × `f32` followed by a `u16`
//! label. The manifest sidecar has one `volume_id i j k label` line per row.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::codec::{put_f32s, put_u16, put_u32, put_u64, Reader};
use crate::error::{Error, Result};
use crate::sampler::VoxelOffsetTable;
use crate::sampler::{extract_into, CLIP};
use crate::volume::{coords_of, LabelMask, Volume};

pub const DATASET_MAGIC: &[u8; 4] = b"ORGD";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 8;
const EXPORT_CHUNK_ROWS: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleSpec {
    pub per_image_count: usize,
    pub balanced_fraction: f64,
    pub seed: u64,
}

impl Default for SampleSpec {
    fn default() -> Self {
        Self { per_image_count: 100_000, balanced_fraction: 0.10, seed: 0 }
    }
}

impl SampleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.per_image_count == 0 {
            return Err(Error::InvalidInput("per-image count must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.balanced_fraction) {
            return Err(Error::InvalidInput(format!("balanced fraction {} outside [0, 1]", self.balanced_fraction)));
        }
        Ok(())
    }

    /// `round(balanced_fraction · per_image_count)`.
    pub fn balanced_count(&self) -> usize {
        (self.balanced_fraction * self.per_image_count as f64).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplePoint {
    pub voxel: [usize; 3],
    pub label: u16,
}

pub fn sample_points(volume: &Volume, mask: &LabelMask, spec: &SampleSpec) -> Result<Vec<SamplePoint>> {
    spec.validate()?;
    mask.check_paired(volume)?;
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let dims = mask.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let balanced = spec.balanced_count();
    let uniform = spec.per_image_count - balanced;

    let mut points = Vec::with_capacity(spec.per_image_count);
    for _ in 0..uniform {
        let idx = rng.gen_range(0..mask.len());
        points.push(SamplePoint { voxel: coords_of(dims, idx), label: mask.labels()[idx] });
    }

    let histogram = mask.histogram();
    let present: Vec<usize> = (0..histogram.len()).filter(|&c| histogram[c] > 0).collect();
    if balanced == 0 || present.is_empty() {
        return Ok(points);
    }
    let per_class = balanced / present.len();
    let remainder = balanced % present.len();

    // (rank within class, output slot) per class, resolved in one mask sweep.
    let mut pending: Vec<Vec<(u64, usize)>> = vec![Vec::new(); histogram.len()];
    let mut slot = points.len();
    for (i, &class) in present.iter().enumerate() {
        let quota = per_class + usize::from(i < remainder);
        for _ in 0..quota {
            pending[class].push((rng.gen_range(0..histogram[class]), slot));
            slot += 1;
        }
    }
    points.resize(slot, SamplePoint { voxel: [0; 3], label: 0 });
    for list in &mut pending {
        list.sort_unstable();
    }

    let mut seen = vec![0u64; histogram.len()];
    let mut cursor = vec![0usize; histogram.len()];
    for (idx, &label) in mask.labels().iter().enumerate() {
        let c = label as usize;
        let list = &pending[c];
        while cursor[c] < list.len() && list[cursor[c]].0 == seen[c] {
            points[list[cursor[c]].1] = SamplePoint { voxel: coords_of(dims, idx), label };
            cursor[c] += 1;
        }
        seen[c] += 1;
    }
    Ok(points)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub volume_id: String,
    pub voxel: [usize; 3],
    pub label: u16,
}

pub fn write_manifest(entries: &[ManifestEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        out.push_str(&format!("{} {} {} {} {}\n", e.volume_id, e.voxel[0], e.voxel[1], e.voxel[2], e.label));
    }
    out
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(n, line)| {
            let bad = || Error::MalformedHeader(format!("manifest line {}: {line:?}", n + 1));
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 5 {
                return Err(bad());
            }
            let num = |s: &str| s.parse::<usize>().map_err(|_| bad());
            Ok(ManifestEntry {
                volume_id: f[0].to_string(),
                voxel: [num(f[1])?, num(f[2])?, num(f[3])?],
                label: f[4].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

/// Descriptor rows with their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorDataset {
    dim: usize,
    rows: Vec<f32>,
    labels: Vec<u16>,
}

impl DescriptorDataset {
    pub fn new(dim: usize, rows: Vec<f32>, labels: Vec<u16>) -> Result<Self> {
        if dim == 0 || rows.len() != dim * labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {} rows of width {dim}",
                rows.len(),
                labels.len()
            )));
        }
        if let Some(v) = rows.iter().find(|v| !(-CLIP..=CLIP).contains(*v)) {
            return Err(Error::InvalidInput(format!("descriptor value {v} outside [-4, 4]")));
        }
        Ok(Self { dim, rows, labels })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }
}

pub fn write_dataset(ds: &DescriptorDataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + ds.len() * (ds.dim * 4 + 2));
    write_dataset_header(&mut out, ds.dim, ds.len() as u64);
    for (i, &label) in ds.labels.iter().enumerate() {
        put_f32s(&mut out, ds.row(i));
        put_u16(&mut out, label);
    }
    out
}

fn write_dataset_header(out: &mut Vec<u8>, dim: usize, count: u64) {
    out.extend_from_slice(DATASET_MAGIC);
    put_u32(out, VERSION);
    put_u32(out, dim as u32);
    put_u64(out, count);
}

pub fn read_dataset(bytes: &[u8]) -> Result<DescriptorDataset> {
    let mut r = Reader::new(bytes);
    r.magic(DATASET_MAGIC)?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let dim = r.u32()? as usize;
    let count = r.u64()?;
    if dim == 0 {
        return Err(Error::MalformedHeader("descriptor dim is 0".into()));
    }
    let row_bytes = dim as u64 * 4 + 2;
    let expected = count
        .checked_mul(row_bytes)
        .and_then(|b| b.checked_add(HEADER_LEN as u64))
        .ok_or_else(|| Error::MalformedHeader("row count overflows".into()))?;
    if expected > bytes.len() as u64 {
        return Err(Error::TruncatedData { expected: expected as usize, found: bytes.len() });
    }
    let count = count as usize;
    let mut rows = Vec::with_capacity(count * dim);
    let mut labels = Vec::with_capacity(count);
    for _ in 0..count {
        rows.extend(r.f32_vec(dim)?);
        labels.push(r.u16()?);
    }
    r.finish()?;
    DescriptorDataset::new(dim, rows, labels).map_err(|e| Error::MalformedHeader(e.to_string()))
}

/// Samples points, extracts their descriptors and streams `ORGD` bytes to
/// `out`. Rows are extracted in parallel but written in draw order.
pub fn export_dataset_to<W: Write>(
    out: &mut W,
    volume: &Volume,
    mask: &LabelMask,
    spec: &SampleSpec,
    table: &VoxelOffsetTable,
    volume_id: &str,
) -> Result<Vec<ManifestEntry>> {
    if volume_id.is_empty() || volume_id.chars().any(char::is_whitespace) {
        return Err(Error::InvalidInput(format!("volume id {volume_id:?} must be a single token")));
    }
    let points = sample_points(volume, mask, spec)?;
    let dim = table.len();
    let mut buf = Vec::with_capacity(HEADER_LEN);
    write_dataset_header(&mut buf, dim, points.len() as u64);
    out.write_all(&buf)?;

    let mut rows = vec![0f32; EXPORT_CHUNK_ROWS.min(points.len()) * dim];
    for chunk in points.chunks(EXPORT_CHUNK_ROWS) {
        let rows = &mut rows[..chunk.len() * dim];
        rows.par_chunks_mut(dim)
            .zip(chunk.par_iter())
            .try_for_each(|(row, p)| extract_into(volume, p.voxel.map(|c| c as i64), table, row))?;
        buf.clear();
        for (row, p) in rows.chunks_exact(dim).zip(chunk) {
            put_f32s(&mut buf, row);
            put_u16(&mut buf, p.label);
        }
        out.write_all(&buf)?;
    }

    Ok(points
        .into_iter()
        .map(|p| ManifestEntry { volume_id: volume_id.to_string(), voxel: p.voxel, label: p.label })
        .collect())
}

/// In-memory form of [`export_dataset_to`].
pub fn export_dataset(
    volume: &Volume,
    mask: &LabelMask,
    spec: &SampleSpec,
    table: &VoxelOffsetTable,
    volume_id: &str,
) -> Result<(Vec<u8>, Vec<ManifestEntry>)> {
    let mut bytes = Vec::new();
    let manifest = export_dataset_to(&mut bytes, volume, mask, spec, table, volume_id)?;
    Ok((bytes, manifest))
}
