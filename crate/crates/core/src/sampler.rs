//! Sparse multi-resolution intensity sampling around a query voxel.
//!
//! A descriptor is built from a fixed set of millimetre offsets: three
//! orthogonal 27×27 planes at 4 mm, followed by six 9×9×9 cubes at 2, 3, 5,
//! 12, 28 and 64 mm. That is 3·729 + 6·729 = 6561 samples. The table is
//! converted to voxel offsets once per volume spacing, after which a
//! descriptor costs one memory lookup per sample.

use crate::error::{Error, Result};
use crate::volume::{Spacing, VoxelSource};

pub const DESCRIPTOR_DIM: usize = 6561;
pub const PLANE_SIDE: usize = 27;
pub const PLANE_STEP_MM: f32 = 4.0;
pub const CUBE_SIDE: usize = 9;
pub const CUBE_RESOLUTIONS_MM: [f32; 6] = [2.0, 3.0, 5.0, 12.0, 28.0, 64.0];

/// Raw intensities are divided by this before clipping.
pub const INTENSITY_SCALE: f32 = 128.0;
pub const CLIP: f32 = 4.0;

/// Side length of the decoded descriptor image.
pub const IMAGE_SIDE: usize = 81;

const BLOCK_LEN: usize = 729;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    /// (x, y) plane.
    Axial,
    /// (x, z) plane.
    Coronal,
    /// (y, z) plane.
    Sagittal,
    Cube,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Block {
    pub kind: BlockKind,
    pub resolution_mm: f32,
    /// Grid indices run from `-half_extent` to `+half_extent` on each sampled axis.
    pub half_extent: i32,
    /// Position of the block's first offset in the table.
    pub start: usize,
}

impl Block {
    pub fn len(&self) -> usize {
        BLOCK_LEN
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.start + BLOCK_LEN
    }
}

/// The canonical 6561 sampling offsets in millimetres.
#[derive(Debug, Clone, PartialEq)]
pub struct OffsetTable {
    offsets_mm: Vec<[f32; 3]>,
    blocks: Vec<Block>,
}

impl OffsetTable {
    pub fn offsets_mm(&self) -> &[[f32; 3]] {
        &self.offsets_mm
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.offsets_mm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets_mm.is_empty()
    }

    pub fn bind(&self, spacing_mm: Spacing) -> Result<VoxelOffsetTable> {
        bind_to_spacing(self, spacing_mm)
    }
}

/// Block order: axial, coronal, sagittal planes, then cubes from finest to
/// coarsest. Within a block the first listed axis varies fastest and indices
/// ascend from `-N` to `+N`.
pub fn build_offset_table() -> OffsetTable {
    let mut offsets_mm = Vec::with_capacity(DESCRIPTOR_DIM);
    let mut blocks = Vec::with_capacity(9);

    let half = (PLANE_SIDE / 2) as i32;
    for kind in [BlockKind::Axial, BlockKind::Coronal, BlockKind::Sagittal] {
        blocks.push(Block { kind, resolution_mm: PLANE_STEP_MM, half_extent: half, start: offsets_mm.len() });
        for slow in -half..=half {
            for fast in -half..=half {
                let (a, b) = (fast as f32 * PLANE_STEP_MM, slow as f32 * PLANE_STEP_MM);
                offsets_mm.push(match kind {
                    BlockKind::Axial => [a, b, 0.0],
                    BlockKind::Coronal => [a, 0.0, b],
                    BlockKind::Sagittal => [0.0, a, b],
                    BlockKind::Cube => unreachable!(),
                });
            }
        }
    }

    let half = (CUBE_SIDE / 2) as i32;
    for res in CUBE_RESOLUTIONS_MM {
        blocks.push(Block { kind: BlockKind::Cube, resolution_mm: res, half_extent: half, start: offsets_mm.len() });
        for z in -half..=half {
            for y in -half..=half {
                for x in -half..=half {
                    offsets_mm.push([x as f32 * res, y as f32 * res, z as f32 * res]);
                }
            }
        }
    }

    debug_assert_eq!(offsets_mm.len(), DESCRIPTOR_DIM);
    OffsetTable { offsets_mm, blocks }
}

/// Offsets rounded to whole voxels for one particular spacing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoxelOffsetTable {
    offsets: Vec<[i32; 3]>,
    spacing_bits: [u32; 3],
}

impl VoxelOffsetTable {
    pub fn offsets(&self) -> &[[i32; 3]] {
        &self.offsets
    }

    pub fn spacing_mm(&self) -> Spacing {
        self.spacing_bits.map(f32::from_bits)
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    fn check_spacing(&self, volume: Spacing) -> Result<()> {
        let table = self.spacing_mm();
        let close =
            table.iter().zip(volume.iter()).all(|(&t, &v)| ((t as f64 - v as f64).abs()) <= 1e-6 * (v as f64).abs());
        if close {
            Ok(())
        } else {
            Err(Error::SpacingMismatch { table, volume })
        }
    }
}

/// Divides every offset by the spacing and rounds half away from zero.
pub fn bind_to_spacing(table: &OffsetTable, spacing_mm: Spacing) -> Result<VoxelOffsetTable> {
    if !spacing_mm.iter().all(|s| s.is_finite() && *s > 0.0) {
        return Err(Error::NonPositiveSpacing(spacing_mm));
    }
    let offsets = table
        .offsets_mm
        .iter()
        .map(|o| {
            let mut v = [0i32; 3];
            for a in 0..3 {
                // f64::round rounds ties away from zero.
                v[a] = (o[a] as f64 / spacing_mm[a] as f64).round() as i32;
            }
            v
        })
        .collect();
    Ok(VoxelOffsetTable { offsets, spacing_bits: spacing_mm.map(f32::to_bits) })
}

#[inline]
pub fn normalize(raw: f32) -> f32 {
    if raw.is_nan() {
        return 0.0;
    }
    (raw / INTENSITY_SCALE).clamp(-CLIP, CLIP)
}

/// A normalized intensity descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    pub values: Vec<f32>,
    pub origin_voxel: Option<[i64; 3]>,
}

/// Samples the descriptor at voxel `p`. Points outside the volume are
/// allowed; every out-of-range sample reads as 0.
pub fn extract_descriptor<S: VoxelSource + ?Sized>(
    volume: &S,
    p: [i64; 3],
    table: &VoxelOffsetTable,
) -> Result<Descriptor> {
    let mut values = vec![0f32; table.len()];
    extract_into(volume, p, table, &mut values)?;
    Ok(Descriptor { values, origin_voxel: Some(p) })
}

/// Allocation-free form of [`extract_descriptor`].
pub fn extract_into<S: VoxelSource + ?Sized>(
    volume: &S,
    p: [i64; 3],
    table: &VoxelOffsetTable,
    out: &mut [f32],
) -> Result<()> {
    table.check_spacing(volume.spacing_mm())?;
    if out.len() != table.len() {
        return Err(Error::DimensionMismatch(format!(
            "descriptor buffer holds {} values, table has {}",
            out.len(),
            table.len()
        )));
    }
    for (slot, o) in out.iter_mut().zip(&table.offsets) {
        let raw = volume.voxel_at(p[0] + o[0] as i64, p[1] + o[1] as i64, p[2] + o[2] as i64);
        *slot = normalize(raw);
    }
    Ok(())
}

/// An 81×81 row-major image built from a descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedImage {
    pub pixels: Vec<f32>,
}

impl DecodedImage {
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.pixels[row * IMAGE_SIDE + col]
    }
}

/// Image position of descriptor element `index`.
///
/// The nine blocks fill a 3×3 arrangement of 27×27 tiles in table order, so
/// the planes occupy the top row. A cube tile holds its nine z-slices as a
/// 3×3 arrangement of 9×9 (y rows, x columns) sub-tiles.
pub fn decoded_position(index: usize) -> (usize, usize) {
    let block = index / BLOCK_LEN;
    let within = index % BLOCK_LEN;
    let (tile_row, tile_col) = (block / 3, block % 3);
    let (row, col) = if block < 3 {
        (within / PLANE_SIDE, within % PLANE_SIDE)
    } else {
        let x = within % CUBE_SIDE;
        let y = (within / CUBE_SIDE) % CUBE_SIDE;
        let z = within / (CUBE_SIDE * CUBE_SIDE);
        ((z / 3) * CUBE_SIDE + y, (z % 3) * CUBE_SIDE + x)
    };
    (tile_row * PLANE_SIDE + row, tile_col * PLANE_SIDE + col)
}

pub fn decode_descriptor(values: &[f32]) -> Result<DecodedImage> {
    if values.len() != DESCRIPTOR_DIM {
        return Err(Error::DimensionMismatch(format!(
            "descriptor has {} values, expected {DESCRIPTOR_DIM}",
            values.len()
        )));
    }
    let mut pixels = vec![0f32; IMAGE_SIDE * IMAGE_SIDE];
    for (i, &v) in values.iter().enumerate() {
        let (r, c) = decoded_position(i);
        pixels[r * IMAGE_SIDE + c] = v;
    }
    Ok(DecodedImage { pixels })
}

/// Binary 8-bit PGM with `[-4, 4]` mapped linearly onto `[0, 255]`.
pub fn encode_pgm(image: &DecodedImage) -> Vec<u8> {
    let mut out = format!("P5\n{IMAGE_SIDE} {IMAGE_SIDE}\n255\n").into_bytes();
    out.extend(image.pixels.iter().map(|&v| to_gray(v)));
    out
}

#[inline]
pub fn to_gray(v: f32) -> u8 {
    (((v + CLIP) / (2.0 * CLIP)) * 255.0).round().clamp(0.0, 255.0) as u8
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Volume;
    use std::cell::Cell;

    #[test]
    fn table_shape() {
        let t = build_offset_table();
        assert_eq!(t.len(), DESCRIPTOR_DIM);
        assert_eq!(t.blocks().len(), 9);
        let cube64 = t.blocks()[8];
        assert_eq!(cube64.resolution_mm, 64.0);
        // Centre of the 9×9×9 grid is local index (4, 4, 4).
        assert_eq!(t.offsets_mm()[cube64.start + 4 + 9 * (4 + 9 * 4)], [0.0, 0.0, 0.0]);
        assert_eq!(t.offsets_mm()[0], [-52.0, -52.0, 0.0]);
        assert_eq!(t.offsets_mm()[1], [-48.0, -52.0, 0.0]);
        assert_eq!(t.offsets_mm()[729], [-52.0, 0.0, -52.0]);
        assert_eq!(t.offsets_mm()[2 * 729 + 1], [0.0, -48.0, -52.0]);
    }

    #[test]
    fn binding_examples() {
        let t = OffsetTable { offsets_mm: vec![[4.0, 0.0, 0.0], [3.0, 3.0, 3.0], [-3.0, 1.0, -1.0]], blocks: vec![] };
        assert_eq!(t.bind([0.8; 3]).unwrap().offsets()[0], [5, 0, 0]);
        assert_eq!(t.bind([2.0; 3]).unwrap().offsets()[1], [2, 2, 2]);
        assert_eq!(t.bind([2.0; 3]).unwrap().offsets()[2], [-2, 1, -1]);
        assert!(matches!(t.bind([1.0, 0.0, 1.0]), Err(Error::NonPositiveSpacing(_))));
        assert!(matches!(t.bind([1.0, -1.0, 1.0]), Err(Error::NonPositiveSpacing(_))));
    }

    #[test]
    fn unit_spacing_is_identity() {
        let t = build_offset_table();
        let v = t.bind([1.0; 3]).unwrap();
        for (mm, vox) in t.offsets_mm().iter().zip(v.offsets()) {
            assert_eq!(mm.map(|c| c as i32), *vox);
        }
    }

    #[test]
    fn uniform_volumes_normalize() {
        let t = build_offset_table().bind([1.5, 1.5, 3.0]).unwrap();
        for (value, expected) in [(128.0, 1.0), (-1024.0, -4.0), (0.0, 0.0), (1000.0, 4.0)] {
            let v = Volume::filled([10, 10, 10], [1.5, 1.5, 3.0], value).unwrap();
            // The plane and 2 mm cube centres are in range; distant samples read 0.
            let d = extract_descriptor(&v, [5, 5, 5], &t).unwrap();
            let centre = 3 * 729 + 364;
            assert_eq!(d.values[centre], expected);
            assert!(d.values.iter().all(|&x| x == expected || x == 0.0));
        }
    }

    #[test]
    fn far_point_is_all_zero() {
        let v = Volume::filled([8, 8, 8], [1.0; 3], 500.0).unwrap();
        let t = build_offset_table().bind([1.0; 3]).unwrap();
        let d = extract_descriptor(&v, [10_000, -10_000, 3], &t).unwrap();
        assert!(d.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn spacing_mismatch() {
        let v = Volume::filled([8, 8, 8], [1.0; 3], 1.0).unwrap();
        let t = build_offset_table().bind([1.0, 1.0, 1.0001]).unwrap();
        assert!(matches!(extract_descriptor(&v, [0, 0, 0], &t), Err(Error::SpacingMismatch { .. })));
    }

    struct CountingSource {
        inner: Volume,
        lookups: Cell<usize>,
    }

    impl VoxelSource for CountingSource {
        fn dims(&self) -> [usize; 3] {
            self.inner.dims()
        }
        fn spacing_mm(&self) -> Spacing {
            self.inner.spacing_mm()
        }
        fn voxel_at(&self, i: i64, j: i64, k: i64) -> f32 {
            self.lookups.set(self.lookups.get() + 1);
            self.inner.voxel_at(i, j, k)
        }
    }

    #[test]
    fn one_lookup_per_sample() {
        let src = CountingSource { inner: Volume::filled([16, 16, 16], [2.0; 3], 1.0).unwrap(), lookups: Cell::new(0) };
        let t = build_offset_table().bind([2.0; 3]).unwrap();
        extract_descriptor(&src, [8, 8, 8], &t).unwrap();
        assert_eq!(src.lookups.get(), DESCRIPTOR_DIM);
    }

    #[test]
    fn decode_is_a_permutation() {
        let values: Vec<f32> = (0..DESCRIPTOR_DIM).map(|i| i as f32).collect();
        let img = decode_descriptor(&values).unwrap();
        let mut seen = vec![false; DESCRIPTOR_DIM];
        for &p in &img.pixels {
            assert!(!std::mem::replace(&mut seen[p as usize], true));
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn decode_tiles() {
        let values: Vec<f32> = (0..DESCRIPTOR_DIM).map(|i| i as f32).collect();
        let img = decode_descriptor(&values).unwrap();
        // Top-left tile is the axial block in row-major order.
        for r in 0..27 {
            for c in 0..27 {
                assert_eq!(img.get(r, c), (r * 27 + c) as f32);
            }
        }
        // Sagittal plane in the top-right tile.
        assert_eq!(img.get(0, 54), (2 * 729) as f32);
        // 2 mm cube, slice z=4 (middle sub-tile), centre voxel.
        let centre = 3 * 729 + 4 + 9 * (4 + 9 * 4);
        assert_eq!(img.get(27 + 9 + 4, 9 + 4), centre as f32);
        // 64 mm cube, last element, bottom-right corner.
        assert_eq!(img.get(80, 80), (DESCRIPTOR_DIM - 1) as f32);
        assert!(decode_descriptor(&values[1..]).is_err());
    }

    #[test]
    fn pgm_layout() {
        let img = DecodedImage { pixels: vec![1.0; IMAGE_SIDE * IMAGE_SIDE] };
        let pgm = encode_pgm(&img);
        let header = b"P5\n81 81\n255\n";
        assert_eq!(&pgm[..header.len()], header);
        assert_eq!(pgm.len(), header.len() + 6561);
        assert!(pgm[header.len()..].iter().all(|&g| g == 159));
        assert_eq!(to_gray(-4.0), 0);
        assert_eq!(to_gray(4.0), 255);
        assert_eq!(to_gray(-9.0), 0);
    }
}
