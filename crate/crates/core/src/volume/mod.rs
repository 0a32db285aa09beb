//! Intensity volumes and label masks with physical voxel spacing.
//!
//! Both types store voxels in a flat array with x varying fastest, then y,
//! then z. They are immutable once built and can be shared freely across
//! worker threads.

mod nifti;
mod phantom;
mod raw;

pub use nifti::{parse_nifti, NiftiImage};
pub use phantom::{presets, synth_phantom, PhantomShape, PhantomSpec, ShapeGeometry};
pub use raw::{parse_mask, parse_raw, write_mask, write_raw, MASK_MAGIC, RAW_MAGIC};

use crate::error::{Error, Result};

/// Voxel counts per axis, ordered x, y, z.
pub type Dims = [usize; 3];

/// Millimetres per voxel along x, y, z.
pub type Spacing = [f32; 3];

/// Read-only voxel lookup. Any coordinate outside the grid yields 0.
pub trait VoxelSource {
    fn dims(&self) -> Dims;
    fn spacing_mm(&self) -> Spacing;
    fn voxel_at(&self, i: i64, j: i64, k: i64) -> f32;
}

pub(crate) fn voxel_count(dims: Dims) -> Result<usize> {
    if dims.contains(&0) {
        return Err(Error::InvalidInput(format!("dims must be positive, got {dims:?}")));
    }
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::InvalidInput(format!("dims {dims:?} overflow")))
}

pub(crate) fn check_spacing(spacing: Spacing) -> Result<()> {
    if spacing.iter().all(|s| s.is_finite() && *s > 0.0) {
        Ok(())
    } else {
        Err(Error::NonPositiveSpacing(spacing))
    }
}

#[inline]
fn linear_index(dims: Dims, [x, y, z]: [usize; 3]) -> usize {
    x + dims[0] * (y + dims[1] * z)
}

#[inline]
fn in_bounds(dims: Dims, i: i64, j: i64, k: i64) -> bool {
    // Negative values wrap to huge unsigned numbers and fail the comparison.
    (i as u64) < dims[0] as u64 && (j as u64) < dims[1] as u64 && (k as u64) < dims[2] as u64
}

/// Voxel coordinates of a flat index.
#[inline]
pub fn coords_of(dims: Dims, index: usize) -> [usize; 3] {
    let x = index % dims[0];
    let rest = index / dims[0];
    [x, rest % dims[1], rest / dims[1]]
}

/// A scalar intensity volume.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    dims: Dims,
    spacing_mm: Spacing,
    data: Vec<f32>,
}

impl Volume {
    pub fn new(dims: Dims, spacing_mm: Spacing, data: Vec<f32>) -> Result<Self> {
        let n = voxel_count(dims)?;
        check_spacing(spacing_mm)?;
        if data.len() != n {
            return Err(Error::DimensionMismatch(format!("dims {dims:?} need {n} voxels, got {}", data.len())));
        }
        Ok(Self { dims, spacing_mm, data })
    }

    pub fn filled(dims: Dims, spacing_mm: Spacing, value: f32) -> Result<Self> {
        let n = voxel_count(dims)?;
        Self::new(dims, spacing_mm, vec![value; n])
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing_mm(&self) -> Spacing {
        self.spacing_mm
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Intensity at an in-bounds voxel. Panics when out of range.
    pub fn get(&self, p: [usize; 3]) -> f32 {
        self.data[linear_index(self.dims, p)]
    }

    /// Intensity at `(i, j, k)`, or 0 when any coordinate is out of range.
    #[inline]
    pub fn voxel_at(&self, i: i64, j: i64, k: i64) -> f32 {
        if in_bounds(self.dims, i, j, k) {
            self.data[linear_index(self.dims, [i as usize, j as usize, k as usize])]
        } else {
            0.0
        }
    }
}

impl VoxelSource for Volume {
    fn dims(&self) -> Dims {
        self.dims
    }

    fn spacing_mm(&self) -> Spacing {
        self.spacing_mm
    }

    #[inline]
    fn voxel_at(&self, i: i64, j: i64, k: i64) -> f32 {
        Volume::voxel_at(self, i, j, k)
    }
}

/// Per-voxel organ labels aligned with a [`Volume`]. Label 0 is background.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMask {
    dims: Dims,
    spacing_mm: Spacing,
    labels: Vec<u16>,
    num_classes: u16,
}

impl LabelMask {
    pub fn new(dims: Dims, spacing_mm: Spacing, labels: Vec<u16>, num_classes: u16) -> Result<Self> {
        let n = voxel_count(dims)?;
        check_spacing(spacing_mm)?;
        if labels.len() != n {
            return Err(Error::DimensionMismatch(format!("dims {dims:?} need {n} labels, got {}", labels.len())));
        }
        if num_classes == 0 {
            return Err(Error::InvalidInput("num_classes must be positive".into()));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::DimensionMismatch(format!("label {bad} out of range for {num_classes} classes")));
        }
        Ok(Self { dims, spacing_mm, labels, num_classes })
    }

    /// Builds a mask whose class count is one past the largest label present.
    pub fn from_labels(dims: Dims, spacing_mm: Spacing, labels: Vec<u16>) -> Result<Self> {
        let max = labels.iter().copied().max().unwrap_or(0);
        let num_classes = max
            .checked_add(1)
            .ok_or_else(|| Error::InvalidInput("label 65535 leaves no room for a class count".into()))?;
        Self::new(dims, spacing_mm, labels, num_classes)
    }

    pub fn filled(dims: Dims, spacing_mm: Spacing, label: u16, num_classes: u16) -> Result<Self> {
        let n = voxel_count(dims)?;
        Self::new(dims, spacing_mm, vec![label; n], num_classes)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing_mm(&self) -> Spacing {
        self.spacing_mm
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    pub fn num_classes(&self) -> u16 {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, p: [usize; 3]) -> u16 {
        self.labels[linear_index(self.dims, p)]
    }

    /// Label at `(i, j, k)` with each coordinate clamped into the grid.
    #[inline]
    pub fn get_clamped(&self, i: i64, j: i64, k: i64) -> u16 {
        let c = |v: i64, n: usize| v.clamp(0, n as i64 - 1) as usize;
        self.get([c(i, self.dims[0]), c(j, self.dims[1]), c(k, self.dims[2])])
    }

    /// Voxel count per label, indexed by label.
    pub fn histogram(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.num_classes as usize];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    /// Fails unless this mask is aligned with `volume`.
    pub fn check_paired(&self, volume: &Volume) -> Result<()> {
        if self.dims != volume.dims() {
            return Err(Error::DimsMismatch { left: self.dims, right: volume.dims() });
        }
        Ok(())
    }

    /// Widens the declared class count, e.g. to match a model.
    pub fn with_num_classes(mut self, num_classes: u16) -> Result<Self> {
        if num_classes < self.num_classes {
            return Err(Error::InvalidInput(format!(
                "cannot shrink class count from {} to {num_classes}",
                self.num_classes
            )));
        }
        self.num_classes = num_classes;
        Ok(self)
    }
}
