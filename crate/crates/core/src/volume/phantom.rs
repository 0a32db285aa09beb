//! Synthetic phantoms: analytic shapes painted into a voxel grid, giving a
//! volume together with its exact ground-truth mask.

use super::{check_spacing, voxel_count, Dims, LabelMask, Spacing, Volume};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShapeGeometry {
    Sphere { center_mm: [f32; 3], radius_mm: f32 },
    Box { center_mm: [f32; 3], half_extents_mm: [f32; 3] },
}

impl ShapeGeometry {
    fn contains(&self, p: [f32; 3]) -> bool {
        match *self {
            ShapeGeometry::Sphere { center_mm, radius_mm } => {
                let d2: f32 = (0..3).map(|a| (p[a] - center_mm[a]).powi(2)).sum();
                d2 <= radius_mm * radius_mm
            }
            ShapeGeometry::Box { center_mm, half_extents_mm } => {
                (0..3).all(|a| (p[a] - center_mm[a]).abs() <= half_extents_mm[a])
            }
        }
    }

    fn half_extents(&self) -> [f32; 3] {
        match *self {
            ShapeGeometry::Sphere { radius_mm, .. } => [radius_mm; 3],
            ShapeGeometry::Box { half_extents_mm, .. } => half_extents_mm,
        }
    }

    fn center(&self) -> [f32; 3] {
        match *self {
            ShapeGeometry::Sphere { center_mm, .. } | ShapeGeometry::Box { center_mm, .. } => center_mm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhantomShape {
    pub geometry: ShapeGeometry,
    pub intensity: f32,
    pub label: u16,
}

/// Voxel `(i, j, k)` sits at `(i·sx, j·sy, k·sz)` mm. Later shapes overwrite
/// earlier ones where they overlap.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub dims: Dims,
    pub spacing_mm: Spacing,
    pub shapes: Vec<PhantomShape>,
}

impl PhantomSpec {
    pub fn new(dims: Dims, spacing_mm: Spacing) -> Self {
        Self { dims, spacing_mm, shapes: Vec::new() }
    }

    pub fn sphere(mut self, center_mm: [f32; 3], radius_mm: f32, intensity: f32, label: u16) -> Self {
        self.shapes.push(PhantomShape { geometry: ShapeGeometry::Sphere { center_mm, radius_mm }, intensity, label });
        self
    }

    pub fn cuboid(mut self, center_mm: [f32; 3], half_extents_mm: [f32; 3], intensity: f32, label: u16) -> Self {
        self.shapes.push(PhantomShape {
            geometry: ShapeGeometry::Box { center_mm, half_extents_mm },
            intensity,
            label,
        });
        self
    }

    /// Number of classes including background.
    pub fn num_classes(&self) -> u16 {
        self.shapes.iter().map(|s| s.label).max().unwrap_or(0) + 1
    }

    pub fn validate(&self) -> Result<()> {
        voxel_count(self.dims)?;
        check_spacing(self.spacing_mm)?;
        let top = self.num_classes() - 1;
        for label in 1..=top {
            if !self.shapes.iter().any(|s| s.label == label) {
                return Err(Error::InvalidInput(format!(
                    "phantom labels must be contiguous from 1; {label} is missing"
                )));
            }
        }
        for s in &self.shapes {
            if s.label == 0 {
                return Err(Error::InvalidInput("shape label 0 is reserved for background".into()));
            }
            let finite = s.intensity.is_finite()
                && s.geometry.center().iter().all(|c| c.is_finite())
                && s.geometry.half_extents().iter().all(|h| h.is_finite() && *h >= 0.0);
            if !finite {
                return Err(Error::InvalidInput(format!("degenerate shape {s:?}")));
            }
        }
        Ok(())
    }
}

pub fn synth_phantom(spec: &PhantomSpec, background_intensity: f32) -> Result<(Volume, LabelMask)> {
    spec.validate()?;
    let dims = spec.dims;
    let spacing = spec.spacing_mm;
    let n = voxel_count(dims)?;
    let mut data = vec![background_intensity; n];
    let mut labels = vec![0u16; n];

    for shape in &spec.shapes {
        let center = shape.geometry.center();
        let half = shape.geometry.half_extents();
        // Voxel index range covering the shape's bounding box, clipped to the grid.
        let range = |a: usize| {
            let lo = ((center[a] - half[a]) / spacing[a]).floor().max(0.0) as usize;
            let hi = ((center[a] + half[a]) / spacing[a]).ceil();
            let hi = if hi < 0.0 { 0 } else { (hi as usize + 1).min(dims[a]) };
            lo.min(dims[a])..hi
        };
        let (rx, ry, rz) = (range(0), range(1), range(2));
        for z in rz {
            for y in ry.clone() {
                for x in rx.clone() {
                    let p = [x as f32 * spacing[0], y as f32 * spacing[1], z as f32 * spacing[2]];
                    if shape.geometry.contains(p) {
                        let idx = x + dims[0] * (y + dims[1] * z);
                        data[idx] = shape.intensity;
                        labels[idx] = shape.label;
                    }
                }
            }
        }
    }

    let volume = Volume::new(dims, spacing, data)?;
    let mask = LabelMask::new(dims, spacing, labels, spec.num_classes())?;
    Ok((volume, mask))
}

/// Reference phantoms on a 64³ grid at 2 mm, background at −1000.
pub mod presets {
    use super::PhantomSpec;

    pub const BACKGROUND: f32 = -1000.0;

    pub fn sphere() -> PhantomSpec {
        PhantomSpec::new([64, 64, 64], [2.0; 3]).sphere([64.0, 64.0, 64.0], 30.0, 60.0, 1)
    }

    pub fn nested_spheres() -> PhantomSpec {
        PhantomSpec::new([64, 64, 64], [2.0; 3]).sphere([62.0, 66.0, 64.0], 40.0, 40.0, 1).sphere(
            [70.0, 60.0, 66.0],
            18.0,
            180.0,
            2,
        )
    }

    pub fn two_boxes() -> PhantomSpec {
        PhantomSpec::new([64, 64, 64], [2.0; 3]).cuboid([48.0, 50.0, 60.0], [20.0, 16.0, 24.0], 50.0, 1).cuboid(
            [78.0, 74.0, 70.0],
            [18.0, 22.0, 20.0],
            300.0,
            2,
        )
    }

    pub fn all() -> Vec<(&'static str, PhantomSpec)> {
        vec![("sphere", sphere()), ("nested_spheres", nested_spheres()), ("two_boxes", two_boxes())]
    }
}
