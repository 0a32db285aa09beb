//! Coarse-to-fine full-volume segmentation driven by a point classifier.
//!
//! The classifier is first evaluated on a sparse grid (8 mm by default) and
//! each grid point's label is block-filled over its cell. Each finer level
//! then revisits its own grid points. A point whose 3×3×3 neighbourhood in
//! the previous mask is unanimous keeps that label. A point whose
//! neighbourhood has a label with at least `majority_threshold` votes takes
//! that label. Only the remaining points are queued for the classifier.
//!
//! Grid points are processed in parallel on the current rayon pool. Every
//! assignment depends only on the point and the previous level's mask, so
//! the output does not depend on scheduling.

use std::time::Duration;

#[cfg(not(target_arch = "wasm32"))]
use std::time::Instant;
#[cfg(target_arch = "wasm32")]
use web_time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{ModelWeights, Workspace};
use crate::sampler::{extract_into, OffsetTable, VoxelOffsetTable};
use crate::volume::{Dims, LabelMask, Spacing, Volume};

pub const DEFAULT_LEVELS_MM: [f32; 3] = [8.0, 4.0, 2.0];
pub const DEFAULT_MAJORITY: usize = 20;
pub const NEIGHBORHOOD: usize = 27;

/// Maps a voxel of a volume to a label. Implementations must be pure:
/// the same `(volume, point)` always yields the same label, from any thread.
pub trait PointClassifier: Sync {
    fn classify(&self, volume: &Volume, p: [usize; 3]) -> Result<u16>;

    /// Upper bound (exclusive) on labels this classifier can return.
    fn num_classes(&self) -> u16;
}

/// Descriptor extraction followed by the residual network.
pub struct ModelClassifier<'m> {
    model: &'m ModelWeights,
    table: VoxelOffsetTable,
}

impl<'m> ModelClassifier<'m> {
    pub fn new(model: &'m ModelWeights, table: &OffsetTable, spacing_mm: Spacing) -> Result<Self> {
        if model.input_dim() != table.len() {
            return Err(Error::DimensionMismatch(format!(
                "model expects {} inputs, sampler yields {}",
                model.input_dim(),
                table.len()
            )));
        }
        if model.num_classes() > u16::MAX as usize {
            return Err(Error::DimensionMismatch(format!("{} classes", model.num_classes())));
        }
        Ok(Self { model, table: table.bind(spacing_mm)? })
    }

    pub fn model(&self) -> &ModelWeights {
        self.model
    }

    pub fn table(&self) -> &VoxelOffsetTable {
        &self.table
    }
}

impl PointClassifier for ModelClassifier<'_> {
    fn classify(&self, volume: &Volume, p: [usize; 3]) -> Result<u16> {
        let mut descriptor = vec![0f32; self.table.len()];
        extract_into(volume, p.map(|c| c as i64), &self.table, &mut descriptor)?;
        let mut ws = Workspace::new(self.model);
        Ok(self.model.predict_with(&descriptor, &mut ws)?.label as u16)
    }

    fn num_classes(&self) -> u16 {
        self.model.num_classes() as u16
    }
}

/// Reads labels straight from a reference mask.
pub struct MaskClassifier<'a> {
    mask: &'a LabelMask,
}

impl<'a> MaskClassifier<'a> {
    pub fn new(mask: &'a LabelMask) -> Self {
        Self { mask }
    }
}

impl PointClassifier for MaskClassifier<'_> {
    fn classify(&self, volume: &Volume, p: [usize; 3]) -> Result<u16> {
        if volume.dims() != self.mask.dims() {
            return Err(Error::DimsMismatch { left: volume.dims(), right: self.mask.dims() });
        }
        Ok(self.mask.get(p))
    }

    fn num_classes(&self) -> u16 {
        self.mask.num_classes()
    }
}

/// One sampling grid, expressed in voxels of a particular volume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridLevel {
    pub spacing_mm: f32,
    pub stride: [usize; 3],
}

impl GridLevel {
    pub fn new(spacing_mm: f32, volume_spacing: Spacing) -> Result<Self> {
        if !(spacing_mm.is_finite() && spacing_mm > 0.0) {
            return Err(Error::InvalidInput(format!("grid spacing {spacing_mm} mm")));
        }
        let stride = volume_spacing.map(|s| ((spacing_mm / s).round() as usize).max(1));
        Ok(Self { spacing_mm, stride })
    }

    /// Every voxel.
    pub fn native(volume_spacing: Spacing) -> Self {
        let finest = volume_spacing.iter().copied().fold(f32::INFINITY, f32::min);
        Self { spacing_mm: finest, stride: [1; 3] }
    }

    /// Grid points per axis: ⌈dims / stride⌉.
    pub fn grid_dims(&self, dims: Dims) -> Dims {
        [0, 1, 2].map(|a| dims[a].div_ceil(self.stride[a]))
    }

    pub fn point_count(&self, dims: Dims) -> usize {
        self.grid_dims(dims).iter().product()
    }

    fn point(&self, grid: Dims, index: usize) -> [usize; 3] {
        let g = crate::volume::coords_of(grid, index);
        [g[0] * self.stride[0], g[1] * self.stride[1], g[2] * self.stride[2]]
    }
}

pub fn levels_for(volume: &Volume, levels_mm: &[f32]) -> Result<Vec<GridLevel>> {
    if levels_mm.is_empty() {
        return Err(Error::InvalidInput("at least one level is required".into()));
    }
    if levels_mm.windows(2).any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Less)) {
        return Err(Error::InvalidInput(format!("levels {levels_mm:?} must be strictly decreasing")));
    }
    levels_mm.iter().map(|&mm| GridLevel::new(mm, volume.spacing_mm())).collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LevelStats {
    pub spacing_mm: f32,
    pub stride: [usize; 3],
    pub grid_points: usize,
    pub classifier_calls: usize,
    /// Points labelled by majority vote without a classifier call.
    pub smoothed_assignments: usize,
    /// Points whose whole neighbourhood already agreed.
    pub unanimous_points: usize,
    pub wall_time: Duration,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SegmentationStats {
    pub levels: Vec<LevelStats>,
    pub wall_time: Duration,
}

impl SegmentationStats {
    pub fn classifier_calls(&self) -> usize {
        self.levels.iter().map(|l| l.classifier_calls).sum()
    }

    pub fn smoothed_assignments(&self) -> usize {
        self.levels.iter().map(|l| l.smoothed_assignments).sum()
    }

    pub fn points_per_level(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.grid_points).collect()
    }

    /// Flat `key=value` lines.
    pub fn to_key_value(&self) -> String {
        let join = |f: &dyn Fn(&LevelStats) -> String| self.levels.iter().map(f).collect::<Vec<_>>().join(",");
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        };
        kv("levels_mm", join(&|l| l.spacing_mm.to_string()));
        kv("classifier_calls", self.classifier_calls().to_string());
        kv("smoothed_assignments", self.smoothed_assignments().to_string());
        kv("points_per_level", join(&|l| l.grid_points.to_string()));
        kv("calls_per_level", join(&|l| l.classifier_calls.to_string()));
        kv("unanimous_per_level", join(&|l| l.unanimous_points.to_string()));
        kv("wall_ms_per_level", join(&|l| format!("{:.3}", l.wall_time.as_secs_f64() * 1e3)));
        kv("wall_ms_total", format!("{:.3}", self.wall_time.as_secs_f64() * 1e3));
        out
    }
}

/// Output of one refinement pass, including the queued points.
#[derive(Debug, Clone)]
pub struct LevelOutcome {
    pub mask: LabelMask,
    pub stats: LevelStats,
    pub queried: Vec<[usize; 3]>,
}

// Each voxel takes the label of its nearest grid point; halfway voxels go to the upper one.
fn block_fill(volume: &Volume, level: &GridLevel, labels: &[u16], num_classes: u16) -> Result<LabelMask> {
    let dims = volume.dims();
    let grid = level.grid_dims(dims);
    let s = level.stride;
    let cell = |v: usize, a: usize| ((v + s[a] / 2) / s[a]).min(grid[a] - 1);
    let mut out = Vec::with_capacity(volume.len());
    for z in 0..dims[2] {
        let gz = cell(z, 2);
        for y in 0..dims[1] {
            let row = grid[0] * (cell(y, 1) + grid[1] * gz);
            for x in 0..dims[0] {
                out.push(labels[row + cell(x, 0)]);
            }
        }
    }
    LabelMask::new(dims, volume.spacing_mm(), out, num_classes)
}

fn check_label(label: u16, num_classes: u16) -> Result<u16> {
    if label < num_classes {
        Ok(label)
    } else {
        Err(Error::DimensionMismatch(format!("classifier returned label {label} but declares {num_classes} classes")))
    }
}

/// Classifies every grid point and fills the voxels nearest to it.
pub fn coarse_segment<C: PointClassifier + ?Sized>(
    volume: &Volume,
    classifier: &C,
    level: &GridLevel,
) -> Result<(LabelMask, LevelStats)> {
    let started = Instant::now();
    let grid = level.grid_dims(volume.dims());
    let n = level.point_count(volume.dims());
    let classes = classifier.num_classes();
    let labels = (0..n)
        .into_par_iter()
        .map(|i| classifier.classify(volume, level.point(grid, i)).and_then(|l| check_label(l, classes)))
        .collect::<Result<Vec<u16>>>()?;
    let mask = block_fill(volume, level, &labels, classes)?;
    let stats = LevelStats {
        spacing_mm: level.spacing_mm,
        stride: level.stride,
        grid_points: n,
        classifier_calls: n,
        wall_time: started.elapsed(),
        ..Default::default()
    };
    Ok((mask, stats))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Decision {
    Unanimous(u16),
    Majority(u16),
    Query,
}

fn decide(mask: &LabelMask, p: [usize; 3], stride: [usize; 3], threshold: usize) -> Decision {
    let mut labels = [0u16; NEIGHBORHOOD];
    let mut n = 0;
    for dz in -1i64..=1 {
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                labels[n] = mask.get_clamped(
                    p[0] as i64 + dx * stride[0] as i64,
                    p[1] as i64 + dy * stride[1] as i64,
                    p[2] as i64 + dz * stride[2] as i64,
                );
                n += 1;
            }
        }
    }
    if labels.iter().all(|&l| l == labels[0]) {
        return Decision::Unanimous(labels[0]);
    }
    labels.sort_unstable();
    let (mut best, mut best_count) = (labels[0], 0);
    let mut run = 0;
    for i in 0..NEIGHBORHOOD {
        run = if i > 0 && labels[i] == labels[i - 1] { run + 1 } else { 1 };
        if run > best_count {
            best = labels[i];
            best_count = run;
        }
    }
    if best_count >= threshold {
        Decision::Majority(best)
    } else {
        Decision::Query
    }
}

/// One refinement pass from `previous` (any coarser level) onto `level`.
pub fn refine_level<C: PointClassifier + ?Sized>(
    volume: &Volume,
    classifier: &C,
    previous: &LabelMask,
    level: &GridLevel,
    majority_threshold: usize,
) -> Result<(LabelMask, LevelStats)> {
    let outcome = refine_level_detailed(volume, classifier, previous, level, majority_threshold)?;
    Ok((outcome.mask, outcome.stats))
}

pub fn refine_level_detailed<C: PointClassifier + ?Sized>(
    volume: &Volume,
    classifier: &C,
    previous: &LabelMask,
    level: &GridLevel,
    majority_threshold: usize,
) -> Result<LevelOutcome> {
    previous.check_paired(volume)?;
    let started = Instant::now();
    let grid = level.grid_dims(volume.dims());
    let n = level.point_count(volume.dims());
    let classes = classifier.num_classes().max(previous.num_classes());

    let decided: Vec<(u16, Decision)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let p = level.point(grid, i);
            let decision = decide(previous, p, level.stride, majority_threshold);
            let label = match decision {
                Decision::Unanimous(l) | Decision::Majority(l) => l,
                Decision::Query => check_label(classifier.classify(volume, p)?, classifier.num_classes())?,
            };
            Ok((label, decision))
        })
        .collect::<Result<_>>()?;

    let mut stats =
        LevelStats { spacing_mm: level.spacing_mm, stride: level.stride, grid_points: n, ..Default::default() };
    let mut queried = Vec::new();
    let mut labels = Vec::with_capacity(n);
    for (i, (label, decision)) in decided.into_iter().enumerate() {
        match decision {
            Decision::Unanimous(_) => stats.unanimous_points += 1,
            Decision::Majority(_) => stats.smoothed_assignments += 1,
            Decision::Query => {
                stats.classifier_calls += 1;
                queried.push(level.point(grid, i));
            }
        }
        labels.push(label);
    }
    let mask = block_fill(volume, level, &labels, classes)?;
    stats.wall_time = started.elapsed();
    Ok(LevelOutcome { mask, stats, queried })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentOptions {
    /// Grid spacings in mm, strictly decreasing.
    pub levels_mm: Vec<f32>,
    pub majority_threshold: usize,
    /// Worker count; `None` uses the global rayon pool.
    pub threads: Option<usize>,
}

impl Default for SegmentOptions {
    fn default() -> Self {
        Self { levels_mm: DEFAULT_LEVELS_MM.to_vec(), majority_threshold: DEFAULT_MAJORITY, threads: None }
    }
}

/// Coarse pass at the first level, then one refinement per further level.
pub fn segment<C: PointClassifier + ?Sized>(
    volume: &Volume,
    classifier: &C,
    options: &SegmentOptions,
) -> Result<(LabelMask, SegmentationStats)> {
    let levels = levels_for(volume, &options.levels_mm)?;
    if !(1..=NEIGHBORHOOD).contains(&options.majority_threshold) {
        return Err(Error::InvalidInput(format!("majority threshold {} outside 1..=27", options.majority_threshold)));
    }
    let run = || -> Result<(LabelMask, SegmentationStats)> {
        let started = Instant::now();
        let (mut mask, first) = coarse_segment(volume, classifier, &levels[0])?;
        let mut stats = SegmentationStats { levels: vec![first], wall_time: Duration::ZERO };
        for level in &levels[1..] {
            let (next, s) = refine_level(volume, classifier, &mask, level, options.majority_threshold)?;
            mask = next;
            stats.levels.push(s);
        }
        stats.wall_time = started.elapsed();
        Ok((mask, stats))
    };
    match options.threads {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    }
}

/// Classifies every voxel independently.
pub fn brute_force_segment<C: PointClassifier + ?Sized>(volume: &Volume, classifier: &C) -> Result<LabelMask> {
    let dims = volume.dims();
    let classes = classifier.num_classes();
    let labels = (0..volume.len())
        .into_par_iter()
        .map(|i| classifier.classify(volume, crate::volume::coords_of(dims, i)).and_then(|l| check_label(l, classes)))
        .collect::<Result<Vec<u16>>>()?;
    LabelMask::new(dims, volume.spacing_mm(), labels, classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{presets, synth_phantom, PhantomSpec};
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Constant(u16, AtomicUsize);

    impl PointClassifier for Constant {
        fn classify(&self, _: &Volume, _: [usize; 3]) -> Result<u16> {
            self.1.fetch_add(1, Ordering::Relaxed);
            Ok(self.0)
        }
        fn num_classes(&self) -> u16 {
            self.0 + 1
        }
    }

    struct Counting<'a>(MaskClassifier<'a>, AtomicUsize);

    impl PointClassifier for Counting<'_> {
        fn classify(&self, v: &Volume, p: [usize; 3]) -> Result<u16> {
            self.1.fetch_add(1, Ordering::Relaxed);
            self.0.classify(v, p)
        }
        fn num_classes(&self) -> u16 {
            self.0.num_classes()
        }
    }

    fn volume(dims: Dims) -> Volume {
        Volume::filled(dims, [2.0; 3], 0.0).unwrap()
    }

    #[test]
    fn grid_level_strides() {
        let l = GridLevel::new(8.0, [2.0, 0.7, 5.0]).unwrap();
        assert_eq!(l.stride, [4, 11, 2]);
        assert_eq!(GridLevel::new(1.0, [3.0; 3]).unwrap().stride, [1, 1, 1]);
        assert_eq!(l.grid_dims([10, 22, 3]), [3, 2, 2]);
        assert!(GridLevel::new(0.0, [1.0; 3]).is_err());
    }

    #[test]
    fn constant_classifier_coarse() {
        let v = volume([13, 9, 8]);
        let c = Constant(3, AtomicUsize::new(0));
        let level = GridLevel::new(8.0, v.spacing_mm()).unwrap();
        let (mask, stats) = coarse_segment(&v, &c, &level).unwrap();
        assert!(mask.labels().iter().all(|&l| l == 3));
        // ⌈13/4⌉·⌈9/4⌉·⌈8/4⌉
        assert_eq!(stats.classifier_calls, 4 * 3 * 2);
        assert_eq!(c.1.load(Ordering::Relaxed), 24);
    }

    #[test]
    fn oversized_stride_is_one_call() {
        let v = volume([5, 5, 5]);
        let c = Constant(1, AtomicUsize::new(0));
        let level = GridLevel::new(100.0, v.spacing_mm()).unwrap();
        let (mask, stats) = coarse_segment(&v, &c, &level).unwrap();
        assert_eq!(stats.classifier_calls, 1);
        assert!(mask.labels().iter().all(|&l| l == 1));
    }

    #[test]
    fn coarse_fills_cells_from_nearest_grid_point() {
        let (v, truth) = synth_phantom(&presets::sphere(), presets::BACKGROUND).unwrap();
        let level = GridLevel::new(8.0, v.spacing_mm()).unwrap();
        let (mask, _) = coarse_segment(&v, &MaskClassifier::new(&truth), &level).unwrap();
        for z in 0..64 {
            for y in 0..64 {
                for x in 0..64 {
                    let nearest = [x, y, z].map(|c| ((c + 2) / 4).min(15) * 4);
                    assert_eq!(mask.get([x, y, z]), truth.get(nearest));
                }
            }
        }
    }

    #[test]
    fn homogeneous_mask_needs_no_calls() {
        let v = volume([16, 16, 16]);
        let prev = LabelMask::filled([16, 16, 16], [2.0; 3], 2, 3).unwrap();
        let c = Constant(0, AtomicUsize::new(0));
        let level = GridLevel::new(4.0, v.spacing_mm()).unwrap();
        let (mask, stats) = refine_level(&v, &c, &prev, &level, DEFAULT_MAJORITY).unwrap();
        assert_eq!(stats.classifier_calls, 0);
        assert_eq!(c.1.load(Ordering::Relaxed), 0);
        assert_eq!(mask.labels(), prev.labels());
    }

    #[test]
    fn isolated_speck_is_smoothed() {
        let v = volume([12, 12, 12]);
        let mut labels = vec![1u16; 12 * 12 * 12];
        // Speck at grid point (3,3,3) of a stride-2 grid, i.e. voxel (6,6,6).
        labels[6 + 12 * (6 + 12 * 6)] = 2;
        let prev = LabelMask::new([12, 12, 12], [2.0; 3], labels, 3).unwrap();
        let c = Constant(0, AtomicUsize::new(0));
        let level = GridLevel::new(4.0, v.spacing_mm()).unwrap();
        let (mask, stats) = refine_level(&v, &c, &prev, &level, DEFAULT_MAJORITY).unwrap();
        assert_eq!(stats.classifier_calls, 0);
        assert!(stats.smoothed_assignments > 0);
        assert!(mask.labels().iter().all(|&l| l == 1));
    }

    #[test]
    fn planar_boundary_queue_stays_near_boundary() {
        // Label 1 for x·2 mm < 50 mm, label 0 beyond.
        let spec = PhantomSpec::new([48, 20, 20], [2.0; 3]).cuboid([0.0, 20.0, 20.0], [49.0, 100.0, 100.0], 100.0, 1);
        let (v, truth) = synth_phantom(&spec, 0.0).unwrap();
        let oracle = MaskClassifier::new(&truth);
        let coarse = GridLevel::new(8.0, v.spacing_mm()).unwrap();
        let fine = GridLevel::new(4.0, v.spacing_mm()).unwrap();
        let (mask, _) = coarse_segment(&v, &oracle, &coarse).unwrap();
        let out = refine_level_detailed(&v, &oracle, &mask, &fine, DEFAULT_MAJORITY).unwrap();
        assert!(!out.queried.is_empty());
        // True boundary between voxel 24 and 25; one coarse cell is 4 voxels.
        for p in &out.queried {
            let dist = if p[0] <= 24 { 24 - p[0] } else { p[0] - 25 };
            assert!(dist <= 4, "queued point {p:?} is {dist} voxels from the boundary");
        }
    }

    #[test]
    fn single_native_level_equals_brute_force() {
        let (v, truth) = synth_phantom(&presets::nested_spheres(), presets::BACKGROUND).unwrap();
        let oracle = MaskClassifier::new(&truth);
        let opts = SegmentOptions { levels_mm: vec![2.0], ..Default::default() };
        let (mask, stats) = segment(&v, &oracle, &opts).unwrap();
        assert_eq!(mask, brute_force_segment(&v, &oracle).unwrap());
        assert_eq!(stats.classifier_calls(), v.len());
    }

    #[test]
    fn level_validation() {
        let v = volume([8, 8, 8]);
        let c = Constant(0, AtomicUsize::new(0));
        for levels in [vec![], vec![4.0, 8.0], vec![4.0, 4.0], vec![8.0, -2.0]] {
            let opts = SegmentOptions { levels_mm: levels, ..Default::default() };
            assert!(segment(&v, &c, &opts).is_err());
        }
        let opts = SegmentOptions { majority_threshold: 28, ..Default::default() };
        assert!(segment(&v, &c, &opts).is_err());
    }

    #[test]
    fn calls_bounded_by_non_unanimous_points() {
        let (v, truth) = synth_phantom(&presets::two_boxes(), presets::BACKGROUND).unwrap();
        let oracle = Counting(MaskClassifier::new(&truth), AtomicUsize::new(0));
        let (_, stats) = segment(&v, &oracle, &SegmentOptions::default()).unwrap();
        assert_eq!(stats.classifier_calls(), oracle.1.load(Ordering::Relaxed));
        for l in &stats.levels[1..] {
            assert!(l.classifier_calls <= l.grid_points - l.unanimous_points);
            assert_eq!(l.classifier_calls + l.smoothed_assignments + l.unanimous_points, l.grid_points);
        }
        let kv = stats.to_key_value();
        assert!(kv.contains("levels_mm=8,4,2\n"));
        assert!(kv.contains(&format!("classifier_calls={}\n", stats.classifier_calls())));
    }

    #[test]
    fn rejects_out_of_range_labels() {
        struct Liar;
        impl PointClassifier for Liar {
            fn classify(&self, _: &Volume, _: [usize; 3]) -> Result<u16> {
                Ok(5)
            }
            fn num_classes(&self) -> u16 {
                2
            }
        }
        let v = volume([4, 4, 4]);
        assert!(brute_force_segment(&v, &Liar).is_err());
        assert!(segment(&v, &Liar, &SegmentOptions::default()).is_err());
    }

    #[test]
    fn runtime_grows_with_voxel_count() {
        let small_spec = PhantomSpec::new([32, 32, 32], [2.0; 3]).sphere([32.0; 3], 15.0, 60.0, 1);
        let fastest = |spec: &PhantomSpec| {
            let (v, truth) = synth_phantom(spec, presets::BACKGROUND).unwrap();
            let oracle = MaskClassifier::new(&truth);
            (0..3)
                .map(|_| {
                    let started = Instant::now();
                    segment(&v, &oracle, &SegmentOptions::default()).unwrap();
                    started.elapsed()
                })
                .min()
                .unwrap()
        };
        assert!(fastest(&small_spec) < fastest(&presets::sphere()));
    }

    fn blocky_mask(dims: Dims, block: usize, classes: u16, seeds: &[u16]) -> LabelMask {
        let grid = dims.map(|d| d.div_ceil(block));
        let labels = (0..dims.iter().product::<usize>())
            .map(|i| {
                let p = crate::volume::coords_of(dims, i);
                let cell = p[0] / block + grid[0] * (p[1] / block + grid[1] * (p[2] / block));
                seeds[cell % seeds.len()] % classes
            })
            .collect();
        LabelMask::new(dims, [2.0; 3], labels, classes).unwrap()
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(48))]

        #[test]
        fn majority_only_changes_non_unanimous_points(
            dims in proptest::array::uniform3(4usize..12),
            truth_seeds in proptest::collection::vec(0u16..3, 1..40),
            prev_seeds in proptest::collection::vec(0u16..3, 1..40),
            truth_block in 1usize..4,
            prev_block in 1usize..4,
            level_mm in proptest::sample::select(vec![2.0f32, 4.0]),
        ) {
            let v = volume(dims);
            let truth = blocky_mask(dims, truth_block, 3, &truth_seeds);
            let prev = blocky_mask(dims, prev_block, 3, &prev_seeds);
            let oracle = MaskClassifier::new(&truth);
            let level = GridLevel::new(level_mm, v.spacing_mm()).unwrap();
            let strict = refine_level_detailed(&v, &oracle, &prev, &level, 27).unwrap();
            let loose = refine_level_detailed(&v, &oracle, &prev, &level, 20).unwrap();
            for &p in &strict.queried {
                proptest::prop_assert_eq!(strict.mask.get(p), truth.get(p));
            }
            let grid = level.grid_dims(dims);
            for gz in 0..grid[2] {
                for gy in 0..grid[1] {
                    for gx in 0..grid[0] {
                        let p = [gx * level.stride[0], gy * level.stride[1], gz * level.stride[2]];
                        if strict.mask.get(p) != loose.mask.get(p) {
                            let unanimous = matches!(decide(&prev, p, level.stride, 27), Decision::Unanimous(_));
                            proptest::prop_assert!(!unanimous);
                        }
                    }
                }
            }
        }

        #[test]
        fn thread_count_does_not_change_output(
            dims in proptest::array::uniform3(6usize..20),
            seeds in proptest::collection::vec(0u16..4, 1..60),
            block in 1usize..5,
        ) {
            let v = volume(dims);
            let truth = blocky_mask(dims, block, 4, &seeds);
            let oracle = MaskClassifier::new(&truth);
            let run = |threads| {
                let opts = SegmentOptions { threads: Some(threads), ..SegmentOptions::default() };
                let (mask, stats) = segment(&v, &oracle, &opts).unwrap();
                (mask, stats.classifier_calls(), stats.smoothed_assignments())
            };
            let (a, b) = (run(1), run(3));
            proptest::prop_assert_eq!(a.0.labels(), b.0.labels());
            proptest::prop_assert_eq!((a.1, a.2), (b.1, b.2));
        }
    }
}
