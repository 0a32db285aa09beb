//! Browser bindings for the orgseg demo page.
//!
//! Everything the page draws comes back as RGBA bytes ready for
//! `ImageData`. Errors cross the boundary as plain strings.

use orgseg::metrics::dice_per_class;
use orgseg::model::{load_weights, ModelWeights};
use orgseg::sampler::{build_offset_table, decode_descriptor, extract_descriptor, to_gray};
use orgseg::segmenter::{segment, MaskClassifier, ModelClassifier, SegmentOptions, SegmentationStats};
use orgseg::volume::{presets, synth_phantom, LabelMask, Volume};
use wasm_bindgen::prelude::*;

/// Display window for phantom intensities.
const WINDOW: (f32, f32) = (-160.0, 340.0);

const PALETTE: [[u8; 3]; 6] =
    [[230, 60, 60], [60, 200, 90], [70, 130, 240], [240, 200, 40], [200, 80, 220], [40, 210, 220]];

#[wasm_bindgen]
pub fn phantom_names() -> String {
    presets::all().into_iter().map(|(n, _)| n).collect::<Vec<_>>().join(",")
}

#[wasm_bindgen]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Overlay {
    None = 0,
    Truth = 1,
    Segmentation = 2,
    Errors = 3,
}

#[wasm_bindgen]
pub struct Demo {
    volume: Volume,
    truth: LabelMask,
    model: Option<ModelWeights>,
    result: Option<(LabelMask, SegmentationStats)>,
}

fn gray(v: f32) -> u8 {
    let t = (v - WINDOW.0) / (WINDOW.1 - WINDOW.0);
    (t.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn blend(base: u8, color: [u8; 3]) -> [u8; 4] {
    let mix = |c: u8| ((base as u16 + c as u16 * 2) / 3) as u8;
    [mix(color[0]), mix(color[1]), mix(color[2]), 255]
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(phantom: &str) -> Result<Demo, String> {
        let (_, spec) = presets::all()
            .into_iter()
            .find(|(n, _)| *n == phantom)
            .ok_or_else(|| format!("unknown phantom {phantom:?}"))?;
        let (volume, truth) = synth_phantom(&spec, presets::BACKGROUND).map_err(|e| e.to_string())?;
        Ok(Demo { volume, truth, model: None, result: None })
    }

    /// `[x, y, z]` voxel counts.
    pub fn dims(&self) -> Vec<u32> {
        self.volume.dims().iter().map(|&d| d as u32).collect()
    }

    pub fn voxel_count(&self) -> u32 {
        self.volume.len() as u32
    }

    /// Axial slice `z` as RGBA, `dims[0]` wide and `dims[1]` high.
    pub fn slice_rgba(&self, z: u32, overlay: Overlay) -> Result<Vec<u8>, String> {
        let [nx, ny, nz] = self.volume.dims();
        let z = z as usize;
        if z >= nz {
            return Err(format!("slice {z} outside 0..{nz}"));
        }
        let seg = self.result.as_ref().map(|(m, _)| m);
        let mut out = Vec::with_capacity(nx * ny * 4);
        for y in 0..ny {
            for x in 0..nx {
                let p = [x, y, z];
                let g = gray(self.volume.get(p));
                let color = match (overlay, seg) {
                    (Overlay::Truth, _) => label_color(self.truth.get(p)),
                    (Overlay::Segmentation, Some(m)) => label_color(m.get(p)),
                    (Overlay::Errors, Some(m)) if m.get(p) != self.truth.get(p) => Some([255, 40, 40]),
                    _ => None,
                };
                out.extend_from_slice(&color.map_or([g, g, g, 255], |c| blend(g, c)));
            }
        }
        Ok(out)
    }

    /// The 81x81 descriptor image at a voxel, as RGBA.
    pub fn descriptor_rgba(&self, x: u32, y: u32, z: u32) -> Result<Vec<u8>, String> {
        let d = self.volume.dims();
        if x as usize >= d[0] || y as usize >= d[1] || z as usize >= d[2] {
            return Err(format!("voxel ({x}, {y}, {z}) outside {d:?}"));
        }
        let table = build_offset_table().bind(self.volume.spacing_mm()).map_err(|e| e.to_string())?;
        let descriptor =
            extract_descriptor(&self.volume, [x as i64, y as i64, z as i64], &table).map_err(|e| e.to_string())?;
        let image = decode_descriptor(&descriptor.values).map_err(|e| e.to_string())?;
        Ok(image
            .pixels
            .iter()
            .flat_map(|&v| {
                let g = to_gray(v);
                [g, g, g, 255]
            })
            .collect())
    }

    /// Loads ORGC weights; segmentation uses them instead of the ground truth.
    pub fn load_weights(&mut self, bytes: &[u8]) -> Result<String, String> {
        let model = load_weights(bytes).map_err(|e| e.to_string())?;
        let summary =
            format!("{} blocks x {} hidden, {} classes", model.blocks.len(), model.hidden_dim(), model.num_classes());
        self.model = Some(model);
        Ok(summary)
    }

    pub fn clear_weights(&mut self) {
        self.model = None;
    }

    pub fn has_weights(&self) -> bool {
        self.model.is_some()
    }

    /// Runs coarse-to-fine segmentation. `levels` is a comma list in mm.
    /// Returns the statistics as `key=value` lines.
    pub fn segment(&mut self, levels: &str, majority: u32) -> Result<String, String> {
        let levels_mm = levels
            .split(',')
            .map(|s| s.trim().parse::<f32>().map_err(|_| format!("bad level {s:?}")))
            .collect::<Result<Vec<_>, _>>()?;
        let options = SegmentOptions { levels_mm, majority_threshold: majority as usize, threads: None };
        let result = match &self.model {
            Some(model) => {
                let c = ModelClassifier::new(model, &build_offset_table(), self.volume.spacing_mm())
                    .map_err(|e| e.to_string())?;
                segment(&self.volume, &c, &options)
            }
            None => segment(&self.volume, &MaskClassifier::new(&self.truth), &options),
        }
        .map_err(|e| e.to_string())?;
        let text = result.1.to_key_value();
        self.result = Some(result);
        Ok(text)
    }

    /// Fraction of voxels the last segmentation sent to the classifier.
    pub fn call_fraction(&self) -> f64 {
        self.result.as_ref().map_or(0.0, |(_, s)| s.classifier_calls() as f64 / self.volume.len() as f64)
    }

    /// Dice of the last segmentation against ground truth, per foreground label.
    pub fn dice(&self) -> Result<Vec<f64>, String> {
        let (mask, _) = self.result.as_ref().ok_or("no segmentation yet")?;
        let classes = mask.num_classes().max(self.truth.num_classes());
        let widen = |m: &LabelMask| m.clone().with_num_classes(classes).map_err(|e| e.to_string());
        Ok(dice_per_class(&widen(mask)?, &widen(&self.truth)?).map_err(|e| e.to_string())?.per_class)
    }
}

fn label_color(label: u16) -> Option<[u8; 3]> {
    (label > 0).then(|| PALETTE[(label as usize - 1) % PALETTE.len()])
}
