use std::fs;
use std::path::Path;

use orgseg::model::{load_weights, ModelWeights};
use orgseg::volume::{parse_mask, parse_nifti, parse_raw, LabelMask, Volume, MASK_MAGIC, RAW_MAGIC};
use orgseg::Error;

use crate::CliError;

const NIFTI_MAGIC_AT: usize = 344;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Nifti,
    Raw,
    Mask,
}

fn read_input(path: &Path) -> Result<Vec<u8>, CliError> {
    if !path.is_file() {
        return Err(CliError::Usage(format!("{}: no such file", path.display())));
    }
    fs::read(path).map_err(|e| CliError::Core(Error::Io(e)))
}

fn extension(path: &Path) -> String {
    path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase()
}

fn sniff(bytes: &[u8]) -> Option<Format> {
    match bytes.get(..4) {
        Some(m) if m == RAW_MAGIC => return Some(Format::Raw),
        Some(m) if m == MASK_MAGIC => return Some(Format::Mask),
        _ => {}
    }
    match bytes.get(NIFTI_MAGIC_AT..NIFTI_MAGIC_AT + 4) {
        Some(b"n+1\0") => Some(Format::Nifti),
        _ => None,
    }
}

/// Picks the format from the extension, then insists the magic agrees.
fn detect(path: &Path, bytes: &[u8]) -> Result<Format, CliError> {
    let by_ext = match extension(path).as_str() {
        "nii" => Some(Format::Nifti),
        "orgv" => Some(Format::Raw),
        "orgm" => Some(Format::Mask),
        "gz" => {
            return Err(CliError::Core(Error::MalformedHeader(format!(
                "{}: compressed input is not supported, decompress it first",
                path.display()
            ))))
        }
        _ => None,
    };
    let by_magic = sniff(bytes);
    match (by_ext, by_magic) {
        (Some(e), Some(m)) if e == m => Ok(e),
        (None, Some(m)) => Ok(m),
        (Some(e), found) => Err(CliError::Core(Error::MalformedHeader(format!(
            "{}: extension says {e:?} but contents {}",
            path.display(),
            found.map_or("carry no known magic".to_string(), |m| format!("look like {m:?}"))
        )))),
        (None, None) => {
            Err(CliError::Core(Error::MalformedHeader(format!("{}: unrecognized file format", path.display()))))
        }
    }
}

pub fn load_volume(path: &Path) -> Result<Volume, CliError> {
    let bytes = read_input(path)?;
    match detect(path, &bytes)? {
        Format::Nifti => Ok(parse_nifti(&bytes)?.volume),
        Format::Raw => Ok(parse_raw(&bytes)?),
        Format::Mask => Err(CliError::Usage(format!("{}: is a label mask, expected a volume", path.display()))),
    }
}

pub fn load_mask(path: &Path) -> Result<LabelMask, CliError> {
    let bytes = read_input(path)?;
    match detect(path, &bytes)? {
        Format::Nifti => Ok(parse_nifti(&bytes)?.into_mask()?),
        Format::Mask => Ok(parse_mask(&bytes)?),
        Format::Raw => Err(CliError::Usage(format!("{}: is an intensity volume, expected a mask", path.display()))),
    }
}

pub fn load_model(path: &Path) -> Result<ModelWeights, CliError> {
    Ok(load_weights(&read_input(path)?)?)
}

pub fn write_output(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::Output(path.display().to_string(), e))
}

/// Bounds-checks a voxel index against the volume.
pub fn voxel(point: &[i64], volume: &Volume) -> Result<[usize; 3], CliError> {
    if point.len() != 3 {
        return Err(CliError::Usage(format!("--point needs three indices, got {point:?}")));
    }
    let dims = volume.dims();
    let mut out = [0usize; 3];
    for axis in 0..3 {
        let c = point[axis];
        if c < 0 || c as usize >= dims[axis] {
            return Err(CliError::Core(Error::DimensionMismatch(format!(
                "point {point:?} outside volume of dims {dims:?}"
            ))));
        }
        out[axis] = c as usize;
    }
    Ok(out)
}

pub fn check_levels(levels: &[f32]) -> Result<(), CliError> {
    if levels.is_empty() {
        return Err(CliError::Usage("--levels needs at least one spacing".into()));
    }
    if levels.iter().any(|l| !l.is_finite() || *l <= 0.0) {
        return Err(CliError::Usage(format!("--levels must be positive, got {levels:?}")));
    }
    if levels.windows(2).any(|w| w[1] >= w[0]) {
        return Err(CliError::Usage(format!("--levels must be strictly decreasing, got {levels:?}")));
    }
    Ok(())
}
