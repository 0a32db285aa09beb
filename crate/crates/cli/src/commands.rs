use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use orgseg::dataset::{export_dataset_to, write_manifest, SampleSpec};
use orgseg::metrics::{accuracy_and_macro_f1, dice_per_class, ConfusionCounts};
use orgseg::model::{save_weights, ModelConfig, ModelWeights, Workspace};
use orgseg::sampler::{build_offset_table, decode_descriptor, encode_pgm, extract_descriptor, extract_into};
use orgseg::segmenter::{segment, MaskClassifier, ModelClassifier, SegmentOptions};
use orgseg::volume::{presets, synth_phantom, write_mask, write_raw};
use orgseg::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::inputs::{check_levels, load_mask, load_model, load_volume, voxel, write_output};
use crate::CliError;

type Out = Result<String, CliError>;

pub fn classify(volume: &Path, weights: &Path, point: &[i64]) -> Out {
    let volume = load_volume(volume)?;
    let model = load_model(weights)?;
    let p = voxel(point, &volume)?;
    let table = build_offset_table().bind(volume.spacing_mm())?;
    check_input_dim(&model, table.len())?;

    let started = Instant::now();
    let descriptor = extract_descriptor(&volume, p.map(|c| c as i64), &table)?;
    let probs = model.predict(&descriptor.values)?;
    let elapsed = started.elapsed();

    let mut s = String::new();
    writeln!(s, "label={} index={}", model.label_names[probs.label], probs.label).unwrap();
    let joined: Vec<String> = probs.probs.iter().map(|p| format!("{p:.6}")).collect();
    writeln!(s, "probabilities={}", joined.join(",")).unwrap();
    writeln!(s, "elapsed_us={}", elapsed.as_micros()).unwrap();
    Ok(s)
}

fn check_input_dim(model: &ModelWeights, dim: usize) -> Result<(), CliError> {
    if model.input_dim() != dim {
        return Err(Error::DimensionMismatch(format!(
            "model expects {} inputs, descriptor has {dim}",
            model.input_dim()
        ))
        .into());
    }
    Ok(())
}

pub fn bench(volume: &Path, weights: &Path, mask: Option<&Path>, n: usize, seed: u64) -> Out {
    if n == 0 {
        return Err(CliError::Usage("--n must be at least 1".into()));
    }
    let volume = load_volume(volume)?;
    let model = load_model(weights)?;
    let mask = mask.map(load_mask).transpose()?;
    if let Some(m) = &mask {
        m.check_paired(&volume)?;
    }
    let table = build_offset_table().bind(volume.spacing_mm())?;
    check_input_dim(&model, table.len())?;

    let dims = volume.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<[usize; 3]> =
        (0..n).map(|_| [rng.gen_range(0..dims[0]), rng.gen_range(0..dims[1]), rng.gen_range(0..dims[2])]).collect();

    let classes = model.num_classes().max(mask.as_ref().map_or(0, |m| m.num_classes() as usize));
    let mut counts = ConfusionCounts::new(classes);
    let mut ws = Workspace::new(&model);
    let mut descriptor = vec![0f32; table.len()];
    let mut times_ms = Vec::with_capacity(n);
    for p in &points {
        let started = Instant::now();
        extract_into(&volume, p.map(|c| c as i64), &table, &mut descriptor)?;
        let label = model.predict_with(&descriptor, &mut ws)?.label;
        times_ms.push(started.elapsed().as_secs_f64() * 1e3);
        if let Some(m) = &mask {
            counts.add(m.get(*p) as usize, label)?;
        }
    }
    let mean = times_ms.iter().sum::<f64>() / n as f64;
    let std = (times_ms.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n as f64).sqrt();

    let mut s = String::new();
    writeln!(s, "queries={n}").unwrap();
    writeln!(s, "mean_ms={mean:.4}").unwrap();
    writeln!(s, "std_ms={std:.4}").unwrap();
    if mask.is_some() {
        let (accuracy, macro_f1) = accuracy_and_macro_f1(&counts)?;
        writeln!(s, "accuracy={accuracy:.4}").unwrap();
        writeln!(s, "macro_f1={macro_f1:.4}").unwrap();
    }
    Ok(s)
}

pub enum Classifier<'a> {
    Weights(&'a Path),
    Oracle(&'a Path),
}

pub fn segment_cmd(
    volume: &Path,
    classifier: Classifier<'_>,
    levels: &[f32],
    threads: Option<usize>,
    majority: usize,
    out: &Path,
) -> Out {
    check_levels(levels)?;
    if threads == Some(0) {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    let volume = load_volume(volume)?;
    let options = SegmentOptions { levels_mm: levels.to_vec(), majority_threshold: majority, threads };
    let (mask, stats) = match classifier {
        Classifier::Weights(path) => {
            let model = load_model(path)?;
            let c = ModelClassifier::new(&model, &build_offset_table(), volume.spacing_mm())?;
            segment(&volume, &c, &options)?
        }
        Classifier::Oracle(path) => {
            let truth = load_mask(path)?;
            truth.check_paired(&volume)?;
            segment(&volume, &MaskClassifier::new(&truth), &options)?
        }
    };
    write_output(out, &write_mask(&mask))?;
    Ok(stats.to_key_value())
}

pub struct ExtractArgs<'a> {
    pub volume: &'a Path,
    pub mask: &'a Path,
    pub out: &'a Path,
    pub manifest: Option<&'a Path>,
    pub volume_id: Option<&'a str>,
    pub spec: SampleSpec,
}

pub fn extract(args: ExtractArgs<'_>) -> Out {
    args.spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let volume = load_volume(args.volume)?;
    let mask = load_mask(args.mask)?;
    mask.check_paired(&volume)?;
    let table = build_offset_table().bind(volume.spacing_mm())?;
    let id = match args.volume_id {
        Some(id) => id.to_string(),
        None => stem(args.volume),
    };
    let manifest_path = args.manifest.map(Path::to_path_buf).unwrap_or_else(|| sidecar(args.out));

    let file = File::create(args.out).map_err(|e| CliError::Output(args.out.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    let entries = export_dataset_to(&mut w, &volume, &mask, &args.spec, &table, &id)?;
    w.flush().map_err(|e| CliError::Output(args.out.display().to_string(), e))?;
    write_output(&manifest_path, write_manifest(&entries).as_bytes())?;

    let mut s = String::new();
    writeln!(s, "rows={}", entries.len()).unwrap();
    writeln!(s, "dim={}", table.len()).unwrap();
    writeln!(s, "manifest={}", manifest_path.display()).unwrap();
    Ok(s)
}

fn stem(path: &Path) -> String {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("volume");
    let id = name.split('.').next().filter(|s| !s.is_empty()).unwrap_or("volume");
    id.chars().map(|c| if c.is_whitespace() { '_' } else { c }).collect()
}

fn sidecar(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

pub fn decode(volume: &Path, point: &[i64], out: &Path) -> Out {
    let volume = load_volume(volume)?;
    let p = voxel(point, &volume)?;
    let table = build_offset_table().bind(volume.spacing_mm())?;
    let descriptor = extract_descriptor(&volume, p.map(|c| c as i64), &table)?;
    let image = decode_descriptor(&descriptor.values)?;
    write_output(out, &encode_pgm(&image))?;
    Ok(format!("wrote {} (81x81 PGM)\n", out.display()))
}

pub fn eval(pred: &Path, truth: &Path, csv: Option<&Path>) -> Out {
    let pred = load_mask(pred)?;
    let truth = load_mask(truth)?;
    if pred.dims() != truth.dims() {
        return Err(Error::DimsMismatch { left: pred.dims(), right: truth.dims() }.into());
    }
    let classes = pred.num_classes().max(truth.num_classes());
    let pred = pred.with_num_classes(classes)?;
    let truth = truth.with_num_classes(classes)?;
    let dice = dice_per_class(&pred, &truth)?;
    let mut counts = ConfusionCounts::new(classes as usize);
    for (&t, &p) in truth.labels().iter().zip(pred.labels()) {
        counts.add(t as usize, p as usize)?;
    }
    let (accuracy, macro_f1) = accuracy_and_macro_f1(&counts)?;

    let mut s = String::new();
    writeln!(s, "{:<16}{:>10}", "label", "dice").unwrap();
    for (i, d) in dice.per_class.iter().enumerate() {
        writeln!(s, "{:<16}{:>10.4}", i + 1, d).unwrap();
    }
    writeln!(s, "{:<16}{:>10.4}", "mean_dice", dice.mean()).unwrap();
    writeln!(s, "{:<16}{:>10.4}", "voxel_accuracy", accuracy).unwrap();
    writeln!(s, "{:<16}{:>10.4}", "macro_f1", macro_f1).unwrap();

    if let Some(path) = csv {
        let mut text = String::from("label,dice\n");
        for (i, d) in dice.per_class.iter().enumerate() {
            writeln!(text, "{},{d:.6}", i + 1).unwrap();
        }
        writeln!(text, "mean,{:.6}", dice.mean()).unwrap();
        write_output(path, text.as_bytes())?;
    }
    Ok(s)
}

pub fn synth(name: &str, out_volume: &Path, out_mask: &Path) -> Out {
    let known = presets::all();
    let Some((_, spec)) = known.iter().find(|(n, _)| *n == name) else {
        let names: Vec<&str> = known.iter().map(|(n, _)| *n).collect();
        return Err(CliError::Usage(format!("unknown phantom {name:?}, expected one of {}", names.join(", "))));
    };
    let (volume, mask) = synth_phantom(spec, presets::BACKGROUND)?;
    write_output(out_volume, &write_raw(&volume))?;
    write_output(out_mask, &write_mask(&mask))?;
    let d = volume.dims();
    Ok(format!("dims={}x{}x{}\nclasses={}\n", d[0], d[1], d[2], mask.num_classes()))
}

pub fn init_weights(config: ModelConfig, zero: bool, seed: u64, out: &Path) -> Out {
    if config.input_dim == 0 || config.hidden_dim == 0 || config.num_classes == 0 {
        return Err(CliError::Usage("model dimensions must be positive".into()));
    }
    let model = if zero { ModelWeights::zeros(config)? } else { ModelWeights::random(config, seed)? };
    let bytes = save_weights(&model);
    write_output(out, &bytes)?;
    Ok(format!("wrote {} ({} bytes)\n", out.display(), bytes.len()))
}
