use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use orgseg::dataset::{parse_manifest, read_dataset};
use orgseg::model::{save_weights, ModelConfig, ModelWeights};
use orgseg::volume::{parse_mask, presets, synth_phantom, write_mask, write_raw, LabelMask, Volume};
use tempfile::TempDir;

fn orgseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_orgseg")).args(args).output().expect("spawn orgseg")
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn value<'a>(text: &'a str, key: &str) -> &'a str {
    text.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .unwrap_or_else(|| panic!("no {key}= in {text}"))
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        Self { dir: tempfile::tempdir().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn arg(&self, name: &str) -> String {
        self.path(name).to_str().unwrap().to_string()
    }

    fn volume(&self, name: &str, v: &Volume) -> String {
        fs::write(self.path(name), write_raw(v)).unwrap();
        self.arg(name)
    }

    fn mask(&self, name: &str, m: &LabelMask) -> String {
        fs::write(self.path(name), write_mask(m)).unwrap();
        self.arg(name)
    }

    fn weights(&self, name: &str, w: &ModelWeights) -> String {
        fs::write(self.path(name), save_weights(w)).unwrap();
        self.arg(name)
    }

    fn phantom(&self) -> (String, String) {
        let (v, m) = synth_phantom(&presets::sphere(), presets::BACKGROUND).unwrap();
        (self.volume("sphere.orgv", &v), self.mask("sphere.orgm", &m))
    }
}

fn small_model(seed: u64) -> ModelWeights {
    let config = ModelConfig { hidden_dim: 16, num_blocks: 1, num_classes: 2, ..ModelConfig::default() };
    ModelWeights::random(config, seed).unwrap()
}

#[test]
fn classify_zero_model_on_zero_volume_is_uniform_background() {
    let f = Fixture::new();
    let v = f.volume("zero.orgv", &Volume::filled([16, 16, 16], [2.0; 3], 0.0).unwrap());
    let w = f.weights("zero.orgc", &ModelWeights::zeros(ModelConfig::default()).unwrap());
    let first = stdout(&orgseg(&["classify", "--volume", &v, "--weights", &w, "--point", "8", "8", "8"]));
    assert_eq!(value(&first, "label"), "background index=0");
    let probs: Vec<f32> = value(&first, "probabilities").split(',').map(|p| p.parse().unwrap()).collect();
    assert_eq!(probs.len(), 14);
    assert!(probs.iter().all(|p| (p - 1.0 / 14.0).abs() < 1e-6));
    value(&first, "elapsed_us").parse::<u64>().expect("integer microseconds");

    let again = stdout(&orgseg(&["classify", "--volume", &v, "--weights", &w, "--point", "8,8,8"]));
    assert_eq!(first.lines().take(2).collect::<Vec<_>>(), again.lines().take(2).collect::<Vec<_>>());
}

#[test]
fn bench_single_query_and_seeded_points() {
    let f = Fixture::new();
    let (v, m) = f.phantom();
    let w = f.weights("w.orgc", &small_model(3));
    let one = stdout(&orgseg(&["bench", "--volume", &v, "--weights", &w, "--n", "1"]));
    assert_eq!(value(&one, "queries"), "1");
    assert_eq!(value(&one, "std_ms").parse::<f64>().unwrap(), 0.0);

    let run = |seed: &str| {
        let out =
            stdout(&orgseg(&["bench", "--volume", &v, "--weights", &w, "--mask", &m, "--n", "200", "--seed", seed]));
        (value(&out, "accuracy").to_string(), value(&out, "macro_f1").to_string())
    };
    assert_eq!(run("7"), run("7"));
}

#[test]
fn segment_coarse_only_and_refined() {
    let f = Fixture::new();
    let (v, m) = f.phantom();
    let coarse = f.arg("coarse.orgm");
    let text = stdout(&orgseg(&["segment", "--volume", &v, "--oracle", &m, "--levels", "8", "--out", &coarse]));
    assert_eq!(value(&text, "levels_mm"), "8");
    assert_eq!(value(&text, "classifier_calls"), "4096");

    let fine = f.arg("fine.orgm");
    let text = stdout(&orgseg(&["segment", "--volume", &v, "--oracle", &m, "--out", &fine]));
    assert_eq!(value(&text, "levels_mm"), "8,4,2");
    for key in ["smoothed_assignments", "points_per_level", "wall_ms_per_level", "wall_ms_total"] {
        value(&text, key);
    }
    let mask = parse_mask(&fs::read(&fine).unwrap()).unwrap();
    assert_eq!(mask.dims(), [64, 64, 64]);
}

#[test]
fn segment_with_model_is_thread_count_independent() {
    let f = Fixture::new();
    let (v, _) = f.phantom();
    let w = f.weights("w.orgc", &small_model(11));
    let a = f.arg("a.orgm");
    let b = f.arg("b.orgm");
    stdout(&orgseg(&["segment", "--volume", &v, "--weights", &w, "--levels", "16,8", "--threads", "1", "--out", &a]));
    stdout(&orgseg(&["segment", "--volume", &v, "--weights", &w, "--levels", "16,8", "--threads", "4", "--out", &b]));
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn decode_uniform_volume_is_constant_gray() {
    let f = Fixture::new();
    // 65³ at 8 mm covers the widest cube (±256 mm) around the centre.
    let v = f.volume("u.orgv", &Volume::filled([65, 65, 65], [8.0; 3], 128.0).unwrap());
    let out = f.arg("d.pgm");
    stdout(&orgseg(&["decode", "--volume", &v, "--point", "32,32,32", "--out", &out]));
    let pgm = fs::read(&out).unwrap();
    let header = b"P5\n81 81\n255\n";
    assert_eq!(&pgm[..header.len()], header);
    let pixels = &pgm[header.len()..];
    assert_eq!(pixels.len(), 81 * 81);
    assert!(pixels.iter().all(|&p| p == 159), "1.0 maps to gray 159");
}

#[test]
fn eval_identical_masks() {
    let f = Fixture::new();
    let (_, m) = f.phantom();
    let csv = f.arg("d.csv");
    let text = stdout(&orgseg(&["eval", "--pred", &m, "--truth", &m, "--csv", &csv]));
    assert!(text.lines().any(|l| l.split_whitespace().collect::<Vec<_>>() == ["1", "1.0000"]));
    assert!(text.lines().any(|l| l.split_whitespace().collect::<Vec<_>>() == ["mean_dice", "1.0000"]));
    assert_eq!(fs::read_to_string(&csv).unwrap(), "label,dice\n1,1.000000\nmean,1.000000\n");
}

#[test]
fn extract_writes_requested_row_count() {
    let f = Fixture::new();
    let (v, m) = f.phantom();
    let out = f.arg("d.orgd");
    let text =
        stdout(&orgseg(&["extract", "--volume", &v, "--mask", &m, "--out", &out, "--count", "300", "--seed", "5"]));
    assert_eq!(value(&text, "rows"), "300");
    let ds = read_dataset(&fs::read(&out).unwrap()).unwrap();
    assert_eq!(ds.len(), 300);
    assert_eq!(ds.dim(), 6561);
    let manifest = parse_manifest(&fs::read_to_string(format!("{out}.manifest")).unwrap()).unwrap();
    assert_eq!(manifest.len(), 300);
    assert!(manifest.iter().all(|e| e.volume_id == "sphere"));
    assert_eq!(manifest.iter().map(|e| e.label).collect::<Vec<_>>(), ds.labels());
}

#[test]
fn inputs_are_not_modified() {
    let f = Fixture::new();
    let (v, m) = f.phantom();
    let w = f.weights("w.orgc", &small_model(1));
    let before: Vec<Vec<u8>> = [&v, &m, &w].iter().map(|p| fs::read(p).unwrap()).collect();
    let seg = f.arg("s.orgm");
    stdout(&orgseg(&["segment", "--volume", &v, "--weights", &w, "--levels", "16", "--out", &seg]));
    stdout(&orgseg(&["bench", "--volume", &v, "--weights", &w, "--mask", &m, "--n", "5"]));
    stdout(&orgseg(&["eval", "--pred", &seg, "--truth", &m]));
    let after: Vec<Vec<u8>> = [&v, &m, &w].iter().map(|p| fs::read(p).unwrap()).collect();
    assert!(before == after);
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn exit_codes() {
    let f = Fixture::new();
    let (v, m) = f.phantom();
    let w = f.weights("w.orgc", &small_model(1));
    let out = f.arg("o.orgm");

    assert_eq!(code(&orgseg(&["segment", "--volume", &v, "--out", &out])), 2);
    assert_eq!(code(&orgseg(&["segment", "--volume", &v, "--oracle", &m, "--levels", "2,4", "--out", &out])), 2);
    assert_eq!(code(&orgseg(&["classify", "--volume", "/nonexistent.orgv", "--weights", &w, "--point", "1,1,1"])), 2);

    let bytes = fs::read(Path::new(&v)).unwrap();
    let truncated = f.arg("t.orgv");
    fs::write(&truncated, &bytes[..bytes.len() - 3]).unwrap();
    assert_eq!(code(&orgseg(&["classify", "--volume", &truncated, "--weights", &w, "--point", "1,1,1"])), 3);

    let other = f.mask("small.orgm", &LabelMask::filled([8, 8, 8], [2.0; 3], 0, 2).unwrap());
    assert_eq!(code(&orgseg(&["eval", "--pred", &other, "--truth", &m])), 4);
    assert_eq!(code(&orgseg(&["classify", "--volume", &v, "--weights", &w, "--point", "64,0,0"])), 4);
    let narrow = f.weights(
        "narrow.orgc",
        &ModelWeights::zeros(ModelConfig { input_dim: 10, hidden_dim: 4, num_blocks: 1, num_classes: 2 }).unwrap(),
    );
    assert_eq!(code(&orgseg(&["classify", "--volume", &v, "--weights", &narrow, "--point", "1,1,1"])), 4);
}

#[test]
fn synth_and_init_weights_feed_the_pipeline() {
    let f = Fixture::new();
    let (v, m, w) = (f.arg("p.orgv"), f.arg("p.orgm"), f.arg("w.orgc"));
    let text = stdout(&orgseg(&["synth", "--phantom", "two_boxes", "--out-volume", &v, "--out-mask", &m]));
    assert_eq!(value(&text, "classes"), "3");
    stdout(&orgseg(&["init-weights", "--out", &w, "--seed", "2", "--hidden", "8", "--blocks", "1", "--classes", "3"]));
    let text = stdout(&orgseg(&["classify", "--volume", &v, "--weights", &w, "--point", "0,0,0"]));
    assert_eq!(value(&text, "probabilities").split(',').count(), 3);
    assert_eq!(code(&orgseg(&["synth", "--phantom", "cube", "--out-volume", &v, "--out-mask", &m])), 2);
}
