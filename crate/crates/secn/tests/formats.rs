use std::fs;

use secn::tenfile::{self, Dtype};
use secn::{checkpoint, config_file, frames, report};
use secn_core::autodiff::AdamState;
use secn_core::config::ModelConfig;
use secn_core::metrics::{MetricReport, SequenceMetrics, SsimConfig};
use secn_core::trainer::Trainer;
use secn_core::Tensor;

fn ramp(shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |i| ((i * 37) % 101) as f64 / 100.0 - 0.3)
}

#[test]
fn ten_roundtrips_in_both_precisions() {
    let t = ramp(&[2, 3, 5]);
    assert_eq!(tenfile::decode(&tenfile::encode(&t, Dtype::F64).unwrap()).unwrap(), t);
    let back = tenfile::decode(&tenfile::encode(&t, Dtype::F32).unwrap()).unwrap();
    assert_eq!(back.shape(), t.shape());
    for (a, b) in back.data().iter().zip(t.data()) {
        assert_eq!(*a, *b as f32 as f64);
    }
    let s = Tensor::scalar(2.5);
    assert_eq!(tenfile::decode(&tenfile::encode(&s, Dtype::F64).unwrap()).unwrap(), s);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.ten");
    tenfile::write(&path, &t, Dtype::F64).unwrap();
    assert_eq!(tenfile::read(&path).unwrap(), t);
}

#[test]
fn ten_rejects_corrupt_input() {
    let mut bytes = tenfile::encode(&ramp(&[4]), Dtype::F64).unwrap();
    assert!(tenfile::decode(&bytes[..bytes.len() - 1]).is_err());
    assert!(tenfile::decode(&bytes[..3]).is_err());
    bytes[0] ^= 0xff;
    let err = tenfile::decode(&bytes).unwrap_err();
    assert!(format!("{err}").contains("magic"), "{err}");
}

#[test]
fn ppm_roundtrip_is_exact_on_the_8_bit_grid() {
    let dir = tempfile::tempdir().unwrap();
    let t = Tensor::from_fn(&[3, 4, 6], |i| ((i * 13) % 256) as f64 / 255.0);
    let path = dir.path().join("f.ppm");
    frames::write_ppm(&path, &t).unwrap();
    let back = frames::read_ppm(&path).unwrap();
    for (a, b) in back.data().iter().zip(t.data()) {
        assert!((a - b).abs() < 1e-12);
    }
    // out-of-range values are clamped on the way out
    frames::write_ppm(&path, &Tensor::full(&[3, 2, 2], 1.7)).unwrap();
    assert!(frames::read_ppm(&path).unwrap().data().iter().all(|&v| v == 1.0));
}

#[test]
fn sequences_and_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let seq: Vec<Tensor> = (0..3).map(|k| Tensor::full(&[3, 4, 4], k as f64 / 4.0)).collect();
    frames::write_sequence(&dir.path().join("a"), &seq, frames::FrameFormat::Ten).unwrap();
    frames::write_sequence(&dir.path().join("b"), &seq, frames::FrameFormat::Ppm).unwrap();
    assert_eq!(frames::read_sequence(&dir.path().join("a")).unwrap(), seq);
    assert_eq!(frames::frame_paths(&dir.path().join("b")).unwrap().len(), 3);

    frames::write_manifest(&dir.path().join("dataset.txt"), &["b".into(), "a".into()]).unwrap();
    let from_manifest = frames::resolve_sequences(&dir.path().join("dataset.txt")).unwrap();
    let from_dir = frames::resolve_sequences(dir.path()).unwrap();
    assert_eq!(from_manifest, from_dir);
    let names: Vec<_> = from_manifest.iter().map(|p| frames::sequence_name(p)).collect();
    assert_eq!(names, ["b", "a"]);
    assert_eq!(frames::resolve_sequences(&dir.path().join("a")).unwrap(), [dir.path().join("a")]);
    assert!(frames::resolve_sequences(&dir.path().join("missing")).is_err());
}

#[test]
fn config_file_roundtrip_and_errors() {
    let path = std::path::Path::new("model.cfg");
    let cfg = ModelConfig::tiny();
    let text = config_file::render(&cfg);
    assert_eq!(config_file::parse(path, &text).unwrap(), cfg);

    let missing: String = text.lines().filter(|l| !l.starts_with("gamma")).map(|l| format!("{l}\n")).collect();
    match config_file::parse(path, &missing) {
        Err(config_file::ConfigFileError::Missing { key, .. }) => assert_eq!(key, "gamma"),
        other => panic!("{other:?}"),
    }
    let dup = format!("{text}t1 = 2\n");
    assert!(matches!(config_file::parse(path, &dup), Err(config_file::ConfigFileError::Duplicate { .. })));
    let garbage = format!("{text}just words\n");
    assert!(matches!(config_file::parse(path, &garbage), Err(config_file::ConfigFileError::Syntax { .. })));
    let bad = text.replace("scale = 4", "scale = 3");
    assert!(matches!(config_file::parse(path, &bad), Err(config_file::ConfigFileError::Value { .. })));
}

#[test]
fn checkpoint_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ModelConfig::tiny();
    let mut trainer = Trainer::new(&cfg, 5).unwrap();
    let ids: Vec<_> = trainer.params.ids().collect();
    for (k, &id) in ids.iter().enumerate().take(3) {
        let shape = trainer.params.get(id).shape().to_vec();
        trainer.adam.insert_state(id, AdamState { m: ramp(&shape), v: ramp(&shape).scale(0.5).map(f64::abs), step: k as u64 + 1 });
    }
    checkpoint::save(dir.path(), &cfg, 17, &trainer.params, &trainer.adam).unwrap();

    let loaded = checkpoint::load(dir.path()).unwrap();
    assert_eq!(loaded.step, 17);
    assert_eq!(loaded.params.len(), trainer.params.len());
    for (id, name, t) in trainer.params.iter() {
        assert_eq!(loaded.params.get(loaded.params.id(name).unwrap()), t, "{name}");
        assert_eq!(loaded.params.name(id), name);
    }
    assert_eq!(loaded.adam.config, trainer.adam.config);
    assert_eq!(loaded.adam.states().count(), 3);
    for (id, s) in trainer.adam.states() {
        assert_eq!(loaded.adam.state(id), Some(s));
    }
    let manifest = checkpoint::read_manifest(dir.path()).unwrap();
    assert_eq!(manifest.config.get("t2").map(String::as_str), Some("1"));

    // a checkpoint for a different architecture is refused
    let other = tempfile::tempdir().unwrap();
    let mut wider = cfg.clone();
    wider.lffn.width = 6;
    let t = Trainer::new(&wider, 5).unwrap();
    checkpoint::save(other.path(), &wider, 0, &t.params, &t.adam).unwrap();
    let text = fs::read_to_string(other.path().join("manifest.json")).unwrap();
    fs::write(other.path().join("manifest.json"), text.replace("\"lffn_width\": \"6\"", "\"lffn_width\": \"4\"")).unwrap();
    assert!(checkpoint::load(other.path()).is_err());
}

fn sample_report() -> MetricReport {
    let cfg = SsimConfig::default();
    let sequences = (0..3)
        .map(|k| {
            let gt: Vec<Tensor> = (0..4).map(|f| ramp(&[3, 12, 12]).scale(0.5 + 0.1 * f as f64)).collect();
            let pred: Vec<Tensor> = gt.iter().map(|g| g.map(|v| v + 0.01 * (k + 1) as f64)).collect();
            SequenceMetrics::evaluate(format!("s{k}"), &pred, &gt, 1.0, &cfg).unwrap()
        })
        .collect();
    MetricReport { sequences }
}

#[test]
fn report_json_roundtrip_and_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let r = sample_report();
    let path = dir.path().join("report.json");
    report::write_json(&path, &r).unwrap();
    assert_eq!(report::read_json(&path).unwrap(), r);

    report::write_all(dir.path(), &r).unwrap();
    for f in ["report.txt", "frames.csv", "psnr.ppm"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let csv = fs::read_to_string(dir.path().join("frames.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 4);
    assert!(csv.starts_with("sequence,frame,psnr,ssim_vh"));
    let text = report::render_text(&r);
    assert!(text.contains("s2"));

    let rows = r.compare(&r).unwrap();
    let table = report::render_comparison(&rows, "a", "a");
    assert!(table.contains("PSNR") || table.contains("psnr"), "{table}");
}
