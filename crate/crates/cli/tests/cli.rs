use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use neurofacs::expression::{train_tree, Expression, IntensityRecord, TreeConfig};
use neurofacs::image::GrayImage;
use neurofacs::persist::{read_container, read_features, write_container, Container, Payload};
use neurofacs::pipeline::{extract_features, AuCode, LabeledSequence, PipelineConfig};
use neurofacs::tracker::PointGrid;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_neurofacs"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small synthetic dataset with extracted features and four trained models,
/// shared by every test in this file.
struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let o = run(&["synth", "--out", s(&root), "--scale", "small", "--expressions", "3"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let models = root.join("models");
        let o = run(&["train-au", "--manifest", s(&root.join("train.tsv")), "--au", "1,4,12,27", "--out", s(&models)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        Fixture { _dir: dir, root }
    })
}

fn copy_dir(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for e in std::fs::read_dir(from).unwrap() {
        let e = e.unwrap();
        let target = to.join(e.file_name());
        if e.file_type().unwrap().is_dir() {
            copy_dir(&e.path(), &target);
        } else {
            std::fs::copy(e.path(), target).unwrap();
        }
    }
}

#[test]
fn extract_is_idempotent_and_excludes_corrupt_frames() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    copy_dir(&f.root.join("seq"), &root.join("seq"));
    std::fs::copy(f.root.join("test.tsv"), root.join("test.tsv")).unwrap();
    let manifest = root.join("test.tsv");

    let first = run(&["extract", "--manifest", s(&manifest)]);
    assert_eq!(code(&first), 0);
    let second = run(&["extract", "--manifest", s(&manifest)]);
    assert_eq!(code(&second), 0);
    let hashes = |o: &Output| -> Vec<String> {
        String::from_utf8_lossy(&o.stdout).lines().filter(|l| l.contains('\t')).map(String::from).collect()
    };
    assert_eq!(hashes(&first), hashes(&second));
    assert!(String::from_utf8_lossy(&second.stdout).contains(" 0 extracted, 12 cached, 0 excluded"));

    let listed = std::fs::read_to_string(&manifest).unwrap();
    let id = listed.lines().nth(1).unwrap().split('\t').next().unwrap().to_string();
    let victim = root.join("seq").join(&id);
    std::fs::write(victim.join("f003.pgm"), b"P5\n96 96\n255\nshort").unwrap();
    let third = run(&["extract", "--manifest", s(&manifest)]);
    assert_eq!(code(&third), 0, "exclusions do not fail the run");
    assert!(String::from_utf8_lossy(&third.stdout).contains(" 1 excluded"));
    let report = std::fs::read_to_string(root.join("features/exclusions.tsv")).unwrap();
    assert!(report.lines().skip(1).any(|l| l.starts_with(&id)), "{report}");
}

fn load_sequence(root: &Path, id: &str, aus: &[u16]) -> LabeledSequence {
    let dir = root.join("seq").join(id);
    let mut names: Vec<PathBuf> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "pgm"))
        .collect();
    names.sort();
    LabeledSequence {
        id: id.into(),
        subject: "s".into(),
        frames: names.iter().map(|p| GrayImage::read_pgm(std::fs::File::open(p).unwrap()).unwrap()).collect(),
        first: PointGrid::parse(&std::fs::read_to_string(dir.join("landmarks.txt")).unwrap()).unwrap(),
        au_set: aus.iter().map(|&a| AuCode(a)).collect(),
        expression: None,
    }
}

#[test]
fn cache_matches_direct_extraction() {
    let f = fixture();
    let manifest = std::fs::read_to_string(f.root.join("train.tsv")).unwrap();
    let ids: Vec<&str> = manifest.lines().skip(1).take(3).map(|l| l.split('\t').next().unwrap()).collect();
    let cfg = PipelineConfig::default();
    let bank = cfg.bank().unwrap();
    for id in ids {
        let direct = extract_features(&load_sequence(&f.root, id, &[]), &cfg, &bank).unwrap();
        let text = std::fs::read_to_string(f.root.join("features").join(format!("{id}.features"))).unwrap();
        let (_, cached) = read_features(&text).unwrap();
        assert_eq!(cached, direct, "{id}");
    }
}

#[test]
fn trained_models_load_and_repeat_byte_for_byte() {
    let f = fixture();
    let out = tempfile::tempdir().unwrap();
    let o = run(&["train-au", "--manifest", s(&f.root.join("train.tsv")), "--au", "AU12,4", "--out", s(out.path())]);
    assert_eq!(code(&o), 0);
    let models: Vec<_> = std::fs::read_dir(out.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "model"))
        .collect();
    assert_eq!(models.len(), 2);
    for au in [4, 12] {
        let name = format!("AU{au}.model");
        let a = std::fs::read(out.path().join(&name)).unwrap();
        let b = std::fs::read(f.root.join("models").join(&name)).unwrap();
        assert_eq!(a, b, "{name} differs between runs");
        let c = read_container(std::str::from_utf8(&a).unwrap()).unwrap();
        assert!(matches!(c.payload, Payload::AuModel(ref m) if m.au == AuCode(au)));
        assert!(std::fs::read_to_string(out.path().join(format!("AU{au}.log"))).unwrap().contains("accepted"));
    }
}

#[test]
fn usage_data_and_partial_exit_codes() {
    let f = fixture();
    let train = f.root.join("train.tsv");
    let out = tempfile::tempdir().unwrap();
    let target = out.path().join("never");
    let o = run(&["train-au", "--manifest", s(&train), "--au", "1,99", "--out", s(&target)]);
    assert_eq!(code(&o), 2);
    assert!(!target.exists(), "usage errors happen before any work");

    let o = run(&["train-au", "--manifest", s(&train), "--au", "2,27", "--out", s(out.path())]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("AU2"));
    assert!(out.path().join("AU27.model").exists());
    assert!(!out.path().join("AU2.model").exists());

    let o = run(&["extract", "--manifest", s(&out.path().join("missing.tsv"))]);
    assert_eq!(code(&o), 3);
    assert_eq!(code(&run(&["frobnicate"])), 2);

    let bad_models = out.path().join("old");
    std::fs::create_dir_all(&bad_models).unwrap();
    let text = std::fs::read_to_string(f.root.join("models/AU1.model")).unwrap();
    std::fs::write(bad_models.join("AU1.model"), text.replacen("neurofacs-container 1", "neurofacs-container 9", 1))
        .unwrap();
    let o = run(&["detect", "--manifest", s(&f.root.join("test.tsv")), "--models", s(&bad_models)]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("version 9"));
}

#[test]
fn eval_of_perfect_predictions() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let manifest = std::fs::read_to_string(f.root.join("test.tsv")).unwrap();
    let mut tsv = String::from("id\tau\tgeometric\tappearance\tfused\tactive\n");
    for line in manifest.lines().skip(1) {
        let cols: Vec<&str> = line.split('\t').collect();
        for au in [1, 4, 12, 27] {
            let on = cols[4].split('+').any(|a| a == au.to_string());
            tsv.push_str(&format!("{}\t{au}\t0\t0\t{}\t{}\n", cols[0], if on { 1.5 } else { 0.0 }, u8::from(on)));
        }
    }
    let preds = dir.path().join("perfect.tsv");
    std::fs::write(&preds, tsv).unwrap();
    let o = run(&[
        "eval",
        "--manifest",
        s(&f.root.join("test.tsv")),
        "--predictions",
        s(&preds),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for region in ["upper", "lower"] {
        let table = std::fs::read_to_string(dir.path().join(format!("eval-{region}.txt"))).unwrap();
        assert!(table.ends_with("R=100.0% F=0.0%\n"), "{table}");
        assert!(dir.path().join(format!("eval-{region}.csv")).exists());
    }
}

#[test]
fn detect_recovers_training_labels() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "detect",
        "--manifest",
        s(&f.root.join("train.tsv")),
        "--models",
        s(&f.root.join("models")),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(code(&o), 0);
    let manifest = std::fs::read_to_string(f.root.join("train.tsv")).unwrap();
    let stdout = String::from_utf8_lossy(&o.stdout);
    let mut hits = 0;
    let mut total = 0;
    for (m, d) in manifest.lines().skip(1).zip(stdout.lines()) {
        let cols: Vec<&str> = m.split('\t').collect();
        assert!(d.starts_with(cols[0]));
        total += 1;
        if d.ends_with(&format!("active={}", cols[4])) {
            hits += 1;
        }
    }
    assert!(hits * 10 >= total * 9, "{hits}/{total}");
    assert!(dir.path().join("detections.tsv").exists());
}

#[test]
fn expression_training_and_rule_export() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let expr = f.root.join("expr.tsv");
    let o = run(&["train-expr", "--manifest", s(&expr), "--models", s(&f.root.join("models")), "--out", s(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let tree = dir.path().join("expression.tree");
    let rules = dir.path().join("rules.txt");
    let o = run(&["export-rules", "--model", s(&tree), "--out", s(&rules)]);
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(&rules).unwrap();
    assert!(text.lines().all(|l| l.contains(" then ")), "{text}");

    let single: Vec<IntensityRecord> = (0..4)
        .map(|i| IntensityRecord::new([(AuCode(12), 1.0 + 0.1 * i as f64)].into_iter().collect(), Expression::Happy))
        .collect();
    let leaf = Container {
        config: vec![],
        payload: Payload::Tree(train_tree(&single, &TreeConfig::default()).unwrap()),
    };
    let leaf_file = dir.path().join("leaf.tree");
    std::fs::write(&leaf_file, write_container(&leaf)).unwrap();
    let o = run(&["export-rules", "--model", s(&leaf_file)]);
    assert_eq!(code(&o), 0);
    let out = String::from_utf8_lossy(&o.stdout);
    assert_eq!(out.lines().count(), 1, "{out}");
    assert!(out.contains("happy"));

    let o = run(&["export-rules", "--model", s(&f.root.join("models/AU1.model"))]);
    assert_eq!(code(&o), 3);
}

#[test]
fn config_file_and_flag_precedence() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    std::fs::write(&cfg, "threshold=100\n").unwrap();
    let manifest = f.root.join("test.tsv");
    let models = f.root.join("models");
    let quiet = run(&["detect", "--config", s(&cfg), "--manifest", s(&manifest), "--models", s(&models)]);
    assert_eq!(code(&quiet), 0);
    assert!(String::from_utf8_lossy(&quiet.stdout).lines().all(|l| l.ends_with("active=none")));
    let loud = run(&[
        "detect",
        "--config",
        s(&cfg),
        "--threshold",
        "-100",
        "--manifest",
        s(&manifest),
        "--models",
        s(&models),
    ]);
    assert!(String::from_utf8_lossy(&loud.stdout).lines().all(|l| l.ends_with("active=1+4+12+27")));

    std::fs::write(&cfg, "no_such_key=1\n").unwrap();
    let o = run(&["extract", "--config", s(&cfg), "--manifest", s(&manifest)]);
    assert_eq!(code(&o), 2);
}
