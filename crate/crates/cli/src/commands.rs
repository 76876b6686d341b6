use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use neurofacs::expression::{confusion_matrix, export_rules as rules_text, train_tree, IntensityRecord};
use neurofacs::persist::{read_container, write_container, Container, Payload};
use neurofacs::pipeline::{
    combination_label, detect_aus, tally, train_au_model, AuCode, AuModel, Detection, EvalReport, LabeledSequence,
    Region,
};
use neurofacs::synth::{generate_dataset, generate_expression_set, DatasetConfig};
use neurofacs::Error;

use crate::cache::{load_features, Loaded};
use crate::config::Settings;
use crate::manifest::{self, Manifest, Record, RegionTag};
use crate::{write_atomic, CliError, Status};

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    write_atomic(path, text.as_bytes()).map_err(|e| io_err(path, e))
}

fn feature_dir(manifest: &Path, explicit: Option<PathBuf>) -> PathBuf {
    explicit.unwrap_or_else(|| manifest.parent().map(Path::to_path_buf).unwrap_or_default().join("features"))
}

/// `1,4` or `AU1,AU4`; rejected before any work starts.
pub fn parse_au_list(s: &str) -> Result<Vec<AuCode>, CliError> {
    let set: BTreeSet<AuCode> = s
        .split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| AuCode::parse(p).map_err(|e| CliError::Usage(e.to_string())))
        .collect::<Result<_, _>>()?;
    if set.is_empty() {
        return Err(CliError::Usage("--au needs at least one AU code".into()));
    }
    Ok(set.into_iter().collect())
}

fn report_exclusions(loaded: &Loaded) {
    for (id, why) in &loaded.exclusions {
        eprintln!("excluded {id}: {why}");
    }
}

pub fn extract(manifest_path: &Path, out: Option<PathBuf>, settings: &Settings) -> Result<Status, CliError> {
    let manifest = Manifest::read(manifest_path)?;
    let dir = feature_dir(manifest_path, out);
    let loaded = load_features(&manifest, settings, &dir)?;
    for (r, h) in loaded.records.iter().zip(&loaded.hashes) {
        println!("{}\t{h}", r.id);
    }
    report_exclusions(&loaded);
    println!(
        "{} sequences: {} extracted, {} cached, {} excluded (see {})",
        manifest.records.len(),
        loaded.computed,
        loaded.cached,
        loaded.exclusions.len(),
        dir.join(crate::cache::EXCLUSIONS).display()
    );
    Ok(Status::Ok)
}

pub fn model_file(dir: &Path, au: AuCode) -> PathBuf {
    dir.join(format!("AU{}.model", au.0))
}

pub fn train_au(
    manifest_path: &Path,
    aus: &str,
    out: &Path,
    features: Option<PathBuf>,
    settings: &Settings,
) -> Result<Status, CliError> {
    let aus = parse_au_list(aus)?;
    let manifest = Manifest::read(manifest_path)?;
    let loaded = load_features(&manifest, settings, &feature_dir(manifest_path, features))?;
    report_exclusions(&loaded);
    let mut status = Status::Ok;
    for au in aus {
        match train_au_model(&loaded.sequences, &loaded.features, au, &loaded.cfg) {
            Ok(report) => {
                let container = Container {
                    config: settings.snapshot(&loaded.cfg),
                    payload: Payload::AuModel(report.model.clone()),
                };
                let path = model_file(out, au);
                write_file(&path, &write_container(&container))?;
                write_file(&out.join(format!("AU{}.log", au.0)), &report.log())?;
                for w in &report.warnings {
                    eprintln!("warning: {w}");
                }
                println!(
                    "{au}: geometric {:?}, appearance {:?} -> {}",
                    report.model.geometric.model.partition_counts(),
                    report.model.appearance.model.partition_counts(),
                    path.display()
                );
            }
            Err(e @ (Error::NoPositives(_) | Error::InvalidParameter(_) | Error::Empty(_))) => {
                eprintln!("skipped {au}: {e}");
                status = Status::Partial;
            }
            Err(e) => {
                eprintln!("failed {au}: {e}");
                status = Status::Partial;
            }
        }
    }
    Ok(status)
}

/// AU models in a directory, ordered by AU code, together with the
/// settings they were trained under.
pub fn load_models(dir: &Path, only: Option<&[AuCode]>) -> Result<(Vec<AuModel>, Settings), CliError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "model"))
        .collect();
    paths.sort();
    let mut models = BTreeMap::new();
    let mut settings = None;
    for p in paths {
        let text = std::fs::read_to_string(&p).map_err(|e| io_err(&p, e))?;
        let c = read_container(&text).map_err(|e| io_err(&p, e))?;
        let Payload::AuModel(m) = c.payload else {
            continue;
        };
        if only.is_some_and(|o| !o.contains(&m.au)) {
            continue;
        }
        let config: String = c.config.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        let s = Settings::parse(&config).map_err(|e| io_err(&p, e))?;
        match &settings {
            None => settings = Some(s),
            Some(first) if Settings::extraction_key(&first.pipeline) != Settings::extraction_key(&s.pipeline) => {
                return Err(io_err(&p, "model was trained with different feature settings"));
            }
            Some(_) => {}
        }
        models.insert(m.au, m);
    }
    if let Some(o) = only {
        if let Some(missing) = o.iter().find(|a| !models.contains_key(a)) {
            return Err(CliError::Data(format!("no model for {missing} in {}", dir.display())));
        }
    }
    let settings = settings.ok_or_else(|| CliError::Data(format!("no AU models in {}", dir.display())))?;
    Ok((models.into_values().collect(), settings))
}

/// Settings stored with the models, with an explicit threshold from the
/// command line or config file taking precedence.
fn inference_settings(stored: Settings, current: &Settings) -> Settings {
    let mut s = stored;
    if let Some(t) = current.explicit_threshold {
        s.pipeline.threshold = t;
        s.explicit_threshold = Some(t);
    }
    s
}

struct Detected {
    loaded: Loaded,
    models: Vec<AuModel>,
    per_sequence: Vec<Vec<Detection>>,
}

fn run_detection(
    manifest_path: &Path,
    models_dir: &Path,
    only: Option<&str>,
    features: Option<PathBuf>,
    settings: &Settings,
) -> Result<Detected, CliError> {
    let only = only.map(parse_au_list).transpose()?;
    let manifest = Manifest::read(manifest_path)?;
    let (mut models, stored) = load_models(models_dir, only.as_deref())?;
    let s = inference_settings(stored, settings);
    if s.explicit_threshold.is_some() {
        models.iter_mut().for_each(|m| m.threshold = s.pipeline.threshold);
    }
    let loaded = load_features(&manifest, &s, &feature_dir(manifest_path, features))?;
    report_exclusions(&loaded);
    let per_sequence = neurofacs::pipeline::par_map(&loaded.features, |f| detect_aus(f, &models, &loaded.cfg))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Data(e.to_string()))?;
    Ok(Detected {
        loaded,
        models,
        per_sequence,
    })
}

const DETECTIONS_HEADER: &str = "id\tau\tgeometric\tappearance\tfused\tactive\n";

fn detections_tsv(ids: &[&str], per_sequence: &[Vec<Detection>]) -> String {
    let mut s = String::from(DETECTIONS_HEADER);
    for (id, ds) in ids.iter().zip(per_sequence) {
        for d in ds {
            let _ = writeln!(
                s,
                "{id}\t{}\t{}\t{}\t{}\t{}",
                d.au.0,
                d.geometric,
                d.appearance,
                d.fused_score,
                u8::from(d.active)
            );
        }
    }
    s
}

/// Per-sequence fused scores and active flags read back from detections.tsv.
pub type Predictions = BTreeMap<String, BTreeMap<AuCode, (f64, bool)>>;

pub fn read_predictions(path: &Path) -> Result<Predictions, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if format!("{h}\n") == DETECTIONS_HEADER => {}
        _ => return Err(io_err(path, "missing detections header")),
    }
    let mut out: Predictions = BTreeMap::new();
    for (n, line) in lines.filter(|(_, l)| !l.trim().is_empty()) {
        let bad = |m: &str| io_err(path, format!("line {}: {m}", n + 1));
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 6 {
            return Err(bad("expected 6 fields"));
        }
        let au = AuCode::parse(f[1]).map_err(|e| bad(&e.to_string()))?;
        let fused: f64 = f[4].parse().map_err(|_| bad("bad fused score"))?;
        let active = match f[5] {
            "1" => true,
            "0" => false,
            _ => return Err(bad("active must be 0 or 1")),
        };
        out.entry(f[0].to_string()).or_default().insert(au, (fused, active));
    }
    Ok(out)
}

pub fn detect(
    manifest_path: &Path,
    models_dir: &Path,
    only: Option<&str>,
    out: Option<&Path>,
    features: Option<PathBuf>,
    settings: &Settings,
) -> Result<Status, CliError> {
    let d = run_detection(manifest_path, models_dir, only, features, settings)?;
    if let Some(dir) = out {
        let ids: Vec<&str> = d.loaded.records.iter().map(|r| r.id.as_str()).collect();
        write_file(&dir.join("detections.tsv"), &detections_tsv(&ids, &d.per_sequence))?;
    }
    let mut stdout = std::io::stdout().lock();
    for (r, ds) in d.loaded.records.iter().zip(&d.per_sequence) {
        let scores: Vec<String> = ds
            .iter()
            .map(|x| format!("{}={:.3}+{:.3}", x.au, x.geometric, x.appearance))
            .collect();
        let active = neurofacs::pipeline::active_set(ds);
        if writeln!(stdout, "{}\t{}\tactive={}", r.id, scores.join(" "), combination_label(&active)).is_err() {
            break;
        }
    }
    Ok(Status::Ok)
}

/// One report per face region covered by `aus`. Truth and detections are
/// restricted to that region's AUs, and only sequences whose region tag
/// includes the region take part.
fn region_reports(
    records: &[Record],
    detected: &[BTreeSet<AuCode>],
    aus: &BTreeSet<AuCode>,
) -> Result<Vec<(Region, EvalReport)>, CliError> {
    let mut out = Vec::new();
    for region in [Region::Upper, Region::Lower] {
        let covered: BTreeSet<AuCode> = aus.iter().copied().filter(|a| a.region() == Some(region)).collect();
        if covered.is_empty() {
            continue;
        }
        let outcomes: Vec<_> = records
            .iter()
            .zip(detected)
            .filter(|(r, _)| r.region.covers(region))
            .map(|(r, d)| {
                (
                    r.aus.intersection(&covered).copied().collect(),
                    d.intersection(&covered).copied().collect(),
                )
            })
            .collect();
        if outcomes.is_empty() {
            continue;
        }
        out.push((region, tally(&outcomes).map_err(|e| CliError::Data(e.to_string()))?));
    }
    if out.is_empty() {
        return Err(CliError::Data("no test sequence covers the evaluated AUs".into()));
    }
    Ok(out)
}

pub fn eval(
    manifest_path: &Path,
    models_dir: Option<&Path>,
    predictions: Option<&Path>,
    only: Option<&str>,
    out: &Path,
    features: Option<PathBuf>,
    settings: &Settings,
) -> Result<Status, CliError> {
    let (records, detected, aus) = match (models_dir, predictions) {
        (Some(dir), _) => {
            let d = run_detection(manifest_path, dir, only, features, settings)?;
            let detected: Vec<BTreeSet<AuCode>> =
                d.per_sequence.iter().map(|ds| neurofacs::pipeline::active_set(ds)).collect();
            let aus = d.models.iter().map(|m| m.au).collect();
            (d.loaded.records, detected, aus)
        }
        (None, Some(p)) => {
            let only = only.map(parse_au_list).transpose()?;
            let manifest = Manifest::read(manifest_path)?;
            let preds = read_predictions(p)?;
            let mut aus: BTreeSet<AuCode> = preds.values().flat_map(|m| m.keys().copied()).collect();
            if let Some(o) = &only {
                aus.retain(|a| o.contains(a));
            }
            let mut records = Vec::new();
            let mut detected = Vec::new();
            for r in manifest.records {
                let Some(m) = preds.get(&r.id) else {
                    eprintln!("excluded {}: no prediction", r.id);
                    continue;
                };
                detected.push(m.iter().filter(|(_, v)| v.1).map(|(a, _)| *a).collect());
                records.push(r);
            }
            (records, detected, aus)
        }
        (None, None) => return Err(CliError::Usage("eval needs --models or --predictions".into())),
    };
    for (region, report) in region_reports(&records, &detected, &aus)? {
        let name = region.name();
        println!("{name} face\n{}", report.to_table());
        write_file(&out.join(format!("eval-{name}.txt")), &report.to_table())?;
        write_file(&out.join(format!("eval-{name}.csv")), &report.to_csv())?;
    }
    Ok(Status::Ok)
}

pub fn train_expr(
    manifest_path: &Path,
    detections: Option<&Path>,
    models_dir: Option<&Path>,
    out: &Path,
    features: Option<PathBuf>,
    settings: &Settings,
) -> Result<Status, CliError> {
    let preds: Predictions = match (detections, models_dir) {
        (Some(p), _) => read_predictions(p)?,
        (None, Some(dir)) => {
            let d = run_detection(manifest_path, dir, None, features, settings)?;
            d.loaded
                .records
                .iter()
                .zip(&d.per_sequence)
                .map(|(r, ds)| (r.id.clone(), ds.iter().map(|x| (x.au, (x.fused_score, x.active))).collect()))
                .collect()
        }
        (None, None) => return Err(CliError::Usage("train-expr needs --detections or --models".into())),
    };
    let manifest = Manifest::read(manifest_path)?;
    let mut records = Vec::new();
    let mut skipped = 0;
    for r in &manifest.records {
        match (r.expression, preds.get(&r.id)) {
            (Some(label), Some(m)) => {
                let values = m.iter().map(|(a, v)| (*a, v.0)).collect();
                records.push(IntensityRecord::new(values, label));
            }
            _ => skipped += 1,
        }
    }
    if records.is_empty() {
        return Err(CliError::Data("no sequence has both an expression label and detections".into()));
    }
    if skipped > 0 {
        eprintln!("{skipped} sequence(s) without expression label or detections were skipped");
    }
    let tree = train_tree(&records, &settings.tree).map_err(|e| CliError::Data(e.to_string()))?;
    let cm = confusion_matrix(&tree, &records).map_err(|e| CliError::Data(e.to_string()))?;
    let container = Container {
        config: settings.tree_snapshot(),
        payload: Payload::Tree(tree),
    };
    write_file(&out.join("expression.tree"), &write_container(&container))?;
    write_file(&out.join("confusion.txt"), &cm.to_table())?;
    println!("{}", cm.to_table());
    println!(
        "training accuracy {:.3}% on {} sequences",
        100.0 * cm.accuracy(),
        records.len()
    );
    Ok(Status::Ok)
}

pub fn export_rules(model: &Path, out: Option<&Path>) -> Result<Status, CliError> {
    let text = std::fs::read_to_string(model).map_err(|e| io_err(model, e))?;
    let c = read_container(&text).map_err(|e| io_err(model, e))?;
    let Payload::Tree(tree) = c.payload else {
        return Err(io_err(model, "not an expression tree"));
    };
    let rules = rules_text(&tree);
    match out {
        Some(p) => write_file(p, &rules)?,
        None => print!("{rules}"),
    }
    Ok(Status::Ok)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SynthScale {
    /// 60 training and 20 test sequences per AU
    Full,
    /// A few sequences per AU, for smoke tests
    Small,
}

fn write_sequences(root: &Path, seqs: &[LabeledSequence]) -> Result<Vec<Record>, CliError> {
    let mut records = Vec::with_capacity(seqs.len());
    for s in seqs {
        let dir = root.join("seq").join(&s.id);
        let mut frames = Vec::with_capacity(s.frames.len());
        for (i, f) in s.frames.iter().enumerate() {
            let path = dir.join(format!("f{i:03}.pgm"));
            let mut bytes = Vec::new();
            f.write_pgm(&mut bytes).map_err(|e| io_err(&path, e))?;
            write_atomic(&path, &bytes).map_err(|e| io_err(&path, e))?;
            frames.push(path);
        }
        let landmarks = dir.join("landmarks.txt");
        write_file(&landmarks, &s.first.to_text())?;
        records.push(Record {
            id: s.id.clone(),
            subject: s.subject.clone(),
            frames,
            landmarks,
            aus: s.au_set.clone(),
            expression: s.expression,
            region: RegionTag::Both,
        });
    }
    Ok(records)
}

pub fn synth(out: &Path, scale: SynthScale, expressions: usize, seed: Option<u64>) -> Result<Status, CliError> {
    let mut cfg = DatasetConfig::default();
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if scale == SynthScale::Small {
        cfg.train_subjects = 6;
        cfg.test_subjects = 2;
        cfg.train_singles = 6;
        cfg.test_singles = 2;
        cfg.train_pairs = 2;
        cfg.test_pairs = 1;
    }
    let (train, test) = generate_dataset(&cfg).map_err(|e| CliError::Usage(e.to_string()))?;
    for (name, seqs) in [("train", &train), ("test", &test)] {
        let records = write_sequences(out, seqs)?;
        write_file(&out.join(format!("{name}.tsv")), &manifest::render(&records, out))?;
        println!("{name}: {} sequences", records.len());
    }
    if expressions > 0 {
        let seqs = generate_expression_set(&cfg, expressions).map_err(|e| CliError::Usage(e.to_string()))?;
        let records = write_sequences(out, &seqs)?;
        write_file(&out.join("expr.tsv"), &manifest::render(&records, out))?;
        println!("expr: {} sequences", records.len());
    }
    Ok(Status::Ok)
}
