//! Content-addressed feature cache and the exclusion report.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use neurofacs::persist::{read_features, write_features};
use neurofacs::pipeline::{extract_features, par_map, LabeledSequence, PipelineConfig, SequenceFeatures};

use crate::config::Settings;
use crate::manifest::{Manifest, RawSequence, Record};
use crate::{write_atomic, CliError};

pub const EXCLUSIONS: &str = "exclusions.tsv";

/// Sequences that made it through loading, aligned with their features.
pub struct Loaded {
    pub cfg: PipelineConfig,
    pub records: Vec<Record>,
    /// Frames are dropped once features exist; labels and subjects remain.
    pub sequences: Vec<LabeledSequence>,
    pub features: Vec<SequenceFeatures>,
    pub hashes: Vec<String>,
    pub exclusions: Vec<(String, String)>,
    pub computed: usize,
    pub cached: usize,
}

pub fn content_hash(key: &str, raw: &RawSequence) -> String {
    let mut h = Sha256::new();
    h.update((key.len() as u64).to_le_bytes());
    h.update(key.as_bytes());
    h.update((raw.frames.len() as u64).to_le_bytes());
    for f in &raw.frames {
        h.update((f.len() as u64).to_le_bytes());
        h.update(f);
    }
    h.update((raw.landmarks.len() as u64).to_le_bytes());
    h.update(&raw.landmarks);
    format!("{:x}", h.finalize())
}

/// File name for a sequence id; ids with unusual characters get a hash suffix
/// so distinct ids never collide.
pub fn cache_file(dir: &Path, id: &str) -> PathBuf {
    let clean: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' })
        .collect();
    if clean == id && !id.starts_with('.') {
        dir.join(format!("{id}.features"))
    } else {
        let tag = format!("{:x}", Sha256::digest(id.as_bytes()));
        dir.join(format!("{clean}-{}.features", &tag[..12]))
    }
}

fn cached(path: &Path, hash: &str) -> Option<SequenceFeatures> {
    let text = std::fs::read_to_string(path).ok()?;
    match read_features(&text) {
        Ok((h, f)) if h == hash => Some(f),
        _ => None,
    }
}

enum Stage {
    Excluded(String),
    Decoded(Box<LabeledSequence>, RawSequence),
}

/// Read, hash and (re)extract every manifest sequence, reusing cache files
/// whose hash matches. Failures land in the exclusion report instead of
/// aborting the run.
pub fn load_features(manifest: &Manifest, settings: &Settings, dir: &Path) -> Result<Loaded, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))?;
    let stages = par_map(&manifest.records, |r| {
        match RawSequence::read(r).and_then(|raw| raw.decode(r).map(|s| (s, raw))) {
            Ok((s, raw)) => Stage::Decoded(Box::new(s), raw),
            Err(e) => Stage::Excluded(e),
        }
    });
    let size = stages.iter().find_map(|s| match s {
        Stage::Decoded(seq, _) => Some((seq.frames[0].width(), seq.frames[0].height())),
        Stage::Excluded(_) => None,
    });
    let Some((w, h)) = size else {
        return Err(CliError::Data("no readable sequence in the manifest".into()));
    };
    let cfg = settings.for_frames(w, h);
    let key = Settings::extraction_key(&cfg);
    let bank = cfg.bank().map_err(|e| CliError::Usage(format!("Gabor bank: {e}")))?;

    let jobs: Vec<(usize, Stage)> = stages.into_iter().enumerate().collect();
    let results = par_map(&jobs, |(i, stage)| -> Result<(SequenceFeatures, String, bool), String> {
        let (seq, raw) = match stage {
            Stage::Excluded(e) => return Err(e.clone()),
            Stage::Decoded(seq, raw) => (seq, raw),
        };
        if (seq.frames[0].width(), seq.frames[0].height()) != (w, h) {
            return Err(format!("frame size differs from the manifest's {w}x{h}"));
        }
        let hash = content_hash(&key, raw);
        let path = cache_file(dir, &manifest.records[*i].id);
        if let Some(f) = cached(&path, &hash) {
            return Ok((f, hash, true));
        }
        let f = extract_features(seq, &cfg, &bank).map_err(|e| e.to_string())?;
        write_atomic(&path, write_features(&f, &hash).as_bytes()).map_err(|e| e.to_string())?;
        Ok((f, hash, false))
    });

    let mut out = Loaded {
        cfg,
        records: Vec::new(),
        sequences: Vec::new(),
        features: Vec::new(),
        hashes: Vec::new(),
        exclusions: Vec::new(),
        computed: 0,
        cached: 0,
    };
    for ((_, stage), (r, res)) in jobs.into_iter().zip(manifest.records.iter().zip(results)) {
        match (stage, res) {
            (Stage::Decoded(mut seq, _), Ok((f, hash, hit))) => {
                if hit {
                    out.cached += 1;
                } else {
                    out.computed += 1;
                }
                seq.frames = Vec::new();
                out.records.push(r.clone());
                out.sequences.push(*seq);
                out.features.push(f);
                out.hashes.push(hash);
            }
            (_, Err(e)) => out.exclusions.push((r.id.clone(), e)),
            (Stage::Excluded(e), Ok(_)) => out.exclusions.push((r.id.clone(), e)),
        }
    }
    write_atomic(&dir.join(EXCLUSIONS), exclusion_report(&out.exclusions).as_bytes())
        .map_err(|e| CliError::Data(e.to_string()))?;
    Ok(out)
}

pub fn exclusion_report(rows: &[(String, String)]) -> String {
    let mut s = String::from("id\treason\n");
    for (id, why) in rows {
        let _ = writeln!(s, "{id}\t{}", why.replace(['\t', '\n'], " "));
    }
    s
}
