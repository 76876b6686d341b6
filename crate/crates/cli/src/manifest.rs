//! Tab-separated dataset manifest.
//!
//! ```text
//! id     subject  frames                       landmarks        aus  expression  region
//! s01-a  s01      s01-a/f00.pgm,s01-a/f01.pgm  s01-a/first.txt  1+4  gloomy      upper
//! ```
//!
//! Columns are separated by single tabs. `aus` is `+`-separated (or `none`),
//! `expression` and `region` are optional columns where `-` means unset. Paths are relative to the manifest file.

use std::collections::{BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use neurofacs::expression::Expression;
use neurofacs::image::GrayImage;
use neurofacs::pipeline::{AuCode, LabeledSequence, Region};
use neurofacs::tracker::PointGrid;

use crate::CliError;

pub const COLUMNS: [&str; 7] = ["id", "subject", "frames", "landmarks", "aus", "expression", "region"];
const REQUIRED: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionTag {
    Upper,
    Lower,
    Both,
}

impl RegionTag {
    pub fn covers(self, r: Region) -> bool {
        matches!(
            (self, r),
            (RegionTag::Both, _) | (RegionTag::Upper, Region::Upper) | (RegionTag::Lower, Region::Lower)
        )
    }

    fn name(self) -> &'static str {
        match self {
            RegionTag::Upper => "upper",
            RegionTag::Lower => "lower",
            RegionTag::Both => "both",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub id: String,
    pub subject: String,
    pub frames: Vec<PathBuf>,
    pub landmarks: PathBuf,
    pub aus: BTreeSet<AuCode>,
    pub expression: Option<Expression>,
    pub region: RegionTag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    /// Directory that relative paths are resolved against.
    pub root: PathBuf,
    pub records: Vec<Record>,
}

fn data_err(path: &Path, line: usize, msg: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}:{line}: {msg}", path.display()))
}

pub fn parse_aus(s: &str) -> Result<BTreeSet<AuCode>, String> {
    let s = s.trim();
    if s.is_empty() || s == "none" || s == "-" {
        return Ok(BTreeSet::new());
    }
    s.split('+').map(|a| AuCode::parse(a).map_err(|e| e.to_string())).collect()
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Manifest, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("cannot read manifest {}: {e}", path.display())))?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Manifest::parse(&text, root, path)
    }

    pub fn parse(text: &str, root: PathBuf, path: &Path) -> Result<Manifest, CliError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
        let (_, header) = lines.next().ok_or_else(|| data_err(path, 1, "empty manifest"))?;
        let cols: Vec<&str> = header.split('\t').map(str::trim).collect();
        let mut pos = [usize::MAX; 7];
        for (c, name) in cols.iter().enumerate() {
            let k = COLUMNS
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| data_err(path, 1, format!("unknown column `{name}`")))?;
            if pos[k] != usize::MAX {
                return Err(data_err(path, 1, format!("duplicate column `{name}`")));
            }
            pos[k] = c;
        }
        if let Some(k) = (0..REQUIRED).find(|&k| pos[k] == usize::MAX) {
            return Err(data_err(path, 1, format!("missing column `{}`", COLUMNS[k])));
        }
        let mut records = Vec::new();
        let mut ids = HashSet::new();
        for (n, line) in lines {
            let line_no = n + 1;
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != cols.len() {
                return Err(data_err(path, line_no, format!("expected {} fields, got {}", cols.len(), fields.len())));
            }
            let get = |k: usize| -> Option<&str> {
                (pos[k] != usize::MAX).then(|| fields[pos[k]].trim()).filter(|v| !v.is_empty() && *v != "-")
            };
            let id = get(0).ok_or_else(|| data_err(path, line_no, "empty id"))?.to_string();
            if !ids.insert(id.clone()) {
                return Err(data_err(path, line_no, format!("duplicate id `{id}`")));
            }
            let subject = get(1).ok_or_else(|| data_err(path, line_no, "empty subject"))?.to_string();
            let frames: Vec<PathBuf> = get(2)
                .ok_or_else(|| data_err(path, line_no, "no frames"))?
                .split(',')
                .map(|f| root.join(f.trim()))
                .collect();
            let landmarks = root.join(get(3).ok_or_else(|| data_err(path, line_no, "no landmark file"))?);
            let aus = parse_aus(get(4).unwrap_or("none")).map_err(|e| data_err(path, line_no, e))?;
            let expression = get(5)
                .map(Expression::parse)
                .transpose()
                .map_err(|e| data_err(path, line_no, e))?;
            let region = match get(6) {
                None | Some("both") => RegionTag::Both,
                Some("upper") => RegionTag::Upper,
                Some("lower") => RegionTag::Lower,
                Some(other) => return Err(data_err(path, line_no, format!("bad region `{other}`"))),
            };
            if let Some(a) = aus.iter().find(|a| !a.region().is_some_and(|r| region.covers(r))) {
                return Err(data_err(path, line_no, format!("{a} lies outside region {}", region.name())));
            }
            records.push(Record {
                id,
                subject,
                frames,
                landmarks,
                aus,
                expression,
                region,
            });
        }
        Ok(Manifest { root, records })
    }
}

/// Manifest text for records whose paths are already relative to `root`.
pub fn render(records: &[Record], root: &Path) -> String {
    let rel = |p: &Path| p.strip_prefix(root).unwrap_or(p).to_string_lossy().into_owned();
    let mut s = COLUMNS.join("\t");
    s.push('\n');
    for r in records {
        let frames: Vec<String> = r.frames.iter().map(|f| rel(f)).collect();
        let aus = if r.aus.is_empty() {
            "none".to_string()
        } else {
            r.aus.iter().map(|a| a.0.to_string()).collect::<Vec<_>>().join("+")
        };
        let fields = [
            r.id.clone(),
            r.subject.clone(),
            frames.join(","),
            rel(&r.landmarks),
            aus,
            r.expression.map_or("-".into(), |e| e.name().to_string()),
            r.region.name().to_string(),
        ];
        s.push_str(&fields.join("\t"));
        s.push('\n');
    }
    s
}

/// Raw bytes of a record's files, read once so they can be hashed and decoded.
pub struct RawSequence {
    pub frames: Vec<Vec<u8>>,
    pub landmarks: Vec<u8>,
}

impl RawSequence {
    pub fn read(r: &Record) -> Result<RawSequence, String> {
        let read = |p: &Path| std::fs::read(p).map_err(|e| format!("{}: {e}", p.display()));
        Ok(RawSequence {
            frames: r.frames.iter().map(|p| read(p)).collect::<Result<_, _>>()?,
            landmarks: read(&r.landmarks)?,
        })
    }

    /// Decode into a pipeline sequence; every frame must match the size of the first.
    pub fn decode(&self, r: &Record) -> Result<LabeledSequence, String> {
        let mut frames = Vec::with_capacity(self.frames.len());
        for (bytes, path) in self.frames.iter().zip(&r.frames) {
            let img = GrayImage::read_pgm(bytes.as_slice()).map_err(|e| format!("{}: {e}", path.display()))?;
            if let Some(first) = frames.first() {
                let first: &GrayImage = first;
                if (img.width(), img.height()) != (first.width(), first.height()) {
                    return Err(format!("{}: frame size differs within the sequence", path.display()));
                }
            }
            frames.push(img);
        }
        if frames.len() < 2 {
            return Err("a sequence needs at least two frames".into());
        }
        let text = String::from_utf8(self.landmarks.clone())
            .map_err(|_| format!("{}: not UTF-8", r.landmarks.display()))?;
        let first = PointGrid::parse(&text).map_err(|e| format!("{}: {e}", r.landmarks.display()))?;
        Ok(LabeledSequence {
            id: r.id.clone(),
            subject: r.subject.clone(),
            frames,
            first,
            au_set: r.aus.clone(),
            expression: r.expression,
        })
    }
}
