//! Versioned plain-text model container.
//!
//! Floats are written with 17 significant digits (`{:.16e}`), which
//! identifies every `f64` uniquely, so `write(read(text)) == text` for any
//! text produced by [`write_container`]. Every matrix carries its shape on a
//! header line followed by one line per row.
//!
//! ```text
//! neurofacs-container 1
//! kind au-model
//! config 1
//! cuts=5
//! au 12
//! threshold 1.0000000000000000e0
//! channel geometric
//! ...
//! end
//! ```

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::anfis::{GaussianMf, TsModel};
use crate::expression::{DecisionTree, Expression, Node, CLASSES};
use crate::pipeline::{AuCode, AuModel, ChannelModel, SequenceFeatures};
use crate::tracker::{Point2, PointGrid, TrackedSequence};
use crate::reduce::ProjectionBasis;
use crate::{Error, Result};

pub const MAGIC: &str = "neurofacs-container";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArtifactKind {
    AuModel,
    ExpressionTree,
    Bases,
}

impl ArtifactKind {
    pub fn tag(self) -> &'static str {
        match self {
            ArtifactKind::AuModel => "au-model",
            ArtifactKind::ExpressionTree => "expression-tree",
            ArtifactKind::Bases => "bases",
        }
    }

    fn parse(s: &str, line: usize) -> Result<ArtifactKind> {
        [ArtifactKind::AuModel, ArtifactKind::ExpressionTree, ArtifactKind::Bases]
            .into_iter()
            .find(|k| k.tag() == s)
            .ok_or_else(|| Error::parse(line, format!("unknown artifact kind `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum Payload {
    AuModel(AuModel),
    Tree(DecisionTree),
    Bases(Vec<(String, ProjectionBasis)>),
}

impl Payload {
    pub fn kind(&self) -> ArtifactKind {
        match self {
            Payload::AuModel(_) => ArtifactKind::AuModel,
            Payload::Tree(_) => ArtifactKind::ExpressionTree,
            Payload::Bases(_) => ArtifactKind::Bases,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    /// Configuration snapshot as `key=value` pairs, in the order given.
    pub config: Vec<(String, String)>,
    pub payload: Payload,
}

fn num(s: &mut String, v: f64) {
    let _ = write!(s, "{v:.16e}");
}

fn nums(s: &mut String, vals: impl IntoIterator<Item = f64>) {
    for (i, v) in vals.into_iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        num(s, v);
    }
    s.push('\n');
}

fn write_matrix(s: &mut String, name: &str, m: &DMatrix<f64>) {
    let _ = writeln!(s, "matrix {name} {} {}", m.nrows(), m.ncols());
    for r in 0..m.nrows() {
        nums(s, m.row(r).iter().copied());
    }
}

fn write_opt_matrix(s: &mut String, name: &str, m: &Option<DMatrix<f64>>) {
    match m {
        Some(m) => write_matrix(s, name, m),
        None => {
            let _ = writeln!(s, "none {name}");
        }
    }
}

fn write_basis(s: &mut String, b: &ProjectionBasis) {
    s.push_str("basis\n");
    write_matrix(s, "w", &b.w);
    let _ = write!(s, "vector eigenvalues {} ", b.eigenvalues.len());
    nums(s, b.eigenvalues.iter().copied());
    write_opt_matrix(s, "left", &b.left);
    write_opt_matrix(s, "right", &b.right);
    write_opt_matrix(s, "pca", &b.pca);
}

fn write_ts_model(s: &mut String, m: &TsModel) {
    let _ = write!(s, "tsmodel {} counts", m.k());
    for d in m.partition_counts() {
        let _ = write!(s, " {d}");
    }
    s.push('\n');
    for (j, &(a, b)) in m.input_ranges().iter().enumerate() {
        let _ = write!(s, "range {j} ");
        nums(s, [a, b]);
    }
    for (j, ms) in m.memberships().iter().enumerate() {
        for (i, mf) in ms.iter().enumerate() {
            let _ = write!(s, "mf {j} {i} ");
            nums(s, [mf.center, mf.sigma]);
        }
    }
    write_matrix(s, "consequents", m.consequents());
}

fn write_channel(s: &mut String, name: &str, c: &ChannelModel) {
    let _ = writeln!(s, "channel {name}");
    write_basis(s, &c.basis);
    write_ts_model(s, &c.model);
}

fn write_node(s: &mut String, n: &Node) {
    match n {
        Node::Split {
            au,
            threshold,
            left,
            right,
        } => {
            let _ = write!(s, "split {} ", au.0);
            nums(s, [*threshold]);
            write_node(s, left);
            write_node(s, right);
        }
        Node::Leaf { class, counts } => {
            let _ = write!(s, "leaf {} ", class.name());
            nums(s, counts.iter().copied());
        }
    }
}

pub fn write_container(c: &Container) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC} {FORMAT_VERSION}");
    let _ = writeln!(s, "kind {}", c.payload.kind().tag());
    let _ = writeln!(s, "config {}", c.config.len());
    for (k, v) in &c.config {
        let _ = writeln!(s, "{k}={v}");
    }
    match &c.payload {
        Payload::AuModel(m) => {
            let _ = writeln!(s, "au {}", m.au.0);
            s.push_str("threshold ");
            nums(&mut s, [m.threshold]);
            write_channel(&mut s, "geometric", &m.geometric);
            write_channel(&mut s, "appearance", &m.appearance);
        }
        Payload::Tree(t) => {
            let _ = writeln!(s, "tree {}", count_nodes(&t.root));
            write_node(&mut s, &t.root);
        }
        Payload::Bases(list) => {
            let _ = writeln!(s, "bases {}", list.len());
            for (name, b) in list {
                let _ = writeln!(s, "name {name}");
                write_basis(&mut s, b);
            }
        }
    }
    s.push_str("end\n");
    s
}

fn count_nodes(n: &Node) -> usize {
    match n {
        Node::Leaf { .. } => 1,
        Node::Split { left, right, .. } => 1 + count_nodes(left) + count_nodes(right),
    }
}

struct Reader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Reader<'a> {
    fn new(text: &'a str) -> Self {
        Reader {
            lines: text.lines().enumerate(),
            line: 0,
        }
    }

    fn raw(&mut self) -> Result<&'a str> {
        let (i, l) = self
            .lines
            .next()
            .ok_or_else(|| Error::parse(self.line + 1, "unexpected end of container"))?;
        self.line = i + 1;
        Ok(l)
    }

    fn tokens(&mut self) -> Result<Vec<&'a str>> {
        Ok(self.raw()?.split(' ').filter(|t| !t.is_empty()).collect())
    }

    /// Next line, which must start with `keyword`; returns the remaining tokens.
    fn expect(&mut self, keyword: &str) -> Result<Vec<&'a str>> {
        let t = self.tokens()?;
        if t.first() != Some(&keyword) {
            return Err(self.err(format!("expected `{keyword}`")));
        }
        Ok(t[1..].to_vec())
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(self.line, msg)
    }

    fn usize(&self, t: &str) -> Result<usize> {
        t.parse().map_err(|_| self.err(format!("bad count `{t}`")))
    }

    fn f64(&self, t: &str) -> Result<f64> {
        t.parse().map_err(|_| self.err(format!("bad number `{t}`")))
    }

    fn floats(&self, toks: &[&str], n: usize) -> Result<Vec<f64>> {
        if toks.len() != n {
            return Err(self.err(format!("expected {n} numbers, got {}", toks.len())));
        }
        toks.iter().map(|t| self.f64(t)).collect()
    }

    fn matrix_body(&mut self, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let t = self.tokens()?;
            data.extend(self.floats(&t, cols)?);
        }
        Ok(DMatrix::from_row_slice(rows, cols, &data))
    }

    fn matrix(&mut self, name: &str) -> Result<DMatrix<f64>> {
        let t = self.expect("matrix")?;
        if t.len() != 3 || t[0] != name {
            return Err(self.err(format!("expected matrix `{name}`")));
        }
        let (r, c) = (self.usize(t[1])?, self.usize(t[2])?);
        self.matrix_body(r, c)
    }

    fn opt_matrix(&mut self, name: &str) -> Result<Option<DMatrix<f64>>> {
        let t = self.tokens()?;
        match t.as_slice() {
            ["none", n] if *n == name => Ok(None),
            ["matrix", n, r, c] if *n == name => {
                let (r, c) = (self.usize(r)?, self.usize(c)?);
                Ok(Some(self.matrix_body(r, c)?))
            }
            _ => Err(self.err(format!("expected matrix or none for `{name}`"))),
        }
    }

    fn basis(&mut self) -> Result<ProjectionBasis> {
        self.expect("basis")?;
        let w = self.matrix("w")?;
        let t = self.expect("vector")?;
        if t.len() < 2 || t[0] != "eigenvalues" {
            return Err(self.err("expected eigenvalue vector"));
        }
        let n = self.usize(t[1])?;
        let eigenvalues = DVector::from_vec(self.floats(&t[2..], n)?);
        Ok(ProjectionBasis {
            w,
            eigenvalues,
            left: self.opt_matrix("left")?,
            right: self.opt_matrix("right")?,
            pca: self.opt_matrix("pca")?,
        })
    }

    fn ts_model(&mut self) -> Result<TsModel> {
        let t = self.expect("tsmodel")?;
        if t.len() < 2 || t[1] != "counts" {
            return Err(self.err("expected `tsmodel <k> counts ...`"));
        }
        let k = self.usize(t[0])?;
        if t.len() != 2 + k {
            return Err(self.err(format!("expected {k} partition counts")));
        }
        let counts = t[2..].iter().map(|c| self.usize(c)).collect::<Result<Vec<_>>>()?;
        let mut ranges = Vec::with_capacity(k);
        for j in 0..k {
            let t = self.expect("range")?;
            if t.len() != 3 || self.usize(t[0])? != j {
                return Err(self.err(format!("expected range {j}")));
            }
            let v = self.floats(&t[1..], 2)?;
            ranges.push((v[0], v[1]));
        }
        let mut mfs = Vec::with_capacity(k);
        for (j, &d) in counts.iter().enumerate() {
            let mut ms = Vec::with_capacity(d);
            for i in 0..d {
                let t = self.expect("mf")?;
                if t.len() != 4 || self.usize(t[0])? != j || self.usize(t[1])? != i {
                    return Err(self.err(format!("expected mf {j} {i}")));
                }
                let v = self.floats(&t[2..], 2)?;
                ms.push(GaussianMf {
                    center: v[0],
                    sigma: v[1],
                });
            }
            mfs.push(ms);
        }
        let consequents = self.matrix("consequents")?;
        TsModel::new(counts, mfs, consequents, ranges)
    }

    fn channel(&mut self, name: &str) -> Result<ChannelModel> {
        let t = self.expect("channel")?;
        if t != [name] {
            return Err(self.err(format!("expected channel {name}")));
        }
        Ok(ChannelModel {
            basis: self.basis()?,
            model: self.ts_model()?,
        })
    }

    fn node(&mut self, budget: &mut usize) -> Result<Node> {
        if *budget == 0 {
            return Err(self.err("more tree nodes than declared"));
        }
        *budget -= 1;
        let t = self.tokens()?;
        match t.as_slice() {
            ["split", au, th] => {
                let au = AuCode::parse(au)?;
                let threshold = self.f64(th)?;
                let left = Box::new(self.node(budget)?);
                let right = Box::new(self.node(budget)?);
                Ok(Node::Split {
                    au,
                    threshold,
                    left,
                    right,
                })
            }
            ["leaf", class, rest @ ..] => {
                let class = Expression::parse(class)?;
                let v = self.floats(rest, CLASSES)?;
                Ok(Node::Leaf {
                    class,
                    counts: std::array::from_fn(|i| v[i]),
                })
            }
            _ => Err(self.err("expected `split` or `leaf`")),
        }
    }
}

pub fn read_container(text: &str) -> Result<Container> {
    let mut r = Reader::new(text);
    let head = r.tokens()?;
    if head.len() != 2 || head[0] != MAGIC {
        return Err(r.err("not a model container"));
    }
    let version: u32 = head[1].parse().map_err(|_| r.err("bad version"))?;
    if version != FORMAT_VERSION {
        return Err(Error::Version(version));
    }
    let t = r.expect("kind")?;
    let kind = match t.as_slice() {
        [k] => ArtifactKind::parse(k, r.line)?,
        _ => return Err(r.err("expected `kind <tag>`")),
    };
    let t = r.expect("config")?;
    let n = match t.as_slice() {
        [n] => r.usize(n)?,
        _ => return Err(r.err("expected `config <count>`")),
    };
    let mut config = Vec::with_capacity(n);
    for _ in 0..n {
        let l = r.raw()?;
        let (k, v) = l.split_once('=').ok_or_else(|| r.err("expected key=value"))?;
        config.push((k.to_string(), v.to_string()));
    }
    let payload = match kind {
        ArtifactKind::AuModel => {
            let t = r.expect("au")?;
            let au = match t.as_slice() {
                [a] => AuCode::parse(a)?,
                _ => return Err(r.err("expected `au <code>`")),
            };
            let t = r.expect("threshold")?;
            let threshold = r.floats(&t, 1)?[0];
            Payload::AuModel(AuModel {
                au,
                geometric: r.channel("geometric")?,
                appearance: r.channel("appearance")?,
                threshold,
            })
        }
        ArtifactKind::ExpressionTree => {
            let t = r.expect("tree")?;
            let mut budget = match t.as_slice() {
                [n] => r.usize(n)?,
                _ => return Err(r.err("expected `tree <nodes>`")),
            };
            let root = r.node(&mut budget)?;
            if budget != 0 {
                return Err(r.err("fewer tree nodes than declared"));
            }
            Payload::Tree(DecisionTree { root })
        }
        ArtifactKind::Bases => {
            let t = r.expect("bases")?;
            let n = match t.as_slice() {
                [n] => r.usize(n)?,
                _ => return Err(r.err("expected `bases <count>`")),
            };
            let mut list = Vec::with_capacity(n);
            for _ in 0..n {
                let t = r.expect("name")?;
                let name = t.join(" ");
                list.push((name, r.basis()?));
            }
            Payload::Bases(list)
        }
    };
    if r.tokens()? != ["end"] {
        return Err(r.err("expected `end`"));
    }
    if r.lines.next().is_some() {
        return Err(r.err("trailing content after `end`"));
    }
    Ok(Container { config, payload })
}

pub const FEATURES_MAGIC: &str = "neurofacs-features";

/// Cached features of one sequence, tagged with the hash of the inputs that
/// produced them.
pub fn write_features(feat: &SequenceFeatures, hash: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{FEATURES_MAGIC} {FORMAT_VERSION}");
    let _ = writeln!(s, "hash {hash}");
    let _ = writeln!(s, "frames {}", feat.frames());
    for (g, lost) in feat.tracked.grids.iter().zip(&feat.tracked.lost) {
        let _ = writeln!(s, "grid {}", g.points().len());
        for (p, &l) in g.points().iter().zip(lost) {
            num(&mut s, p.x);
            s.push(' ');
            num(&mut s, p.y);
            s.push_str(if l { " 1\n" } else { " 0\n" });
        }
    }
    write_matrix(&mut s, "upper", &feat.upper);
    write_matrix(&mut s, "lower", &feat.lower);
    s.push_str("end\n");
    s
}

/// Inverse of [`write_features`]; returns the stored hash with the features.
pub fn read_features(text: &str) -> Result<(String, SequenceFeatures)> {
    let mut r = Reader::new(text);
    let head = r.tokens()?;
    if head.len() != 2 || head[0] != FEATURES_MAGIC {
        return Err(r.err("not a feature file"));
    }
    let version: u32 = head[1].parse().map_err(|_| r.err("bad version"))?;
    if version != FORMAT_VERSION {
        return Err(Error::Version(version));
    }
    let hash = match r.expect("hash")?.as_slice() {
        [h] => h.to_string(),
        _ => return Err(r.err("expected `hash <hex>`")),
    };
    let frames = match r.expect("frames")?.as_slice() {
        [n] => r.usize(n)?,
        _ => return Err(r.err("expected `frames <count>`")),
    };
    let mut grids = Vec::with_capacity(frames);
    let mut lost = Vec::with_capacity(frames);
    for _ in 0..frames {
        let n = match r.expect("grid")?.as_slice() {
            [n] => r.usize(n)?,
            _ => return Err(r.err("expected `grid <points>`")),
        };
        let mut points = Vec::with_capacity(n);
        let mut flags = Vec::with_capacity(n);
        for _ in 0..n {
            let t = r.tokens()?;
            if t.len() != 3 {
                return Err(r.err("expected `x y lost`"));
            }
            let v = r.floats(&t[..2], 2)?;
            points.push(Point2::new(v[0], v[1]));
            flags.push(match t[2] {
                "0" => false,
                "1" => true,
                _ => return Err(r.err("lost flag must be 0 or 1")),
            });
        }
        grids.push(PointGrid::new(points)?);
        lost.push(flags);
    }
    if frames == 0 {
        return Err(r.err("feature file without frames"));
    }
    let upper = r.matrix("upper")?;
    let lower = r.matrix("lower")?;
    if upper.ncols() != frames || lower.ncols() != frames {
        return Err(r.err("appearance columns do not match the frame count"));
    }
    if r.tokens()? != ["end"] {
        return Err(r.err("expected `end`"));
    }
    if r.lines.next().is_some() {
        return Err(r.err("trailing content after `end`"));
    }
    let feat = SequenceFeatures {
        tracked: TrackedSequence { grids, lost },
        upper,
        lower,
    };
    Ok((hash, feat))
}
