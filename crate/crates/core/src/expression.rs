//! Expression classification from AU intensities with a C4.5-style tree.
//!
//! Splits are binary on continuous attributes at midpoints between sorted
//! distinct values. Each attribute's threshold maximises information gain and
//! attributes compete on gain ratio (among those with at least average gain).
//! Error-based pruning replaces a subtree by a leaf when the leaf's pessimistic
//! error estimate is no worse. Cases exactly at a threshold go left (`≤`).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::pipeline::AuCode;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Expression {
    Surprise,
    Gloomy,
    Fear,
    Happy,
    Angry,
    Disgust,
}

pub const CLASSES: usize = 6;

impl Expression {
    /// Class order used for tie-breaking and matrix layout.
    pub const ALL: [Expression; CLASSES] = [
        Expression::Surprise,
        Expression::Gloomy,
        Expression::Fear,
        Expression::Happy,
        Expression::Angry,
        Expression::Disgust,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Expression::Surprise => "surprise",
            Expression::Gloomy => "gloomy",
            Expression::Fear => "fear",
            Expression::Happy => "happy",
            Expression::Angry => "angry",
            Expression::Disgust => "disgust",
        }
    }

    pub fn parse(s: &str) -> Result<Expression> {
        Expression::ALL
            .into_iter()
            .find(|e| e.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown expression `{s}`")))
    }
}

impl std::fmt::Display for Expression {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Upper limit of fused intensities (two channels each nominally in [0, 1]).
pub const MAX_INTENSITY: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct IntensityRecord {
    pub au_intensities: BTreeMap<AuCode, f64>,
    pub label: Expression,
}

impl IntensityRecord {
    /// Intensities are clamped to `[0, MAX_INTENSITY]`.
    pub fn new(au_intensities: BTreeMap<AuCode, f64>, label: Expression) -> IntensityRecord {
        let au_intensities = au_intensities
            .into_iter()
            .map(|(k, v)| (k, v.clamp(0.0, MAX_INTENSITY)))
            .collect();
        IntensityRecord { au_intensities, label }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split {
        au: AuCode,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
    Leaf {
        class: Expression,
        /// Training weight per class, in `Expression::ALL` order.
        counts: [f64; CLASSES],
    },
}

impl Node {
    pub fn leaf_count(&self) -> usize {
        match self {
            Node::Leaf { .. } => 1,
            Node::Split { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    fn total_counts(&self) -> [f64; CLASSES] {
        match self {
            Node::Leaf { counts, .. } => *counts,
            Node::Split { left, right, .. } => {
                let (a, b) = (left.total_counts(), right.total_counts());
                std::array::from_fn(|i| a[i] + b[i])
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    pub root: Node,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeConfig {
    /// Minimum weight on at least two branches of a split.
    pub min_leaf: f64,
    /// Pruning confidence; `None` keeps the fully grown tree.
    pub confidence: Option<f64>,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            min_leaf: 2.0,
            confidence: Some(0.25),
        }
    }
}

struct Case {
    values: Vec<f64>,
    class: usize,
    weight: f64,
}

fn entropy(counts: &[f64; CLASSES]) -> f64 {
    let total: f64 = counts.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    counts
        .iter()
        .filter(|&&c| c > 0.0)
        .map(|&c| {
            let p = c / total;
            -p * p.log2()
        })
        .sum()
}

fn class_counts(cases: &[&Case]) -> [f64; CLASSES] {
    let mut c = [0.0; CLASSES];
    for case in cases {
        c[case.class] += case.weight;
    }
    c
}

/// Majority class by weight; ties go to the earlier class in `Expression::ALL`.
fn majority(counts: &[f64; CLASSES]) -> Expression {
    let mut best = 0;
    for i in 1..CLASSES {
        if counts[i] > counts[best] {
            best = i;
        }
    }
    Expression::ALL[best]
}

struct SplitChoice {
    attr: usize,
    threshold: f64,
    gain: f64,
    ratio: f64,
}

/// Best gain threshold of one attribute, with its gain and split information.
fn best_threshold(cases: &[&Case], attr: usize, min_leaf: f64, base_entropy: f64) -> Option<(f64, f64, f64)> {
    let mut sorted: Vec<&Case> = cases.to_vec();
    sorted.sort_by(|a, b| a.values[attr].total_cmp(&b.values[attr]));
    let total: f64 = sorted.iter().map(|c| c.weight).sum();
    let all = class_counts(&sorted);
    let mut left = [0.0; CLASSES];
    let mut left_w = 0.0;
    let mut best: Option<(f64, f64, f64)> = None;
    for i in 0..sorted.len() - 1 {
        left[sorted[i].class] += sorted[i].weight;
        left_w += sorted[i].weight;
        let (a, b) = (sorted[i].values[attr], sorted[i + 1].values[attr]);
        if a == b {
            continue;
        }
        let right_w = total - left_w;
        if left_w < min_leaf || right_w < min_leaf {
            continue;
        }
        let right: [f64; CLASSES] = std::array::from_fn(|k| all[k] - left[k]);
        let pl = left_w / total;
        let pr = right_w / total;
        let gain = base_entropy - pl * entropy(&left) - pr * entropy(&right);
        let split_info = -pl * pl.log2() - pr * pr.log2();
        if best.is_none_or(|(_, g, _)| gain > g + 1e-12) {
            best = Some((a + (b - a) / 2.0, gain, split_info));
        }
    }
    best
}

fn choose_split(cases: &[&Case], n_attrs: usize, min_leaf: f64) -> Option<SplitChoice> {
    let counts = class_counts(cases);
    let base = entropy(&counts);
    let options: Vec<(usize, f64, f64, f64)> = (0..n_attrs)
        .filter_map(|a| best_threshold(cases, a, min_leaf, base).map(|(t, g, si)| (a, t, g, si)))
        .filter(|&(_, _, g, si)| g > 1e-12 && si > 1e-12)
        .collect();
    if options.is_empty() {
        return None;
    }
    let mean_gain = options.iter().map(|o| o.2).sum::<f64>() / options.len() as f64;
    let mut best: Option<SplitChoice> = None;
    for &(attr, threshold, gain, si) in &options {
        if gain < mean_gain - 1e-12 {
            continue;
        }
        let ratio = gain / si;
        if best.as_ref().is_none_or(|b| ratio > b.ratio + 1e-12) {
            best = Some(SplitChoice {
                attr,
                threshold,
                gain,
                ratio,
            });
        }
    }
    best
}

fn grow(cases: &[&Case], attrs: &[AuCode], min_leaf: f64) -> Node {
    let counts = class_counts(cases);
    let total: f64 = counts.iter().sum();
    let pure = counts.iter().filter(|&&c| c > 0.0).count() <= 1;
    let split = if pure || total < 2.0 * min_leaf {
        None
    } else {
        choose_split(cases, attrs.len(), min_leaf)
    };
    match split {
        None => Node::Leaf {
            class: majority(&counts),
            counts,
        },
        Some(s) => {
            debug_assert!(s.gain > 0.0);
            let (l, r): (Vec<&Case>, Vec<&Case>) = cases.iter().partition(|c| c.values[s.attr] <= s.threshold);
            Node::Split {
                au: attrs[s.attr],
                threshold: s.threshold,
                left: Box::new(grow(&l, attrs, min_leaf)),
                right: Box::new(grow(&r, attrs, min_leaf)),
            }
        }
    }
}

/// Pessimistic extra errors for `e` observed errors among `n` cases at
/// confidence `cf` (upper binomial limit, normal approximation with the
/// small-count corrections used by C4.5).
pub fn added_errors(n: f64, e: f64, cf: f64) -> f64 {
    const VAL: [f64; 9] = [0.0, 0.001, 0.005, 0.01, 0.05, 0.10, 0.20, 0.40, 1.00];
    const DEV: [f64; 9] = [4.0, 3.09, 2.58, 2.33, 1.65, 1.28, 0.84, 0.25, 0.00];
    let mut i = 1;
    while i < VAL.len() - 1 && cf > VAL[i] {
        i += 1;
    }
    let z = DEV[i - 1] + (DEV[i] - DEV[i - 1]) * (cf - VAL[i - 1]) / (VAL[i] - VAL[i - 1]);
    let coeff = z * z;
    if n <= 0.0 {
        return 0.0;
    }
    if e < 1e-6 {
        n * (1.0 - (cf.ln() / n).exp())
    } else if e < 0.9999 {
        let v0 = n * (1.0 - (cf.ln() / n).exp());
        v0 + e * (added_errors(n, 1.0, cf) - v0)
    } else if e + 0.5 >= n {
        0.67 * (n - e)
    } else {
        let pr = (e + 0.5 + coeff / 2.0 + (coeff * ((e + 0.5) * (1.0 - (e + 0.5) / n) + coeff / 4.0)).sqrt()) / (n + coeff);
        n * pr - e
    }
}

fn leaf_errors(counts: &[f64; CLASSES]) -> (f64, f64) {
    let n: f64 = counts.iter().sum();
    let e = n - counts[majority(counts).index()];
    (n, e)
}

/// Bottom-up subtree replacement; returns the pruned node and its estimated errors.
fn prune(node: Node, cf: f64) -> (Node, f64) {
    match node {
        Node::Leaf { class, counts } => {
            let (n, e) = leaf_errors(&counts);
            (Node::Leaf { class, counts }, e + added_errors(n, e, cf))
        }
        Node::Split {
            au,
            threshold,
            left,
            right,
        } => {
            let (l, el) = prune(*left, cf);
            let (r, er) = prune(*right, cf);
            let subtree = el + er;
            let counts = {
                let (a, b) = (l.total_counts(), r.total_counts());
                std::array::from_fn(|i| a[i] + b[i])
            };
            let (n, e) = leaf_errors(&counts);
            let as_leaf = e + added_errors(n, e, cf);
            if as_leaf <= subtree + 0.1 {
                (
                    Node::Leaf {
                        class: majority(&counts),
                        counts,
                    },
                    as_leaf,
                )
            } else {
                (
                    Node::Split {
                        au,
                        threshold,
                        left: Box::new(l),
                        right: Box::new(r),
                    },
                    subtree,
                )
            }
        }
    }
}

/// Attributes (AU codes) present in every record, in code order.
fn attributes(records: &[(IntensityRecord, f64)]) -> Result<Vec<AuCode>> {
    let all: BTreeSet<AuCode> = records.iter().flat_map(|(r, _)| r.au_intensities.keys().copied()).collect();
    for (r, _) in records {
        if let Some(missing) = all.iter().find(|a| !r.au_intensities.contains_key(a)) {
            return Err(Error::MissingAttribute(missing.0));
        }
    }
    Ok(all.into_iter().collect())
}

/// Induce a tree from weighted records.
pub fn train_tree_weighted(records: &[(IntensityRecord, f64)], cfg: &TreeConfig) -> Result<DecisionTree> {
    if records.is_empty() {
        return Err(Error::Empty("records"));
    }
    if records.iter().any(|(_, w)| !(*w > 0.0)) {
        return Err(Error::InvalidParameter("record weights must be positive".into()));
    }
    let attrs = attributes(records)?;
    let cases: Vec<Case> = records
        .iter()
        .map(|(r, w)| Case {
            values: attrs.iter().map(|a| r.au_intensities[a]).collect(),
            class: r.label.index(),
            weight: *w,
        })
        .collect();
    let refs: Vec<&Case> = cases.iter().collect();
    let mut root = grow(&refs, &attrs, cfg.min_leaf);
    if let Some(cf) = cfg.confidence {
        if !(cf > 0.0 && cf < 1.0) {
            return Err(Error::InvalidParameter(format!("confidence must be in (0, 1), got {cf}")));
        }
        root = prune(root, cf).0;
    }
    Ok(DecisionTree { root })
}

pub fn train_tree(records: &[IntensityRecord], cfg: &TreeConfig) -> Result<DecisionTree> {
    let weighted: Vec<(IntensityRecord, f64)> = records.iter().map(|r| (r.clone(), 1.0)).collect();
    train_tree_weighted(&weighted, cfg)
}

pub fn classify(tree: &DecisionTree, intensities: &BTreeMap<AuCode, f64>) -> Result<Expression> {
    let mut node = &tree.root;
    loop {
        match node {
            Node::Leaf { class, .. } => return Ok(*class),
            Node::Split {
                au,
                threshold,
                left,
                right,
            } => {
                let v = *intensities.get(au).ok_or(Error::MissingAttribute(au.0))?;
                node = if v <= *threshold { left } else { right };
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Le,
    Gt,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub conditions: Vec<(AuCode, Cmp, f64)>,
    pub class: Expression,
    pub support: f64,
    pub errors: f64,
}

impl Rule {
    pub fn matches(&self, intensities: &BTreeMap<AuCode, f64>) -> Result<bool> {
        for &(au, cmp, t) in &self.conditions {
            let v = *intensities.get(&au).ok_or(Error::MissingAttribute(au.0))?;
            let ok = match cmp {
                Cmp::Le => v <= t,
                Cmp::Gt => v > t,
            };
            if !ok {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// One rule per leaf, in left-to-right leaf order.
pub fn tree_rules(tree: &DecisionTree) -> Vec<Rule> {
    fn walk(node: &Node, path: &mut Vec<(AuCode, Cmp, f64)>, out: &mut Vec<Rule>) {
        match node {
            Node::Leaf { class, counts } => {
                let support: f64 = counts.iter().sum();
                out.push(Rule {
                    conditions: path.clone(),
                    class: *class,
                    support,
                    errors: support - counts[class.index()],
                });
            }
            Node::Split {
                au,
                threshold,
                left,
                right,
            } => {
                path.push((*au, Cmp::Le, *threshold));
                walk(left, path, out);
                path.pop();
                path.push((*au, Cmp::Gt, *threshold));
                walk(right, path, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    walk(&tree.root, &mut Vec::new(), &mut out);
    out
}

/// Human-readable rules, e.g. `if AU27 > 0.5 and AU12 <= 0.3 then surprise (support 40, errors 0)`.
/// Thresholds are printed in shortest round-trip form so the text is exact.
pub fn export_rules(tree: &DecisionTree) -> String {
    let mut s = String::new();
    for rule in tree_rules(tree) {
        if rule.conditions.is_empty() {
            s.push_str("always");
        } else {
            s.push_str("if ");
            for (i, (au, cmp, t)) in rule.conditions.iter().enumerate() {
                if i > 0 {
                    s.push_str(" and ");
                }
                let op = match cmp {
                    Cmp::Le => "<=",
                    Cmp::Gt => ">",
                };
                let _ = write!(s, "AU{} {op} {t:?}", au.0);
            }
        }
        let _ = writeln!(s, " then {} (support {}, errors {})", rule.class, rule.support, rule.errors);
    }
    s
}

fn parse_number(tok: &str, line: usize) -> Result<f64> {
    tok.trim_end_matches([',', ')'])
        .parse()
        .map_err(|_| Error::parse(line, format!("bad number `{tok}`")))
}

/// Parse text produced by [`export_rules`].
pub fn parse_rules(text: &str) -> Result<Vec<Rule>> {
    let mut rules = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let ln = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (cond, rest) = line
            .split_once(" then ")
            .ok_or_else(|| Error::parse(ln, "missing `then`"))?;
        let mut conditions = Vec::new();
        if cond != "always" {
            let body = cond.strip_prefix("if ").ok_or_else(|| Error::parse(ln, "rule must start with `if`"))?;
            for part in body.split(" and ") {
                let toks: Vec<&str> = part.split_whitespace().collect();
                if toks.len() != 3 {
                    return Err(Error::parse(ln, format!("bad condition `{part}`")));
                }
                let au = AuCode::parse(toks[0])?;
                let cmp = match toks[1] {
                    "<=" => Cmp::Le,
                    ">" => Cmp::Gt,
                    other => return Err(Error::parse(ln, format!("bad operator `{other}`"))),
                };
                conditions.push((au, cmp, parse_number(toks[2], ln)?));
            }
        }
        let toks: Vec<&str> = rest.split_whitespace().collect();
        if toks.len() != 5 || toks[1] != "(support" || toks[3] != "errors" {
            return Err(Error::parse(ln, "bad rule tail"));
        }
        rules.push(Rule {
            conditions,
            class: Expression::parse(toks[0])?,
            support: parse_number(toks[2], ln)?,
            errors: parse_number(toks[4], ln)?,
        });
    }
    Ok(rules)
}

/// Class of the first matching rule.
pub fn apply_rules(rules: &[Rule], intensities: &BTreeMap<AuCode, f64>) -> Result<Expression> {
    for r in rules {
        if r.matches(intensities)? {
            return Ok(r.class);
        }
    }
    Err(Error::InvalidParameter("no rule matches".into()))
}

/// Rows are true classes, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: [[u64; CLASSES]; CLASSES],
}

impl ConfusionMatrix {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Expression, Expression)>) -> Result<ConfusionMatrix> {
        let mut counts = [[0u64; CLASSES]; CLASSES];
        for (truth, pred) in pairs {
            counts[truth.index()][pred.index()] += 1;
        }
        let m = ConfusionMatrix { counts };
        if m.total() == 0 {
            return Err(Error::Empty("records"));
        }
        Ok(m)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..CLASSES).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.correct() as f64 / self.total() as f64
    }

    pub fn row_total(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }

    pub fn col_total(&self, c: usize) -> u64 {
        (0..CLASSES).map(|r| self.counts[r][c]).sum()
    }

    /// Recall of class `c`; 0 when the class never occurs.
    pub fn tp_rate(&self, c: usize) -> f64 {
        ratio(self.counts[c][c], self.row_total(c))
    }

    /// Fraction of other-class records predicted as `c`.
    pub fn fp_rate(&self, c: usize) -> f64 {
        let fp = self.col_total(c) - self.counts[c][c];
        ratio(fp, self.total() - self.row_total(c))
    }

    pub fn precision(&self, c: usize) -> f64 {
        ratio(self.counts[c][c], self.col_total(c))
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = write!(s, "{:>10}", "");
        for e in Expression::ALL {
            let _ = write!(s, "{:>10}", e.name());
        }
        let _ = writeln!(s, "{:>9}{:>9}{:>10}", "TP rate", "FP rate", "precision");
        for (i, e) in Expression::ALL.into_iter().enumerate() {
            let _ = write!(s, "{:>10}", e.name());
            for c in 0..CLASSES {
                let _ = write!(s, "{:>10}", self.counts[i][c]);
            }
            let _ = writeln!(s, "{:>9.3}{:>9.3}{:>10.3}", self.tp_rate(i), self.fp_rate(i), self.precision(i));
        }
        let _ = writeln!(
            s,
            "correctly classified {} of {} ({:.3}%)",
            self.correct(),
            self.total(),
            100.0 * self.accuracy()
        );
        s
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn confusion_matrix(tree: &DecisionTree, records: &[IntensityRecord]) -> Result<ConfusionMatrix> {
    if records.is_empty() {
        return Err(Error::Empty("records"));
    }
    let pairs = records
        .iter()
        .map(|r| Ok((r.label, classify(tree, &r.au_intensities)?)))
        .collect::<Result<Vec<_>>>()?;
    ConfusionMatrix::from_pairs(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rec(vals: &[(u16, f64)], label: Expression) -> IntensityRecord {
        IntensityRecord::new(vals.iter().map(|&(a, v)| (AuCode(a), v)).collect(), label)
    }

    #[test]
    fn single_class_is_one_leaf() {
        let recs: Vec<_> = (0..5).map(|i| rec(&[(1, i as f64 * 0.1)], Expression::Happy)).collect();
        let t = train_tree(&recs, &TreeConfig::default()).unwrap();
        assert_eq!(t.root.leaf_count(), 1);
        assert_eq!(classify(&t, &recs[0].au_intensities).unwrap(), Expression::Happy);
        assert_eq!(tree_rules(&t).len(), 1);
        assert!(export_rules(&t).starts_with("always then happy"));
    }

    #[test]
    fn separable_on_au27_is_depth_one() {
        let mut recs = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            recs.push(rec(&[(12, rng.gen_range(0.0..1.0)), (27, rng.gen_range(0.6..1.0))], Expression::Surprise));
            recs.push(rec(&[(12, rng.gen_range(0.0..1.0)), (27, rng.gen_range(0.0..0.4))], Expression::Happy));
        }
        let t = train_tree(&recs, &TreeConfig::default()).unwrap();
        assert_eq!(t.root.depth(), 1);
        match &t.root {
            Node::Split { au, .. } => assert_eq!(*au, AuCode(27)),
            _ => panic!("expected a split"),
        }
        let rules = tree_rules(&t);
        assert_eq!(rules.len(), 2);
        assert_eq!(rules[0].conditions[0].1, Cmp::Le);
        assert_eq!(rules[1].conditions[0].1, Cmp::Gt);
    }

    #[test]
    fn boundary_goes_left() {
        let recs = vec![
            rec(&[(1, 0.0)], Expression::Angry),
            rec(&[(1, 0.0)], Expression::Angry),
            rec(&[(1, 1.0)], Expression::Fear),
            rec(&[(1, 1.0)], Expression::Fear),
        ];
        let t = train_tree(
            &recs,
            &TreeConfig {
                min_leaf: 1.0,
                confidence: None,
            },
        )
        .unwrap();
        let at = |v: f64| classify(&t, &[(AuCode(1), v)].into_iter().collect()).unwrap();
        assert_eq!(at(0.5), Expression::Angry);
        assert_eq!(at(0.5000001), Expression::Fear);
    }

    #[test]
    fn duplicates_equal_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let base: Vec<IntensityRecord> = (0..30)
            .map(|_| {
                let a = rng.gen_range(0.0..2.0);
                let b = rng.gen_range(0.0..2.0);
                let label = if a + 0.3 * b > 1.0 { Expression::Fear } else { Expression::Gloomy };
                rec(&[(1, a), (4, b)], label)
            })
            .collect();
        let weights: Vec<f64> = (0..30).map(|i| (1 + i % 3) as f64).collect();
        let mut dup = Vec::new();
        for (r, &w) in base.iter().zip(&weights) {
            for _ in 0..w as usize {
                dup.push(r.clone());
            }
        }
        let cfg = TreeConfig::default();
        let a = train_tree(&dup, &cfg).unwrap();
        let weighted: Vec<_> = base.into_iter().zip(weights).collect();
        let b = train_tree_weighted(&weighted, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn added_errors_reference_values() {
        // Hand-evaluated with the same formula: 6 cases, 0 errors, CF 0.25 → 6(1 − 0.25^(1/6)).
        assert!((added_errors(6.0, 0.0, 0.25) - 6.0 * (1.0 - 0.25f64.powf(1.0 / 6.0))).abs() < 1e-12);
        assert!((added_errors(4.0, 4.0, 0.25) - 0.0).abs() < 1e-12);
        assert!(added_errors(100.0, 10.0, 0.25) > 0.0);
    }

    #[test]
    fn pruning_never_adds_leaves_and_rules_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let recs: Vec<IntensityRecord> = (0..200)
            .map(|_| {
                let v: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..2.0)).collect();
                let noisy = rng.gen_bool(0.1);
                let k = ((v[0] * 1.5) as usize + if noisy { 1 } else { 0 }) % CLASSES;
                rec(&[(1, v[0]), (4, v[1]), (12, v[2])], Expression::ALL[k])
            })
            .collect();
        let full = train_tree(
            &recs,
            &TreeConfig {
                confidence: None,
                ..Default::default()
            },
        )
        .unwrap();
        let pruned = train_tree(&recs, &TreeConfig::default()).unwrap();
        assert!(pruned.root.leaf_count() <= full.root.leaf_count());
        for t in [&full, &pruned] {
            let rules = parse_rules(&export_rules(t)).unwrap();
            assert_eq!(rules, tree_rules(t));
            for r in &recs {
                assert_eq!(apply_rules(&rules, &r.au_intensities).unwrap(), classify(t, &r.au_intensities).unwrap());
            }
        }
    }

    #[test]
    fn missing_attribute_is_an_error() {
        let recs = vec![rec(&[(1, 0.1)], Expression::Happy), rec(&[(4, 0.1)], Expression::Angry)];
        assert!(matches!(train_tree(&recs, &TreeConfig::default()), Err(Error::MissingAttribute(_))));
    }

    #[test]
    fn confusion_identities() {
        let pairs = [
            (Expression::Happy, Expression::Happy),
            (Expression::Happy, Expression::Fear),
            (Expression::Fear, Expression::Fear),
        ];
        let m = ConfusionMatrix::from_pairs(pairs).unwrap();
        assert_eq!(m.row_total(Expression::Happy.index()), 2);
        assert!((m.accuracy() - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.precision(Expression::Fear.index()) - 0.5).abs() < 1e-15);
        assert!((m.fp_rate(Expression::Fear.index()) - 0.5).abs() < 1e-15);
        assert!(ConfusionMatrix::from_pairs([]).is_err());
    }
}
