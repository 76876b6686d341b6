//! Per-AU training and multi-label recognition.
//!
//! Every AU gets two Takagi-Sugeno models: one on tracked landmark
//! displacements and one on Gabor magnitudes of its face region. Training
//! data come from cutting each sequence at evenly spaced intermediate frames;
//! positives take the displacement-ratio target, negatives 0. At detection
//! the two channel outputs are added and compared with a threshold.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::anfis::{LabeledVector, TsModel};
use crate::expression::Expression;
use crate::gabor::{make_bank_with, sequence_appearance_features, FeatureMatrix, FeatureSource, GaborBank, GaborParams};
use crate::image::{GrayImage, Rect};
use crate::reduce::{fit_chain, reduce_sequence_features, ChainConfig, ProjectionBasis};
use crate::structure::{final_polish, identify_structure, StructureConfig, StructureState};
use crate::tracker::{displacement_features, intensity_target, track_sequence, FaceRegions, LkParams, PointGrid, TrackedSequence};
use crate::{synth, Error, Result};

const UPPER_AUS: [u16; 12] = [1, 2, 4, 5, 6, 7, 41, 42, 43, 44, 45, 46];
const LOWER_AUS: [u16; 18] = [9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 20, 22, 23, 24, 25, 26, 27, 28];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Region {
    Upper,
    Lower,
}

impl Region {
    pub fn name(self) -> &'static str {
        match self {
            Region::Upper => "upper",
            Region::Lower => "lower",
        }
    }
}

/// A FACS action unit number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AuCode(pub u16);

impl AuCode {
    /// Checked constructor: only upper- and lower-face FACS units are accepted.
    pub fn new(code: u16) -> Result<AuCode> {
        let au = AuCode(code);
        au.region()
            .map(|_| au)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown AU code {code}")))
    }

    /// Accepts `12` or `AU12`.
    pub fn parse(s: &str) -> Result<AuCode> {
        let t = s.trim();
        let digits = t.strip_prefix("AU").or_else(|| t.strip_prefix("au")).unwrap_or(t);
        let n: u16 = digits
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("bad AU code `{s}`")))?;
        AuCode::new(n)
    }

    pub fn region(self) -> Option<Region> {
        if UPPER_AUS.contains(&self.0) {
            Some(Region::Upper)
        } else if LOWER_AUS.contains(&self.0) {
            Some(Region::Lower)
        } else {
            None
        }
    }
}

impl std::fmt::Display for AuCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "AU{}", self.0)
    }
}

/// `1+4`, or `none` for the empty set.
pub fn combination_label(set: &BTreeSet<AuCode>) -> String {
    if set.is_empty() {
        return "none".into();
    }
    set.iter().map(|a| a.0.to_string()).collect::<Vec<_>>().join("+")
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSequence {
    pub id: String,
    pub subject: String,
    pub frames: Vec<GrayImage>,
    /// Grid placement on the first frame.
    pub first: PointGrid,
    pub au_set: BTreeSet<AuCode>,
    pub expression: Option<Expression>,
}

impl LabeledSequence {
    pub fn regions(&self) -> BTreeSet<Region> {
        self.au_set.iter().filter_map(|a| a.region()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub regions: FaceRegions,
    pub upper_crop: Rect,
    pub lower_crop: Rect,
    pub gabor_scales: usize,
    pub gabor_orientations: usize,
    pub kernel_size: usize,
    pub gabor: GaborParams,
    pub grid_step: usize,
    pub lk: LkParams,
    /// Feature matrices are resampled in time to this many columns.
    pub time_cols: usize,
    /// Appearance columns are taken relative to the first frame.
    pub appearance_relative: bool,
    pub cuts: usize,
    pub chain: ChainConfig,
    pub structure: StructureConfig,
    pub polish_epochs: usize,
    pub threshold: f64,
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let (upper_crop, lower_crop) = synth::default_crops(96);
        PipelineConfig {
            regions: synth::default_regions(),
            upper_crop,
            lower_crop,
            gabor_scales: 4,
            gabor_orientations: 4,
            kernel_size: 21,
            gabor: GaborParams::default(),
            grid_step: 8,
            lk: LkParams::default(),
            time_cols: 8,
            appearance_relative: true,
            cuts: 5,
            chain: ChainConfig::default(),
            structure: StructureConfig::default(),
            polish_epochs: 100,
            threshold: 1.0,
            val_fraction: 0.2,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn bank(&self) -> Result<GaborBank> {
        make_bank_with(self.gabor_scales, self.gabor_orientations, self.kernel_size, self.gabor)
    }

    pub fn subset(&self, region: Region) -> &[usize] {
        match region {
            Region::Upper => &self.regions.upper,
            Region::Lower => &self.regions.lower,
        }
    }

    pub fn crop(&self, region: Region) -> Rect {
        match region {
            Region::Upper => self.upper_crop,
            Region::Lower => self.lower_crop,
        }
    }
}

/// Tracked grids plus per-frame Gabor descriptors of both face regions.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceFeatures {
    pub tracked: TrackedSequence,
    /// Descriptor rows × frames.
    pub upper: DMatrix<f64>,
    pub lower: DMatrix<f64>,
}

impl SequenceFeatures {
    pub fn frames(&self) -> usize {
        self.tracked.frames()
    }

    pub fn appearance(&self, region: Region) -> &DMatrix<f64> {
        match region {
            Region::Upper => &self.upper,
            Region::Lower => &self.lower,
        }
    }
}

pub fn extract_features(seq: &LabeledSequence, cfg: &PipelineConfig, bank: &GaborBank) -> Result<SequenceFeatures> {
    if seq.frames.len() < 2 {
        return Err(Error::InvalidParameter(format!("sequence {} has fewer than 2 frames", seq.id)));
    }
    let tracked = track_sequence(&seq.frames, &seq.first, &cfg.lk)?;
    let appearance = |region: Region| -> Result<DMatrix<f64>> {
        let crops = seq
            .frames
            .iter()
            .map(|f| f.crop(cfg.crop(region)))
            .collect::<Result<Vec<_>>>()?;
        Ok(sequence_appearance_features(&crops, bank, cfg.grid_step)?.values)
    };
    Ok(SequenceFeatures {
        upper: appearance(Region::Upper)?,
        lower: appearance(Region::Lower)?,
        tracked,
    })
}

/// Order-preserving parallel map over a slice.
pub fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync) -> Vec<U> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(items.len().max(1));
    let chunk = items.len().div_ceil(workers).max(1);
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| {
                let f = &f;
                s.spawn(move || c.iter().map(f).collect::<Vec<U>>())
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

pub fn extract_all(seqs: &[LabeledSequence], cfg: &PipelineConfig) -> Result<Vec<SequenceFeatures>> {
    let bank = cfg.bank()?;
    par_map(seqs, |s| extract_features(s, cfg, &bank)).into_iter().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Geometric,
    Appearance,
}

/// Feature matrix of the sequence truncated after frame `last`, resampled to
/// `cfg.time_cols` columns.
pub fn channel_matrix(
    feat: &SequenceFeatures,
    channel: Channel,
    region: Region,
    last: usize,
    cfg: &PipelineConfig,
) -> Result<DMatrix<f64>> {
    if last == 0 || last >= feat.frames() {
        return Err(Error::InvalidParameter(format!(
            "cut frame {last} outside 1..{}",
            feat.frames()
        )));
    }
    let fm = match channel {
        Channel::Geometric => displacement_features(&feat.tracked.truncate(last), cfg.subset(region))?,
        Channel::Appearance => {
            let a = feat.appearance(region);
            let mut cols = a.columns(1, last).into_owned();
            if cfg.appearance_relative {
                let first = a.column(0);
                for mut c in cols.column_iter_mut() {
                    c -= first;
                }
            }
            FeatureMatrix::new(cols, FeatureSource::Appearance)?
        }
    };
    Ok(fm.resample_cols(cfg.time_cols).values)
}

/// Indices of sequences whose AU set contains `au`, and of all others.
pub fn split_by_au(dataset: &[LabeledSequence], au: AuCode) -> Result<(Vec<usize>, Vec<usize>)> {
    if dataset.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let (pos, neg): (Vec<usize>, Vec<usize>) = (0..dataset.len()).partition(|&i| dataset[i].au_set.contains(&au));
    if pos.is_empty() {
        return Err(Error::NoPositives(au.0));
    }
    Ok((pos, neg))
}

/// Last frames of the evenly spaced cuts: `round(k·(t−1)/cuts)` for `k = 1..=cuts`.
pub fn cut_frames(frames: usize, cuts: usize) -> Result<Vec<usize>> {
    if cuts == 0 {
        return Err(Error::InvalidParameter("need at least one cut".into()));
    }
    if frames < cuts + 1 {
        return Err(Error::InvalidParameter(format!(
            "{frames} frames cannot provide {cuts} cuts"
        )));
    }
    Ok((1..=cuts)
        .map(|k| ((k * (frames - 1)) as f64 / cuts as f64).round() as usize)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Augmented {
    /// Last kept frame of the truncated sequence.
    pub last: usize,
    pub target: f64,
}

/// Truncated copies of one sequence with their intensity targets.
pub fn augment_intensities(
    tracked: &TrackedSequence,
    positive: bool,
    subset: &[usize],
    cuts: usize,
) -> Result<Vec<Augmented>> {
    let frames = tracked.frames();
    let lasts = cut_frames(frames, cuts)?;
    let first = &tracked.grids[0];
    let apex = &tracked.grids[frames - 1];
    lasts
        .into_iter()
        .map(|last| {
            let target = if positive {
                intensity_target(&tracked.grids[last], first, apex, subset)?
            } else {
                0.0
            };
            Ok(Augmented { last, target })
        })
        .collect()
}

/// Reduction chain and fuzzy model of one feature channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    pub basis: ProjectionBasis,
    pub model: TsModel,
}

impl ChannelModel {
    pub fn intensity(&self, matrix: &DMatrix<f64>) -> Result<f64> {
        let x = reduce_sequence_features(matrix, &self.basis)?;
        self.model.predict(x.as_slice())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuModel {
    pub au: AuCode,
    pub geometric: ChannelModel,
    pub appearance: ChannelModel,
    pub threshold: f64,
}

impl AuModel {
    pub fn region(&self) -> Region {
        self.au.region().expect("model AU codes are validated")
    }

    pub fn channel(&self, c: Channel) -> &ChannelModel {
        match c {
            Channel::Geometric => &self.geometric,
            Channel::Appearance => &self.appearance,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub model: AuModel,
    pub geometric_search: StructureState,
    pub appearance_search: StructureState,
    pub warnings: Vec<String>,
}

impl TrainReport {
    pub fn log(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# {} geometric", self.model.au);
        s.push_str(&self.geometric_search.history_log());
        let _ = writeln!(s, "# {} appearance", self.model.au);
        s.push_str(&self.appearance_search.history_log());
        for w in &self.warnings {
            let _ = writeln!(s, "# warning: {w}");
        }
        s
    }
}

/// Subject-disjoint split of `indices` into (train, validation) by a seeded
/// shuffle of the distinct subjects.
pub fn subject_split(
    dataset: &[LabeledSequence],
    indices: &[usize],
    fraction: f64,
    seed: u64,
) -> (Vec<usize>, Vec<usize>) {
    let mut subjects: Vec<&str> = indices
        .iter()
        .map(|&i| dataset[i].subject.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if subjects.len() < 2 {
        // A single subject cannot be split by subject; hold out every fifth sequence.
        return indices.iter().enumerate().fold((Vec::new(), Vec::new()), |(mut t, mut v), (n, &i)| {
            if n % 5 == 4 {
                v.push(i);
            } else {
                t.push(i);
            }
            (t, v)
        });
    }
    subjects.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((subjects.len() as f64 * fraction).round() as usize).clamp(1, subjects.len() - 1);
    let val: BTreeSet<&str> = subjects[..n_val].iter().copied().collect();
    indices.iter().partition(|&&i| !val.contains(dataset[i].subject.as_str()))
}

fn fit_channel(
    dataset_feats: &[SequenceFeatures],
    positives: &BTreeSet<usize>,
    train_idx: &[usize],
    val_idx: &[usize],
    channel: Channel,
    region: Region,
    cfg: &PipelineConfig,
) -> Result<(ChannelModel, StructureState)> {
    let full = |i: usize| channel_matrix(&dataset_feats[i], channel, region, dataset_feats[i].frames() - 1, cfg);
    let matrices = train_idx.iter().map(|&i| full(i)).collect::<Result<Vec<_>>>()?;
    let labels: Vec<bool> = train_idx.iter().map(|i| positives.contains(i)).collect();
    let basis = fit_chain(&matrices, &labels, &cfg.chain)?;
    let samples = |idx: &[usize]| -> Result<Vec<LabeledVector>> {
        let mut out = Vec::new();
        for &i in idx {
            let f = &dataset_feats[i];
            for aug in augment_intensities(&f.tracked, positives.contains(&i), cfg.subset(region), cfg.cuts)? {
                let m = channel_matrix(f, channel, region, aug.last, cfg)?;
                let x: DVector<f64> = reduce_sequence_features(&m, &basis)?;
                out.push(LabeledVector::new(x.as_slice().to_vec(), aug.target));
            }
        }
        Ok(out)
    };
    let train = samples(train_idx)?;
    let val = samples(val_idx)?;
    let found = identify_structure(&train, &val, &cfg.structure)?;
    let model = final_polish(&found.model, &train, cfg.polish_epochs, &cfg.structure.hybrid)?;
    Ok((ChannelModel { basis, model }, found.state))
}

/// Train both channels of one AU. `features[i]` belongs to `dataset[i]`.
pub fn train_au_model(
    dataset: &[LabeledSequence],
    features: &[SequenceFeatures],
    au: AuCode,
    cfg: &PipelineConfig,
) -> Result<TrainReport> {
    if dataset.len() != features.len() {
        return Err(Error::DimensionMismatch {
            expected: dataset.len(),
            got: features.len(),
        });
    }
    let region = au
        .region()
        .ok_or_else(|| Error::InvalidParameter(format!("unknown AU code {}", au.0)))?;
    let (pos, neg) = split_by_au(dataset, au)?;
    if neg.is_empty() {
        return Err(Error::InvalidParameter(format!("{au} has no negative sequences")));
    }
    let mut warnings = Vec::new();
    if pos.len() < 3 {
        warnings.push(format!("{au}: only {} positive sequence(s)", pos.len()));
    }
    let all: Vec<usize> = (0..dataset.len()).collect();
    let (train_idx, val_idx) = subject_split(dataset, &all, cfg.val_fraction, cfg.seed);
    if val_idx.is_empty() {
        return Err(Error::Empty("validation split"));
    }
    let positives: BTreeSet<usize> = pos.into_iter().collect();
    if !train_idx.iter().any(|i| positives.contains(i)) {
        warnings.push(format!("{au}: no positive sequence in the training part of the split"));
    }
    let (geo, app) = std::thread::scope(|s| {
        let g = s.spawn(|| fit_channel(features, &positives, &train_idx, &val_idx, Channel::Geometric, region, cfg));
        let a = fit_channel(features, &positives, &train_idx, &val_idx, Channel::Appearance, region, cfg);
        (g.join().expect("channel training panicked"), a)
    });
    let (geometric, geometric_search) = geo?;
    let (appearance, appearance_search) = app?;
    Ok(TrainReport {
        model: AuModel {
            au,
            geometric,
            appearance,
            threshold: cfg.threshold,
        },
        geometric_search,
        appearance_search,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub au: AuCode,
    pub geometric: f64,
    pub appearance: f64,
    pub fused_score: f64,
    pub active: bool,
}

impl Detection {
    pub fn new(au: AuCode, geometric: f64, appearance: f64, threshold: f64) -> Detection {
        let fused_score = geometric + appearance;
        Detection {
            au,
            geometric,
            appearance,
            fused_score,
            active: fused_score >= threshold,
        }
    }
}

/// Score a whole sequence with every model.
pub fn detect_aus(feat: &SequenceFeatures, models: &[AuModel], cfg: &PipelineConfig) -> Result<Vec<Detection>> {
    if models.is_empty() {
        return Err(Error::Empty("model list"));
    }
    let last = feat.frames() - 1;
    models
        .iter()
        .map(|m| {
            let region = m.region();
            let g = m
                .geometric
                .intensity(&channel_matrix(feat, Channel::Geometric, region, last, cfg)?)?;
            let a = m
                .appearance
                .intensity(&channel_matrix(feat, Channel::Appearance, region, last, cfg)?)?;
            Ok(Detection::new(m.au, g, a, m.threshold))
        })
        .collect()
}

pub fn active_set(detections: &[Detection]) -> BTreeSet<AuCode> {
    detections.iter().filter(|d| d.active).map(|d| d.au).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    True,
    MissingOrExtra,
    False,
}

/// Exact match is true. A nonempty detection disjoint from the truth is a
/// false alarm; every other mismatch (overlap, or nothing detected) is
/// missing-or-extra.
pub fn classify_outcome(truth: &BTreeSet<AuCode>, detected: &BTreeSet<AuCode>) -> Outcome {
    if truth == detected {
        Outcome::True
    } else if !detected.is_empty() && truth.is_disjoint(detected) {
        Outcome::False
    } else {
        Outcome::MissingOrExtra
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalRow {
    /// Ground-truth combination, e.g. `1+4`.
    pub label: String,
    pub total: usize,
    pub correct: usize,
    pub missing_or_extra: usize,
    pub false_alarms: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn total(&self) -> usize {
        self.rows.iter().map(|r| r.total).sum()
    }

    pub fn correct(&self) -> usize {
        self.rows.iter().map(|r| r.correct).sum()
    }

    pub fn false_alarms(&self) -> usize {
        self.rows.iter().map(|r| r.false_alarms).sum()
    }

    pub fn missing_or_extra(&self) -> usize {
        self.rows.iter().map(|r| r.missing_or_extra).sum()
    }

    pub fn recognition_rate(&self) -> f64 {
        self.correct() as f64 / self.total() as f64
    }

    pub fn false_alarm_rate(&self) -> f64 {
        self.false_alarms() as f64 / self.total() as f64
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<12}{:>8}{:>8}{:>18}{:>8}", "AUs", "total", "true", "missing/extra", "false");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<12}{:>8}{:>8}{:>18}{:>8}",
                r.label, r.total, r.correct, r.missing_or_extra, r.false_alarms
            );
        }
        let _ = writeln!(
            s,
            "{:<12}{:>8}{:>8}{:>18}{:>8}",
            "Total",
            self.total(),
            self.correct(),
            self.missing_or_extra(),
            self.false_alarms()
        );
        let _ = writeln!(
            s,
            "R={:.1}% F={:.1}%",
            100.0 * self.recognition_rate(),
            100.0 * self.false_alarm_rate()
        );
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("aus,total,true,missing_or_extra,false\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{},{}", r.label, r.total, r.correct, r.missing_or_extra, r.false_alarms);
        }
        let _ = writeln!(
            s,
            "Total,{},{},{},{}",
            self.total(),
            self.correct(),
            self.missing_or_extra(),
            self.false_alarms()
        );
        s
    }
}

/// Rows keyed by ground-truth combination, in combination order.
pub fn tally(outcomes: &[(BTreeSet<AuCode>, BTreeSet<AuCode>)]) -> Result<EvalReport> {
    if outcomes.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let mut rows: BTreeMap<Vec<AuCode>, EvalRow> = BTreeMap::new();
    for (truth, detected) in outcomes {
        let key: Vec<AuCode> = truth.iter().copied().collect();
        let row = rows.entry(key).or_insert_with(|| EvalRow {
            label: combination_label(truth),
            total: 0,
            correct: 0,
            missing_or_extra: 0,
            false_alarms: 0,
        });
        row.total += 1;
        match classify_outcome(truth, detected) {
            Outcome::True => row.correct += 1,
            Outcome::MissingOrExtra => row.missing_or_extra += 1,
            Outcome::False => row.false_alarms += 1,
        }
    }
    Ok(EvalReport {
        rows: rows.into_values().collect(),
    })
}

/// Detect on every test sequence; ground truth is restricted to the AUs the
/// models cover.
pub fn evaluate(
    models: &[AuModel],
    testset: &[LabeledSequence],
    features: &[SequenceFeatures],
    cfg: &PipelineConfig,
) -> Result<EvalReport> {
    if testset.len() != features.len() {
        return Err(Error::DimensionMismatch {
            expected: testset.len(),
            got: features.len(),
        });
    }
    let covered: BTreeSet<AuCode> = models.iter().map(|m| m.au).collect();
    let outcomes = testset
        .iter()
        .zip(features)
        .map(|(s, f)| {
            let truth: BTreeSet<AuCode> = s.au_set.intersection(&covered).copied().collect();
            Ok((truth, active_set(&detect_aus(f, models, cfg)?)))
        })
        .collect::<Result<Vec<_>>>()?;
    tally(&outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(v: &[u16]) -> BTreeSet<AuCode> {
        v.iter().map(|&a| AuCode(a)).collect()
    }

    #[test]
    fn au_codes_and_regions() {
        assert_eq!(AuCode::parse("AU12").unwrap(), AuCode(12));
        assert_eq!(AuCode::parse("4").unwrap().region(), Some(Region::Upper));
        assert_eq!(AuCode(27).region(), Some(Region::Lower));
        assert!(AuCode::parse("3").is_err());
        assert!(AuCode::parse("x").is_err());
    }

    #[test]
    fn outcome_rules() {
        assert_eq!(classify_outcome(&set(&[1, 2]), &set(&[1, 2])), Outcome::True);
        assert_eq!(classify_outcome(&set(&[1, 2]), &set(&[1])), Outcome::MissingOrExtra);
        assert_eq!(classify_outcome(&set(&[1]), &set(&[1, 4])), Outcome::MissingOrExtra);
        assert_eq!(classify_outcome(&set(&[1]), &set(&[])), Outcome::MissingOrExtra);
        assert_eq!(classify_outcome(&set(&[1]), &set(&[4])), Outcome::False);
        assert_eq!(classify_outcome(&set(&[]), &set(&[4])), Outcome::False);
        assert_eq!(classify_outcome(&set(&[]), &set(&[])), Outcome::True);
    }

    #[test]
    fn tally_rows_partition_totals() {
        let outcomes = vec![
            (set(&[1]), set(&[1])),
            (set(&[1]), set(&[4])),
            (set(&[1, 4]), set(&[1])),
            (set(&[1, 4]), set(&[1, 4])),
        ];
        let r = tally(&outcomes).unwrap();
        assert_eq!(r.rows.len(), 2);
        for row in &r.rows {
            assert_eq!(row.correct + row.missing_or_extra + row.false_alarms, row.total);
        }
        assert_eq!(r.correct(), 2);
        assert!((r.recognition_rate() - 0.5).abs() < 1e-15);
        assert!((r.false_alarm_rate() - 0.25).abs() < 1e-15);
        assert!(r.to_table().contains("R=50.0% F=25.0%"));
        assert!(tally(&[]).is_err());
    }

    #[test]
    fn fusion_threshold_arithmetic() {
        let d = Detection::new(AuCode(1), 0.6, 0.5, 1.0);
        assert!((d.fused_score - 1.1).abs() < 1e-15);
        assert!(d.active);
        assert!(!Detection::new(AuCode(1), 0.01, -0.02, 1.0).active);
    }

    #[test]
    fn cut_frames_even_spacing() {
        assert_eq!(cut_frames(11, 5).unwrap(), vec![2, 4, 6, 8, 10]);
        assert_eq!(cut_frames(6, 5).unwrap(), vec![1, 2, 3, 4, 5]);
        assert!(cut_frames(5, 5).is_err());
    }

    #[test]
    fn split_by_au_partitions() {
        let g = synth::Subject::new("a", 32, 0).neutral_grid();
        let mk = |aus: &[u16]| LabeledSequence {
            id: String::new(),
            subject: "a".into(),
            frames: vec![],
            first: g.clone(),
            au_set: set(aus),
            expression: None,
        };
        let data = vec![mk(&[1, 2]), mk(&[27]), mk(&[1])];
        let (p, n) = split_by_au(&data, AuCode(1)).unwrap();
        assert_eq!(p, vec![0, 2]);
        assert_eq!(n, vec![1]);
        assert!(matches!(split_by_au(&data, AuCode(4)), Err(Error::NoPositives(4))));
        assert!(split_by_au(&[], AuCode(1)).is_err());
    }

    #[test]
    fn subject_split_is_disjoint() {
        let g = synth::Subject::new("a", 32, 0).neutral_grid();
        let data: Vec<LabeledSequence> = (0..20)
            .map(|i| LabeledSequence {
                id: i.to_string(),
                subject: format!("s{}", i % 10),
                frames: vec![],
                first: g.clone(),
                au_set: set(&[1]),
                expression: None,
            })
            .collect();
        let idx: Vec<usize> = (0..20).collect();
        let (t, v) = subject_split(&data, &idx, 0.2, 5);
        assert_eq!(t.len() + v.len(), 20);
        assert_eq!(v.len(), 4);
        let ts: BTreeSet<_> = t.iter().map(|&i| &data[i].subject).collect();
        assert!(v.iter().all(|&i| !ts.contains(&data[i].subject)));
        assert_eq!(subject_split(&data, &idx, 0.2, 5), (t, v));
    }
}
