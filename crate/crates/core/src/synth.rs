//! Procedural face sequences with known landmark motion.
//!
//! A subject is a textured base image plus a 113-point layout. Each supported
//! action unit is a smooth displacement field (its deformation mode) and an
//! additive texture pattern, both scaled by the unit's intensity. Frames are
//! rendered by inverting the forward warp `x ↦ x + D(x)` per pixel, so the
//! ground-truth landmark at intensity `s` is exactly `q₀ + D_s(q₀)`.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::expression::Expression;
use crate::image::{GrayImage, Rect};
use crate::pipeline::{par_map, AuCode, LabeledSequence};
use crate::tracker::{FaceRegions, Point2, PointGrid};
use crate::{Error, Result};

/// Action units the generator can animate.
pub const SYNTH_AUS: [u16; 4] = [1, 4, 12, 27];

const FOREHEAD: std::ops::Range<usize> = 0..12;
const BROWS: std::ops::Range<usize> = 12..32;
const EYES: std::ops::Range<usize> = 32..48;
const MOUTH: std::ops::Range<usize> = 57..77;
const CHEEKS: std::ops::Range<usize> = 77..93;
const JAW: std::ops::Range<usize> = 93..113;

/// Face-normalised coordinates (u right, v down, both in [0, 1]) of the grid.
pub fn canonical_layout() -> Vec<(f64, f64)> {
    let mut p = Vec::with_capacity(113);
    for v in [0.14, 0.22] {
        for i in 0..6 {
            p.push((0.25 + 0.1 * i as f64, v));
        }
    }
    for side in [-1.0, 1.0] {
        for v in [0.31, 0.345] {
            for i in 0..5 {
                p.push((0.5 + side * (0.06 + 0.045 * i as f64), v));
            }
        }
    }
    for cu in [0.35, 0.65] {
        for i in 0..8 {
            let a = i as f64 * std::f64::consts::TAU / 8.0;
            p.push((cu + 0.07 * a.cos(), 0.42 + 0.03 * a.sin()));
        }
    }
    p.extend([
        (0.5, 0.46),
        (0.5, 0.52),
        (0.5, 0.58),
        (0.5, 0.64),
        (0.43, 0.62),
        (0.57, 0.62),
        (0.46, 0.66),
        (0.54, 0.66),
        (0.5, 0.68),
    ]);
    for (n, ru, rv) in [(12, 0.13, 0.05), (8, 0.085, 0.025)] {
        for i in 0..n {
            let a = i as f64 * std::f64::consts::TAU / n as f64;
            p.push((0.5 + ru * a.cos(), 0.76 + rv * a.sin()));
        }
    }
    for side in [-1.0, 1.0] {
        for v in [0.56, 0.66] {
            for i in 0..4 {
                p.push((0.5 + side * (0.2 + 0.04 * i as f64), v));
            }
        }
    }
    for i in 0..13 {
        let a = std::f64::consts::PI * (0.1 + 0.8 * i as f64 / 12.0);
        p.push((0.5 + 0.36 * a.cos(), 0.6 + 0.33 * a.sin()));
    }
    for (u, v) in [(0.4, 0.86), (0.5, 0.86), (0.6, 0.86), (0.43, 0.9), (0.57, 0.9), (0.5, 0.9), (0.5, 0.83)] {
        p.push((u, v));
    }
    debug_assert_eq!(p.len(), 113);
    p
}

/// Upper subset: forehead, brows and eyes. Lower subset: mouth, cheeks and jaw.
pub fn default_regions() -> FaceRegions {
    FaceRegions {
        upper: FOREHEAD.chain(BROWS).chain(EYES).collect(),
        lower: MOUTH.chain(CHEEKS).chain(JAW).collect(),
    }
}

/// Crops for the upper and lower face of a `size × size` synthetic frame.
pub fn default_crops(size: usize) -> (Rect, Rect) {
    let s = size as f64;
    let x = (0.12 * s).round() as usize;
    let w = (0.76 * s).round() as usize;
    let upper = Rect {
        x,
        y: (0.06 * s).round() as usize,
        width: w,
        height: (0.46 * s).round() as usize,
    };
    let lower = Rect {
        x,
        y: (0.54 * s).round() as usize,
        width: w,
        height: (0.42 * s).round() as usize,
    };
    (upper, lower)
}

fn gauss(u: f64, v: f64, cu: f64, cv: f64, su: f64, sv: f64) -> f64 {
    (-((u - cu).powi(2) / (2.0 * su * su) + (v - cv).powi(2) / (2.0 * sv * sv))).exp()
}

/// Deformation mode of a unit at intensity 1, in face-normalised units.
fn au_mode(au: u16, u: f64, v: f64) -> (f64, f64) {
    match au {
        1 => {
            let g = gauss(u, v, 0.42, 0.3, 0.06, 0.08) + gauss(u, v, 0.58, 0.3, 0.06, 0.08);
            (0.0, -0.032 * g)
        }
        4 => {
            let gl = gauss(u, v, 0.4, 0.33, 0.07, 0.06);
            let gr = gauss(u, v, 0.6, 0.33, 0.07, 0.06);
            (0.016 * (gl - gr), 0.026 * (gl + gr))
        }
        12 => {
            let gl = gauss(u, v, 0.37, 0.76, 0.06, 0.06);
            let gr = gauss(u, v, 0.63, 0.76, 0.06, 0.06);
            (0.026 * (gr - gl), -0.026 * (gl + gr))
        }
        27 => (0.0, 0.042 * gauss(u, v, 0.5, 0.86, 0.16, 0.09)),
        _ => (0.0, 0.0),
    }
}

/// Additive texture change of a unit at intensity 1; `x`, `y` in pixels.
fn au_texture(au: u16, u: f64, v: f64, x: f64, y: f64) -> f64 {
    use std::f64::consts::TAU;
    match au {
        1 => -18.0 * gauss(u, v, 0.5, 0.18, 0.15, 0.05) * (0.5 + 0.5 * (TAU * y / 4.5).cos()),
        4 => -22.0 * gauss(u, v, 0.5, 0.36, 0.04, 0.05) * (0.5 + 0.5 * (TAU * x / 4.0).cos()),
        12 => -24.0 * (gauss(u, v, 0.36, 0.67, 0.02, 0.06) + gauss(u, v, 0.64, 0.67, 0.02, 0.06)),
        27 => -60.0 * gauss(u, v, 0.5, 0.78, 0.07, 0.03),
        _ => 0.0,
    }
}

/// One synthetic person: face placement and a procedural skin texture.
#[derive(Debug, Clone, PartialEq)]
pub struct Subject {
    pub id: String,
    pub size: usize,
    /// Face scale in pixels (the face box side).
    pub scale: f64,
    pub center: (f64, f64),
    waves: Vec<(f64, f64, f64, f64)>,
    feature_depth: f64,
}

impl Subject {
    pub fn new(id: impl Into<String>, size: usize, seed: u64) -> Subject {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = size as f64;
        let waves = (0..6)
            .map(|_| {
                let lambda = rng.gen_range(5.0..12.0);
                let angle: f64 = rng.gen_range(0.0..std::f64::consts::PI);
                let k = std::f64::consts::TAU / lambda;
                (k * angle.cos(), k * angle.sin(), rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(8.0..16.0))
            })
            .collect();
        Subject {
            id: id.into(),
            size,
            scale: s * rng.gen_range(0.95..1.05),
            center: (s / 2.0 + rng.gen_range(-1.5..1.5), s / 2.0 + rng.gen_range(-1.5..1.5)),
            waves,
            feature_depth: rng.gen_range(40.0..55.0),
        }
    }

    fn to_face(&self, x: f64, y: f64) -> (f64, f64) {
        (
            (x - self.center.0) / self.scale + 0.5,
            (y - self.center.1) / self.scale + 0.5,
        )
    }

    fn to_pixels(&self, u: f64, v: f64) -> Point2 {
        Point2::new(
            self.center.0 + (u - 0.5) * self.scale,
            self.center.1 + (v - 0.5) * self.scale,
        )
    }

    /// Neutral landmark grid of this subject.
    pub fn neutral_grid(&self) -> PointGrid {
        PointGrid::new(canonical_layout().into_iter().map(|(u, v)| self.to_pixels(u, v)).collect())
            .expect("layout has 113 points")
    }

    /// Undeformed appearance.
    pub fn base_image(&self) -> GrayImage {
        GrayImage::from_fn(self.size, self.size, |x, y| self.base_value(x as f64, y as f64))
    }

    fn base_value(&self, x: f64, y: f64) -> f64 {
        let (u, v) = self.to_face(x, y);
        let mut val = 128.0;
        for &(kx, ky, ph, a) in &self.waves {
            val += a * (kx * x + ky * y + ph).sin();
        }
        let d = self.feature_depth;
        val -= d * (gauss(u, v, 0.35, 0.325, 0.07, 0.015) + gauss(u, v, 0.65, 0.325, 0.07, 0.015));
        val -= d * (gauss(u, v, 0.35, 0.42, 0.05, 0.02) + gauss(u, v, 0.65, 0.42, 0.05, 0.02));
        val -= 0.5 * d * gauss(u, v, 0.5, 0.64, 0.05, 0.02);
        val -= 0.8 * d * gauss(u, v, 0.5, 0.76, 0.11, 0.025);
        val
    }

    /// Displacement in pixels of the point at `(x, y)` for the given unit intensities.
    fn displacement(&self, x: f64, y: f64, motion: &Motion) -> (f64, f64) {
        let (u, v) = self.to_face(x, y);
        let (mut dx, mut dy) = motion.drift;
        for &(au, s) in &motion.units {
            let (mu, mv) = au_mode(au, u, v);
            dx += s * mu * self.scale;
            dy += s * mv * self.scale;
        }
        (dx, dy)
    }

    /// Landmark grid after applying `motion`.
    pub fn grid_at(&self, motion: &Motion) -> PointGrid {
        let mut g = self.neutral_grid();
        for p in g.points_mut() {
            let (dx, dy) = self.displacement(p.x, p.y, motion);
            p.x += dx;
            p.y += dy;
        }
        g
    }

    /// Frame showing `motion`, quantised to 8-bit levels.
    pub fn render(&self, base: &GrayImage, motion: &Motion) -> GrayImage {
        GrayImage::from_fn(self.size, self.size, |px, py| {
            let (x, y) = (px as f64, py as f64);
            let (dx, dy) = self.displacement(x, y, motion);
            let (mut sx, mut sy) = (x - dx, y - dy);
            if dx.abs() + dy.abs() > 1e-3 || motion.drift != (0.0, 0.0) {
                for _ in 0..8 {
                    let (dx, dy) = self.displacement(sx, sy, motion);
                    sx = x - dx;
                    sy = y - dy;
                }
            }
            let (u, v) = self.to_face(x, y);
            let mut val = base.sample(sx, sy);
            for &(au, s) in &motion.units {
                val += s * au_texture(au, u, v, x, y);
            }
            val.round().clamp(0.0, 255.0)
        })
    }
}

/// Intensities of active units plus a rigid drift (pixels).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Motion {
    pub units: Vec<(u16, f64)>,
    pub drift: (f64, f64),
}

impl Motion {
    fn scaled(&self, f: f64) -> Motion {
        Motion {
            units: self.units.iter().map(|&(a, s)| (a, s * f)).collect(),
            drift: (self.drift.0 * f, self.drift.1 * f),
        }
    }
}

/// A rendered sequence with the ground-truth grid of every frame.
#[derive(Debug, Clone)]
pub struct SynthSequence {
    pub frames: Vec<GrayImage>,
    pub truth: Vec<PointGrid>,
}

/// Neutral-to-apex sequence whose intensities grow linearly with the frame index.
pub fn render_sequence(subject: &Subject, apex: &Motion, frames: usize) -> Result<SynthSequence> {
    if frames < 2 {
        return Err(Error::InvalidParameter("a sequence needs at least 2 frames".into()));
    }
    if let Some(&(bad, _)) = apex.units.iter().find(|(a, _)| !SYNTH_AUS.contains(a)) {
        return Err(Error::InvalidParameter(format!("AU {bad} is not synthesised")));
    }
    let base = subject.base_image();
    let mut out = SynthSequence {
        frames: Vec::with_capacity(frames),
        truth: Vec::with_capacity(frames),
    };
    for f in 0..frames {
        let m = apex.scaled(f as f64 / (frames - 1) as f64);
        out.frames.push(subject.render(&base, &m));
        out.truth.push(subject.grid_at(&m));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub size: usize,
    pub frames: usize,
    pub train_subjects: usize,
    pub test_subjects: usize,
    /// Single-unit sequences per unit.
    pub train_singles: usize,
    pub test_singles: usize,
    /// Sequences per cross-region pair (1+12, 1+27, 4+12, 4+27).
    pub train_pairs: usize,
    pub test_pairs: usize,
    pub amplitude: (f64, f64),
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        // Each unit appears in 40 + 2·10 = 60 training and 14 + 2·3 = 20 test sequences.
        DatasetConfig {
            size: 96,
            frames: 11,
            train_subjects: 20,
            test_subjects: 6,
            train_singles: 40,
            test_singles: 14,
            train_pairs: 10,
            test_pairs: 3,
            amplitude: (0.85, 1.15),
            seed: 7,
        }
    }
}

/// Label sets of one split, in generation order.
fn split_labels(singles: usize, pairs: usize) -> Vec<Vec<u16>> {
    let mut out = Vec::new();
    for &a in &SYNTH_AUS {
        out.extend(std::iter::repeat_n(vec![a], singles));
    }
    for (a, b) in [(1, 12), (1, 27), (4, 12), (4, 27)] {
        out.extend(std::iter::repeat_n(vec![a, b], pairs));
    }
    out
}

fn make_split(
    labels: Vec<Vec<u16>>,
    subjects: &[Subject],
    cfg: &DatasetConfig,
    rng: &mut ChaCha8Rng,
    prefix: &str,
) -> Result<Vec<LabeledSequence>> {
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.shuffle(rng);
    // Draw every random number up front so rendering can run in parallel.
    let jobs: Vec<(usize, &Subject, &Vec<u16>, Motion)> = order
        .iter()
        .enumerate()
        .map(|(n, &i)| {
            let motion = Motion {
                units: labels[i].iter().map(|&a| (a, rng.gen_range(cfg.amplitude.0..cfg.amplitude.1))).collect(),
                drift: (0.0, 0.0),
            };
            (n, &subjects[n % subjects.len()], &labels[i], motion)
        })
        .collect();
    par_map(&jobs, |(n, subject, labels, motion)| {
        let seq = render_sequence(subject, motion, cfg.frames)?;
        Ok(LabeledSequence {
            id: format!("{prefix}{n:04}"),
            subject: subject.id.clone(),
            frames: seq.frames,
            first: seq.truth[0].clone(),
            au_set: labels.iter().map(|&a| AuCode(a)).collect::<BTreeSet<_>>(),
            expression: None,
        })
    })
    .into_iter()
    .collect()
}

/// Subject-disjoint `(train, test)` sequences.
pub fn generate_dataset(cfg: &DatasetConfig) -> Result<(Vec<LabeledSequence>, Vec<LabeledSequence>)> {
    if cfg.train_subjects == 0 || cfg.test_subjects == 0 {
        return Err(Error::InvalidParameter("both splits need subjects".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let subjects: Vec<Subject> = (0..cfg.train_subjects + cfg.test_subjects)
        .map(|i| Subject::new(format!("s{i:03}"), cfg.size, rng.gen()))
        .collect();
    let (train_s, test_s) = subjects.split_at(cfg.train_subjects);
    let train = make_split(split_labels(cfg.train_singles, cfg.train_pairs), train_s, cfg, &mut rng, "tr")?;
    let test = make_split(split_labels(cfg.test_singles, cfg.test_pairs), test_s, cfg, &mut rng, "te")?;
    Ok((train, test))
}

/// Units shown by each expression in synthetic expression data.
pub fn expression_units(e: Expression) -> &'static [u16] {
    match e {
        Expression::Surprise => &[1, 27],
        Expression::Gloomy => &[1, 4],
        Expression::Fear => &[1, 4, 27],
        Expression::Happy => &[12],
        Expression::Angry => &[4],
        Expression::Disgust => &[4, 12],
    }
}

/// `per_class` sequences of every expression, spread over fresh subjects.
pub fn generate_expression_set(cfg: &DatasetConfig, per_class: usize) -> Result<Vec<LabeledSequence>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let subjects: Vec<Subject> = (0..cfg.test_subjects.max(1))
        .map(|i| Subject::new(format!("x{i:03}"), cfg.size, rng.gen()))
        .collect();
    let mut out = Vec::new();
    for e in Expression::ALL {
        for n in 0..per_class {
            let subject = &subjects[(out.len() + n) % subjects.len()];
            let units = expression_units(e);
            let motion = Motion {
                units: units.iter().map(|&a| (a, rng.gen_range(cfg.amplitude.0..cfg.amplitude.1))).collect(),
                drift: (0.0, 0.0),
            };
            let seq = render_sequence(subject, &motion, cfg.frames)?;
            out.push(LabeledSequence {
                id: format!("ex-{}-{n:03}", e.name()),
                subject: subject.id.clone(),
                frames: seq.frames,
                first: seq.truth[0].clone(),
                au_set: units.iter().map(|&a| AuCode(a)).collect(),
                expression: Some(e),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_has_113_points_inside_face() {
        let l = canonical_layout();
        assert_eq!(l.len(), 113);
        assert!(l.iter().all(|&(u, v)| (0.05..0.95).contains(&u) && (0.05..0.97).contains(&v)));
        let r = default_regions();
        r.validate().unwrap();
        assert!(r.upper.iter().all(|i| !r.lower.contains(i)));
    }

    #[test]
    fn modes_are_local_to_their_region() {
        let s = Subject::new("a", 96, 1);
        let g0 = s.neutral_grid();
        let regions = default_regions();
        for (au, moved, still) in [(1u16, &regions.upper, &regions.lower), (27, &regions.lower, &regions.upper)] {
            let g = s.grid_at(&Motion {
                units: vec![(au, 1.0)],
                drift: (0.0, 0.0),
            });
            let sum = |idx: &Vec<usize>| -> f64 { idx.iter().map(|&i| g.points()[i].dist(&g0.points()[i])).sum() };
            assert!(sum(moved) > 20.0 * sum(still).max(1e-3), "au {au}");
        }
    }

    #[test]
    fn render_neutral_matches_base() {
        let s = Subject::new("a", 64, 3);
        let base = s.base_image();
        let f = s.render(&base, &Motion::default());
        for (a, b) in f.data().iter().zip(base.data()) {
            assert!((a - b.round().clamp(0.0, 255.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn truth_motion_is_linear_in_frame() {
        let s = Subject::new("a", 64, 2);
        let m = Motion {
            units: vec![(12, 1.0)],
            drift: (0.0, 0.0),
        };
        let seq = render_sequence(&s, &m, 5).unwrap();
        let p0 = seq.truth[0].points()[60];
        let p2 = seq.truth[2].points()[60];
        let p4 = seq.truth[4].points()[60];
        assert!((2.0 * p2.x - p0.x - p4.x).abs() < 1e-12);
        assert!((2.0 * p2.y - p0.y - p4.y).abs() < 1e-12);
    }

    #[test]
    fn dataset_counts_and_disjoint_subjects() {
        let cfg = DatasetConfig {
            size: 48,
            frames: 3,
            train_singles: 2,
            test_singles: 1,
            train_pairs: 1,
            test_pairs: 1,
            train_subjects: 3,
            test_subjects: 2,
            ..Default::default()
        };
        let (tr, te) = generate_dataset(&cfg).unwrap();
        assert_eq!(tr.len(), 4 * 2 + 4);
        assert_eq!(te.len(), 4 + 4);
        let subj: BTreeSet<_> = tr.iter().map(|s| s.subject.clone()).collect();
        assert!(te.iter().all(|s| !subj.contains(&s.subject)));
        for a in SYNTH_AUS {
            assert_eq!(tr.iter().filter(|s| s.au_set.contains(&AuCode(a))).count(), 4);
        }
    }
}
