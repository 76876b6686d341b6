//! Landmark grid tracking with pyramidal Lucas-Kanade optical flow.

use std::fmt::Write as _;

use nalgebra::{DMatrix, Matrix3, Vector3};

use crate::gabor::{FeatureMatrix, FeatureSource};
use crate::image::GrayImage;
use crate::{Error, Result};

/// Vertex count of the tracked face grid.
pub const GRID_POINTS: usize = 113;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn dist(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Positions of all grid vertices in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PointGrid {
    points: Vec<Point2>,
}

impl PointGrid {
    pub fn new(points: Vec<Point2>) -> Result<Self> {
        if points.len() != GRID_POINTS {
            return Err(Error::DimensionMismatch {
                expected: GRID_POINTS,
                got: points.len(),
            });
        }
        Ok(PointGrid { points })
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn points_mut(&mut self) -> &mut [Point2] {
        &mut self.points
    }

    pub fn translate(&self, dx: f64, dy: f64) -> PointGrid {
        PointGrid {
            points: self.points.iter().map(|p| Point2::new(p.x + dx, p.y + dy)).collect(),
        }
    }

    /// Parse "index x y" lines. Blank lines and `#` comments are ignored;
    /// every index in `0..113` must appear exactly once.
    pub fn parse(text: &str) -> Result<PointGrid> {
        let mut slots: Vec<Option<Point2>> = vec![None; GRID_POINTS];
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(Error::parse(lineno + 1, "expected `index x y`"));
            }
            let idx: usize = fields[0]
                .parse()
                .map_err(|_| Error::parse(lineno + 1, "bad index"))?;
            let x: f64 = fields[1].parse().map_err(|_| Error::parse(lineno + 1, "bad x"))?;
            let y: f64 = fields[2].parse().map_err(|_| Error::parse(lineno + 1, "bad y"))?;
            if idx >= GRID_POINTS {
                return Err(Error::parse(lineno + 1, format!("index {idx} out of range")));
            }
            if slots[idx].replace(Point2::new(x, y)).is_some() {
                return Err(Error::parse(lineno + 1, format!("duplicate index {idx}")));
            }
        }
        let points = slots
            .into_iter()
            .enumerate()
            .map(|(i, p)| p.ok_or_else(|| Error::parse(0, format!("missing index {i}"))))
            .collect::<Result<Vec<_>>>()?;
        PointGrid::new(points)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (i, p) in self.points.iter().enumerate() {
            let _ = writeln!(s, "{i} {} {}", p.x, p.y);
        }
        s
    }
}

/// Point subsets used by upper-face and lower-face action units.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaceRegions {
    pub upper: Vec<usize>,
    pub lower: Vec<usize>,
}

impl FaceRegions {
    pub fn validate(&self) -> Result<()> {
        for (name, s) in [("upper", &self.upper), ("lower", &self.lower)] {
            if s.is_empty() {
                return Err(Error::InvalidParameter(format!("{name} subset is empty")));
            }
            if let Some(&bad) = s.iter().find(|&&i| i >= GRID_POINTS) {
                return Err(Error::InvalidParameter(format!("{name} subset index {bad} out of range")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackedSequence {
    pub grids: Vec<PointGrid>,
    /// `lost[f][i]`: point `i` failed to track into frame `f` (and was re-placed).
    pub lost: Vec<Vec<bool>>,
}

impl TrackedSequence {
    pub fn frames(&self) -> usize {
        self.grids.len()
    }

    /// Keep frames `0..=last`.
    pub fn truncate(&self, last: usize) -> TrackedSequence {
        TrackedSequence {
            grids: self.grids[..=last].to_vec(),
            lost: self.lost[..=last].to_vec(),
        }
    }

    /// Per-frame dump in the landmark file format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (f, g) in self.grids.iter().enumerate() {
            let _ = writeln!(s, "# frame {f}");
            s.push_str(&g.to_text());
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct Pyramid {
    pub levels: Vec<GrayImage>,
}

pub const MIN_PYRAMID_SIZE: usize = 16;

fn blur_downsample(img: &GrayImage) -> GrayImage {
    const TAPS: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
    let (w, h) = (img.width(), img.height());
    let horiz = GrayImage::from_fn(w, h, |x, y| {
        TAPS.iter()
            .enumerate()
            .map(|(k, t)| t * img.get_reflect(x as isize + k as isize - 2, y as isize))
            .sum()
    });
    GrayImage::from_fn(w / 2, h / 2, |x, y| {
        TAPS.iter()
            .enumerate()
            .map(|(k, t)| t * horiz.get_reflect(2 * x as isize, 2 * y as isize + k as isize - 2))
            .sum()
    })
}

pub fn build_pyramid(frame: &GrayImage, levels: usize) -> Result<Pyramid> {
    if levels == 0 {
        return Err(Error::InvalidParameter("pyramid needs at least one level".into()));
    }
    let coarsest = (frame.width().min(frame.height())) >> (levels - 1);
    if coarsest < MIN_PYRAMID_SIZE {
        return Err(Error::ImageTooSmall(format!(
            "{}x{} frame cannot hold {levels} pyramid levels",
            frame.width(),
            frame.height()
        )));
    }
    let mut out = vec![frame.clone()];
    for _ in 1..levels {
        let next = blur_downsample(out.last().unwrap());
        out.push(next);
    }
    Ok(Pyramid { levels: out })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LkParams {
    pub levels: usize,
    /// Odd window side in pixels.
    pub window: usize,
    pub max_iters: usize,
    /// Convergence threshold on the per-iteration update, in pixels.
    pub eps: f64,
    /// A point is lost when the smaller eigenvalue of its gradient matrix is
    /// at most this fraction of the window gradient energy (the matrix trace).
    pub min_eig_ratio: f64,
}

impl Default for LkParams {
    fn default() -> Self {
        LkParams {
            levels: 3,
            window: 15,
            max_iters: 20,
            eps: 0.01,
            min_eig_ratio: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flow {
    pub dx: f64,
    pub dy: f64,
    pub lost: bool,
}

pub fn track_points(
    prev: &GrayImage,
    next: &GrayImage,
    points: &[Point2],
    params: &LkParams,
) -> Result<Vec<Flow>> {
    let a = build_pyramid(prev, params.levels)?;
    let b = build_pyramid(next, params.levels)?;
    Ok(track_points_pyramid(&a, &b, points, params))
}

pub fn track_points_pyramid(prev: &Pyramid, next: &Pyramid, points: &[Point2], params: &LkParams) -> Vec<Flow> {
    points.iter().map(|p| track_one(prev, next, *p, params)).collect()
}

fn track_one(prev: &Pyramid, next: &Pyramid, u: Point2, params: &LkParams) -> Flow {
    let half = (params.window / 2) as isize;
    let top = prev.levels.len().min(next.levels.len()) - 1;
    let (mut gx, mut gy) = (0.0f64, 0.0f64);
    let mut lost = false;
    let n = ((2 * half + 1) * (2 * half + 1)) as usize;
    let mut ix = vec![0.0; n];
    let mut iy = vec![0.0; n];
    let mut iv = vec![0.0; n];
    for level in (0..=top).rev() {
        let scale = (1u32 << level) as f64;
        let (px, py) = (u.x / scale, u.y / scale);
        let img_i = &prev.levels[level];
        let img_j = &next.levels[level];
        let (mut g11, mut g12, mut g22) = (0.0, 0.0, 0.0);
        let mut k = 0;
        let template = WindowSampler::new(img_i, px, py, half);
        for v in -half..=half {
            for w in -half..=half {
                let x = px + w as f64;
                let y = py + v as f64;
                let dx = (img_i.sample(x + 1.0, y) - img_i.sample(x - 1.0, y)) * 0.5;
                let dy = (img_i.sample(x, y + 1.0) - img_i.sample(x, y - 1.0)) * 0.5;
                ix[k] = dx;
                iy[k] = dy;
                iv[k] = template.at(w, v);
                g11 += dx * dx;
                g12 += dx * dy;
                g22 += dy * dy;
                k += 1;
            }
        }
        let trace = g11 + g22;
        let det = g11 * g22 - g12 * g12;
        let min_eig = 0.5 * (trace - ((g11 - g22).powi(2) + 4.0 * g12 * g12).sqrt());
        let singular = min_eig <= params.min_eig_ratio * trace || det <= 0.0;
        let (mut nx, mut ny) = (0.0f64, 0.0f64);
        if !singular {
            for _ in 0..params.max_iters {
                let (mut b1, mut b2) = (0.0, 0.0);
                let mut k = 0;
                let window = WindowSampler::new(img_j, px + gx + nx, py + gy + ny, half);
                for v in -half..=half {
                    for w in -half..=half {
                        let diff = iv[k] - window.at(w, v);
                        b1 += diff * ix[k];
                        b2 += diff * iy[k];
                        k += 1;
                    }
                }
                let ex = (g22 * b1 - g12 * b2) / det;
                let ey = (g11 * b2 - g12 * b1) / det;
                nx += ex;
                ny += ey;
                if ex.hypot(ey) < params.eps {
                    break;
                }
            }
        } else if level == 0 {
            lost = true;
        }
        if level > 0 {
            gx = 2.0 * (gx + nx);
            gy = 2.0 * (gy + ny);
        } else {
            gx += nx;
            gy += ny;
        }
    }
    let (fx, fy) = (u.x + gx, u.y + gy);
    let w = prev.levels[0].width() as f64;
    let h = prev.levels[0].height() as f64;
    if !(gx.is_finite() && gy.is_finite()) || fx < 0.0 || fy < 0.0 || fx > w - 1.0 || fy > h - 1.0 {
        lost = true;
    }
    Flow { dx: gx, dy: gy, lost }
}

/// Bilinear sampling at integer offsets from a fixed sub-pixel centre. The
/// interpolation weights are shared by the whole window, so interior windows
/// skip the per-sample clamping of [`GrayImage::sample`].
struct WindowSampler<'a> {
    img: &'a GrayImage,
    cx: f64,
    cy: f64,
    x0: isize,
    y0: isize,
    fx: f64,
    fy: f64,
    interior: bool,
}

impl<'a> WindowSampler<'a> {
    fn new(img: &'a GrayImage, cx: f64, cy: f64, half: isize) -> Self {
        let (x0, y0) = (cx.floor(), cy.floor());
        let (xi, yi) = (x0 as isize, y0 as isize);
        let interior = cx.is_finite()
            && cy.is_finite()
            && xi - half >= 0
            && yi - half >= 0
            && xi + half + 1 < img.width() as isize
            && yi + half + 1 < img.height() as isize;
        WindowSampler {
            img,
            cx,
            cy,
            x0: xi,
            y0: yi,
            fx: cx - x0,
            fy: cy - y0,
            interior,
        }
    }

    fn at(&self, w: isize, v: isize) -> f64 {
        if !self.interior {
            return self.img.sample(self.cx + w as f64, self.cy + v as f64);
        }
        let x = (self.x0 + w) as usize;
        let y = (self.y0 + v) as usize;
        let a = self.img.get(x, y) * (1.0 - self.fx) + self.img.get(x + 1, y) * self.fx;
        let b = self.img.get(x, y + 1) * (1.0 - self.fx) + self.img.get(x + 1, y + 1) * self.fx;
        a * (1.0 - self.fy) + b * self.fy
    }
}

/// Least-squares affine map `q = A p + t` from point correspondences.
fn fit_affine(src: &[Point2], dst: &[Point2]) -> Option<(Matrix3<f64>, Vector3<f64>, Vector3<f64>)> {
    let mut m = Matrix3::zeros();
    let mut bx = Vector3::zeros();
    let mut by = Vector3::zeros();
    for (p, q) in src.iter().zip(dst) {
        let v = Vector3::new(p.x, p.y, 1.0);
        m += v * v.transpose();
        bx += v * q.x;
        by += v * q.y;
    }
    let scale = m.norm().max(1.0);
    let lu = m.lu();
    if lu.determinant().abs() < 1e-12 * scale.powi(3) {
        return None;
    }
    Some((m, lu.solve(&bx)?, lu.solve(&by)?))
}

fn repair_frame(prev: &PointGrid, cur: &mut PointGrid, lost: &[bool]) -> Result<()> {
    if !lost.iter().any(|&l| l) {
        return Ok(());
    }
    let mut src = Vec::new();
    let mut dst = Vec::new();
    for (i, &l) in lost.iter().enumerate() {
        if !l {
            src.push(prev.points[i]);
            dst.push(cur.points[i]);
        }
    }
    if src.len() < 3 {
        return Err(Error::Tracking(format!("only {} reliable points", src.len())));
    }
    let (_, cx, cy) = fit_affine(&src, &dst)
        .ok_or_else(|| Error::Tracking("reliable points are collinear".into()))?;
    for (i, &l) in lost.iter().enumerate() {
        if l {
            let p = prev.points[i];
            cur.points[i] = Point2::new(
                cx[0] * p.x + cx[1] * p.y + cx[2],
                cy[0] * p.x + cy[1] * p.y + cy[2],
            );
        }
    }
    Ok(())
}

/// Re-place lost points with the affine motion of the reliable ones between
/// consecutive frames, frame by frame from the start of the sequence.
pub fn repair_lost_points(tracked: &TrackedSequence) -> Result<TrackedSequence> {
    let mut out = tracked.clone();
    if out.lost.first().is_some_and(|l| l.iter().any(|&x| x)) {
        return Err(Error::Tracking("first-frame points cannot be lost".into()));
    }
    for f in 1..out.grids.len() {
        let (head, tail) = out.grids.split_at_mut(f);
        repair_frame(&head[f - 1], &mut tail[0], &out.lost[f])?;
    }
    Ok(out)
}

/// Track a grid through a whole sequence, repairing lost points as it goes.
pub fn track_sequence(frames: &[GrayImage], first: &PointGrid, params: &LkParams) -> Result<TrackedSequence> {
    if frames.is_empty() {
        return Err(Error::Empty("frame list"));
    }
    let mut grids = vec![first.clone()];
    let mut lost = vec![vec![false; GRID_POINTS]];
    let mut prev_pyr = build_pyramid(&frames[0], params.levels)?;
    for frame in &frames[1..] {
        let next_pyr = build_pyramid(frame, params.levels)?;
        let prev_grid = grids.last().unwrap();
        let flows = track_points_pyramid(&prev_pyr, &next_pyr, prev_grid.points(), params);
        let mut cur = prev_grid.clone();
        let mut flags = Vec::with_capacity(GRID_POINTS);
        for (p, fl) in cur.points.iter_mut().zip(&flows) {
            p.x += fl.dx;
            p.y += fl.dy;
            flags.push(fl.lost);
        }
        repair_frame(prev_grid, &mut cur, &flags)?;
        grids.push(cur);
        lost.push(flags);
        prev_pyr = next_pyr;
    }
    Ok(TrackedSequence { grids, lost })
}

fn check_subset(subset: &[usize]) -> Result<()> {
    if subset.is_empty() {
        return Err(Error::Empty("point subset"));
    }
    if let Some(&bad) = subset.iter().find(|&&i| i >= GRID_POINTS) {
        return Err(Error::InvalidParameter(format!("subset index {bad} out of range")));
    }
    Ok(())
}

/// Column `j-1` holds `(x − x₀, y − y₀)` of every subset point at frame `j`, interleaved.
pub fn displacement_features(tracked: &TrackedSequence, subset: &[usize]) -> Result<FeatureMatrix> {
    check_subset(subset)?;
    if tracked.frames() < 2 {
        return Err(Error::InvalidParameter("displacements need at least 2 frames".into()));
    }
    let first = &tracked.grids[0];
    let values = DMatrix::from_fn(2 * subset.len(), tracked.frames() - 1, |r, c| {
        let idx = subset[r / 2];
        let p = tracked.grids[c + 1].points[idx];
        let p0 = first.points[idx];
        if r % 2 == 0 {
            p.x - p0.x
        } else {
            p.y - p0.y
        }
    });
    FeatureMatrix::new(values, FeatureSource::Geometric)
}

/// Ratio of accumulated subset displacement at a truncated sequence's last
/// frame to that of the original sequence's last frame, clamped to [0, 1].
pub fn intensity_target(
    produced_last: &PointGrid,
    first: &PointGrid,
    original_last: &PointGrid,
    subset: &[usize],
) -> Result<f64> {
    check_subset(subset)?;
    let sum = |g: &PointGrid| -> f64 { subset.iter().map(|&i| g.points[i].dist(&first.points[i])).sum() };
    let num = sum(produced_last);
    let den = sum(original_last);
    if !(den > 0.0) {
        return Err(Error::ZeroDenominator("original sequence has no displacement"));
    }
    Ok((num / den).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn texture(w: usize, h: usize, ox: f64, oy: f64) -> GrayImage {
        GrayImage::from_fn(w, h, |x, y| {
            let (x, y) = (x as f64 - ox, y as f64 - oy);
            120.0 + 40.0 * (0.21 * x + 0.07 * y).sin() + 35.0 * (0.05 * x - 0.23 * y).cos() + 25.0 * (0.15 * x + 0.17 * y).sin() * (0.11 * y).cos()
        })
    }

    fn grid_from(f: impl Fn(usize) -> Point2) -> PointGrid {
        PointGrid::new((0..GRID_POINTS).map(f).collect()).unwrap()
    }

    fn lattice() -> PointGrid {
        grid_from(|i| Point2::new(20.0 + (i % 11) as f64 * 8.0, 20.0 + (i / 11) as f64 * 8.0))
    }

    #[test]
    fn pyramid_levels_and_sizes() {
        let img = texture(64, 64, 0.0, 0.0);
        let p = build_pyramid(&img, 1).unwrap();
        assert_eq!(p.levels.len(), 1);
        assert_eq!(p.levels[0], img);
        let p = build_pyramid(&img, 3).unwrap();
        let sizes: Vec<_> = p.levels.iter().map(|l| l.width()).collect();
        assert_eq!(sizes, vec![64, 32, 16]);
        assert!(build_pyramid(&img, 4).is_err());
    }

    #[test]
    fn pyramid_of_constant_is_constant() {
        let p = build_pyramid(&GrayImage::filled(64, 48, 77.0), 2).unwrap();
        for l in &p.levels {
            assert!(l.data().iter().all(|&v| (v - 77.0).abs() <= 1e-10));
        }
    }

    #[test]
    fn zero_motion_is_exactly_zero() {
        let img = texture(96, 96, 0.0, 0.0);
        let pts = vec![Point2::new(40.0, 50.0), Point2::new(33.3, 61.7)];
        for f in track_points(&img, &img, &pts, &LkParams::default()).unwrap() {
            assert_eq!((f.dx, f.dy, f.lost), (0.0, 0.0, false));
        }
    }

    #[test]
    fn integer_shift_recovered() {
        let a = texture(96, 96, 0.0, 0.0);
        let b = texture(96, 96, 3.0, -2.0);
        let pts = vec![Point2::new(48.0, 48.0), Point2::new(40.0, 55.0), Point2::new(55.5, 42.25)];
        for f in track_points(&a, &b, &pts, &LkParams::default()).unwrap() {
            assert!(!f.lost);
            assert!((f.dx - 3.0).abs() < 0.1 && (f.dy + 2.0).abs() < 0.1, "{f:?}");
        }
    }

    #[test]
    fn flat_region_is_lost() {
        let img = GrayImage::filled(64, 64, 50.0);
        let f = track_points(&img, &img, &[Point2::new(30.0, 30.0)], &LkParams::default()).unwrap();
        assert!(f[0].lost);
    }

    #[test]
    fn translation_equivariance() {
        let params = LkParams::default();
        let a = texture(128, 128, 0.0, 0.0);
        let b = texture(128, 128, 1.5, 0.5);
        let a2 = texture(128, 128, 8.0, 4.0);
        let b2 = texture(128, 128, 9.5, 4.5);
        let pts = [Point2::new(56.0, 60.0), Point2::new(62.3, 57.9)];
        let moved: Vec<_> = pts.iter().map(|p| Point2::new(p.x + 8.0, p.y + 4.0)).collect();
        let f1 = track_points(&a, &b, &pts, &params).unwrap();
        let f2 = track_points(&a2, &b2, &moved, &params).unwrap();
        for (u, v) in f1.iter().zip(&f2) {
            assert!((u.dx - v.dx).abs() < 1e-6 && (u.dy - v.dy).abs() < 1e-6);
        }
    }

    #[test]
    fn repair_is_noop_without_losses() {
        let g = lattice();
        let t = TrackedSequence {
            grids: vec![g.clone(), g.translate(1.0, 0.5)],
            lost: vec![vec![false; GRID_POINTS]; 2],
        };
        assert_eq!(repair_lost_points(&t).unwrap(), t);
    }

    #[test]
    fn repair_restores_affine_motion() {
        let g0 = lattice();
        let affine = |p: &Point2| Point2::new(1.02 * p.x + 0.05 * p.y + 1.5, -0.03 * p.x + 0.98 * p.y - 0.7);
        let g1 = grid_from(|i| affine(&g0.points()[i]));
        let mut broken = g1.clone();
        broken.points_mut()[17] = Point2::new(f64::NAN, f64::NAN);
        let mut lost = vec![vec![false; GRID_POINTS]; 2];
        lost[1][17] = true;
        let t = TrackedSequence {
            grids: vec![g0, broken],
            lost,
        };
        let fixed = repair_lost_points(&t).unwrap();
        assert!(fixed.grids[1].points()[17].dist(&g1.points()[17]) < 0.5);
    }

    #[test]
    fn repair_fails_when_everything_is_lost() {
        let g = lattice();
        let t = TrackedSequence {
            grids: vec![g.clone(), g],
            lost: vec![vec![false; GRID_POINTS], vec![true; GRID_POINTS]],
        };
        assert!(matches!(repair_lost_points(&t), Err(Error::Tracking(_))));
    }

    #[test]
    fn displacement_of_static_and_translating_sequences() {
        let g = lattice();
        let stat = TrackedSequence {
            grids: vec![g.clone(); 3],
            lost: vec![vec![false; GRID_POINTS]; 3],
        };
        let fm = displacement_features(&stat, &[0, 5, 9]).unwrap();
        assert_eq!(fm.values, DMatrix::zeros(6, 2));
        let moving = TrackedSequence {
            grids: vec![g.clone(), g.translate(1.0, 0.0), g.translate(2.0, 0.0)],
            lost: vec![vec![false; GRID_POINTS]; 3],
        };
        let fm = displacement_features(&moving, &[3, 4]).unwrap();
        assert_eq!(fm.values.column(0).as_slice(), &[1.0, 0.0, 1.0, 0.0]);
        assert_eq!(fm.values.column(1).as_slice(), &[2.0, 0.0, 2.0, 0.0]);
        assert!(displacement_features(&moving, &[]).is_err());
    }

    #[test]
    fn intensity_target_boundaries_and_midpoint() {
        let first = lattice();
        let last = grid_from(|i| {
            let p = first.points()[i];
            Point2::new(p.x + (i % 3) as f64, p.y - (i % 5) as f64 * 0.5 - 0.25)
        });
        let mid = grid_from(|i| {
            let (a, b) = (first.points()[i], last.points()[i]);
            Point2::new(0.5 * (a.x + b.x), 0.5 * (a.y + b.y))
        });
        let subset: Vec<usize> = (0..GRID_POINTS).collect();
        assert_eq!(intensity_target(&first, &first, &last, &subset).unwrap(), 0.0);
        assert_eq!(intensity_target(&last, &first, &last, &subset).unwrap(), 1.0);
        assert!((intensity_target(&mid, &first, &last, &subset).unwrap() - 0.5).abs() < 1e-12);
        assert!(matches!(
            intensity_target(&first, &first, &first, &subset),
            Err(Error::ZeroDenominator(_))
        ));
    }

    #[test]
    fn intensity_target_translation_invariant() {
        let first = lattice();
        let last = first.translate(2.0, 1.0);
        let cut = first.translate(0.6, 0.4);
        let subset = vec![1, 2, 3, 50];
        let a = intensity_target(&cut, &first, &last, &subset).unwrap();
        let b = intensity_target(&cut.translate(9.0, -4.0), &first.translate(9.0, -4.0), &last.translate(9.0, -4.0), &subset).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn grid_text_roundtrip() {
        let g = lattice().translate(0.125, -0.5);
        assert_eq!(PointGrid::parse(&g.to_text()).unwrap(), g);
        assert!(PointGrid::parse("0 1 2\n0 1 2").is_err());
        assert!(PointGrid::parse("0 1 2").is_err());
    }
}
