//! Gabor wavelet banks and per-sequence appearance feature matrices.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::image::GrayImage;
use crate::{Error, Result};

/// One complex kernel, stored row-major as separate real and imaginary planes.
#[derive(Debug, Clone, PartialEq)]
pub struct GaborKernel {
    pub size: usize,
    pub wavelength: f64,
    pub theta: f64,
    pub sigma: f64,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl GaborKernel {
    /// Kernel value at offset `(u, v)` from the centre.
    #[inline]
    pub fn at(&self, u: isize, v: isize) -> (f64, f64) {
        let h = (self.size / 2) as isize;
        let idx = ((v + h) as usize) * self.size + (u + h) as usize;
        (self.re[idx], self.im[idx])
    }

    pub fn l1_norm(&self) -> f64 {
        self.re.iter().zip(&self.im).map(|(r, i)| r.hypot(*i)).sum()
    }
}

/// Shape parameters of a bank; the kernel count is `scales × orientations`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaborParams {
    pub base_wavelength: f64,
    pub wavelength_ratio: f64,
    /// Gaussian σ as a multiple of the wavelength.
    pub sigma_ratio: f64,
}

impl Default for GaborParams {
    fn default() -> Self {
        GaborParams {
            base_wavelength: 4.0,
            wavelength_ratio: std::f64::consts::SQRT_2,
            sigma_ratio: 0.56,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaborBank {
    pub kernels: Vec<GaborKernel>,
    pub scales: usize,
    pub orientations: usize,
    pub kernel_size: usize,
    pub wavelengths: Vec<f64>,
    pub sigma_ratio: f64,
}

impl GaborBank {
    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    /// Kernels are ordered scale-major: `index = scale · orientations + orientation`.
    pub fn kernel(&self, scale: usize, orientation: usize) -> &GaborKernel {
        &self.kernels[scale * self.orientations + orientation]
    }
}

pub fn make_bank(scales: usize, orientations: usize, kernel_size: usize) -> Result<GaborBank> {
    make_bank_with(scales, orientations, kernel_size, GaborParams::default())
}

pub fn make_bank_with(
    scales: usize,
    orientations: usize,
    kernel_size: usize,
    params: GaborParams,
) -> Result<GaborBank> {
    if scales == 0 || orientations == 0 {
        return Err(Error::InvalidParameter("bank needs at least one scale and orientation".into()));
    }
    if kernel_size < 3 || kernel_size.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "kernel size must be odd and >= 3, got {kernel_size}"
        )));
    }
    let wavelengths: Vec<f64> = (0..scales)
        .map(|s| params.base_wavelength * params.wavelength_ratio.powi(s as i32))
        .collect();
    let mut kernels = Vec::with_capacity(scales * orientations);
    for &lambda in &wavelengths {
        for o in 0..orientations {
            let theta = o as f64 * PI / orientations as f64;
            kernels.push(gabor_kernel(kernel_size, lambda, theta, params.sigma_ratio * lambda));
        }
    }
    Ok(GaborBank {
        kernels,
        scales,
        orientations,
        kernel_size,
        wavelengths,
        sigma_ratio: params.sigma_ratio,
    })
}

/// Gaussian-enveloped complex exponential with its DC response removed: the
/// carrier is offset by the envelope-weighted mean so the real part sums to 0.
pub fn gabor_kernel(size: usize, wavelength: f64, theta: f64, sigma: f64) -> GaborKernel {
    let h = (size / 2) as isize;
    let (s, c) = theta.sin_cos();
    let n = size * size;
    let mut env = Vec::with_capacity(n);
    let mut phase = Vec::with_capacity(n);
    for v in -h..=h {
        for u in -h..=h {
            let (x, y) = (u as f64, v as f64);
            let along = x * c + y * s;
            env.push((-(x * x + y * y) / (2.0 * sigma * sigma)).exp());
            phase.push(2.0 * PI * along / wavelength);
        }
    }
    let env_sum: f64 = env.iter().sum();
    let dc_re: f64 = env.iter().zip(&phase).map(|(e, p)| e * p.cos()).sum::<f64>() / env_sum;
    let dc_im: f64 = env.iter().zip(&phase).map(|(e, p)| e * p.sin()).sum::<f64>() / env_sum;
    let re = env.iter().zip(&phase).map(|(e, p)| e * (p.cos() - dc_re)).collect();
    let im = env.iter().zip(&phase).map(|(e, p)| e * (p.sin() - dc_im)).collect();
    GaborKernel {
        size,
        wavelength,
        theta,
        sigma,
        re,
        im,
    }
}

/// Complex response magnitude of `kernel` convolved with `frame` at pixel (x, y),
/// with mirrored borders.
pub fn response_at(frame: &GrayImage, kernel: &GaborKernel, x: usize, y: usize) -> f64 {
    let h = (kernel.size / 2) as isize;
    let (mut re, mut im) = (0.0, 0.0);
    let mut idx = 0;
    for v in -h..=h {
        for u in -h..=h {
            let p = frame.get_reflect(x as isize - u, y as isize - v);
            re += kernel.re[idx] * p;
            im += kernel.im[idx] * p;
            idx += 1;
        }
    }
    re.hypot(im)
}

/// Full-resolution magnitude map of one kernel.
pub fn response_map(frame: &GrayImage, kernel: &GaborKernel) -> Result<GrayImage> {
    check_frame(frame, kernel.size)?;
    let mut out = GrayImage::filled(frame.width(), frame.height(), 0.0);
    for y in 0..frame.height() {
        for x in 0..frame.width() {
            out.set(x, y, response_at(frame, kernel, x, y));
        }
    }
    Ok(out)
}

fn check_frame(frame: &GrayImage, kernel_size: usize) -> Result<()> {
    if frame.width() < kernel_size || frame.height() < kernel_size {
        return Err(Error::ImageTooSmall(format!(
            "{}x{} frame for {kernel_size}px kernel",
            frame.width(),
            frame.height()
        )));
    }
    Ok(())
}

/// Sample positions along an axis of length `n`: `step/2, step/2 + step, …`.
pub fn grid_positions(n: usize, step: usize) -> Vec<usize> {
    let step = step.max(1);
    let pos: Vec<usize> = (step / 2..n).step_by(step).collect();
    if pos.is_empty() {
        vec![n / 2]
    } else {
        pos
    }
}

/// Per-frame descriptor: magnitudes of every kernel on a regular sub-grid,
/// concatenated kernel-major (all grid points of kernel 0, then kernel 1, …).
pub fn convolve_frame(frame: &GrayImage, bank: &GaborBank, grid_step: usize) -> Result<Vec<f64>> {
    check_frame(frame, bank.kernel_size)?;
    let xs = grid_positions(frame.width(), grid_step);
    let ys = grid_positions(frame.height(), grid_step);
    let mut out = Vec::with_capacity(bank.len() * xs.len() * ys.len());
    for k in &bank.kernels {
        for &y in &ys {
            for &x in &xs {
                out.push(response_at(frame, k, x, y));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureSource {
    Appearance,
    Geometric,
}

/// Per-sequence feature matrix: one column per frame (or per displaced frame).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub values: DMatrix<f64>,
    pub source: FeatureSource,
}

impl FeatureMatrix {
    pub fn new(values: DMatrix<f64>, source: FeatureSource) -> Result<Self> {
        if values.ncols() == 0 {
            return Err(Error::Empty("feature matrix columns"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite feature value".into()));
        }
        Ok(FeatureMatrix { values, source })
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }

    /// Keep the first `n` columns.
    pub fn truncate_cols(&self, n: usize) -> Result<FeatureMatrix> {
        if n == 0 || n > self.cols() {
            return Err(Error::InvalidParameter(format!("cannot keep {n} of {} columns", self.cols())));
        }
        Ok(FeatureMatrix {
            values: self.values.columns(0, n).into_owned(),
            source: self.source,
        })
    }

    /// Linear-in-time resampling to exactly `n` columns spanning first to last.
    pub fn resample_cols(&self, n: usize) -> FeatureMatrix {
        let src = self.cols();
        let mut out = DMatrix::zeros(self.rows(), n);
        for j in 0..n {
            let t = if n == 1 || src == 1 {
                (src - 1) as f64
            } else {
                j as f64 * (src - 1) as f64 / (n - 1) as f64
            };
            let lo = t.floor() as usize;
            let hi = (lo + 1).min(src - 1);
            let f = t - lo as f64;
            for i in 0..self.rows() {
                out[(i, j)] = self.values[(i, lo)] * (1.0 - f) + self.values[(i, hi)] * f;
            }
        }
        FeatureMatrix {
            values: out,
            source: self.source,
        }
    }
}

pub fn sequence_appearance_features(
    frames: &[GrayImage],
    bank: &GaborBank,
    grid_step: usize,
) -> Result<FeatureMatrix> {
    let first = frames.first().ok_or(Error::Empty("frame list"))?;
    let (w, h) = (first.width(), first.height());
    let mut cols = Vec::with_capacity(frames.len());
    for f in frames {
        if f.width() != w || f.height() != h {
            return Err(Error::DimensionMismatch {
                expected: w * h,
                got: f.width() * f.height(),
            });
        }
        cols.push(convolve_frame(f, bank, grid_step)?);
    }
    let rows = cols[0].len();
    let values = DMatrix::from_fn(rows, cols.len(), |i, j| cols[j][i]);
    FeatureMatrix::new(values, FeatureSource::Appearance)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grating(w: usize, h: usize, wavelength: f64, theta: f64) -> GrayImage {
        let (s, c) = theta.sin_cos();
        GrayImage::from_fn(w, h, |x, y| {
            100.0 + 50.0 * (2.0 * PI * (x as f64 * c + y as f64 * s) / wavelength).cos()
        })
    }

    fn texture(w: usize, h: usize) -> GrayImage {
        GrayImage::from_fn(w, h, |x, y| {
            let (x, y) = (x as f64, y as f64);
            80.0 + 30.0 * (0.37 * x + 0.11 * y).sin() + 20.0 * (0.05 * x - 0.41 * y).cos() + 10.0 * (0.9 * x * 0.3 + 0.2 * y).sin()
        })
    }

    #[test]
    fn default_bank_has_sixteen_kernels() {
        let bank = make_bank(4, 4, 17).unwrap();
        assert_eq!(bank.len(), 16);
        assert_eq!(bank.wavelengths.len(), 4);
        assert!((bank.wavelengths[1] / bank.wavelengths[0] - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn single_kernel_bank() {
        let bank = make_bank(1, 1, 5).unwrap();
        assert_eq!(bank.len(), 1);
        assert_eq!(bank.kernels[0].theta, 0.0);
    }

    #[test]
    fn even_kernel_size_rejected() {
        assert!(make_bank(1, 1, 4).is_err());
        assert!(make_bank(1, 1, 1).is_err());
    }

    #[test]
    fn kernels_are_dc_free() {
        for size in [3, 9, 17, 31] {
            let bank = make_bank(4, 4, size).unwrap();
            for k in &bank.kernels {
                let sum: f64 = k.re.iter().sum();
                assert!(sum.abs() <= 1e-10 * k.l1_norm(), "size {size}: {sum}");
            }
        }
    }

    #[test]
    fn constant_frame_has_near_zero_descriptor() {
        let bank = make_bank(4, 4, 11).unwrap();
        let frame = GrayImage::filled(24, 20, 200.0);
        let d = convolve_frame(&frame, &bank, 8).unwrap();
        assert!(d.iter().all(|&v| v <= 1e-8 * 200.0));
    }

    #[test]
    fn impulse_response_is_centre_magnitude() {
        let bank = make_bank(2, 3, 9).unwrap();
        let mut frame = GrayImage::filled(21, 21, 0.0);
        frame.set(10, 10, 1.0);
        for k in &bank.kernels {
            let (re, im) = k.at(0, 0);
            let r = response_at(&frame, k, 10, 10);
            assert!((r - re.hypot(im)).abs() < 1e-14);
        }
    }

    #[test]
    fn grating_selects_matching_orientation() {
        let bank = make_bank(4, 4, 17).unwrap();
        for s in 0..4 {
            for o in 0..4 {
                let k = bank.kernel(s, o);
                let img = grating(48, 48, k.wavelength, k.theta);
                let desc = convolve_frame(&img, &bank, 8).unwrap();
                let per_kernel = desc.len() / bank.len();
                let mean = |idx: usize| desc[idx * per_kernel..(idx + 1) * per_kernel].iter().sum::<f64>() / per_kernel as f64;
                let own = mean(s * 4 + o);
                for other in (0..4).filter(|&x| x != o) {
                    assert!(own > mean(s * 4 + other), "scale {s} orientation {o} vs {other}");
                }
            }
        }
    }

    #[test]
    fn offset_and_scale_behaviour() {
        let bank = make_bank(4, 4, 11).unwrap();
        let img = texture(32, 32);
        let base = convolve_frame(&img, &bank, 6).unwrap();
        let shifted = convolve_frame(&img.map(|v| v + 37.0), &bank, 6).unwrap();
        let scaled = convolve_frame(&img.map(|v| v * 2.5), &bank, 6).unwrap();
        let norm: f64 = base.iter().map(|v| v * v).sum::<f64>().sqrt();
        let diff: f64 = base.iter().zip(&shifted).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(diff <= 1e-8 * norm);
        for (a, b) in base.iter().zip(&scaled) {
            assert!((a * 2.5 - b).abs() <= 1e-8 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn frame_smaller_than_kernel_rejected() {
        let bank = make_bank(1, 2, 9).unwrap();
        assert!(matches!(
            convolve_frame(&GrayImage::filled(8, 20, 1.0), &bank, 4),
            Err(Error::ImageTooSmall(_))
        ));
    }

    #[test]
    fn sequence_columns_match_per_frame_descriptors() {
        let bank = make_bank(2, 4, 9).unwrap();
        let frames: Vec<_> = (0..3).map(|i| texture(20, 18).map(|v| v * (1.0 + 0.1 * i as f64) + i as f64)).collect();
        let fm = sequence_appearance_features(&frames, &bank, 5).unwrap();
        assert_eq!(fm.cols(), 3);
        for (j, f) in frames.iter().enumerate() {
            // independent per-frame evaluation through the full response map
            let xs = grid_positions(20, 5);
            let ys = grid_positions(18, 5);
            let mut i = 0;
            for k in &bank.kernels {
                let map = response_map(f, k).unwrap();
                for &y in &ys {
                    for &x in &xs {
                        assert!((fm.values[(i, j)] - map.get(x, y)).abs() < 1e-12);
                        i += 1;
                    }
                }
            }
        }
    }

    #[test]
    fn single_and_repeated_frames() {
        let bank = make_bank(1, 2, 5).unwrap();
        let f = texture(12, 12);
        let one = sequence_appearance_features(std::slice::from_ref(&f), &bank, 4).unwrap();
        assert_eq!(one.values.column(0).iter().cloned().collect::<Vec<_>>(), convolve_frame(&f, &bank, 4).unwrap());
        let five = sequence_appearance_features(&vec![f; 5], &bank, 4).unwrap();
        for j in 1..5 {
            assert_eq!(five.values.column(j), five.values.column(0));
        }
    }

    #[test]
    fn inconsistent_frame_sizes_rejected() {
        let bank = make_bank(1, 1, 3).unwrap();
        let frames = vec![GrayImage::filled(8, 8, 0.0), GrayImage::filled(9, 8, 0.0)];
        assert!(sequence_appearance_features(&frames, &bank, 2).is_err());
    }

    #[test]
    fn resample_endpoints() {
        let fm = FeatureMatrix::new(DMatrix::from_row_slice(1, 3, &[0.0, 1.0, 4.0]), FeatureSource::Geometric).unwrap();
        let r = fm.resample_cols(5);
        assert_eq!(r.values.as_slice(), &[0.0, 0.5, 1.0, 2.5, 4.0]);
        let single = FeatureMatrix::new(DMatrix::from_row_slice(1, 1, &[2.0]), FeatureSource::Geometric).unwrap();
        assert_eq!(single.resample_cols(3).values.as_slice(), &[2.0, 2.0, 2.0]);
    }
}
