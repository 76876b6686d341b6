//! Three interactive views onto the `neurofacs` core for a static web page.
//!
//! The plain Rust functions do the work and report failures as strings so
//! they can be tested natively; the `#[wasm_bindgen]` wrappers only convert
//! errors into JavaScript exceptions.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use wasm_bindgen::prelude::*;

use neurofacs::anfis::{train_hybrid, HybridConfig, LabeledVector, TsModel};
use neurofacs::gabor::make_bank;
use neurofacs::reduce::{generalized_eig, pca_reduce, scatter_matrices};

/// Which component of a complex kernel to draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelPart {
    Real,
    Imaginary,
    Magnitude,
}

impl KernelPart {
    pub fn parse(s: &str) -> Result<Self, String> {
        match s {
            "real" => Ok(KernelPart::Real),
            "imag" | "imaginary" => Ok(KernelPart::Imaginary),
            "magnitude" | "abs" => Ok(KernelPart::Magnitude),
            _ => Err(format!("unknown kernel part {s:?}")),
        }
    }
}

/// Kernel `(scale, orientation)` of a 4×4 bank as `size×size` RGBA pixels.
/// Signed parts use a diverging map (red positive, blue negative, white 0)
/// scaled by the largest absolute value.
pub fn kernel_rgba(scale: usize, orientation: usize, size: usize, part: KernelPart) -> Result<Vec<u8>, String> {
    let bank = make_bank(4, 4, size).map_err(|e| e.to_string())?;
    if scale >= bank.scales || orientation >= bank.orientations {
        return Err(format!("kernel ({scale}, {orientation}) is outside the 4x4 bank"));
    }
    let k = &bank.kernels[scale * bank.orientations + orientation];
    let values: Vec<f64> = match part {
        KernelPart::Real => k.re.clone(),
        KernelPart::Imaginary => k.im.clone(),
        KernelPart::Magnitude => k.re.iter().zip(&k.im).map(|(r, i)| r.hypot(*i)).collect(),
    };
    let peak = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut out = Vec::with_capacity(values.len() * 4);
    for v in values {
        let t = if peak > 0.0 { v / peak } else { 0.0 };
        let fade = ((1.0 - t.abs()) * 255.0).round() as u8;
        let (r, g, b) = if t >= 0.0 { (255, fade, fade) } else { (fade, fade, 255) };
        out.extend_from_slice(&[r, g, b, 255]);
    }
    Ok(out)
}

/// The curve the fitting view learns.
pub fn target_curve(x: f64) -> f64 {
    (std::f64::consts::PI * x).sin() * (1.0 - 0.4 * x) + 0.3 * x
}

pub const CURVE_GRID: usize = 161;

#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct CurveFit {
    samples_x: Vec<f64>,
    samples_y: Vec<f64>,
    grid: Vec<f64>,
    truth: Vec<f64>,
    fitted: Vec<f64>,
    memberships: Vec<f64>,
    centers: Vec<f64>,
    train_mse: f64,
    grid_mse: f64,
}

#[wasm_bindgen]
impl CurveFit {
    #[wasm_bindgen(getter, js_name = samplesX)]
    pub fn samples_x(&self) -> Vec<f64> {
        self.samples_x.clone()
    }
    #[wasm_bindgen(getter, js_name = samplesY)]
    pub fn samples_y(&self) -> Vec<f64> {
        self.samples_y.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn grid(&self) -> Vec<f64> {
        self.grid.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn truth(&self) -> Vec<f64> {
        self.truth.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn fitted(&self) -> Vec<f64> {
        self.fitted.clone()
    }
    /// Membership grades, one grid-length row per fuzzy set.
    #[wasm_bindgen(getter)]
    pub fn memberships(&self) -> Vec<f64> {
        self.memberships.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn centers(&self) -> Vec<f64> {
        self.centers.clone()
    }
    #[wasm_bindgen(getter, js_name = trainMse)]
    pub fn train_mse(&self) -> f64 {
        self.train_mse
    }
    #[wasm_bindgen(getter, js_name = gridMse)]
    pub fn grid_mse(&self) -> f64 {
        self.grid_mse
    }
}

/// Fit a one-input Takagi-Sugeno system with `sets` Gaussian sets to noisy
/// samples of [`target_curve`] on [-1, 1] using hybrid learning.
pub fn fit_curve(sets: usize, epochs: usize, samples: usize, noise: f64, seed: u64) -> Result<CurveFit, String> {
    if sets == 0 || sets > 12 {
        return Err(format!("between 1 and 12 fuzzy sets, got {sets}"));
    }
    if samples < 2 * (sets + 1) {
        return Err(format!("{samples} samples cannot pin down {sets} linear rules"));
    }
    if !(noise >= 0.0) {
        return Err(format!("noise must be >= 0, got {noise}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gauss = Normal::new(0.0, noise.max(f64::MIN_POSITIVE)).map_err(|e| e.to_string())?;
    let data: Vec<LabeledVector> = (0..samples)
        .map(|_| {
            let x = rng.gen_range(-1.0..=1.0);
            let n = if noise > 0.0 { gauss.sample(&mut rng) } else { 0.0 };
            LabeledVector {
                x: vec![x],
                target: target_curve(x) + n,
            }
        })
        .collect();
    let init = TsModel::initialize(&[sets], &[(-1.0, 1.0)]).map_err(|e| e.to_string())?;
    let (model, train_mse) = train_hybrid(&init, &data, epochs, &HybridConfig::default()).map_err(|e| e.to_string())?;

    let grid: Vec<f64> = (0..CURVE_GRID)
        .map(|i| -1.0 + 2.0 * i as f64 / (CURVE_GRID - 1) as f64)
        .collect();
    let truth: Vec<f64> = grid.iter().map(|&x| target_curve(x)).collect();
    let fitted = grid
        .iter()
        .map(|&x| model.predict(&[x]))
        .collect::<Result<Vec<f64>, _>>()
        .map_err(|e| e.to_string())?;
    let grid_mse = fitted.iter().zip(&truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / CURVE_GRID as f64;
    let mfs = &model.memberships()[0];
    let memberships = mfs.iter().flat_map(|m| grid.iter().map(move |&x| m.eval(x))).collect();
    Ok(CurveFit {
        samples_x: data.iter().map(|d| d.x[0]).collect(),
        samples_y: data.iter().map(|d| d.target).collect(),
        grid,
        truth,
        fitted,
        memberships,
        centers: mfs.iter().map(|m| m.center).collect(),
        train_mse,
        grid_mse,
    })
}

#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct Projection {
    bda: Vec<f64>,
    pca: Vec<f64>,
    labels: Vec<u8>,
    eigenvalues: Vec<f64>,
    bda_spread: f64,
    pca_spread: f64,
}

#[wasm_bindgen]
impl Projection {
    /// Interleaved (x, y) per sample in the discriminant plane.
    #[wasm_bindgen(getter)]
    pub fn bda(&self) -> Vec<f64> {
        self.bda.clone()
    }
    /// The same samples in the top two principal directions.
    #[wasm_bindgen(getter)]
    pub fn pca(&self) -> Vec<f64> {
        self.pca.clone()
    }
    /// 1 for the positive class.
    #[wasm_bindgen(getter)]
    pub fn labels(&self) -> Vec<u8> {
        self.labels.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.eigenvalues.clone()
    }
    /// Mean squared distance of negatives to the positive centre over that of
    /// positives, measured in the plane.
    #[wasm_bindgen(getter, js_name = bdaSpread)]
    pub fn bda_spread(&self) -> f64 {
        self.bda_spread
    }
    #[wasm_bindgen(getter, js_name = pcaSpread)]
    pub fn pca_spread(&self) -> f64 {
        self.pca_spread
    }
}

pub const PROJECTION_DIM: usize = 5;

/// Sample a compact positive class and a ring of negatives around it in the
/// first two coordinates. The remaining coordinates carry shared nuisance
/// variance of standard deviation `nuisance`. Both classes are projected to
/// two dimensions with biased discriminant analysis and with PCA.
pub fn project(positives: usize, negatives: usize, nuisance: f64, seed: u64) -> Result<Projection, String> {
    if positives < 3 || negatives < 3 {
        return Err("each class needs at least 3 samples".into());
    }
    if !(nuisance > 0.0) {
        return Err(format!("nuisance spread must be > 0, got {nuisance}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).map_err(|e| e.to_string())?;
    let mut sample = |radius: f64, tight: f64| {
        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
        DVector::from_fn(PROJECTION_DIM, |i, _| {
            let n: f64 = unit.sample(&mut rng);
            match i {
                0 => radius * angle.cos() + tight * n,
                1 => radius * angle.sin() + tight * n,
                _ => nuisance * n,
            }
        })
    };
    let pos: Vec<DVector<f64>> = (0..positives).map(|_| sample(0.0, 0.4)).collect();
    let neg: Vec<DVector<f64>> = (0..negatives).map(|_| sample(2.5, 0.4)).collect();

    let pair = scatter_matrices(&pos, &neg).map_err(|e| e.to_string())?;
    let basis = generalized_eig(&pair, 2, pair.default_ridge()).map_err(|e| e.to_string())?;
    let all: Vec<DVector<f64>> = pos.iter().chain(&neg).cloned().collect();
    let (pca, _) = pca_reduce(&all, 2).map_err(|e| e.to_string())?;

    let flat = |m: &nalgebra::DMatrix<f64>| -> Vec<f64> {
        all.iter()
            .flat_map(|x| {
                let p = m.tr_mul(&(x - &pair.centroid));
                [p[0], p[1]]
            })
            .collect()
    };
    let bda = flat(&basis.w);
    let pca_xy = flat(&pca.basis);
    let labels: Vec<u8> = (0..all.len()).map(|i| u8::from(i < positives)).collect();
    Ok(Projection {
        bda_spread: spread_ratio(&bda, positives),
        pca_spread: spread_ratio(&pca_xy, positives),
        bda,
        pca: pca_xy,
        labels,
        eigenvalues: basis.eigenvalues.iter().copied().collect(),
    })
}

/// Distances are taken from the origin, which is the positive centroid.
fn spread_ratio(xy: &[f64], positives: usize) -> f64 {
    let sq: Vec<f64> = xy.chunks(2).map(|p| p[0] * p[0] + p[1] * p[1]).collect();
    let (p, n) = sq.split_at(positives);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    mean(n) / mean(p)
}

fn js(e: String) -> JsError {
    JsError::new(&e)
}

/// RGBA pixels of one bank kernel; `part` is "real", "imag" or "magnitude".
#[wasm_bindgen(js_name = gaborKernel)]
pub fn gabor_kernel_js(scale: usize, orientation: usize, size: usize, part: &str) -> Result<Vec<u8>, JsError> {
    kernel_rgba(scale, orientation, size, KernelPart::parse(part).map_err(js)?).map_err(js)
}

#[wasm_bindgen(js_name = fitCurve)]
pub fn fit_curve_js(sets: usize, epochs: usize, samples: usize, noise: f64, seed: u32) -> Result<CurveFit, JsError> {
    fit_curve(sets, epochs, samples, noise, u64::from(seed)).map_err(js)
}

#[wasm_bindgen(js_name = projectClasses)]
pub fn project_js(positives: usize, negatives: usize, nuisance: f64, seed: u32) -> Result<Projection, JsError> {
    project(positives, negatives, nuisance, u64::from(seed)).map_err(js)
}
