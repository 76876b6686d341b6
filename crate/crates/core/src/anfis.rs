//! Takagi-Sugeno fuzzy inference over a grid partition, trained by hybrid
//! learning: a least-squares solve for the linear consequents followed by a
//! gradient step on the Gaussian premise parameters.
//!
//! Rule `i` of a model with partition counts `(d₁ … d_k)` combines one
//! membership function per input. Rules are enumerated lexicographically
//! with the last input varying fastest, and membership functions are shared
//! by every rule that uses them.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianMf {
    pub center: f64,
    pub sigma: f64,
}

impl GaussianMf {
    #[inline]
    pub fn log_eval(&self, x: f64) -> f64 {
        let z = (x - self.center) / self.sigma;
        -0.5 * z * z
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.log_eval(x).exp()
    }
}

/// One rule: a premise membership per input and `p₀ … p_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TsRule {
    pub premise: Vec<GaussianMf>,
    pub consequent: Vec<f64>,
}

impl TsRule {
    /// `p₀ + Σ p_j x_j`
    pub fn output(&self, x: &[f64]) -> f64 {
        self.consequent[0] + self.consequent[1..].iter().zip(x).map(|(p, v)| p * v).sum::<f64>()
    }
}

/// A feature vector with its intensity target.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledVector {
    pub x: Vec<f64>,
    pub target: f64,
}

impl LabeledVector {
    pub fn new(x: Vec<f64>, target: f64) -> Self {
        LabeledVector { x, target }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsModel {
    partition_counts: Vec<usize>,
    /// `mfs[j]` holds the `d_j` membership functions of input `j`.
    mfs: Vec<Vec<GaussianMf>>,
    /// Row `i` is the consequent `p₀ … p_k` of rule `i`.
    consequents: DMatrix<f64>,
    input_ranges: Vec<(f64, f64)>,
}

impl TsModel {
    pub fn new(
        partition_counts: Vec<usize>,
        mfs: Vec<Vec<GaussianMf>>,
        consequents: DMatrix<f64>,
        input_ranges: Vec<(f64, f64)>,
    ) -> Result<Self> {
        let k = partition_counts.len();
        if k == 0 {
            return Err(Error::InvalidParameter("model needs at least one input".into()));
        }
        if mfs.len() != k || input_ranges.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: mfs.len().min(input_ranges.len()),
            });
        }
        for (d, m) in partition_counts.iter().zip(&mfs) {
            if *d == 0 || m.len() != *d {
                return Err(Error::InvalidParameter("partition count / membership mismatch".into()));
            }
            if m.iter().any(|mf| !(mf.sigma > 0.0) || !mf.center.is_finite()) {
                return Err(Error::InvalidParameter("membership sigma must be positive".into()));
            }
        }
        let n: usize = partition_counts.iter().product();
        if consequents.shape() != (n, k + 1) {
            return Err(Error::DimensionMismatch {
                expected: n * (k + 1),
                got: consequents.len(),
            });
        }
        Ok(TsModel {
            partition_counts,
            mfs,
            consequents,
            input_ranges,
        })
    }

    /// Evenly spaced memberships over each input range with zero consequents.
    ///
    /// For `d` divisions of `[a, b]` the centres sit at `a + (b−a)(i−½)/d` and
    /// every width is `1.2 · (b−a)/(2d)`.
    pub fn initialize(partition_counts: &[usize], input_ranges: &[(f64, f64)]) -> Result<Self> {
        if partition_counts.len() != input_ranges.len() {
            return Err(Error::DimensionMismatch {
                expected: partition_counts.len(),
                got: input_ranges.len(),
            });
        }
        let mfs = partition_counts
            .iter()
            .zip(input_ranges)
            .map(|(&d, &(a, b))| {
                let span = range_span(a, b);
                (0..d)
                    .map(|i| GaussianMf {
                        center: a + span * (i as f64 + 0.5) / d as f64,
                        sigma: span / (2.0 * d as f64) * 1.2,
                    })
                    .collect()
            })
            .collect();
        let n: usize = partition_counts.iter().product();
        TsModel::new(
            partition_counts.to_vec(),
            mfs,
            DMatrix::zeros(n, partition_counts.len() + 1),
            input_ranges.to_vec(),
        )
    }

    pub fn k(&self) -> usize {
        self.partition_counts.len()
    }

    pub fn n_rules(&self) -> usize {
        self.consequents.nrows()
    }

    pub fn partition_counts(&self) -> &[usize] {
        &self.partition_counts
    }

    pub fn memberships(&self) -> &[Vec<GaussianMf>] {
        &self.mfs
    }

    pub fn consequents(&self) -> &DMatrix<f64> {
        &self.consequents
    }

    pub fn input_ranges(&self) -> &[(f64, f64)] {
        &self.input_ranges
    }

    pub fn with_consequents(&self, consequents: DMatrix<f64>) -> Result<TsModel> {
        TsModel::new(
            self.partition_counts.clone(),
            self.mfs.clone(),
            consequents,
            self.input_ranges.clone(),
        )
    }

    pub fn with_memberships(&self, mfs: Vec<Vec<GaussianMf>>) -> Result<TsModel> {
        TsModel::new(
            self.partition_counts.clone(),
            mfs,
            self.consequents.clone(),
            self.input_ranges.clone(),
        )
    }

    /// Membership index per input for rule `i`.
    pub fn rule_indices(&self, mut i: usize) -> Vec<usize> {
        let mut idx = vec![0; self.k()];
        for j in (0..self.k()).rev() {
            idx[j] = i % self.partition_counts[j];
            i /= self.partition_counts[j];
        }
        idx
    }

    pub fn rule(&self, i: usize) -> TsRule {
        let idx = self.rule_indices(i);
        TsRule {
            premise: idx.iter().enumerate().map(|(j, &m)| self.mfs[j][m]).collect(),
            consequent: self.consequents.row(i).iter().cloned().collect(),
        }
    }

    pub fn rules(&self) -> impl Iterator<Item = TsRule> + '_ {
        (0..self.n_rules()).map(move |i| self.rule(i))
    }

    /// Lower bound on any membership width for input `j`.
    pub fn sigma_floor(&self, j: usize) -> f64 {
        let (a, b) = self.input_ranges[j];
        1e-6 * range_span(a, b)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.k() {
            return Err(Error::DimensionMismatch {
                expected: self.k(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Max-renormalised firing strengths `w_i / max w`, written into `out`.
    fn relative_weights(&self, x: &[f64], out: &mut [f64]) {
        let log_mf: Vec<Vec<f64>> = self
            .mfs
            .iter()
            .zip(x)
            .map(|(ms, &v)| ms.iter().map(|m| m.log_eval(v)).collect())
            .collect();
        let mut idx = vec![0usize; self.k()];
        let mut max = f64::NEG_INFINITY;
        for o in out.iter_mut() {
            let lw: f64 = idx.iter().enumerate().map(|(j, &m)| log_mf[j][m]).sum();
            *o = lw;
            max = max.max(lw);
            self.advance(&mut idx);
        }
        for o in out.iter_mut() {
            *o = (*o - max).exp();
        }
    }

    #[inline]
    fn advance(&self, idx: &mut [usize]) {
        for j in (0..idx.len()).rev() {
            idx[j] += 1;
            if idx[j] < self.partition_counts[j] {
                return;
            }
            idx[j] = 0;
        }
    }

    #[inline]
    fn rule_output(&self, i: usize, x: &[f64]) -> f64 {
        let row = self.consequents.row(i);
        row[0] + x.iter().enumerate().map(|(j, v)| row[j + 1] * v).sum::<f64>()
    }

    /// Normalised firing strengths `w̄_i` and rule outputs `y_i` at `x`.
    fn normalized(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut w = vec![0.0; self.n_rules()];
        self.relative_weights(x, &mut w);
        let s: f64 = w.iter().sum();
        for v in &mut w {
            *v /= s;
        }
        let y = (0..self.n_rules()).map(|i| self.rule_output(i, x)).collect();
        (w, y)
    }

    /// Model output without the per-rule breakdown.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        let (w, y) = self.normalized(x);
        Ok(w.iter().zip(&y).map(|(a, b)| a * b).sum())
    }
}

fn range_span(a: f64, b: f64) -> f64 {
    let s = b - a;
    if s > 0.0 && s.is_finite() {
        s
    } else {
        1.0
    }
}

/// Product t-norm of the rule's Gaussian memberships at `x`.
pub fn rule_firing(rule: &TsRule, x: &[f64]) -> f64 {
    rule.premise.iter().zip(x).map(|(m, &v)| m.eval(v)).product()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub y: f64,
    /// `(w_i, y_i)` per rule in grid order; `w_i` is the raw product of memberships.
    pub per_rule: Vec<(f64, f64)>,
}

/// Weighted average of rule outputs. The average itself is computed from
/// max-renormalised weights so it stays defined when every raw weight underflows.
pub fn infer(model: &TsModel, x: &[f64]) -> Result<Inference> {
    model.check_input(x)?;
    let (w, y_rule) = model.normalized(x);
    let y = w.iter().zip(&y_rule).map(|(a, b)| a * b).sum();
    let per_rule = (0..model.n_rules())
        .map(|i| {
            let idx = model.rule_indices(i);
            let raw: f64 = idx.iter().enumerate().map(|(j, &m)| model.mfs[j][m].eval(x[j])).product();
            (raw, y_rule[i])
        })
        .collect();
    Ok(Inference { y, per_rule })
}

/// Mean squared error over `data`.
pub fn mse(model: &TsModel, data: &[LabeledVector]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let mut s = 0.0;
    for d in data {
        let e = model.predict(&d.x)? - d.target;
        s += e * e;
    }
    Ok(s / data.len() as f64)
}

fn check_data(model: &TsModel, data: &[LabeledVector]) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    for d in data {
        model.check_input(&d.x)?;
    }
    Ok(())
}

/// Least-squares consequents with the premises held fixed.
///
/// Solves `min ‖Aθ − t‖² + ridge·‖θ − θ₀‖²` where row `p` of `A` is
/// `[w̄_i, w̄_i x₁, …, w̄_i x_k]` over all rules and `θ₀` are the model's
/// current consequents. Anchoring the ridge at `θ₀` means the training MSE
/// can never increase, and a freshly initialised model (θ₀ = 0) gets plain
/// ridge regression.
pub fn lse_consequents(model: &TsModel, data: &[LabeledVector], ridge: f64) -> Result<TsModel> {
    check_data(model, data)?;
    let n = model.n_rules();
    let k1 = model.k() + 1;
    let m = n * k1;
    let mut a = DMatrix::zeros(data.len(), m);
    let mut t = DVector::zeros(data.len());
    for (p, d) in data.iter().enumerate() {
        let (w, _) = model.normalized(&d.x);
        for (i, wi) in w.iter().enumerate() {
            a[(p, i * k1)] = *wi;
            for j in 0..model.k() {
                a[(p, i * k1 + j + 1)] = wi * d.x[j];
            }
        }
        t[p] = d.target;
    }
    let theta0 = DVector::from_iterator(m, model.consequents.transpose().iter().cloned());
    let mut normal = a.tr_mul(&a);
    let mut rhs = a.tr_mul(&t);
    for i in 0..m {
        normal[(i, i)] += ridge;
    }
    rhs += &theta0 * ridge;
    let theta = match Cholesky::new(normal.clone()) {
        Some(ch) => ch.solve(&rhs),
        None => normal
            .svd(true, true)
            .solve(&rhs, 1e-14)
            .map_err(|e| Error::InvalidParameter(e.to_string()))?,
    };
    let cons = DMatrix::from_row_slice(n, k1, theta.as_slice());
    model.with_consequents(cons)
}

/// ∂MSE/∂centre and ∂MSE/∂σ for every shared membership function.
#[derive(Debug, Clone, PartialEq)]
pub struct PremiseGradient {
    pub centers: Vec<Vec<f64>>,
    pub sigmas: Vec<Vec<f64>>,
}

impl PremiseGradient {
    pub fn max_abs(&self) -> f64 {
        self.centers
            .iter()
            .chain(&self.sigmas)
            .flatten()
            .fold(0.0f64, |a, &b| a.max(b.abs()))
    }
}

/// Exact gradient of `(1/P) Σ (y − t)²` with respect to the premises.
///
/// With `w̄_i` the normalised firing strength, `∂y/∂θ = Σ_i w̄_i (y_i − y) ∂ln w_i/∂θ`,
/// and `∂ln w_i/∂c = (x−c)/σ²`, `∂ln w_i/∂σ = (x−c)²/σ³` for the membership
/// of rule `i` on that input.
pub fn premise_gradient(model: &TsModel, data: &[LabeledVector]) -> Result<PremiseGradient> {
    check_data(model, data)?;
    let mut gc: Vec<Vec<f64>> = model.mfs.iter().map(|m| vec![0.0; m.len()]).collect();
    let mut gs = gc.clone();
    let scale = 2.0 / data.len() as f64;
    let mut idx = vec![0usize; model.k()];
    for d in data {
        let (w, yr) = model.normalized(&d.x);
        let y: f64 = w.iter().zip(&yr).map(|(a, b)| a * b).sum();
        let coef = scale * (y - d.target);
        if coef == 0.0 {
            continue;
        }
        idx.iter_mut().for_each(|v| *v = 0);
        for i in 0..model.n_rules() {
            let f = coef * w[i] * (yr[i] - y);
            for (j, &mi) in idx.iter().enumerate() {
                let mf = model.mfs[j][mi];
                let dx = d.x[j] - mf.center;
                let s2 = mf.sigma * mf.sigma;
                gc[j][mi] += f * dx / s2;
                gs[j][mi] += f * dx * dx / (s2 * mf.sigma);
            }
            model.advance(&mut idx);
        }
    }
    Ok(PremiseGradient {
        centers: gc,
        sigmas: gs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HybridConfig {
    /// Length of each premise step in range-normalised input units.
    pub lr: f64,
    pub ridge: f64,
}

impl Default for HybridConfig {
    fn default() -> Self {
        HybridConfig { lr: 0.01, ridge: 1e-8 }
    }
}

/// Gradient norms below this (in range-normalised units) produce no step.
pub const MIN_STEP_GRADIENT: f64 = 1e-10;

/// Apply one premise gradient step of fixed length.
///
/// Parameters are expressed in coordinates normalised by each input's range
/// (`u = θ / span_j`). The step moves the whole premise vector by exactly
/// `lr` in those coordinates along the negative gradient, i.e.
/// `Δu = −lr · g_u / ‖g_u‖` with `g_u = span_j · ∂MSE/∂θ`. Widths are clamped
/// to the model's floor afterwards.
pub fn premise_step(model: &TsModel, grad: &PremiseGradient, lr: f64) -> Result<TsModel> {
    let spans: Vec<f64> = model.input_ranges.iter().map(|&(a, b)| range_span(a, b)).collect();
    let mut norm2 = 0.0;
    for (j, span) in spans.iter().enumerate() {
        for v in grad.centers[j].iter().chain(&grad.sigmas[j]) {
            norm2 += (v * span).powi(2);
        }
    }
    let norm = norm2.sqrt();
    if !(norm > MIN_STEP_GRADIENT) || lr == 0.0 {
        return Ok(model.clone());
    }
    let mut mfs = model.mfs.clone();
    for (j, ms) in mfs.iter_mut().enumerate() {
        let step = lr * spans[j] * spans[j] / norm;
        let floor = model.sigma_floor(j);
        for (m, mf) in ms.iter_mut().enumerate() {
            mf.center -= step * grad.centers[j][m];
            mf.sigma = (mf.sigma - step * grad.sigmas[j][m]).max(floor);
        }
    }
    model.with_memberships(mfs)
}

/// Forward LSE consequent solve, then one backward premise step.
/// Returns the updated model and its training MSE.
pub fn hybrid_epoch(model: &TsModel, data: &[LabeledVector], lr: f64, ridge: f64) -> Result<(TsModel, f64)> {
    if !(lr >= 0.0) {
        return Err(Error::InvalidParameter(format!("learning rate must be >= 0, got {lr}")));
    }
    let fitted = lse_consequents(model, data, ridge)?;
    let next = if lr > 0.0 {
        let g = premise_gradient(&fitted, data)?;
        premise_step(&fitted, &g, lr)?
    } else {
        fitted
    };
    let err = mse(&next, data)?;
    Ok((next, err))
}

/// `epochs` hybrid epochs followed by a closing consequent solve so the
/// returned consequents are optimal for the returned premises.
pub fn train_hybrid(
    model: &TsModel,
    data: &[LabeledVector],
    epochs: usize,
    cfg: &HybridConfig,
) -> Result<(TsModel, f64)> {
    let mut m = model.clone();
    for _ in 0..epochs {
        m = hybrid_epoch(&m, data, cfg.lr, cfg.ridge)?.0;
    }
    let m = lse_consequents(&m, data, cfg.ridge)?;
    let e = mse(&m, data)?;
    Ok((m, e))
}

/// Per-input (min, max) of a dataset.
pub fn observed_ranges(data: &[LabeledVector]) -> Result<Vec<(f64, f64)>> {
    let first = data.first().ok_or(Error::Empty("dataset"))?;
    let mut r: Vec<(f64, f64)> = first.x.iter().map(|&v| (v, v)).collect();
    for d in data {
        if d.x.len() != r.len() {
            return Err(Error::DimensionMismatch {
                expected: r.len(),
                got: d.x.len(),
            });
        }
        for (rr, &v) in r.iter_mut().zip(&d.x) {
            rr.0 = rr.0.min(v);
            rr.1 = rr.1.max(v);
        }
    }
    Ok(r)
}
