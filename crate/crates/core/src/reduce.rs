//! Scatter matrices, PCA/2DPCA and biased discriminant analysis (BDA/2DBDA).
//!
//! Biased discriminant analysis looks for a projection `w` that keeps the
//! positive class compact while pushing every negative away from the positive
//! centroid. It maximises `trace(wᵀ S_y w) / trace(wᵀ S_x w)`, which is solved
//! by the leading generalized eigenvectors of `S_y α = λ S_x α`.
//!
//! All projections are linear (no mean subtraction at projection time) so the
//! full reduction chain satisfies `reduce(aM₁ + bM₂) = a·reduce(M₁) + b·reduce(M₂)`.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::linalg::{fix_sign, flatten_row_major, numerical_rank, sorted_symmetric_eigen};
use crate::{Error, Result};

/// Relative eigenvalue cut-off used when counting the rank of a covariance.
pub const RANK_TOLERANCE: f64 = 1e-9;

/// Positive within-class scatter and negative scatter, both about the positive centroid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterPair {
    pub s_x: DMatrix<f64>,
    pub s_y: DMatrix<f64>,
    pub centroid: DVector<f64>,
}

impl ScatterPair {
    pub fn dim(&self) -> usize {
        self.centroid.len()
    }

    /// `1e-6 · trace(S_x) / d`, falling back to the negative scatter (and
    /// finally to an absolute floor) when the positives are all identical.
    pub fn default_ridge(&self) -> f64 {
        let d = self.dim().max(1) as f64;
        let tx = self.s_x.trace() / d;
        if tx > 0.0 {
            return 1e-6 * tx;
        }
        let ty = self.s_y.trace() / d;
        if ty > 0.0 {
            1e-6 * ty
        } else {
            1e-12
        }
    }
}

/// Learned linear reduction.
///
/// `w` (d×r) holds generalized eigenvectors ordered by descending eigenvalue.
/// A full sequence reducer additionally carries the 2D `left`/`right` bases
/// applied to the feature matrix and the intermediate 1D `pca` basis applied
/// to its row-major flattening before `w`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionBasis {
    pub w: DMatrix<f64>,
    pub eigenvalues: DVector<f64>,
    pub left: Option<DMatrix<f64>>,
    pub right: Option<DMatrix<f64>>,
    pub pca: Option<DMatrix<f64>>,
}

impl ProjectionBasis {
    pub fn r(&self) -> usize {
        self.w.ncols()
    }

    /// `wᵀ x`
    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        self.w.tr_mul(x)
    }

    /// Shape of the feature matrices this basis accepts, when it has 2D stages.
    pub fn input_shape(&self) -> Option<(usize, usize)> {
        match (&self.left, &self.right) {
            (Some(l), Some(r)) => Some((l.nrows(), r.nrows())),
            _ => None,
        }
    }
}

fn check_dims(vectors: &[DVector<f64>], d: usize) -> Result<()> {
    for v in vectors {
        if v.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: v.len(),
            });
        }
    }
    Ok(())
}

fn mean_vector(vectors: &[DVector<f64>]) -> DVector<f64> {
    let d = vectors[0].len();
    let mut m = DVector::zeros(d);
    for v in vectors {
        m += v;
    }
    m / vectors.len() as f64
}

fn outer_scatter(vectors: &[DVector<f64>], about: &DVector<f64>) -> DMatrix<f64> {
    let d = about.len();
    let mut s = DMatrix::zeros(d, d);
    for v in vectors {
        let dev = v - about;
        s.ger(1.0, &dev, &dev, 1.0);
    }
    s
}

pub fn scatter_matrices(
    positives: &[DVector<f64>],
    negatives: &[DVector<f64>],
) -> Result<ScatterPair> {
    if positives.is_empty() {
        return Err(Error::Empty("positive set"));
    }
    if negatives.is_empty() {
        return Err(Error::Empty("negative set"));
    }
    let d = positives[0].len();
    check_dims(positives, d)?;
    check_dims(negatives, d)?;
    let centroid = mean_vector(positives);
    Ok(ScatterPair {
        s_x: outer_scatter(positives, &centroid),
        s_y: outer_scatter(negatives, &centroid),
        centroid,
    })
}

/// Leading `r` solutions of `S_y α = λ (S_x + ridge·I) α`.
///
/// The regularised positive scatter is Cholesky-factored as `L Lᵀ`, the
/// problem is whitened to the symmetric `L⁻¹ S_y L⁻ᵀ`, and eigenvectors are
/// mapped back with `α = L⁻ᵀ v`. Returned columns have unit Euclidean norm
/// and a positive largest-magnitude component.
pub fn generalized_eig(pair: &ScatterPair, r: usize, ridge: f64) -> Result<ProjectionBasis> {
    let d = pair.dim();
    if r == 0 || r > d {
        return Err(Error::RankExceeded {
            requested: r,
            available: d,
        });
    }
    if !(ridge >= 0.0) {
        return Err(Error::InvalidParameter(format!("ridge must be >= 0, got {ridge}")));
    }
    let mut a = (&pair.s_x + pair.s_x.transpose()) * 0.5;
    for i in 0..d {
        a[(i, i)] += ridge;
    }
    let chol = Cholesky::new(a).ok_or(Error::NotPositiveDefinite { ridge })?;
    let l = chol.l();
    let diag_min = l.diagonal().iter().cloned().fold(f64::INFINITY, f64::min);
    let diag_max = l.diagonal().iter().cloned().fold(0.0f64, f64::max);
    if !(diag_min > 1e-150) || diag_min / diag_max < 1e-13 {
        return Err(Error::NotPositiveDefinite { ridge });
    }
    let sy = (&pair.s_y + pair.s_y.transpose()) * 0.5;
    // C = L⁻¹ S_y L⁻ᵀ
    let linv_sy = l
        .solve_lower_triangular(&sy)
        .ok_or(Error::NotPositiveDefinite { ridge })?;
    let c = l
        .solve_lower_triangular(&linv_sy.transpose())
        .ok_or(Error::NotPositiveDefinite { ridge })?;
    let (values, vectors) = sorted_symmetric_eigen(&c);
    let lt = l.transpose();
    let mut w = DMatrix::zeros(d, r);
    for k in 0..r {
        let v = vectors.column(k).into_owned();
        let mut alpha = lt
            .solve_upper_triangular(&v)
            .ok_or(Error::NotPositiveDefinite { ridge })?;
        let n = alpha.norm();
        if n > 0.0 {
            alpha /= n;
        }
        fix_sign(&mut alpha);
        w.set_column(k, &alpha);
    }
    Ok(ProjectionBasis {
        w,
        eigenvalues: values.rows(0, r).into_owned(),
        left: None,
        right: None,
        pca: None,
    })
}

/// Principal directions of a sample set.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaBasis {
    pub mean: DVector<f64>,
    /// d×r, orthonormal columns.
    pub basis: DMatrix<f64>,
    /// Retained covariance eigenvalues (population normalisation, 1/N).
    pub eigenvalues: DVector<f64>,
}

/// Covariance (1/N) of a sample set about its mean.
pub fn covariance(vectors: &[DVector<f64>]) -> Result<DMatrix<f64>> {
    if vectors.is_empty() {
        return Err(Error::Empty("sample set"));
    }
    check_dims(vectors, vectors[0].len())?;
    let m = mean_vector(vectors);
    Ok(outer_scatter(vectors, &m) / vectors.len() as f64)
}

/// Top-`r` principal directions. `projected` holds `basisᵀ x` for every input.
pub fn pca_reduce(vectors: &[DVector<f64>], r: usize) -> Result<(PcaBasis, Vec<DVector<f64>>)> {
    let cov = covariance(vectors)?;
    let (values, vectors_e) = sorted_symmetric_eigen(&cov);
    let rank = numerical_rank(&values, RANK_TOLERANCE);
    if r == 0 || r > rank {
        return Err(Error::RankExceeded {
            requested: r,
            available: rank,
        });
    }
    let basis = vectors_e.columns(0, r).into_owned();
    let projected = vectors.iter().map(|v| basis.tr_mul(v)).collect();
    Ok((
        PcaBasis {
            mean: mean_vector(vectors),
            basis,
            eigenvalues: values.rows(0, r).into_owned(),
        },
        projected,
    ))
}

/// Numerical rank of the sample covariance.
pub fn sample_rank(vectors: &[DVector<f64>]) -> Result<usize> {
    let cov = covariance(vectors)?;
    let (values, _) = sorted_symmetric_eigen(&cov);
    Ok(numerical_rank(&values, RANK_TOLERANCE))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReductionMode {
    Pca,
    Bda,
}

/// Left (a×r_rows) and right (b×r_cols) bases of a 2D reduction.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoDBasis {
    pub left: DMatrix<f64>,
    pub right: DMatrix<f64>,
}

impl TwoDBasis {
    pub fn apply(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        self.left.tr_mul(m) * &self.right
    }
}

fn mean_matrix(ms: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let mut acc = DMatrix::zeros(ms[0].nrows(), ms[0].ncols());
    for m in ms {
        acc += *m;
    }
    acc / ms.len() as f64
}

/// Σ (M−C)(M−C)ᵀ for `rows`, Σ (M−C)ᵀ(M−C) otherwise.
fn matrix_scatter(ms: &[&DMatrix<f64>], about: &DMatrix<f64>, rows: bool) -> DMatrix<f64> {
    let n = if rows { about.nrows() } else { about.ncols() };
    let mut s = DMatrix::zeros(n, n);
    for m in ms {
        let dev = *m - about;
        if rows {
            s.gemm(1.0, &dev, &dev.transpose(), 1.0);
        } else {
            s.gemm(1.0, &dev.transpose(), &dev, 1.0);
        }
    }
    s
}

fn direction_basis(
    pos: &[&DMatrix<f64>],
    neg: &[&DMatrix<f64>],
    all: &[&DMatrix<f64>],
    r: usize,
    rows: bool,
    mode: ReductionMode,
) -> Result<DMatrix<f64>> {
    match mode {
        ReductionMode::Pca => {
            let mean = mean_matrix(all);
            let s = matrix_scatter(all, &mean, rows);
            let (_, vecs) = sorted_symmetric_eigen(&s);
            Ok(vecs.columns(0, r).into_owned())
        }
        ReductionMode::Bda => {
            let centroid = mean_matrix(pos);
            let pair = ScatterPair {
                s_x: matrix_scatter(pos, &centroid, rows),
                s_y: matrix_scatter(neg, &centroid, rows),
                centroid: DVector::zeros(if rows { centroid.nrows() } else { centroid.ncols() }),
            };
            let ridge = pair.default_ridge();
            Ok(generalized_eig(&pair, r, ridge)?.w)
        }
    }
}

/// Reduce feature matrices along both directions in a single pass.
///
/// `labels[k]` marks `matrices[k]` as positive; labels are only consulted in
/// [`ReductionMode::Bda`].
pub fn two_d_reduce(
    matrices: &[DMatrix<f64>],
    labels: &[bool],
    r_rows: usize,
    r_cols: usize,
    mode: ReductionMode,
) -> Result<(TwoDBasis, Vec<DMatrix<f64>>)> {
    if matrices.is_empty() {
        return Err(Error::Empty("matrix set"));
    }
    if labels.len() != matrices.len() {
        return Err(Error::DimensionMismatch {
            expected: matrices.len(),
            got: labels.len(),
        });
    }
    let (a, b) = matrices[0].shape();
    for m in matrices {
        if m.shape() != (a, b) {
            return Err(Error::DimensionMismatch {
                expected: a * b,
                got: m.len(),
            });
        }
    }
    if r_rows == 0 || r_rows > a {
        return Err(Error::RankExceeded {
            requested: r_rows,
            available: a,
        });
    }
    if r_cols == 0 || r_cols > b {
        return Err(Error::RankExceeded {
            requested: r_cols,
            available: b,
        });
    }
    let all: Vec<&DMatrix<f64>> = matrices.iter().collect();
    let pos: Vec<&DMatrix<f64>> = matrices.iter().zip(labels).filter(|(_, &l)| l).map(|(m, _)| m).collect();
    let neg: Vec<&DMatrix<f64>> = matrices.iter().zip(labels).filter(|(_, &l)| !l).map(|(m, _)| m).collect();
    if mode == ReductionMode::Bda {
        if pos.is_empty() {
            return Err(Error::Empty("positive set"));
        }
        if neg.is_empty() {
            return Err(Error::Empty("negative set"));
        }
    }
    let basis = TwoDBasis {
        left: direction_basis(&pos, &neg, &all, r_rows, true, mode)?,
        right: direction_basis(&pos, &neg, &all, r_cols, false, mode)?,
    };
    let reduced = matrices.iter().map(|m| basis.apply(m)).collect();
    Ok((basis, reduced))
}

/// Target ranks for each stage of the reduction chain. Stages are clamped to
/// what the data supports, so these are upper bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainConfig {
    pub pca_rows: usize,
    pub pca_cols: usize,
    pub bda_rows: usize,
    pub bda_cols: usize,
    pub pca_dim: usize,
    pub out_dim: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            pca_rows: 12,
            pca_cols: 6,
            bda_rows: 8,
            bda_cols: 4,
            pca_dim: 16,
            out_dim: 6,
        }
    }
}

/// Fit the full chain 2DPCA → 2DBDA → flatten → PCA → BDA.
pub fn fit_chain(matrices: &[DMatrix<f64>], labels: &[bool], cfg: &ChainConfig) -> Result<ProjectionBasis> {
    if matrices.is_empty() {
        return Err(Error::Empty("matrix set"));
    }
    let (a, b) = matrices[0].shape();
    let (pca2d, stage1) = two_d_reduce(
        matrices,
        labels,
        cfg.pca_rows.min(a),
        cfg.pca_cols.min(b),
        ReductionMode::Pca,
    )?;
    let (p, q) = stage1[0].shape();
    let (bda2d, stage2) = two_d_reduce(
        &stage1,
        labels,
        cfg.bda_rows.min(p),
        cfg.bda_cols.min(q),
        ReductionMode::Bda,
    )?;
    let flat: Vec<DVector<f64>> = stage2.iter().map(flatten_row_major).collect();
    let rank = sample_rank(&flat)?;
    let pca_dim = cfg.pca_dim.min(rank).min(flat[0].len());
    if pca_dim == 0 {
        return Err(Error::RankExceeded {
            requested: cfg.pca_dim,
            available: 0,
        });
    }
    let (pca, projected) = pca_reduce(&flat, pca_dim)?;
    let pos: Vec<DVector<f64>> = projected.iter().zip(labels).filter(|(_, &l)| l).map(|(v, _)| v.clone()).collect();
    let neg: Vec<DVector<f64>> = projected.iter().zip(labels).filter(|(_, &l)| !l).map(|(v, _)| v.clone()).collect();
    let pair = scatter_matrices(&pos, &neg)?;
    let out_dim = cfg.out_dim.min(pca_dim);
    let bda = generalized_eig(&pair, out_dim, pair.default_ridge())?;
    Ok(ProjectionBasis {
        w: bda.w,
        eigenvalues: bda.eigenvalues,
        left: Some(&pca2d.left * &bda2d.left),
        right: Some(&pca2d.right * &bda2d.right),
        pca: Some(pca.basis),
    })
}

/// Apply a fitted chain to one feature matrix.
pub fn reduce_sequence_features(matrix: &DMatrix<f64>, bases: &ProjectionBasis) -> Result<DVector<f64>> {
    let mut flat = match (&bases.left, &bases.right) {
        (Some(l), Some(r)) => {
            if matrix.nrows() != l.nrows() || matrix.ncols() != r.nrows() {
                return Err(Error::DimensionMismatch {
                    expected: l.nrows() * r.nrows(),
                    got: matrix.len(),
                });
            }
            flatten_row_major(&(l.tr_mul(matrix) * r))
        }
        _ => flatten_row_major(matrix),
    };
    if let Some(p) = &bases.pca {
        if p.nrows() != flat.len() {
            return Err(Error::DimensionMismatch {
                expected: p.nrows(),
                got: flat.len(),
            });
        }
        flat = p.tr_mul(&flat);
    }
    if bases.w.nrows() != flat.len() {
        return Err(Error::DimensionMismatch {
            expected: bases.w.nrows(),
            got: flat.len(),
        });
    }
    Ok(bases.project(&flat))
}

/// `trace(wᵀ S_y w) / trace(wᵀ S_x w)`
pub fn bda_objective(pair: &ScatterPair, w: &DMatrix<f64>) -> f64 {
    let num = (w.transpose() * &pair.s_y * w).trace();
    let den = (w.transpose() * &pair.s_x * w).trace();
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_vecs(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<DVector<f64>> {
        (0..n)
            .map(|_| DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0)))
            .collect()
    }

    fn rand_mats(rng: &mut ChaCha8Rng, n: usize, a: usize, b: usize) -> Vec<DMatrix<f64>> {
        (0..n)
            .map(|_| DMatrix::from_fn(a, b, |_, _| rng.gen_range(-1.0..1.0)))
            .collect()
    }

    fn naive_matmul(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut c = DMatrix::zeros(a.nrows(), b.ncols());
        for i in 0..a.nrows() {
            for j in 0..b.ncols() {
                let mut s = 0.0;
                for k in 0..a.ncols() {
                    s += a[(i, k)] * b[(k, j)];
                }
                c[(i, j)] = s;
            }
        }
        c
    }

    #[test]
    fn identical_positives_give_zero_within_scatter() {
        let p = vec![DVector::from_vec(vec![1.0, 2.0, 3.0]); 4];
        let n = vec![DVector::from_vec(vec![0.0, 0.0, 0.0])];
        let pair = scatter_matrices(&p, &n).unwrap();
        assert_eq!(pair.s_x, DMatrix::zeros(3, 3));
    }

    #[test]
    fn unit_offset_negative_is_rank_one() {
        let p = vec![DVector::from_vec(vec![1.0, -1.0]), DVector::from_vec(vec![3.0, 1.0])];
        let n = vec![DVector::from_vec(vec![3.0, 0.0])];
        let pair = scatter_matrices(&p, &n).unwrap();
        assert_eq!(pair.s_y, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn scatter_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = rand_vecs(&mut rng, 5, 3);
        let n = rand_vecs(&mut rng, 5, 3);
        let pair = scatter_matrices(&p, &n).unwrap();
        let mut m = [0.0; 3];
        for v in &p {
            for i in 0..3 {
                m[i] += v[i] / 5.0;
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                let mut sx = 0.0;
                let mut sy = 0.0;
                for v in &p {
                    sx += (v[i] - m[i]) * (v[j] - m[j]);
                }
                for v in &n {
                    sy += (v[i] - m[i]) * (v[j] - m[j]);
                }
                assert!((pair.s_x[(i, j)] - sx).abs() < 1e-12);
                assert!((pair.s_y[(i, j)] - sy).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn scatter_errors() {
        let a = vec![DVector::from_vec(vec![1.0, 2.0])];
        let b = vec![DVector::from_vec(vec![1.0])];
        assert!(matches!(scatter_matrices(&a, &b), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(scatter_matrices(&[], &a), Err(Error::Empty(_))));
    }

    #[test]
    fn identity_metric_is_ordinary_eigensolve() {
        let sy = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 1.0]);
        let pair = ScatterPair {
            s_x: DMatrix::identity(3, 3),
            s_y: sy.clone(),
            centroid: DVector::zeros(3),
        };
        let basis = generalized_eig(&pair, 3, 0.0).unwrap();
        let (vals, _) = sorted_symmetric_eigen(&sy);
        for i in 0..3 {
            assert!((basis.eigenvalues[i] - vals[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_forms_have_unit_eigenvalues() {
        let a = DMatrix::from_row_slice(3, 3, &[5.0, 1.0, 0.2, 1.0, 4.0, 0.3, 0.2, 0.3, 2.0]);
        let pair = ScatterPair {
            s_x: a.clone(),
            s_y: a,
            centroid: DVector::zeros(3),
        };
        let basis = generalized_eig(&pair, 3, 0.0).unwrap();
        for v in basis.eigenvalues.iter() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn two_by_two_matches_quadratic_formula() {
        // det(B - λA) = 0 → (a00 a11 - a01²) λ² - (a00 b11 + a11 b00 - 2 a01 b01) λ + (b00 b11 - b01²) = 0
        let a: [[f64; 2]; 2] = [[2.0, 0.3], [0.3, 1.0]];
        let b: [[f64; 2]; 2] = [[1.0, 0.4], [0.4, 3.0]];
        let qa = a[0][0] * a[1][1] - a[0][1] * a[0][1];
        let qb = -(a[0][0] * b[1][1] + a[1][1] * b[0][0] - 2.0 * a[0][1] * b[0][1]);
        let qc = b[0][0] * b[1][1] - b[0][1] * b[0][1];
        let disc = (qb * qb - 4.0 * qa * qc).sqrt();
        let hi = (-qb + disc) / (2.0 * qa);
        let lo = (-qb - disc) / (2.0 * qa);
        let pair = ScatterPair {
            s_x: DMatrix::from_row_slice(2, 2, &[a[0][0], a[0][1], a[1][0], a[1][1]]),
            s_y: DMatrix::from_row_slice(2, 2, &[b[0][0], b[0][1], b[1][0], b[1][1]]),
            centroid: DVector::zeros(2),
        };
        let basis = generalized_eig(&pair, 2, 0.0).unwrap();
        assert!((basis.eigenvalues[0] - hi).abs() < 1e-12 * hi);
        assert!((basis.eigenvalues[1] - lo).abs() < 1e-12 * hi);
    }

    #[test]
    fn singular_metric_without_ridge_fails() {
        let pair = ScatterPair {
            s_x: DMatrix::zeros(2, 2),
            s_y: DMatrix::identity(2, 2),
            centroid: DVector::zeros(2),
        };
        assert!(matches!(generalized_eig(&pair, 1, 0.0), Err(Error::NotPositiveDefinite { .. })));
        assert!(generalized_eig(&pair, 1, pair.default_ridge()).is_ok());
    }

    #[test]
    fn pca_line_data_reconstructs_exactly() {
        let dir = DVector::from_vec(vec![1.0, 2.0, -2.0]) / 3.0;
        let data: Vec<_> = [-2.0, -1.0, 0.5, 3.0].iter().map(|&s| &dir * s).collect();
        let (pca, proj) = pca_reduce(&data, 1).unwrap();
        let col = pca.basis.column(0);
        assert!((col.dot(&dir).abs() - 1.0).abs() < 1e-12);
        for (x, y) in data.iter().zip(&proj) {
            let back = &pca.basis * y;
            assert!((x - back).norm() < 1e-12);
        }
        assert!(matches!(pca_reduce(&data, 2), Err(Error::RankExceeded { .. })));
    }

    #[test]
    fn pca_full_rank_preserves_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let data = rand_vecs(&mut rng, 200, 3);
        let cov = covariance(&data).unwrap();
        let (pca, proj) = pca_reduce(&data, 3).unwrap();
        let pcov = covariance(&proj).unwrap();
        assert!((pcov.trace() - cov.trace()).abs() < 1e-6);
        assert!((pca.eigenvalues.sum() - cov.trace()).abs() < 1e-10);
    }

    /// Cyclic Jacobi rotations; independent of the library eigensolver.
    fn jacobi_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
        let n = m.nrows();
        let mut a = m.clone();
        for _ in 0..100 {
            let mut off = 0.0;
            for p in 0..n {
                for q in p + 1..n {
                    off += a[(p, q)] * a[(p, q)];
                }
            }
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if a[(p, q)].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut v: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
        v.sort_by(|a, b| b.total_cmp(a));
        v
    }

    #[test]
    fn pca_captured_variance_matches_jacobi() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data = rand_vecs(&mut rng, 10, 4);
        let (_, proj) = pca_reduce(&data, 2).unwrap();
        let captured = covariance(&proj).unwrap().trace();
        let eig = jacobi_eigenvalues(&covariance(&data).unwrap());
        assert!((captured - (eig[0] + eig[1])).abs() < 1e-10);
    }

    #[test]
    fn two_d_full_pca_preserves_frobenius_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ms = rand_mats(&mut rng, 7, 3, 4);
        let labels = vec![true; 7];
        let (_, reduced) = two_d_reduce(&ms, &labels, 3, 4, ReductionMode::Pca).unwrap();
        for (m, r) in ms.iter().zip(&reduced) {
            assert!((m.norm() - r.norm()).abs() < 1e-8);
        }
    }

    #[test]
    fn two_d_bda_equal_matrices_still_finite() {
        let m = DMatrix::from_fn(4, 3, |i, j| (i * 3 + j) as f64);
        let mut ms = vec![m.clone(); 4];
        ms.push(m.map(|v| v + 1.0));
        ms.push(m.map(|v| -v));
        let labels = vec![true, true, true, true, false, false];
        let (basis, reduced) = two_d_reduce(&ms, &labels, 2, 2, ReductionMode::Bda).unwrap();
        assert!(basis.left.iter().all(|v| v.is_finite()));
        assert!(basis.right.iter().all(|v| v.is_finite()));
        assert!(reduced.iter().all(|r| r.iter().all(|v| v.is_finite())));
    }

    #[test]
    fn two_d_column_basis_matches_brute_force_scatter() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let ms = rand_mats(&mut rng, 6, 4, 5);
        let labels = vec![true, true, true, false, false, false];
        let (a, b) = (4, 5);
        // Brute-force column-direction scatters.
        let mut cen = vec![vec![0.0; b]; a];
        for m in ms.iter().take(3) {
            for i in 0..a {
                for j in 0..b {
                    cen[i][j] += m[(i, j)] / 3.0;
                }
            }
        }
        let mut sx = DMatrix::zeros(b, b);
        let mut sy = DMatrix::zeros(b, b);
        for (m, &pos) in ms.iter().zip(&labels) {
            for p in 0..b {
                for q in 0..b {
                    let mut s = 0.0;
                    for i in 0..a {
                        s += (m[(i, p)] - cen[i][p]) * (m[(i, q)] - cen[i][q]);
                    }
                    if pos {
                        sx[(p, q)] += s;
                    } else {
                        sy[(p, q)] += s;
                    }
                }
            }
        }
        let pair = ScatterPair {
            s_x: sx,
            s_y: sy,
            centroid: DVector::zeros(b),
        };
        let expected = generalized_eig(&pair, 2, pair.default_ridge()).unwrap().w;
        let (basis, _) = two_d_reduce(&ms, &labels, 2, 2, ReductionMode::Bda).unwrap();
        assert!((basis.right - expected).norm() < 1e-8);

        // PCA mode: total column scatter about the global mean.
        let mut gm = vec![vec![0.0; b]; a];
        for m in &ms {
            for i in 0..a {
                for j in 0..b {
                    gm[i][j] += m[(i, j)] / 6.0;
                }
            }
        }
        let mut st = DMatrix::zeros(b, b);
        for m in &ms {
            for p in 0..b {
                for q in 0..b {
                    for i in 0..a {
                        st[(p, q)] += (m[(i, p)] - gm[i][p]) * (m[(i, q)] - gm[i][q]);
                    }
                }
            }
        }
        let (_, vecs) = sorted_symmetric_eigen(&st);
        let (basis, _) = two_d_reduce(&ms, &labels, 2, 2, ReductionMode::Pca).unwrap();
        assert!((basis.right - vecs.columns(0, 2)).norm() < 1e-8);
    }

    #[test]
    fn two_d_rejects_oversized_rank() {
        let ms = vec![DMatrix::zeros(3, 3); 2];
        assert!(matches!(
            two_d_reduce(&ms, &[true, false], 4, 1, ReductionMode::Pca),
            Err(Error::RankExceeded { .. })
        ));
    }

    fn fitted_chain(seed: u64) -> (Vec<DMatrix<f64>>, Vec<bool>, ProjectionBasis) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ms = Vec::new();
        let mut labels = Vec::new();
        let proto = DMatrix::from_fn(10, 6, |i, j| ((i + 2 * j) as f64 * 0.3).sin());
        for k in 0..30 {
            let pos = k % 2 == 0;
            let noise = DMatrix::from_fn(10, 6, |_, _| rng.gen_range(-0.3..0.3));
            ms.push(if pos { &proto + noise } else { noise * 3.0 });
            labels.push(pos);
        }
        let cfg = ChainConfig {
            pca_rows: 6,
            pca_cols: 4,
            bda_rows: 4,
            bda_cols: 3,
            pca_dim: 8,
            out_dim: 4,
        };
        let basis = fit_chain(&ms, &labels, &cfg).unwrap();
        (ms, labels, basis)
    }

    #[test]
    fn chain_zero_maps_to_zero() {
        let (_, _, basis) = fitted_chain(1);
        let z = reduce_sequence_features(&DMatrix::zeros(10, 6), &basis).unwrap();
        assert_eq!(z.len(), 4);
        assert!(z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn chain_centroid_projects_to_mean_projection() {
        let (ms, labels, basis) = fitted_chain(2);
        let pos: Vec<&DMatrix<f64>> = ms.iter().zip(&labels).filter(|(_, &l)| l).map(|(m, _)| m).collect();
        let centroid = mean_matrix(&pos);
        let c = reduce_sequence_features(&centroid, &basis).unwrap();
        let mut mean = DVector::zeros(c.len());
        for m in &pos {
            mean += reduce_sequence_features(m, &basis).unwrap();
        }
        mean /= pos.len() as f64;
        assert!((c - mean).norm() < 1e-8);
    }

    #[test]
    fn chain_matches_step_by_step_naive_composition() {
        let (ms, _, basis) = fitted_chain(3);
        let m = &ms[5];
        let left = basis.left.as_ref().unwrap();
        let right = basis.right.as_ref().unwrap();
        let reduced = naive_matmul(&naive_matmul(&left.transpose(), m), right);
        let mut flat = Vec::new();
        for i in 0..reduced.nrows() {
            for j in 0..reduced.ncols() {
                flat.push(reduced[(i, j)]);
            }
        }
        let flat = DMatrix::from_row_slice(flat.len(), 1, &flat);
        let p = naive_matmul(&basis.pca.as_ref().unwrap().transpose(), &flat);
        let out = naive_matmul(&basis.w.transpose(), &p);
        let got = reduce_sequence_features(m, &basis).unwrap();
        for i in 0..got.len() {
            assert!((got[i] - out[(i, 0)]).abs() < 1e-10);
        }
    }

    #[test]
    fn chain_shape_mismatch_errors() {
        let (_, _, basis) = fitted_chain(4);
        assert!(reduce_sequence_features(&DMatrix::zeros(9, 6), &basis).is_err());
    }

    #[test]
    fn bda_beats_random_orthonormal_projections() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let d = 6;
        let r = 2;
        let pos: Vec<_> = (0..20)
            .map(|_| DVector::from_fn(d, |_, _| rng.gen_range(-0.05..0.05)))
            .collect();
        let neg: Vec<_> = (0..20)
            .map(|_| DVector::from_fn(d, |i, _| rng.gen_range(-1.0..1.0) * (1.0 + i as f64)))
            .collect();
        let pair = scatter_matrices(&pos, &neg).unwrap();
        let basis = generalized_eig(&pair, r, pair.default_ridge()).unwrap();
        let best = bda_objective(&pair, &basis.w);
        for _ in 0..100 {
            let g = DMatrix::from_fn(d, r, |_, _| rng.gen_range(-1.0..1.0));
            let q = g.qr().q();
            assert!(bda_objective(&pair, &q) <= best);
        }
    }
}
