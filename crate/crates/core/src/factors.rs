//! Associated factors between a finite price vector `Y ∈ ℝ^p` and a climate
//! variable `X` living in a Hilbert space of surfaces.
//!
//! `X` is handled in isometric coordinates: each valid cell value is scaled by
//! the square root of its quadrature weight, so the Euclidean dot product of
//! two coordinate vectors is the surface inner product. The covariance
//! operator of `X` is never formed; its spectrum comes from the `T × T` Gram
//! matrix of the centred frames.
//!
//! Estimation runs in two stages:
//!
//! 1. eigen-decompose the `p × p` Gram form of the cross-covariance,
//!    `M = C_XY C_YX`, giving singular values `r_k`, price-side vectors
//!    `α_k` and climate-side directions `β_k = C_YX α_k / r_k`;
//! 2. project the data on the leading `K` pairs and run ordinary CCA on the
//!    resulting `K`-dimensional factor series.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::exec::Execution;
use crate::grid::{GridDomain, GridError, Surface, SurfaceSeries};
use crate::ingest::SectorPanel;
use crate::linalg::{center_columns, column_means, cross_cov, fix_sign, inv_sqrt_spd, sym_condition, sym_eigen_desc};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FactorError {
    #[error("insufficient sample: T = {t} with p = {p} (need T ≥ p + 2)")]
    InsufficientSample { t: usize, p: usize },
    #[error("price and climate samples are not aligned: {0}")]
    NotAligned(String),
    #[error("cross-covariance is zero; no detectable association")]
    ZeroCrossCovariance,
    #[error("factor covariance is singular (condition number {condition:.3e}); lower K")]
    SingularFactorCovariance { condition: f64 },
    #[error("sector covariance is singular on the retained block (condition number {condition:.3e})")]
    SingularSectorCovariance { condition: f64 },
    #[error("every sector has zero variance")]
    NoVariation,
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Null-calibrated choice of the number of factors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PermutationTest {
    pub shuffles: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for PermutationTest {
    fn default() -> Self {
        PermutationTest { shuffles: 199, level: 0.95, seed: 42 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FactorConfig {
    /// Keep `r_k > rel_tol · r_1`.
    pub rel_tol: f64,
    /// Optional permutation test on top of the relative cutoff.
    pub permutation: Option<PermutationTest>,
    /// Largest condition number accepted for factor covariances.
    pub max_condition: f64,
    /// Caps the number of factors.
    pub max_k: Option<usize>,
}

impl Default for FactorConfig {
    fn default() -> Self {
        FactorConfig { rel_tol: 0.1, permutation: None, max_condition: 1e10, max_k: None }
    }
}

/// Sample covariance operators. `C_X` is implicit in the centred frames.
#[derive(Debug, Clone)]
pub struct CovarianceOperators {
    pub t: usize,
    pub y_means: DVector<f64>,
    pub x_means: DVector<f64>,
    /// `C_Y`, p × p.
    pub c_y: DMatrix<f64>,
    /// Row `j` is the surface `C_YX(e_j)` in isometric coordinates, p × D.
    pub cross: DMatrix<f64>,
    /// Centred Y, T × p.
    pub yc: DMatrix<f64>,
    /// Centred X in isometric coordinates, T × D.
    pub xc: DMatrix<f64>,
}

impl CovarianceOperators {
    /// Estimates all operators with the `1/(T-1)` normalisation.
    pub fn estimate(y: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<Self, FactorError> {
        let (t, p) = (y.nrows(), y.ncols());
        if x.nrows() != t {
            return Err(FactorError::NotAligned(format!("{t} price rows vs {} climate frames", x.nrows())));
        }
        if t < p + 2 {
            return Err(FactorError::InsufficientSample { t, p });
        }
        let yc = center_columns(y);
        let xc = center_columns(x);
        let c_y = cross_cov(&yc, &yc);
        let cross = cross_cov(&yc, &xc);
        Ok(CovarianceOperators { t, y_means: column_means(y), x_means: column_means(x), c_y, cross, yc, xc })
    }

    pub fn p(&self) -> usize {
        self.c_y.nrows()
    }

    pub fn dim(&self) -> usize {
        self.xc.ncols()
    }

    /// `C_YX(y)`, a vector in isometric coordinates.
    pub fn apply_yx(&self, y: &DVector<f64>) -> DVector<f64> {
        self.cross.transpose() * y
    }

    /// `C_XY(f)`, a p-vector.
    pub fn apply_xy(&self, f: &DVector<f64>) -> DVector<f64> {
        &self.cross * f
    }

    /// `C_X(f)` evaluated through the centred frames.
    pub fn apply_x(&self, f: &DVector<f64>) -> DVector<f64> {
        self.xc.transpose() * (&self.xc * f) / (self.t as f64 - 1.0)
    }

    /// `T × T` matrix of inner products between centred frames.
    pub fn gram(&self, exec: Execution) -> DMatrix<f64> {
        gram_matrix(&self.xc, exec)
    }
}

/// Row-by-row inner products `G[s,t] = ⟨x_s, x_t⟩`, filled in parallel over
/// rows with a fixed summation order per entry.
pub fn gram_matrix(rows: &DMatrix<f64>, exec: Execution) -> DMatrix<f64> {
    let t = rows.nrows();
    let cols = rows.transpose();
    let upper: Vec<Vec<f64>> = exec.map(t, |s| {
        let a = cols.column(s);
        (s..t).map(|u| a.dot(&cols.column(u))).collect()
    });
    let mut g = DMatrix::zeros(t, t);
    for (s, row) in upper.into_iter().enumerate() {
        for (i, v) in row.into_iter().enumerate() {
            g[(s, s + i)] = v;
            g[(s + i, s)] = v;
        }
    }
    g
}

/// Singular system of `C_YX`.
#[derive(Debug, Clone)]
pub struct CrossDecomposition {
    /// All `p` singular values, descending.
    pub r: Vec<f64>,
    /// Price-side singular vectors as columns, p × p.
    pub alpha: DMatrix<f64>,
    /// Climate-side directions for the retained components, D × K.
    pub beta: DMatrix<f64>,
    /// Components kept by the relative cutoff.
    pub k: usize,
}

/// SVD of `C_YX` through the eigen-decomposition of `C_XY C_YX`.
pub fn svd_cross(ops: &CovarianceOperators, rel_tol: f64) -> Result<CrossDecomposition, FactorError> {
    let m = &ops.cross * ops.cross.transpose();
    let (_, alpha) = sym_eigen_desc(&m);
    // ‖C_XY α_k‖ keeps full precision where sqrt of an eigenvalue near zero
    // would sit at ~1e-8.
    let images: Vec<DVector<f64>> = alpha.column_iter().map(|a| ops.apply_yx(&a.into_owned())).collect();
    let r: Vec<f64> = images.iter().map(|b| b.norm()).collect();
    let top = r.first().copied().unwrap_or(0.0);
    let scale = ops.cross.abs().max();
    if !(top > 1e-14 * scale.max(f64::MIN_POSITIVE)) || top == 0.0 {
        return Err(FactorError::ZeroCrossCovariance);
    }
    let k = r.iter().take_while(|&&v| v > rel_tol * top && v > 0.0).count();
    let mut beta = DMatrix::zeros(ops.dim(), k);
    for j in 0..k {
        beta.set_column(j, &(&images[j] / r[j]));
    }
    Ok(CrossDecomposition { r, alpha, beta, k })
}

/// Singular values of the permuted cross-covariance for each shuffle of the
/// time index of `Y`, using the Gram matrix of `X`.
pub fn permutation_null(
    ops: &CovarianceOperators,
    gram: &DMatrix<f64>,
    test: &PermutationTest,
    exec: Execution,
) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(test.seed);
    let mut idx: Vec<usize> = (0..ops.t).collect();
    let perms: Vec<Vec<usize>> = (0..test.shuffles)
        .map(|_| {
            idx.shuffle(&mut rng);
            idx.clone()
        })
        .collect();
    let denom = (ops.t as f64 - 1.0).powi(2);
    exec.map_slice(&perms, |perm| {
        let yp = ops.yc.select_rows(perm);
        let m = yp.transpose() * gram * &yp / denom;
        let (vals, _) = sym_eigen_desc(&m);
        vals.into_iter().map(|v| v.max(0.0).sqrt()).collect()
    })
}

/// Leading components whose `r_k` exceed the null quantile at `level`.
pub fn permutation_k(r: &[f64], null: &[Vec<f64>], level: f64) -> usize {
    let n = null.len();
    if n == 0 {
        return r.len();
    }
    let rank = ((level * (n as f64 + 1.0)).ceil() as usize).clamp(1, n) - 1;
    let mut k = 0;
    for (j, &rj) in r.iter().enumerate() {
        let mut col: Vec<f64> = null.iter().map(|v| v[j]).collect();
        col.sort_by(f64::total_cmp);
        if rj > col[rank] {
            k += 1;
        } else {
            break;
        }
    }
    k
}

/// Associated-factor coordinates before rotation.
#[derive(Debug, Clone)]
pub struct FactorProjections {
    /// `⟨α_k, Y_t⟩`, T × K.
    pub y_tilde: DMatrix<f64>,
    /// `⟨β_k, X_t⟩_H`, T × K.
    pub x_tilde: DMatrix<f64>,
}

/// Projects raw `Y` and `X` onto the first `k` singular pairs.
pub fn extract_factors(y: &DMatrix<f64>, x: &DMatrix<f64>, dec: &CrossDecomposition, k: usize) -> FactorProjections {
    let k = k.min(dec.k);
    FactorProjections { y_tilde: y * dec.alpha.columns(0, k), x_tilde: x * dec.beta.columns(0, k) }
}

/// Canonical correlation analysis of two finite-dimensional samples.
#[derive(Debug, Clone)]
pub struct Cca {
    pub rho: Vec<f64>,
    /// Canonical weights for the first block as columns.
    pub a: DMatrix<f64>,
    /// Canonical weights for the second block as columns.
    pub b: DMatrix<f64>,
}

/// Standard CCA via the SVD of `C_11^{-1/2} C_12 C_22^{-1/2}`.
pub fn cca(first: &DMatrix<f64>, second: &DMatrix<f64>, max_condition: f64) -> Result<Cca, FactorError> {
    let (u, v) = (center_columns(first), center_columns(second));
    let c11 = cross_cov(&u, &u);
    let c22 = cross_cov(&v, &v);
    let c12 = cross_cov(&u, &v);
    let w1 = inv_sqrt_spd(&c11, max_condition)
        .ok_or_else(|| FactorError::SingularFactorCovariance { condition: sym_condition(&c11) })?;
    let w2 = inv_sqrt_spd(&c22, max_condition)
        .ok_or_else(|| FactorError::SingularFactorCovariance { condition: sym_condition(&c22) })?;
    let m = &w1 * c12 * &w2;
    let svd = m.svd(true, true);
    let (uu, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let n = svd.singular_values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]).then(i.cmp(&j)));
    let mut a = DMatrix::zeros(u.ncols(), n);
    let mut b = DMatrix::zeros(v.ncols(), n);
    let mut rho = Vec::with_capacity(n);
    for (k, &i) in order.iter().enumerate() {
        let mut ak = &w1 * uu.column(i);
        let mut bk = &w2 * vt.row(i).transpose();
        let before = ak.clone();
        fix_sign(&mut ak);
        if ak != before {
            bk.neg_mut();
        }
        a.set_column(k, &ak);
        b.set_column(k, &bk);
        rho.push(svd.singular_values[i]);
    }
    Ok(Cca { rho, a, b })
}

/// Final associated factors.
#[derive(Debug, Clone)]
pub struct AssociatedFactorSet {
    pub k: usize,
    /// Canonical correlations, descending.
    pub rho: Vec<f64>,
    /// Price-side directions `a_k` as columns, p × K.
    pub a: DMatrix<f64>,
    /// Climate-side directions `b_k` in isometric coordinates, D × K.
    pub b: DMatrix<f64>,
    /// `⟨a_k, Y_t − Ȳ⟩`, T × K, unit sample variance.
    pub y_scores: DMatrix<f64>,
    /// `⟨b_k, X_t − X̄⟩_H`, T × K, unit sample variance.
    pub x_scores: DMatrix<f64>,
}

/// CCA on the factor series, with directions mapped back through `α`/`β`.
pub fn cca_on_factors(
    proj: &FactorProjections,
    dec: &CrossDecomposition,
    ops: &CovarianceOperators,
    max_condition: f64,
) -> Result<AssociatedFactorSet, FactorError> {
    let k = proj.y_tilde.ncols();
    let c = cca(&proj.y_tilde, &proj.x_tilde, max_condition)?;
    let a = dec.alpha.columns(0, k) * &c.a;
    let b = dec.beta.columns(0, k) * &c.b;
    let y_scores = &ops.yc * &a;
    let x_scores = &ops.xc * &b;
    Ok(AssociatedFactorSet { k, rho: c.rho, a, b, y_scores, x_scores })
}

/// Output of the complete two-stage estimator.
#[derive(Debug, Clone)]
pub struct FactorFit {
    pub ops: CovarianceOperators,
    pub decomposition: CrossDecomposition,
    /// Columns of the input `Y` that were kept (zero-variance ones are dropped).
    pub kept: Vec<usize>,
    /// Null quantiles at the test level, when a permutation test ran.
    pub null_quantiles: Option<Vec<f64>>,
    pub factors: AssociatedFactorSet,
}

fn kept_columns(y: &DMatrix<f64>) -> Vec<usize> {
    let yc = center_columns(y);
    let vars: Vec<f64> = yc.column_iter().map(|c| c.norm_squared()).collect();
    let top = vars.iter().cloned().fold(0.0, f64::max);
    (0..y.ncols()).filter(|&j| vars[j] > 1e-24 * top.max(1e-300) && vars[j] > 0.0).collect()
}

/// Runs covariance estimation, the cross SVD, K selection, projection and
/// factor CCA. `x` is in isometric coordinates.
pub fn fit(y: &DMatrix<f64>, x: &DMatrix<f64>, cfg: &FactorConfig, exec: Execution) -> Result<FactorFit, FactorError> {
    let kept = kept_columns(y);
    if kept.is_empty() {
        return Err(FactorError::NoVariation);
    }
    let y = y.select_columns(&kept);
    let ops = CovarianceOperators::estimate(&y, x)?;
    let cond = sym_condition(&ops.c_y);
    if cond > 1e14 {
        return Err(FactorError::SingularSectorCovariance { condition: cond });
    }
    let dec = svd_cross(&ops, cfg.rel_tol)?;
    let mut k = dec.k;
    let mut null_quantiles = None;
    if let Some(test) = &cfg.permutation {
        let gram = ops.gram(exec);
        let null = permutation_null(&ops, &gram, test, exec);
        k = k.min(permutation_k(&dec.r, &null, test.level));
        let n = null.len();
        let rank = ((test.level * (n as f64 + 1.0)).ceil() as usize).clamp(1, n) - 1;
        null_quantiles = Some(
            (0..ops.p())
                .map(|j| {
                    let mut col: Vec<f64> = null.iter().map(|v| v[j]).collect();
                    col.sort_by(f64::total_cmp);
                    col[rank]
                })
                .collect(),
        );
    }
    if let Some(cap) = cfg.max_k {
        k = k.min(cap);
    }
    if k == 0 {
        return Err(FactorError::ZeroCrossCovariance);
    }
    let proj = extract_factors(&y, x, &dec, k);
    let factors = cca_on_factors(&proj, &dec, &ops, cfg.max_condition)?;
    Ok(FactorFit { ops, decomposition: dec, kept, null_quantiles, factors })
}

/// Associated factors between a sector panel and a surface series, with the
/// climate-side directions as surfaces.
#[derive(Debug, Clone)]
pub struct SurfaceFactors {
    pub sector_ids: Vec<String>,
    pub dropped: Vec<String>,
    pub fit: FactorFit,
    pub b_surfaces: Vec<Surface>,
    pub beta_surfaces: Vec<Surface>,
}

impl SurfaceFactors {
    pub fn domain(&self) -> &Arc<GridDomain> {
        self.b_surfaces[0].domain()
    }
}

pub fn fit_surfaces(
    panel: &SectorPanel,
    x: &SurfaceSeries,
    cfg: &FactorConfig,
    exec: Execution,
) -> Result<SurfaceFactors, FactorError> {
    if panel.times != x.times() {
        return Err(FactorError::NotAligned("price and climate time axes differ".into()));
    }
    let xi = x.isometric_matrix();
    let fit = fit(&panel.values, &xi, cfg, exec)?;
    let to_surface = |m: &DMatrix<f64>| -> Result<Vec<Surface>, FactorError> {
        m.column_iter()
            .map(|c| Surface::from_isometric(x.domain().clone(), c.as_slice()).map_err(FactorError::from))
            .collect()
    };
    let b_surfaces = to_surface(&fit.factors.b)?;
    let beta_surfaces = to_surface(&fit.decomposition.beta)?;
    let sector_ids = fit.kept.iter().map(|&j| panel.ids[j].clone()).collect();
    let dropped = (0..panel.n_series()).filter(|j| !fit.kept.contains(j)).map(|j| panel.ids[j].clone()).collect();
    Ok(SurfaceFactors { sector_ids, dropped, fit, b_surfaces, beta_surfaces })
}

/// Partial sums of the regularity series for one price eigen-direction.
#[derive(Debug, Clone, Serialize)]
pub struct RegularitySeries {
    pub j: usize,
    /// `Σ_{i≤n} λ_i^{-1} c_ij²`.
    pub squared: Vec<f64>,
    /// `Σ_{i≤n} λ_i^{-1} |c_ij|`.
    pub absolute: Vec<f64>,
    pub squared_plateau: bool,
    pub absolute_plateau: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegularityReport {
    /// Nonzero eigenvalues of `C_X`, descending.
    pub eigenvalues: Vec<f64>,
    pub series: Vec<RegularitySeries>,
    /// Share of the final sum contributed by the second half of the terms
    /// above which growth counts as not plateauing.
    pub tail_share_threshold: f64,
    /// True when any squared series fails to plateau.
    pub warning: bool,
}

fn plateaus(partial: &[f64], threshold: f64) -> bool {
    let n = partial.len();
    let total = partial.last().copied().unwrap_or(0.0);
    if n < 2 || !(total > 0.0) {
        return true;
    }
    (total - partial[n / 2 - 1]) / total <= threshold
}

/// Diagnostic for the regularity condition. The spectrum of `C_X` comes from
/// the `T × T` Gram matrix; eigenvalues below `1e-10 · λ_1` are treated as
/// zero. Never blocks estimation.
/// Eigenvalues of C_X (descending) with the matching unit-norm time-score vectors.
/// Uses a thin SVD of the centred data when the field is narrower than the sample,
/// otherwise the T×T Gram matrix.
fn score_spectrum(ops: &CovarianceOperators, exec: Execution) -> (Vec<f64>, DMatrix<f64>) {
    let denom = ops.t as f64 - 1.0;
    if ops.dim() < ops.t {
        let svd = ops.xc.clone().svd(true, false);
        let u = svd.u.expect("left vectors requested");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));
        let vals = order.iter().map(|&i| svd.singular_values[i].powi(2) / denom).collect();
        let mut vecs = DMatrix::zeros(ops.t, order.len());
        for (k, &i) in order.iter().enumerate() {
            let mut v = u.column(i).into_owned();
            fix_sign(&mut v);
            vecs.set_column(k, &v);
        }
        (vals, vecs)
    } else {
        sym_eigen_desc(&(ops.gram(exec) / denom))
    }
}

pub fn regularity_diagnostic(ops: &CovarianceOperators, exec: Execution) -> RegularityReport {
    let tail_share_threshold = 0.1;
    let denom = ops.t as f64 - 1.0;
    let (vals, vecs) = score_spectrum(ops, exec);
    let top = vals.first().copied().unwrap_or(0.0);
    let n = vals.iter().take_while(|&&v| v > 1e-10 * top && v > 0.0).count();
    let (_, psi) = sym_eigen_desc(&ops.c_y);
    let y_on_psi = &ops.yc * &psi;
    let mut series = Vec::with_capacity(ops.p());
    for j in 0..ops.p() {
        let mut sq = Vec::with_capacity(n);
        let mut ab = Vec::with_capacity(n);
        let (mut s_sq, mut s_ab) = (0.0, 0.0);
        for i in 0..n {
            // Scores on φ_i are sqrt((T-1)λ_i)·v_i.
            let c = (denom * vals[i]).sqrt() * vecs.column(i).dot(&y_on_psi.column(j)) / denom;
            s_sq += c * c / vals[i];
            s_ab += c.abs() / vals[i];
            sq.push(s_sq);
            ab.push(s_ab);
        }
        series.push(RegularitySeries {
            j,
            squared_plateau: plateaus(&sq, tail_share_threshold),
            absolute_plateau: plateaus(&ab, tail_share_threshold),
            squared: sq,
            absolute: ab,
        });
    }
    let warning = series.iter().any(|s| !s.squared_plateau);
    RegularityReport { eigenvalues: vals[..n].to_vec(), series, tail_share_threshold, warning }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{correlation, covariance};
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn gauss(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
    }

    #[test]
    fn covariances_match_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (t, p, d) = (17, 3, 5);
        let y = gauss(&mut rng, t, p);
        let x = gauss(&mut rng, t, d);
        let ops = CovarianceOperators::estimate(&y, &x).unwrap();
        for i in 0..p {
            for j in 0..p {
                let o = covariance(y.column(i).as_slice(), y.column(j).as_slice());
                assert!((ops.c_y[(i, j)] - o).abs() < 1e-12);
            }
            for c in 0..d {
                let mut ym = 0.0;
                let mut xm = 0.0;
                for s in 0..t {
                    ym += y[(s, i)];
                    xm += x[(s, c)];
                }
                ym /= t as f64;
                xm /= t as f64;
                let mut acc = 0.0;
                for s in 0..t {
                    acc += (y[(s, i)] - ym) * (x[(s, c)] - xm);
                }
                assert!((ops.cross[(i, c)] - acc / (t as f64 - 1.0)).abs() < 1e-12);
            }
        }
        // Adjoint identity and implicit C_X against the dense oracle.
        let f = DVector::from_fn(d, |_, _| rng.sample(StandardNormal));
        for j in 0..p {
            let e = DVector::from_fn(p, |i, _| if i == j { 1.0 } else { 0.0 });
            assert!((ops.apply_yx(&e).dot(&f) - ops.apply_xy(&f)[j]).abs() < 1e-12);
        }
        let dense = cross_cov(&center_columns(&x), &center_columns(&x));
        assert!((ops.apply_x(&f) - &dense * &f).norm() < 1e-12);
        let g = ops.gram(Execution::Sequential);
        assert!((g - &ops.xc * ops.xc.transpose()).abs().max() < 1e-12);
    }

    #[test]
    fn constant_prices_have_zero_covariances() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let y = DMatrix::from_element(20, 2, 3.5);
        let x = gauss(&mut rng, 20, 4);
        let ops = CovarianceOperators::estimate(&y, &x).unwrap();
        assert_eq!(ops.c_y.abs().max(), 0.0);
        assert_eq!(ops.cross.abs().max(), 0.0);
        assert!(matches!(svd_cross(&ops, 0.1), Err(FactorError::ZeroCrossCovariance)));
        assert!(matches!(fit(&y, &x, &FactorConfig::default(), Execution::Sequential), Err(FactorError::NoVariation)));
    }

    #[test]
    fn surface_proportional_to_first_sector() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let y = gauss(&mut rng, 50, 2);
        let mut g = DVector::from_fn(6, |_, _| rng.sample::<f64, _>(StandardNormal));
        g /= g.norm();
        let x = DMatrix::from_fn(50, 6, |t, c| g[c] * y[(t, 0)]);
        let ops = CovarianceOperators::estimate(&y, &x).unwrap();
        let e1 = DVector::from_vec(vec![1.0, 0.0]);
        let var1 = ops.c_y[(0, 0)];
        assert!((ops.apply_yx(&e1) - &g * var1).norm() < 1e-12);
    }

    #[test]
    fn insufficient_and_misaligned() {
        let y = DMatrix::zeros(4, 3);
        let x = DMatrix::zeros(4, 2);
        assert!(matches!(CovarianceOperators::estimate(&y, &x), Err(FactorError::InsufficientSample { .. })));
        let x = DMatrix::zeros(5, 2);
        assert!(matches!(CovarianceOperators::estimate(&y, &x), Err(FactorError::NotAligned(_))));
    }

    fn planted(rng: &mut ChaCha8Rng, t: usize, p: usize, d: usize, snr: f64) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>) {
        let y = gauss(rng, t, p);
        let mut g = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        g /= g.norm();
        let noise = gauss(rng, t, d) * (1.0 / (snr * d as f64).sqrt());
        let x = DMatrix::from_fn(t, d, |s, c| y[(s, 0)] * g[c]) + noise;
        (y, x, g)
    }

    #[test]
    fn planted_rank_one_link() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let (y, x, g) = planted(&mut rng, 500, 3, 40, 10.0);
        let ops = CovarianceOperators::estimate(&y, &x).unwrap();
        let dec = svd_cross(&ops, 0.1).unwrap();
        assert_eq!(dec.k, 1, "{:?}", dec.r);
        let cos = dec.beta.column(0).dot(&g).abs() / dec.beta.column(0).norm();
        assert!(cos > 0.95, "{cos}");
        // α orthonormal, β orthonormal.
        assert!((dec.alpha.transpose() * &dec.alpha - DMatrix::identity(3, 3)).abs().max() < 1e-10);
        let all = svd_cross(&ops, 0.0).unwrap();
        let gram = all.beta.transpose() * &all.beta;
        assert!((gram - DMatrix::identity(all.k, all.k)).abs().max() < 1e-8);
        for w in all.r.windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn independent_data_gives_no_factor_under_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let mut zeros = 0;
        for rep in 0..20 {
            let y = gauss(&mut rng, 120, 3);
            let x = gauss(&mut rng, 120, 30);
            let cfg = FactorConfig { permutation: Some(PermutationTest { seed: rep, ..Default::default() }), ..Default::default() };
            if matches!(fit(&y, &x, &cfg, Execution::default()), Err(FactorError::ZeroCrossCovariance)) {
                zeros += 1;
            }
        }
        assert!(zeros >= 16, "{zeros}/20");
        // A planted link survives the same test.
        let (y, x, _) = planted(&mut rng, 200, 3, 30, 10.0);
        let cfg = FactorConfig { permutation: Some(PermutationTest::default()), ..Default::default() };
        assert_eq!(fit(&y, &x, &cfg, Execution::default()).unwrap().factors.k, 1);
    }

    #[test]
    fn extraction_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let y = gauss(&mut rng, 30, 2);
        let x = gauss(&mut rng, 30, 4);
        let dec = CrossDecomposition {
            r: vec![1.0, 0.5],
            alpha: DMatrix::identity(2, 2),
            beta: DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]),
            k: 2,
        };
        let proj = extract_factors(&y, &x, &dec, 2);
        assert_eq!(proj.y_tilde, y);
        let x_orth = DMatrix::from_fn(30, 4, |t, c| if c >= 2 { x[(t, c)] } else { 0.0 });
        let proj = extract_factors(&y, &x_orth, &dec, 2);
        assert_eq!(proj.x_tilde.abs().max(), 0.0);
    }

    #[test]
    fn perfect_link_has_unit_correlation() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let yt = gauss(&mut rng, 100, 1);
        let xt = &yt * 2.0;
        let c = cca(&yt, &xt, 1e10).unwrap();
        assert!((c.rho[0] - 1.0).abs() < 1e-12);
        let u: Vec<f64> = (&yt * &c.a).column(0).iter().copied().collect();
        let v: Vec<f64> = (&xt * &c.b).column(0).iter().copied().collect();
        assert!((correlation(&u, &v) - 1.0).abs() < 1e-12);
        let singular = DMatrix::from_fn(100, 2, |t, _| yt[(t, 0)]);
        assert!(matches!(cca(&singular, &xt, 1e10), Err(FactorError::SingularFactorCovariance { .. })));
    }

    #[test]
    fn independent_factor_series_fall_below_null_quantile() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let yt = gauss(&mut rng, 2000, 2);
        let xt = gauss(&mut rng, 2000, 2);
        let rho = cca(&yt, &xt, 1e10).unwrap().rho[0];
        let mut idx: Vec<usize> = (0..2000).collect();
        let mut null: Vec<f64> = (0..199)
            .map(|_| {
                idx.shuffle(&mut rng);
                cca(&yt.select_rows(&idx), &xt, 1e10).unwrap().rho[0]
            })
            .collect();
        null.sort_by(f64::total_cmp);
        assert!(rho < null[189], "{rho} vs {}", null[189]);
    }

    #[test]
    fn factor_set_contracts() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let (y, x, _) = planted(&mut rng, 400, 4, 25, 2.0);
        let y = &y + gauss(&mut rng, 400, 4) * 0.3;
        let cfg = FactorConfig { rel_tol: 0.3, ..Default::default() };
        let f = fit(&y, &x, &cfg, Execution::default()).unwrap();
        let s = &f.factors;
        let k = s.k;
        let cyy = cross_cov(&s.y_scores, &s.y_scores);
        let cxx = cross_cov(&s.x_scores, &s.x_scores);
        let cyx = cross_cov(&s.y_scores, &s.x_scores);
        assert!((cyy - DMatrix::identity(k, k)).abs().max() < 1e-8);
        assert!((cxx - DMatrix::identity(k, k)).abs().max() < 1e-8);
        for i in 0..k {
            assert!(s.rho[i] >= 0.0 && s.rho[i] <= 1.0 + 1e-10);
            for j in 0..k {
                let want = if i == j { s.rho[i] } else { 0.0 };
                assert!((cyx[(i, j)] - want).abs() < 1e-8);
            }
        }
        // Residual of the α-reconstruction is uncorrelated with every X̃_k.
        let dec = &f.decomposition;
        let alpha_k = dec.alpha.columns(0, dec.k);
        let recon = &f.ops.yc * alpha_k * alpha_k.transpose();
        let resid = &f.ops.yc - recon;
        let xt = &f.ops.xc * &dec.beta;
        let c = cross_cov(&resid, &xt);
        let scale = cross_cov(&f.ops.yc, &xt).abs().max();
        assert!(c.abs().max() < 1e-10 * scale, "{}", c.abs().max());
    }

    #[test]
    fn invariant_to_invertible_price_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let (y, x, _) = planted(&mut rng, 300, 3, 20, 1.0);
        let cfg = FactorConfig { rel_tol: 0.0, ..Default::default() };
        let base = fit(&y, &x, &cfg, Execution::default()).unwrap();
        let g = gauss(&mut rng, 3, 3) + DMatrix::identity(3, 3) * 2.0;
        let gy = &y * g.transpose();
        let other = fit(&gy, &x, &cfg, Execution::default()).unwrap();
        assert_eq!(base.factors.k, other.factors.k);
        for (a, b) in base.factors.rho.iter().zip(&other.factors.rho) {
            assert!((a - b).abs() < 1e-9, "{a} {b}");
        }
    }

    fn orthogonal_scores(rng: &mut ChaCha8Rng, t: usize, n: usize) -> DMatrix<f64> {
        // Centred, mutually orthogonal columns with unit sample variance.
        let raw = center_columns(&gauss(rng, t, n));
        let q = crate::linalg::orthonormal_basis(&raw);
        q * (t as f64 - 1.0).sqrt()
    }

    #[test]
    fn regularity_single_direction_plateaus() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (t, n) = (200, 8);
        let s = orthogonal_scores(&mut rng, t, n + 1);
        let lambdas: Vec<f64> = (1..=n).map(|i| 1.0 / (i * i) as f64).collect();
        let x = DMatrix::from_fn(t, n, |r, i| s[(r, i)] * lambdas[i].sqrt());
        let y = DMatrix::from_fn(t, 1, |r, _| s[(r, 0)] + 0.5 * s[(r, n)]);
        let ops = CovarianceOperators::estimate(&y, &x).unwrap();
        let rep = regularity_diagnostic(&ops, Execution::Sequential);
        assert_eq!(rep.eigenvalues.len(), n);
        let sq = &rep.series[0].squared;
        assert!((sq[0] - sq[n - 1]).abs() < 1e-10 * sq[0]);
        assert!(rep.series[0].squared_plateau && !rep.warning);
    }

    #[test]
    fn regularity_decay_rates() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let (t, n) = (400, 30);
        let s = orthogonal_scores(&mut rng, t, n + 1);
        let lambdas: Vec<f64> = (1..=n).map(|i| 1.0 / (i * i) as f64).collect();
        let x = DMatrix::from_fn(t, n, |r, i| s[(r, i)] * lambdas[i].sqrt());
        let build = |loading: &dyn Fn(usize) -> f64| {
            // Cov(score_i, Y) = loading(i) with score_i = s_i sqrt(λ_i).
            DMatrix::from_fn(t, 1, |r, _| {
                (0..n).map(|i| loading(i) / lambdas[i].sqrt() * s[(r, i)]).sum::<f64>() + s[(r, n)]
            })
        };
        let fast = build(&|i| 1.0 / ((i + 1) * (i + 1)) as f64);
        let rep = regularity_diagnostic(&CovarianceOperators::estimate(&fast, &x).unwrap(), Execution::Sequential);
        assert!(rep.series[0].squared_plateau, "{:?}", rep.series[0].squared);
        let border = build(&|i| 0.2 * lambdas[i].sqrt());
        let rep = regularity_diagnostic(&CovarianceOperators::estimate(&border, &x).unwrap(), Execution::Sequential);
        assert!(!rep.series[0].squared_plateau && rep.warning);
        assert!(!rep.series[0].absolute_plateau);
    }

    #[test]
    fn regularity_terms_shrink_with_sample_size_for_independent_prices() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let total = |rng: &mut ChaCha8Rng, t: usize| {
            let mix = gauss(rng, 6, 6);
            let x = gauss(rng, t, 6) * mix;
            let y = gauss(rng, t, 1);
            let rep = regularity_diagnostic(&CovarianceOperators::estimate(&y, &x).unwrap(), Execution::Sequential);
            *rep.series[0].squared.last().unwrap()
        };
        let small: f64 = (0..20).map(|_| total(&mut rng, 100)).sum();
        let large: f64 = (0..20).map(|_| total(&mut rng, 1600)).sum();
        assert!(large < small / 4.0, "{small} {large}");
    }

    #[test]
    fn rank_two_reconstruction_captures_signal() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let (t, d) = (500, 40);
        let y = gauss(&mut rng, t, 3);
        let g = crate::linalg::orthonormal_basis(&gauss(&mut rng, d, 2));
        let signal = DMatrix::from_fn(t, d, |s, c| y[(s, 0)] * g[(c, 0)] + y[(s, 1)] * g[(c, 1)]);
        let x = &signal + gauss(&mut rng, t, d) * (1.0 / (10.0 * d as f64).sqrt());
        let ops = CovarianceOperators::estimate(&y, &x).unwrap();
        let dec = svd_cross(&ops, 0.1).unwrap();
        assert_eq!(dec.k, 2, "{:?}", dec.r);
        let beta = dec.beta.columns(0, 2);
        let sc = center_columns(&signal);
        let recon = &sc * beta * beta.transpose();
        let share = 1.0 - (&sc - recon).norm_squared() / sc.norm_squared();
        assert!(share >= 0.9, "{share}");
    }

    #[test]
    fn structural_slopes_equal_correlations() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let (y, x, _) = planted(&mut rng, 300, 3, 20, 1.0);
        let cfg = FactorConfig { rel_tol: 0.0, ..Default::default() };
        let s = fit(&y, &x, &cfg, Execution::Sequential).unwrap().factors;
        for k in 0..s.k {
            let u: Vec<f64> = s.y_scores.column(k).iter().copied().collect();
            let v: Vec<f64> = s.x_scores.column(k).iter().copied().collect();
            let slope = covariance(&u, &v) / covariance(&v, &v);
            assert!((slope - s.rho[k]).abs() < 1e-10);
            let resid: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a - slope * b).collect();
            for m in 0..s.k {
                let w: Vec<f64> = s.x_scores.column(m).iter().copied().collect();
                assert!(covariance(&resid, &w).abs() < 1e-10);
            }
        }
    }
}
