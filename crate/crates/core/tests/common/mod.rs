#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use climfira::factors::{self, FactorConfig};
use climfira::Execution;

pub fn normal(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

fn centred(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    out
}

/// Direct CCA between `Y` and `X` through Cholesky whitening, independent of
/// the library route. Returns correlations and direction matrices.
pub struct OracleCca {
    pub rho: Vec<f64>,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

pub fn oracle_cca(y: &DMatrix<f64>, x: &DMatrix<f64>) -> OracleCca {
    let (yc, xc) = (centred(y), centred(x));
    let n = (y.nrows() - 1) as f64;
    let cy = yc.transpose() * &yc / n;
    let cx = xc.transpose() * &xc / n;
    let cyx = yc.transpose() * &xc / n;
    let ly = cy.cholesky().expect("C_Y positive definite").l();
    let lx = cx.cholesky().expect("C_X positive definite").l();
    // M = L_Y^{-1} C_YX L_X^{-T}
    let left = ly.solve_lower_triangular(&cyx).expect("invertible");
    let m = lx.solve_lower_triangular(&left.transpose()).expect("invertible").transpose();
    // Eigenvectors of M Mᵀ keep eps/gap accuracy even when M is rank deficient.
    let eig = (&m * m.transpose()).symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let k = order.len().min(x.ncols());
    let order = &order[..k];
    let rho: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0).sqrt()).collect();
    let lyt = ly.transpose();
    let lxt = lx.transpose();
    let mut a = DMatrix::zeros(y.ncols(), k);
    let mut b = DMatrix::zeros(x.ncols(), k);
    for (j, &i) in order.iter().enumerate() {
        let u = eig.eigenvectors.column(i).into_owned();
        let v = m.transpose() * &u / rho[j].max(f64::MIN_POSITIVE);
        a.set_column(j, &lyt.solve_upper_triangular(&u).expect("invertible"));
        b.set_column(j, &lxt.solve_upper_triangular(&v).expect("invertible"));
    }
    OracleCca { rho, a, b }
}

/// Sine of the largest principal angle between the column spans of `a` and
/// `b`, computed as `‖(I − Q_a Q_aᵀ) Q_b‖₂` to keep precision near zero.
pub fn max_principal_sine(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let qa = a.clone().qr().q();
    let qb = b.clone().qr().q();
    let resid = &qb - &qa * (qa.transpose() * &qb);
    resid.svd(false, false).singular_values.max()
}

/// Orthogonal times a diagonal in [0.5, 2]; condition number at most 4.
pub fn mixing(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let q = normal(rng, n, n).qr().q();
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(n, |_, _| rng.random_range(0.5..2.0)));
    q * d
}

/// Generic correlated pair: `Y = X W + E`, no structure beyond that.
pub fn generic_problem(rng: &mut ChaCha8Rng, t: usize, p: usize, d: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let x = normal(rng, t, d) * normal(rng, d, d);
    let y = &x * normal(rng, d, p) * 0.5 + normal(rng, t, p);
    (y, x)
}

/// Problem that satisfies the associated-factor model exactly in sample:
/// `Y = F_Y Aᵀ + U`, `X = F_X Bᵀ + E`, with `U` in `A^⊥`, `E` in `B^⊥` and both
/// sample-uncorrelated with each other and with the factors.
pub fn conformant_problem(rng: &mut ChaCha8Rng, t: usize, p: usize, d: usize, k: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    assert!(k <= p && k < d);
    let fy = normal(rng, t, k);
    let fx = &fy * mixing(rng, k) + normal(rng, t, k);
    let noise_cols = (p - k) + (d - k);
    let mut stacked = DMatrix::zeros(t, 2 * k + noise_cols);
    stacked.columns_mut(0, k).copy_from(&fy);
    stacked.columns_mut(k, k).copy_from(&fx);
    stacked.columns_mut(2 * k, noise_cols).copy_from(&normal(rng, t, noise_cols));
    let mut ones = DMatrix::from_element(t, 1, 1.0);
    ones.scale_mut(1.0 / (t as f64).sqrt());
    let q = {
        let mut full = DMatrix::zeros(t, 1 + stacked.ncols());
        full.set_column(0, &ones.column(0));
        full.columns_mut(1, stacked.ncols()).copy_from(&stacked);
        full.qr().q()
    };
    // Columns after the constant and the 2K factor columns are orthogonal to
    // the constant, to both factor blocks and to each other.
    let base = 1 + 2 * k;
    let sqrt_t = (t as f64).sqrt();
    let u = q.columns(base, p - k) * sqrt_t * mixing(rng, p - k);
    let e = q.columns(base + p - k, d - k) * sqrt_t * mixing(rng, d - k);
    let qa = normal(rng, p, p).qr().q();
    let qb = normal(rng, d, d).qr().q();
    let y = &fy * qa.columns(0, k).transpose() + u * qa.columns(k, p - k).transpose();
    let x = &fx * qb.columns(0, k).transpose() + e * qb.columns(k, d - k).transpose();
    (y, x)
}

/// Largest correlation and direction-span errors of the two-stage estimator
/// against the direct oracle, over the `K` retained pairs.
#[derive(Debug, Clone, Copy)]
pub struct Agreement {
    pub k: usize,
    pub rho_err: f64,
    pub a_sine: f64,
    pub b_sine: f64,
}

impl Agreement {
    pub fn worst(&self) -> f64 {
        self.rho_err.max(self.a_sine).max(self.b_sine)
    }
}

pub fn two_stage_vs_oracle(y: &DMatrix<f64>, x: &DMatrix<f64>, cfg: &FactorConfig) -> Agreement {
    let fit = factors::fit(y, x, cfg, Execution::Sequential).expect("fit succeeds");
    let set = &fit.factors;
    let oracle = oracle_cca(y, x);
    let k = set.k;
    let rho_err = (0..k).map(|j| (set.rho[j] - oracle.rho[j]).abs()).fold(0.0, f64::max);
    let a_sine = max_principal_sine(&set.a, &oracle.a.columns(0, k).into_owned());
    let b_sine = max_principal_sine(&set.b, &oracle.b.columns(0, k).into_owned());
    Agreement { k, rho_err, a_sine, b_sine }
}

pub fn problem_shape(i: usize, rng: &mut ChaCha8Rng) -> (usize, usize) {
    let p = [2, 3, 5][i % 3];
    let d = rng.random_range(4..=9);
    (p, d)
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
