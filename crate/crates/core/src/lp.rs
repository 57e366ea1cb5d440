//! Local-projection impulse responses.
//!
//! For each horizon `h` a single equation is fitted by least squares:
//!
//! ```text
//! y[t+h] = c + Σ_{k=1..p} A_k·w[t-k] + Σ_{i=0..r} B_i·x[t-i] + Σ_{j=1..l} C_j·z[t-j] + e[t+h]
//! ```
//!
//! where `w` is the endogenous block (the target first), `x` the shock and
//! `z` the controls. The response at `h` is the coefficient on `x[t]`, with a
//! Newey–West standard error using Bartlett weights and `h + 1` lags.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::exec::Execution;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LpError {
    #[error("rank-deficient design; collinear columns: {}", columns.join(", "))]
    RankDeficientDesign { columns: Vec<String> },
    #[error("insufficient sample: {available} observations for {needed} required")]
    InsufficientSample { needed: usize, available: usize },
    #[error("series lengths differ: {0}")]
    LengthMismatch(String),
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LagSelection {
    Aic,
    Fixed { p: usize, l: usize },
}

/// Whether controls enter from lag 1 (`z[t-1]..`) or from lag 0 (`z[t]..`).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlTiming {
    #[default]
    Lagged,
    Contemporaneous,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LpSpec {
    pub h_max: usize,
    pub p_max: usize,
    /// Number of lagged shock terms beyond the contemporaneous one.
    pub r: usize,
    pub l_max: usize,
    pub lag_selection: LagSelection,
    pub ci_level: f64,
    pub control_timing: ControlTiming,
    /// Overrides the `h + 1` HAC lag truncation when set.
    pub hac_lags: Option<usize>,
}

impl Default for LpSpec {
    fn default() -> Self {
        LpSpec {
            h_max: 24,
            p_max: 12,
            r: 0,
            l_max: 12,
            lag_selection: LagSelection::Aic,
            ci_level: 0.90,
            control_timing: ControlTiming::Lagged,
            hac_lags: None,
        }
    }
}

impl LpSpec {
    pub fn validate(&self) -> Result<(), LpError> {
        if self.h_max < 1 || self.p_max < 1 || self.l_max < 1 {
            return Err(LpError::InvalidSpec("h_max, p_max and l_max must be at least 1".into()));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(LpError::InvalidSpec(format!("ci_level {} outside (0, 1)", self.ci_level)));
        }
        Ok(())
    }

    fn hac_lags(&self, h: usize) -> usize {
        self.hac_lags.unwrap_or(h + 1)
    }
}

/// Aligned inputs for one target.
#[derive(Debug, Clone, Copy)]
pub struct LpData<'a> {
    pub target: &'a [f64],
    /// Extra endogenous series; the target's own lags are always included.
    pub endogenous: &'a [Vec<f64>],
    pub shock: &'a [f64],
    pub controls: &'a [Vec<f64>],
}

impl LpData<'_> {
    fn check(&self) -> Result<usize, LpError> {
        let n = self.target.len();
        if self.shock.len() != n {
            return Err(LpError::LengthMismatch(format!("shock has {} periods, target {n}", self.shock.len())));
        }
        for s in self.endogenous.iter().chain(self.controls) {
            if s.len() != n {
                return Err(LpError::LengthMismatch(format!("regressor has {} periods, target {n}", s.len())));
            }
        }
        Ok(n)
    }
}

struct Design {
    x: DMatrix<f64>,
    y: DVector<f64>,
    names: Vec<String>,
    shock_col: usize,
}

/// Design for horizon `h` over rows `t ∈ [start, T-1-h]`.
fn build_design(data: &LpData, h: usize, p: usize, l: usize, spec: &LpSpec, start: usize) -> Result<Design, LpError> {
    let n_total = data.check()?;
    let end = n_total.checked_sub(h).unwrap_or(0);
    let rows = end.saturating_sub(start);
    let block: Vec<&[f64]> = std::iter::once(data.target).chain(data.endogenous.iter().map(Vec::as_slice)).collect();
    let control_lags: Vec<usize> = if data.controls.is_empty() {
        Vec::new()
    } else {
        match spec.control_timing {
            ControlTiming::Lagged => (1..=l).collect(),
            ControlTiming::Contemporaneous => (0..l).collect(),
        }
    };
    let k = 1 + block.len() * p + (spec.r + 1) + data.controls.len() * control_lags.len();
    if rows < 10 + k {
        return Err(LpError::InsufficientSample { needed: 10 + k, available: rows });
    }
    let mut names = vec!["const".to_string()];
    for (b, _) in block.iter().enumerate() {
        for lag in 1..=p {
            names.push(if b == 0 { format!("target.lag{lag}") } else { format!("endog{b}.lag{lag}") });
        }
    }
    let shock_col = names.len();
    for i in 0..=spec.r {
        names.push(format!("shock.lag{i}"));
    }
    for j in 0..data.controls.len() {
        for lag in &control_lags {
            names.push(format!("control{j}.lag{lag}"));
        }
    }
    let mut x = DMatrix::zeros(rows, k);
    let mut y = DVector::zeros(rows);
    for (row, t) in (start..end).enumerate() {
        y[row] = data.target[t + h];
        let mut col = 0;
        x[(row, col)] = 1.0;
        col += 1;
        for s in &block {
            for lag in 1..=p {
                x[(row, col)] = s[t - lag];
                col += 1;
            }
        }
        for i in 0..=spec.r {
            x[(row, col)] = data.shock[t - i];
            col += 1;
        }
        for s in data.controls {
            for &lag in &control_lags {
                x[(row, col)] = s[t - lag];
                col += 1;
            }
        }
    }
    Ok(Design { x, y, names, shock_col })
}

/// Columns that are (numerically) in the span of the columns before them.
fn collinear_columns(x: &DMatrix<f64>) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut bad = Vec::new();
    for j in 0..x.ncols() {
        let mut v = x.column(j).into_owned();
        let norm0 = v.norm();
        for q in &basis {
            let d = q.dot(&v);
            v.axpy(-d, q, 1.0);
        }
        // Re-orthogonalise once for stability.
        for q in &basis {
            let d = q.dot(&v);
            v.axpy(-d, q, 1.0);
        }
        let norm = v.norm();
        if norm0 == 0.0 || norm <= 1e-9 * norm0 {
            bad.push(j);
        } else {
            basis.push(v / norm);
        }
    }
    bad
}

/// Least-squares fit with coefficient covariance.
#[derive(Debug, Clone)]
pub struct OlsFit {
    pub beta: DVector<f64>,
    pub residuals: DVector<f64>,
    pub xtx_inv: DMatrix<f64>,
    pub ssr: f64,
}

pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>, names: &[String]) -> Result<OlsFit, LpError> {
    let bad = collinear_columns(x);
    if !bad.is_empty() {
        return Err(LpError::RankDeficientDesign { columns: bad.into_iter().map(|j| names[j].clone()).collect() });
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let qty = qr.q().transpose() * y;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| LpError::RankDeficientDesign { columns: vec!["<triangular solve>".into()] })?;
    let k = x.ncols();
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| LpError::RankDeficientDesign { columns: vec!["<triangular solve>".into()] })?;
    let xtx_inv = &r_inv * r_inv.transpose();
    let residuals = y - x * &beta;
    let ssr = residuals.norm_squared();
    Ok(OlsFit { beta, residuals, xtx_inv, ssr })
}

/// Newey–West covariance of the coefficients with Bartlett weights
/// `1 - k/(lags+1)` and an `n/(n-k)` small-sample factor. With `lags = 0`
/// this is the heteroskedasticity-robust (White) estimator.
pub fn newey_west_cov(x: &DMatrix<f64>, fit: &OlsFit, lags: usize) -> DMatrix<f64> {
    let (n, k) = (x.nrows(), x.ncols());
    let scores = DMatrix::from_fn(n, k, |t, j| x[(t, j)] * fit.residuals[t]);
    let mut s = scores.transpose() * &scores;
    for lag in 1..=lags.min(n.saturating_sub(1)) {
        let w = 1.0 - lag as f64 / (lags as f64 + 1.0);
        let a = scores.rows(lag, n - lag);
        let b = scores.rows(0, n - lag);
        let g = a.transpose() * b;
        s += (&g + g.transpose()) * w;
    }
    let scale = n as f64 / (n - k) as f64;
    &fit.xtx_inv * s * &fit.xtx_inv * scale
}

/// Classical `s²(X'X)^{-1}` covariance.
pub fn classical_cov(x: &DMatrix<f64>, fit: &OlsFit) -> DMatrix<f64> {
    let s2 = fit.ssr / (x.nrows() - x.ncols()) as f64;
    &fit.xtx_inv * s2
}

/// Response at one horizon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HorizonEstimate {
    pub h: usize,
    pub estimate: f64,
    pub se: f64,
    pub lo: f64,
    pub hi: f64,
    pub n_obs: usize,
    pub ssr: f64,
    pub r_squared: f64,
}

fn z_value(ci_level: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().inverse_cdf(0.5 + ci_level / 2.0)
}

fn first_row(p: usize, l: usize, r: usize) -> usize {
    p.max(l).max(r)
}

/// Fits one horizon with fixed lag orders.
pub fn fit_horizon(data: &LpData, h: usize, p: usize, l: usize, spec: &LpSpec) -> Result<HorizonEstimate, LpError> {
    let l = if data.controls.is_empty() { 0 } else { l };
    let d = build_design(data, h, p, l, spec, first_row(p, l, spec.r))?;
    let fit = ols(&d.x, &d.y, &d.names)?;
    let cov = newey_west_cov(&d.x, &fit, spec.hac_lags(h));
    let se = cov[(d.shock_col, d.shock_col)].max(0.0).sqrt();
    let estimate = fit.beta[d.shock_col];
    let z = z_value(spec.ci_level);
    let ybar = d.y.mean();
    let sst: f64 = d.y.iter().map(|v| (v - ybar).powi(2)).sum();
    Ok(HorizonEstimate {
        h,
        estimate,
        se,
        lo: estimate - z * se,
        hi: estimate + z * se,
        n_obs: d.x.nrows(),
        ssr: fit.ssr,
        r_squared: if sst > 0.0 { 1.0 - fit.ssr / sst } else { 0.0 },
    })
}

/// Selected lag orders and the criterion value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LagChoice {
    pub p: usize,
    pub l: usize,
    /// `None` for fixed lag orders.
    pub aic: Option<f64>,
}

/// `n·ln(SSR/n) + 2k`.
pub fn aic(n: usize, ssr: f64, k: usize) -> f64 {
    n as f64 * (ssr / n as f64).ln() + 2.0 * k as f64
}

/// Minimises AIC over `p ∈ 1..=p_max`, `l ∈ 1..=l_max` on the `h = 0`
/// regression, all candidates sharing the sample trimmed for the largest
/// lags. Ties go to the smaller parameter count, then the smaller `p`.
pub fn select_lags(data: &LpData, spec: &LpSpec) -> Result<LagChoice, LpError> {
    let start = first_row(spec.p_max, if data.controls.is_empty() { 0 } else { spec.l_max }, spec.r);
    let l_range: Vec<usize> = if data.controls.is_empty() { vec![0] } else { (1..=spec.l_max).collect() };
    let mut best: Option<(f64, usize, LagChoice)> = None;
    let mut last_err = None;
    for p in 1..=spec.p_max {
        for &l in &l_range {
            let d = match build_design(data, 0, p, l, spec, start) {
                Ok(d) => d,
                Err(e) => {
                    last_err = Some(e);
                    continue;
                }
            };
            let fit = match ols(&d.x, &d.y, &d.names) {
                Ok(f) => f,
                Err(e) => {
                    last_err = Some(e);
                    continue;
                }
            };
            let k = d.x.ncols();
            let a = aic(d.x.nrows(), fit.ssr, k);
            let better = match &best {
                None => true,
                Some((ba, bk, bc)) => a < *ba || (a == *ba && (k < *bk || (k == *bk && p < bc.p))),
            };
            if better {
                best = Some((a, k, LagChoice { p, l, aic: Some(a) }));
            }
        }
    }
    best.map(|b| b.2).ok_or_else(|| last_err.unwrap_or(LpError::InsufficientSample { needed: 0, available: 0 }))
}

/// Impulse response across horizons `0..=h_max`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IrfResult {
    pub horizons: Vec<HorizonEstimate>,
    pub lags: LagChoice,
    pub ci_level: f64,
}

pub fn irf(data: &LpData, spec: &LpSpec) -> Result<IrfResult, LpError> {
    spec.validate()?;
    let lags = match spec.lag_selection {
        LagSelection::Aic => select_lags(data, spec)?,
        LagSelection::Fixed { p, l } => LagChoice { p, l: if data.controls.is_empty() { 0 } else { l }, aic: None },
    };
    let horizons = (0..=spec.h_max)
        .map(|h| fit_horizon(data, h, lags.p, lags.l, spec))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(IrfResult { horizons, lags, ci_level: spec.ci_level })
}

/// Inputs for one sector in a battery run.
#[derive(Debug, Clone)]
pub struct SectorInputs {
    pub id: String,
    pub target: Vec<f64>,
    pub endogenous: Vec<Vec<f64>>,
}

/// One (sector, variant) cell of a battery.
#[derive(Debug, Clone)]
pub struct BatteryCell {
    pub sector: String,
    pub variant: String,
    pub result: Result<IrfResult, LpError>,
}

/// Runs [`irf`] over every sector × shock variant. Failures stay in their
/// cell; output order is sector-major, then variant order.
pub fn run_battery(
    sectors: &[SectorInputs],
    variants: &[(String, Vec<f64>)],
    controls: &[Vec<f64>],
    spec: &LpSpec,
    exec: Execution,
) -> Vec<BatteryCell> {
    let nv = variants.len();
    exec.map(sectors.len() * nv, |i| {
        let (s, v) = (&sectors[i / nv], &variants[i % nv]);
        let data = LpData { target: &s.target, endogenous: &s.endogenous, shock: &v.1, controls };
        BatteryCell { sector: s.id.clone(), variant: v.0.clone(), result: irf(&data, spec) }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn noise(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    fn fixed(p: usize, l: usize) -> LpSpec {
        LpSpec { lag_selection: LagSelection::Fixed { p, l }, h_max: 4, ..Default::default() }
    }

    #[test]
    fn known_contemporaneous_coefficient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = noise(&mut rng, 400);
        let e = noise(&mut rng, 400);
        let y: Vec<f64> = x.iter().zip(&e).map(|(a, b)| 0.5 * a + 0.3 * b).collect();
        let data = LpData { target: &y, endogenous: &[], shock: &x, controls: &[] };
        let est = fit_horizon(&data, 0, 1, 0, &fixed(1, 0)).unwrap();
        assert!((est.estimate - 0.5).abs() < 3.0 * est.se, "{est:?}");
        assert!(est.lo < est.estimate && est.estimate < est.hi);
    }

    #[test]
    fn constant_shock_is_rank_deficient() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let y = noise(&mut rng, 200);
        let x = vec![0.0; 200];
        let data = LpData { target: &y, endogenous: &[], shock: &x, controls: &[] };
        match irf(&data, &fixed(2, 0)) {
            Err(LpError::RankDeficientDesign { columns }) => assert_eq!(columns, vec!["shock.lag0".to_string()]),
            other => panic!("{other:?}"),
        }
        let x = vec![1.0; 200];
        let data = LpData { target: &y, endogenous: &[], shock: &x, controls: &[] };
        assert!(matches!(irf(&data, &fixed(2, 0)), Err(LpError::RankDeficientDesign { .. })));
    }

    #[test]
    fn insufficient_sample() {
        let y = vec![1.0, 2.0, 0.5, 3.0, 1.0, 0.0, 2.0, 1.0, 4.0, 0.0, 1.0, 2.0];
        let data = LpData { target: &y, endogenous: &[], shock: &y, controls: &[] };
        assert!(matches!(fit_horizon(&data, 0, 1, 0, &fixed(1, 0)), Err(LpError::InsufficientSample { .. })));
    }

    #[test]
    fn sign_flip_and_rescaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = noise(&mut rng, 300);
        let z = vec![noise(&mut rng, 300)];
        let y: Vec<f64> = (0..300).map(|t| if t > 0 { 0.4 * x[t - 1] } else { 0.0 } + rng.sample::<f64, _>(StandardNormal)).collect();
        let spec = fixed(2, 2);
        let base = irf(&LpData { target: &y, endogenous: &[], shock: &x, controls: &z }, &spec).unwrap();
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let flipped = irf(&LpData { target: &y, endogenous: &[], shock: &neg, controls: &z }, &spec).unwrap();
        let dbl: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let doubled = irf(&LpData { target: &y, endogenous: &[], shock: &dbl, controls: &z }, &spec).unwrap();
        for ((a, b), c) in base.horizons.iter().zip(&flipped.horizons).zip(&doubled.horizons) {
            assert!((a.estimate + b.estimate).abs() <= 1e-12 * (1.0 + a.estimate.abs()));
            assert!((a.estimate - 2.0 * c.estimate).abs() <= 1e-12 * (1.0 + a.estimate.abs()));
            assert!((a.se - b.se).abs() <= 1e-12 * (1.0 + a.se));
        }
    }

    #[test]
    fn bandwidth_zero_matches_classical_when_squared_residuals_are_constant() {
        // Residuals ±1 orthogonal to both regressors.
        let n = 64;
        let xcol: Vec<f64> = (0..n).map(|t| if t % 4 < 2 { 1.0 } else { -1.0 }).collect();
        let e: Vec<f64> = (0..n).map(|t| if t % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let x = DMatrix::from_fn(n, 2, |t, j| if j == 0 { 1.0 } else { xcol[t] });
        let y = DVector::from_fn(n, |t, _| 2.0 + 0.7 * xcol[t] + e[t]);
        let names = vec!["const".to_string(), "x".to_string()];
        let fit = ols(&x, &y, &names).unwrap();
        let hac = newey_west_cov(&x, &fit, 0);
        let cls = classical_cov(&x, &fit);
        assert!((hac - cls).abs().max() < 1e-14);
        assert!(newey_west_cov(&x, &fit, 5).diagonal().iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn null_design_coverage() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let spec = fixed(1, 0);
        let mut inside = 0;
        for _ in 0..500 {
            let y = noise(&mut rng, 200);
            let x = noise(&mut rng, 200);
            let est = fit_horizon(&LpData { target: &y, endogenous: &[], shock: &x, controls: &[] }, 2, 1, 0, &spec).unwrap();
            if est.estimate.abs() <= 2.0 * est.se {
                inside += 1;
            }
        }
        assert!(inside >= 450, "{inside}/500");
    }

    #[test]
    fn aic_prefers_true_ar1_and_smallest_for_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spec = LpSpec { p_max: 4, l_max: 1, ..Default::default() };
        let (mut ar_hits, mut wn_hits) = (0, 0);
        for _ in 0..200 {
            let x = noise(&mut rng, 300);
            let e = noise(&mut rng, 300);
            let mut y = vec![0.0; 300];
            for t in 1..300 {
                y[t] = 0.6 * y[t - 1] + e[t];
            }
            if select_lags(&LpData { target: &y, endogenous: &[], shock: &x, controls: &[] }, &spec).unwrap().p == 1 {
                ar_hits += 1;
            }
            let w = noise(&mut rng, 300);
            if select_lags(&LpData { target: &w, endogenous: &[], shock: &x, controls: &[] }, &spec).unwrap().p == 1 {
                wn_hits += 1;
            }
        }
        assert!(ar_hits > 100, "{ar_hits}");
        assert!(wn_hits > 100, "{wn_hits}");
    }

    #[test]
    fn equal_ssr_prefers_fewer_parameters() {
        assert!(aic(100, 5.0, 3) < aic(100, 5.0, 4));
        // Duplicated controls are a hard error, never silently dropped.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let y = noise(&mut rng, 200);
        let x = noise(&mut rng, 200);
        let z = noise(&mut rng, 200);
        let controls = vec![z.clone(), z];
        let spec = LpSpec { p_max: 2, l_max: 1, ..Default::default() };
        let err = select_lags(&LpData { target: &y, endogenous: &[], shock: &x, controls: &controls }, &spec);
        assert!(matches!(err, Err(LpError::RankDeficientDesign { .. })));
    }

    #[test]
    fn battery_isolates_failures() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = noise(&mut rng, 150);
        let sectors = vec![
            SectorInputs { id: "A".into(), target: noise(&mut rng, 150), endogenous: vec![] },
            SectorInputs { id: "FLAT".into(), target: vec![1.0; 150], endogenous: vec![] },
        ];
        let variants = vec![("all".to_string(), x.clone()), ("half".to_string(), x.iter().map(|v| v * 0.5).collect())];
        let cells = run_battery(&sectors, &variants, &[], &fixed(1, 0), Execution::default());
        assert_eq!(cells.len(), 4);
        assert_eq!((cells[1].sector.as_str(), cells[1].variant.as_str()), ("A", "half"));
        assert!(cells[0].result.is_ok() && cells[1].result.is_ok());
        assert!(cells[2].result.is_err() && cells[3].result.is_err());
        let seq = run_battery(&sectors, &variants, &[], &fixed(1, 0), Execution::Sequential);
        assert_eq!(seq[0].result, cells[0].result);
    }
}
