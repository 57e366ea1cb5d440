//! Functional impulse-response analysis.
//!
//! For every horizon `h` the associated-factor estimator is run between the
//! sector vector `Y_t` and the stacked design `V_{t−h}`, where
//! `V_t = [X_t, …, X_{t−q}, Y_{t−1}, …, Y_{t−s}, Z_{t−1}, …, Z_{t−l}]`.
//! The design lives in a product space whose inner product is the sum of the
//! block inner products; surface blocks enter in isometric coordinates so the
//! Euclidean product of stacked rows is exactly that sum.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::calendar::YearMonth;
use crate::exec::Execution;
use crate::factors::{self, FactorConfig, FactorError};
use crate::grid::{haversine_km, GridDomain, GridError, Surface, SurfaceSeries};
use crate::ingest::Panel;
use crate::linalg::center_columns;

/// Fewest usable periods after lag trimming.
pub const MIN_PERIODS: usize = 24;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FiraError {
    #[error("insufficient sample: {available} periods after trimming, need {needed}")]
    InsufficientSample { needed: usize, available: usize },
    #[error("inputs are not aligned: {0}")]
    NotAligned(String),
    #[error("shock centre ({lat}, {lon}) lies outside the domain")]
    CenterOutsideDomain { lat: f64, lon: f64 },
    #[error("no valid cell lies within {radius_km} km of the shock centre")]
    EmptyFootprint { radius_km: f64 },
    #[error("invalid shock: {0}")]
    InvalidShock(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    X,
    Y,
    Z,
}

/// One block of the stacked design.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Component {
    pub source: Source,
    /// Index of the Z input; 0 for X and Y.
    pub input: usize,
    pub lag: usize,
    /// First column of the block in the design matrix.
    pub offset: usize,
    pub width: usize,
    /// Coordinates of this block were divided by `scale`.
    pub scale: f64,
}

/// Additional control input, either a vector panel or a second field.
#[derive(Debug, Clone)]
pub enum ZInput {
    Panel(Panel),
    Field(SurfaceSeries),
}

impl ZInput {
    fn times(&self) -> &[YearMonth] {
        match self {
            ZInput::Panel(p) => &p.times,
            ZInput::Field(s) => s.times(),
        }
    }

    fn matrix(&self) -> DMatrix<f64> {
        match self {
            ZInput::Panel(p) => p.values.clone(),
            ZInput::Field(s) => s.isometric_matrix(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lags {
    /// Highest X lag; lag 0 is always present.
    pub q: usize,
    pub s: usize,
    pub l: usize,
}

impl Default for Lags {
    fn default() -> Self {
        Lags { q: 0, s: 0, l: 0 }
    }
}

/// Stacked design `V_t` for every period at which all lags exist.
#[derive(Debug, Clone)]
pub struct LaggedDesign {
    pub lags: Lags,
    pub components: Vec<Component>,
    /// `times[i]` is the date of row `i` of `matrix` and `y`.
    pub times: Vec<YearMonth>,
    pub matrix: DMatrix<f64>,
    /// Sector values over the same rows.
    pub y: DMatrix<f64>,
    pub sector_ids: Vec<String>,
    pub x_domain: Arc<GridDomain>,
}

impl LaggedDesign {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    /// Sum of per-block inner products of two design rows.
    pub fn inner_product(&self, u: &[f64], v: &[f64]) -> f64 {
        self.components
            .iter()
            .map(|c| {
                let r = c.offset..c.offset + c.width;
                u[r.clone()].iter().zip(&v[r]).map(|(a, b)| a * b).sum::<f64>()
            })
            .sum()
    }

    /// The contemporaneous X block, always first.
    pub fn x0(&self) -> &Component {
        &self.components[0]
    }
}

/// Assembles `V_t`. All inputs must share one monthly time axis. With
/// `block_standardize`, each block is divided by the square root of its
/// sample total variance so every block carries unit total variance.
pub fn build_design(
    x: &SurfaceSeries,
    y: &Panel,
    z: &[ZInput],
    lags: Lags,
    block_standardize: bool,
) -> Result<LaggedDesign, FiraError> {
    if y.times != x.times() {
        return Err(FiraError::NotAligned("sector panel and X differ in time axis".into()));
    }
    for (j, zi) in z.iter().enumerate() {
        if zi.times() != x.times() {
            return Err(FiraError::NotAligned(format!("Z input {j} differs in time axis")));
        }
    }
    let n = x.len();
    let z_lags = if z.is_empty() { 0 } else { lags.l };
    let start = lags.q.max(lags.s).max(z_lags);
    let rows = n.saturating_sub(start);
    if rows < MIN_PERIODS {
        return Err(FiraError::InsufficientSample { needed: MIN_PERIODS + start, available: n });
    }

    let xm = x.isometric_matrix();
    let zm: Vec<DMatrix<f64>> = z.iter().map(ZInput::matrix).collect();
    let mut blocks: Vec<(Source, usize, usize, &DMatrix<f64>)> = Vec::new();
    for lag in 0..=lags.q {
        blocks.push((Source::X, 0, lag, &xm));
    }
    for lag in 1..=lags.s {
        blocks.push((Source::Y, 0, lag, &y.values));
    }
    for (j, m) in zm.iter().enumerate() {
        for lag in 1..=lags.l {
            blocks.push((Source::Z, j, lag, m));
        }
    }
    let width: usize = blocks.iter().map(|b| b.3.ncols()).sum();
    let mut matrix = DMatrix::zeros(rows, width);
    let mut components = Vec::with_capacity(blocks.len());
    let mut offset = 0;
    for (source, input, lag, m) in blocks {
        let w = m.ncols();
        let block = m.rows(start - lag, rows).into_owned();
        let scale = if block_standardize {
            let c = center_columns(&block);
            let tv = c.norm_squared() / (rows as f64 - 1.0);
            if tv > 0.0 { tv.sqrt() } else { 1.0 }
        } else {
            1.0
        };
        matrix.columns_mut(offset, w).copy_from(&(block / scale));
        components.push(Component { source, input, lag, offset, width: w, scale });
        offset += w;
    }
    Ok(LaggedDesign {
        lags,
        components,
        times: x.times()[start..].to_vec(),
        matrix,
        y: y.values.rows(start, rows).into_owned(),
        sector_ids: y.ids.clone(),
        x_domain: x.domain().clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FiraConfig {
    pub h_max: usize,
    /// Divide each sector by its sample standard deviation before fitting.
    pub standardize_y: bool,
    pub factors: FactorConfig,
}

impl Default for FiraConfig {
    fn default() -> Self {
        FiraConfig { h_max: 12, standardize_y: true, factors: FactorConfig::default() }
    }
}

/// Associated factors at one horizon.
#[derive(Debug, Clone)]
pub struct HorizonFactors {
    pub k: usize,
    pub rho: Vec<f64>,
    /// Price-side directions over all sectors (dropped sectors carry 0), p × K.
    pub a: DMatrix<f64>,
    /// Design-side directions, D × K.
    pub b: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct HorizonFit {
    pub h: usize,
    pub n_obs: usize,
    /// `Ok` with `k = 0` when no association is detected.
    pub result: Result<HorizonFactors, FactorError>,
}

#[derive(Debug, Clone)]
pub struct FiraResult {
    pub sector_ids: Vec<String>,
    /// Per-sector scale used to standardize `Y` (1 when not standardized).
    pub y_scale: Vec<f64>,
    pub x_block: Component,
    pub x_domain: Arc<GridDomain>,
    pub horizons: Vec<HorizonFit>,
}

/// Runs the associated-factor estimator between `Y_t` and `V_{t−h}` for
/// `h = 0..=h_max`. Failures are kept per horizon.
pub fn fit_fira(design: &LaggedDesign, cfg: &FiraConfig, exec: Execution) -> FiraResult {
    let p = design.y.ncols();
    let n = design.len();
    let y_scale: Vec<f64> = (0..p)
        .map(|j| {
            if !cfg.standardize_y {
                return 1.0;
            }
            let col = design.y.column(j);
            let mean = col.mean();
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
            if var > 0.0 { var.sqrt() } else { 1.0 }
        })
        .collect();
    let y = DMatrix::from_fn(n, p, |t, j| design.y[(t, j)] / y_scale[j]);
    let horizons = exec.map(cfg.h_max + 1, |h| {
        let rows = n.saturating_sub(h);
        let yh = y.rows(h.min(n), rows).into_owned();
        let vh = design.matrix.rows(0, rows).into_owned();
        let result = match factors::fit(&yh, &vh, &cfg.factors, exec) {
            Ok(f) => {
                let k = f.factors.k;
                let mut a = DMatrix::zeros(p, k);
                for (r, &j) in f.kept.iter().enumerate() {
                    a.row_mut(j).copy_from(&f.factors.a.row(r));
                }
                Ok(HorizonFactors { k, rho: f.factors.rho, a, b: f.factors.b })
            }
            Err(FactorError::ZeroCrossCovariance) => {
                Ok(HorizonFactors { k: 0, rho: vec![], a: DMatrix::zeros(p, 0), b: DMatrix::zeros(design.dim(), 0) })
            }
            Err(e) => Err(e),
        };
        HorizonFit { h, n_obs: rows, result }
    });
    FiraResult {
        sector_ids: design.sector_ids.clone(),
        y_scale,
        x_block: design.x0().clone(),
        x_domain: design.x_domain.clone(),
        horizons,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    Disk,
    #[default]
    CosineTaper,
}

/// A synthetic spatial shock realized on a domain.
#[derive(Debug, Clone)]
pub struct ShockSurface {
    pub magnitude: f64,
    pub center: (f64, f64),
    pub radius_km: f64,
    pub profile: Profile,
    pub surface: Surface,
    /// Valid cells within the radius.
    pub footprint: Vec<usize>,
    /// Summed area of the footprint cells.
    pub area_km2: f64,
}

pub fn make_shock_surface(
    magnitude: f64,
    center: (f64, f64),
    radius_km: f64,
    profile: Profile,
    domain: &Arc<GridDomain>,
) -> Result<ShockSurface, FiraError> {
    if !(radius_km > 0.0) || !radius_km.is_finite() {
        return Err(FiraError::InvalidShock(format!("radius must be positive, got {radius_km}")));
    }
    if !magnitude.is_finite() {
        return Err(FiraError::InvalidShock("magnitude must be finite".into()));
    }
    if !domain.contains(center.0, center.1) {
        return Err(FiraError::CenterOutsideDomain { lat: center.0, lon: center.1 });
    }
    let mut values = vec![0.0; domain.n_cells()];
    let mut footprint = Vec::new();
    let mut area = 0.0;
    for &c in domain.valid_cells() {
        let d = haversine_km(center, domain.cell_center(c));
        if d <= radius_km {
            footprint.push(c);
            area += domain.cell_area_km2(c);
            values[c] = match profile {
                Profile::Disk => magnitude,
                Profile::CosineTaper => magnitude * 0.5 * (1.0 + (std::f64::consts::PI * d / radius_km).cos()),
            };
        }
    }
    if footprint.is_empty() {
        return Err(FiraError::EmptyFootprint { radius_km });
    }
    let surface = Surface::new(domain.clone(), values)?;
    Ok(ShockSurface { magnitude, center, radius_km, profile, surface, footprint, area_km2: area })
}

/// Response of every sector at one horizon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HorizonResponse {
    pub h: usize,
    /// In units of sector standard deviations when `Y` was standardized.
    pub canonical: Vec<f64>,
    /// Back-scaled to the units of the input panel.
    pub scaled: Vec<f64>,
    /// `⟨b_k|X, shock⟩_H` per factor.
    pub projections: Vec<f64>,
}

/// `Σ_k ρ_k ⟨b_k|X, shock⟩_H a_k` per horizon. Horizons whose fit failed give NaN.
pub fn respond(fira: &FiraResult, shock: &Surface) -> Result<Vec<HorizonResponse>, FiraError> {
    if !Arc::ptr_eq(shock.domain(), &fira.x_domain) && !shock.domain().same_geometry(&fira.x_domain) {
        return Err(FiraError::Grid(GridError::NonConformable));
    }
    let block = &fira.x_block;
    let coords = DVector::from_vec(shock.isometric()) / block.scale;
    let p = fira.sector_ids.len();
    Ok(fira
        .horizons
        .iter()
        .map(|hf| match &hf.result {
            Ok(f) => {
                let mut canonical = DVector::zeros(p);
                let mut projections = Vec::with_capacity(f.k);
                for k in 0..f.k {
                    let proj = f.b.column(k).rows(block.offset, block.width).dot(&coords);
                    projections.push(proj);
                    canonical += f.a.column(k) * (f.rho[k] * proj);
                }
                let scaled = canonical.iter().zip(&fira.y_scale).map(|(c, s)| c * s).collect();
                HorizonResponse { h: hf.h, canonical: canonical.iter().copied().collect(), scaled, projections }
            }
            Err(_) => HorizonResponse { h: hf.h, canonical: vec![f64::NAN; p], scaled: vec![f64::NAN; p], projections: vec![] },
        })
        .collect())
}
