//! Regular latitude/longitude rasters and the discretised L² inner product.
//!
//! Cells are stored row-major with latitude rows ascending from `lat_min`
//! and longitude columns ascending from `lon_min`. Masked cells carry NaN
//! and a zero quadrature weight; valid weights sum to one.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::calendar::{check_monthly, YearMonth};

/// Mean Earth radius used for areas and great-circle distances.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Default raster spacing in degrees.
pub const DEFAULT_STEP: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GridError {
    #[error("mask has {got} cells but the grid has {expected}")]
    NonConformableMask { expected: usize, got: usize },
    #[error("no valid cell in domain")]
    EmptyDomain,
    #[error("invalid grid geometry: {0}")]
    InvalidGeometry(String),
    #[error("surfaces are defined on different domains")]
    NonConformable,
    #[error("surface has {got} values but the grid has {expected}")]
    WrongLength { expected: usize, got: usize },
    #[error("non-finite value at valid cell {0}")]
    NonFinite(usize),
    #[error("time axis is not monthly and strictly increasing at position {0}")]
    IrregularCalendar(usize),
    #[error("series has {times} timestamps but {frames} frames")]
    FrameCount { times: usize, frames: usize },
}

/// Quadrature rule for the surface inner product.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// cos(latitude of the cell centre), normalised over valid cells.
    #[default]
    CosLatitude,
    /// Equal weight for every valid cell.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

/// Raster geometry with validity mask and quadrature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDomain {
    bounds: Bounds,
    step_lat: f64,
    step_lon: f64,
    n_lat: usize,
    n_lon: usize,
    mask: Vec<bool>,
    weights: Vec<f64>,
    valid: Vec<usize>,
}

fn cell_count(extent: f64, step: f64, what: &str) -> Result<usize, GridError> {
    if !(step > 0.0) || !(extent > 0.0) || !extent.is_finite() {
        return Err(GridError::InvalidGeometry(format!(
            "{what}: extent {extent} and step {step} must be positive"
        )));
    }
    let n = (extent / step).round();
    if (n * step - extent).abs() > 1e-9 * extent.max(1.0) {
        return Err(GridError::InvalidGeometry(format!(
            "{what}: step {step} does not divide extent {extent}"
        )));
    }
    Ok(n as usize)
}

impl GridDomain {
    /// Builds a domain and its quadrature weights.
    pub fn build(
        bounds: Bounds,
        step_lat: f64,
        step_lon: f64,
        mask: Vec<bool>,
        weighting: Weighting,
    ) -> Result<Arc<GridDomain>, GridError> {
        let n_lat = cell_count(bounds.lat_max - bounds.lat_min, step_lat, "latitude")?;
        let n_lon = cell_count(bounds.lon_max - bounds.lon_min, step_lon, "longitude")?;
        if bounds.lat_min < -90.0 || bounds.lat_max > 90.0 {
            return Err(GridError::InvalidGeometry("latitude outside [-90, 90]".into()));
        }
        let expected = n_lat * n_lon;
        if mask.len() != expected {
            return Err(GridError::NonConformableMask { expected, got: mask.len() });
        }
        let mut weights = vec![0.0; expected];
        for (c, w) in weights.iter_mut().enumerate() {
            if mask[c] {
                let lat = bounds.lat_min + (c / n_lon) as f64 * step_lat + 0.5 * step_lat;
                *w = match weighting {
                    Weighting::CosLatitude => lat.to_radians().cos(),
                    Weighting::Uniform => 1.0,
                };
            }
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(GridError::EmptyDomain);
        }
        weights.iter_mut().for_each(|w| *w /= total);
        let valid = (0..expected).filter(|&c| mask[c]).collect();
        Ok(Arc::new(GridDomain {
            bounds,
            step_lat,
            step_lon,
            n_lat,
            n_lon,
            mask,
            weights,
            valid,
        }))
    }

    /// Domain with every cell valid.
    pub fn full(bounds: Bounds, step: f64, weighting: Weighting) -> Result<Arc<GridDomain>, GridError> {
        let n_lat = cell_count(bounds.lat_max - bounds.lat_min, step, "latitude")?;
        let n_lon = cell_count(bounds.lon_max - bounds.lon_min, step, "longitude")?;
        Self::build(bounds, step, step, vec![true; n_lat * n_lon], weighting)
    }

    /// Same geometry with a different mask. Weights are renormalised.
    pub fn with_mask(&self, mask: Vec<bool>, weighting: Weighting) -> Result<Arc<GridDomain>, GridError> {
        Self::build(self.bounds, self.step_lat, self.step_lon, mask, weighting)
    }

    pub fn bounds(&self) -> Bounds {
        self.bounds
    }
    pub fn step_lat(&self) -> f64 {
        self.step_lat
    }
    pub fn step_lon(&self) -> f64 {
        self.step_lon
    }
    pub fn n_lat(&self) -> usize {
        self.n_lat
    }
    pub fn n_lon(&self) -> usize {
        self.n_lon
    }
    pub fn n_cells(&self) -> usize {
        self.mask.len()
    }
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    /// Indices of valid cells, ascending.
    pub fn valid_cells(&self) -> &[usize] {
        &self.valid
    }
    pub fn n_valid(&self) -> usize {
        self.valid.len()
    }

    pub fn cell_index(&self, row: usize, col: usize) -> usize {
        row * self.n_lon + col
    }

    /// (lat, lon) of the cell centre in degrees.
    pub fn cell_center(&self, c: usize) -> (f64, f64) {
        let (r, k) = (c / self.n_lon, c % self.n_lon);
        (
            self.bounds.lat_min + (r as f64 + 0.5) * self.step_lat,
            self.bounds.lon_min + (k as f64 + 0.5) * self.step_lon,
        )
    }

    /// Spherical area of a cell in km².
    pub fn cell_area_km2(&self, c: usize) -> f64 {
        let r = c / self.n_lon;
        let south = (self.bounds.lat_min + r as f64 * self.step_lat).to_radians();
        let north = south + self.step_lat.to_radians();
        EARTH_RADIUS_KM * EARTH_RADIUS_KM * self.step_lon.to_radians() * (north.sin() - south.sin())
    }

    /// North–south edge length of a cell in km.
    pub fn cell_height_km(&self) -> f64 {
        EARTH_RADIUS_KM * self.step_lat.to_radians()
    }

    /// East–west edge length of a cell in km at the given latitude.
    pub fn cell_width_km(&self, lat: f64) -> f64 {
        EARTH_RADIUS_KM * self.step_lon.to_radians() * lat.to_radians().cos()
    }

    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        let b = self.bounds;
        (b.lat_min..=b.lat_max).contains(&lat) && (b.lon_min..=b.lon_max).contains(&lon)
    }

    /// Cell containing a point, if any.
    pub fn locate(&self, lat: f64, lon: f64) -> Option<usize> {
        if !self.contains(lat, lon) {
            return None;
        }
        let r = (((lat - self.bounds.lat_min) / self.step_lat).floor() as usize).min(self.n_lat - 1);
        let k = (((lon - self.bounds.lon_min) / self.step_lon).floor() as usize).min(self.n_lon - 1);
        Some(self.cell_index(r, k))
    }

    /// Same geometry and mask (weights may still differ by weighting rule).
    pub fn same_geometry(&self, other: &GridDomain) -> bool {
        self.bounds == other.bounds
            && self.step_lat == other.step_lat
            && self.step_lon == other.step_lon
            && self.mask == other.mask
    }
}

/// Great-circle distance in km (haversine).
pub fn haversine_km(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (la1, lo1) = (a.0.to_radians(), a.1.to_radians());
    let (la2, lo2) = (b.0.to_radians(), b.1.to_radians());
    let h = ((la2 - la1) / 2.0).sin().powi(2) + la1.cos() * la2.cos() * ((lo2 - lo1) / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// A function on a [`GridDomain`]; masked cells hold NaN.
#[derive(Debug, Clone)]
pub struct Surface {
    domain: Arc<GridDomain>,
    values: Vec<f64>,
}

impl Surface {
    /// Wraps raw cell values. Masked cells are overwritten with NaN.
    pub fn new(domain: Arc<GridDomain>, mut values: Vec<f64>) -> Result<Surface, GridError> {
        if values.len() != domain.n_cells() {
            return Err(GridError::WrongLength { expected: domain.n_cells(), got: values.len() });
        }
        for (c, v) in values.iter_mut().enumerate() {
            if !domain.mask[c] {
                *v = f64::NAN;
            } else if !v.is_finite() {
                return Err(GridError::NonFinite(c));
            }
        }
        Ok(Surface { domain, values })
    }

    pub fn constant(domain: Arc<GridDomain>, c: f64) -> Surface {
        let values = domain.mask.iter().map(|&m| if m { c } else { f64::NAN }).collect();
        Surface { domain, values }
    }

    pub fn zeros(domain: Arc<GridDomain>) -> Surface {
        Self::constant(domain, 0.0)
    }

    /// Builds a surface from valid-cell values in ascending cell order.
    pub fn from_valid(domain: Arc<GridDomain>, valid_values: &[f64]) -> Result<Surface, GridError> {
        if valid_values.len() != domain.n_valid() {
            return Err(GridError::WrongLength { expected: domain.n_valid(), got: valid_values.len() });
        }
        let mut values = vec![f64::NAN; domain.n_cells()];
        for (&c, &v) in domain.valid.iter().zip(valid_values) {
            if !v.is_finite() {
                return Err(GridError::NonFinite(c));
            }
            values[c] = v;
        }
        Ok(Surface { domain, values })
    }

    /// Inverse of [`Surface::isometric`].
    pub fn from_isometric(domain: Arc<GridDomain>, coords: &[f64]) -> Result<Surface, GridError> {
        let vals: Vec<f64> = domain
            .valid
            .iter()
            .zip(coords)
            .map(|(&c, &v)| v / domain.weights[c].sqrt())
            .collect();
        if coords.len() != domain.n_valid() {
            return Err(GridError::WrongLength { expected: domain.n_valid(), got: coords.len() });
        }
        Self::from_valid(domain, &vals)
    }

    pub fn domain(&self) -> &Arc<GridDomain> {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, c: usize) -> f64 {
        self.values[c]
    }

    /// Values of the valid cells in ascending cell order.
    pub fn valid_values(&self) -> Vec<f64> {
        self.domain.valid.iter().map(|&c| self.values[c]).collect()
    }

    /// Valid-cell values scaled by sqrt(weight): the Euclidean dot product of
    /// two such vectors equals the surface inner product.
    pub fn isometric(&self) -> Vec<f64> {
        self.domain
            .valid
            .iter()
            .map(|&c| self.values[c] * self.domain.weights[c].sqrt())
            .collect()
    }

    pub fn conformable(&self, other: &Surface) -> bool {
        Arc::ptr_eq(&self.domain, &other.domain)
    }

    /// Σ_c w_c f_c g_c over valid cells.
    pub fn inner_product(&self, other: &Surface) -> Result<f64, GridError> {
        if !self.conformable(other) {
            return Err(GridError::NonConformable);
        }
        let w = &self.domain.weights;
        Ok(self
            .domain
            .valid
            .iter()
            .map(|&c| w[c] * (self.values[c] * other.values[c]))
            .sum())
    }

    pub fn norm(&self) -> f64 {
        self.inner_product(self).expect("self is conformable").sqrt()
    }

    /// Cellwise `self + k * other`.
    pub fn axpy(&self, k: f64, other: &Surface) -> Result<Surface, GridError> {
        if !self.conformable(other) {
            return Err(GridError::NonConformable);
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + k * b).collect();
        Ok(Surface { domain: self.domain.clone(), values })
    }

    pub fn scale(&self, k: f64) -> Surface {
        Surface {
            domain: self.domain.clone(),
            values: self.values.iter().map(|v| v * k).collect(),
        }
    }

    /// Weighted mean over valid cells.
    pub fn mean(&self) -> f64 {
        let w = &self.domain.weights;
        self.domain.valid.iter().map(|&c| w[c] * self.values[c]).sum()
    }
}

/// Time-indexed stack of surfaces sharing one domain.
#[derive(Debug, Clone)]
pub struct SurfaceSeries {
    domain: Arc<GridDomain>,
    times: Vec<YearMonth>,
    frames: Vec<Surface>,
}

impl SurfaceSeries {
    pub fn new(domain: Arc<GridDomain>, times: Vec<YearMonth>, frames: Vec<Surface>) -> Result<Self, GridError> {
        if times.len() != frames.len() {
            return Err(GridError::FrameCount { times: times.len(), frames: frames.len() });
        }
        check_monthly(&times).map_err(GridError::IrregularCalendar)?;
        if frames.iter().any(|f| !Arc::ptr_eq(&f.domain, &domain)) {
            return Err(GridError::NonConformable);
        }
        Ok(SurfaceSeries { domain, times, frames })
    }

    /// Builds a series from per-frame valid-cell values.
    pub fn from_valid_rows(
        domain: Arc<GridDomain>,
        start: YearMonth,
        rows: &[Vec<f64>],
    ) -> Result<Self, GridError> {
        let frames = rows
            .iter()
            .map(|r| Surface::from_valid(domain.clone(), r))
            .collect::<Result<Vec<_>, _>>()?;
        let times = (0..rows.len()).map(|i| start.add_months(i as i64)).collect();
        Self::new(domain, times, frames)
    }

    pub fn domain(&self) -> &Arc<GridDomain> {
        &self.domain
    }
    pub fn times(&self) -> &[YearMonth] {
        &self.times
    }
    pub fn frames(&self) -> &[Surface] {
        &self.frames
    }
    pub fn len(&self) -> usize {
        self.frames.len()
    }
    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Frames restricted to the inclusive month window.
    pub fn window(&self, start: YearMonth, end: YearMonth) -> SurfaceSeries {
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| self.times[i] >= start && self.times[i] <= end)
            .collect();
        SurfaceSeries {
            domain: self.domain.clone(),
            times: keep.iter().map(|&i| self.times[i]).collect(),
            frames: keep.iter().map(|&i| self.frames[i].clone()).collect(),
        }
    }

    /// Same values re-homed onto another domain with identical geometry.
    pub fn rehome(&self, domain: Arc<GridDomain>) -> Result<SurfaceSeries, GridError> {
        if !self.domain.same_geometry(&domain) {
            return Err(GridError::NonConformable);
        }
        let frames = self
            .frames
            .iter()
            .map(|f| Surface {
                domain: domain.clone(),
                values: f.values.iter().zip(domain.mask()).map(|(&v, &m)| if m { v } else { f64::NAN }).collect(),
            })
            .collect();
        Ok(SurfaceSeries { domain, times: self.times.clone(), frames })
    }

    /// T × n_valid matrix of isometric coordinates, one row per frame.
    pub fn isometric_matrix(&self) -> nalgebra::DMatrix<f64> {
        let n = self.domain.n_valid();
        let mut m = nalgebra::DMatrix::zeros(self.len(), n);
        for (t, f) in self.frames.iter().enumerate() {
            for (j, v) in f.isometric().into_iter().enumerate() {
                m[(t, j)] = v;
            }
        }
        m
    }
}
