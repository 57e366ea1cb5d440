//! Readers and writers for gridded climate files and price/control panels,
//! plus year-on-year transforms and window alignment.
//!
//! Two grid formats are accepted:
//!
//! - long CSV, header `time,lat,lon,value` (the last column may instead be
//!   named after the variable), one row per cell-month at cell centres;
//!   missing cells are simply absent;
//! - framed binary: magic `SGF1`, little-endian `lat_min lat_max lon_min
//!   lon_max step_lat step_lon` as f64, frame count as u32, then per frame a
//!   timestamp (i32 days since 1970-01-01) followed by row-major f64 cell
//!   values with NaN for missing.
//!
//! A cell missing in any frame is masked in every frame.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::calendar::{check_monthly, YearMonth};
use crate::grid::{Bounds, GridDomain, GridError, Surface, SurfaceSeries, Weighting, DEFAULT_STEP};

pub const BINARY_MAGIC: &[u8; 4] = b"SGF1";

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("irregular calendar: month sequence breaks at position {0}")]
    IrregularCalendar(usize),
    #[error("no grid cell is observed in every frame")]
    AllMasked,
    #[error("no series remain after dropping incomplete columns")]
    NoSectorsRemain,
    #[error("inputs share no common month")]
    EmptyIntersection,
    #[error(transparent)]
    Grid(#[from] GridError),
}

fn parse_err(location: impl Into<String>, message: impl Into<String>) -> IngestError {
    IngestError::Parse { location: location.into(), message: message.into() }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io { path: path.to_path_buf(), source }
}

/// Scalar monthly series.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub times: Vec<YearMonth>,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(times: Vec<YearMonth>, values: Vec<f64>) -> Self {
        assert_eq!(times.len(), values.len(), "times and values differ in length");
        TimeSeries { times, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn window(&self, start: YearMonth, end: YearMonth) -> TimeSeries {
        let (times, values) = self
            .times
            .iter()
            .zip(&self.values)
            .filter(|(t, _)| **t >= start && **t <= end)
            .map(|(t, v)| (*t, *v))
            .unzip();
        TimeSeries { times, values }
    }
}

/// Time-indexed T × m matrix of named series with no missing values.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub times: Vec<YearMonth>,
    pub ids: Vec<String>,
    pub values: DMatrix<f64>,
}

/// Sectoral year-on-year inflation rates, one column per sector.
pub type SectorPanel = Panel;
/// Control variables, one column per series.
pub type ControlPanel = Panel;

impl Panel {
    pub fn n_series(&self) -> usize {
        self.ids.len()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn column_index(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|s| s == id)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.column(j).iter().copied().collect()
    }

    pub fn series(&self, id: &str) -> Option<TimeSeries> {
        self.column_index(id).map(|j| TimeSeries::new(self.times.clone(), self.column(j)))
    }

    pub fn window(&self, start: YearMonth, end: YearMonth) -> Panel {
        let keep: Vec<usize> = (0..self.len()).filter(|&i| self.times[i] >= start && self.times[i] <= end).collect();
        Panel {
            times: keep.iter().map(|&i| self.times[i]).collect(),
            ids: self.ids.clone(),
            values: self.values.select_rows(&keep),
        }
    }

    /// Keeps the listed columns, in the given order.
    pub fn select(&self, ids: &[String]) -> Option<Panel> {
        let idx: Vec<usize> = ids.iter().map(|s| self.column_index(s)).collect::<Option<_>>()?;
        Some(Panel { times: self.times.clone(), ids: ids.to_vec(), values: self.values.select_columns(&idx) })
    }
}

/// Transform applied to a price or control file on load.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    None,
    /// 100 · (level_t / level_{t−12} − 1); the first 12 months are dropped.
    #[default]
    Yoy,
}

/// A loaded panel together with the columns that were dropped for gaps.
#[derive(Debug, Clone)]
pub struct LoadedPanel {
    pub panel: Panel,
    pub dropped: Vec<String>,
}

/// Reads a gridded climate file in either accepted format.
pub fn load_gridded(path: &Path, variable: &str, weighting: Weighting) -> Result<SurfaceSeries, IngestError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.starts_with(BINARY_MAGIC) {
        parse_binary(&bytes, weighting)
    } else {
        let text = String::from_utf8(bytes).map_err(|e| parse_err("byte 0", format!("not UTF-8: {e}")))?;
        parse_long_csv(&text, variable, weighting)
    }
}

struct Axis {
    first: f64,
    step: f64,
    n: usize,
}

fn infer_axis(values: &[f64], what: &str) -> Result<Axis, IngestError> {
    let mut u: Vec<f64> = values.to_vec();
    u.sort_by(f64::total_cmp);
    u.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    let step = u.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let step = if step.is_finite() { step } else { DEFAULT_STEP };
    let first = u[0];
    for v in &u {
        let k = (v - first) / step;
        if (k - k.round()).abs() > 1e-6 {
            return Err(parse_err(what, format!("{what} {v} is not on a regular {step}° lattice")));
        }
    }
    let n = ((u[u.len() - 1] - first) / step).round() as usize + 1;
    Ok(Axis { first, step, n })
}

fn parse_long_csv(text: &str, variable: &str, weighting: Weighting) -> Result<SurfaceSeries, IngestError> {
    if text.trim().is_empty() {
        return Err(parse_err("line 1", "empty file"));
    }
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| parse_err("line 1", e.to_string()))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    if header.len() != 4 || header[0] != "time" || header[1] != "lat" || header[2] != "lon" || (header[3] != "value" && header[3] != variable) {
        return Err(parse_err("line 1", format!("expected header `time,lat,lon,value`, found `{}`", header.join(","))));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err("record", e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let loc = format!("line {line}");
        if rec.len() != 4 {
            return Err(parse_err(loc, "expected 4 fields"));
        }
        let time: YearMonth = rec[0].parse().map_err(|e: crate::calendar::ParseMonthError| parse_err(&loc, e.to_string()))?;
        let num = |i: usize| -> Result<f64, IngestError> {
            rec[i].trim().parse::<f64>().map_err(|e| parse_err(&loc, format!("field {}: {e}", header[i])))
        };
        rows.push((time, num(1)?, num(2)?, num(3)?, line));
    }
    if rows.is_empty() {
        return Err(parse_err("line 2", "no data rows"));
    }
    let mut times: Vec<YearMonth> = rows.iter().map(|r| r.0).collect();
    times.sort();
    times.dedup();
    check_monthly(&times).map_err(IngestError::IrregularCalendar)?;
    let lats: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let lons: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let la = infer_axis(&lats, "latitude")?;
    let lo = infer_axis(&lons, "longitude")?;
    let bounds = Bounds {
        lat_min: la.first - la.step / 2.0,
        lat_max: la.first + (la.n as f64 - 0.5) * la.step,
        lon_min: lo.first - lo.step / 2.0,
        lon_max: lo.first + (lo.n as f64 - 0.5) * lo.step,
    };
    let n_cells = la.n * lo.n;
    let t0 = times[0].ordinal();
    let mut data = vec![vec![f64::NAN; n_cells]; times.len()];
    for (time, lat, lon, v, line) in rows {
        let r = ((lat - la.first) / la.step).round() as usize;
        let k = ((lon - lo.first) / lo.step).round() as usize;
        let slot = &mut data[(time.ordinal() - t0) as usize][r * lo.n + k];
        if !slot.is_nan() {
            return Err(parse_err(format!("line {line}"), "duplicate cell-month"));
        }
        *slot = v;
    }
    assemble(bounds, la.step, lo.step, times, data, weighting)
}

fn assemble(
    bounds: Bounds,
    step_lat: f64,
    step_lon: f64,
    times: Vec<YearMonth>,
    data: Vec<Vec<f64>>,
    weighting: Weighting,
) -> Result<SurfaceSeries, IngestError> {
    let n_cells = data.first().map_or(0, Vec::len);
    let mask: Vec<bool> = (0..n_cells).map(|c| data.iter().all(|f| f[c].is_finite())).collect();
    if !mask.iter().any(|&m| m) {
        return Err(IngestError::AllMasked);
    }
    let domain = GridDomain::build(bounds, step_lat, step_lon, mask, weighting)?;
    let frames = data
        .into_iter()
        .map(|f| Surface::new(domain.clone(), f))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SurfaceSeries::new(domain, times, frames)?)
}

fn parse_binary(bytes: &[u8], weighting: Weighting) -> Result<SurfaceSeries, IngestError> {
    let mut pos = 4usize;
    let mut take = |n: usize| -> Result<&[u8], IngestError> {
        let s = bytes.get(pos..pos + n).ok_or_else(|| parse_err(format!("byte {pos}"), "unexpected end of file"))?;
        pos += n;
        Ok(s)
    };
    let mut f = [0.0f64; 6];
    for x in f.iter_mut() {
        *x = f64::from_le_bytes(take(8)?.try_into().unwrap());
    }
    let n_frames = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let bounds = Bounds { lat_min: f[0], lat_max: f[1], lon_min: f[2], lon_max: f[3] };
    let n_lat = ((f[1] - f[0]) / f[4]).round();
    let n_lon = ((f[3] - f[2]) / f[5]).round();
    if !(n_lat >= 1.0 && n_lon >= 1.0) || n_lat * n_lon > 1e9 {
        return Err(parse_err("byte 4", "invalid grid header"));
    }
    let n_cells = (n_lat * n_lon) as usize;
    if n_frames == 0 {
        return Err(parse_err("byte 52", "no frames"));
    }
    let mut times = Vec::with_capacity(n_frames);
    let mut data = Vec::with_capacity(n_frames);
    for _ in 0..n_frames {
        let days = i32::from_le_bytes(take(4)?.try_into().unwrap());
        times.push(YearMonth::from_epoch_days(days).ok_or_else(|| parse_err("frame header", "timestamp out of range"))?);
        let raw = take(8 * n_cells)?;
        data.push(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect::<Vec<f64>>());
    }
    if pos != bytes.len() {
        return Err(parse_err(format!("byte {pos}"), "trailing bytes after last frame"));
    }
    check_monthly(&times).map_err(IngestError::IrregularCalendar)?;
    assemble(bounds, f[4], f[5], times, data, weighting)
}

fn fmt_num(v: f64) -> String {
    format!("{v}")
}

/// Writes a series in long-CSV format (valid cells only).
pub fn write_grid_csv(path: &Path, series: &SurfaceSeries) -> Result<(), IngestError> {
    let d = series.domain();
    let mut out = String::from("time,lat,lon,value\n");
    for (t, frame) in series.times().iter().zip(series.frames()) {
        for &c in d.valid_cells() {
            let (lat, lon) = d.cell_center(c);
            out.push_str(&format!("{t},{},{},{}\n", fmt_num(lat), fmt_num(lon), fmt_num(frame.value(c))));
        }
    }
    fs::write(path, out).map_err(io_err(path))
}

/// Writes a single surface in long-CSV format, stamped with `time`.
pub fn write_surface_csv(path: &Path, surface: &Surface, time: YearMonth) -> Result<(), IngestError> {
    let series = SurfaceSeries::new(surface.domain().clone(), vec![time], vec![surface.clone()])?;
    write_grid_csv(path, &series)
}

/// Writes a series in framed binary format.
pub fn write_grid_binary(path: &Path, series: &SurfaceSeries) -> Result<(), IngestError> {
    let d = series.domain();
    let b = d.bounds();
    let mut out = Vec::with_capacity(56 + series.len() * (4 + 8 * d.n_cells()));
    out.extend_from_slice(BINARY_MAGIC);
    for x in [b.lat_min, b.lat_max, b.lon_min, b.lon_max, d.step_lat(), d.step_lon()] {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out.extend_from_slice(&(series.len() as u32).to_le_bytes());
    for (t, frame) in series.times().iter().zip(series.frames()) {
        out.extend_from_slice(&t.to_epoch_days().to_le_bytes());
        for &v in frame.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(&out).map_err(io_err(path))
}

/// Reads a sector or control CSV: header row of series ids, first column an
/// ISO-8601 month, empty fields missing. Columns with any gap in the
/// (transformed) sample are dropped and reported.
pub fn load_panel(path: &Path, transform: Transform) -> Result<LoadedPanel, IngestError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_panel(&text, transform)
}

pub fn parse_panel(text: &str, transform: Transform) -> Result<LoadedPanel, IngestError> {
    if text.trim().is_empty() {
        return Err(parse_err("line 1", "empty file"));
    }
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| parse_err("line 1", e.to_string()))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    if header.len() < 2 {
        return Err(parse_err("line 1", "need a time column and at least one series"));
    }
    let ids: Vec<String> = header[1..].to_vec();
    let mut times = Vec::new();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); ids.len()];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err("record", e.to_string()))?;
        let loc = format!("line {}", rec.position().map_or(0, |p| p.line()));
        if rec.len() != header.len() {
            return Err(parse_err(loc, format!("expected {} fields, found {}", header.len(), rec.len())));
        }
        times.push(rec[0].parse::<YearMonth>().map_err(|e| parse_err(&loc, e.to_string()))?);
        for (j, col) in cols.iter_mut().enumerate() {
            let field = rec[j + 1].trim();
            col.push(if field.is_empty() {
                f64::NAN
            } else {
                field.parse::<f64>().map_err(|e| parse_err(&loc, format!("column {}: {e}", ids[j])))?
            });
        }
    }
    if times.is_empty() {
        return Err(parse_err("line 2", "no data rows"));
    }
    check_monthly(&times).map_err(IngestError::IrregularCalendar)?;
    if transform == Transform::Yoy {
        if times.len() <= 12 {
            return Err(IngestError::NoSectorsRemain);
        }
        times.drain(..12);
        for col in cols.iter_mut() {
            let yoy: Vec<f64> = (12..col.len())
                .map(|t| {
                    let v = 100.0 * (col[t] / col[t - 12] - 1.0);
                    if v.is_finite() { v } else { f64::NAN }
                })
                .collect();
            *col = yoy;
        }
    }
    let mut kept_ids = Vec::new();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (id, col) in ids.into_iter().zip(cols) {
        if col.iter().all(|v| v.is_finite()) {
            kept_ids.push(id);
            kept.push(col);
        } else {
            dropped.push(id);
        }
    }
    if kept.is_empty() {
        return Err(IngestError::NoSectorsRemain);
    }
    let values = DMatrix::from_fn(times.len(), kept.len(), |t, j| kept[j][t]);
    Ok(LoadedPanel { panel: Panel { times, ids: kept_ids, values }, dropped })
}

/// Writes a panel as CSV with a `time` first column.
pub fn write_panel_csv(path: &Path, panel: &Panel) -> Result<(), IngestError> {
    let mut out = String::from("time");
    for id in &panel.ids {
        out.push(',');
        out.push_str(id);
    }
    out.push('\n');
    for (t, time) in panel.times.iter().enumerate() {
        out.push_str(&time.to_string());
        for j in 0..panel.n_series() {
            out.push(',');
            out.push_str(&fmt_num(panel.values[(t, j)]));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))
}

/// Writes `time,value`.
pub fn write_series_csv(path: &Path, series: &TimeSeries) -> Result<(), IngestError> {
    let mut out = String::from("time,value\n");
    for (t, v) in series.times.iter().zip(&series.values) {
        out.push_str(&format!("{t},{}\n", fmt_num(*v)));
    }
    fs::write(path, out).map_err(io_err(path))
}

/// Maximal common window of several contiguous monthly axes.
pub fn common_window(axes: &[&[YearMonth]]) -> Result<(YearMonth, YearMonth), IngestError> {
    let mut start: Option<YearMonth> = None;
    let mut end: Option<YearMonth> = None;
    for axis in axes {
        let (first, last) = match (axis.first(), axis.last()) {
            (Some(a), Some(b)) => (*a, *b),
            _ => return Err(IngestError::EmptyIntersection),
        };
        check_monthly(axis).map_err(IngestError::IrregularCalendar)?;
        start = Some(start.map_or(first, |s| s.max(first)));
        end = Some(end.map_or(last, |e| e.min(last)));
    }
    match (start, end) {
        (Some(s), Some(e)) if s <= e => Ok((s, e)),
        _ => Err(IngestError::EmptyIntersection),
    }
}

/// Cell mask for a named region.
pub fn bbox_mask(domain: &Arc<GridDomain>, lat: (f64, f64), lon: (f64, f64)) -> Vec<bool> {
    (0..domain.n_cells())
        .map(|c| {
            let (a, o) = domain.cell_center(c);
            a >= lat.0 && a <= lat.1 && o >= lon.0 && o <= lon.1
        })
        .collect()
}

/// Groups cell-month values by calendar month ordinal; used by tests and synth.
pub fn frames_by_month(series: &SurfaceSeries) -> BTreeMap<u32, Vec<usize>> {
    let mut out: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, t) in series.times().iter().enumerate() {
        out.entry(t.month()).or_default().push(i);
    }
    out
}
