//! Tabular and SVG outputs. Everything is written with fixed formatting so
//! identical inputs produce byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::fira::{HorizonResponse, ShockSurface};
use crate::grid::Surface;
use crate::lp::IrfResult;

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub fn write_text(path: &Path, text: &str) -> Result<(), ReportError> {
    fs::write(path, text).map_err(|source| ReportError::Io { path: path.display().to_string(), source })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ReportError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

/// Writes rows of string fields with a header.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), ReportError> {
    let err = |source| ReportError::Csv { path: path.display().to_string(), source };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    w.flush().map_err(|source| ReportError::Io { path: path.display().to_string(), source })
}

pub const IRF_HEADER: [&str; 9] = ["sector", "variant", "h", "estimate", "se", "lo", "hi", "p", "l"];

pub fn irf_rows(sector: &str, variant: &str, irf: &IrfResult) -> Vec<Vec<String>> {
    irf.horizons
        .iter()
        .map(|e| {
            vec![
                sector.to_string(),
                variant.to_string(),
                e.h.to_string(),
                e.estimate.to_string(),
                e.se.to_string(),
                e.lo.to_string(),
                e.hi.to_string(),
                irf.lags.p.to_string(),
                irf.lags.l.to_string(),
            ]
        })
        .collect()
}

fn svg_open(out: &mut String, w: f64, h: f64) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="{w:.0}" height="{h:.0}" fill="white"/>"#);
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Blue–white–red for `t ∈ [-1, 1]`.
fn diverging(t: f64) -> String {
    let t = if t.is_finite() { t.clamp(-1.0, 1.0) } else { 0.0 };
    let (r, g, b) = if t >= 0.0 {
        (255.0, 255.0 * (1.0 - t), 255.0 * (1.0 - t))
    } else {
        (255.0 * (1.0 + t), 255.0 * (1.0 + t), 255.0)
    };
    format!("#{:02x}{:02x}{:02x}", r.round() as u8, g.round() as u8, b.round() as u8)
}

fn nice_step(span: f64) -> f64 {
    if !(span > 0.0) {
        return 1.0;
    }
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    let m = if f < 1.5 {
        1.0
    } else if f < 3.5 {
        2.0
    } else if f < 7.5 {
        5.0
    } else {
        10.0
    };
    m * mag
}

/// Impulse response with its confidence band and a zero line.
pub fn fan_chart_svg(title: &str, irf: &IrfResult) -> String {
    let (w, h) = (560.0, 340.0);
    let (left, right, top, bottom) = (60.0, 20.0, 36.0, 40.0);
    let hs = &irf.horizons;
    let mut lo = hs.iter().map(|e| e.lo).fold(0.0f64, f64::min);
    let mut hi = hs.iter().map(|e| e.hi).fold(0.0f64, f64::max);
    if !(hi > lo) {
        lo -= 1.0;
        hi += 1.0;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let h_max = hs.last().map(|e| e.h).unwrap_or(1).max(1) as f64;
    let px = |hz: f64| left + (w - left - right) * hz / h_max;
    let py = |v: f64| top + (h - top - bottom) * (hi - v) / (hi - lo);

    let mut s = String::new();
    svg_open(&mut s, w, h);
    let _ = writeln!(s, r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="13">{}</text>"#, w / 2.0, escape(title));
    let step = nice_step(hi - lo);
    let mut tick = (lo / step).ceil() * step;
    while tick <= hi {
        let y = py(tick);
        let _ = writeln!(s, r##"<line x1="{left:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#e0e0e0"/>"##, w - right);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, left - 6.0, y + 4.0, fmt_tick(tick, step));
        tick += step;
    }
    let hstep = if h_max > 12.0 { 6 } else { 2 };
    for e in hs.iter().filter(|e| e.h % hstep == 0) {
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, px(e.h as f64), h - bottom + 16.0, e.h);
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">horizon (months)</text>"#, w / 2.0, h - 6.0);

    let mut band = String::new();
    for e in hs {
        let _ = write!(band, "{:.2},{:.2} ", px(e.h as f64), py(e.hi));
    }
    for e in hs.iter().rev() {
        let _ = write!(band, "{:.2},{:.2} ", px(e.h as f64), py(e.lo));
    }
    let _ = writeln!(s, r##"<polygon points="{}" fill="#9ecae1" fill-opacity="0.6" stroke="none"/>"##, band.trim_end());
    let _ = writeln!(s, r##"<line x1="{left:.1}" y1="{:.2}" x2="{:.1}" y2="{:.2}" stroke="#555" stroke-dasharray="4 3"/>"##, py(0.0), w - right, py(0.0));
    let line: Vec<String> = hs.iter().map(|e| format!("{:.2},{:.2}", px(e.h as f64), py(e.estimate))).collect();
    let _ = writeln!(s, r##"<polyline points="{}" fill="none" stroke="#08519c" stroke-width="2"/>"##, line.join(" "));
    let _ = writeln!(
        s,
        r##"<rect x="{left:.1}" y="{top:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#333"/>"##,
        w - left - right,
        h - top - bottom
    );
    s.push_str("</svg>\n");
    s
}

fn fmt_tick(v: f64, step: f64) -> String {
    let decimals = if step >= 1.0 { 0 } else { (-step.log10().floor()) as usize };
    let v = if v.abs() < step * 1e-9 { 0.0 } else { v };
    format!("{v:.decimals$}")
}

fn surface_cells(s: &mut String, surface: &Surface, x0: f64, y0: f64, width: f64, height: f64, scale: f64) {
    let d = surface.domain();
    let (cw, ch) = (width / d.n_lon() as f64, height / d.n_lat() as f64);
    for c in 0..d.n_cells() {
        let (row, col) = (c / d.n_lon(), c % d.n_lon());
        // Row 0 is the southernmost band; draw north up.
        let y = y0 + height - (row + 1) as f64 * ch;
        let x = x0 + col as f64 * cw;
        let fill = if d.mask()[c] { diverging(surface.value(c) / scale) } else { "#d9d9d9".to_string() };
        let _ = writeln!(s, r#"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="{fill}"/>"#, cw + 0.01, ch + 0.01);
    }
}

fn max_abs(values: impl Iterator<Item = f64>) -> f64 {
    let m = values.filter(|v| v.is_finite()).fold(0.0f64, |a, v| a.max(v.abs()));
    if m > 0.0 { m } else { 1.0 }
}

/// Cell map of one surface on a symmetric colour scale.
pub fn surface_map_svg(title: &str, surface: &Surface) -> String {
    let d = surface.domain();
    let aspect = (d.n_lat() as f64 * d.step_lat()) / (d.n_lon() as f64 * d.step_lon());
    let width = 400.0;
    let height = (width * aspect).clamp(120.0, 600.0);
    let mut s = String::new();
    svg_open(&mut s, width + 40.0, height + 60.0);
    let _ = writeln!(s, r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="13">{}</text>"#, (width + 40.0) / 2.0, escape(title));
    let scale = max_abs(surface.valid_values().into_iter());
    surface_cells(&mut s, surface, 20.0, 36.0, width, height, scale);
    let _ = writeln!(s, r#"<text x="20" y="{:.1}">scale ±{}</text>"#, height + 54.0, fmt_sig(scale));
    s.push_str("</svg>\n");
    s
}

fn fmt_sig(v: f64) -> String {
    format!("{v:.3e}")
}

/// Shock map beside a sector-by-horizon response panel.
pub fn fira_heatmap_svg(title: &str, shock: &ShockSurface, sectors: &[String], responses: &[HorizonResponse]) -> String {
    let d = shock.surface.domain();
    let map_w = 260.0;
    let aspect = (d.n_lat() as f64 * d.step_lat()) / (d.n_lon() as f64 * d.step_lon());
    let map_h = (map_w * aspect).clamp(120.0, 400.0);
    let cell_h = 14.0;
    let cell_w = (300.0 / responses.len().max(1) as f64).clamp(8.0, 30.0);
    let label_w = 70.0;
    let panel_x = 20.0 + map_w + 40.0 + label_w;
    let panel_h = cell_h * sectors.len() as f64;
    let width = panel_x + cell_w * responses.len() as f64 + 20.0;
    let height = 36.0 + map_h.max(panel_h) + 50.0;

    let mut s = String::new();
    svg_open(&mut s, width, height);
    let _ = writeln!(s, r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="13">{}</text>"#, width / 2.0, escape(title));
    let mag = shock.magnitude.abs();
    surface_cells(&mut s, &shock.surface, 20.0, 36.0, map_w, map_h, if mag > 0.0 { mag } else { 1.0 });
    let _ = writeln!(
        s,
        r#"<text x="20" y="{:.1}">magnitude {} | radius {} km | area {:.0} km²</text>"#,
        36.0 + map_h + 16.0,
        shock.magnitude,
        shock.radius_km,
        shock.area_km2
    );

    let scale = max_abs(responses.iter().flat_map(|r| r.scaled.iter().copied()));
    for (j, id) in sectors.iter().enumerate() {
        let y = 36.0 + j as f64 * cell_h;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, panel_x - 4.0, y + cell_h - 3.0, escape(id));
        for (i, r) in responses.iter().enumerate() {
            let v = r.scaled.get(j).copied().unwrap_or(f64::NAN);
            let fill = if v.is_finite() { diverging(v / scale) } else { "#bdbdbd".to_string() };
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{y:.2}" width="{cell_w:.2}" height="{cell_h:.2}" fill="{fill}"/>"#,
                panel_x + i as f64 * cell_w
            );
        }
    }
    for (i, r) in responses.iter().enumerate().filter(|(_, r)| r.h % 3 == 0) {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            panel_x + (i as f64 + 0.5) * cell_w,
            36.0 + panel_h + 14.0,
            r.h
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}">horizon (months), scale ±{}</text>"#,
        panel_x,
        36.0 + panel_h + 30.0,
        fmt_sig(scale)
    );
    s.push_str("</svg>\n");
    s
}
