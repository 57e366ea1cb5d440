//! Batch commands behind the `climfira` binary.
//!
//! Each `cmd_*` function reads a validated [`RunConfig`], writes its outputs
//! under the configured directory and returns a short summary. Errors map to
//! exit codes: 2 for configuration, 3 for data, 4 for numerical failures.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;

use crate::calendar::YearMonth;
use crate::climatology::{self, ClimatologyError, Variant};
use crate::config::{ConfigError, FactorsSpec, RunConfig, ThresholdSpec};
use crate::exec::Execution;
use crate::factors::{self, FactorError};
use crate::fira::{self, FiraConfig, FiraError, ZInput};
use crate::grid::{GridDomain, GridError, Surface, SurfaceSeries};
use crate::ingest::{self, IngestError, Panel, TimeSeries};
use crate::lp::{self, SectorInputs};
use crate::report::{self, ReportError};
use crate::synth;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ClimatologyError> for CliError {
    fn from(e: ClimatologyError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<GridError> for CliError {
    fn from(e: GridError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<FactorError> for CliError {
    fn from(e: FactorError) -> Self {
        match e {
            FactorError::InsufficientSample { .. } | FactorError::NotAligned(_) | FactorError::Grid(_) => {
                CliError::Data(e.to_string())
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<FiraError> for CliError {
    fn from(e: FiraError) -> Self {
        CliError::Data(e.to_string())
    }
}

/// Command-line overrides shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct Options {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub quiet: bool,
    pub exec: Execution,
}

/// Loads the config and applies `--out` / `--seed`.
pub fn load_config(path: &Path, opts: &Options) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(out) = &opts.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn out_dir(cfg: &RunConfig) -> Result<&Path, CliError> {
    fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", cfg.output_dir.display())))?;
    Ok(&cfg.output_dir)
}

fn say(opts: &Options, msg: impl AsRef<str>) {
    if !opts.quiet {
        println!("{}", msg.as_ref());
    }
}

/// File-name-safe form of an identifier.
pub fn slug(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn load_climate(cfg: &RunConfig, variable: &str) -> Result<SurfaceSeries, CliError> {
    let path = cfg
        .climate_path(variable)
        .ok_or_else(|| CliError::Config(format!("unknown climate variable {variable}")))?;
    Ok(ingest::load_gridded(path, variable, cfg.weighting)?)
}

/// `"all"` plus the configured regions, in name order.
fn region_names(cfg: &RunConfig) -> Vec<String> {
    let mut names = vec!["all".to_string()];
    names.extend(cfg.regions.keys().filter(|k| k.as_str() != "all").cloned());
    names
}

fn region_mask(cfg: &RunConfig, domain: &Arc<GridDomain>, name: &str) -> Vec<bool> {
    let spec = cfg.regions.get(name).copied().unwrap_or_default();
    let lat = spec.lat.unwrap_or((-90.0, 90.0));
    let lon = spec.lon.unwrap_or((-360.0, 360.0));
    let bbox = ingest::bbox_mask(domain, lat, lon);
    bbox.iter().zip(domain.mask()).map(|(a, b)| *a && *b).collect()
}

/// Domain restricted to a region.
fn region_domain(cfg: &RunConfig, domain: &Arc<GridDomain>, name: &str) -> Result<Arc<GridDomain>, CliError> {
    let mask = region_mask(cfg, domain, name);
    if !mask.iter().any(|&m| m) {
        return Err(ClimatologyError::EmptyRegion.into());
    }
    Ok(domain.with_mask(mask, cfg.weighting)?)
}

fn window_label(a: YearMonth, b: YearMonth) -> String {
    format!("{a}..{b}")
}

#[derive(Debug, Clone, Serialize)]
pub struct BaselineRow {
    pub variable: String,
    pub region: String,
    pub means: [f64; 12],
}

/// Monthly baselines per variable, one grid per calendar month, and a
/// regional summary in the layout of the historical-mean table.
pub fn cmd_baseline(cfg: &RunConfig, opts: &Options) -> Result<Vec<BaselineRow>, CliError> {
    let dir = out_dir(cfg)?;
    let mut rows = Vec::new();
    for input in &cfg.climate {
        let series = load_climate(cfg, &input.variable)?;
        let baseline = climatology::compute_baseline(&series, cfg.reference_window)?;
        let year = cfg.reference_window.0;
        let months: Vec<YearMonth> = (1..=12).map(|m| YearMonth::new(year, m).expect("valid month")).collect();
        for (m, surface) in baseline.month_means().iter().enumerate() {
            let name = format!("baseline_{}_month_{:02}.csv", slug(&input.variable), m + 1);
            ingest::write_surface_csv(&dir.join(name), surface, months[m])?;
        }
        let stack = SurfaceSeries::new(series.domain().clone(), months, baseline.month_means().to_vec())?;
        for region in region_names(cfg) {
            let mask = region_mask(cfg, series.domain(), &region);
            let means = climatology::regional_mean(&stack, &mask)?;
            let mut arr = [0.0; 12];
            arr.copy_from_slice(&means.values);
            rows.push(BaselineRow { variable: input.variable.clone(), region, means: arr });
        }
    }
    let mut header = vec!["variable", "region"];
    header.extend(synth::MONTHS);
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut v = vec![r.variable.clone(), r.region.clone()];
            v.extend(r.means.iter().map(|x| x.to_string()));
            v
        })
        .collect();
    report::write_csv(&dir.join("baseline_summary.csv"), &header, &table)?;
    if !opts.quiet {
        let (a, b) = cfg.reference_window;
        println!("Historical mean ({a}-{b})");
        println!("{:<24}{}", "", synth::MONTHS.map(|m| format!("{m:>8}")).join(""));
        for r in &rows {
            let label = format!("{} [{}]", r.variable, r.region);
            println!("{label:<24}{}", r.means.map(|x| format!("{x:>8.2}")).join(""));
        }
    }
    Ok(rows)
}

/// Regional anomaly series and the threshold derived from it.
struct RegionalAnomaly {
    field: SurfaceSeries,
    series: TimeSeries,
}

fn regional_anomaly(cfg: &RunConfig, variable: &str, region: &str) -> Result<RegionalAnomaly, CliError> {
    let series = load_climate(cfg, variable)?;
    let baseline = climatology::compute_baseline(&series, cfg.reference_window)?;
    let field = climatology::anomaly(&series, &baseline)?;
    let mask = region_mask(cfg, field.domain(), region);
    let series = climatology::regional_mean(&field, &mask)?;
    Ok(RegionalAnomaly { field, series })
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdRow {
    pub variable: String,
    pub region: String,
    pub value: f64,
    pub source: &'static str,
    pub n_periods: usize,
}

fn threshold_for(cfg: &RunConfig, variable: &str, region: &str, series: &TimeSeries) -> Result<ThresholdRow, CliError> {
    let (value, source, n_periods) = match &cfg.thresholds {
        ThresholdSpec::Explicit(m) if m.contains_key(variable) => (m[variable], "explicit", 0),
        _ => {
            let t = climatology::default_threshold(series, cfg.threshold_window)?;
            (t.value, "auto", t.n_periods)
        }
    };
    Ok(ThresholdRow { variable: variable.into(), region: region.into(), value, source, n_periods })
}

/// Regional anomaly series and thresholds for every variable and region.
pub fn cmd_anomaly(cfg: &RunConfig, opts: &Options) -> Result<Vec<ThresholdRow>, CliError> {
    let dir = out_dir(cfg)?;
    let mut rows = Vec::new();
    for input in &cfg.climate {
        let series = load_climate(cfg, &input.variable)?;
        let baseline = climatology::compute_baseline(&series, cfg.reference_window)?;
        let field = climatology::anomaly(&series, &baseline)?;
        for region in region_names(cfg) {
            let mask = region_mask(cfg, field.domain(), &region);
            let ts = climatology::regional_mean(&field, &mask)?;
            let name = format!("anomaly_{}_{}.csv", slug(&input.variable), slug(&region));
            ingest::write_series_csv(&dir.join(name), &ts)?;
            let row = threshold_for(cfg, &input.variable, &region, &ts)?;
            say(opts, format!("{} [{}]: threshold {:.4} ({})", row.variable, row.region, row.value, row.source));
            rows.push(row);
        }
    }
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.variable.clone(), r.region.clone(), r.value.to_string(), r.source.into(), r.n_periods.to_string()])
        .collect();
    report::write_csv(&dir.join("thresholds.csv"), &["variable", "region", "threshold", "source", "n_periods"], &table)?;
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct ShockSummary {
    pub variant: String,
    pub threshold: f64,
    pub count: usize,
}

struct ShockSet {
    series: Vec<(Variant, climatology::ShockSeries)>,
}

fn build_shocks(cfg: &RunConfig) -> Result<ShockSet, CliError> {
    let spec = cfg.shocks.as_ref().ok_or_else(|| CliError::Config("shocks: section required".into()))?;
    let anomaly = regional_anomaly(cfg, &spec.variable, &spec.region)?;
    let threshold = threshold_for(cfg, &spec.variable, &spec.region, &anomaly.series)?;
    let series = spec
        .variants
        .iter()
        .map(|v| {
            climatology::make_shocks(&anomaly.series, threshold.value, v.conditioning(spec.extreme_multiplier))
                .map(|s| (*v, s))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ShockSet { series })
}

/// Thresholded shock series for each configured variant.
pub fn cmd_shocks(cfg: &RunConfig, opts: &Options) -> Result<Vec<ShockSummary>, CliError> {
    let dir = out_dir(cfg)?;
    let set = build_shocks(cfg)?;
    let spec = cfg.shocks.as_ref().expect("checked in build_shocks");
    let mut out = Vec::new();
    for (v, s) in &set.series {
        let name = format!("shocks_{}_{}_{}.csv", slug(&spec.variable), slug(&spec.region), v.name());
        ingest::write_series_csv(&dir.join(name), &s.as_series())?;
        out.push(ShockSummary { variant: v.name().into(), threshold: s.threshold, count: s.count() });
        say(opts, format!("{}: {} shock months above {:.4}", v.name(), s.count(), s.threshold));
    }
    let table: Vec<Vec<String>> =
        out.iter().map(|s| vec![s.variant.clone(), s.threshold.to_string(), s.count.to_string()]).collect();
    report::write_csv(&dir.join("shocks_summary.csv"), &["variant", "threshold", "count"], &table)?;
    Ok(out)
}

fn load_prices(cfg: &RunConfig) -> Result<Panel, CliError> {
    let input = cfg.prices.as_ref().ok_or_else(|| CliError::Config("prices: section required".into()))?;
    Ok(ingest::load_panel(&input.path, input.transform)?.panel)
}

fn load_optional(input: &Option<crate::config::PanelInput>) -> Result<Option<Panel>, CliError> {
    match input {
        Some(p) => Ok(Some(ingest::load_panel(&p.path, p.transform)?.panel)),
        None => Ok(None),
    }
}

/// Common window of all axes, narrowed by `analysis_window`.
fn analysis_window(cfg: &RunConfig, axes: &[&[YearMonth]]) -> Result<(YearMonth, YearMonth), CliError> {
    let (mut a, mut b) = ingest::common_window(axes)?;
    if let Some((s, e)) = cfg.analysis_window {
        a = a.max(s);
        b = b.min(e);
        if a > b {
            return Err(IngestError::EmptyIntersection.into());
        }
    }
    Ok((a, b))
}

fn series_window(ts: &TimeSeries, a: YearMonth, b: YearMonth) -> Vec<f64> {
    ts.window(a, b).values
}

#[derive(Debug, Clone, Serialize)]
pub struct LpSummary {
    pub succeeded: usize,
    pub failed: usize,
    pub window: String,
}

/// Local-projection battery over every sector × shock variant.
pub fn cmd_lp(cfg: &RunConfig, opts: &Options) -> Result<LpSummary, CliError> {
    let prices = load_prices(cfg)?;
    let ppi = load_optional(&cfg.ppi)?;
    let controls = load_optional(&cfg.controls)?;
    let set = build_shocks(cfg)?;
    let dir = out_dir(cfg)?;

    let shock_times = set.series[0].1.times.clone();
    let mut axes: Vec<&[YearMonth]> = vec![&prices.times, &shock_times];
    if let Some(p) = &ppi {
        axes.push(&p.times);
    }
    if let Some(c) = &controls {
        axes.push(&c.times);
    }
    let (a, b) = analysis_window(cfg, &axes)?;
    let prices = prices.window(a, b);
    let ppi = ppi.map(|p| p.window(a, b));
    let control_cols: Vec<Vec<f64>> =
        controls.map(|c| c.window(a, b)).map(|c| (0..c.n_series()).map(|j| c.column(j)).collect()).unwrap_or_default();
    let sectors: Vec<SectorInputs> = prices
        .ids
        .iter()
        .enumerate()
        .map(|(j, id)| SectorInputs {
            id: id.clone(),
            target: prices.column(j),
            endogenous: ppi.as_ref().and_then(|p| p.column_index(id).map(|k| vec![p.column(k)])).unwrap_or_default(),
        })
        .collect();
    let variants: Vec<(String, Vec<f64>)> =
        set.series.iter().map(|(v, s)| (v.name().to_string(), series_window(&s.as_series(), a, b))).collect();
    let cells = lp::run_battery(&sectors, &variants, &control_cols, &cfg.lp, opts.exec);

    let mut failures = Vec::new();
    let mut ok = 0;
    for cell in &cells {
        match &cell.result {
            Ok(irf) => {
                ok += 1;
                let stem = format!("lp_{}_{}", slug(&cell.sector), slug(&cell.variant));
                report::write_csv(&dir.join(format!("{stem}.csv")), &report::IRF_HEADER, &report::irf_rows(&cell.sector, &cell.variant, irf))?;
                let title = format!("{}: {} shock", cell.sector, cell.variant);
                report::write_text(&dir.join(format!("{stem}.svg")), &report::fan_chart_svg(&title, irf))?;
            }
            Err(e) => failures.push(vec![cell.sector.clone(), cell.variant.clone(), e.to_string()]),
        }
    }
    report::write_csv(&dir.join("failures.csv"), &["sector", "variant", "error"], &failures)?;
    let summary = LpSummary { succeeded: ok, failed: failures.len(), window: window_label(a, b) };
    say(opts, format!("lp: {} cells estimated, {} failed, window {}", ok, failures.len(), summary.window));
    if ok == 0 {
        return Err(CliError::Numerical("every local projection failed; see failures.csv".into()));
    }
    Ok(summary)
}

/// Anomaly field over a region and the price panel on their common window.
fn factor_inputs(cfg: &RunConfig, spec: &FactorsSpec) -> Result<(Panel, SurfaceSeries, Option<Panel>), CliError> {
    let prices = load_prices(cfg)?;
    let controls = load_optional(&cfg.controls)?;
    let anomaly = regional_anomaly(cfg, &spec.variable, &spec.region)?;
    let domain = region_domain(cfg, anomaly.field.domain(), &spec.region)?;
    let field = anomaly.field.rehome(domain)?;
    let mut axes: Vec<&[YearMonth]> = vec![&prices.times, field.times()];
    if let Some(c) = &controls {
        axes.push(&c.times);
    }
    let (a, b) = analysis_window(cfg, &axes)?;
    Ok((prices.window(a, b), field.window(a, b), controls.map(|c| c.window(a, b))))
}

#[derive(Debug, Clone, Serialize)]
struct FactorReport<'a> {
    variable: &'a str,
    region: &'a str,
    window: String,
    seed: u64,
    rel_tol: f64,
    permutation: Option<crate::config::PermutationSpec>,
    sectors: &'a [String],
    dropped: &'a [String],
    singular_values: &'a [f64],
    null_quantiles: Option<&'a [f64]>,
    k: usize,
    rho: &'a [f64],
    regularity: factors::RegularityReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct FactorsSummary {
    pub k: usize,
    pub rho: Vec<f64>,
}

/// Associated factors between the price panel and an anomaly field.
pub fn cmd_factors(cfg: &RunConfig, opts: &Options) -> Result<FactorsSummary, CliError> {
    let spec = cfg.factors.as_ref().ok_or_else(|| CliError::Config("factors: section required".into()))?;
    let (prices, field, _) = factor_inputs(cfg, spec)?;
    let dir = out_dir(cfg)?;
    let fcfg = spec.factor_config(cfg.seed);
    let fit = factors::fit_surfaces(&prices, &field, &fcfg, opts.exec)?;
    let regularity = factors::regularity_diagnostic(&fit.fit.ops, opts.exec);
    let set = &fit.fit.factors;
    for k in 0..set.k {
        let rows: Vec<Vec<String>> =
            fit.sector_ids.iter().enumerate().map(|(j, id)| vec![id.clone(), set.a[(j, k)].to_string()]).collect();
        report::write_csv(&dir.join(format!("factor_a_{:02}.csv", k + 1)), &["sector", "loading"], &rows)?;
        let b = &fit.b_surfaces[k];
        ingest::write_surface_csv(&dir.join(format!("factor_b_{:02}.csv", k + 1)), b, field.times()[0])?;
        let title = format!("b_{} ({}, ρ = {:.3})", k + 1, spec.variable, set.rho[k]);
        report::write_text(&dir.join(format!("factor_b_{:02}.svg", k + 1)), &report::surface_map_svg(&title, b))?;
    }
    let rep = FactorReport {
        variable: &spec.variable,
        region: &spec.region,
        window: window_label(field.times()[0], *field.times().last().expect("non-empty")),
        seed: cfg.seed,
        rel_tol: spec.rel_tol,
        permutation: spec.permutation,
        sectors: &fit.sector_ids,
        dropped: &fit.dropped,
        singular_values: &fit.fit.decomposition.r,
        null_quantiles: fit.fit.null_quantiles.as_deref(),
        k: set.k,
        rho: &set.rho,
        regularity,
    };
    report::write_json(&dir.join("factors_report.json"), &rep)?;
    if rep.regularity.warning && !opts.quiet {
        eprintln!("warning: regularity partial sums do not plateau; the functional CCA may be ill-posed");
    }
    say(opts, format!("factors: K = {}, rho = {:?}", set.k, set.rho));
    Ok(FactorsSummary { k: set.k, rho: set.rho.clone() })
}

#[derive(Debug, Clone, Serialize)]
struct HorizonReport {
    h: usize,
    n_obs: usize,
    k: Option<usize>,
    rho: Vec<f64>,
    error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
struct ShockReport {
    name: String,
    magnitude: f64,
    center: (f64, f64),
    radius_km: f64,
    profile: fira::Profile,
    area_km2: f64,
    footprint_cells: usize,
    response_file: String,
}

#[derive(Debug, Clone, Serialize)]
struct FiraReport<'a> {
    variable: &'a str,
    region: &'a str,
    window: String,
    seed: u64,
    lags: fira::Lags,
    block_standardize: bool,
    standardize_y: bool,
    sectors: &'a [String],
    horizons: Vec<HorizonReport>,
    shocks: Vec<ShockReport>,
}

#[derive(Debug, Clone)]
pub struct FiraSummary {
    pub k: Vec<Option<usize>>,
    /// Per shock, per horizon, per sector (input units).
    pub responses: Vec<Vec<Vec<f64>>>,
    pub areas_km2: Vec<f64>,
}

/// Functional impulse responses to each configured spatial shock.
pub fn cmd_fira(cfg: &RunConfig, opts: &Options) -> Result<FiraSummary, CliError> {
    let spec = cfg.fira.as_ref().ok_or_else(|| CliError::Config("fira: section required".into()))?;
    let (prices, field, controls) = factor_inputs(cfg, &spec.factors)?;
    let z: Vec<ZInput> = match (spec.z_controls, controls) {
        (true, Some(c)) => vec![ZInput::Panel(c)],
        (true, None) => return Err(CliError::Config("fira.z_controls: controls section required".into())),
        _ => vec![],
    };
    // Validate every shock before fitting.
    let shocks = spec
        .shocks
        .iter()
        .map(|s| fira::make_shock_surface(s.magnitude, s.center, s.radius_km, s.profile, field.domain()))
        .collect::<Result<Vec<_>, _>>()?;
    let dir = out_dir(cfg)?;
    let design = fira::build_design(&field, &prices, &z, spec.lags, spec.block_standardize)?;
    let fcfg = FiraConfig { h_max: spec.h_max, standardize_y: spec.standardize_y, factors: spec.factors.factor_config(cfg.seed) };
    let result = fira::fit_fira(&design, &fcfg, opts.exec);
    if result.horizons.iter().all(|h| h.result.is_err()) {
        let first = result.horizons[0].result.as_ref().err().map(|e| e.to_string()).unwrap_or_default();
        return Err(CliError::Numerical(format!("FIRA failed at every horizon: {first}")));
    }
    let horizons: Vec<HorizonReport> = result
        .horizons
        .iter()
        .map(|h| match &h.result {
            Ok(f) => HorizonReport { h: h.h, n_obs: h.n_obs, k: Some(f.k), rho: f.rho.clone(), error: None },
            Err(e) => HorizonReport { h: h.h, n_obs: h.n_obs, k: None, rho: vec![], error: Some(e.to_string()) },
        })
        .collect();

    let mut shock_reports = Vec::new();
    let mut responses = Vec::new();
    for (i, (def, shock)) in spec.shocks.iter().zip(&shocks).enumerate() {
        let path = respond_surface(&result, &shock.surface)?;
        let stem = format!("fira_response_{:02}_{}", i + 1, slug(&def.name));
        let mut rows = Vec::new();
        for (j, id) in result.sector_ids.iter().enumerate() {
            for r in &path {
                rows.push(vec![id.clone(), r.h.to_string(), r.scaled[j].to_string(), r.canonical[j].to_string()]);
            }
        }
        report::write_csv(&dir.join(format!("{stem}.csv")), &["sector", "h", "response", "canonical"], &rows)?;
        let title = format!("{}: {} shock of {} at ({}, {})", def.name, spec.factors.variable, def.magnitude, def.center.0, def.center.1);
        report::write_text(
            &dir.join(format!("{stem}.svg")),
            &report::fira_heatmap_svg(&title, shock, &result.sector_ids, &path),
        )?;
        shock_reports.push(ShockReport {
            name: def.name.clone(),
            magnitude: def.magnitude,
            center: def.center,
            radius_km: def.radius_km,
            profile: def.profile,
            area_km2: shock.area_km2,
            footprint_cells: shock.footprint.len(),
            response_file: format!("{stem}.csv"),
        });
        say(opts, format!("fira: shock {} covers {:.0} km² ({} cells)", def.name, shock.area_km2, shock.footprint.len()));
        responses.push(path.iter().map(|r| r.scaled.clone()).collect());
    }
    let rep = FiraReport {
        variable: &spec.factors.variable,
        region: &spec.factors.region,
        window: window_label(design.times[0], *design.times.last().expect("non-empty")),
        seed: cfg.seed,
        lags: spec.lags,
        block_standardize: spec.block_standardize,
        standardize_y: spec.standardize_y,
        sectors: &result.sector_ids,
        horizons: horizons.clone(),
        shocks: shock_reports,
    };
    report::write_json(&dir.join("fira_report.json"), &rep)?;
    Ok(FiraSummary {
        k: horizons.iter().map(|h| h.k).collect(),
        responses,
        areas_km2: shocks.iter().map(|s| s.area_km2).collect(),
    })
}

fn respond_surface(result: &fira::FiraResult, shock: &Surface) -> Result<Vec<fira::HorizonResponse>, CliError> {
    Ok(fira::respond(result, shock)?)
}

/// Fixture kinds produced by `synth`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    Historical,
    Planted,
}

/// Writes a fixture and a matching `config.json` into `out`.
pub fn cmd_synth(kind: SynthKind, out: &Path, seed: u64, opts: &Options) -> Result<PathBuf, CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::Data(format!("cannot create {}: {e}", out.display())))?;
    let config = match kind {
        SynthKind::Historical => {
            let mut climate = Vec::new();
            for (var, series) in synth::historical_fixture(seed) {
                let file = format!("{var}.sgf");
                ingest::write_grid_binary(&out.join(&file), &series)?;
                climate.push(serde_json::json!({"variable": var, "path": file}));
            }
            serde_json::json!({
                "climate": climate,
                "regions": {"EA": {}},
                "thresholds": "auto",
                "shocks": {"variable": "temperature", "region": "EA", "variants": Variant::BATTERY},
                "seed": seed,
                "output_dir": "out"
            })
        }
        SynthKind::Planted => {
            let sc = synth::planted_scenario(seed);
            ingest::write_grid_binary(&out.join("temperature.sgf"), &sc.temperature)?;
            ingest::write_panel_csv(&out.join("prices.csv"), &sc.prices)?;
            ingest::write_panel_csv(&out.join("controls.csv"), &sc.controls)?;
            serde_json::json!({
                "climate": [{"variable": "temperature", "path": "temperature.sgf"}],
                "regions": {"DE": {}},
                "thresholds": "auto",
                "shocks": {"variable": "temperature", "region": "DE", "variants": ["all", "summer", "positive"]},
                "prices": {"path": "prices.csv", "transform": "yoy"},
                "controls": {"path": "controls.csv", "transform": "yoy"},
                "analysis_window": ["2001-01", "2021-12"],
                "lp": {"h_max": 12, "p_max": 4, "l_max": 2},
                "factors": {"variable": "temperature", "region": "DE"},
                "fira": {
                    "factors": {"variable": "temperature", "region": "DE"},
                    "lags": {"q": 1, "s": 1, "l": 0},
                    "h_max": 6,
                    "shocks": [
                        {"name": "north_east", "magnitude": 1.5, "center": [synth::PLANTED_FIRA_CENTER.0, synth::PLANTED_FIRA_CENTER.1], "radius_km": 150.0},
                        {"name": "south_west", "magnitude": 1.5, "center": [48.5, 8.5], "radius_km": 150.0}
                    ]
                },
                "seed": seed,
                "output_dir": "out"
            })
        }
    };
    let path = out.join("config.json");
    let mut text = serde_json::to_string_pretty(&config).map_err(|e| CliError::Data(e.to_string()))?;
    text.push('\n');
    report::write_text(&path, &text)?;
    say(opts, format!("wrote {}", path.display()));
    Ok(path)
}
