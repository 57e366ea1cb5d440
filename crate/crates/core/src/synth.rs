//! Synthetic fixtures with known answers.
//!
//! The historical-mean fixture reproduces the published euro-area monthly means
//! exactly: every cell carries the table value plus a spatial pattern with zero
//! weighted mean, plus noise that averages to zero over each year block. The
//! planted scenario feeds a Germany-like temperature field into a small price
//! panel with one lagged shock response and one location-specific response.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::calendar::YearMonth;
use crate::climatology::{self, Conditioning, REFERENCE_WINDOW, THRESHOLD_WINDOW};
use crate::grid::{Bounds, GridDomain, Surface, SurfaceSeries, Weighting};
use crate::ingest::Panel;

pub const MONTHS: [&str; 12] = ["Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"];

#[derive(Debug, Clone, Copy)]
pub struct HistoricalRow {
    pub variable: &'static str,
    pub means: [f64; 12],
    /// Euro-area threshold as tabulated.
    pub ea_threshold: f64,
    /// Cell-level noise scale used by the fixture.
    pub noise_sd: f64,
}

/// Euro-area historical means (1950–1980) and 2001–2021 mean deviations.
pub const HISTORICAL_MEANS: [HistoricalRow; 4] = [
    HistoricalRow {
        variable: "temperature",
        means: [-0.6, 0.2, 3.2, 7.0, 11.7, 15.9, 18.1, 17.5, 14.0, 9.3, 4.4, 1.0],
        ea_threshold: 1.30,
        noise_sd: 2.0,
    },
    HistoricalRow {
        variable: "precipitation",
        means: [1.9, 1.9, 1.7, 1.7, 1.8, 2.0, 1.8, 1.9, 2.0, 2.1, 2.4, 2.2],
        ea_threshold: 0.02,
        noise_sd: 0.4,
    },
    HistoricalRow {
        variable: "solar_radiation",
        means: [49.0, 78.0, 127.0, 180.0, 230.0, 246.0, 246.0, 214.0, 156.0, 99.0, 57.0, 42.0],
        ea_threshold: 1.96,
        noise_sd: 15.0,
    },
    HistoricalRow {
        variable: "wind_speed",
        means: [0.08, 0.08, 0.1, 0.09, 0.09, 0.09, 0.08, 0.08, 0.07, 0.09, 0.1, 0.1],
        ea_threshold: 2.60,
        noise_sd: 0.02,
    },
];

/// Years covered by the historical-mean fixture.
pub const FIXTURE_YEARS: (i32, i32) = (1950, 2021);

/// Euro-area-like 2° grid with a few masked sea cells.
pub fn ea_domain() -> Arc<GridDomain> {
    let bounds = Bounds { lat_min: 36.0, lat_max: 70.0, lon_min: -10.0, lon_max: 30.0 };
    let full = GridDomain::full(bounds, 2.0, Weighting::CosLatitude).expect("fixed geometry");
    let mask = (0..full.n_cells())
        .map(|c| {
            let (lat, lon) = full.cell_center(c);
            !((lat > 58.0 && lon < 4.0) || (lat < 40.0 && lon > 20.0) || (lat > 66.0 && lon > 24.0))
        })
        .collect();
    full.with_mask(mask, Weighting::CosLatitude).expect("non-empty mask")
}

/// Germany-like domain: an ellipse of valid cells inside a 0.25° box.
pub fn germany_domain() -> Arc<GridDomain> {
    let bounds = Bounds { lat_min: 47.0, lat_max: 55.0, lon_min: 5.5, lon_max: 15.5 };
    let full = GridDomain::full(bounds, 0.25, Weighting::CosLatitude).expect("fixed geometry");
    let mask = (0..full.n_cells())
        .map(|c| {
            let (lat, lon) = full.cell_center(c);
            ((lat - 51.2) / 3.9).powi(2) + ((lon - 10.4) / 4.9).powi(2) <= 1.0
        })
        .collect();
    full.with_mask(mask, Weighting::CosLatitude).expect("non-empty mask")
}

fn year_block(year: i32) -> usize {
    if year <= REFERENCE_WINDOW.1 {
        0
    } else if year < THRESHOLD_WINDOW.0 {
        1
    } else {
        2
    }
}

/// Warming offset: zero through the reference window, `warming` from the
/// threshold window on, linear in between.
fn warming_at(year: i32, warming: f64) -> f64 {
    match year_block(year) {
        0 => 0.0,
        2 => warming,
        _ => {
            let span = (THRESHOLD_WINDOW.0 - REFERENCE_WINDOW.1) as f64;
            warming * (year - REFERENCE_WINDOW.1) as f64 / span
        }
    }
}

/// Gridded series over [`FIXTURE_YEARS`] whose regional monthly means over
/// the reference window equal `row.means` and whose mean anomaly over the
/// threshold window equals `warming`.
pub fn historical_series(domain: &Arc<GridDomain>, row: &HistoricalRow, warming: f64, seed: u64) -> SurfaceSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let valid = domain.valid_cells();
    let weights = domain.weights();
    let raw: Vec<f64> = valid
        .iter()
        .map(|&c| {
            let (lat, lon) = domain.cell_center(c);
            -0.4 * (lat - 50.0) + 0.1 * (lon - 10.0) + rng.sample::<f64, _>(StandardNormal)
        })
        .collect();
    let centre: f64 = valid.iter().zip(&raw).map(|(&c, p)| weights[c] * p).sum();
    let pattern: Vec<f64> = raw.iter().map(|p| (p - centre) * row.noise_sd * 0.5).collect();

    let (y0, y1) = FIXTURE_YEARS;
    let years = (y1 - y0 + 1) as usize;
    let noise_dist = Normal::new(0.0, row.noise_sd).expect("positive sd");
    // noise[year][month][cell], demeaned within each year block.
    let mut noise = vec![vec![vec![0.0; valid.len()]; 12]; years];
    for block in 0..3 {
        let members: Vec<usize> = (0..years).filter(|&i| year_block(y0 + i as i32) == block).collect();
        for m in 0..12 {
            for v in 0..valid.len() {
                let draws: Vec<f64> = members.iter().map(|_| noise_dist.sample(&mut rng)).collect();
                let mean = draws.iter().sum::<f64>() / draws.len().max(1) as f64;
                for (&i, d) in members.iter().zip(&draws) {
                    noise[i][m][v] = d - mean;
                }
            }
        }
    }
    let mut rows = Vec::with_capacity(years * 12);
    for i in 0..years {
        let w = warming_at(y0 + i as i32, warming);
        for m in 0..12 {
            rows.push((0..valid.len()).map(|v| row.means[m] + pattern[v] + w + noise[i][m][v]).collect::<Vec<f64>>());
        }
    }
    SurfaceSeries::from_valid_rows(domain.clone(), YearMonth::new(y0, 1).expect("valid"), &rows).expect("fixture geometry")
}

/// All four tabulated variables on [`ea_domain`], each warmed by its
/// euro-area threshold.
pub fn historical_fixture(seed: u64) -> Vec<(String, SurfaceSeries)> {
    let domain = ea_domain();
    HISTORICAL_MEANS
        .iter()
        .enumerate()
        .map(|(i, row)| (row.variable.to_string(), historical_series(&domain, row, row.ea_threshold, seed + i as u64)))
        .collect()
}

/// Price levels whose 12-month growth rates (in percent) equal `yoy`.
/// `base` gives the levels for the 12 months before `yoy[0]`.
pub fn levels_from_yoy(yoy: &[f64], base: &[f64; 12]) -> Vec<f64> {
    let mut levels = base.to_vec();
    for (t, g) in yoy.iter().enumerate() {
        let prev = levels[t];
        levels.push(prev * (1.0 + g / 100.0));
    }
    levels
}

pub const PLANTED_SECTORS: [&str; 4] = ["CP00", "CP0111", "CP0451", "CP0722"];
/// Sector responding to the regional shock series.
pub const PLANTED_LP_SECTOR: &str = "CP0111";
pub const PLANTED_LP_HORIZON: usize = 2;
pub const PLANTED_LP_EFFECT: f64 = 0.8;
/// Sector responding to anomalies near [`PLANTED_FIRA_CENTER`].
pub const PLANTED_FIRA_SECTOR: &str = "CP0451";
pub const PLANTED_FIRA_LAG: usize = 1;
pub const PLANTED_FIRA_CENTER: (f64, f64) = (53.0, 13.0);
/// First month of the price levels; growth rates start a year later.
pub const PLANTED_PRICE_START: (i32, u32) = (1999, 1);

/// Inputs of the planted end-to-end scenario.
#[derive(Debug, Clone)]
pub struct PlantedScenario {
    pub temperature: SurfaceSeries,
    /// Sector price levels from [`PLANTED_PRICE_START`].
    pub prices: Panel,
    /// Industrial production and commodity price levels.
    pub controls: Panel,
    /// Threshold used to build the planted shock series.
    pub threshold: f64,
}

fn bump(domain: &Arc<GridDomain>, centre: (f64, f64), width_deg: f64) -> Vec<f64> {
    domain
        .valid_cells()
        .iter()
        .map(|&c| {
            let (lat, lon) = domain.cell_center(c);
            (-((lat - centre.0).powi(2) + (lon - centre.1).powi(2)) / (2.0 * width_deg * width_deg)).exp()
        })
        .collect()
}

fn ar1(rng: &mut ChaCha8Rng, n: usize, phi: f64, mean: f64, sd: f64) -> Vec<f64> {
    let mut x = mean;
    (0..n)
        .map(|_| {
            x = mean + phi * (x - mean) + sd * rng.sample::<f64, _>(StandardNormal);
            x
        })
        .collect()
}

pub fn planted_scenario(seed: u64) -> PlantedScenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let domain = germany_domain();
    let nv = domain.n_valid();
    let centres: Vec<(f64, f64)> = (0..6).map(|_| (rng.random_range(48.0..54.5), rng.random_range(6.5..14.5))).collect();
    let bumps: Vec<Vec<f64>> = centres.iter().map(|&c| bump(&domain, c, 1.5)).collect();
    let lat_grad: Vec<f64> =
        domain.valid_cells().iter().map(|&c| -0.6 * (domain.cell_center(c).0 - 51.0)).collect();

    let (y0, y1) = FIXTURE_YEARS;
    let start = YearMonth::new(y0, 1).expect("valid");
    let n = ((y1 - y0 + 1) * 12) as usize;
    let mut state = vec![0.0; nv];
    let mut rows = Vec::with_capacity(n);
    for t in 0..n {
        let ym = start.add_months(t as i64);
        let z: Vec<f64> = (0..bumps.len()).map(|_| 1.2 * rng.sample::<f64, _>(StandardNormal)).collect();
        for (v, s) in state.iter_mut().enumerate() {
            let smooth: f64 = bumps.iter().zip(&z).map(|(b, zk)| b[v] * zk).sum();
            *s = 0.6 * *s + smooth + 0.4 * rng.sample::<f64, _>(StandardNormal);
        }
        let base = HISTORICAL_MEANS[0].means[ym.month0()] + warming_at(ym.year(), HISTORICAL_MEANS[0].ea_threshold);
        rows.push((0..nv).map(|v| base + lat_grad[v] + state[v]).collect::<Vec<f64>>());
    }
    let temperature = SurfaceSeries::from_valid_rows(domain.clone(), start, &rows).expect("fixture geometry");

    let baseline = climatology::compute_baseline(&temperature, REFERENCE_WINDOW).expect("full history");
    let anomaly = climatology::anomaly(&temperature, &baseline).expect("same domain");
    let regional = climatology::regional_mean(&anomaly, domain.mask()).expect("non-empty");
    let threshold = climatology::default_threshold(&regional, THRESHOLD_WINDOW).expect("window present").value;
    let shocks = climatology::make_shocks(&regional, threshold, Conditioning::default()).expect("positive threshold");

    let g = Surface::from_valid(domain.clone(), &bump(&domain, PLANTED_FIRA_CENTER, 0.8)).expect("conformable");
    let g_scale = g.norm();

    let price_start = YearMonth::new(PLANTED_PRICE_START.0, PLANTED_PRICE_START.1).expect("valid");
    let growth_start = price_start.add_months(12);
    let offset = (growth_start.ordinal() - start.ordinal()) as usize;
    let m = n - offset;
    let mut yoy: Vec<Vec<f64>> = PLANTED_SECTORS.iter().map(|_| ar1(&mut rng, m, 0.5, 2.0, 0.3)).collect();
    for t in 0..m {
        let s = offset + t - PLANTED_LP_HORIZON;
        yoy[1][t] += PLANTED_LP_EFFECT * shocks.values[s];
        let a = &anomaly.frames()[offset + t - PLANTED_FIRA_LAG];
        yoy[2][t] += 1.5 * g.inner_product(a).expect("conformable") / g_scale;
    }
    let mut level_cols = Vec::with_capacity(PLANTED_SECTORS.len());
    for series in &yoy {
        let mut base = [0.0; 12];
        for b in base.iter_mut() {
            *b = 100.0 + rng.random_range(-1.0..1.0);
        }
        level_cols.push(levels_from_yoy(series, &base));
    }
    let price_times = YearMonth::range(price_start, start.add_months(n as i64 - 1));
    let prices = Panel {
        times: price_times.clone(),
        ids: PLANTED_SECTORS.iter().map(|s| s.to_string()).collect(),
        values: DMatrix::from_fn(price_times.len(), level_cols.len(), |t, j| level_cols[j][t]),
    };

    let control_cols: Vec<Vec<f64>> = (0..2)
        .map(|_| {
            let mut log = 4.6;
            (0..price_times.len())
                .map(|_| {
                    log += 0.001 + 0.01 * rng.sample::<f64, _>(StandardNormal);
                    log.exp()
                })
                .collect()
        })
        .collect();
    let controls = Panel {
        times: price_times.clone(),
        ids: vec!["IP".into(), "COMM".into()],
        values: DMatrix::from_fn(price_times.len(), 2, |t, j| control_cols[j][t]),
    };
    PlantedScenario { temperature, prices, controls, threshold }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::climatology::{compute_baseline, regional_mean};
    use crate::ingest::{parse_panel, Transform};

    #[test]
    fn historical_means_are_exact() {
        let domain = ea_domain();
        assert!(domain.n_valid() < domain.n_cells());
        let s = historical_series(&domain, &HISTORICAL_MEANS[0], 1.3, 1);
        let b = compute_baseline(&s, REFERENCE_WINDOW).unwrap();
        for (m, surface) in b.month_means().iter().enumerate() {
            assert!((surface.mean() - HISTORICAL_MEANS[0].means[m]).abs() < 1e-9);
        }
    }

    #[test]
    fn threshold_window_mean_is_warming() {
        let domain = ea_domain();
        let s = historical_series(&domain, &HISTORICAL_MEANS[0], 1.3, 2);
        let b = compute_baseline(&s, REFERENCE_WINDOW).unwrap();
        let a = climatology::anomaly(&s, &b).unwrap();
        let r = regional_mean(&a, domain.mask()).unwrap();
        let t = climatology::default_threshold(&r, THRESHOLD_WINDOW).unwrap();
        assert!((t.value - 1.3).abs() < 1e-9, "{}", t.value);
        assert_eq!(t.n_periods, 21 * 12);
    }

    #[test]
    fn levels_round_trip_through_yoy() {
        let yoy = vec![2.0, -1.5, 0.0, 3.25, 1.0, 2.0, 2.0, 2.0, 2.0, 2.0, 2.0, 2.0, 5.0];
        let base = [100.0; 12];
        let levels = levels_from_yoy(&yoy, &base);
        let mut text = String::from("time,S\n");
        let t0 = YearMonth::new(2000, 1).unwrap();
        for (i, l) in levels.iter().enumerate() {
            text.push_str(&format!("{},{}\n", t0.add_months(i as i64), l));
        }
        let p = parse_panel(&text, Transform::Yoy).unwrap().panel;
        for (t, g) in yoy.iter().enumerate() {
            assert!((p.values[(t, 0)] - g).abs() < 1e-10);
        }
    }

    #[test]
    fn planted_scenario_is_reproducible() {
        let a = planted_scenario(9);
        let b = planted_scenario(9);
        assert_eq!(a.prices.values, b.prices.values);
        assert_eq!(a.temperature.frames()[100].valid_values(), b.temperature.frames()[100].valid_values());
        assert!(a.threshold > 0.5 && a.threshold < 2.5, "{}", a.threshold);
        assert!(a.temperature.domain().contains(PLANTED_FIRA_CENTER.0, PLANTED_FIRA_CENTER.1));
    }
}
