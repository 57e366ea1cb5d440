//! Monthly baselines, anomalies, regional means and thresholded shocks.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::calendar::{Season, YearMonth};
use crate::grid::{GridDomain, GridError, Surface, SurfaceSeries};
use crate::ingest::TimeSeries;

/// Default reference period for baselines.
pub const REFERENCE_WINDOW: (i32, i32) = (1950, 1980);
/// Default period whose mean anomaly sets the shock threshold.
pub const THRESHOLD_WINDOW: (i32, i32) = (2001, 2021);
/// Default multiplier on the threshold for the extreme-event variant.
pub const EXTREME_MULTIPLIER: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClimatologyError {
    #[error("window {0}-{1} does not cover every calendar month")]
    InsufficientHistory(i32, i32),
    #[error("region contains no valid cell")]
    EmptyRegion,
    #[error("region mask has {got} cells, grid has {expected}")]
    RegionSize { expected: usize, got: usize },
    #[error("shock threshold must be positive, got {0}")]
    NonPositiveThreshold(f64),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Cellwise mean for each calendar month over a reference window.
#[derive(Debug, Clone)]
pub struct MonthlyBaseline {
    domain: Arc<GridDomain>,
    month_means: Vec<Surface>,
    reference_window: (i32, i32),
}

impl MonthlyBaseline {
    pub fn domain(&self) -> &Arc<GridDomain> {
        &self.domain
    }

    /// Index 0 = January.
    pub fn month_means(&self) -> &[Surface] {
        &self.month_means
    }

    pub fn month(&self, m: YearMonth) -> &Surface {
        &self.month_means[m.month0()]
    }

    pub fn reference_window(&self) -> (i32, i32) {
        self.reference_window
    }
}

/// Baseline over the inclusive year window.
pub fn compute_baseline(series: &SurfaceSeries, window: (i32, i32)) -> Result<MonthlyBaseline, ClimatologyError> {
    let domain = series.domain().clone();
    let n = domain.n_cells();
    let mut sums = vec![vec![0.0; n]; 12];
    let mut counts = [0usize; 12];
    for (t, f) in series.times().iter().zip(series.frames()) {
        if t.year() < window.0 || t.year() > window.1 {
            continue;
        }
        let m = t.month0();
        counts[m] += 1;
        for &c in domain.valid_cells() {
            sums[m][c] += f.value(c);
        }
    }
    if counts.iter().any(|&k| k == 0) {
        return Err(ClimatologyError::InsufficientHistory(window.0, window.1));
    }
    let month_means = sums
        .into_iter()
        .zip(counts)
        .map(|(s, k)| Surface::new(domain.clone(), s.into_iter().map(|v| v / k as f64).collect()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MonthlyBaseline { domain, month_means, reference_window: window })
}

/// Deviation of every frame from its calendar-month baseline.
pub fn anomaly(series: &SurfaceSeries, baseline: &MonthlyBaseline) -> Result<SurfaceSeries, ClimatologyError> {
    if !Arc::ptr_eq(series.domain(), &baseline.domain) {
        return Err(GridError::NonConformable.into());
    }
    let frames = series
        .times()
        .iter()
        .zip(series.frames())
        .map(|(t, f)| f.axpy(-1.0, baseline.month(*t)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SurfaceSeries::new(series.domain().clone(), series.times().to_vec(), frames)?)
}

/// Per-period mean over the region, with quadrature weights renormalised
/// over `region ∧ mask`.
pub fn regional_mean(series: &SurfaceSeries, region: &[bool]) -> Result<TimeSeries, ClimatologyError> {
    let d = series.domain();
    if region.len() != d.n_cells() {
        return Err(ClimatologyError::RegionSize { expected: d.n_cells(), got: region.len() });
    }
    let cells: Vec<usize> = d.valid_cells().iter().copied().filter(|&c| region[c]).collect();
    let total: f64 = cells.iter().map(|&c| d.weights()[c]).sum();
    if cells.is_empty() || !(total > 0.0) {
        return Err(ClimatologyError::EmptyRegion);
    }
    let w: Vec<f64> = cells.iter().map(|&c| d.weights()[c] / total).collect();
    let values = series
        .frames()
        .iter()
        .map(|f| cells.iter().zip(&w).map(|(&c, wc)| wc * f.value(c)).sum())
        .collect();
    Ok(TimeSeries::new(series.times().to_vec(), values))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignFilter {
    Positive,
    Negative,
    #[default]
    Both,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeasonFilter {
    #[default]
    All,
    Spring,
    Summer,
    Autumn,
    Winter,
}

impl SeasonFilter {
    fn admits(self, t: YearMonth) -> bool {
        let s = Season::of(t);
        match self {
            SeasonFilter::All => true,
            SeasonFilter::Spring => s == Season::Spring,
            SeasonFilter::Summer => s == Season::Summer,
            SeasonFilter::Autumn => s == Season::Autumn,
            SeasonFilter::Winter => s == Season::Winter,
        }
    }
}

/// Which periods of an anomaly series count as shocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Conditioning {
    #[serde(default)]
    pub sign: SignFilter,
    #[serde(default)]
    pub season: SeasonFilter,
    #[serde(default = "one")]
    pub extreme_multiplier: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for Conditioning {
    fn default() -> Self {
        Conditioning { sign: SignFilter::Both, season: SeasonFilter::All, extreme_multiplier: 1.0 }
    }
}

/// Named shock variants used by the regression battery.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    All,
    Spring,
    Summer,
    Autumn,
    Winter,
    Positive,
    Negative,
    Extreme,
}

impl Variant {
    pub const BATTERY: [Variant; 8] = [
        Variant::All,
        Variant::Spring,
        Variant::Summer,
        Variant::Autumn,
        Variant::Winter,
        Variant::Positive,
        Variant::Negative,
        Variant::Extreme,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::All => "all",
            Variant::Spring => "spring",
            Variant::Summer => "summer",
            Variant::Autumn => "autumn",
            Variant::Winter => "winter",
            Variant::Positive => "positive",
            Variant::Negative => "negative",
            Variant::Extreme => "extreme",
        }
    }

    pub fn conditioning(self, extreme_multiplier: f64) -> Conditioning {
        let mut c = Conditioning::default();
        match self {
            Variant::All => {}
            Variant::Spring => c.season = SeasonFilter::Spring,
            Variant::Summer => c.season = SeasonFilter::Summer,
            Variant::Autumn => c.season = SeasonFilter::Autumn,
            Variant::Winter => c.season = SeasonFilter::Winter,
            Variant::Positive => c.sign = SignFilter::Positive,
            Variant::Negative => c.sign = SignFilter::Negative,
            Variant::Extreme => c.extreme_multiplier = extreme_multiplier,
        }
        c
    }
}

/// Anomaly series with non-shock periods zeroed.
#[derive(Debug, Clone, PartialEq)]
pub struct ShockSeries {
    pub times: Vec<YearMonth>,
    pub values: Vec<f64>,
    pub threshold: f64,
    pub conditioning: Conditioning,
}

impl ShockSeries {
    /// Number of nonzero periods.
    pub fn count(&self) -> usize {
        self.values.iter().filter(|v| **v != 0.0).count()
    }

    pub fn as_series(&self) -> TimeSeries {
        TimeSeries::new(self.times.clone(), self.values.clone())
    }

    pub fn scaled(&self, k: f64) -> ShockSeries {
        ShockSeries { values: self.values.iter().map(|v| v * k).collect(), ..self.clone() }
    }
}

/// Keeps deviations that exceed the threshold (strictly) in the admitted
/// direction, fall in the admitted season and reach `threshold ×
/// extreme_multiplier` in magnitude. Everything else becomes exactly zero.
pub fn make_shocks(anomaly: &TimeSeries, threshold: f64, conditioning: Conditioning) -> Result<ShockSeries, ClimatologyError> {
    if !(threshold > 0.0) {
        return Err(ClimatologyError::NonPositiveThreshold(threshold));
    }
    let cut = threshold * conditioning.extreme_multiplier.max(1.0);
    let values = anomaly
        .times
        .iter()
        .zip(&anomaly.values)
        .map(|(t, &d)| {
            let sign_ok = match conditioning.sign {
                SignFilter::Positive => d > threshold,
                SignFilter::Negative => d < -threshold,
                SignFilter::Both => d.abs() > threshold,
            };
            if sign_ok && conditioning.season.admits(*t) && d.abs() >= cut {
                d
            } else {
                0.0
            }
        })
        .collect();
    Ok(ShockSeries { times: anomaly.times.clone(), values, threshold, conditioning })
}

/// Mean anomaly over a year window, the default shock threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Threshold {
    pub value: f64,
    pub n_periods: usize,
    /// The mean is not positive, so it cannot serve as a threshold.
    pub degenerate: bool,
}

pub fn default_threshold(anomaly: &TimeSeries, window: (i32, i32)) -> Result<Threshold, ClimatologyError> {
    let in_window: Vec<f64> = anomaly
        .times
        .iter()
        .zip(&anomaly.values)
        .filter(|(t, _)| t.year() >= window.0 && t.year() <= window.1)
        .map(|(_, v)| *v)
        .collect();
    if in_window.is_empty() {
        return Err(ClimatologyError::InsufficientHistory(window.0, window.1));
    }
    let value = in_window.iter().sum::<f64>() / in_window.len() as f64;
    Ok(Threshold { value, n_periods: in_window.len(), degenerate: !(value > 0.0) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Bounds, Weighting};
    use proptest::prelude::*;

    fn ym(y: i32, m: u32) -> YearMonth {
        YearMonth::new(y, m).unwrap()
    }

    fn domain() -> Arc<GridDomain> {
        let b = Bounds { lat_min: 45.0, lat_max: 47.0, lon_min: 5.0, lon_max: 7.0 };
        GridDomain::build(b, 1.0, 1.0, vec![true, true, false, true], Weighting::CosLatitude).unwrap()
    }

    fn series_from(d: &Arc<GridDomain>, start: YearMonth, n: usize, f: impl Fn(YearMonth, usize) -> f64) -> SurfaceSeries {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let t = start.add_months(i as i64);
                d.valid_cells().iter().map(|&c| f(t, c)).collect()
            })
            .collect();
        SurfaceSeries::from_valid_rows(d.clone(), start, &rows).unwrap()
    }

    #[test]
    fn constant_and_month_index_baselines() {
        let d = domain();
        let s = series_from(&d, ym(1950, 1), 31 * 12, |_, _| 5.0);
        let b = compute_baseline(&s, REFERENCE_WINDOW).unwrap();
        for m in b.month_means() {
            for &c in d.valid_cells() {
                assert_eq!(m.value(c), 5.0);
            }
        }
        let s = series_from(&d, ym(1950, 1), 30 * 12, |t, _| t.month() as f64);
        let b = compute_baseline(&s, REFERENCE_WINDOW).unwrap();
        for (k, m) in b.month_means().iter().enumerate() {
            assert_eq!(m.value(0), (k + 1) as f64);
        }
    }

    #[test]
    fn baseline_needs_every_month() {
        let d = domain();
        let s = series_from(&d, ym(1950, 1), 11, |_, _| 1.0);
        assert_eq!(compute_baseline(&s, REFERENCE_WINDOW).unwrap_err(), ClimatologyError::InsufficientHistory(1950, 1980));
    }

    #[test]
    fn anomaly_identities() {
        let d = domain();
        let s = series_from(&d, ym(1950, 1), 24, |t, c| t.month() as f64 * 0.3 + c as f64);
        let b = compute_baseline(&s, (1950, 1950)).unwrap();
        // Series built from its own baseline has zero anomaly.
        let rebuilt = series_from(&d, ym(1950, 1), 36, |t, c| b.month(t).value(c));
        let a = anomaly(&rebuilt, &b).unwrap();
        for f in a.frames() {
            for &c in d.valid_cells() {
                assert_eq!(f.value(c), 0.0);
            }
        }
        let zero = compute_baseline(&series_from(&d, ym(1950, 1), 12, |_, _| 0.0), (1950, 1950)).unwrap();
        let a = anomaly(&s, &zero).unwrap();
        assert_eq!(a.frames()[5].valid_values(), s.frames()[5].valid_values());
        let other = series_from(&domain(), ym(1950, 1), 12, |_, _| 0.0);
        assert!(anomaly(&other, &b).is_err());
    }

    #[test]
    fn regional_mean_examples() {
        let d = domain();
        let s = series_from(&d, ym(2000, 1), 3, |t, c| t.month() as f64 * 10.0 + c as f64);
        let all = regional_mean(&series_from(&d, ym(2000, 1), 2, |_, _| 2.5), &[true; 4]).unwrap();
        assert!(all.values.iter().all(|v| (v - 2.5).abs() < 1e-14));
        let single = regional_mean(&s, &[false, true, false, false]).unwrap();
        assert_eq!(single.values, vec![11.0, 21.0, 31.0]);
        assert_eq!(regional_mean(&s, &[false, false, true, false]).unwrap_err(), ClimatologyError::EmptyRegion);
        // Brute-force weighted mean over cells {0, 3}.
        let r = regional_mean(&s, &[true, false, true, true]).unwrap();
        let (w0, w3) = (45.5f64.to_radians().cos(), 46.5f64.to_radians().cos());
        for (i, v) in r.values.iter().enumerate() {
            let base = (i + 1) as f64 * 10.0;
            let oracle = (w0 * base + w3 * (base + 3.0)) / (w0 + w3);
            assert!((v - oracle).abs() < 1e-12);
        }
    }

    fn ts(values: &[f64]) -> TimeSeries {
        TimeSeries::new((0..values.len()).map(|i| ym(2001, 1).add_months(i as i64)).collect(), values.to_vec())
    }

    #[test]
    fn shock_examples() {
        let pos = Conditioning { sign: SignFilter::Positive, ..Default::default() };
        let s = make_shocks(&ts(&[1.2, 1.4, -1.5]), 1.3, pos).unwrap();
        assert_eq!(s.values, vec![0.0, 1.4, 0.0]);
        let s = make_shocks(&ts(&[0.1, -0.2, 1.0]), 1.3, Conditioning::default()).unwrap();
        assert_eq!(s.count(), 0);
        let neg = Conditioning { sign: SignFilter::Negative, ..Default::default() };
        assert_eq!(make_shocks(&ts(&[-1.2, -1.4]), 1.3, neg).unwrap().values, vec![0.0, -1.4]);
        // Strict comparison at the threshold itself.
        assert_eq!(make_shocks(&ts(&[1.3]), 1.3, Conditioning::default()).unwrap().values, vec![0.0]);
        assert!(make_shocks(&ts(&[1.0]), 0.0, Conditioning::default()).is_err());
    }

    #[test]
    fn sign_truth_table() {
        // Enumerated filter truth table for threshold 1.3.
        let devs = [-2.0, -1.4, -1.3, -1.2, 0.0, 1.2, 1.3, 1.4, 2.0];
        let expect_pos = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.4, 2.0];
        let expect_neg = [-2.0, -1.4, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let expect_both = [-2.0, -1.4, 0.0, 0.0, 0.0, 0.0, 0.0, 1.4, 2.0];
        let run = |sign| make_shocks(&ts(&devs), 1.3, Conditioning { sign, ..Default::default() }).unwrap().values;
        assert_eq!(run(SignFilter::Positive), expect_pos);
        assert_eq!(run(SignFilter::Negative), expect_neg);
        assert_eq!(run(SignFilter::Both), expect_both);
        let ext = Conditioning { extreme_multiplier: 1.5, ..Default::default() };
        assert_eq!(make_shocks(&ts(&devs), 1.3, ext).unwrap().values, [-2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 2.0]);
    }

    #[test]
    fn thresholds() {
        let t = default_threshold(&ts(&vec![1.33; 30]), (2001, 2021)).unwrap();
        assert!((t.value - 1.33).abs() < 1e-12 && !t.degenerate);
        let t = default_threshold(&ts(&[0.0; 12]), (2001, 2021)).unwrap();
        assert!(t.value == 0.0 && t.degenerate);
        let vals = [0.5, 2.0, -0.25, 1.75];
        let t = default_threshold(&ts(&vals), (2001, 2021)).unwrap();
        assert!((t.value - vals.iter().sum::<f64>() / 4.0).abs() < 1e-15);
        assert!(default_threshold(&ts(&vals), (1990, 1999)).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn season_partition_and_sign_exclusivity(
            devs in proptest::collection::vec(-4.0f64..4.0, 1..60),
            threshold in 0.05f64..2.0,
            mult in 1.0f64..3.0,
        ) {
            let a = ts(&devs);
            let all = make_shocks(&a, threshold, Conditioning::default()).unwrap();
            let mut sum = vec![0.0; devs.len()];
            for season in [SeasonFilter::Spring, SeasonFilter::Summer, SeasonFilter::Autumn, SeasonFilter::Winter] {
                let s = make_shocks(&a, threshold, Conditioning { season, ..Default::default() }).unwrap();
                for (acc, v) in sum.iter_mut().zip(&s.values) {
                    *acc += v;
                }
            }
            prop_assert_eq!(&sum, &all.values);
            let p = make_shocks(&a, threshold, Conditioning { sign: SignFilter::Positive, ..Default::default() }).unwrap();
            let n = make_shocks(&a, threshold, Conditioning { sign: SignFilter::Negative, ..Default::default() }).unwrap();
            for (x, y) in p.values.iter().zip(&n.values) {
                prop_assert!(*x == 0.0 || *y == 0.0);
            }
            let e1 = make_shocks(&a, threshold, Conditioning { extreme_multiplier: mult, ..Default::default() }).unwrap();
            let e2 = make_shocks(&a, threshold, Conditioning { extreme_multiplier: mult + 0.5, ..Default::default() }).unwrap();
            prop_assert!(e2.count() <= e1.count() && e1.count() <= all.count());
            for v in &all.values {
                prop_assert!(*v == 0.0 || v.abs() > threshold);
            }
        }
    }
}
