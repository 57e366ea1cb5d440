//! JSON run configuration for the command-line front end.
//!
//! Relative paths are resolved against the directory holding the config file.
//! Unknown keys are rejected everywhere.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize, Serializer};

use crate::calendar::YearMonth;
use crate::climatology::{Variant, EXTREME_MULTIPLIER, REFERENCE_WINDOW, THRESHOLD_WINDOW};
use crate::factors::{FactorConfig, PermutationTest};
use crate::fira::{Lags, Profile};
use crate::grid::Weighting;
use crate::ingest::Transform;
use crate::lp::LpSpec;

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("{key}: file not found: {path}")]
    MissingFile { key: String, path: PathBuf },
    #[error("{key}: {message}")]
    Invalid { key: String, message: String },
}

fn invalid(key: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.into(), message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClimateInput {
    pub variable: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PanelInput {
    pub path: PathBuf,
    #[serde(default)]
    pub transform: Transform,
}

/// Latitude/longitude box intersected with the data mask. Omitted bounds
/// leave that axis unrestricted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    pub lat: Option<(f64, f64)>,
    pub lon: Option<(f64, f64)>,
}

/// `"auto"` or an explicit threshold per variable.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum ThresholdSpec {
    #[default]
    Auto,
    Explicit(BTreeMap<String, f64>),
}

impl Serialize for ThresholdSpec {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ThresholdSpec::Auto => s.serialize_str("auto"),
            ThresholdSpec::Explicit(m) => m.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for ThresholdSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Word(String),
            Map(BTreeMap<String, f64>),
        }
        match Raw::deserialize(d)? {
            Raw::Word(w) if w == "auto" => Ok(ThresholdSpec::Auto),
            Raw::Word(w) => Err(de::Error::custom(format!("thresholds: expected \"auto\" or a map, got \"{w}\""))),
            Raw::Map(m) => Ok(ThresholdSpec::Explicit(m)),
        }
    }
}

/// Which regional anomaly drives the shock battery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShockSpec {
    pub variable: String,
    #[serde(default = "default_region")]
    pub region: String,
    #[serde(default = "default_variants")]
    pub variants: Vec<Variant>,
    #[serde(default = "default_extreme")]
    pub extreme_multiplier: f64,
}

fn default_region() -> String {
    "all".into()
}

fn default_variants() -> Vec<Variant> {
    vec![Variant::All]
}

fn default_extreme() -> f64 {
    EXTREME_MULTIPLIER
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PermutationSpec {
    pub shuffles: usize,
    pub level: f64,
}

impl Default for PermutationSpec {
    fn default() -> Self {
        let p = PermutationTest::default();
        PermutationSpec { shuffles: p.shuffles, level: p.level }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorsSpec {
    pub variable: String,
    #[serde(default = "default_region")]
    pub region: String,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    /// `null` disables the permutation test.
    #[serde(default = "default_permutation")]
    pub permutation: Option<PermutationSpec>,
    #[serde(default = "default_max_condition")]
    pub max_condition: f64,
    #[serde(default)]
    pub max_k: Option<usize>,
}

fn default_rel_tol() -> f64 {
    FactorConfig::default().rel_tol
}

fn default_permutation() -> Option<PermutationSpec> {
    Some(PermutationSpec::default())
}

fn default_max_condition() -> f64 {
    FactorConfig::default().max_condition
}

impl FactorsSpec {
    pub fn factor_config(&self, seed: u64) -> FactorConfig {
        FactorConfig {
            rel_tol: self.rel_tol,
            permutation: self.permutation.map(|p| PermutationTest { shuffles: p.shuffles, level: p.level, seed }),
            max_condition: self.max_condition,
            max_k: self.max_k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShockDef {
    pub name: String,
    pub magnitude: f64,
    /// (lat, lon) in degrees.
    pub center: (f64, f64),
    pub radius_km: f64,
    #[serde(default)]
    pub profile: Profile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiraSpec {
    pub factors: FactorsSpec,
    #[serde(default)]
    pub lags: Lags,
    #[serde(default = "default_fira_h")]
    pub h_max: usize,
    #[serde(default)]
    pub block_standardize: bool,
    #[serde(default = "yes")]
    pub standardize_y: bool,
    /// Control-panel series entering as Z blocks.
    #[serde(default)]
    pub z_controls: bool,
    pub shocks: Vec<ShockDef>,
}

fn default_fira_h() -> usize {
    12
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub climate: Vec<ClimateInput>,
    #[serde(default)]
    pub weighting: Weighting,
    /// Named regions; `"all"` (the full valid domain) is always available.
    #[serde(default)]
    pub regions: BTreeMap<String, RegionSpec>,
    #[serde(default = "default_reference")]
    pub reference_window: (i32, i32),
    #[serde(default = "default_threshold_window")]
    pub threshold_window: (i32, i32),
    #[serde(default)]
    pub thresholds: ThresholdSpec,
    #[serde(default)]
    pub shocks: Option<ShockSpec>,
    #[serde(default)]
    pub prices: Option<PanelInput>,
    /// Producer prices; a column named like a sector enters that sector's
    /// equation as an extra endogenous variable.
    #[serde(default)]
    pub ppi: Option<PanelInput>,
    #[serde(default)]
    pub controls: Option<PanelInput>,
    /// Inclusive months; defaults to the common window of all inputs.
    #[serde(default)]
    pub analysis_window: Option<(YearMonth, YearMonth)>,
    #[serde(default)]
    pub lp: LpSpec,
    #[serde(default)]
    pub factors: Option<FactorsSpec>,
    #[serde(default)]
    pub fira: Option<FiraSpec>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

fn default_reference() -> (i32, i32) {
    REFERENCE_WINDOW
}

fn default_threshold_window() -> (i32, i32) {
    THRESHOLD_WINDOW
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let text = serde_json::to_string_pretty(self).map_err(|_| fmt::Error)?;
        f.write_str(&text)
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<RunConfig, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Reads, resolves relative paths and validates.
    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let mut cfg = RunConfig::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for c in &mut self.climate {
            fix(&mut c.path);
        }
        for p in [&mut self.prices, &mut self.ppi, &mut self.controls].into_iter().flatten() {
            fix(&mut p.path);
        }
        fix(&mut self.output_dir);
    }

    /// Checks structure and that every input file exists.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.climate.is_empty() {
            return Err(invalid("climate", "at least one climate input is required"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for (i, c) in self.climate.iter().enumerate() {
            if !seen.insert(c.variable.as_str()) {
                return Err(invalid(format!("climate[{i}].variable"), format!("duplicate variable {}", c.variable)));
            }
            if !c.path.exists() {
                return Err(ConfigError::MissingFile { key: format!("climate[{i}].path"), path: c.path.clone() });
            }
        }
        for (key, p) in [("prices", &self.prices), ("ppi", &self.ppi), ("controls", &self.controls)] {
            if let Some(p) = p {
                if !p.path.exists() {
                    return Err(ConfigError::MissingFile { key: format!("{key}.path"), path: p.path.clone() });
                }
            }
        }
        for (key, w) in [("reference_window", self.reference_window), ("threshold_window", self.threshold_window)] {
            if w.0 > w.1 {
                return Err(invalid(key, format!("start {} after end {}", w.0, w.1)));
            }
        }
        if let Some((a, b)) = self.analysis_window {
            if a > b {
                return Err(invalid("analysis_window", format!("{a} after {b}")));
            }
        }
        for (name, r) in &self.regions {
            for (axis, range) in [("lat", r.lat), ("lon", r.lon)] {
                if let Some((lo, hi)) = range {
                    if !(lo < hi) {
                        return Err(invalid(format!("regions.{name}.{axis}"), "lower bound must be below upper bound"));
                    }
                }
            }
        }
        if let ThresholdSpec::Explicit(m) = &self.thresholds {
            for (var, v) in m {
                if !(*v > 0.0) {
                    return Err(invalid(format!("thresholds.{var}"), "threshold must be positive"));
                }
            }
        }
        self.lp.validate().map_err(|e| invalid("lp", e.to_string()))?;
        if let Some(s) = &self.shocks {
            self.check_variable("shocks.variable", &s.variable)?;
            self.check_region("shocks.region", &s.region)?;
            if s.variants.is_empty() {
                return Err(invalid("shocks.variants", "at least one variant is required"));
            }
            if !(s.extreme_multiplier >= 1.0) {
                return Err(invalid("shocks.extreme_multiplier", "must be at least 1"));
            }
        }
        for (key, f) in [("factors", self.factors.as_ref()), ("fira", self.fira.as_ref().map(|f| &f.factors))] {
            if let Some(f) = f {
                self.check_variable(&format!("{key}.variable"), &f.variable)?;
                self.check_region(&format!("{key}.region"), &f.region)?;
                if !(f.rel_tol >= 0.0 && f.rel_tol < 1.0) {
                    return Err(invalid(format!("{key}.rel_tol"), "must lie in [0, 1)"));
                }
                if let Some(p) = f.permutation {
                    if p.shuffles == 0 || !(p.level > 0.0 && p.level < 1.0) {
                        return Err(invalid(format!("{key}.permutation"), "need shuffles ≥ 1 and level in (0, 1)"));
                    }
                }
            }
        }
        if let Some(f) = &self.fira {
            let mut names = std::collections::BTreeSet::new();
            for (i, s) in f.shocks.iter().enumerate() {
                if !names.insert(s.name.as_str()) {
                    return Err(invalid(format!("fira.shocks[{i}].name"), format!("duplicate name {}", s.name)));
                }
                if s.name.is_empty() || !s.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                    return Err(invalid(format!("fira.shocks[{i}].name"), "use letters, digits, '_' or '-'"));
                }
                if !(s.radius_km > 0.0) || !s.magnitude.is_finite() {
                    return Err(invalid(format!("fira.shocks[{i}]"), "radius_km must be positive and magnitude finite"));
                }
            }
        }
        Ok(())
    }

    fn check_variable(&self, key: &str, var: &str) -> Result<(), ConfigError> {
        if self.climate.iter().any(|c| c.variable == var) {
            Ok(())
        } else {
            Err(invalid(key, format!("unknown climate variable {var}")))
        }
    }

    fn check_region(&self, key: &str, region: &str) -> Result<(), ConfigError> {
        if region == "all" || self.regions.contains_key(region) {
            Ok(())
        } else {
            Err(invalid(key, format!("unknown region {region}")))
        }
    }

    pub fn climate_path(&self, variable: &str) -> Option<&Path> {
        self.climate.iter().find(|c| c.variable == variable).map(|c| c.path.as_path())
    }
}
