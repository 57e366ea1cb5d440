//! Weather anomalies, local projections and functional associated factors
//! for panels of sectoral inflation rates.
//!
//! The pipeline runs in stages that mirror the module layout:
//!
//! - [`grid`]: raster geometry and the area-weighted inner product on surfaces
//! - [`ingest`]: gridded and tabular readers/writers, year-on-year transforms, window alignment
//! - [`climatology`]: monthly baselines, anomalies, regional means and thresholded shocks
//! - [`lp`]: local-projection impulse responses with Newey–West standard errors
//! - [`factors`]: associated factors between a price vector and a climate surface
//! - [`fira`]: functional impulse responses to parameterised spatial shocks
//!
//! Data-parallel loops go through [`exec::Execution`]; with the `parallel`
//! feature disabled every call runs sequentially.

pub mod calendar;
pub mod cli;
pub mod climatology;
pub mod config;
pub mod exec;
pub mod factors;
pub mod fira;
pub mod grid;
pub mod ingest;
pub mod linalg;
pub mod lp;
pub mod report;
pub mod synth;

pub use calendar::YearMonth;
pub use exec::Execution;
pub use grid::{GridDomain, Surface, SurfaceSeries, Weighting};
