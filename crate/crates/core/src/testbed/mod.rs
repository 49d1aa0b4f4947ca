//! Bundled evaluation targets: analytic benchmarks with known indices and
//! the GR6J daily catchment model.

pub mod analytic;
pub mod forcing;
pub mod gr6j;
pub mod metrics;

pub use analytic::{eval_analytic, AnalyticFn};
pub use forcing::{synthetic_forcing, Forcing};
pub use gr6j::{gr6j_run, gr6j_step, Gr6jDailyOutputs, Gr6jParams, Gr6jSeries, Gr6jState, OUTPUT_NAMES, WARMUP_DAYS};
pub use metrics::{kge, nse};
