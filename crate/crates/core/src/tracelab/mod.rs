//! Analysis of OTDR time tags: folding into correlation histograms, feature
//! detection, background subtraction and the leakage estimate.

mod background;
mod features;
mod histogram;
mod leakage;
pub mod pipeline;

pub use background::{integrate_backflash, subtract_background, BackflashEstimate, DelayRegion, ResidualHistogram};
pub use features::{
    detect_features, detect_features_with, median, BackflashRegion, FeatureParams, FeatureSet, Peak,
    DEFAULT_PEAK_MAX_WIDTH_PS,
};
pub use histogram::{
    build_histogram, build_histogram_parallel, merge, CorrelationHistogram, HistogramGeometry, DEFAULT_BIN_WIDTH_PS,
};
pub use leakage::{
    estimate_leakage, estimate_leakage_from, garwood, mitigate, CiMethod, LeakageReport, MeasuredLeakage,
};
pub use pipeline::{analyze, Acquired, Analysis, AnalysisOptions, RegionSource};
