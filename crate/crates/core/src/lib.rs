//! Backflash light characterization for single-photon avalanche detectors.
//!
//! * [`model`]: bench configuration, detector models and emission profiles.
//! * [`photonsim`]: seeded time-tag generation for an OTDR acquisition.
//! * [`tracelab`]: correlation histograms, feature detection and the leakage estimate.
//! * [`sidechannel`]: eavesdropper discrimination and countermeasure evaluation.
//! * [`io`]: binary tag files, CSV tables and JSON reports.

mod error;
pub mod io;
pub mod model;
pub mod photonsim;
pub mod sidechannel;
pub mod tracelab;

pub use error::{Error, Issue, Result, ValidationError};
pub use model::{BackflashProfile, BenchConfig, Channel, SpadModel, SpectralDensity, TemporalDensity, TimeTag};
pub use photonsim::{simulate, Passband, SimOutput, SimRun};
pub use sidechannel::{discriminate, residual_leakage, Countermeasure, DiscriminationResult};
pub use tracelab::{
    analyze, estimate_leakage, CorrelationHistogram, DelayRegion, FeatureSet, HistogramGeometry, LeakageReport,
};
