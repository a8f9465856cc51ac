//! What an eavesdropper gains from backflash timing, and what is left after
//! countermeasures.

mod countermeasure;
mod discriminate;
mod grid;
mod identify;

use serde::{Deserialize, Serialize};

pub use countermeasure::{residual_leakage, Countermeasure, MitigationFactors, Residual};
pub use discriminate::{discriminate, leaked_bits, DiscriminationResult, GRID_TOLERANCE};
pub use grid::{mass_grid, total_variation, MassGrid, GRID_STEP_PS};
pub use identify::{builtin_catalog, identify_detector_type, CatalogEntry, DetectorMatch, RegionShape};

use crate::error::{Error, Result};
use crate::model::hex_digest;
use crate::tracelab::LeakageReport;

pub const GUARD_SCHEMA: &str = "backflash-guard/1";

pub const PRIVACY_AMPLIFICATION_NOTE: &str =
    "p_leak bounds the probability that a backflash photon reaches the channel \
for each detection; how it enters privacy amplification is not modelled here.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputHashes {
    pub report_sha256: String,
    pub countermeasure_sha256: String,
}

/// Countermeasure evaluation written by `backflash guard`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuardReport {
    pub schema: String,
    pub inputs: InputHashes,
    pub countermeasure: Countermeasure,
    pub factors: MitigationFactors,
    pub total_factor: f64,
    pub signal_passes: bool,
    pub unmitigated: LeakageReport,
    pub residual: LeakageReport,
    pub note: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl GuardReport {
    /// `report_bytes` and `countermeasure_bytes` are the raw input documents.
    pub fn new(
        report_bytes: &[u8],
        countermeasure_bytes: &[u8],
        unmitigated: LeakageReport,
        countermeasure: Countermeasure,
        residual: Residual,
    ) -> Self {
        Self {
            schema: GUARD_SCHEMA.to_string(),
            inputs: InputHashes {
                report_sha256: hex_digest(report_bytes),
                countermeasure_sha256: hex_digest(countermeasure_bytes),
            },
            countermeasure,
            factors: residual.factors,
            total_factor: residual.factors.total(),
            signal_passes: residual.signal_passes,
            unmitigated,
            residual: residual.report,
            note: PRIVACY_AMPLIFICATION_NOTE.to_string(),
            config_hash: None,
            seed: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let found = value.get("schema").and_then(|s| s.as_str()).unwrap_or("").to_string();
        if found != GUARD_SCHEMA {
            return Err(Error::Schema {
                found,
                expected: GUARD_SCHEMA,
            });
        }
        Ok(serde_json::from_value(value)?)
    }
}
