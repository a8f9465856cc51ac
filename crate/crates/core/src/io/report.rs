use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::BenchConfig;
use crate::tracelab::pipeline::{Analysis, AnalysisOptions, RegionSource};
use crate::tracelab::{CiMethod, LeakageReport, Peak, DEFAULT_BIN_WIDTH_PS};

pub const REPORT_SCHEMA: &str = "backflash-report/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSettings {
    pub bin_width_ps: u64,
    /// True when the bin width was not chosen explicitly.
    pub bin_width_is_default: bool,
    pub origin_ps: i64,
    pub ci_method: CiMethod,
    pub subtract_dut_dark: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSummary {
    pub start_ps: f64,
    pub end_ps: f64,
    pub source: RegionSource,
    pub gross_counts: u64,
    pub reference_counts: u64,
    pub reference_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcquisitionSummary {
    pub seed: u64,
    pub triggers: u64,
}

/// Self-describing leakage report written by `backflash analyze`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisReport {
    pub schema: String,
    pub config_hash: String,
    pub seed: u64,
    pub gated: AcquisitionSummary,
    pub reference: AcquisitionSummary,
    pub analysis: AnalysisSettings,
    pub leakage: LeakageReport,
    pub region: RegionSummary,
    pub baseline_counts_per_bin: f64,
    pub reflection_peaks: Vec<Peak>,
    pub config: BenchConfig,
}

impl AnalysisReport {
    pub fn new(
        config: &BenchConfig,
        analysis: &Analysis,
        opts: &AnalysisOptions,
        gated: AcquisitionSummary,
        reference: AcquisitionSummary,
    ) -> Self {
        Self {
            schema: REPORT_SCHEMA.to_string(),
            config_hash: config.config_hash(),
            seed: gated.seed,
            gated,
            reference,
            analysis: AnalysisSettings {
                bin_width_ps: opts.bin_width_ps,
                bin_width_is_default: opts.bin_width_ps == DEFAULT_BIN_WIDTH_PS,
                origin_ps: opts.origin_ps,
                ci_method: opts.ci_method,
                subtract_dut_dark: opts.subtract_dut_dark,
            },
            leakage: analysis.report.clone(),
            region: RegionSummary {
                start_ps: analysis.region.start_ps,
                end_ps: analysis.region.end_ps,
                source: analysis.region_source,
                gross_counts: analysis.estimate.gross_counts,
                reference_counts: analysis.estimate.reference_counts,
                reference_scale: analysis.estimate.scale,
            },
            baseline_counts_per_bin: analysis.features.baseline,
            reflection_peaks: analysis.features.peaks.clone(),
            config: config.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let found = value.get("schema").and_then(|s| s.as_str()).unwrap_or("").to_string();
        if found != REPORT_SCHEMA {
            return Err(Error::Schema {
                found,
                expected: REPORT_SCHEMA,
            });
        }
        Ok(serde_json::from_value(value)?)
    }
}
