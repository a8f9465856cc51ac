use serde::{Deserialize, Serialize};

use super::histogram::{CorrelationHistogram, HistogramGeometry};
use crate::error::{Error, Result};

/// Gated counts minus the trigger-scaled gates-off reference. Bins may be negative.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualHistogram {
    pub geometry: HistogramGeometry,
    pub values: Vec<f64>,
    pub gated: Vec<u64>,
    pub reference: Vec<u64>,
    /// `gated.total_triggers / reference.total_triggers`.
    pub scale: f64,
}

impl ResidualHistogram {
    pub fn bin_count(&self) -> usize {
        self.values.len()
    }

    /// Per-bin standard error under Poisson statistics of both inputs.
    pub fn std_error(&self, bin: usize) -> f64 {
        (self.gated[bin] as f64 + self.scale * self.scale * self.reference[bin] as f64).sqrt()
    }

    /// Bin index range covering `[start_ps, end_ps)`.
    pub fn bins_for(&self, region: DelayRegion) -> Result<std::ops::Range<usize>> {
        let w = self.geometry.bin_width_ps as f64;
        let span = self.bin_count() as f64 * w;
        if !(region.start_ps >= 0.0 && region.end_ps <= span && region.end_ps > region.start_ps) {
            return Err(Error::EmptyRegion(format!(
                "[{}, {}) ps against a span of {span} ps",
                region.start_ps, region.end_ps
            )));
        }
        let first = (region.start_ps / w).floor() as usize;
        let last = ((region.end_ps / w).ceil() as usize).min(self.bin_count());
        if last <= first {
            return Err(Error::EmptyRegion(format!(
                "[{}, {}) ps",
                region.start_ps, region.end_ps
            )));
        }
        Ok(first..last)
    }
}

/// Delay interval `[start_ps, end_ps)` relative to the histogram origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayRegion {
    pub start_ps: f64,
    pub end_ps: f64,
}

impl DelayRegion {
    pub fn new(start_ps: f64, end_ps: f64) -> Self {
        Self { start_ps, end_ps }
    }

    pub fn duration_ps(&self) -> f64 {
        self.end_ps - self.start_ps
    }
}

pub fn subtract_background(
    gated: &CorrelationHistogram,
    reference: &CorrelationHistogram,
) -> Result<ResidualHistogram> {
    if !gated.same_geometry(reference) {
        return Err(Error::GeometryMismatch(format!(
            "{:?} vs {:?}",
            gated.geometry(),
            reference.geometry()
        )));
    }
    if reference.total_triggers == 0 {
        return Err(Error::ZeroReferenceTriggers);
    }
    let scale = gated.total_triggers as f64 / reference.total_triggers as f64;
    let values = gated
        .counts
        .iter()
        .zip(&reference.counts)
        .map(|(&g, &r)| g as f64 - r as f64 * scale)
        .collect();
    Ok(ResidualHistogram {
        geometry: gated.geometry(),
        values,
        gated: gated.counts.clone(),
        reference: reference.counts.clone(),
        scale,
    })
}

/// Background-subtracted backflash count over a region and its Poisson error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackflashEstimate {
    pub n_backflash: f64,
    pub std_error: f64,
    pub gross_counts: u64,
    pub reference_counts: u64,
    pub scale: f64,
}

impl BackflashEstimate {
    pub fn scaled_background(&self) -> f64 {
        self.reference_counts as f64 * self.scale
    }
}

/// Sums the residual over `region`.
///
/// Works from the integer gated and reference sums, so integrating the full
/// span reproduces `gated_total - scale * reference_total` exactly.
pub fn integrate_backflash(residual: &ResidualHistogram, region: DelayRegion) -> Result<BackflashEstimate> {
    let bins = residual.bins_for(region)?;
    let gross: u64 = residual.gated[bins.clone()].iter().sum();
    let reference: u64 = residual.reference[bins].iter().sum();
    let s = residual.scale;
    Ok(BackflashEstimate {
        n_backflash: gross as f64 - reference as f64 * s,
        std_error: (gross as f64 + s * s * reference as f64).sqrt(),
        gross_counts: gross,
        reference_counts: reference,
        scale: s,
    })
}
