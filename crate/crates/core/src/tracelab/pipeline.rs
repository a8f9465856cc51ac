//! Gated + reference acquisitions in, leakage report out.

use serde::{Deserialize, Serialize};

use super::background::{integrate_backflash, subtract_background, BackflashEstimate, DelayRegion, ResidualHistogram};
use super::features::{detect_features_with, FeatureParams, FeatureSet, DEFAULT_PEAK_MAX_WIDTH_PS};
use super::histogram::{build_histogram_parallel, CorrelationHistogram, HistogramGeometry, DEFAULT_BIN_WIDTH_PS};
use super::leakage::{estimate_leakage_from, CiMethod, LeakageReport};
use crate::error::{Error, Result};
use crate::model::{BenchConfig, Channel, TimeTag, FWHM_PER_SIGMA};
use crate::photonsim::SimOutput;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub bin_width_ps: u64,
    pub origin_ps: i64,
    /// Defaults to ten baseline standard deviations (at least 20 counts).
    pub peak_min_prominence: Option<f64>,
    pub peak_max_width_ps: f64,
    /// Padding added on both sides of the detected region; defaults to three
    /// combined laser/jitter standard deviations.
    pub region_margin_ps: Option<f64>,
    /// Integrate this region instead of detecting one.
    pub region: Option<DelayRegion>,
    pub ci_method: CiMethod,
    /// Remove the expected in-gate dark clicks from `N_P`.
    pub subtract_dut_dark: bool,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            bin_width_ps: DEFAULT_BIN_WIDTH_PS,
            origin_ps: 0,
            peak_min_prominence: None,
            peak_max_width_ps: DEFAULT_PEAK_MAX_WIDTH_PS,
            region_margin_ps: None,
            region: None,
            ci_method: CiMethod::Normal,
            subtract_dut_dark: false,
        }
    }
}

impl AnalysisOptions {
    pub fn geometry(&self, bench: &BenchConfig) -> Result<HistogramGeometry> {
        HistogramGeometry::new(bench.laser.period_ps(), self.bin_width_ps, self.origin_ps)
    }
}

/// One acquisition as the analysis sees it.
#[derive(Debug, Clone, PartialEq)]
pub struct Acquired {
    pub histogram: CorrelationHistogram,
    pub dut_counts: u64,
}

impl Acquired {
    /// Histograms the OTDR channel and counts DUT-sync tags.
    pub fn from_tags(tags: &[TimeTag], triggers: u64, geometry: HistogramGeometry) -> Self {
        let otdr: Vec<TimeTag> = tags.iter().filter(|t| t.channel == Channel::Otdr).copied().collect();
        let dut_counts = tags.iter().filter(|t| t.channel == Channel::DutSync).count() as u64;
        Self {
            histogram: build_histogram_parallel(&otdr, geometry, triggers),
            dut_counts,
        }
    }

    pub fn from_sim(out: &SimOutput, geometry: HistogramGeometry) -> Self {
        Self {
            histogram: build_histogram_parallel(&out.otdr_tags, geometry, out.pulses),
            dut_counts: out.dut_click_count,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionSource {
    Detected,
    Model,
    Fixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub report: LeakageReport,
    pub estimate: BackflashEstimate,
    pub features: FeatureSet,
    pub region: DelayRegion,
    pub region_source: RegionSource,
    pub residual: ResidualHistogram,
}

pub fn default_margin_ps(bench: &BenchConfig) -> f64 {
    let laser = bench.laser.pulse_width_fwhm_ps / FWHM_PER_SIGMA;
    let jitter = bench.meas_detector.jitter_sigma_ps();
    3.0 * laser.hypot(jitter)
}

/// Where backflash from laser-triggered avalanches is expected to land.
pub fn model_region(bench: &BenchConfig, origin_ps: i64) -> DelayRegion {
    let start = bench.optical_path.dut_round_trip_delay_ps - origin_ps as f64;
    let window_ns = bench.dut.emission_window_ns(bench.dut.gate_delay_offset_ns);
    DelayRegion::new(
        start,
        start + window_ns.min(bench.dut.backflash.shape.duration_ns()) * 1e3,
    )
}

fn pad(region: DelayRegion, margin: f64, bin_width: f64, span: f64) -> DelayRegion {
    let start = ((region.start_ps - margin) / bin_width).floor() * bin_width;
    let end = ((region.end_ps + margin) / bin_width).ceil() * bin_width;
    DelayRegion::new(start.max(0.0), end.min(span))
}

pub fn feature_params(hist: &CorrelationHistogram, opts: &AnalysisOptions) -> FeatureParams {
    let baseline = super::features::median(&hist.counts);
    let prominence = opts
        .peak_min_prominence
        .unwrap_or_else(|| (10.0 * baseline.max(1.0).sqrt()).max(20.0));
    FeatureParams::new(prominence, opts.peak_max_width_ps)
}

/// Locates the backflash region on `hist`: the detected region with the
/// largest excess, or the model expectation when nothing is detected.
pub fn locate_region(
    hist: &CorrelationHistogram,
    bench: &BenchConfig,
    opts: &AnalysisOptions,
) -> (DelayRegion, RegionSource, FeatureSet) {
    let features = detect_features_with(hist, feature_params(hist, opts));
    if let Some(fixed) = opts.region {
        return (fixed, RegionSource::Fixed, features);
    }
    let margin = opts.region_margin_ps.unwrap_or_else(|| default_margin_ps(bench));
    let w = hist.bin_width_ps as f64;
    let span = hist.bin_count() as f64 * w;
    let best = features
        .backflash_regions
        .iter()
        .max_by(|a, b| a.excess().total_cmp(&b.excess()));
    let (raw, source) = match best {
        Some(r) => (DelayRegion::new(r.start_ps, r.end_ps), RegionSource::Detected),
        None => (model_region(bench, opts.origin_ps), RegionSource::Model),
    };
    (pad(raw, margin, w, span), source, features)
}

/// Histogram → background subtraction → region integration → leakage.
pub fn analyze(
    gated: &Acquired,
    reference: &Acquired,
    bench: &BenchConfig,
    opts: &AnalysisOptions,
) -> Result<Analysis> {
    let (region, region_source, features) = locate_region(&gated.histogram, bench, opts);
    analyze_in_region(gated, reference, bench, opts, region, region_source, features)
}

pub fn analyze_in_region(
    gated: &Acquired,
    reference: &Acquired,
    bench: &BenchConfig,
    opts: &AnalysisOptions,
    region: DelayRegion,
    region_source: RegionSource,
    features: FeatureSet,
) -> Result<Analysis> {
    let residual = subtract_background(&gated.histogram, &reference.histogram)?;
    let estimate = integrate_backflash(&residual, region)?;
    let mut n_p = gated.dut_counts;
    if opts.subtract_dut_dark {
        let expected = bench.dut.dark_count_rate_in_gate_hz
            * bench.dut.gate_width_ns
            * 1e-9
            * gated.histogram.total_triggers as f64;
        n_p = (n_p as f64 - expected).round().max(0.0) as u64;
    }
    if n_p == 0 {
        return Err(Error::ZeroDutCounts);
    }
    let report = estimate_leakage_from(
        &estimate,
        n_p,
        Some(gated.histogram.total_triggers),
        bench.meas_detector.efficiency,
        bench.optical_path.channel_transmission,
        opts.ci_method,
    )?;
    Ok(Analysis {
        report,
        estimate,
        features,
        region,
        region_source,
        residual,
    })
}
