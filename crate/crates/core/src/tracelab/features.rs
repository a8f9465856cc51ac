//! Separation of sharp reflection peaks from broad backflash features.
//!
//! The baseline is the median bin. Narrow runs above `baseline + k·σ` whose
//! FWHM fits inside `peak_max_width` become reflection peaks and are masked.
//! The masked excess is then boxcar-smoothed over `peak_max_width`; runs of the
//! smoothed trace above `k·σ/√W` are cut at half of their own maximum, which
//! lands on the true edges of a flat-topped feature, and kept as backflash
//! regions when wider than 1.5 × `peak_max_width`.

use serde::{Deserialize, Serialize};

use super::histogram::CorrelationHistogram;

pub const DEFAULT_PEAK_MAX_WIDTH_PS: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureParams {
    pub peak_min_prominence: f64,
    pub peak_max_width_ps: f64,
    /// Detection threshold in Poisson standard deviations of the baseline.
    pub noise_sigmas: f64,
}

impl FeatureParams {
    pub fn new(peak_min_prominence: f64, peak_max_width_ps: f64) -> Self {
        Self {
            peak_min_prominence,
            peak_max_width_ps,
            noise_sigmas: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    /// Delay of the highest bin (bin centre).
    pub delay_ps: f64,
    pub width_ps: f64,
    pub counts: u64,
    pub first_bin: usize,
    pub last_bin: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackflashRegion {
    pub start_ps: f64,
    pub end_ps: f64,
    pub gross_counts: u64,
    pub background_estimate: f64,
}

impl BackflashRegion {
    pub fn duration_ps(&self) -> f64 {
        self.end_ps - self.start_ps
    }

    pub fn excess(&self) -> f64 {
        self.gross_counts as f64 - self.background_estimate
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureSet {
    pub baseline: f64,
    pub peaks: Vec<Peak>,
    pub backflash_regions: Vec<BackflashRegion>,
}

pub fn median(counts: &[u64]) -> f64 {
    if counts.is_empty() {
        return 0.0;
    }
    let mut v = counts.to_vec();
    let mid = v.len() / 2;
    let (_, upper, _) = v.select_nth_unstable(mid);
    let upper = *upper as f64;
    if counts.len() % 2 == 1 {
        upper
    } else {
        let lower = *v[..mid].iter().max().unwrap() as f64;
        0.5 * (lower + upper)
    }
}

fn runs(mask: impl Iterator<Item = bool>) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    let mut n = 0;
    for (i, on) in mask.enumerate() {
        n = i + 1;
        match (on, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((s, i - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, n - 1));
    }
    out
}

pub fn detect_features(hist: &CorrelationHistogram, peak_min_prominence: f64, peak_max_width_ps: f64) -> FeatureSet {
    detect_features_with(hist, FeatureParams::new(peak_min_prominence, peak_max_width_ps))
}

pub fn detect_features_with(hist: &CorrelationHistogram, params: FeatureParams) -> FeatureSet {
    let counts = &hist.counts;
    let w = hist.bin_width_ps as f64;
    let baseline = median(counts);
    let sigma = baseline.max(1.0).sqrt();
    let k = params.noise_sigmas;
    let excess: Vec<f64> = counts.iter().map(|&c| c as f64 - baseline).collect();

    let mut peaks = Vec::new();
    let mut masked = vec![false; counts.len()];
    for (a, b) in runs(excess.iter().map(|&e| e >= k * sigma)) {
        let (imax, emax) = (a..=b)
            .map(|i| (i, excess[i]))
            .fold((a, f64::MIN), |acc, x| if x.1 > acc.1 { x } else { acc });
        let fwhm_bins = (a..=b).filter(|&i| excess[i] >= emax / 2.0).count();
        let extent_ps = (b - a + 1) as f64 * w;
        let fwhm_ps = fwhm_bins as f64 * w;
        if fwhm_ps <= params.peak_max_width_ps
            && extent_ps <= 3.0 * params.peak_max_width_ps
            && emax >= params.peak_min_prominence
        {
            peaks.push(Peak {
                delay_ps: (imax as f64 + 0.5) * w,
                width_ps: fwhm_ps,
                counts: counts[a..=b].iter().sum(),
                first_bin: a,
                last_bin: b,
            });
            masked[a..=b].iter_mut().for_each(|m| *m = true);
        }
    }

    let win = ((params.peak_max_width_ps / w).round() as usize).max(1);
    let smoothed = boxcar(&excess, &masked, win);
    let threshold = k * sigma / (win as f64).sqrt();
    let mut regions = Vec::new();
    for (a, b) in runs(smoothed.iter().map(|&s| s >= threshold)) {
        let smax = smoothed[a..=b].iter().cloned().fold(f64::MIN, f64::max);
        let first = (a..=b).find(|&i| smoothed[i] >= smax / 2.0).unwrap();
        let last = (a..=b).rev().find(|&i| smoothed[i] >= smax / 2.0).unwrap();
        let width_ps = (last - first + 1) as f64 * w;
        if width_ps > 1.5 * params.peak_max_width_ps {
            regions.push(BackflashRegion {
                start_ps: first as f64 * w,
                end_ps: (last + 1) as f64 * w,
                gross_counts: counts[first..=last].iter().sum(),
                background_estimate: baseline * (last - first + 1) as f64,
            });
        }
    }

    FeatureSet {
        baseline,
        peaks,
        backflash_regions: regions,
    }
}

/// Centred moving average with masked bins treated as zero excess.
fn boxcar(excess: &[f64], masked: &[bool], win: usize) -> Vec<f64> {
    let n = excess.len();
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        let v = if masked[i] { 0.0 } else { excess[i] };
        prefix[i + 1] = prefix[i] + v;
    }
    let half = win / 2;
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (lo + win).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}
