use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TimeTag;

pub const DEFAULT_BIN_WIDTH_PS: u64 = 100;

/// Fold period, bin width and origin shared by histograms that can be merged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramGeometry {
    pub period_ps: u64,
    pub bin_width_ps: u64,
    pub origin_ps: i64,
}

impl HistogramGeometry {
    pub fn new(period_ps: u64, bin_width_ps: u64, origin_ps: i64) -> Result<Self> {
        if period_ps == 0 {
            return Err(Error::InvalidArgument("period must be > 0".into()));
        }
        if bin_width_ps == 0 {
            return Err(Error::InvalidArgument("bin width must be > 0".into()));
        }
        if bin_width_ps > period_ps {
            return Err(Error::InvalidArgument(format!(
                "bin width {bin_width_ps} ps exceeds the period {period_ps} ps"
            )));
        }
        Ok(Self {
            period_ps,
            bin_width_ps,
            origin_ps,
        })
    }

    /// `period / bin_width`, rounded; when the division is not exact the last
    /// bin absorbs the remainder (at most one bin of error).
    pub fn bin_count(&self) -> usize {
        ((self.period_ps as f64 / self.bin_width_ps as f64).round() as usize).max(1)
    }

    /// Bin of `timestamp_ps`, using half-open bins `[k w, (k + 1) w)`.
    pub fn bin_of(&self, timestamp_ps: u64) -> usize {
        let offset = (timestamp_ps as i128 - self.origin_ps as i128).rem_euclid(self.period_ps as i128);
        ((offset / self.bin_width_ps as i128) as usize).min(self.bin_count() - 1)
    }

    /// Left edge of bin `i`, as a delay after the origin.
    pub fn delay_of(&self, bin: usize) -> u64 {
        bin as u64 * self.bin_width_ps
    }
}

/// Period-folded counts against delay.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrelationHistogram {
    pub bin_width_ps: u64,
    pub origin_ps: i64,
    pub period_ps: u64,
    pub counts: Vec<u64>,
    /// Laser periods accumulated.
    pub total_triggers: u64,
}

impl CorrelationHistogram {
    pub fn empty(geometry: HistogramGeometry) -> Self {
        Self {
            bin_width_ps: geometry.bin_width_ps,
            origin_ps: geometry.origin_ps,
            period_ps: geometry.period_ps,
            counts: vec![0; geometry.bin_count()],
            total_triggers: 0,
        }
    }

    pub fn geometry(&self) -> HistogramGeometry {
        HistogramGeometry {
            period_ps: self.period_ps,
            bin_width_ps: self.bin_width_ps,
            origin_ps: self.origin_ps,
        }
    }

    pub fn fold(&mut self, timestamp_ps: u64) {
        let bin = self.geometry().bin_of(timestamp_ps);
        self.counts[bin] += 1;
    }

    pub fn add_triggers(&mut self, triggers: u64) {
        self.total_triggers += triggers;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn bin_count(&self) -> usize {
        self.counts.len()
    }

    pub fn same_geometry(&self, other: &Self) -> bool {
        self.geometry() == other.geometry() && self.counts.len() == other.counts.len()
    }
}

/// Folds every tag into a fresh histogram in one streaming pass.
pub fn build_histogram<'a, I>(tags: I, geometry: HistogramGeometry, triggers: u64) -> CorrelationHistogram
where
    I: IntoIterator<Item = &'a TimeTag>,
{
    let mut h = CorrelationHistogram::empty(geometry);
    for tag in tags {
        h.fold(tag.timestamp_ps);
    }
    h.total_triggers = triggers;
    h
}

/// Same result as [`build_histogram`], with chunks folded on the rayon pool and merged.
pub fn build_histogram_parallel(tags: &[TimeTag], geometry: HistogramGeometry, triggers: u64) -> CorrelationHistogram {
    const CHUNK: usize = 1 << 16;
    let mut h = tags
        .par_chunks(CHUNK)
        .map(|chunk| build_histogram(chunk, geometry, 0))
        .reduce(
            || CorrelationHistogram::empty(geometry),
            |a, b| merge(&a, &b).expect("identical geometry"),
        );
    h.total_triggers = triggers;
    h
}

/// Element-wise sum of two histograms with the same geometry.
pub fn merge(a: &CorrelationHistogram, b: &CorrelationHistogram) -> Result<CorrelationHistogram> {
    if !a.same_geometry(b) {
        return Err(Error::GeometryMismatch(format!(
            "{:?} vs {:?}",
            a.geometry(),
            b.geometry()
        )));
    }
    Ok(CorrelationHistogram {
        counts: a.counts.iter().zip(&b.counts).map(|(x, y)| x + y).collect(),
        total_triggers: a.total_triggers + b.total_triggers,
        ..a.clone()
    })
}
