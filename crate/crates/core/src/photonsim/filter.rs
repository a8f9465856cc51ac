use rand::Rng;
use serde::{Deserialize, Serialize};

use super::rng::{substream, Stream};
use super::{SimOutput, TagSource};
use crate::error::{Error, Result};
use crate::model::SpectralDensity;

/// Rectangular passband `[center - bandwidth/2, center + bandwidth/2)`. Adjacent
/// bands tile the spectrum without sharing an edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Passband {
    pub center_nm: f64,
    pub bandwidth_nm: f64,
}

impl Passband {
    pub fn new(center_nm: f64, bandwidth_nm: f64) -> Self {
        Self {
            center_nm,
            bandwidth_nm,
        }
    }

    pub fn edges(&self) -> (f64, f64) {
        let half = self.bandwidth_nm / 2.0;
        (self.center_nm - half, self.center_nm + half)
    }

    pub fn contains(&self, wavelength_nm: f64) -> bool {
        let (lo, hi) = self.edges();
        wavelength_nm >= lo && wavelength_nm < hi
    }
}

/// Places a tunable filter in front of the OTDR detector after the fact.
///
/// Backflash tags are kept with probability equal to the spectral fraction
/// inside the passband, laser reflections only if the laser line is inside it,
/// and dark counts are untouched.
pub fn apply_filter(
    output: &SimOutput,
    passband: Passband,
    spectrum: &SpectralDensity,
    laser_wavelength_nm: f64,
    seed: u64,
) -> Result<SimOutput> {
    if !(passband.bandwidth_nm > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "filter bandwidth must be > 0, got {}",
            passband.bandwidth_nm
        )));
    }
    if output.labels.len() != output.otdr_tags.len() {
        return Err(Error::MissingProvenance);
    }
    let (lo, hi) = passband.edges();
    let fraction = spectrum.fraction_in(lo, hi);
    let laser_passes = passband.contains(laser_wavelength_nm);
    let mut rng = substream(seed, Stream::Filter, 0);

    let mut otdr_tags = Vec::with_capacity(output.otdr_tags.len());
    let mut labels = Vec::with_capacity(output.labels.len());
    for (tag, &src) in output.otdr_tags.iter().zip(&output.labels) {
        let keep = match src {
            TagSource::Backflash => rng.random::<f64>() < fraction,
            TagSource::Reflection => laser_passes,
            TagSource::Dark => true,
        };
        if keep {
            otdr_tags.push(*tag);
            labels.push(src);
        }
    }
    Ok(SimOutput {
        otdr_tags,
        labels,
        ..output.clone()
    })
}
