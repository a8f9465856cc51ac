use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{SpectralDensity, TemporalDensity};
use crate::photonsim::Passband;
use crate::tracelab::{mitigate, LeakageReport};

/// Hardware placed between the detector and the fiber.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Countermeasure {
    /// Optical isolation in dB (0 = none).
    #[serde(default)]
    pub isolation_db: f64,
    /// Passbands of a spectral filter; empty means no filter.
    #[serde(default)]
    pub filter_passbands: Vec<Passband>,
    /// Shortened gate, which truncates emission after the avalanche onset.
    #[serde(default)]
    pub gate_width_override_ns: Option<f64>,
}

/// Attenuation of each countermeasure stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MitigationFactors {
    pub isolation: f64,
    pub spectral: f64,
    pub temporal: f64,
}

impl MitigationFactors {
    pub fn total(&self) -> f64 {
        let mut f = [self.isolation, self.spectral, self.temporal];
        f.sort_by(f64::total_cmp);
        f.iter().product()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub report: LeakageReport,
    pub factors: MitigationFactors,
    /// Whether the laser line survives the filter.
    pub signal_passes: bool,
}

impl Countermeasure {
    pub fn validate(&self) -> Result<()> {
        if !(self.isolation_db.is_finite() && self.isolation_db >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "isolation_db must be finite and >= 0, got {}",
                self.isolation_db
            )));
        }
        for pb in &self.filter_passbands {
            if !(pb.bandwidth_nm.is_finite() && pb.bandwidth_nm > 0.0 && pb.center_nm.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "filter passband {} nm / {} nm is invalid",
                    pb.center_nm, pb.bandwidth_nm
                )));
            }
        }
        let mut bands: Vec<(f64, f64)> = self.filter_passbands.iter().map(Passband::edges).collect();
        bands.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in bands.windows(2) {
            if w[1].0 < w[0].1 {
                return Err(Error::OverlappingPassbands(format!(
                    "[{}, {}] nm and [{}, {}] nm",
                    w[0].0, w[0].1, w[1].0, w[1].1
                )));
            }
        }
        if let Some(g) = self.gate_width_override_ns {
            if !(g.is_finite() && g > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "gate_width_override_ns must be > 0, got {g}"
                )));
            }
        }
        Ok(())
    }

    /// Per-stage attenuation for a detector with the given emission profile.
    /// `avalanche_offset_ns` is where avalanches start relative to gate opening.
    pub fn factors(
        &self,
        spectrum: &SpectralDensity,
        shape: &TemporalDensity,
        avalanche_offset_ns: f64,
    ) -> Result<MitigationFactors> {
        self.validate()?;
        let isolation = 10f64.powf(-self.isolation_db / 10.0);
        let spectral = if self.filter_passbands.is_empty() {
            1.0
        } else {
            self.filter_passbands
                .iter()
                .map(|pb| {
                    let (lo, hi) = pb.edges();
                    spectrum.fraction_in(lo, hi)
                })
                .sum::<f64>()
                .min(1.0)
        };
        let temporal = match self.gate_width_override_ns {
            Some(g) => shape.cdf(g - avalanche_offset_ns),
            None => 1.0,
        };
        Ok(MitigationFactors {
            isolation,
            spectral,
            temporal,
        })
    }

    pub fn signal_passes(&self, laser_wavelength_nm: f64) -> bool {
        self.filter_passbands.is_empty() || self.filter_passbands.iter().any(|pb| pb.contains(laser_wavelength_nm))
    }
}

/// Leakage left after a countermeasure is applied to a measured report.
pub fn residual_leakage(
    report: &LeakageReport,
    countermeasure: &Countermeasure,
    spectrum: &SpectralDensity,
    shape: &TemporalDensity,
    laser_wavelength_nm: f64,
    avalanche_offset_ns: f64,
) -> Result<Residual> {
    let factors = countermeasure.factors(spectrum, shape, avalanche_offset_ns)?;
    let mut out = report.clone();
    for f in [factors.isolation, factors.spectral, factors.temporal] {
        if f != 1.0 {
            out = mitigate(&out, f);
        }
    }
    Ok(Residual {
        report: out,
        factors,
        signal_passes: countermeasure.signal_passes(laser_wavelength_nm),
    })
}
