//! Domain types for the bench, the detectors and the emission profiles.

mod bench;
mod profile;

pub(crate) use bench::hex_digest;
pub use bench::{
    efficiency_at, validate_bench, AttenuationChain, BenchConfig, EfficiencyCurve, LaserConfig, MeasDetectorModel,
    OpticalPath, ReflectionPoint, SpadModel, SurfaceReflectance, BENCH_SCHEMA, FWHM_PER_SIGMA,
};
pub use profile::{profile_density, BackflashProfile, ShapeSpec, SpectralDensity, TemporalDensity, YieldScaling};

use serde::{Deserialize, Serialize};

/// Detector channel of a time tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum Channel {
    Otdr = 0,
    DutSync = 1,
    LaserSync = 2,
}

impl Channel {
    pub const COUNT: u8 = 3;

    pub fn from_u8(id: u8) -> Option<Self> {
        match id {
            0 => Some(Channel::Otdr),
            1 => Some(Channel::DutSync),
            2 => Some(Channel::LaserSync),
            _ => None,
        }
    }
}

/// One detection event, timestamped in picoseconds since acquisition start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TimeTag {
    pub channel: Channel,
    pub timestamp_ps: u64,
}

impl TimeTag {
    pub fn new(channel: Channel, timestamp_ps: u64) -> Self {
        Self { channel, timestamp_ps }
    }
}

/// Mean fraction of the temporal profile emitted before the avalanche is cut,
/// averaged over the laser arrival spread inside the gate.
///
/// Dark-count avalanches are not included.
pub fn expected_emission_fraction(bench: &BenchConfig) -> f64 {
    let dut = &bench.dut;
    let sigma_ns = bench.laser.pulse_width_fwhm_ps / FWHM_PER_SIGMA / 1000.0;
    let nominal = dut.gate_delay_offset_ns;
    let fraction_at = |start: f64| dut.backflash.shape.cdf(dut.emission_window_ns(start));
    if sigma_ns <= 0.0 {
        return if (0.0..dut.gate_width_ns).contains(&nominal) {
            fraction_at(nominal)
        } else {
            0.0
        };
    }
    let steps = 4000;
    let lo = nominal - 8.0 * sigma_ns;
    let h = 16.0 * sigma_ns / steps as f64;
    let (mut weight, mut acc) = (0.0, 0.0);
    for i in 0..steps {
        let t = lo + (i as f64 + 0.5) * h;
        if !(0.0..dut.gate_width_ns).contains(&t) {
            continue;
        }
        let z = (t - nominal) / sigma_ns;
        let w = (-0.5 * z * z).exp();
        weight += w;
        acc += w * fraction_at(t);
    }
    if weight > 0.0 {
        acc / weight
    } else {
        0.0
    }
}

/// Sets the profile's yield so that the true leakage (emitted photons per
/// avalanche that leave the DUT) equals `target_p_leak` at the current bias.
pub fn calibrate_yield(bench: &mut BenchConfig, target_p_leak: f64) {
    let fraction = expected_emission_fraction(bench);
    let per_avalanche = if fraction > 0.0 { target_p_leak / fraction } else { 0.0 };
    let bf = &mut bench.dut.backflash;
    bf.mean_photons_per_avalanche = match bf.yield_scaling {
        YieldScaling::Constant => per_avalanche,
        YieldScaling::ProportionalToExcessBias {
            reference_excess_bias_v,
        } => per_avalanche * reference_excess_bias_v / bench.dut.excess_bias_v,
    };
}
