use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::profile::{BackflashProfile, SpectralDensity, TemporalDensity, YieldScaling};
use crate::error::{Error, Result, ValidationError};

pub const BENCH_SCHEMA: &str = "backflash-bench/1";

/// Ratio between the FWHM and the standard deviation of a Gaussian.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaserConfig {
    pub wavelength_nm: f64,
    pub pulse_width_fwhm_ps: f64,
    /// Pulse generator rate, shared by the laser and the DUT gates.
    pub repetition_rate_hz: f64,
    /// Mean photon number per pulse arriving at the DUT, after attenuation.
    pub mean_photon_number_at_dut: f64,
}

impl LaserConfig {
    /// Laser period rounded to whole picoseconds.
    pub fn period_ps(&self) -> u64 {
        (1e12 / self.repetition_rate_hz).round() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttenuationChain {
    pub variable_attenuation_db: f64,
    pub coupler_attenuation_db: f64,
}

impl AttenuationChain {
    pub fn transmission(&self) -> f64 {
        10f64.powf(-(self.variable_attenuation_db + self.coupler_attenuation_db) / 10.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReflectionPoint {
    pub round_trip_delay_ps: f64,
    pub reflectance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpticalPath {
    pub reflection_points: Vec<ReflectionPoint>,
    /// One-way DUT to OTDR-detector transmission through circulator and connectors.
    pub channel_transmission: f64,
    /// Laser to DUT and DUT to OTDR detector, summed.
    pub dut_round_trip_delay_ps: f64,
}

impl OpticalPath {
    pub fn dut_one_way_delay_ps(&self) -> f64 {
        self.dut_round_trip_delay_ps / 2.0
    }
}

/// Detection probability against excess bias, linear between anchors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EfficiencyCurve {
    /// `[excess_bias_v, probability]`, sorted by bias.
    pub anchors: Vec<[f64; 2]>,
    /// Accepted bias interval; defaults to the anchor span.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_v: Option<[f64; 2]>,
}

impl EfficiencyCurve {
    pub fn domain(&self) -> (f64, f64) {
        match self.domain_v {
            Some([lo, hi]) => (lo, hi),
            None => {
                let lo = self.anchors.first().map_or(f64::NAN, |a| a[0]);
                let hi = self.anchors.last().map_or(f64::NAN, |a| a[0]);
                (lo, hi)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceReflectance {
    pub gated_on: f64,
    pub gated_off: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpadModel {
    pub name: String,
    pub gate_width_ns: f64,
    /// Where the laser pulse lands, measured from gate opening.
    pub gate_delay_offset_ns: f64,
    pub excess_bias_v: f64,
    pub efficiency_curve: EfficiencyCurve,
    pub dead_time_ns: f64,
    pub dark_count_rate_in_gate_hz: f64,
    pub avalanche_duration_ns: f64,
    pub backflash: BackflashProfile,
    pub surface_reflectance: SurfaceReflectance,
}

impl SpadModel {
    pub fn efficiency(&self) -> Result<f64> {
        efficiency_at(self, self.excess_bias_v)
    }

    pub fn backflash_yield(&self) -> f64 {
        self.backflash.yield_at(self.excess_bias_v)
    }

    /// Emission window for an avalanche starting `start_in_gate_ns` after gate opening.
    pub fn emission_window_ns(&self, start_in_gate_ns: f64) -> f64 {
        self.avalanche_duration_ns
            .min(self.gate_width_ns - start_in_gate_ns)
            .max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasDetectorModel {
    pub efficiency: f64,
    pub dark_count_rate_hz: f64,
    pub timing_jitter_fwhm_ps: f64,
    pub free_running: bool,
}

impl MeasDetectorModel {
    pub fn jitter_sigma_ps(&self) -> f64 {
        self.timing_jitter_fwhm_ps / FWHM_PER_SIGMA
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub schema: String,
    pub laser: LaserConfig,
    pub attenuation: AttenuationChain,
    pub optical_path: OpticalPath,
    pub dut: SpadModel,
    pub meas_detector: MeasDetectorModel,
}

impl BenchConfig {
    /// Parses a bench document, checking the schema tag before anything else.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let found = value.get("schema").and_then(|s| s.as_str()).unwrap_or("");
        if found != BENCH_SCHEMA {
            return Err(Error::Schema {
                found: found.to_string(),
                expected: BENCH_SCHEMA,
            });
        }
        Ok(serde_json::from_value(value)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bench config serializes")
    }

    /// SHA-256 over the compact JSON form, hex encoded.
    pub fn config_hash(&self) -> String {
        let compact = serde_json::to_vec(self).expect("bench config serializes");
        hex_digest(&compact)
    }

    /// First eight bytes of [`config_hash`](Self::config_hash) as an integer.
    pub fn config_hash_u64(&self) -> u64 {
        let compact = serde_json::to_vec(self).expect("bench config serializes");
        let digest = Sha256::digest(&compact);
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }

    /// Combined `η_det · η_ch` used to correct detected backflash counts.
    pub fn eta_product(&self) -> f64 {
        self.meas_detector.efficiency * self.optical_path.channel_transmission
    }

    /// The prototype detector at 7 V excess bias with a 20 ns gate.
    pub fn dut1() -> Self {
        BenchConfig {
            schema: BENCH_SCHEMA.to_string(),
            laser: LaserConfig {
                wavelength_nm: 1550.0,
                pulse_width_fwhm_ps: 300.0,
                repetition_rate_hz: 50e3,
                mean_photon_number_at_dut: 0.3,
            },
            attenuation: AttenuationChain {
                variable_attenuation_db: 45.0,
                coupler_attenuation_db: 20.0,
            },
            optical_path: OpticalPath {
                reflection_points: vec![
                    ReflectionPoint {
                        round_trip_delay_ps: 30_000.0,
                        reflectance: 0.01,
                    },
                    ReflectionPoint {
                        round_trip_delay_ps: 70_000.0,
                        reflectance: 0.04,
                    },
                ],
                channel_transmission: 0.5,
                dut_round_trip_delay_ps: 100_000.0,
            },
            dut: SpadModel {
                name: "DUT1".to_string(),
                gate_width_ns: 20.0,
                gate_delay_offset_ns: 2.0,
                excess_bias_v: 7.0,
                efficiency_curve: EfficiencyCurve {
                    anchors: vec![[3.0, 0.15], [4.5, 0.22], [7.0, 0.35]],
                    domain_v: None,
                },
                dead_time_ns: 1_000.0,
                dark_count_rate_in_gate_hz: 1_000.0,
                avalanche_duration_ns: 10.0,
                backflash: BackflashProfile {
                    shape: TemporalDensity::rectangular(10.0).expect("valid"),
                    mean_photons_per_avalanche: 0.098,
                    yield_scaling: YieldScaling::ProportionalToExcessBias {
                        reference_excess_bias_v: 7.0,
                    },
                    spectrum: SpectralDensity::flat(1530.0, 1600.0).expect("valid"),
                },
                surface_reflectance: SurfaceReflectance {
                    gated_on: 3e-4,
                    gated_off: 1e-4,
                },
            },
            meas_detector: MeasDetectorModel {
                efficiency: 0.1,
                dark_count_rate_hz: 5_000.0,
                timing_jitter_fwhm_ps: 130.0,
                free_running: true,
            },
        }
    }

    /// The commercial detector: 10 % efficiency, 100 ns gate, trapezoidal emission.
    pub fn dut2() -> Self {
        let mut bench = Self::dut1();
        bench.dut = SpadModel {
            name: "DUT2".to_string(),
            gate_width_ns: 100.0,
            gate_delay_offset_ns: 2.0,
            excess_bias_v: 5.0,
            efficiency_curve: EfficiencyCurve {
                anchors: vec![[5.0, 0.10]],
                domain_v: Some([0.0, 10.0]),
            },
            dead_time_ns: 1_000.0,
            dark_count_rate_in_gate_hz: 1_000.0,
            avalanche_duration_ns: 10.0,
            backflash: BackflashProfile {
                shape: TemporalDensity::trapezoidal(10.0, 2.0, 2.0).expect("valid"),
                mean_photons_per_avalanche: 0.060,
                yield_scaling: YieldScaling::Constant,
                spectrum: SpectralDensity::flat(1530.0, 1600.0).expect("valid"),
            },
            surface_reflectance: SurfaceReflectance {
                gated_on: 3e-4,
                gated_off: 1e-4,
            },
        };
        bench
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Detection probability at `excess_bias_v`: linear between anchors, flat past the
/// outermost anchors, and an error outside the curve's declared domain.
pub fn efficiency_at(model: &SpadModel, excess_bias_v: f64) -> Result<f64> {
    let curve = &model.efficiency_curve;
    let (lo, hi) = curve.domain();
    if !(excess_bias_v >= lo && excess_bias_v <= hi) {
        return Err(Error::OutOfRange {
            what: "excess_bias_v",
            value: excess_bias_v,
            min: lo,
            max: hi,
        });
    }
    let anchors = &curve.anchors;
    let first = anchors[0];
    let last = anchors[anchors.len() - 1];
    if excess_bias_v <= first[0] {
        return Ok(first[1]);
    }
    if excess_bias_v >= last[0] {
        return Ok(last[1]);
    }
    let idx = anchors.partition_point(|a| a[0] <= excess_bias_v);
    let (a, b) = (anchors[idx - 1], anchors[idx]);
    Ok(a[1] + (b[1] - a[1]) * (excess_bias_v - a[0]) / (b[0] - a[0]))
}

fn check(errs: &mut ValidationError, ok: bool, path: &str, msg: impl FnOnce() -> String) {
    if !ok {
        errs.push(path, msg());
    }
}

fn is_prob(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

/// Returns the configuration unchanged when every invariant holds, otherwise
/// the full list of violations with their field paths.
pub fn validate_bench(config: BenchConfig) -> Result<BenchConfig, ValidationError> {
    let mut e = ValidationError::default();
    let c = &config;

    check(&mut e, c.schema == BENCH_SCHEMA, "schema", || {
        format!("expected {BENCH_SCHEMA:?}, got {:?}", c.schema)
    });

    let l = &c.laser;
    check(
        &mut e,
        l.repetition_rate_hz > 0.0 && l.repetition_rate_hz.is_finite(),
        "laser.repetition_rate_hz",
        || format!("must be > 0, got {}", l.repetition_rate_hz),
    );
    check(
        &mut e,
        l.mean_photon_number_at_dut >= 0.0 && l.mean_photon_number_at_dut.is_finite(),
        "laser.mean_photon_number_at_dut",
        || format!("must be >= 0, got {}", l.mean_photon_number_at_dut),
    );
    check(
        &mut e,
        l.pulse_width_fwhm_ps > 0.0 && l.pulse_width_fwhm_ps.is_finite(),
        "laser.pulse_width_fwhm_ps",
        || format!("must be > 0, got {}", l.pulse_width_fwhm_ps),
    );
    check(&mut e, l.wavelength_nm > 0.0, "laser.wavelength_nm", || {
        format!("must be > 0, got {}", l.wavelength_nm)
    });

    let a = &c.attenuation;
    check(
        &mut e,
        (0.0..=60.0).contains(&a.variable_attenuation_db),
        "attenuation.variable_attenuation_db",
        || format!("must lie in [0, 60] dB, got {}", a.variable_attenuation_db),
    );
    check(
        &mut e,
        a.coupler_attenuation_db >= 0.0 && a.coupler_attenuation_db.is_finite(),
        "attenuation.coupler_attenuation_db",
        || format!("must be >= 0, got {}", a.coupler_attenuation_db),
    );

    let p = &c.optical_path;
    check(
        &mut e,
        p.channel_transmission > 0.0 && p.channel_transmission <= 1.0,
        "optical_path.channel_transmission",
        || format!("must lie in (0, 1], got {}", p.channel_transmission),
    );
    check(
        &mut e,
        p.dut_round_trip_delay_ps > 0.0 && p.dut_round_trip_delay_ps.is_finite(),
        "optical_path.dut_round_trip_delay_ps",
        || format!("must be > 0, got {}", p.dut_round_trip_delay_ps),
    );
    for (i, r) in p.reflection_points.iter().enumerate() {
        check(
            &mut e,
            is_prob(r.reflectance),
            &format!("optical_path.reflection_points[{i}].reflectance"),
            || format!("must lie in [0, 1], got {}", r.reflectance),
        );
        check(
            &mut e,
            r.round_trip_delay_ps > 0.0 && r.round_trip_delay_ps.is_finite(),
            &format!("optical_path.reflection_points[{i}].round_trip_delay_ps"),
            || format!("must be > 0, got {}", r.round_trip_delay_ps),
        );
        if p.reflection_points[..i]
            .iter()
            .any(|q| q.round_trip_delay_ps == r.round_trip_delay_ps)
        {
            e.push(
                format!("optical_path.reflection_points[{i}].round_trip_delay_ps"),
                format!("duplicate delay {}", r.round_trip_delay_ps),
            );
        }
    }

    let d = &c.dut;
    check(
        &mut e,
        d.gate_width_ns > 0.0 && d.gate_width_ns.is_finite(),
        "dut.gate_width_ns",
        || format!("must be > 0, got {}", d.gate_width_ns),
    );
    check(
        &mut e,
        d.gate_delay_offset_ns.is_finite(),
        "dut.gate_delay_offset_ns",
        || "must be finite".into(),
    );
    check(
        &mut e,
        d.avalanche_duration_ns > 0.0 && d.avalanche_duration_ns.is_finite(),
        "dut.avalanche_duration_ns",
        || format!("must be > 0, got {}", d.avalanche_duration_ns),
    );
    check(
        &mut e,
        d.dead_time_ns >= 0.0 && d.dead_time_ns.is_finite(),
        "dut.dead_time_ns",
        || format!("must be >= 0, got {}", d.dead_time_ns),
    );
    check(
        &mut e,
        d.dark_count_rate_in_gate_hz >= 0.0 && d.dark_count_rate_in_gate_hz.is_finite(),
        "dut.dark_count_rate_in_gate_hz",
        || format!("must be >= 0, got {}", d.dark_count_rate_in_gate_hz),
    );
    check(
        &mut e,
        is_prob(d.surface_reflectance.gated_on),
        "dut.surface_reflectance.gated_on",
        || format!("must lie in [0, 1], got {}", d.surface_reflectance.gated_on),
    );
    check(
        &mut e,
        is_prob(d.surface_reflectance.gated_off),
        "dut.surface_reflectance.gated_off",
        || format!("must lie in [0, 1], got {}", d.surface_reflectance.gated_off),
    );

    let curve = &d.efficiency_curve;
    if curve.anchors.is_empty() {
        e.push("dut.efficiency_curve.anchors", "needs at least one anchor");
    } else {
        for (i, an) in curve.anchors.iter().enumerate() {
            check(
                &mut e,
                is_prob(an[1]),
                &format!("dut.efficiency_curve.anchors[{i}]"),
                || format!("probability must lie in [0, 1], got {}", an[1]),
            );
        }
        for (i, w) in curve.anchors.windows(2).enumerate() {
            check(
                &mut e,
                w[1][0] > w[0][0],
                &format!("dut.efficiency_curve.anchors[{}]", i + 1),
                || "bias values must be strictly increasing".into(),
            );
            check(
                &mut e,
                w[1][1] >= w[0][1],
                &format!("dut.efficiency_curve.anchors[{}]", i + 1),
                || "efficiency must be non-decreasing in bias".into(),
            );
        }
        let (lo, hi) = curve.domain();
        check(&mut e, lo <= hi, "dut.efficiency_curve.domain_v", || {
            format!("empty domain [{lo}, {hi}]")
        });
        check(
            &mut e,
            d.excess_bias_v >= lo && d.excess_bias_v <= hi,
            "dut.excess_bias_v",
            || format!("{} V is outside the efficiency domain [{lo}, {hi}]", d.excess_bias_v),
        );
    }

    let bf = &d.backflash;
    check(
        &mut e,
        bf.mean_photons_per_avalanche >= 0.0 && bf.mean_photons_per_avalanche.is_finite(),
        "dut.backflash.mean_photons_per_avalanche",
        || format!("must be >= 0, got {}", bf.mean_photons_per_avalanche),
    );
    if let YieldScaling::ProportionalToExcessBias {
        reference_excess_bias_v,
    } = bf.yield_scaling
    {
        check(
            &mut e,
            reference_excess_bias_v > 0.0,
            "dut.backflash.yield_scaling.reference_excess_bias_v",
            || format!("must be > 0, got {reference_excess_bias_v}"),
        );
        check(&mut e, d.excess_bias_v >= 0.0, "dut.excess_bias_v", || {
            "proportional yield needs a non-negative excess bias".into()
        });
    }

    let m = &c.meas_detector;
    check(&mut e, is_prob(m.efficiency), "meas_detector.efficiency", || {
        format!("must lie in [0, 1], got {}", m.efficiency)
    });
    check(
        &mut e,
        m.dark_count_rate_hz >= 0.0 && m.dark_count_rate_hz.is_finite(),
        "meas_detector.dark_count_rate_hz",
        || format!("must be >= 0, got {}", m.dark_count_rate_hz),
    );
    check(
        &mut e,
        m.timing_jitter_fwhm_ps >= 0.0 && m.timing_jitter_fwhm_ps.is_finite(),
        "meas_detector.timing_jitter_fwhm_ps",
        || format!("must be >= 0, got {}", m.timing_jitter_fwhm_ps),
    );
    check(&mut e, m.free_running, "meas_detector.free_running", || {
        "the measuring detector must be free running".into()
    });

    e.into_result(config)
}
