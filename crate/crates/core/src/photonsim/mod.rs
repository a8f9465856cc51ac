//! Seeded Monte Carlo generation of time-tag streams for the OTDR bench.
//!
//! Laser periods are grouped into fixed blocks of [`BLOCK_PERIODS`]. Each block
//! draws from its own counter-based random substream, so the output depends on
//! the seed alone and not on how blocks are scheduled across worker threads.
//! A run proceeds in three passes:
//!
//! 1. per block, candidate DUT avalanche triggers (absorbed laser photons and
//!    in-gate dark counts);
//! 2. one sequential pass applying "first trigger in the gate wins" and the
//!    non-paralyzable dead time, which may span gates;
//! 3. per block, photons reaching the OTDR detector: static reflections, the
//!    DUT surface reflection, backflash emission and free-running dark counts.

mod filter;
mod rng;
mod sweep;

pub use filter::{apply_filter, Passband};
pub use sweep::{apply_axis_value, simulate_sweep, SweepAxis};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate_bench, BenchConfig, Channel, TimeTag, FWHM_PER_SIGMA};
use rng::{normal, poisson, substream, Stream};

pub const BLOCK_PERIODS: u64 = 4096;

/// Seed for the gates-off reference acquisition paired with a gated run.
pub fn reference_seed(seed: u64) -> u64 {
    seed ^ 0x9E37_79B9_7F4A_7C15
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Acquisition {
    Pulses(u64),
    DurationS(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimRun {
    pub config: BenchConfig,
    pub acquisition: Acquisition,
    pub seed: u64,
    /// `false` reproduces the reference measurement: bias applied, no gate signal.
    pub gates_enabled: bool,
    /// Keep per-avalanche and per-emission records for inspection.
    pub record_provenance: bool,
    /// Optional tunable filter in front of the OTDR detector.
    pub filter: Option<Passband>,
}

impl SimRun {
    pub fn new(config: BenchConfig, pulses: u64, seed: u64) -> Self {
        Self {
            config,
            acquisition: Acquisition::Pulses(pulses),
            seed,
            gates_enabled: true,
            record_provenance: false,
            filter: None,
        }
    }

    pub fn gates_off(mut self) -> Self {
        self.gates_enabled = false;
        self
    }

    pub fn with_provenance(mut self) -> Self {
        self.record_provenance = true;
        self
    }

    pub fn pulse_count(&self) -> Result<u64> {
        match self.acquisition {
            Acquisition::Pulses(n) => Ok(n),
            Acquisition::DurationS(s) => {
                let n = s * self.config.laser.repetition_rate_hz;
                if !(n.is_finite() && n >= 0.0 && n < u64::MAX as f64) {
                    return Err(Error::Overflow(format!("duration {s} s gives {n} pulses")));
                }
                Ok(n.round() as u64)
            }
        }
    }
}

/// Origin of an OTDR tag, used only as a test oracle and by spectral thinning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum TagSource {
    Reflection = 0,
    Backflash = 1,
    Dark = 2,
}

impl TagSource {
    pub fn name(self) -> &'static str {
        match self {
            TagSource::Reflection => "reflection",
            TagSource::Backflash => "backflash",
            TagSource::Dark => "dark",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Avalanche {
    pub period: u64,
    /// Absolute start time in ps.
    pub start_ps: f64,
    pub gate_open_ps: f64,
    pub gate_close_ps: f64,
    /// Latest instant at which backflash can still be emitted.
    pub emission_end_ps: f64,
    pub from_dark_count: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Emission {
    pub avalanche: usize,
    /// Absolute emission time at the DUT in ps.
    pub time_ps: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Provenance {
    pub avalanches: Vec<Avalanche>,
    pub emissions: Vec<Emission>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub otdr_tags: Vec<TimeTag>,
    /// One label per OTDR tag, same order.
    pub labels: Vec<TagSource>,
    /// One DUT-sync tag per avalanche.
    pub dut_tags: Vec<TimeTag>,
    pub dut_click_count: u64,
    pub pulses: u64,
    pub period_ps: u64,
    /// Backflash photons leaving the DUT (after gate truncation), before any loss.
    pub backflash_emitted: u64,
    pub seed: u64,
    pub config_hash: u64,
    pub provenance: Option<Provenance>,
}

impl SimOutput {
    pub fn count(&self, source: TagSource) -> usize {
        self.labels.iter().filter(|&&l| l == source).count()
    }

    /// OTDR and DUT-sync tags merged in timestamp order.
    pub fn merged_tags(&self) -> Vec<TimeTag> {
        self.merged_records().into_iter().map(|(t, _)| t).collect()
    }

    /// Like [`merged_tags`](Self::merged_tags), with the source of each OTDR tag.
    /// DUT-sync tags carry `None`.
    pub fn merged_records(&self) -> Vec<(TimeTag, Option<TagSource>)> {
        let mut out = Vec::with_capacity(self.otdr_tags.len() + self.dut_tags.len());
        let (mut i, mut j) = (0, 0);
        while i < self.otdr_tags.len() || j < self.dut_tags.len() {
            let take_otdr = match (self.otdr_tags.get(i), self.dut_tags.get(j)) {
                (Some(a), Some(b)) => a.timestamp_ps <= b.timestamp_ps,
                (Some(_), None) => true,
                _ => false,
            };
            if take_otdr {
                out.push((self.otdr_tags[i], self.labels.get(i).copied()));
                i += 1;
            } else {
                out.push((self.dut_tags[j], None));
                j += 1;
            }
        }
        out
    }

    /// True leakage of this run: emitted backflash photons per DUT click.
    pub fn true_p_leak(&self) -> f64 {
        if self.dut_click_count == 0 {
            0.0
        } else {
            self.backflash_emitted as f64 / self.dut_click_count as f64
        }
    }
}

/// Per-run constants in picoseconds, derived once from the bench.
struct Timing {
    period_ps: f64,
    gate_open_ps: f64,
    gate_close_ps: f64,
    laser_arrival_ps: f64,
    laser_sigma_ps: f64,
    jitter_sigma_ps: f64,
    dead_time_ps: f64,
    one_way_ps: f64,
}

impl Timing {
    fn new(c: &BenchConfig) -> Self {
        let one_way = c.optical_path.dut_one_way_delay_ps();
        let open = one_way - c.dut.gate_delay_offset_ns * 1e3;
        Timing {
            period_ps: c.laser.period_ps() as f64,
            gate_open_ps: open,
            gate_close_ps: open + c.dut.gate_width_ns * 1e3,
            laser_arrival_ps: one_way,
            laser_sigma_ps: c.laser.pulse_width_fwhm_ps / FWHM_PER_SIGMA,
            jitter_sigma_ps: c.meas_detector.jitter_sigma_ps(),
            dead_time_ps: c.dut.dead_time_ns * 1e3,
            one_way_ps: one_way,
        }
    }
}

#[derive(Clone, Copy)]
struct Candidate {
    period: u64,
    t_ps: f64,
    dark: bool,
}

fn block_span(block: u64, pulses: u64) -> (u64, u64) {
    let first = block * BLOCK_PERIODS;
    (first, (first + BLOCK_PERIODS).min(pulses) - first)
}

fn dut_candidates(c: &BenchConfig, tm: &Timing, seed: u64, block: u64, pulses: u64) -> Result<Vec<Candidate>> {
    let (first, n) = block_span(block, pulses);
    let mut rng = substream(seed, Stream::DutArrivals, block);
    let eff = c.dut.efficiency()?;
    let mut out = Vec::new();

    let absorbed = poisson(&mut rng, n as f64 * c.laser.mean_photon_number_at_dut * eff);
    for _ in 0..absorbed {
        let period = first + rng.random_range(0..n);
        let t = tm.laser_arrival_ps + tm.laser_sigma_ps * normal(&mut rng);
        if t >= tm.gate_open_ps && t < tm.gate_close_ps {
            out.push(Candidate {
                period,
                t_ps: t,
                dark: false,
            });
        }
    }
    let gate_s = c.dut.gate_width_ns * 1e-9;
    let darks = poisson(&mut rng, n as f64 * c.dut.dark_count_rate_in_gate_hz * gate_s);
    for _ in 0..darks {
        let period = first + rng.random_range(0..n);
        let t = tm.gate_open_ps + rng.random::<f64>() * (tm.gate_close_ps - tm.gate_open_ps);
        out.push(Candidate {
            period,
            t_ps: t,
            dark: true,
        });
    }
    out.sort_by(|a, b| a.period.cmp(&b.period).then(a.t_ps.total_cmp(&b.t_ps)));
    Ok(out)
}

fn resolve_avalanches(blocks: Vec<Vec<Candidate>>, c: &BenchConfig, tm: &Timing) -> Vec<Vec<Avalanche>> {
    let mut ready = f64::NEG_INFINITY;
    let mut out = Vec::with_capacity(blocks.len());
    for cands in blocks {
        let mut avalanches = Vec::new();
        let mut last_period = None;
        for cand in cands {
            if last_period == Some(cand.period) {
                continue;
            }
            let period_start = cand.period as f64 * tm.period_ps;
            let start = period_start + cand.t_ps;
            if start < ready {
                continue;
            }
            let window_ns = c.dut.emission_window_ns((cand.t_ps - tm.gate_open_ps) / 1e3);
            avalanches.push(Avalanche {
                period: cand.period,
                start_ps: start,
                gate_open_ps: period_start + tm.gate_open_ps,
                gate_close_ps: period_start + tm.gate_close_ps,
                emission_end_ps: start + window_ns * 1e3,
                from_dark_count: cand.dark,
            });
            ready = start + tm.dead_time_ps;
            last_period = Some(cand.period);
        }
        out.push(avalanches);
    }
    out
}

struct BlockEmission {
    tags: Vec<(i64, TagSource)>,
    emitted: u64,
    emissions: Vec<Emission>,
}

fn emit_block(
    c: &BenchConfig,
    tm: &Timing,
    run: &SimRun,
    block: u64,
    pulses: u64,
    avalanches: &[Avalanche],
    first_avalanche: usize,
) -> BlockEmission {
    let (first, n) = block_span(block, pulses);
    let mut rng = substream(run.seed, Stream::Emission, block);
    let mu = c.laser.mean_photon_number_at_dut;
    let eta_ch = c.optical_path.channel_transmission;
    let eta_det = c.meas_detector.efficiency;
    let mut tags: Vec<(i64, TagSource)> = Vec::new();

    let surface = if run.gates_enabled {
        c.dut.surface_reflectance.gated_on
    } else {
        c.dut.surface_reflectance.gated_off
    };
    let reflectors = c
        .optical_path
        .reflection_points
        .iter()
        .map(|r| (r.round_trip_delay_ps, r.reflectance))
        .chain(std::iter::once((c.optical_path.dut_round_trip_delay_ps, surface)));
    for (delay, reflectance) in reflectors {
        let k = poisson(&mut rng, n as f64 * mu * reflectance * eta_ch);
        for _ in 0..k {
            let period = first + rng.random_range(0..n);
            let survives = rng.random::<f64>() < eta_det;
            let spread = tm.laser_sigma_ps * normal(&mut rng) + tm.jitter_sigma_ps * normal(&mut rng);
            if survives {
                let t = period as f64 * tm.period_ps + delay + spread;
                tags.push((t.round() as i64, TagSource::Reflection));
            }
        }
    }

    let yield_mean = c.dut.backflash_yield();
    let shape = &c.dut.backflash.shape;
    let mut emitted = 0;
    let mut emissions = Vec::new();
    for (i, av) in avalanches.iter().enumerate() {
        let k = poisson(&mut rng, yield_mean);
        for _ in 0..k {
            let tau_ps = shape.quantile(rng.random::<f64>()) * 1e3;
            let leaves = rng.random::<f64>() < eta_ch;
            let detected = rng.random::<f64>() < eta_det;
            let jitter = tm.jitter_sigma_ps * normal(&mut rng);
            let t_emit = av.start_ps + tau_ps;
            if t_emit > av.emission_end_ps {
                continue;
            }
            emitted += 1;
            if run.record_provenance {
                emissions.push(Emission {
                    avalanche: first_avalanche + i,
                    time_ps: t_emit,
                });
            }
            if leaves && detected {
                let t = t_emit + tm.one_way_ps + jitter;
                tags.push((t.round() as i64, TagSource::Backflash));
            }
        }
    }

    let span_ps = n as f64 * tm.period_ps;
    let darks = poisson(&mut rng, span_ps * 1e-12 * c.meas_detector.dark_count_rate_hz);
    let block_start = first as f64 * tm.period_ps;
    for _ in 0..darks {
        let t = block_start + rng.random::<f64>() * span_ps;
        tags.push((t.floor() as i64, TagSource::Dark));
    }

    tags.retain(|t| t.0 >= 0);
    tags.sort_by_key(|t| t.0);
    BlockEmission {
        tags,
        emitted,
        emissions,
    }
}

/// Runs the bench for the requested number of laser periods.
///
/// Uses the ambient rayon pool; the result is identical for any pool size.
pub fn simulate(run: &SimRun) -> Result<SimOutput> {
    let config = validate_bench(run.config.clone())?;
    let pulses = run.pulse_count()?;
    let period_ps = config.laser.period_ps();
    pulses
        .checked_mul(period_ps)
        .filter(|&end| end <= i64::MAX as u64 / 2)
        .ok_or_else(|| Error::Overflow(format!("{pulses} pulses of {period_ps} ps")))?;
    let tm = Timing::new(&config);
    let n_blocks = pulses.div_ceil(BLOCK_PERIODS);

    let candidates: Vec<Vec<Candidate>> = if run.gates_enabled {
        (0..n_blocks)
            .into_par_iter()
            .map(|b| dut_candidates(&config, &tm, run.seed, b, pulses))
            .collect::<Result<_>>()?
    } else {
        vec![Vec::new(); n_blocks as usize]
    };
    let avalanche_blocks = resolve_avalanches(candidates, &config, &tm);

    let mut offsets = Vec::with_capacity(avalanche_blocks.len());
    let mut acc = 0;
    for blk in &avalanche_blocks {
        offsets.push(acc);
        acc += blk.len();
    }

    let emitted_blocks: Vec<BlockEmission> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let i = b as usize;
            emit_block(&config, &tm, run, b, pulses, &avalanche_blocks[i], offsets[i])
        })
        .collect();

    let mut tagged: Vec<(i64, TagSource)> = Vec::with_capacity(emitted_blocks.iter().map(|b| b.tags.len()).sum());
    let mut backflash_emitted = 0;
    let mut emissions = Vec::new();
    for blk in emitted_blocks {
        tagged.extend(blk.tags);
        backflash_emitted += blk.emitted;
        emissions.extend(blk.emissions);
    }
    // blocks are individually sorted; jitter can push a few tags across a block edge
    tagged.sort_by_key(|t| t.0);

    let (otdr_tags, labels): (Vec<TimeTag>, Vec<TagSource>) = tagged
        .into_iter()
        .map(|(t, src)| (TimeTag::new(Channel::Otdr, t as u64), src))
        .unzip();

    let avalanches: Vec<Avalanche> = avalanche_blocks.into_iter().flatten().collect();
    let mut dut_tags: Vec<TimeTag> = avalanches
        .iter()
        .filter(|a| a.start_ps >= 0.0)
        .map(|a| TimeTag::new(Channel::DutSync, a.start_ps.round() as u64))
        .collect();
    dut_tags.sort_by_key(|t| t.timestamp_ps);

    let mut out = SimOutput {
        otdr_tags,
        labels,
        dut_click_count: avalanches.len() as u64,
        dut_tags,
        pulses,
        period_ps,
        backflash_emitted,
        seed: run.seed,
        config_hash: config.config_hash_u64(),
        provenance: run.record_provenance.then_some(Provenance { avalanches, emissions }),
    };

    if let Some(pb) = run.filter {
        out = apply_filter(
            &out,
            pb,
            &config.dut.backflash.spectrum,
            config.laser.wavelength_nm,
            run.seed,
        )?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BenchConfig;

    fn quiet_bench() -> BenchConfig {
        let mut b = BenchConfig::dut1();
        b.optical_path.reflection_points.clear();
        b.dut.backflash.mean_photons_per_avalanche = 0.0;
        b.dut.dark_count_rate_in_gate_hz = 0.0;
        b.dut.surface_reflectance.gated_on = 0.0;
        b.dut.surface_reflectance.gated_off = 0.0;
        b
    }

    #[test]
    fn only_dark_counts_when_nothing_else_emits() {
        let out = simulate(&SimRun::new(quiet_bench(), 200_000, 3)).unwrap();
        assert!(out.dut_click_count > 0);
        assert!(!out.otdr_tags.is_empty());
        assert!(out.labels.iter().all(|&l| l == TagSource::Dark));
        assert_eq!(out.backflash_emitted, 0);
    }

    #[test]
    fn same_seed_same_output() {
        let run = SimRun::new(BenchConfig::dut1(), 50_000, 11);
        assert_eq!(simulate(&run).unwrap(), simulate(&run).unwrap());
        let other = SimRun {
            seed: 12,
            ..run.clone()
        };
        assert_ne!(simulate(&run).unwrap().otdr_tags, simulate(&other).unwrap().otdr_tags);
    }

    #[test]
    fn gates_off_gives_no_clicks() {
        let out = simulate(&SimRun::new(BenchConfig::dut1(), 50_000, 1).gates_off()).unwrap();
        assert_eq!(out.dut_click_count, 0);
        assert_eq!(out.count(TagSource::Backflash), 0);
    }

    #[test]
    fn tags_are_sorted_and_labelled() {
        let out = simulate(&SimRun::new(BenchConfig::dut1(), 100_000, 5)).unwrap();
        assert_eq!(out.otdr_tags.len(), out.labels.len());
        assert!(out.otdr_tags.windows(2).all(|w| w[0].timestamp_ps <= w[1].timestamp_ps));
        assert!(out.dut_tags.windows(2).all(|w| w[0].timestamp_ps <= w[1].timestamp_ps));
        let merged = out.merged_tags();
        assert_eq!(merged.len(), out.otdr_tags.len() + out.dut_tags.len());
    }

    #[test]
    fn invalid_config_is_rejected() {
        let mut b = BenchConfig::dut1();
        b.meas_detector.efficiency = 2.0;
        assert!(matches!(simulate(&SimRun::new(b, 10, 0)), Err(Error::Validation(_))));
    }

    #[test]
    fn pulse_overflow_is_an_error() {
        let run = SimRun::new(BenchConfig::dut1(), u64::MAX / 2, 0);
        assert!(matches!(simulate(&run), Err(Error::Overflow(_))));
    }

    #[test]
    fn duration_converts_to_pulses() {
        let mut run = SimRun::new(BenchConfig::dut1(), 0, 0);
        run.acquisition = Acquisition::DurationS(2.0);
        assert_eq!(run.pulse_count().unwrap(), 100_000);
    }

    #[test]
    fn zero_pulses_is_empty() {
        let out = simulate(&SimRun::new(BenchConfig::dut1(), 0, 0)).unwrap();
        assert!(out.otdr_tags.is_empty() && out.dut_tags.is_empty());
    }
}
