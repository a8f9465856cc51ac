//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use backflash_core::io::{TagFileHeader, TagWriter};
use backflash_core::model::{calibrate_yield, expected_emission_fraction, BenchConfig, Channel, TimeTag};
use backflash_core::photonsim::{reference_seed, simulate, Passband, SimOutput, SimRun, TagSource};
use backflash_core::sidechannel::{discriminate, Countermeasure};
use backflash_core::tracelab::pipeline::{
    analyze, analyze_in_region, locate_region, Acquired, Analysis, AnalysisOptions,
};
use backflash_core::tracelab::{
    build_histogram, build_histogram_parallel, estimate_leakage, merge, CorrelationHistogram, HistogramGeometry,
};
use backflash_core::{SpectralDensity, TemporalDensity};

const PULSES: u64 = 10_000_000;

struct Outcome {
    pass: bool,
    detail: String,
}

type Criterion = (&'static str, fn() -> Outcome);

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn chi2_quantile(df: f64, p: f64) -> f64 {
    ChiSquared::new(df).unwrap().inverse_cdf(p)
}

/// Gated + gates-off pair at `seed`, analyzed with default options.
fn measure(bench: &BenchConfig, pulses: u64, seed: u64) -> (Analysis, SimOutput) {
    let opts = AnalysisOptions::default();
    let geom = opts.geometry(bench).unwrap();
    let gated = simulate(&SimRun::new(bench.clone(), pulses, seed)).unwrap();
    let reference = simulate(&SimRun::new(bench.clone(), pulses, reference_seed(seed)).gates_off()).unwrap();
    let a = analyze(
        &Acquired::from_sim(&gated, geom),
        &Acquired::from_sim(&reference, geom),
        bench,
        &opts,
    )
    .unwrap();
    (a, gated)
}

fn sigma(a: &Analysis) -> f64 {
    a.report.p_leak_std_error()
}

fn separation(lo: &Analysis, hi: &Analysis) -> f64 {
    (hi.report.p_leak - lo.report.p_leak) / sigma(lo).hypot(sigma(hi))
}

fn dut1_calibrated() -> BenchConfig {
    let mut b = BenchConfig::dut1();
    calibrate_yield(&mut b, 0.098);
    b
}

fn criterion_1() -> Outcome {
    let r = estimate_leakage(4900.0, 1_000_000, 0.1, 0.5).unwrap();
    outcome(r.p_leak == 0.098, format!("P_L = {:?}", r.p_leak))
}

fn criterion_2() -> Outcome {
    let bench = dut1_calibrated();
    let (a, gated) = measure(&bench, PULSES, 2);
    let p = a.report.p_leak;
    outcome(
        (p - 0.098).abs() <= 0.01,
        format!(
            "recovered P_L = {p:.5} +/- {:.5} (simulated truth {:.5}, region {:?})",
            sigma(&a),
            gated.true_p_leak(),
            a.region_source
        ),
    )
}

fn criterion_3() -> Outcome {
    let base = dut1_calibrated();
    let runs: Vec<Analysis> = [3.0, 4.5, 7.0]
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let mut b = base.clone();
            b.dut.excess_bias_v = v;
            measure(&b, PULSES, 30 + i as u64).0
        })
        .collect();
    let s01 = separation(&runs[0], &runs[1]);
    let s12 = separation(&runs[1], &runs[2]);
    let p: Vec<String> = runs.iter().map(|a| format!("{:.4}", a.report.p_leak)).collect();
    outcome(
        s01 > 3.0 && s12 > 3.0,
        format!(
            "P_L at 3/4.5/7 V = {}; separations {s01:.1} and {s12:.1} sigma",
            p.join("/")
        ),
    )
}

fn criterion_4() -> Outcome {
    let base = dut1_calibrated();
    let runs: Vec<Analysis> = [2.0, 10.0, 18.0]
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            let mut b = base.clone();
            b.dut.gate_delay_offset_ns = d;
            measure(&b, PULSES, 40 + i as u64).0
        })
        .collect();
    let drop = separation(&runs[2], &runs[0]);

    let cm = Countermeasure {
        gate_width_override_ns: Some(5.0),
        ..Default::default()
    };
    let rect = TemporalDensity::rectangular(10.0).unwrap();
    let flat = SpectralDensity::flat(1530.0, 1600.0).unwrap();
    let temporal = cm.factors(&flat, &rect, 0.0).unwrap().temporal;

    // closed-loop cross-check: a 5 ns gate opened as the laser pulse arrives
    let mut short = base.clone();
    short.dut.gate_width_ns = 5.0;
    short.dut.gate_delay_offset_ns = 0.0;
    let (s, _) = measure(&short, PULSES, 44);
    let ratio = s.report.p_leak / runs[0].report.p_leak;
    let ratio_sigma = ratio * (sigma(&s) / s.report.p_leak).hypot(sigma(&runs[0]) / runs[0].report.p_leak);
    let expected = expected_emission_fraction(&short) / expected_emission_fraction(&base);
    let consistent = (ratio - expected).abs() < 4.0 * ratio_sigma;

    let p: Vec<String> = runs.iter().map(|a| format!("{:.4}", a.report.p_leak)).collect();
    outcome(
        drop > 3.0 && (temporal - 0.5).abs() <= 0.02 && consistent,
        format!(
            "P_L at 2/10/18 ns = {}; drop {drop:.1} sigma; 5 ns override factor {temporal}; simulated 5 ns gate ratio {ratio:.3} +/- {ratio_sigma:.3} (model {expected:.3})",
            p.join("/")
        ),
    )
}

fn criterion_5() -> Outcome {
    let bench = dut1_calibrated();
    let opts = AnalysisOptions::default();
    let geom = opts.geometry(&bench).unwrap();
    let centers: Vec<f64> = (0..7).map(|i| 1535.0 + 10.0 * i as f64).collect();
    let laser = bench.laser.wavelength_nm;

    let mut points = Vec::new();
    for (i, &c) in centers.iter().enumerate() {
        let mut run = SimRun::new(bench.clone(), PULSES, 50 + i as u64);
        run.filter = Some(Passband::new(c, 10.0));
        let gated = simulate(&run).unwrap();
        let mut ref_run = SimRun::new(bench.clone(), PULSES, reference_seed(50 + i as u64)).gates_off();
        ref_run.filter = Some(Passband::new(c, 10.0));
        let reference = simulate(&ref_run).unwrap();
        points.push((c, gated, reference));
    }

    let acquired: Vec<(Acquired, Acquired)> = points
        .iter()
        .map(|(_, g, r)| (Acquired::from_sim(g, geom), Acquired::from_sim(r, geom)))
        .collect();
    let mut merged = CorrelationHistogram::empty(geom);
    for (g, _) in &acquired {
        merged = merge(&merged, &g.histogram).unwrap();
    }
    let (region, source, features) = locate_region(&merged, &bench, &opts);

    let mut counts = Vec::new();
    let mut laser_point = None;
    for (k, ((c, gated, _), (g, r))) in points.iter().zip(&acquired).enumerate() {
        let a = analyze_in_region(g, r, &bench, &opts, region, source, features.clone()).unwrap();
        if Passband::new(*c, 10.0).contains(laser) {
            laser_point = Some((k, gated, a));
        } else {
            counts.push((a.estimate.n_backflash, a.estimate.std_error));
        }
    }

    let w: f64 = counts.iter().map(|(_, s)| 1.0 / (s * s)).sum();
    let mean = counts.iter().map(|(n, s)| n / (s * s)).sum::<f64>() / w;
    let chi2: f64 = counts.iter().map(|(n, s)| ((n - mean) / s).powi(2)).sum();
    let chi2_crit = chi2_quantile((counts.len() - 1) as f64, 0.99);
    let uniform = chi2 < chi2_crit;

    let (k, laser_run, laser_analysis) = laser_point.expect("one passband holds the laser line");
    let reflections = laser_run.count(TagSource::Reflection);
    let backflash = laser_run.count(TagSource::Backflash);
    let gross: Vec<usize> = points.iter().map(|(_, g, _)| g.otdr_tags.len()).collect();
    let other_max = gross
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != k)
        .map(|(_, &g)| g)
        .max()
        .unwrap();
    let dominates = reflections > backflash && gross[k] as f64 > other_max as f64 + 5.0 * (other_max as f64).sqrt();

    // null test: static reflection peaks vanish after subtracting the gates-off reference
    let residual = &laser_analysis.residual;
    let w_ps = bench
        .laser
        .pulse_width_fwhm_ps
        .hypot(bench.meas_detector.timing_jitter_fwhm_ps)
        * 2.0;
    let mut null_ok = true;
    let mut nulls = Vec::new();
    for rp in &bench.optical_path.reflection_points {
        let lo = ((rp.round_trip_delay_ps - w_ps) / geom.bin_width_ps as f64).floor() as usize;
        let hi = ((rp.round_trip_delay_ps + w_ps) / geom.bin_width_ps as f64).ceil() as usize;
        let g: u64 = residual.gated[lo..hi].iter().sum();
        let r: u64 = residual.reference[lo..hi].iter().sum();
        let res = g as f64 - residual.scale * r as f64;
        let sd = (g as f64 + residual.scale.powi(2) * r as f64).sqrt();
        null_ok &= res.abs() < 4.0 * sd;
        nulls.push(format!("{:.1} sigma over {g} gross", res / sd));
    }

    let shown: Vec<String> = counts.iter().map(|(n, _)| format!("{n:.0}")).collect();
    outcome(
        uniform && dominates && null_ok,
        format!(
            "off-laser N_B = [{}], chi2 = {chi2:.2} < {chi2_crit:.2}: {uniform}; laser band {:.0} nm keeps {reflections} reflection vs {backflash} backflash tags; null residuals {}",
            shown.join(", "),
            centers[k],
            nulls.join(", ")
        ),
    )
}

fn shifted_rect(start_ns: f64, len_ns: f64) -> TemporalDensity {
    TemporalDensity::piecewise_linear(vec![
        [0.0, 0.0],
        [start_ns, 0.0],
        [start_ns + 1e-6, 1.0],
        [start_ns + len_ns, 1.0],
    ])
    .unwrap()
}

/// Half the L1 distance of two densities by a 0.1 ps midpoint sum of the pdfs.
fn tv_oracle(a: &TemporalDensity, b: &TemporalDensity) -> f64 {
    let end = a.duration_ns().max(b.duration_ns());
    let h = 1e-4;
    let n = (end / h).ceil() as usize;
    0.5 * (0..n)
        .map(|i| {
            let t = (i as f64 + 0.5) * h;
            (a.pdf(t) - b.pdf(t)).abs() * h
        })
        .sum::<f64>()
}

fn criterion_6() -> Outcome {
    let rect = TemporalDensity::rectangular(10.0).unwrap();
    let trap = TemporalDensity::trapezoidal(10.0, 2.0, 2.0).unwrap();
    let same = discriminate(&rect, &rect, 130.0);
    let disjoint = discriminate(&rect, &shifted_rect(10.0, 10.0), 0.0);
    let late = shifted_rect(5.0, 10.0);
    let half = discriminate(&rect, &late, 0.0);
    let oracle = (1.0 + tv_oracle(&rect, &late)) / 2.0;

    let jitters: Vec<f64> = (0..10).map(|i| i as f64 * 250.0).collect();
    let mut monotone = true;
    for (a, b) in [(&rect, &trap), (&rect, &late), (&trap, &late)] {
        let g: Vec<f64> = jitters
            .iter()
            .map(|&j| discriminate(a, b, j).guess_probability)
            .collect();
        monotone &= g.windows(2).all(|w| w[1] <= w[0]);
    }

    let pass = same.guess_probability == 0.5
        && disjoint.guess_probability == 1.0
        && (half.guess_probability - 0.75).abs() <= 1e-4
        && (half.guess_probability - oracle).abs() <= 1e-4
        && monotone;
    outcome(
        pass,
        format!(
            "identical {}, disjoint {}, half overlap {:.6} (oracle {oracle:.6}), monotone over 0..2250 ps: {monotone}",
            same.guess_probability, disjoint.guess_probability, half.guess_probability
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut equal = 0;
    for _ in 0..100 {
        let period = rng.random_range(1_000..200_000u64);
        let width = rng.random_range(1..=period.min(5_000));
        let origin = rng.random_range(-(period as i64)..period as i64);
        let geom = HistogramGeometry::new(period, width, origin).unwrap();
        let n = rng.random_range(0..20_000);
        let mut t = 0u64;
        let tags: Vec<TimeTag> = (0..n)
            .map(|_| {
                t += rng.random_range(0..3 * period);
                TimeTag::new(Channel::Otdr, t)
            })
            .collect();
        let one_shot = build_histogram(&tags, geom, n as u64);
        let mut streamed = CorrelationHistogram::empty(geom);
        let mut rest = &tags[..];
        while !rest.is_empty() {
            let k = rng.random_range(1..=rest.len());
            streamed = merge(&streamed, &build_histogram(&rest[..k], geom, 0)).unwrap();
            rest = &rest[k..];
        }
        streamed.total_triggers = n as u64;
        if streamed == one_shot && build_histogram_parallel(&tags, geom, n as u64) == one_shot {
            equal += 1;
        }
    }

    // channel, detector and filter thinning in sequence against one thinning by the product
    let bench = dut1_calibrated();
    let mut run = SimRun::new(bench.clone(), PULSES, 70).with_provenance();
    run.filter = Some(Passband::new(1575.0, 10.0));
    let out = simulate(&run).unwrap();
    let prov = out.provenance.as_ref().unwrap();
    let p = bench.optical_path.channel_transmission
        * bench.meas_detector.efficiency
        * bench.dut.backflash.spectrum.fraction_in(1570.0, 1580.0);
    let groups = 50u64;
    let per_group = PULSES.div_ceil(groups);
    let mut emitted = vec![0u64; groups as usize];
    for e in &prov.emissions {
        emitted[(prov.avalanches[e.avalanche].period / per_group) as usize] += 1;
    }
    let mut detected = vec![0u64; groups as usize];
    for (tag, src) in out.otdr_tags.iter().zip(&out.labels) {
        if *src == TagSource::Backflash {
            detected[(tag.timestamp_ps / out.period_ps / per_group) as usize] += 1;
        }
    }
    let chi2: f64 = emitted
        .iter()
        .zip(&detected)
        .map(|(&e, &d)| {
            let mean = e as f64 * p;
            (d as f64 - mean).powi(2) / (mean * (1.0 - p))
        })
        .sum();
    let crit = chi2_quantile(groups as f64, 0.99);

    outcome(
        equal == 100 && chi2 < crit,
        format!("{equal}/100 merged histograms identical; thinning chi2 = {chi2:.1} < {crit:.1} over {groups} groups"),
    )
}

fn tag_bytes(out: &SimOutput) -> Vec<u8> {
    let header = TagFileHeader {
        seed: out.seed,
        config_hash: out.config_hash,
        trigger_count: out.pulses,
    };
    let mut w = TagWriter::new(Vec::new(), header).unwrap();
    for t in out.merged_tags() {
        w.write(t).unwrap();
    }
    w.finish().unwrap()
}

fn criterion_8() -> Outcome {
    // dark counts alone
    let mut dark = BenchConfig::dut1();
    dark.laser.mean_photon_number_at_dut = 0.0;
    dark.dut.dark_count_rate_in_gate_hz = 0.0;
    let dark_out = simulate(&SimRun::new(dark.clone(), PULSES, 80)).unwrap();
    let expected = dark.meas_detector.dark_count_rate_hz * PULSES as f64 * dark.laser.period_ps() as f64 * 1e-12;
    let z_dark = (dark_out.otdr_tags.len() as f64 - expected) / expected.sqrt();

    // reflection-peak bins over independent 10^6-period acquisitions
    let bench = BenchConfig::dut1();
    let geom = HistogramGeometry::new(bench.laser.period_ps(), 100, 0).unwrap();
    let replicas = 300;
    let hists: Vec<CorrelationHistogram> = (0..replicas)
        .map(|r| {
            let out = simulate(&SimRun::new(bench.clone(), 1_000_000, 1_000 + r)).unwrap();
            build_histogram(&out.otdr_tags, geom, out.pulses)
        })
        .collect();
    let mut var_sum = 0.0;
    let mut mean_sum = 0.0;
    for rp in &bench.optical_path.reflection_points {
        let centre = (rp.round_trip_delay_ps / 100.0) as usize;
        for bin in centre - 5..=centre + 5 {
            let xs: Vec<f64> = hists.iter().map(|h| h.counts[bin] as f64).collect();
            let m = xs.iter().sum::<f64>() / replicas as f64;
            if m < 10.0 {
                continue;
            }
            let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (replicas - 1) as f64;
            var_sum += v;
            mean_sum += m;
        }
    }
    let dispersion = var_sum / mean_sum;

    // worker-count independence
    let run = SimRun::new(dut1_calibrated(), 2_000_000, 81);
    let in_pool = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| tag_bytes(&simulate(&run).unwrap()))
    };
    let identical = in_pool(1) == in_pool(4);

    outcome(
        z_dark.abs() < 4.0 && (0.9..=1.1).contains(&dispersion) && identical,
        format!(
            "dark-only {} tags vs {expected:.0} expected ({z_dark:+.2} sigma); peak variance/mean {dispersion:.3}; 1 vs 4 workers byte-identical: {identical}",
            dark_out.otdr_tags.len()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("leakage formula exactness", criterion_1),
        ("closed-loop DUT1 recovery", criterion_2),
        ("excess-bias trend", criterion_3),
        ("gate-delay truncation", criterion_4),
        ("spectral sweep and null test", criterion_5),
        ("discrimination bounds", criterion_6),
        ("histogram merge and thinning", criterion_7),
        ("statistical sanity and determinism", criterion_8),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let o = f();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {}: {verdict} {name} ({:.1} s): {}",
            i + 1,
            t0.elapsed().as_secs_f64(),
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    if failed == 0 {
        println!("acceptance: all {} criteria passed", criteria.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} of {} criteria failed", criteria.len());
        ExitCode::FAILURE
    }
}
