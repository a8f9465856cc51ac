use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use backflash_core::io::{
    histogram_table, write_tags, AcquisitionSummary, AnalysisReport, Table, TagFileHeader, TagReader,
};
use backflash_core::model::{validate_bench, BenchConfig, Channel};
use backflash_core::photonsim::{apply_axis_value, reference_seed, simulate, Acquisition, Passband, SimRun, SweepAxis};
use backflash_core::sidechannel::{residual_leakage, Countermeasure, GuardReport};
use backflash_core::tracelab::pipeline::{analyze_in_region, locate_region};
use backflash_core::tracelab::{
    analyze, merge, Acquired, Analysis, AnalysisOptions, CorrelationHistogram, DelayRegion, HistogramGeometry,
};

use crate::args::{
    AnalysisArgs, AnalyzeArgs, BenchArgs, GuardArgs, HistogramArgs, Preset, SimulateArgs, SpectrumArgs, SweepArgs,
};
use crate::UsageError;

const PROVENANCE_SCHEMA: &str = "backflash-provenance/1";
const SWEEP_SCHEMA: &str = "backflash-sweep/1";
const SPECTRUM_SCHEMA: &str = "backflash-spectrum/1";

fn load_bench(args: &BenchArgs) -> Result<BenchConfig> {
    let bench = match (&args.config, args.preset) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            BenchConfig::from_json(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        (None, Some(Preset::Dut1)) => BenchConfig::dut1(),
        (None, Some(Preset::Dut2)) => BenchConfig::dut2(),
        (None, None) => bail!(UsageError("one of --config or --preset is required".into())),
    };
    Ok(validate_bench(bench)?)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_table(path: &Path, table: &Table) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    table.write_to(BufWriter::new(file))?;
    Ok(())
}

fn options(a: &AnalysisArgs, region: Option<DelayRegion>) -> AnalysisOptions {
    AnalysisOptions {
        bin_width_ps: a.geometry.bin_width_ps,
        origin_ps: a.geometry.origin_ps,
        peak_min_prominence: a.peak_min_prominence,
        region_margin_ps: a.region_margin_ps,
        region,
        ci_method: a.ci.into(),
        subtract_dut_dark: a.subtract_dut_dark,
        ..Default::default()
    }
}

fn geometry(bench: &BenchConfig, bin_width_ps: u64, origin_ps: i64) -> Result<HistogramGeometry> {
    HistogramGeometry::new(bench.laser.period_ps(), bin_width_ps, origin_ps)
        .map_err(|e| UsageError(e.to_string()).into())
}

/// Streams a tag file into a histogram of its OTDR channel and a DUT click count.
fn acquire(path: &Path, bench: &BenchConfig, geom: HistogramGeometry) -> Result<(Acquired, TagFileHeader)> {
    let reader = TagReader::open(path).with_context(|| format!("opening {}", path.display()))?;
    let header = reader.header();
    let expected = bench.config_hash_u64();
    if header.config_hash != 0 && header.config_hash != expected {
        bail!(
            "{} was written for bench {:016x}, but the configuration hashes to {:016x}",
            path.display(),
            header.config_hash,
            expected
        );
    }
    let mut histogram = CorrelationHistogram::empty(geom);
    histogram.add_triggers(header.trigger_count);
    let mut dut_counts = 0;
    for tag in reader {
        let tag = tag.with_context(|| format!("reading {}", path.display()))?;
        match tag.channel {
            Channel::Otdr => histogram.fold(tag.timestamp_ps),
            Channel::DutSync => dut_counts += 1,
            _ => {}
        }
    }
    Ok((Acquired { histogram, dut_counts }, header))
}

pub fn run_simulate(a: SimulateArgs) -> Result<()> {
    let bench = load_bench(&a.bench)?;
    let mut run = SimRun::new(bench, a.pulses.unwrap_or(0), a.seed);
    if let Some(s) = a.duration_s {
        run.acquisition = Acquisition::DurationS(s);
    }
    run.gates_enabled = !a.gates_off;
    run.filter = a.filter_center_nm.map(|c| Passband::new(c, a.filter_bandwidth_nm));
    let out = simulate(&run)?;

    let header = TagFileHeader {
        seed: a.seed,
        config_hash: out.config_hash,
        trigger_count: out.pulses,
    };
    let records = out.merged_records();
    let written = write_tags(&a.out, header, records.iter().map(|(t, _)| t))
        .with_context(|| format!("writing {}", a.out.display()))?;

    if a.debug {
        let path = a.provenance_out.clone().unwrap_or_else(|| {
            let mut p = a.out.clone().into_os_string();
            p.push(".provenance.csv");
            PathBuf::from(p)
        });
        let mut meta = Table::new(&["index", "source"]);
        meta.meta("schema", PROVENANCE_SCHEMA)
            .meta("config_hash", run.config.config_hash())
            .meta("seed", a.seed);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(file);
        meta.write_to(&mut w)?;
        for (i, (_, source)) in records.iter().enumerate() {
            if let Some(s) = source {
                writeln!(w, "{i},{}", s.name())?;
            }
        }
        w.flush()?;
    }
    println!(
        "wrote {written} tags ({} OTDR, {} DUT) for {} pulses to {}",
        out.otdr_tags.len(),
        out.dut_tags.len(),
        out.pulses,
        a.out.display()
    );
    Ok(())
}

pub fn run_histogram(a: HistogramArgs) -> Result<()> {
    let bench = load_bench(&a.bench)?;
    let geom = geometry(&bench, a.geometry.bin_width_ps, a.geometry.origin_ps)?;
    let (acq, header) = acquire(&a.tags, &bench, geom)?;
    let mut table = histogram_table(&acq.histogram);
    table
        .meta("config_hash", bench.config_hash())
        .meta("seed", header.seed)
        .meta("dut_counts", acq.dut_counts);
    write_table(&a.out, &table)
}

pub fn run_analyze(a: AnalyzeArgs) -> Result<()> {
    let bench = load_bench(&a.bench)?;
    let region = match (a.region_start_ps, a.region_end_ps) {
        (Some(s), Some(e)) if e > s => Some(DelayRegion::new(s, e)),
        (Some(s), Some(e)) => bail!(UsageError(format!("region end {e} must exceed start {s}"))),
        _ => None,
    };
    let opts = options(&a.analysis, region);
    let geom = geometry(&bench, opts.bin_width_ps, opts.origin_ps)?;
    let (gated, gh) = acquire(&a.gated, &bench, geom)?;
    let (reference, rh) = acquire(&a.reference, &bench, geom)?;
    let analysis = analyze(&gated, &reference, &bench, &opts)?;
    let report = AnalysisReport::new(
        &bench,
        &analysis,
        &opts,
        AcquisitionSummary {
            seed: gh.seed,
            triggers: gh.trigger_count,
        },
        AcquisitionSummary {
            seed: rh.seed,
            triggers: rh.trigger_count,
        },
    );
    write_file(&a.out, &(report.to_json() + "\n"))?;
    let r = &analysis.report;
    println!("p_leak = {} (95% CI {} .. {})", r.p_leak, r.ci_low, r.ci_high);
    Ok(())
}

fn simulate_pair(run: &SimRun, geom: HistogramGeometry) -> Result<(Acquired, Acquired, u64)> {
    let gated = simulate(run)?;
    let mut reference_run = run.clone().gates_off();
    reference_run.seed = reference_seed(run.seed);
    let reference = simulate(&reference_run)?;
    Ok((
        Acquired::from_sim(&gated, geom),
        Acquired::from_sim(&reference, geom),
        gated.otdr_tags.len() as u64,
    ))
}

fn leakage_columns(a: &Analysis) -> Vec<String> {
    let r = &a.report;
    vec![
        r.p_leak.to_string(),
        r.p_leak_std_error().to_string(),
        r.ci_low.to_string(),
        r.ci_high.to_string(),
        r.n_backflash.to_string(),
        r.n_backflash_std_error.to_string(),
        r.n_dut_counts.to_string(),
        a.region.start_ps.to_string(),
        a.region.end_ps.to_string(),
    ]
}

const LEAKAGE_HEADER: [&str; 9] = [
    "p_leak",
    "p_leak_std_error",
    "ci_low",
    "ci_high",
    "n_backflash",
    "n_backflash_std_error",
    "n_dut_counts",
    "region_start_ps",
    "region_end_ps",
];

pub fn run_sweep(a: SweepArgs) -> Result<()> {
    let bench = load_bench(&a.bench)?;
    let opts = options(&a.analysis, None);
    let geom = geometry(&bench, opts.bin_width_ps, opts.origin_ps)?;
    let mut base = SimRun::new(bench.clone(), a.pulses, a.seed);
    if a.axis == SweepAxis::FilterCenter {
        base.filter = Some(Passband::new(0.0, a.filter_bandwidth_nm));
    }

    let mut header = vec![a.axis.name(), "seed", "config_hash"];
    header.extend(LEAKAGE_HEADER);
    header.push("region_source");
    let mut table = Table::new(&header);
    table
        .meta("schema", SWEEP_SCHEMA)
        .meta("config_hash", bench.config_hash())
        .meta("seed", a.seed)
        .meta("axis", a.axis)
        .meta("pulses", a.pulses)
        .meta("bin_width_ps", opts.bin_width_ps);

    for (i, &v) in a.values.iter().enumerate() {
        let mut run = apply_axis_value(&base, a.axis, v);
        run.seed = a.seed.wrapping_add(i as u64);
        let config = validate_bench(run.config.clone()).with_context(|| format!("{} = {v}", a.axis))?;
        let (gated, reference, _) = simulate_pair(&run, geom).with_context(|| format!("{} = {v}", a.axis))?;
        let analysis = analyze(&gated, &reference, &config, &opts).with_context(|| format!("{} = {v}", a.axis))?;
        let mut row = vec![v.to_string(), run.seed.to_string(), config.config_hash()];
        row.extend(leakage_columns(&analysis));
        row.push(
            serde_json::to_value(analysis.region_source)?
                .as_str()
                .unwrap_or_default()
                .to_string(),
        );
        table.push_row(row);
    }
    write_table(&a.out, &table)
}

fn filter_centers(a: &SpectrumArgs) -> Result<Vec<f64>> {
    if !a.centers_nm.is_empty() {
        return Ok(a.centers_nm.clone());
    }
    let (Some(from), Some(to), Some(step)) = (a.from_nm, a.to_nm, a.step_nm) else {
        bail!(UsageError("--from-nm needs --to-nm and --step-nm".into()));
    };
    if !(step > 0.0) || to < from {
        bail!(UsageError(format!("empty grid {from}..{to} step {step}")));
    }
    let n = ((to - from) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|i| from + step * i as f64).collect())
}

pub fn run_spectrum(a: SpectrumArgs) -> Result<()> {
    let bench = load_bench(&a.bench)?;
    let centers = filter_centers(&a)?;
    if !(a.bandwidth_nm > 0.0) {
        bail!(UsageError(format!(
            "--bandwidth-nm must be positive, got {}",
            a.bandwidth_nm
        )));
    }
    let opts = options(&a.analysis, None);
    let geom = geometry(&bench, opts.bin_width_ps, opts.origin_ps)?;

    let mut points = Vec::with_capacity(centers.len());
    for (i, &c) in centers.iter().enumerate() {
        let mut run = SimRun::new(bench.clone(), a.pulses, a.seed.wrapping_add(i as u64));
        run.filter = Some(Passband::new(c, a.bandwidth_nm));
        points.push((
            run.seed,
            simulate_pair(&run, geom).with_context(|| format!("filter at {c} nm"))?,
        ));
    }

    // one region for every centre, located on the summed gated histograms
    let mut merged = CorrelationHistogram::empty(geom);
    for (_, (g, _, _)) in &points {
        merged = merge(&merged, &g.histogram)?;
    }
    let (region, source, features) = locate_region(&merged, &bench, &opts);

    let mut header = vec!["center_nm", "seed", "total_counts", "region_counts"];
    header.extend(LEAKAGE_HEADER);
    let mut table = Table::new(&header);
    table
        .meta("schema", SPECTRUM_SCHEMA)
        .meta("config_hash", bench.config_hash())
        .meta("seed", a.seed)
        .meta("bandwidth_nm", a.bandwidth_nm)
        .meta("pulses", a.pulses)
        .meta(
            "region_source",
            serde_json::to_value(source)?.as_str().unwrap_or_default(),
        );
    for (&c, (seed, (g, r, total))) in centers.iter().zip(&points) {
        let analysis = analyze_in_region(g, r, &bench, &opts, region, source, features.clone())
            .with_context(|| format!("filter at {c} nm"))?;
        let mut row = vec![
            c.to_string(),
            seed.to_string(),
            total.to_string(),
            analysis.estimate.gross_counts.to_string(),
        ];
        row.extend(leakage_columns(&analysis));
        table.push_row(row);
    }
    write_table(&a.out, &table)
}

pub fn run_guard(a: GuardArgs) -> Result<()> {
    let report_text = fs::read_to_string(&a.report).with_context(|| format!("reading {}", a.report.display()))?;
    let report = AnalysisReport::from_json(&report_text).with_context(|| format!("parsing {}", a.report.display()))?;
    let cm_text =
        fs::read_to_string(&a.countermeasure).with_context(|| format!("reading {}", a.countermeasure.display()))?;
    let cm: Countermeasure =
        serde_json::from_str(&cm_text).with_context(|| format!("parsing {}", a.countermeasure.display()))?;

    let cfg = &report.config;
    let residual = residual_leakage(
        &report.leakage,
        &cm,
        &cfg.dut.backflash.spectrum,
        &cfg.dut.backflash.shape,
        cfg.laser.wavelength_nm,
        cfg.dut.gate_delay_offset_ns,
    )?;
    let mut out = GuardReport::new(
        report_text.as_bytes(),
        cm_text.as_bytes(),
        report.leakage.clone(),
        cm,
        residual,
    );
    out.config_hash = Some(report.config_hash.clone());
    out.seed = Some(report.seed);
    write_file(&a.out, &(serde_json::to_string_pretty(&out)? + "\n"))?;
    println!(
        "residual p_leak = {} (factor {}, signal passes: {})",
        out.residual.p_leak, out.total_factor, out.signal_passes
    );
    Ok(())
}
