use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use backflash_core::io::{TagFileHeader, TagReader, TagWriter};
use backflash_core::model::{BenchConfig, TemporalDensity};
use backflash_core::photonsim::{reference_seed, simulate, SimRun};
use backflash_core::sidechannel::discriminate;
use backflash_core::tracelab::{analyze, build_histogram, build_histogram_parallel, Acquired, AnalysisOptions};

fn bench_simulate(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulate");
    for pulses in [100_000u64, 1_000_000] {
        group.throughput(Throughput::Elements(pulses));
        group.bench_with_input(BenchmarkId::new("dut1", pulses), &pulses, |b, &n| {
            let run = SimRun::new(BenchConfig::dut1(), n, 1);
            b.iter(|| simulate(black_box(&run)).unwrap());
        });
    }
    group.finish();
}

fn bench_histogram(c: &mut Criterion) {
    let bench = BenchConfig::dut1();
    let out = simulate(&SimRun::new(bench.clone(), 2_000_000, 2)).unwrap();
    let geom = AnalysisOptions::default().geometry(&bench).unwrap();
    let mut group = c.benchmark_group("histogram");
    group.throughput(Throughput::Elements(out.otdr_tags.len() as u64));
    group.bench_function("sequential", |b| {
        b.iter(|| build_histogram(black_box(&out.otdr_tags), geom, out.pulses))
    });
    group.bench_function("parallel", |b| {
        b.iter(|| build_histogram_parallel(black_box(&out.otdr_tags), geom, out.pulses))
    });
    group.finish();
}

fn bench_tagfile(c: &mut Criterion) {
    let tags = simulate(&SimRun::new(BenchConfig::dut1(), 2_000_000, 3))
        .unwrap()
        .merged_tags();
    let header = TagFileHeader::default();
    let encode = || {
        let mut w = TagWriter::new(Vec::with_capacity(32 + 9 * tags.len()), header).unwrap();
        for &t in &tags {
            w.write(t).unwrap();
        }
        w.finish().unwrap()
    };
    let bytes = encode();
    let mut group = c.benchmark_group("tagfile");
    group.throughput(Throughput::Bytes(bytes.len() as u64));
    group.bench_function("write", |b| b.iter(encode));
    group.bench_function("read", |b| {
        b.iter(|| {
            TagReader::new(black_box(&bytes[..]))
                .unwrap()
                .map(Result::unwrap)
                .count()
        })
    });
    group.finish();
}

fn bench_analyze(c: &mut Criterion) {
    let bench = BenchConfig::dut1();
    let opts = AnalysisOptions::default();
    let geom = opts.geometry(&bench).unwrap();
    let gated = simulate(&SimRun::new(bench.clone(), 1_000_000, 4)).unwrap();
    let reference = simulate(&SimRun::new(bench.clone(), 1_000_000, reference_seed(4)).gates_off()).unwrap();
    let (g, r) = (Acquired::from_sim(&gated, geom), Acquired::from_sim(&reference, geom));
    c.bench_function("analyze", |b| {
        b.iter(|| analyze(black_box(&g), &r, &bench, &opts).unwrap())
    });
}

fn bench_discriminate(c: &mut Criterion) {
    let rect = TemporalDensity::rectangular(10.0).unwrap();
    let trap = TemporalDensity::trapezoidal(20.0, 4.0, 4.0).unwrap();
    let mut group = c.benchmark_group("discriminate");
    for jitter in [0.0, 300.0] {
        group.bench_with_input(BenchmarkId::from_parameter(jitter), &jitter, |b, &j| {
            b.iter(|| discriminate(black_box(&rect), &trap, j))
        });
    }
    group.finish();
}

criterion_group!(
    benches,
    bench_simulate,
    bench_histogram,
    bench_tagfile,
    bench_analyze,
    bench_discriminate
);
criterion_main!(benches);
