use std::fs;

use backflash_core::io::{
    histogram_from_table, histogram_table, read_tags, write_tags, AcquisitionSummary, AnalysisReport, Table,
    TagFileError, TagFileHeader, TagReader,
};
use backflash_core::model::BenchConfig;
use backflash_core::photonsim::{reference_seed, simulate, SimRun};
use backflash_core::tracelab::{analyze, Acquired, AnalysisOptions};
use backflash_core::Error;

#[test]
fn million_tags_survive_a_file() {
    let out = simulate(&SimRun::new(BenchConfig::dut1(), 6_000_000, 41)).unwrap();
    let tags = out.merged_tags();
    assert!(tags.len() > 1_000_000, "{}", tags.len());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.tags");
    let header = TagFileHeader {
        seed: 41,
        config_hash: out.config_hash,
        trigger_count: out.pulses,
    };
    assert_eq!(write_tags(&path, header, &tags).unwrap(), tags.len() as u64);
    assert_eq!(fs::metadata(&path).unwrap().len(), 32 + 9 * tags.len() as u64);
    let (h, back) = read_tags(&path).unwrap();
    assert_eq!(h, header);
    assert_eq!(back, tags);
}

#[test]
fn truncated_file_reports_the_offset() {
    let out = simulate(&SimRun::new(BenchConfig::dut1(), 10_000, 42)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cut.tags");
    write_tags(&path, TagFileHeader::default(), &out.merged_tags()).unwrap();
    let bytes = fs::read(&path).unwrap();
    fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();

    let items: Vec<_> = TagReader::open(&path).unwrap().collect();
    let err = items.last().unwrap().as_ref().unwrap_err();
    match err {
        TagFileError::TruncatedRecord { offset, available } => {
            assert_eq!(*available, 5);
            assert_eq!(*offset as usize, bytes.len() - 9);
        }
        other => panic!("unexpected {other:?}"),
    }
    assert!(items[..items.len() - 1].iter().all(Result::is_ok));
    assert!(matches!(read_tags(&path), Err(TagFileError::TruncatedRecord { .. })));
}

#[test]
fn histogram_csv_round_trips() {
    let bench = BenchConfig::dut1();
    let out = simulate(&SimRun::new(bench.clone(), 200_000, 43)).unwrap();
    let geom = AnalysisOptions::default().geometry(&bench).unwrap();
    let hist = Acquired::from_sim(&out, geom).histogram;
    let mut table = histogram_table(&hist);
    table.meta("seed", 43);
    let text = table.to_string();
    assert!(text.starts_with("# "));
    let parsed = Table::parse(&text).unwrap();
    assert_eq!(parsed.get_meta("seed"), Some("43"));
    assert_eq!(histogram_from_table(&parsed).unwrap(), hist);
}

#[test]
fn report_json_reparses() {
    let bench = BenchConfig::dut1();
    let gated = simulate(&SimRun::new(bench.clone(), 1_000_000, 44)).unwrap();
    let reference = simulate(&SimRun::new(bench.clone(), 1_000_000, reference_seed(44)).gates_off()).unwrap();
    let opts = AnalysisOptions::default();
    let geom = opts.geometry(&bench).unwrap();
    let a = analyze(
        &Acquired::from_sim(&gated, geom),
        &Acquired::from_sim(&reference, geom),
        &bench,
        &opts,
    )
    .unwrap();
    let report = AnalysisReport::new(
        &bench,
        &a,
        &opts,
        AcquisitionSummary {
            seed: 44,
            triggers: gated.pulses,
        },
        AcquisitionSummary {
            seed: reference_seed(44),
            triggers: reference.pulses,
        },
    );
    let json = report.to_json();
    let back = AnalysisReport::from_json(&json).unwrap();
    assert_eq!(back, report);
    assert_eq!(back.config_hash, bench.config_hash());

    let wrong = json.replace("backflash-report/1", "backflash-report/9");
    assert!(matches!(AnalysisReport::from_json(&wrong), Err(Error::Schema { .. })));
}
