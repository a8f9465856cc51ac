//! File formats: binary time tags, CSV tables and JSON reports.

pub mod csv;
pub mod report;
pub mod tagfile;

pub use csv::{histogram_from_table, histogram_table, Table, HISTOGRAM_SCHEMA};
pub use report::{AcquisitionSummary, AnalysisReport, AnalysisSettings, RegionSummary, REPORT_SCHEMA};
pub use tagfile::{read_tags, write_tags, TagFileError, TagFileHeader, TagReader, TagWriter};
