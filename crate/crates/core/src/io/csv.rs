//! Plain CSV tables preceded by `# key=value` metadata lines.

use std::fmt;
use std::io::Write;

use crate::error::{Error, Result};
use crate::tracelab::CorrelationHistogram;

pub const HISTOGRAM_SCHEMA: &str = "backflash-histogram/1";

/// A parsed CSV artifact.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub metadata: Vec<(String, String)>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        }
    }

    pub fn meta(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.metadata.push((key.to_string(), value.to_string()));
        self
    }

    pub fn push_row(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn get_meta(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn expect_schema(&self, expected: &'static str) -> Result<()> {
        match self.get_meta("schema") {
            Some(found) if found == expected => Ok(()),
            found => Err(Error::Schema {
                found: found.unwrap_or("").to_string(),
                expected,
            }),
        }
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Values of column `name` parsed as `f64`.
    pub fn numeric_column(&self, name: &str) -> Result<Vec<f64>> {
        let idx = self.column(name).ok_or_else(|| Error::Parse {
            what: "csv",
            detail: format!("missing column {name:?}"),
        })?;
        self.rows
            .iter()
            .map(|r| {
                r[idx].parse::<f64>().map_err(|e| Error::Parse {
                    what: "csv",
                    detail: format!("column {name:?}: {e}"),
                })
            })
            .collect()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        for (k, v) in &self.metadata {
            writeln!(w, "# {k}={v}")?;
        }
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.header).map_err(csv_error)?;
        for row in &self.rows {
            out.write_record(row).map_err(csv_error)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut table = Table::default();
        let mut body = text;
        while let Some(line) = body.lines().next() {
            let Some(meta) = line.strip_prefix('#') else { break };
            let (k, v) = meta.trim().split_once('=').ok_or_else(|| Error::Parse {
                what: "csv",
                detail: format!("metadata line without '=': {line:?}"),
            })?;
            table.metadata.push((k.trim().to_string(), v.trim().to_string()));
            body = body[line.len()..].trim_start_matches(['\r', '\n']);
        }
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(body.as_bytes());
        table.header = reader
            .headers()
            .map_err(csv_error)?
            .iter()
            .map(str::to_string)
            .collect();
        if table.header.iter().all(String::is_empty) {
            return Err(Error::Parse {
                what: "csv",
                detail: "no header row".into(),
            });
        }
        for record in reader.records() {
            table
                .rows
                .push(record.map_err(csv_error)?.iter().map(str::to_string).collect());
        }
        Ok(table)
    }
}

impl fmt::Display for Table {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut buf = Vec::new();
        self.write_to(&mut buf).map_err(|_| fmt::Error)?;
        f.write_str(&String::from_utf8_lossy(&buf))
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Parse {
        what: "csv",
        detail: e.to_string(),
    }
}

/// `delay_ps,counts` with the fold geometry in the metadata.
pub fn histogram_table(hist: &CorrelationHistogram) -> Table {
    let mut t = Table::new(&["delay_ps", "counts"]);
    t.meta("schema", HISTOGRAM_SCHEMA)
        .meta("bin_width_ps", hist.bin_width_ps)
        .meta("origin_ps", hist.origin_ps)
        .meta("period_ps", hist.period_ps)
        .meta("triggers", hist.total_triggers);
    let geom = hist.geometry();
    for (i, c) in hist.counts.iter().enumerate() {
        t.push_row(vec![geom.delay_of(i).to_string(), c.to_string()]);
    }
    t
}

/// Rebuilds a histogram from [`histogram_table`] output.
pub fn histogram_from_table(t: &Table) -> Result<CorrelationHistogram> {
    t.expect_schema(HISTOGRAM_SCHEMA)?;
    let meta_u = |key: &str| -> Result<u64> {
        t.get_meta(key)
            .ok_or_else(|| Error::Parse {
                what: "histogram csv",
                detail: format!("missing metadata {key}"),
            })?
            .parse()
            .map_err(|e| Error::Parse {
                what: "histogram csv",
                detail: format!("{key}: {e}"),
            })
    };
    let origin: i64 = t
        .get_meta("origin_ps")
        .unwrap_or("0")
        .parse()
        .map_err(|e| Error::Parse {
            what: "histogram csv",
            detail: format!("origin_ps: {e}"),
        })?;
    let idx = t.column("counts").ok_or_else(|| Error::Parse {
        what: "histogram csv",
        detail: "missing counts column".into(),
    })?;
    let counts = t
        .rows
        .iter()
        .map(|r| {
            r[idx].parse::<u64>().map_err(|e| Error::Parse {
                what: "histogram csv",
                detail: e.to_string(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CorrelationHistogram {
        bin_width_ps: meta_u("bin_width_ps")?,
        origin_ps: origin,
        period_ps: meta_u("period_ps")?,
        counts,
        total_triggers: meta_u("triggers")?,
    })
}
