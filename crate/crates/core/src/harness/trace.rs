//! CSV trace and summary files.
//!
//! Floats are written with 17 significant digits so every value reads back
//! to the same double.

use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::metrics::{GapReport, Metric};

pub const TRACE_HEADER: &str = "run_id,seed,t,metric,value,state,config_hash";
pub const SUMMARY_HEADER: &str = "metric,state,t,seeds,median,q10,q25,q75,q90,min,max";
pub const FAILURES_HEADER: &str = "seed,error";

/// One trace row.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub run_id: String,
    pub seed: u64,
    pub t: u64,
    pub metric: Metric,
    pub value: f64,
    pub state: Option<usize>,
    pub config_hash: String,
}

impl TraceRecord {
    pub fn from_report(run_id: &str, seed: u64, config_hash: &str, report: &GapReport) -> Self {
        Self {
            run_id: run_id.to_string(),
            seed,
            t: report.t,
            metric: report.metric,
            value: report.value,
            state: report.state,
            config_hash: config_hash.to_string(),
        }
    }
}

/// `{:.16e}`: 17 significant digits.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_error(e: csv::Error) -> Error {
    Error::Trace(e.to_string())
}

fn write_rows<W: Write>(out: W, header: &str, rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    writer.write_record(header.split(',')).map_err(csv_error)?;
    for row in rows {
        writer.write_record(&row).map_err(csv_error)?;
    }
    writer.flush()?;
    Ok(())
}

fn optional(state: Option<usize>) -> String {
    state.map(|s| s.to_string()).unwrap_or_default()
}

pub fn write_trace<W: Write>(out: W, records: &[TraceRecord]) -> Result<()> {
    write_rows(
        out,
        TRACE_HEADER,
        records.iter().map(|r| {
            vec![
                r.run_id.clone(),
                r.seed.to_string(),
                r.t.to_string(),
                r.metric.to_string(),
                format_float(r.value),
                optional(r.state),
                r.config_hash.clone(),
            ]
        }),
    )
}

/// Parses a trace written by [`write_trace`].
pub fn read_trace(text: &str) -> Result<Vec<TraceRecord>> {
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = reader.headers().map_err(csv_error)?;
    if header.iter().collect::<Vec<_>>().join(",") != TRACE_HEADER {
        return Err(Error::Trace(format!("unexpected header {header:?}")));
    }
    reader
        .records()
        .enumerate()
        .map(|(i, row)| {
            let row = row.map_err(csv_error)?;
            let bad = |what: &str| Error::Trace(format!("row {}: bad {what}", i + 2));
            if row.len() != 7 {
                return Err(bad("field count"));
            }
            Ok(TraceRecord {
                run_id: row[0].to_string(),
                seed: row[1].parse().map_err(|_| bad("seed"))?,
                t: row[2].parse().map_err(|_| bad("t"))?,
                metric: row[3].parse()?,
                value: row[4].parse().map_err(|_| bad("value"))?,
                state: if row[5].is_empty() {
                    None
                } else {
                    Some(row[5].parse().map_err(|_| bad("state"))?)
                },
                config_hash: row[6].to_string(),
            })
        })
        .collect()
}

/// Cross-seed statistics of one `(metric, state, t)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub metric: Metric,
    pub state: Option<usize>,
    pub t: u64,
    pub seeds: usize,
    pub median: f64,
    pub q10: f64,
    pub q25: f64,
    pub q75: f64,
    pub q90: f64,
    pub min: f64,
    pub max: f64,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile(&sorted, 0.5)
}

/// Groups reports from all seeds by `(metric, state, t)`.
pub fn summarize<'a>(per_seed: impl IntoIterator<Item = &'a [GapReport]>) -> Vec<SummaryRow> {
    let mut cells: BTreeMap<(Metric, Option<usize>, u64), Vec<f64>> = BTreeMap::new();
    for reports in per_seed {
        for r in reports {
            cells.entry((r.metric, r.state, r.t)).or_default().push(r.value);
        }
    }
    cells
        .into_iter()
        .map(|((metric, state, t), mut values)| {
            values.sort_by(f64::total_cmp);
            SummaryRow {
                metric,
                state,
                t,
                seeds: values.len(),
                median: quantile(&values, 0.5),
                q10: quantile(&values, 0.1),
                q25: quantile(&values, 0.25),
                q75: quantile(&values, 0.75),
                q90: quantile(&values, 0.9),
                min: values[0],
                max: values[values.len() - 1],
            }
        })
        .collect()
}

pub fn write_summary<W: Write>(out: W, rows: &[SummaryRow]) -> Result<()> {
    write_rows(
        out,
        SUMMARY_HEADER,
        rows.iter().map(|r| {
            vec![
                r.metric.to_string(),
                optional(r.state),
                r.t.to_string(),
                r.seeds.to_string(),
                format_float(r.median),
                format_float(r.q10),
                format_float(r.q25),
                format_float(r.q75),
                format_float(r.q90),
                format_float(r.min),
                format_float(r.max),
            ]
        }),
    )
}

pub fn write_failures<W: Write>(out: W, failures: &[(u64, String)]) -> Result<()> {
    write_rows(
        out,
        FAILURES_HEADER,
        failures.iter().map(|(seed, msg)| vec![seed.to_string(), msg.clone()]),
    )
}
