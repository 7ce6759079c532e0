//! One CSV row per recorded sample.
//!
//! Columns: `t`, `x[i][k]`, then `v[i][k]` in double mode, then the upper
//! triangle `q[i][j]` (`i < j`), then the monitor fields. Numbers use Rust's
//! shortest round-trip formatting, so reading a file back is exact.

use std::io::{Read, Write};
use std::path::Path;

use adaptopt::engine::RunRecord;
use adaptopt::monitor::MonitorSample;
use adaptopt::points::Points;
use adaptopt::protocol::{GainMatrix, ProtocolState};

use crate::CliError;

pub fn header(n: usize, m: usize, double: bool) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((0..n).flat_map(|i| (0..m).map(move |k| format!("x[{i}][{k}]"))));
    if double {
        h.extend((0..n).flat_map(|i| (0..m).map(move |k| format!("v[{i}][{k}]"))));
    }
    h.extend((0..n).flat_map(|i| (i + 1..n).map(move |j| format!("q[{i}][{j}]"))));
    h.extend(MonitorSample::FIELDS.iter().map(|f| f.to_string()));
    h
}

pub fn write_csv(record: &RunRecord, path: &Path) -> Result<(), CliError> {
    let file = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    write_to(record, std::io::BufWriter::new(file)).map_err(|e| match e {
        CliError::Runtime(msg) => CliError::Runtime(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn write_to(record: &RunRecord, sink: impl Write) -> Result<(), CliError> {
    if record.monitors.len() != record.states.len() {
        return Err(CliError::Runtime("record must be annotated before writing CSV".into()));
    }
    let Some(first) = record.states.first() else {
        return Err(CliError::Runtime("record has no samples".into()));
    };
    let (n, m, double) = (first.agent_count(), first.dim(), first.v.is_some());
    let mut w = csv::Writer::from_writer(sink);
    let csv_err = |e: csv::Error| CliError::Runtime(format!("writing CSV: {e}"));
    w.write_record(header(n, m, double)).map_err(csv_err)?;
    let mut row = Vec::new();
    for ((t, s), mon) in record.times.iter().zip(&record.states).zip(&record.monitors) {
        row.clear();
        row.push(t.to_string());
        row.extend(s.x.as_flat().iter().map(f64::to_string));
        if let Some(v) = &s.v {
            row.extend(v.as_flat().iter().map(f64::to_string));
        }
        row.extend(s.q.upper_triangle().iter().map(f64::to_string));
        row.extend(mon.values().iter().map(f64::to_string));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::Runtime(format!("writing CSV: {e}")))?;
    Ok(())
}

/// The numeric content of a CSV written by [`write_csv`].
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRecord {
    pub times: Vec<f64>,
    pub states: Vec<ProtocolState>,
    pub monitors: Vec<MonitorSample>,
}

pub fn read_csv(path: &Path) -> Result<CsvRecord, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    read_from(file)
}

pub fn read_from(source: impl Read) -> Result<CsvRecord, CliError> {
    let bad = |msg: String| CliError::Runtime(format!("reading CSV: {msg}"));
    let mut r = csv::Reader::from_reader(source);
    let head: Vec<String> = r.headers().map_err(|e| bad(e.to_string()))?.iter().map(str::to_string).collect();
    let xs = head.iter().filter(|h| h.starts_with("x[")).count();
    let double = head.iter().any(|h| h.starts_with("v["));
    let qs = head.iter().filter(|h| h.starts_with("q[")).count();
    // n(n-1)/2 = qs
    let n = (0..=xs)
        .find(|n| n * n.saturating_sub(1) / 2 == qs && *n > 0 && xs % n == 0)
        .ok_or_else(|| bad(format!("cannot infer team shape from {xs} position and {qs} gain columns")))?;
    let m = xs / n;
    if head != header(n, m, double) {
        return Err(bad("unexpected column layout".into()));
    }

    let mut out = CsvRecord { times: Vec::new(), states: Vec::new(), monitors: Vec::new() };
    for (line, row) in r.records().enumerate() {
        let row = row.map_err(|e| bad(e.to_string()))?;
        let vals = row
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| bad(format!("row {}: {e}", line + 1)))?;
        let mut rest = &vals[..];
        let mut take = |k: usize| {
            let (a, b) = rest.split_at(k);
            rest = b;
            a.to_vec()
        };
        let t = take(1)[0];
        let shape = |e: adaptopt::Error| bad(e.to_string());
        let x = Points::from_flat(n, m, take(n * m)).map_err(shape)?;
        let v = if double { Some(Points::from_flat(n, m, take(n * m)).map_err(shape)?) } else { None };
        let q = GainMatrix::from_upper_triangle(n, &take(qs)).map_err(shape)?;
        let monitors: [f64; 9] = take(MonitorSample::FIELDS.len()).try_into().expect("header checked");
        out.times.push(t);
        out.states.push(ProtocolState { x, v, q });
        out.monitors.push(MonitorSample::from_values(t, monitors));
    }
    Ok(out)
}
