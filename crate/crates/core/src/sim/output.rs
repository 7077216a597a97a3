//! Trace CSV and summary JSON.
//!
//! CSV column order is fixed: `t`, `x0 .. x{n-1}`, `u0 .. u{q-1}`, `delta`,
//! `h_0 .. h_{m-1}`, `loop_ms`. Floats use Rust's shortest round-trip
//! formatting, so parsing a column back yields the logged bits.

use super::Trace;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

pub fn trace_csv_header(trace: &Trace) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    cols.extend((0..trace.n_state).map(|i| format!("x{i}")));
    cols.extend((0..trace.n_input).map(|i| format!("u{i}")));
    cols.push("delta".into());
    cols.extend((0..trace.n_obstacles).map(|i| format!("h_{i}")));
    cols.push("loop_ms".into());
    cols
}

pub fn write_trace_csv(trace: &Trace, path: &Path) -> io::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "{}", trace_csv_header(trace).join(","))?;
    for r in &trace.records {
        let mut fields: Vec<String> = Vec::with_capacity(4 + r.state.len() + r.u.len() + r.obstacles.len());
        fields.push(r.t.to_string());
        fields.extend(r.state.iter().map(f64::to_string));
        fields.extend(r.u.iter().map(f64::to_string));
        fields.push(r.delta.to_string());
        fields.extend(r.obstacles.iter().map(|o| o.h.to_string()));
        fields.push(r.loop_ms.to_string());
        writeln!(w, "{}", fields.join(","))?;
    }
    w.flush()
}

/// Parsed numeric CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }
}

pub fn read_trace_csv(path: &Path) -> io::Result<CsvTable> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "empty CSV"))?
        .split(',')
        .map(str::to_string)
        .collect();
    let rows = lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.split(',')
                .map(|f| f.parse::<f64>().map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e)))
                .collect::<io::Result<Vec<f64>>>()
        })
        .collect::<io::Result<Vec<_>>>()?;
    Ok(CsvTable { header, rows })
}

pub fn write_summary_json(trace: &Trace, path: &Path) -> io::Result<()> {
    let s = &trace.summary;
    let value = serde_json::json!({
        "scenario": trace.scenario,
        "records": trace.records.len(),
        "min_h": s.min_h,
        "arrival_time": s.arrival_time,
        "min_goal_distance": s.min_goal_distance,
        "final_goal_distance": s.final_goal_distance,
        "mean_loop_ms": s.mean_loop_ms,
        "max_loop_ms": s.max_loop_ms,
        "fallback_steps": s.fallback_steps,
    });
    let text = serde_json::to_string_pretty(&value).map_err(io::Error::other)?;
    fs::write(path, text + "\n")
}
