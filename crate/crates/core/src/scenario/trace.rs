use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
#[error("writing {}: {source}", path.display())]
pub struct TraceIoError {
    pub path: PathBuf,
    #[source]
    pub source: io::Error,
}

/// One plant step of output.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: f64,
    pub f_bus: f64,
    pub p_out: Vec<f64>,
    pub delta_f: Vec<f64>,
    pub held: Vec<f64>,
    /// Completed consensus episodes so far.
    pub episode: u64,
    /// Spread of the most recent episode's final values.
    pub residual: f64,
}

/// Shortest round-trip decimal form.
pub fn fmt_num(v: f64) -> String {
    format!("{v:?}")
}

pub fn header(n: usize) -> Vec<String> {
    let mut cols = vec!["t".to_string(), "f_bus".to_string()];
    for prefix in ["p_out", "delta_f", "held"] {
        cols.extend((1..=n).map(|i| format!("{prefix}_{i}")));
    }
    cols.push("episode".into());
    cols.push("residual".into());
    cols
}

fn row(r: &TraceRecord) -> Vec<String> {
    let mut out = Vec::with_capacity(4 + 3 * r.p_out.len());
    out.push(fmt_num(r.t));
    out.push(fmt_num(r.f_bus));
    out.extend(r.p_out.iter().chain(&r.delta_f).chain(&r.held).map(|&v| fmt_num(v)));
    out.push(r.episode.to_string());
    out.push(fmt_num(r.residual));
    out
}

/// Writes the CSV for a run with `n` DGs.
pub fn write_trace<W: Write>(trace: &[TraceRecord], n: usize, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(n))?;
    for r in trace {
        w.write_record(row(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace_csv(trace: &[TraceRecord], n: usize, path: &Path) -> Result<(), TraceIoError> {
    let wrap = |source: io::Error| TraceIoError { path: path.to_path_buf(), source };
    let file = File::create(path).map_err(wrap)?;
    write_trace(trace, n, io::BufWriter::new(file)).map_err(|e| wrap(io::Error::other(e)))
}
